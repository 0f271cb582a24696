import os
from typing import Optional, Union
import logging

from app.errors import UsageError
from app.models import (
    CORRELATOR_METHODS,
    Estimate,
    EstimationContext,
    EstimatorType,
    RecordSet,
    UncertaintyMode,
)
from app.services.estimators.bootstrap import bootstrap_std
from app.services.estimators.formulas import t1_correction_factor
from app.services.estimators.manager import estimator_manager


class EstimationService:
    def __init__(self):
        self.logger = logging.getLogger(__name__)
        self.estimator_manager = estimator_manager
        self.default_resamples = int(os.getenv("THERMOMETRY_BOOTSTRAP_RESAMPLES", 200))

    def context(self, **overrides) -> EstimationContext:
        """EstimationContext with the configured resample count unless overridden"""
        overrides.setdefault("n_resamples", self.default_resamples)
        return EstimationContext(**overrides)

    def estimate(
        self,
        records: RecordSet,
        method: Union[EstimatorType, str, None] = None,
        context: Optional[EstimationContext] = None,
    ) -> Estimate:
        """
        Estimate P_e from records with the selected method

        Args:
            records: record collection (truth traces are ignored)
            method: estimator; the configured default when omitted
            context: uncertainty mode, bootstrap settings and T1 correction

        Returns:
            Estimate; correlator methods carry a bootstrap std_error unless the
            context asks for analytic errors, and are T1-corrected when enabled
        """
        context = context or self.context()
        method = self.estimator_manager.resolve(method)
        estimator = self.estimator_manager.get_estimator(method)
        records = records.without_truth()

        if not estimator.is_applicable(records):
            missing = estimator.missing_preps(records)
            raise UsageError(
                f"{method.value} needs records with prep {', '.join(tag.value for tag in missing)}"
            )

        estimate = estimator.estimate(records, context)

        if estimator.supports_bootstrap and context.uncertainty is UncertaintyMode.BOOTSTRAP:
            std_error = bootstrap_std(
                records, estimator, context, context.n_resamples, context.bootstrap_seed
            )
            estimate = estimate.model_copy(update={"std_error": std_error})

        if context.apply_t1_correction and method in CORRELATOR_METHODS:
            estimate = self._correct_t1(estimate, context)

        if estimate.diagnostics.noise_dominated:
            self.logger.warning(
                f"{method.value}: noise-dominated sample (g1(0)={estimate.diagnostics.g1_0}), reporting p_e=0"
            )
        self.logger.info(f"{method.value}: p_e={estimate.p_e:.6g} +/- {estimate.std_error:.3g} ({estimate.n_shots} shots)")
        return estimate

    def _correct_t1(self, estimate: Estimate, context: EstimationContext) -> Estimate:
        if context.t1 is None:
            raise UsageError("T1 correction needs t1 in the estimation context")
        factor = t1_correction_factor(context.t_meas, context.t1)
        diagnostics = estimate.diagnostics.model_copy(update={
            "t1_correction_applied": True,
            "raw_p_e": None if estimate.diagnostics.raw_p_e is None else estimate.diagnostics.raw_p_e * factor,
            "analytic_std_error": (
                None if estimate.diagnostics.analytic_std_error is None
                else estimate.diagnostics.analytic_std_error * factor
            ),
        })
        return estimate.model_copy(update={
            "p_e": estimate.p_e * factor,
            "std_error": estimate.std_error * factor,
            "diagnostics": diagnostics,
        })


estimation_service = EstimationService()
