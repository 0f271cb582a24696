import math
from typing import Callable, Optional, Tuple

import numpy as np

from app.errors import NoiseDominatedError
from app.models import (
    CalibrationResult,
    Estimate,
    EstimateDiagnostics,
    EstimationContext,
    EstimatorType,
    PrepTag,
    RecordSet,
)
from .base import Estimator, EstimatorInfo
from .calibration import calibrate_records, normalize, project_raw
from .formulas import (
    GENERAL_MISMATCH_TOLERANCE,
    correlator_g1_zero,
    general_mismatch,
    p_e_approx,
    p_e_exact,
    p_e_exact_derivative,
    p_e_general,
    p_e_general_gradient,
)


class CorrelatorStatistics:
    """Run I pairs and Run II voltages mapped to real numbers"""

    def __init__(self, records: RecordSet, transform: Callable[[np.ndarray, CalibrationResult], np.ndarray]):
        self.calib = calibrate_records(records)
        run1 = records.with_prep(PrepTag.NONE)
        run2 = records.with_prep(PrepTag.PI_GE)
        self.first = transform(run1.v1, self.calib)
        self.second = transform(run1.v2, self.calib)
        self.pi = transform(run2.v1, self.calib)
        self.n_pairs = len(run1)

        self.g1_0 = correlator_g1_zero(self.first, self.second)
        self.g0 = float(np.mean(np.concatenate([self.first, self.second])))
        self.g0_pi = float(np.mean(self.pi))
        self.g1_inf = float(np.mean(self.first) * np.mean(self.second))

    def g1_variance(self) -> float:
        if self.n_pairs < 2:
            return 0.0
        return float(np.var(self.first * self.second, ddof=1) / self.n_pairs)

    def diagnostics(self, **extra) -> EstimateDiagnostics:
        return EstimateDiagnostics(
            g0=self.g0,
            g0_pi=self.g0_pi,
            g1_0=self.g1_0,
            g1_inf=self.g1_inf,
            snr_hat=self.calib.snr_hat,
            **extra,
        )


class _NormalizedCorrelatorEstimator(Estimator):
    required_preps = (PrepTag.NONE, PrepTag.PI_GE)
    supports_bootstrap = True
    method: EstimatorType

    def _invert(self, g1_0: float) -> Tuple[float, float]:
        """(clamped P_e, dP/dg) for a normalized correlator value"""
        raise NotImplementedError

    def estimate(self, records: RecordSet, context: EstimationContext) -> Estimate:
        stats = CorrelatorStatistics(records, normalize)
        g1_std = math.sqrt(stats.g1_variance())
        noise_dominated = stats.g1_0 < 0
        try:
            raw = p_e_exact(stats.g1_0) if self.method is EstimatorType.CORRELATOR_EXACT else stats.g1_0
        except NoiseDominatedError:
            raw = None
        p_e, slope = self._invert(stats.g1_0)
        analytic = g1_std * slope
        return Estimate(
            method=self.method,
            p_e=p_e,
            std_error=analytic,
            n_shots=stats.n_pairs,
            diagnostics=stats.diagnostics(
                noise_dominated=noise_dominated, raw_p_e=raw, analytic_std_error=analytic
            ),
        )


class CorrelatorExactEstimator(_NormalizedCorrelatorEstimator):
    """Exact inversion of the normalized zero-delay correlator"""

    method = EstimatorType.CORRELATOR_EXACT

    @property
    def estimator_info(self) -> EstimatorInfo:
        return EstimatorInfo(
            name="correlator_exact",
            version="1.0.0",
            capabilities={
                "requires": [tag.value for tag in self.required_preps],
                "uncertainty": ["bootstrap", "analytic"],
                "valid_range": "all P_e in [0, 0.5)",
            },
        )

    def _invert(self, g1_0: float) -> Tuple[float, float]:
        if g1_0 < 0:
            # slope at the boundary keeps the analytic error meaningful
            return 0.0, 1.0
        return p_e_exact(g1_0), p_e_exact_derivative(g1_0)


class CorrelatorApproxEstimator(_NormalizedCorrelatorEstimator):
    """First-order approximation P_e ~ g1(0)"""

    method = EstimatorType.CORRELATOR_APPROX

    @property
    def estimator_info(self) -> EstimatorInfo:
        return EstimatorInfo(
            name="correlator_approx",
            version="1.0.0",
            capabilities={
                "requires": [tag.value for tag in self.required_preps],
                "uncertainty": ["bootstrap", "analytic"],
                "valid_range": "P_e << 1; relative bias (1-P)/(1-2P)^2 - 1",
            },
        )

    def _invert(self, g1_0: float) -> Tuple[float, float]:
        return p_e_approx(g1_0), 1.0


class CorrelatorGeneralEstimator(Estimator):
    """First-order formula on raw (un-normalized) axis projections"""

    required_preps = (PrepTag.NONE, PrepTag.PI_GE)
    supports_bootstrap = True

    @property
    def estimator_info(self) -> EstimatorInfo:
        return EstimatorInfo(
            name="correlator_general",
            version="1.0.0",
            capabilities={
                "requires": [tag.value for tag in self.required_preps],
                "uncertainty": ["bootstrap", "analytic"],
                "valid_range": "P_e << 1 and P_e*V_e^2 << V_g^2 on the calibration axis (raw projections)",
            },
        )

    def _analytic_std(self, stats: CorrelatorStatistics) -> float:
        n = stats.n_pairs
        if n < 2 or stats.g1_0 <= 0 or len(stats.pi) < 2:
            return math.sqrt(stats.g1_variance())
        gradient = p_e_general_gradient(stats.g1_0, stats.g0, stats.g0_pi)
        pair_terms = np.stack([stats.first * stats.second, (stats.first + stats.second) / 2.0])
        cov = np.zeros((3, 3))
        cov[:2, :2] = np.cov(pair_terms, ddof=1) / n
        cov[2, 2] = np.var(stats.pi, ddof=1) / len(stats.pi)
        return float(math.sqrt(max(gradient @ cov @ gradient, 0.0)))

    def _raw(self, stats: CorrelatorStatistics) -> Optional[float]:
        scale = abs(stats.calib.v_e_hat - stats.calib.v_g_hat)
        try:
            return p_e_general(stats.g1_0, stats.g0, stats.g0_pi, scale=scale)
        except NoiseDominatedError:
            return None

    def point_estimate(self, records: RecordSet, context: EstimationContext) -> float:
        raw = self._raw(CorrelatorStatistics(records, project_raw))
        return 0.0 if raw is None or raw < 0 else raw

    def estimate(self, records: RecordSet, context: EstimationContext) -> Estimate:
        stats = CorrelatorStatistics(records, project_raw)
        raw = self._raw(stats)
        noise_dominated = raw is None or raw < 0
        p_e = 0.0 if noise_dominated else raw
        analytic = self._analytic_std(stats)
        mismatch = general_mismatch(stats.g1_0, stats.g0, stats.g0_pi)
        valid = None if mismatch is None else mismatch <= GENERAL_MISMATCH_TOLERANCE
        if valid is False:
            self.logger.warning(
                f"General correlator formula outside its validity range: sqrt(g1(0)) differs from g0 by "
                f"{mismatch:.3g} of the response separation; the ground response must sit far from the origin"
            )
        if noise_dominated:
            self.logger.debug(f"Noise-dominated general correlator: g1(0)={stats.g1_0:.6g}")
        return Estimate(
            method=EstimatorType.CORRELATOR_GENERAL,
            p_e=p_e,
            std_error=analytic,
            n_shots=stats.n_pairs,
            diagnostics=stats.diagnostics(
                noise_dominated=noise_dominated, raw_p_e=raw, analytic_std_error=analytic,
                general_mismatch=mismatch, approximation_valid=valid,
            ),
        )


def normalized_statistics(records: RecordSet) -> CorrelatorStatistics:
    """Calibrated g0, g0_pi, g1(tau) and the uncorrelated limit of a record set"""
    return CorrelatorStatistics(records, normalize)
