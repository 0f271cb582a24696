import os
from typing import Any, Dict, Optional, Union
import logging

from app.models import EstimatorType
from .base import Estimator
from .correlator import CorrelatorApproxEstimator, CorrelatorExactEstimator, CorrelatorGeneralEstimator
from .direct_count import DirectCountEstimator
from .qutrit import QutritEstimator


class EstimatorManager:
    """Registry of population estimators with a configurable default"""

    def __init__(self):
        self.logger = logging.getLogger(__name__)
        self._estimators: Dict[EstimatorType, Estimator] = {
            EstimatorType.CORRELATOR_APPROX: CorrelatorApproxEstimator(),
            EstimatorType.CORRELATOR_EXACT: CorrelatorExactEstimator(),
            EstimatorType.CORRELATOR_GENERAL: CorrelatorGeneralEstimator(),
            EstimatorType.DIRECT_COUNT: DirectCountEstimator(),
            EstimatorType.QUTRIT: QutritEstimator(),
        }

        self.default_method = self._get_method_from_env("THERMOMETRY_DEFAULT_METHOD", EstimatorType.CORRELATOR_EXACT)
        self.logger.debug(f"Default estimator: {self.default_method.value}")

    def _get_method_from_env(self, env_var: str, default: EstimatorType) -> EstimatorType:
        """Get estimator type from environment variable"""
        method_name = os.getenv(env_var, default.value)
        try:
            return EstimatorType(method_name)
        except ValueError:
            self.logger.warning(f"Invalid estimator name in {env_var}: {method_name}, using default: {default.value}")
            return default

    def resolve(self, method: Union[EstimatorType, str, None]) -> EstimatorType:
        if method is None:
            return self.default_method
        return EstimatorType(method)

    def get_estimator(self, method: Union[EstimatorType, str, None] = None) -> Estimator:
        return self._estimators[self.resolve(method)]

    def get_estimator_status(self) -> Dict[str, Any]:
        """Get status of all estimators"""
        status = {}

        for method, estimator in self._estimators.items():
            status[method.value] = {
                "requires": [tag.value for tag in estimator.required_preps],
                "bootstrap": estimator.supports_bootstrap,
                "info": estimator.estimator_info.__dict__,
            }

        return {
            "estimators": status,
            "default": self.default_method.value,
        }


# Global estimator manager instance
estimator_manager = EstimatorManager()
