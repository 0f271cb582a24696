from abc import ABC, abstractmethod
from typing import Any, Dict, Tuple
import logging

from app.models import Estimate, EstimationContext, PrepTag, RecordSet


class EstimatorInfo:
    """Information about a population estimator"""
    def __init__(self, name: str, version: str, capabilities: Dict[str, Any]):
        self.name = name
        self.version = version
        self.capabilities = capabilities


class Estimator(ABC):
    """Abstract base class for excited-state population estimators"""

    required_preps: Tuple[PrepTag, ...] = ()
    supports_bootstrap: bool = False

    def __init__(self):
        self.logger = logging.getLogger(self.__class__.__name__)

    @property
    @abstractmethod
    def estimator_info(self) -> EstimatorInfo:
        """Return information about this estimator"""
        pass

    @abstractmethod
    def estimate(self, records: RecordSet, context: EstimationContext) -> Estimate:
        """
        Estimate the excited-state population from shot records

        Args:
            records: records holding every prep in `required_preps`
            context: measurement timing and uncertainty settings

        Returns:
            Estimate with the estimator's own (analytic or fit) standard error.
            No T1 correction is applied here.

        Raises:
            UsageError: if the records cannot feed this estimator
            EstimationError: if no value can be produced
        """
        pass

    def point_estimate(self, records: RecordSet, context: EstimationContext) -> float:
        """P_e only; what the bootstrap resamples"""
        return self.estimate(records, context).p_e

    def is_applicable(self, records: RecordSet) -> bool:
        return all(records.has_prep(tag) for tag in self.required_preps)

    def missing_preps(self, records: RecordSet) -> Tuple[PrepTag, ...]:
        return tuple(tag for tag in self.required_preps if not records.has_prep(tag))
