import math
from typing import Optional

import numpy as np

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
from .calibration import calibrate_records, normalize

THRESHOLD = 0.5


def direct_count(records: RecordSet, calib: Optional[CalibrationResult] = None) -> Estimate:
    """Fraction of first Run I readouts past the calibration midpoint, with a binomial error"""
    if calib is None:
        calib = calibrate_records(records)
    first = normalize(records.with_prep(PrepTag.NONE).v1, calib)
    n = len(first)
    p_e = float(np.count_nonzero(first > THRESHOLD)) / n if n else 0.0
    std_error = math.sqrt(p_e * (1.0 - p_e) / n) if n else 0.0
    return Estimate(
        method=EstimatorType.DIRECT_COUNT,
        p_e=p_e,
        std_error=std_error,
        n_shots=n,
        diagnostics=EstimateDiagnostics(
            g0=float(np.mean(first)) if n else None,
            snr_hat=calib.snr_hat,
            raw_p_e=p_e,
            analytic_std_error=std_error,
        ),
    )


class DirectCountEstimator(Estimator):
    """Threshold classification of single shots"""

    required_preps = (PrepTag.NONE, PrepTag.PI_GE)

    @property
    def estimator_info(self) -> EstimatorInfo:
        return EstimatorInfo(
            name="direct_count",
            version="1.0.0",
            capabilities={
                "requires": [tag.value for tag in self.required_preps],
                "uncertainty": ["binomial"],
                "valid_range": "high SNR; absolute floor Phi(-SNR/2)",
            },
        )

    def estimate(self, records: RecordSet, context: EstimationContext) -> Estimate:
        return direct_count(records)
