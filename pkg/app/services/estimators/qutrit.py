import math
from typing import Tuple

import numpy as np

from app.errors import EstimationError, UsageError
from app.models import (
    Estimate,
    EstimateDiagnostics,
    EstimationContext,
    EstimatorType,
    PrepTag,
    RecordSet,
)
from .base import Estimator, EstimatorInfo
from .fitting import fit_rabi_amplitude

MIN_ANGLES = 6


def _angle_means(records: RecordSet) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    angles, labels = np.unique(records.rabi_angle, return_inverse=True)
    labels = labels.reshape(-1)
    counts = np.bincount(labels, minlength=len(angles))
    sums = np.bincount(labels, weights=records.v1.real) + 1j * np.bincount(labels, weights=records.v1.imag)
    means = sums / counts
    sems = np.zeros(len(angles), dtype=np.complex128)
    for k in range(len(angles)):
        values = records.v1[labels == k]
        if counts[k] > 1:
            sems[k] = complex(np.std(values.real, ddof=1), np.std(values.imag, ddof=1)) / math.sqrt(counts[k])
    return angles, means, sems


def qutrit_estimate(records: RecordSet) -> Estimate:
    """P_e from e-f Rabi amplitudes with and without a preceding g-e pi pulse.

    Both amplitudes are projected on the direction of the with-pi amplitude;
    P_e = a_no / (a_no + a_pi).
    """
    rabi = records.with_prep(PrepTag.PI_EF_RABI)
    variants = {}
    for with_ge_pi in (0, 1):
        subset = rabi.take(np.flatnonzero(rabi.with_ge_pi == with_ge_pi))
        if len(subset) == 0:
            raise UsageError("the qutrit method needs rabi records with and without the g-e pi pulse")
        angles, means, sems = _angle_means(subset)
        if len(angles) < MIN_ANGLES:
            raise UsageError(f"the qutrit method needs at least {MIN_ANGLES} distinct angles per variant")
        variants[with_ge_pi] = fit_rabi_amplitude(angles, means, sems)

    z_no, cov_no = variants[0]
    z_pi, cov_pi = variants[1]
    if z_pi == 0:
        raise EstimationError("the with-pi rabi amplitude vanishes")
    direction = z_pi / abs(z_pi)
    u = np.array([direction.real, direction.imag])

    a_pi = abs(z_pi)
    a_no = float(np.real(z_no * np.conj(direction)))
    total = a_no + a_pi
    if total <= 0:
        raise EstimationError("rabi amplitudes have no positive sum")

    raw = a_no / total
    var_no = float(u @ cov_no @ u)
    var_pi = float(u @ cov_pi @ u)
    std_error = math.sqrt((a_pi / total**2) ** 2 * var_no + (a_no / total**2) ** 2 * var_pi)
    noise_dominated = raw < 0
    return Estimate(
        method=EstimatorType.QUTRIT,
        p_e=max(raw, 0.0),
        std_error=std_error,
        n_shots=len(rabi),
        diagnostics=EstimateDiagnostics(
            noise_dominated=noise_dominated, raw_p_e=raw, analytic_std_error=std_error
        ),
    )


class QutritEstimator(Estimator):
    """Ratio of e-f Rabi amplitudes"""

    required_preps = (PrepTag.PI_EF_RABI,)

    @property
    def estimator_info(self) -> EstimatorInfo:
        return EstimatorInfo(
            name="qutrit",
            version="1.0.0",
            capabilities={
                "requires": [tag.value for tag in self.required_preps],
                "uncertainty": ["fit covariance"],
                "valid_range": f">= {MIN_ANGLES} angles, both variants; leakage biases upward",
            },
        )

    def estimate(self, records: RecordSet, context: EstimationContext) -> Estimate:
        return qutrit_estimate(records)
