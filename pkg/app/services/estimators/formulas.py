"""Closed forms linking correlators to the excited-state population.

All maps work on plain floats. The normalized forms assume voltages mapped so
that the ground response is 0 and the pi-pulsed response is 1.
"""

import math
from typing import Optional

import numpy as np

from app.errors import DegenerateCalibrationError, DomainError, NoiseDominatedError, UsageError
from app.physics import normalized_correlator

GENERAL_DENOMINATOR_TOLERANCE = 1e-9
# largest |sqrt(g1_0) - g0| / |g0_pi - g0| for which the general formula is trusted
GENERAL_MISMATCH_TOLERANCE = 0.01


def correlator_g1_zero(first: np.ndarray, second: np.ndarray, noise_power: float = 0.0) -> float:
    """Mean of v1*v2 over pairs, minus an optional measured <eta^2> term"""
    first = np.asarray(first, dtype=float)
    second = np.asarray(second, dtype=float)
    if len(first) == 0:
        raise UsageError("the correlator needs at least one pair")
    if len(first) != len(second):
        raise UsageError("first and second voltages differ in length")
    return float(np.mean(first * second)) - noise_power


def g1_from_p_e(p_e: float) -> float:
    """Forward map P -> P(1-P)/(1-2P)^2"""
    return normalized_correlator(p_e)


def p_e_exact(g1_0: float) -> float:
    """Exact inverse of the forward map: 1/2 - 1/(2 sqrt(1 + 4 g))"""
    if g1_0 <= -0.25:
        raise NoiseDominatedError(f"g1(0)={g1_0} lies outside the invertible range (> -1/4)")
    root = math.sqrt(1.0 + 4.0 * g1_0)
    # 2g / (s (s + 1)) equals 1/2 - 1/(2s) without cancellation near g = 0
    return 2.0 * g1_0 / (root * (root + 1.0))


def p_e_exact_derivative(g1_0: float) -> float:
    if g1_0 <= -0.25:
        raise NoiseDominatedError(f"g1(0)={g1_0} lies outside the invertible range (> -1/4)")
    return (1.0 + 4.0 * g1_0) ** -1.5


def p_e_approx(g1_0: float) -> float:
    """First-order form P ~ g1(0), clamped at zero"""
    return max(g1_0, 0.0)


def p_e_general(g1_0: float, g0: float, g0_pi: float, scale: Optional[float] = None) -> float:
    """Un-normalized first-order formula on raw axis projections.

    `scale` is the voltage scale of the projections; by default the largest of
    |g0|, |g0_pi| and sqrt(|g1_0|).
    """
    if g1_0 < 0:
        raise NoiseDominatedError(f"g1(0)={g1_0} is negative")
    if scale is None:
        scale = max(abs(g0), abs(g0_pi), math.sqrt(g1_0))
    denominator = (g0 + g0_pi - 2.0 * math.sqrt(g1_0)) ** 2
    if denominator < GENERAL_DENOMINATOR_TOLERANCE * scale**2 or denominator == 0:
        raise DegenerateCalibrationError("the response separation vanishes in the general formula")
    return (g1_0 - g0**2) / denominator


def general_mismatch(g1_0: float, g0: float, g0_pi: float) -> Optional[float]:
    """Distance of sqrt(g1_0) from g0 in units of the response separation.

    The general formula needs sqrt(g1(0)) ~ g0, i.e. P_e*V_e^2 << V_g^2 on the
    projection axis. A ground response at the origin breaks it by about sqrt(P_e).
    """
    if g1_0 < 0 or g0_pi == g0:
        return None
    return abs(math.sqrt(g1_0) - g0) / abs(g0_pi - g0)


def p_e_general_gradient(g1_0: float, g0: float, g0_pi: float) -> np.ndarray:
    """Partial derivatives of p_e_general with respect to (g1_0, g0, g0_pi)"""
    root = math.sqrt(g1_0)
    d = g0 + g0_pi - 2.0 * root
    n = g1_0 - g0**2
    d_g1 = 1.0 / d**2 + (2.0 * n / (d**3 * root) if root > 0 else 0.0)
    d_g0 = -2.0 * g0 / d**2 - 2.0 * n / d**3
    d_g0_pi = -2.0 * n / d**3
    return np.array([d_g1, d_g0, d_g0_pi])


def t1_correction_factor(t_meas: float, t1: float) -> float:
    if t1 <= 0:
        raise DomainError(f"t1 must be positive, got {t1}")
    if t_meas < 0:
        raise DomainError(f"t_meas must be non-negative, got {t_meas}")
    return math.exp(t_meas / t1)


def t1_correction(p_e_raw: float, t_meas: float, t1: float) -> float:
    """Undo the e^(-t_meas/t1) loss of correlation during the first readout"""
    return p_e_raw * t1_correction_factor(t_meas, t1)
