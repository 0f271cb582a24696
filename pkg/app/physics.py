"""Thermal populations, bath rates and relaxation propagators of a two-level system.

Every function is pure. Constants come from the CODATA 2018 table shipped
with scipy (``PhysicalConstants``), which fixes h and k exactly.
"""

import math
from typing import Sequence, Tuple, Union

import numpy as np
from scipy.special import expit, ndtr

from app.errors import DomainError
from app.models import BathModel, PhysicalConstants

CONSTANTS = PhysicalConstants()

ArrayLike = Union[float, np.ndarray]


def energy_ratio(frequency: float, temperature: float, constants: PhysicalConstants = CONSTANTS) -> float:
    """hf / kT"""
    if frequency <= 0:
        raise DomainError(f"frequency must be positive, got {frequency}")
    if temperature <= 0:
        raise DomainError(f"temperature must be positive, got {temperature}")
    return constants.planck * frequency / (constants.boltzmann_k * temperature)


def boltzmann_population(frequency: float, temperature: float, constants: PhysicalConstants = CONSTANTS) -> float:
    """Excited-state population of a two-level system in equilibrium at `temperature`.

    Uses the two-level partition function, e^(-x) / (1 + e^(-x)) with x = hf/kT.
    """
    return float(expit(-energy_ratio(frequency, temperature, constants)))


def effective_temperature(p_e: float, frequency: float, constants: PhysicalConstants = CONSTANTS) -> float:
    """Temperature whose equilibrium population equals `p_e` at `frequency`"""
    if not 0 < p_e < 0.5:
        raise DomainError(f"no finite positive temperature for p_e={p_e}")
    if frequency <= 0:
        raise DomainError(f"frequency must be positive, got {frequency}")
    log_ratio = math.log1p(-p_e) - math.log(p_e)
    return constants.planck * frequency / (constants.boltzmann_k * log_ratio)


def two_bath_steady_state(baths: Sequence[BathModel]) -> Tuple[float, float]:
    """Steady-state population and total T1 of a qubit coupled to several baths.

    Rates add (Markov, two-level): p_e = sum(up) / sum(up + down), T1 = 1 / sum(up + down).
    """
    if not baths:
        raise DomainError("at least one bath is required")
    up = math.fsum(b.gamma_up for b in baths)
    total = math.fsum(r for b in baths for r in (b.gamma_up, b.gamma_down))
    if total <= 0:
        raise DomainError("total bath rate is zero; the steady state is undefined")
    return up / total, 1.0 / total


def bath_rates_from_temperature(
    t1: float, frequency: float, temperature: float, constants: PhysicalConstants = CONSTANTS
) -> BathModel:
    """Rates of a single bath at `temperature` obeying detailed balance with total rate 1/t1"""
    if t1 <= 0:
        raise DomainError(f"t1 must be positive, got {t1}")
    x = energy_ratio(frequency, temperature, constants)
    rate = 1.0 / t1
    return BathModel(gamma_up=rate * float(expit(-x)), gamma_down=rate * float(expit(x)))


def relax_probabilities(p_start: ArrayLike, tau: float, p_eq: float, t1: float) -> ArrayLike:
    """Excited population after evolving `p_start` for `tau` towards `p_eq` with time constant t1"""
    if tau < 0:
        raise DomainError(f"delay must be non-negative, got {tau}")
    if t1 <= 0:
        raise DomainError(f"t1 must be positive, got {t1}")
    result = p_eq + (np.asarray(p_start, dtype=float) - p_eq) * math.exp(-tau / t1)
    return float(result) if np.ndim(result) == 0 else result


def normalized_correlator(p_e: float) -> float:
    """Ideal normalized zero-delay correlator for population p_e: P(1-P)/(1-2P)^2"""
    if not 0 <= p_e < 0.5:
        raise DomainError(f"p_e must lie in [0, 0.5), got {p_e}")
    return p_e * (1.0 - p_e) / (1.0 - 2.0 * p_e) ** 2


def expected_correlator(p_e: float, tau: float, t1: float, t_meas: float = 0.0) -> float:
    """Normalized correlator after a delay, including decay during the first readout"""
    return normalized_correlator(p_e) * relax_probabilities(1.0, tau + t_meas, 0.0, t1)


def misclassification_probability(snr: float) -> float:
    """Chance that a midpoint threshold assigns a shot to the wrong state"""
    if math.isinf(snr):
        return 0.0
    return float(ndtr(-snr / 2.0))
