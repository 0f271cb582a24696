import math

import numpy as np
import pytest

from app.errors import DomainError
from app.models import BathModel
from app.physics import (
    CONSTANTS,
    bath_rates_from_temperature,
    boltzmann_population,
    effective_temperature,
    energy_ratio,
    expected_correlator,
    misclassification_probability,
    normalized_correlator,
    relax_probabilities,
    two_bath_steady_state,
)


def test_constants_are_exact_codata_values():
    assert CONSTANTS.planck == 6.62607015e-34
    assert CONSTANTS.boltzmann_k == 1.380649e-23


def test_boltzmann_population_at_twenty_millikelvin():
    p = boltzmann_population(5e9, 0.020)
    x = CONSTANTS.planck * 5e9 / (CONSTANTS.boltzmann_k * 0.020)
    assert x == pytest.approx(11.998, abs=1e-3)
    assert p < 1e-5
    assert p == pytest.approx(math.exp(-x) / (1 + math.exp(-x)), rel=1e-12)
    assert 6.15e-6 < p < 6.17e-6


def test_boltzmann_population_high_temperature_limit():
    assert boltzmann_population(5e9, 1e9) == pytest.approx(0.5, abs=1e-9)


def test_boltzmann_population_is_increasing_in_temperature():
    temperatures = np.linspace(0.005, 1.0, 200)
    values = [boltzmann_population(5e9, t) for t in temperatures]
    assert all(b > a for a, b in zip(values, values[1:]))
    assert all(0 < v < 0.5 for v in values)


@pytest.mark.parametrize("frequency, temperature", [(0, 0.02), (5e9, 0), (5e9, -1), (-1, 0.02)])
def test_boltzmann_population_rejects_non_positive_inputs(frequency, temperature):
    with pytest.raises(DomainError):
        boltzmann_population(frequency, temperature)


def test_effective_temperature_inverts_boltzmann_population():
    for t in np.geomspace(0.005, 1.0, 25):
        p = boltzmann_population(5e9, t)
        assert effective_temperature(p, 5e9) == pytest.approx(t, rel=1e-9)


def test_effective_temperature_of_twenty_millikelvin_population():
    p = boltzmann_population(5e9, 0.020)
    assert effective_temperature(p, 5e9) == pytest.approx(0.020, rel=1e-3)
    # the rounded 6.08e-6 still lands within a few percent of 20 mK
    assert effective_temperature(6.08e-6, 5e9) == pytest.approx(0.020, rel=0.01)


@pytest.mark.parametrize("p_e", [0.5, 0.0, -0.1, 0.7])
def test_effective_temperature_rejects_populations_without_finite_temperature(p_e):
    with pytest.raises(DomainError):
        effective_temperature(p_e, 5e9)


def test_two_bath_cold_only():
    p, t1 = two_bath_steady_state([BathModel(gamma_up=0, gamma_down=1e5)])
    assert p == 0
    assert t1 == pytest.approx(10e-6, rel=1e-12)


def test_two_bath_with_hot_bath():
    p, t1 = two_bath_steady_state([BathModel(gamma_up=0, gamma_down=1e5), BathModel(gamma_up=335, gamma_down=335)])
    assert p == pytest.approx(335 / 100670, rel=1e-12)
    assert p == pytest.approx(0.00333, abs=1e-5)
    assert t1 == pytest.approx(9.933e-6, rel=1e-3)


def test_two_bath_symmetric_bath_is_infinite_temperature():
    p, _ = two_bath_steady_state([BathModel(gamma_up=42, gamma_down=42)])
    assert p == 0.5


def test_two_bath_is_invariant_under_permutation_and_splitting():
    cold = BathModel(gamma_up=12.5, gamma_down=9.9e4)
    hot = BathModel(gamma_up=335, gamma_down=335)
    p1, t1 = two_bath_steady_state([cold, hot])
    p2, t2 = two_bath_steady_state([hot, cold])
    halves = [BathModel(gamma_up=167.5, gamma_down=167.5)] * 2
    p3, t3 = two_bath_steady_state([cold] + halves)
    assert p1 == pytest.approx(p2, rel=1e-15) == pytest.approx(p3, rel=1e-15)
    assert t1 == pytest.approx(t2, rel=1e-15) == pytest.approx(t3, rel=1e-15)


def test_two_bath_rejects_zero_rates_and_empty_lists():
    with pytest.raises(DomainError):
        two_bath_steady_state([BathModel()])
    with pytest.raises(DomainError):
        two_bath_steady_state([])


def test_bath_rates_obey_detailed_balance():
    for temperature in (0.02, 0.05, 0.1, 0.3):
        bath = bath_rates_from_temperature(10e-6, 5e9, temperature)
        assert bath.total_rate == pytest.approx(1e5, rel=1e-12)
        p, _ = two_bath_steady_state([bath])
        assert p == pytest.approx(boltzmann_population(5e9, temperature), rel=1e-12)


def test_bath_rates_at_hundred_millikelvin():
    bath = bath_rates_from_temperature(10e-6, 5e9, 0.1)
    assert energy_ratio(5e9, 0.1) == pytest.approx(2.3996, abs=1e-3)
    assert bath.gamma_up / bath.gamma_down == pytest.approx(math.exp(-energy_ratio(5e9, 0.1)), rel=1e-6)


def test_bath_rates_near_zero_temperature():
    bath = bath_rates_from_temperature(10e-6, 5e9, 1e-4)
    assert bath.gamma_up == pytest.approx(0.0, abs=1e-12)
    assert bath.gamma_down == pytest.approx(1e5, rel=1e-12)


def test_relax_probabilities_examples():
    assert relax_probabilities(0.3, 0.0, 0.005, 10e-6) == 0.3
    assert relax_probabilities(1.0, 1.0, 0.005, 10e-6) == pytest.approx(0.005, abs=1e-15)
    assert relax_probabilities(1.0, 10e-6, 0.005, 10e-6) == pytest.approx(0.005 + 0.995 * math.exp(-1), rel=1e-12)
    assert relax_probabilities(1.0, 10e-6, 0.005, 10e-6) == pytest.approx(0.37104, abs=1e-5)


def test_relax_probabilities_semigroup():
    for tau1, tau2 in [(1e-6, 3e-6), (7e-6, 0.5e-6), (20e-6, 15e-6)]:
        stepwise = relax_probabilities(relax_probabilities(0.9, tau1, 0.02, 10e-6), tau2, 0.02, 10e-6)
        assert stepwise == pytest.approx(relax_probabilities(0.9, tau1 + tau2, 0.02, 10e-6), abs=1e-12)


def test_relax_probabilities_accepts_arrays():
    result = relax_probabilities(np.array([0.0, 1.0]), 10e-6, 0.0, 10e-6)
    assert result == pytest.approx([0.0, math.exp(-1)])


def test_relax_probabilities_rejects_negative_delay():
    with pytest.raises(DomainError):
        relax_probabilities(1.0, -1e-9, 0.0, 10e-6)


def test_normalized_correlator_and_decay():
    assert normalized_correlator(0.05) == pytest.approx(0.05 * 0.95 / 0.81, rel=1e-12)
    assert normalized_correlator(0.05) == pytest.approx(0.058642, abs=1e-6)
    assert expected_correlator(0.05, 10e-6, 10e-6, 0.0) == pytest.approx(normalized_correlator(0.05) * math.exp(-1))


def test_misclassification_probability():
    assert misclassification_probability(6.0) == pytest.approx(0.0013499, abs=1e-7)
    assert misclassification_probability(0.9) == pytest.approx(0.3264, abs=1e-4)
    assert misclassification_probability(math.inf) == 0.0
