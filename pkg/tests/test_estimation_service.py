import math

import pytest

from app.errors import UsageError
from app.models import EstimatorType, UncertaintyMode
from app.services.estimation_service import EstimationService, estimation_service
from app.services.estimators.manager import estimator_manager
from app.services.simulation_service import simulation_service


@pytest.fixture
def pair_records(make_config):
    return simulation_service.generate_dataset(make_config(p_e=0.02, snr=6.0, n_shots=5000, collect_truth=True))


def test_default_method_is_correlator_exact(pair_records):
    estimate = estimation_service.estimate(pair_records, context=estimation_service.context(uncertainty="analytic"))
    assert estimate.method is EstimatorType.CORRELATOR_EXACT
    assert estimate.n_shots == 5000


def test_context_uses_configured_resamples(monkeypatch):
    monkeypatch.setenv("THERMOMETRY_BOOTSTRAP_RESAMPLES", "150")
    service = EstimationService()
    assert service.context().n_resamples == 150
    assert service.context(n_resamples=300).n_resamples == 300


def test_qutrit_on_pair_records_is_a_usage_error(pair_records):
    with pytest.raises(UsageError, match="pi_ef_rabi"):
        estimation_service.estimate(pair_records, method="qutrit")


def test_missing_pi_records_is_a_usage_error(pair_records):
    run1_only = pair_records.take(pair_records.prep == 0)
    estimator = estimator_manager.get_estimator(EstimatorType.CORRELATOR_APPROX)
    assert estimator.is_applicable(pair_records)
    assert not estimator.is_applicable(run1_only)
    with pytest.raises(UsageError, match="pi_ge"):
        estimation_service.estimate(run1_only, method=EstimatorType.CORRELATOR_APPROX)


def test_truth_is_ignored(pair_records):
    context = estimation_service.context(uncertainty=UncertaintyMode.ANALYTIC)
    with_truth = estimation_service.estimate(pair_records, context=context)
    without_truth = estimation_service.estimate(pair_records.without_truth(), context=context)
    assert with_truth == without_truth


def test_bootstrap_error_replaces_analytic_error(pair_records):
    context = estimation_service.context(bootstrap_seed=4, n_resamples=100)
    first = estimation_service.estimate(pair_records, context=context)
    second = estimation_service.estimate(pair_records, context=context)
    assert first.std_error == second.std_error
    assert first.std_error != first.diagnostics.analytic_std_error
    assert first.std_error == pytest.approx(first.diagnostics.analytic_std_error, rel=0.5)


def test_direct_count_keeps_binomial_error_under_bootstrap_mode(pair_records):
    estimate = estimation_service.estimate(pair_records, method="direct_count", context=estimation_service.context())
    assert estimate.std_error == estimate.diagnostics.analytic_std_error


def test_t1_correction_scales_correlator_estimates(pair_records):
    plain = estimation_service.estimate(pair_records, context=estimation_service.context(uncertainty="analytic"))
    corrected = estimation_service.estimate(
        pair_records,
        context=estimation_service.context(
            uncertainty="analytic", apply_t1_correction=True, t_meas=1e-6, t1=10e-6
        ),
    )
    factor = math.exp(0.1)
    assert corrected.diagnostics.t1_correction_applied
    assert corrected.p_e == pytest.approx(plain.p_e * factor, rel=1e-12)
    assert corrected.std_error == pytest.approx(plain.std_error * factor, rel=1e-12)
    assert not plain.diagnostics.t1_correction_applied


def test_t1_correction_skips_direct_count(pair_records):
    context = estimation_service.context(apply_t1_correction=True, t_meas=1e-6, t1=10e-6)
    estimate = estimation_service.estimate(pair_records, method="direct_count", context=context)
    assert not estimate.diagnostics.t1_correction_applied


def test_t1_correction_needs_t1(pair_records):
    context = estimation_service.context(uncertainty="analytic", apply_t1_correction=True, t_meas=1e-6)
    with pytest.raises(UsageError):
        estimation_service.estimate(pair_records, context=context)


def test_unknown_method_is_rejected(pair_records):
    with pytest.raises(ValueError):
        estimation_service.estimate(pair_records, method="bolometer")
