import math

import numpy as np
import pytest
from scipy import stats

from app.errors import DomainError, UsageError
from app.models import ApparatusModel, PrepTag, PulseModel, QubitModel
from app.services.simulation_service import (
    E,
    F,
    G,
    apply_pi_ge,
    evolve_delay,
    measure,
    rotate_ef,
    sample_initial_state,
    simulation_service,
)
from app.services.streams import BLOCK_SIZE, Stage, blocks, derive_seed, substream


def rng(seed=7):
    return np.random.default_rng(seed)


def within(observed, expected, n, sigmas=5.0):
    return abs(observed - expected) <= sigmas * math.sqrt(expected * (1 - expected) / n) + 1e-12


def test_substreams_are_keyed_and_reproducible():
    a = substream(11, Stage.RUN_I, 0, 3).random(4)
    b = substream(11, Stage.RUN_I, 0, 3).random(4)
    c = substream(11, Stage.RUN_II, 0, 3).random(4)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert derive_seed(11, 2, 0) == derive_seed(11, 2, 0) != derive_seed(11, 2, 1)


def test_blocks_cover_the_range_in_fixed_slices():
    assert list(blocks(0)) == []
    assert list(blocks(5, block_size=2)) == [(0, 0, 2), (1, 2, 4), (2, 4, 5)]
    assert list(blocks(BLOCK_SIZE))[-1] == (0, 0, BLOCK_SIZE)


def test_sample_initial_state_extremes_and_frequency():
    assert not sample_initial_state(0.0, rng(), 1000).any()
    assert (sample_initial_state(1.0, rng(), 1000) == E).all()
    n = 1_000_000
    states = sample_initial_state(0.01, rng(), n)
    assert within(np.mean(states == E), 0.01, n)


@pytest.mark.parametrize("p_e", [-0.01, 1.01])
def test_sample_initial_state_rejects_invalid_population(p_e):
    with pytest.raises(DomainError):
        sample_initial_state(p_e, rng(), 10)


def test_apply_pi_ge_swaps_g_and_e_and_leaves_f():
    states = np.array([G, E, F], dtype=np.int8)
    assert list(apply_pi_ge(states, PulseModel(), rng())) == [E, G, F]


def test_apply_pi_ge_always_failing_pulse_is_identity():
    pulses = PulseModel.model_construct(pi_ge_error=1.0, pi_ef_error=0.0, ef_leakage_prob=0.0)
    states = np.array([G, E, F] * 10, dtype=np.int8)
    assert np.array_equal(apply_pi_ge(states, pulses, rng()), states)


def test_evolve_delay_zero_is_identity():
    states = sample_initial_state(0.3, rng(1), 1000)
    assert np.array_equal(evolve_delay(states, 0.0, QubitModel(t1=10e-6), rng(2)), states)


def test_evolve_delay_decays_with_t1():
    n = 200_000
    qubit = QubitModel(t1=10e-6, p_e_equilibrium=0.0)
    states = np.full(n, E, dtype=np.int8)
    after = evolve_delay(states, 10e-6, qubit, rng())
    assert within(np.mean(after == E), math.exp(-1), n)


def test_evolve_delay_long_wait_reaches_equilibrium():
    n = 200_000
    qubit = QubitModel(t1=10e-6, p_e_equilibrium=0.1)
    after = evolve_delay(np.full(n, E, dtype=np.int8), 1.0, qubit, rng())
    assert within(np.mean(after == E), 0.1, n)


def test_evolve_delay_rejects_negative_delay():
    with pytest.raises(DomainError):
        evolve_delay(np.zeros(3, dtype=np.int8), -1e-9, QubitModel(), rng())


def test_measure_noiseless_returns_state_responses():
    apparatus = ApparatusModel(v_g=complex(0.2, -0.1), v_e=complex(1.0, 0.5), t_meas=0.0)
    states = np.array([G, E, F, G], dtype=np.int8)
    voltages, post = measure(states, apparatus, QubitModel(), rng())
    assert voltages[0] == complex(0.2, -0.1)
    assert voltages[1] == complex(1.0, 0.5)
    assert voltages[2] == pytest.approx(apparatus.v_f)
    assert np.array_equal(post, states)


def test_measure_ground_state_stays_ground_in_a_cold_fridge():
    apparatus = ApparatusModel(t_meas=1e-6)
    _, post = measure(np.zeros(1000, dtype=np.int8), apparatus, QubitModel(p_e_equilibrium=0.0), rng())
    assert not post.any()


def test_measure_noise_is_gaussian_per_quadrature():
    sigma = 1 / 6
    apparatus = ApparatusModel(noise_sigma=sigma, t_meas=0.0)
    voltages, _ = measure(np.zeros(100_000, dtype=np.int8), apparatus, QubitModel(), rng())
    for quadrature in (voltages.real, voltages.imag):
        assert np.std(quadrature) == pytest.approx(sigma, rel=0.02)
        assert stats.kstest(quadrature / sigma, "norm").pvalue > 1e-4


def test_measure_qnd_flip_resamples_uniformly():
    n = 200_000
    apparatus = ApparatusModel(qnd_flip_prob=0.5, t_meas=0.0)
    _, post = measure(np.full(n, E, dtype=np.int8), apparatus, QubitModel(), rng())
    assert within(np.mean(post == E), 0.75, n)


def test_measure_readout_excitation():
    n = 200_000
    apparatus = ApparatusModel(readout_excitation_prob=0.01, t_meas=0.0)
    _, post = measure(np.zeros(n, dtype=np.int8), apparatus, QubitModel(), rng())
    assert within(np.mean(post == E), 0.01, n)


def test_rotate_ef_pi_swaps_e_and_f():
    states = np.array([G, E, F], dtype=np.int8)
    assert list(rotate_ef(states, math.pi, PulseModel(), rng())) == [G, F, E]
    assert list(rotate_ef(states, 0.0, PulseModel(), rng())) == [G, E, F]


def test_rotate_ef_leakage_feeds_the_rotation():
    n = 200_000
    pulses = PulseModel(ef_leakage_prob=0.01)
    out = rotate_ef(np.zeros(n, dtype=np.int8), math.pi, pulses, rng())
    assert not (out == E).any()
    assert within(np.mean(out == F), 0.01, n)


def test_correlation_protocol_noiseless_cold_qubit(make_config):
    run1, run2 = simulation_service.run_correlation_protocol(make_config(n_shots=500))
    assert len(run1) == len(run2) == 500
    assert (run1.v1 == 0).all() and (run1.v2 == 0).all()
    assert (run2.v1 == 1).all() and np.isnan(run2.v2).all()
    assert (run1.prep == 0).all() and (run2.prep == 1).all()


def test_correlation_protocol_perfect_qnd_repeats_voltage(make_config):
    run1, _ = simulation_service.run_correlation_protocol(make_config(p_e=0.2, n_shots=5000, collect_truth=True))
    assert np.array_equal(run1.v1, run1.v2)
    assert np.array_equal(run1.truth[:, 0], run1.truth[:, 1])
    assert within(np.mean(run1.truth[:, 0] == E), 0.2, 5000)


def test_run_one_mean_mixes_the_state_responses(make_config):
    n, p, snr = 100_000, 0.05, 6.0
    v_g, v_e = complex(0.2, 0.1), complex(1.0, 0.3)
    run1, _ = simulation_service.run_correlation_protocol(
        make_config(p_e=p, snr=snr, n_shots=n, seed=31, v_g=v_g, v_e=v_e)
    )
    expected = (1 - p) * v_g + p * v_e
    noise_sigma = 1.0 / snr
    for part, spread in ((np.real, (v_e - v_g).real), (np.imag, (v_e - v_g).imag)):
        bound = 3 * math.sqrt(noise_sigma**2 + p * (1 - p) * spread**2) / math.sqrt(n)
        assert abs(part(run1.v1).mean() - part(expected)) <= bound


def test_collect_truth_does_not_change_voltages(make_config):
    a = simulation_service.generate_dataset(make_config(p_e=0.05, snr=6.0, n_shots=3000))
    b = simulation_service.generate_dataset(make_config(p_e=0.05, snr=6.0, n_shots=3000, collect_truth=True))
    assert a.truth is None and b.truth is not None
    assert np.array_equal(a.v1, b.v1)
    assert np.array_equal(a.v2, b.v2, equal_nan=True)


def test_dataset_is_deterministic_across_worker_counts(make_config):
    config = make_config(p_e=0.05, snr=6.0, n_shots=2 * BLOCK_SIZE + 17, tau=1e-6, rabi_angles=[0.0, math.pi], qutrit_shots=100)
    serial = simulation_service.generate_dataset(config, workers=1)
    parallel = simulation_service.generate_dataset(config, workers=4)
    for column in ("shot_index", "prep", "with_ge_pi", "tau", "v1"):
        assert np.array_equal(getattr(serial, column), getattr(parallel, column))
    assert np.array_equal(serial.v2, parallel.v2, equal_nan=True)
    assert np.array_equal(serial.rabi_angle, parallel.rabi_angle, equal_nan=True)


def test_dataset_depends_on_seed(make_config):
    a = simulation_service.generate_dataset(make_config(snr=6.0, n_shots=100, seed=1))
    b = simulation_service.generate_dataset(make_config(snr=6.0, n_shots=100, seed=2))
    assert not np.array_equal(a.v1, b.v1)


def test_qutrit_protocol_layout(make_config):
    angles = [0.0, math.pi / 2, math.pi]
    records = simulation_service.run_qutrit_protocol(make_config(n_shots=50, qutrit_shots=20), angles)
    assert len(records) == 3 * 2 * 20
    assert (records.prep == 2).all()
    assert set(records.with_ge_pi.tolist()) == {0, 1}
    no_pi = records.take(np.flatnonzero(records.with_ge_pi == 0))
    assert (no_pi.v1 == 0).all()


def test_qutrit_protocol_pi_variant_at_pi_lands_in_f(make_config):
    config = make_config(n_shots=40, collect_truth=True)
    records = simulation_service.run_qutrit_protocol(config, [math.pi])
    with_pi = records.take(np.flatnonzero(records.with_ge_pi == 1))
    assert (with_pi.truth[:, 0] == F).all()
    assert with_pi.v1 == pytest.approx(np.full(40, config.apparatus.v_f))


def test_simulation_requires_seed_and_angles(make_config):
    with pytest.raises(UsageError):
        simulation_service.generate_dataset(make_config(seed=None))
    with pytest.raises(UsageError):
        simulation_service.run_qutrit_protocol(make_config(), [])


def test_iter_records_matches_columns(make_config):
    records = simulation_service.generate_dataset(make_config(n_shots=3, rabi_angles=[0.5], collect_truth=True))
    shots = list(records.iter_records())
    assert len(shots) == len(records)
    assert shots[0].prep.tag is PrepTag.NONE and shots[0].v2 is not None
    assert shots[3].prep.tag is PrepTag.PI_GE and shots[3].v2 is None
    assert shots[-1].prep.tag is PrepTag.PI_EF_RABI and shots[-1].prep.angle == 0.5
    assert shots[0].truth == ("g", "g")
