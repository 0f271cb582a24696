import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from app.errors import DomainError, UsageError
from app.models import (
    PREP_CODES,
    ApparatusModel,
    PrepTag,
    PulseModel,
    QubitModel,
    RecordSet,
    SimConfig,
)
from app.physics import relax_probabilities
from app.services.streams import Stage, blocks, substream

G, E, F = 0, 1, 2


def sample_initial_state(p_e: float, rng: np.random.Generator, size: int) -> np.ndarray:
    """Independent draws of g (0) or e (1) with excited probability p_e"""
    if not 0 <= p_e <= 1:
        raise DomainError(f"population must lie in [0, 1], got {p_e}")
    return (rng.random(size) < p_e).astype(np.int8)


def apply_pi_ge(states: np.ndarray, pulses: PulseModel, rng: np.random.Generator) -> np.ndarray:
    """Swap g and e unless the pulse fails (probability pi_ge_error); f is untouched"""
    swap = rng.random(len(states)) >= pulses.pi_ge_error
    out = states.copy()
    out[swap & (states == G)] = E
    out[swap & (states == E)] = G
    return out


def _propagate(states: np.ndarray, tau: float, qubit: QubitModel, u: np.ndarray) -> np.ndarray:
    """Exact two-level Markov step over tau driven by pre-drawn uniforms"""
    p_from_g = relax_probabilities(0.0, tau, qubit.p_e_equilibrium, qubit.t1)
    p_from_e = relax_probabilities(1.0, tau, qubit.p_e_equilibrium, qubit.t1)
    p_excited = np.where(states == E, p_from_e, p_from_g)
    evolved = np.where(u < p_excited, E, G).astype(np.int8)
    return np.where(states == F, states, evolved).astype(np.int8)


def evolve_delay(states: np.ndarray, tau: float, qubit: QubitModel, rng: np.random.Generator) -> np.ndarray:
    if tau < 0:
        raise DomainError(f"delay must be non-negative, got {tau}")
    return _propagate(states, tau, qubit, rng.random(len(states)))


def measure(
    states: np.ndarray,
    apparatus: ApparatusModel,
    qubit: QubitModel,
    rng: np.random.Generator,
) -> Tuple[np.ndarray, np.ndarray]:
    """Sample voltages for `states` and return them with the post-measurement states.

    The voltage is the state response plus complex white noise. Afterwards the
    state may be randomized (QND breakdown), excited by the readout and finally
    relaxes over t_meas. Draw counts do not depend on the parameters.
    """
    n = len(states)
    noise = rng.standard_normal((2, n))
    u_flip, u_resample, u_excite, u_decay = rng.random((4, n))

    voltages = apparatus.responses()[states] + apparatus.noise_sigma * (noise[0] + 1j * noise[1])

    post = states.copy()
    flipped = u_flip < apparatus.qnd_flip_prob
    post[flipped] = np.where(u_resample[flipped] < 0.5, E, G)
    excited = (post == G) & (u_excite < apparatus.readout_excitation_prob)
    post[excited] = E
    if apparatus.t_meas > 0:
        post = _propagate(post, apparatus.t_meas, qubit, u_decay)
    return voltages, post


def rotate_ef(states: np.ndarray, angle: float, pulses: PulseModel, rng: np.random.Generator) -> np.ndarray:
    """Stochastic e-f rotation by `angle`, preceded by g->e leakage of the drive"""
    n = len(states)
    u_leak, u_fail, u_swap = rng.random((3, n))
    out = states.copy()
    out[(out == G) & (u_leak < pulses.ef_leakage_prob)] = E
    swap = (u_fail >= pulses.pi_ef_error) & (u_swap < math.sin(angle / 2.0) ** 2)
    before = out.copy()
    out[swap & (before == E)] = F
    out[swap & (before == F)] = E
    return out


def _records(
    start: int,
    stop: int,
    prep: PrepTag,
    v1: np.ndarray,
    v2: Optional[np.ndarray] = None,
    tau: float = 0.0,
    angle: float = math.nan,
    with_ge_pi: int = -1,
    truth: Optional[np.ndarray] = None,
) -> RecordSet:
    n = stop - start
    return RecordSet(
        shot_index=np.arange(start, stop, dtype=np.int64),
        prep=np.full(n, PREP_CODES[prep], dtype=np.int8),
        rabi_angle=np.full(n, angle),
        with_ge_pi=np.full(n, with_ge_pi, dtype=np.int8),
        tau=np.full(n, tau),
        v1=v1,
        v2=np.full(n, complex(math.nan, math.nan)) if v2 is None else v2,
        truth=truth,
    )


class SimulationService:
    """Generates shot records for the correlation and qutrit protocols"""

    def __init__(self):
        self.logger = logging.getLogger(__name__)

    def _require_seed(self, config: SimConfig) -> int:
        if config.seed is None:
            raise UsageError("simulation config has no seed")
        return config.seed

    def _run_blocks(
        self, n: int, make_block: Callable[[int, int, int], RecordSet], workers: int
    ) -> RecordSet:
        jobs = list(blocks(n))
        if workers <= 1 or len(jobs) == 1:
            parts = [make_block(*job) for job in jobs]
        else:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                parts = list(pool.map(lambda job: make_block(*job), jobs))
        return RecordSet.concat(parts)

    def run_correlation_protocol(self, config: SimConfig, workers: int = 1) -> Tuple[RecordSet, RecordSet]:
        """Run I (measure, delay, measure) and Run II (pi pulse, measure), n_shots each"""
        seed = self._require_seed(config)
        qubit, apparatus, pulses = config.qubit, config.apparatus, config.pulses

        def run_one(block: int, start: int, stop: int) -> RecordSet:
            rng = substream(seed, Stage.RUN_I, 0, block)
            s0 = sample_initial_state(qubit.p_e_equilibrium, rng, stop - start)
            v1, s1 = measure(s0, apparatus, qubit, rng)
            s2 = evolve_delay(s1, config.tau, qubit, rng)
            v2, _ = measure(s2, apparatus, qubit, rng)
            truth = np.stack([s0, s2], axis=1) if config.collect_truth else None
            return _records(start, stop, PrepTag.NONE, v1, v2, tau=config.tau, truth=truth)

        def run_two(block: int, start: int, stop: int) -> RecordSet:
            rng = substream(seed, Stage.RUN_II, 0, block)
            s0 = sample_initial_state(qubit.p_e_equilibrium, rng, stop - start)
            s1 = apply_pi_ge(s0, pulses, rng)
            v1, _ = measure(s1, apparatus, qubit, rng)
            truth = None
            if config.collect_truth:
                truth = np.stack([s1, np.full_like(s1, -1)], axis=1)
            return _records(start, stop, PrepTag.PI_GE, v1, truth=truth)

        self.logger.info(
            f"Correlation protocol: {config.n_shots} shots per run, tau={config.tau:g} s, "
            f"p_e={qubit.p_e_equilibrium:g}, snr={apparatus.snr():.3g}"
        )
        run1 = self._run_blocks(config.n_shots, run_one, workers)
        run2 = self._run_blocks(config.n_shots, run_two, workers)
        return run1, run2

    def run_qutrit_protocol(
        self, config: SimConfig, rabi_angles: Sequence[float], workers: int = 1
    ) -> RecordSet:
        """e-f Rabi scans with and without a preceding g-e pi pulse"""
        if not rabi_angles:
            raise UsageError("the qutrit protocol needs at least one rabi angle")
        seed = self._require_seed(config)
        qubit, apparatus, pulses = config.qubit, config.apparatus, config.pulses
        shots = config.qutrit_shots or config.n_shots

        parts: List[RecordSet] = []
        for k, angle in enumerate(rabi_angles):
            for with_ge_pi in (False, True):
                sub = 2 * k + int(with_ge_pi)

                def run_cell(block: int, start: int, stop: int, angle=angle, with_ge_pi=with_ge_pi, sub=sub):
                    rng = substream(seed, Stage.QUTRIT, sub, block)
                    states = sample_initial_state(qubit.p_e_equilibrium, rng, stop - start)
                    if with_ge_pi:
                        states = apply_pi_ge(states, pulses, rng)
                    states = rotate_ef(states, angle, pulses, rng)
                    v1, _ = measure(states, apparatus, qubit, rng)
                    truth = None
                    if config.collect_truth:
                        truth = np.stack([states, np.full_like(states, -1)], axis=1)
                    return _records(
                        start, stop, PrepTag.PI_EF_RABI, v1,
                        angle=float(angle), with_ge_pi=int(with_ge_pi), truth=truth,
                    )

                parts.append(self._run_blocks(shots, run_cell, workers))

        self.logger.info(f"Qutrit protocol: {len(rabi_angles)} angles x 2 variants x {shots} shots")
        return RecordSet.concat(parts)

    def generate_dataset(self, config: SimConfig, workers: int = 1) -> RecordSet:
        """Every record the config asks for, as a pure function of (config, seed)"""
        run1, run2 = self.run_correlation_protocol(config, workers)
        parts = [run1, run2]
        if config.rabi_angles:
            parts.append(self.run_qutrit_protocol(config, config.rabi_angles, workers))
        dataset = RecordSet.concat(parts)
        self.logger.info(f"Generated {len(dataset)} records (seed={config.seed})")
        return dataset


simulation_service = SimulationService()
