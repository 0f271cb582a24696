import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import linregress

from app.errors import UsageError
from app.models import (
    BathModel,
    Estimate,
    EstimateDiagnostics,
    EstimationContext,
    EstimatorType,
    ExperimentType,
    SimConfig,
    SweepResult,
    SweepRow,
    SweepSpec,
    SweepVariable,
    UncertaintyMode,
)
from app.physics import (
    bath_rates_from_temperature,
    boltzmann_population,
    effective_temperature,
    expected_correlator,
    misclassification_probability,
    two_bath_steady_state,
)
from app.services.estimation_service import estimation_service
from app.services.estimators.bootstrap import bootstrap_statistic
from app.services.estimators.correlator import normalized_statistics
from app.services.estimators.fitting import fit_correlator_decay
from app.services.estimators.formulas import p_e_exact, p_e_exact_derivative, t1_correction_factor
from app.services.simulation_service import simulation_service
from app.services.streams import derive_seed

MIN_SCALING_SEEDS = 16


def error_budget(config: SimConfig) -> Dict[str, float]:
    """Closed-form systematic errors of each method for `config`.

    direct_count_floor is the per-state misclassification probability;
    readout_decay_factor multiplies uncorrected correlator estimates;
    pi_error_scale multiplies the normalized correlator;
    qutrit_expected is what the qutrit ratio converges to with leakage.
    """
    qubit, apparatus, pulses = config.qubit, config.apparatus, config.pulses
    p = qubit.p_e_equilibrium
    leak = pulses.ef_leakage_prob
    eps = pulses.pi_ge_error

    excited_after_pi = (1.0 - p) * (1.0 - eps) + p * eps
    a_no = p + leak * (1.0 - p)
    a_pi = excited_after_pi + leak * (1.0 - excited_after_pi)
    qutrit_expected = a_no / (a_no + a_pi)

    return {
        "snr": apparatus.snr(),
        "direct_count_floor": misclassification_probability(apparatus.snr()),
        "readout_decay_factor": math.exp(-apparatus.t_meas / qubit.t1),
        "pi_error_scale": (1.0 - eps) ** -2,
        "qutrit_expected": qutrit_expected,
        "qutrit_leakage_excess": qutrit_expected - p,
    }


def _combine(estimates: Sequence[Estimate]) -> Estimate:
    """Mean over independent repetitions; errors add in quadrature"""
    if len(estimates) == 1:
        return estimates[0]
    k = len(estimates)
    first = estimates[0]
    g1_values = [e.diagnostics.g1_0 for e in estimates if e.diagnostics.g1_0 is not None]
    return Estimate(
        method=first.method,
        p_e=math.fsum(e.p_e for e in estimates) / k,
        std_error=math.sqrt(math.fsum(e.std_error**2 for e in estimates)) / k,
        n_shots=sum(e.n_shots for e in estimates),
        diagnostics=EstimateDiagnostics(
            g1_0=math.fsum(g1_values) / len(g1_values) if g1_values else None,
            t1_correction_applied=first.diagnostics.t1_correction_applied,
            noise_dominated=any(e.diagnostics.noise_dominated for e in estimates),
        ),
    )


class SweepService:
    """Composed experiments over a swept parameter, one table row per point"""

    def __init__(self):
        self.logger = logging.getLogger(__name__)
        self._experiments: Dict[ExperimentType, Callable[..., SweepResult]] = {
            ExperimentType.DECAY_SCAN: self.exp_decay_scan,
            ExperimentType.TEMPERATURE_SWEEP: self.exp_temperature_sweep,
            ExperimentType.PRECISION_SCALING: self.exp_precision_scaling,
            ExperimentType.METHOD_COMPARISON: self.exp_method_comparison,
            ExperimentType.FREQUENCY_REPLAY: self.exp_frequency_replay,
        }

    # --- point construction ----------------------------------------------------------

    def point_config(self, spec: SweepSpec, value: float) -> Tuple[SimConfig, Dict[str, float]]:
        """SimConfig for one sweep point and its closed-form reference values"""
        base = spec.base_config
        qubit = base.qubit
        reference: Dict[str, float] = {}

        if spec.variable is SweepVariable.TAU:
            return base.model_copy(update={"tau": float(value)}), reference

        if spec.variable is SweepVariable.N_SHOTS:
            return base.model_copy(update={"n_shots": int(value)}), reference

        if spec.variable is SweepVariable.POWER:
            point = spec.power_point(value)
            apparatus = base.apparatus.model_copy(update={
                "noise_sigma": abs(base.apparatus.v_e - base.apparatus.v_g) / point.snr,
                "qnd_flip_prob": point.qnd_flip_prob,
            })
            return base.model_copy(update={"apparatus": apparatus}), reference

        if spec.variable is SweepVariable.TEMPERATURE:
            frequency, temperature = qubit.frequency, float(value)
            hot = spec.hot_bath
        else:
            if not spec.frequency_profile:
                raise UsageError("a frequency sweep needs frequency_profile")
            frequency, temperature = float(value), spec.fridge_temperature
            profile = spec.frequency_profile
            freqs = [p.frequency for p in profile]
            hot = BathModel(
                gamma_up=float(np.interp(frequency, freqs, [p.gamma_up for p in profile])),
                gamma_down=float(np.interp(frequency, freqs, [p.gamma_down for p in profile])),
            )

        baths = [bath_rates_from_temperature(qubit.t1, frequency, temperature)]
        if hot is not None:
            baths.append(hot)
        p_e, t1_total = two_bath_steady_state(baths)
        reference["boltzmann"] = boltzmann_population(frequency, temperature)
        reference["two_bath"] = p_e
        if 0 < p_e < 0.5:
            reference["t_eff_two_bath"] = effective_temperature(p_e, frequency)
        new_qubit = qubit.model_copy(update={"frequency": frequency, "p_e_equilibrium": p_e, "t1": t1_total})
        return base.model_copy(update={"qubit": new_qubit}), reference

    def _context(self, spec: SweepSpec, config: SimConfig, seed: int, **overrides) -> EstimationContext:
        settings = dict(
            t_meas=config.apparatus.t_meas,
            t1=config.qubit.t1,
            apply_t1_correction=spec.apply_t1_correction,
            uncertainty=spec.uncertainty,
            bootstrap_seed=seed,
        )
        settings.update(overrides)
        return estimation_service.context(**settings)

    def _map_points(self, fn: Callable[[int, float], SweepRow], values: Sequence[float], workers: int) -> List[SweepRow]:
        jobs = list(enumerate(values))
        if workers <= 1 or len(jobs) == 1:
            return [fn(i, v) for i, v in jobs]
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(lambda job: fn(*job), jobs))

    def _estimate_point(
        self, spec: SweepSpec, seed: int, index: int, value: float, methods: Sequence[EstimatorType]
    ) -> SweepRow:
        config, reference = self.point_config(spec, value)
        seeds = [derive_seed(seed, index, rep) for rep in range(spec.seeds_per_point)]
        per_method: Dict[EstimatorType, List[Estimate]] = {m: [] for m in methods}
        for point_seed in seeds:
            records = simulation_service.generate_dataset(config.with_seed(point_seed))
            context = self._context(spec, config, point_seed)
            for method in methods:
                per_method[method].append(estimation_service.estimate(records, method, context))
        estimates = [_combine(per_method[m]) for m in methods]
        if "two_bath" in reference:
            # effective temperature read off each method's population
            for estimate in estimates:
                if 0 < estimate.p_e < 0.5:
                    reference[f"t_eff_{estimate.method.value}"] = effective_temperature(
                        estimate.p_e, config.qubit.frequency
                    )
        self.logger.info(f"Sweep point {spec.variable.value}={value:g} done ({len(seeds)} seeds)")
        return SweepRow(
            x_name=spec.variable.value,
            x_value=float(value),
            estimates=estimates,
            truth_p_e=config.qubit.p_e_equilibrium,
            reference=reference,
            seeds=seeds,
        )

    def _require_seed(self, spec: SweepSpec, seed: Optional[int]) -> int:
        seed = spec.seed if seed is None else seed
        if seed is None:
            raise UsageError("a sweep needs a seed")
        return seed

    def _require_variable(self, spec: SweepSpec, variable: SweepVariable, experiment: ExperimentType):
        if spec.variable is not variable:
            raise UsageError(f"{experiment.value} sweeps {variable.value}, got {spec.variable.value}")

    # --- experiments -----------------------------------------------------------------

    def exp_decay_scan(self, spec: SweepSpec, seed: Optional[int] = None, workers: int = 1) -> SweepResult:
        """Normalized correlator vs delay and its exponential fit"""
        self._require_variable(spec, SweepVariable.TAU, ExperimentType.DECAY_SCAN)
        seed = self._require_seed(spec, seed)
        qubit, apparatus = spec.base_config.qubit, spec.base_config.apparatus

        def run_point(index: int, value: float) -> SweepRow:
            config, _ = self.point_config(spec, value)
            seeds = [derive_seed(seed, index, rep) for rep in range(spec.seeds_per_point)]
            g1, g1_var, g1_inf = [], [], []
            for point_seed in seeds:
                records = simulation_service.generate_dataset(config.with_seed(point_seed))
                stats = normalized_statistics(records)
                g1.append(stats.g1_0)
                g1_inf.append(stats.g1_inf)
                if spec.uncertainty is UncertaintyMode.BOOTSTRAP:
                    std = bootstrap_statistic(
                        records, lambda r: normalized_statistics(r).g1_0,
                        estimation_service.default_resamples, point_seed,
                    )
                    g1_var.append(std**2)
                else:
                    g1_var.append(stats.g1_variance())
            k = len(seeds)
            return SweepRow(
                x_name=spec.variable.value,
                x_value=float(value),
                truth_p_e=qubit.p_e_equilibrium,
                reference={"g1_inf": math.fsum(g1_inf) / k},
                seeds=seeds,
                g1=math.fsum(g1) / k,
                g1_std=math.sqrt(math.fsum(g1_var)) / k,
                g1_truth=expected_correlator(qubit.p_e_equilibrium, float(value), qubit.t1, apparatus.t_meas),
            )

        rows = self._map_points(run_point, spec.values, workers)
        fit = fit_correlator_decay(
            [(r.x_value, r.g1) for r in rows], sigma=[r.g1_std for r in rows], t1_guess=qubit.t1
        )

        factor = t1_correction_factor(apparatus.t_meas, qubit.t1) if spec.apply_t1_correction else 1.0
        g1_zero = fit.value_at_zero * factor
        summary: Dict[str, Any] = {"fit": fit.model_dump(mode="json"), "t1_correction_factor": factor}
        if g1_zero > -0.25:
            summary["p_e"] = p_e_exact(g1_zero)
            if fit.value_at_zero_std is not None:
                slope = p_e_exact_derivative(max(g1_zero, 0.0))
                summary["p_e_std"] = fit.value_at_zero_std * factor * slope
        self.logger.info(f"Decay fit: t1={fit.t1_fit:.4g} s, g1(0)={fit.value_at_zero:.4g}")
        return SweepResult(experiment=ExperimentType.DECAY_SCAN, spec=spec, rows=rows, summary=summary)

    def exp_temperature_sweep(self, spec: SweepSpec, seed: Optional[int] = None, workers: int = 1) -> SweepResult:
        """Estimated population vs fridge temperature with a cold and an optional hot bath"""
        self._require_variable(spec, SweepVariable.TEMPERATURE, ExperimentType.TEMPERATURE_SWEEP)
        seed = self._require_seed(spec, seed)
        rows = self._map_points(
            lambda i, v: self._estimate_point(spec, seed, i, v, spec.methods), spec.values, workers
        )
        return SweepResult(experiment=ExperimentType.TEMPERATURE_SWEEP, spec=spec, rows=rows)

    def exp_precision_scaling(self, spec: SweepSpec, seed: Optional[int] = None, workers: int = 1) -> SweepResult:
        """Spread of correlator_exact across seeds vs shot count, per power setting"""
        self._require_variable(spec, SweepVariable.N_SHOTS, ExperimentType.PRECISION_SCALING)
        if spec.seeds_per_point < MIN_SCALING_SEEDS:
            raise UsageError(f"precision scaling needs seeds_per_point >= {MIN_SCALING_SEEDS}")
        seed = self._require_seed(spec, seed)

        entries: List[Tuple[str, SweepSpec]] = [("n_shots", spec)]
        if spec.power_map:
            entries = []
            for point in spec.power_map:
                mapped, _ = self.point_config(
                    spec.model_copy(update={"variable": SweepVariable.POWER, "values": [point.power_dbm]}),
                    point.power_dbm,
                )
                entries.append((f"n_shots@{point.label}", spec.model_copy(update={"base_config": mapped})))

        def run_point(entry: int, index: int, value: float) -> SweepRow:
            x_name, entry_spec = entries[entry]
            config, _ = self.point_config(entry_spec, value)
            seeds = [derive_seed(seed, entry, index, rep) for rep in range(spec.seeds_per_point)]
            estimates = []
            for point_seed in seeds:
                records = simulation_service.generate_dataset(config.with_seed(point_seed))
                context = self._context(spec, config, point_seed, uncertainty=UncertaintyMode.ANALYTIC)
                estimates.append(estimation_service.estimate(records, EstimatorType.CORRELATOR_EXACT, context))

            g1 = np.array([e.diagnostics.g1_0 for e in estimates])
            factor = 1.0
            if spec.apply_t1_correction:
                factor = t1_correction_factor(config.apparatus.t_meas, config.qubit.t1)
            slope = p_e_exact_derivative(max(float(np.mean(g1)), 0.0))
            precision = float(np.std(g1, ddof=1)) * slope * factor
            combined = Estimate(
                method=EstimatorType.CORRELATOR_EXACT,
                p_e=math.fsum(e.p_e for e in estimates) / len(estimates),
                std_error=precision,
                n_shots=config.n_shots,
                diagnostics=EstimateDiagnostics(
                    g1_0=float(np.mean(g1)),
                    t1_correction_applied=spec.apply_t1_correction,
                    noise_dominated=any(e.diagnostics.noise_dominated for e in estimates),
                ),
            )
            return SweepRow(
                x_name=x_name,
                x_value=float(value),
                estimates=[combined],
                truth_p_e=config.qubit.p_e_equilibrium,
                seeds=seeds,
            )

        jobs = [(e, i, v) for e in range(len(entries)) for i, v in enumerate(spec.values)]
        if workers <= 1:
            rows = [run_point(*job) for job in jobs]
        else:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                rows = list(pool.map(lambda job: run_point(*job), jobs))

        slopes = {}
        for x_name, _ in entries:
            points = [(r.x_value, r.estimates[0].std_error) for r in rows if r.x_name == x_name]
            points = [(n, s) for n, s in points if s > 0]
            if len(points) < 2:
                slopes[x_name] = None
                continue
            fit = linregress(np.log([n for n, _ in points]), np.log([s for _, s in points]))
            slopes[x_name] = {
                "slope": float(fit.slope),
                "intercept": float(fit.intercept),
                "slope_stderr": float(fit.stderr),
                "rvalue": float(fit.rvalue),
            }
            self.logger.info(f"Precision scaling {x_name}: slope {fit.slope:.3f} +/- {fit.stderr:.3f}")
        return SweepResult(
            experiment=ExperimentType.PRECISION_SCALING, spec=spec, rows=rows, summary={"slopes": slopes}
        )

    def exp_method_comparison(self, spec: SweepSpec, seed: Optional[int] = None, workers: int = 1) -> SweepResult:
        """Every selected method side by side at each sweep point"""
        if len(spec.methods) < 2:
            raise UsageError("a method comparison needs at least two methods")
        seed = self._require_seed(spec, seed)
        rows = self._map_points(
            lambda i, v: self._estimate_point(spec, seed, i, v, spec.methods), spec.values, workers
        )
        budgets = [error_budget(self.point_config(spec, v)[0]) for v in spec.values]
        return SweepResult(
            experiment=ExperimentType.METHOD_COMPARISON, spec=spec, rows=rows,
            summary={"error_budget": budgets},
        )

    def exp_frequency_replay(self, spec: SweepSpec, seed: Optional[int] = None, workers: int = 1) -> SweepResult:
        """Population vs qubit frequency from a user-authored hot-bath rate profile"""
        if not spec.frequency_profile:
            raise UsageError("frequency replay needs frequency_profile")
        self._require_variable(spec, SweepVariable.FREQUENCY, ExperimentType.FREQUENCY_REPLAY)
        seed = self._require_seed(spec, seed)
        rows = self._map_points(
            lambda i, v: self._estimate_point(spec, seed, i, v, spec.methods), spec.values, workers
        )
        return SweepResult(experiment=ExperimentType.FREQUENCY_REPLAY, spec=spec, rows=rows)

    def run(self, spec: SweepSpec, seed: Optional[int] = None, workers: int = 1) -> SweepResult:
        experiment = spec.resolved_experiment()
        self.logger.info(
            f"Running {experiment.value}: {len(spec.values)} points of {spec.variable.value}, "
            f"{spec.seeds_per_point} seed(s) each"
        )
        return self._experiments[experiment](spec, seed=seed, workers=workers)


sweep_service = SweepService()
