import logging
import math
import warnings
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import OptimizeWarning, curve_fit

from app.errors import EstimationError, FitError, UsageError
from app.models import DecayFit

logger = logging.getLogger(__name__)

MIN_DECAY_POINTS = 4
# rate bound in units of 1 / max(tau)
RATE_MAX = 1e3
SIGNIFICANCE = 2.0


def _decay(x: np.ndarray, amplitude: float, rate: float, offset: float) -> np.ndarray:
    return amplitude * np.exp(-rate * x) + offset


def _rabi(theta: np.ndarray, level: float, amplitude: float) -> np.ndarray:
    return level + amplitude * (1.0 - np.cos(theta)) / 2.0


def _std(cov: np.ndarray, i: int) -> Optional[float]:
    value = cov[i, i]
    return float(math.sqrt(value)) if np.isfinite(value) and value >= 0 else None


def _initial_rate(x: np.ndarray, y: np.ndarray, offset: float, amplitude: float) -> float:
    if amplitude == 0:
        return 1.0
    ratio = (y - offset) / amplitude
    usable = (ratio > 0.05) & (ratio <= 1.0)
    if np.count_nonzero(usable) >= 2 and np.ptp(x[usable]) > 0:
        slope = np.polyfit(x[usable], np.log(ratio[usable]), 1)[0]
        if slope < 0:
            return float(-slope)
    return 1.0


def _zero_std(cov: np.ndarray, a: int, c: int) -> Optional[float]:
    var = cov[a, a] + cov[c, c] + 2.0 * cov[a, c]
    return float(math.sqrt(var)) if np.isfinite(var) and var >= 0 else None


def _is_significant(amplitude: float, amplitude_std: Optional[float]) -> bool:
    # a decaying correlator has a positive amplitude
    return amplitude_std is not None and amplitude > SIGNIFICANCE * amplitude_std


def _fit(model, x, values, p0, weights, **kwargs):
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", OptimizeWarning)
            return curve_fit(
                model, x, values, p0=p0, sigma=weights, absolute_sigma=weights is not None,
                ftol=1e-12, xtol=1e-12, gtol=1e-12, **kwargs,
            )
    except (RuntimeError, ValueError) as e:
        residual = float(np.linalg.norm(model(x, *p0) - values))
        raise FitError(f"decay fit did not converge: {e}", residual)


def _fit_fixed_rate(
    x: np.ndarray, values: np.ndarray, weights: Optional[np.ndarray], span: float, t1: float
) -> DecayFit:
    rate = span / t1

    def model(x: np.ndarray, amplitude: float, offset: float) -> np.ndarray:
        return _decay(x, amplitude, rate, offset)

    basis = np.exp(-rate * x)
    p0 = np.linalg.lstsq(np.column_stack([basis, np.ones_like(x)]), values, rcond=None)[0]
    params, cov = _fit(model, x, values, list(p0), weights, maxfev=10000)
    amplitude, offset = (float(p) for p in params)
    return DecayFit(
        amplitude=amplitude,
        t1_fit=t1,
        offset=offset,
        amplitude_std=_std(cov, 0),
        offset_std=_std(cov, 1),
        value_at_zero=amplitude + offset,
        value_at_zero_std=_zero_std(cov, 0, 1),
        residual_norm=float(np.linalg.norm(model(x, *params) - values)),
        t1_fixed=True,
    )


def fit_correlator_decay(
    points: Sequence[Tuple[float, float]],
    sigma: Optional[Sequence[float]] = None,
    t1_guess: Optional[float] = None,
) -> DecayFit:
    """Least-squares fit of A*exp(-tau/T) + c to (tau, g1(tau)) points.

    With t1_guess, A and c are first fitted at T = t1_guess. If that amplitude
    is not significantly positive, or the free fit fails, the fixed-T result is
    returned. The free fit bounds the rate to [0, RATE_MAX / max(tau)].
    """
    data = np.asarray(points, dtype=float).reshape(-1, 2)
    tau, values = data[:, 0], data[:, 1]
    if len(np.unique(tau)) < MIN_DECAY_POINTS:
        raise UsageError(f"a decay fit needs at least {MIN_DECAY_POINTS} distinct delays")

    if np.ptp(values) == 0:
        logger.warning("Correlator is constant over the delays; no decay to fit")
        return DecayFit(
            amplitude=0.0, t1_fit=math.nan, offset=float(values[0]),
            value_at_zero=float(values[0]), residual_norm=0.0,
        )

    # fit in units of the largest delay so all parameters are O(1)
    span = float(np.max(np.abs(tau)))
    x = tau / span

    weights = None
    if sigma is not None:
        weights = np.asarray(sigma, dtype=float)
        if not np.all(weights > 0):
            weights = None

    fixed = None
    if t1_guess is not None and t1_guess > 0:
        fixed = _fit_fixed_rate(x, values, weights, span, t1_guess)
        if not _is_significant(fixed.amplitude, fixed.amplitude_std):
            logger.info(f"Decay amplitude {fixed.amplitude:.3g} is not significant; T1 held at {t1_guess:.4g} s")
            return fixed

    order = np.argsort(x)
    offset0 = float(values[order[-1]])
    amplitude0 = float(values[order[0]]) - offset0
    rate0 = min(_initial_rate(x, values, offset0, amplitude0), RATE_MAX / 2)
    p0 = [amplitude0, rate0, offset0]
    try:
        params, cov = _fit(
            _decay, x, values, p0, weights,
            bounds=([-np.inf, 0.0, -np.inf], [np.inf, RATE_MAX, np.inf]), max_nfev=10000,
        )
    except FitError as e:
        if fixed is None:
            raise
        logger.warning(f"Free decay fit failed ({e}); T1 held at {t1_guess:.4g} s")
        return fixed

    amplitude, rate, offset = (float(p) for p in params)
    amplitude_std = _std(cov, 0)
    if fixed is not None and (rate <= 0 or not _is_significant(amplitude, amplitude_std)):
        logger.warning("Free decay fit is degenerate; T1 held at the configured value")
        return fixed
    if not np.all(np.isfinite(cov)):
        logger.warning("Decay fit covariance is undetermined")

    rate_std = _std(cov, 1)
    return DecayFit(
        amplitude=amplitude,
        t1_fit=span / rate if rate > 0 else math.nan,
        offset=offset,
        amplitude_std=amplitude_std,
        t1_std=None if rate_std is None or rate <= 0 else span * rate_std / rate**2,
        offset_std=_std(cov, 2),
        value_at_zero=amplitude + offset,
        value_at_zero_std=_zero_std(cov, 0, 2),
        residual_norm=float(np.linalg.norm(_decay(x, *params) - values)),
    )


def fit_rabi_amplitude(
    angles: np.ndarray, means: np.ndarray, sems: np.ndarray
) -> Tuple[complex, np.ndarray]:
    """Fit C + Z*(1 - cos theta)/2 to complex mean voltages per angle.

    Quadratures are fitted separately; returns Z and the 2x2 covariance of
    (Re Z, Im Z).
    """
    angles = np.asarray(angles, dtype=float)
    design = (1.0 - np.cos(angles)) / 2.0
    if np.ptp(design) < 1e-12:
        raise EstimationError("rabi angles give a singular fit design")

    amplitude = []
    variance = []
    for quadrature, spread in ((means.real, sems.real), (means.imag, sems.imag)):
        weights = spread if np.all(spread > 0) else None
        level0 = float(quadrature[np.argmin(design)])
        p0 = [level0, float(quadrature[np.argmax(design)]) - level0]
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", OptimizeWarning)
            params, cov = curve_fit(
                _rabi, angles, quadrature, p0=p0, sigma=weights, absolute_sigma=weights is not None,
            )
        if not np.isfinite(cov[1, 1]):
            raise EstimationError("rabi fit covariance is undetermined")
        amplitude.append(float(params[1]))
        variance.append(float(cov[1, 1]))

    return complex(amplitude[0], amplitude[1]), np.diag(variance)
