"""Calibration of the g/e voltage responses and the maps built on it."""

from typing import Union

import numpy as np
from scipy.stats import median_abs_deviation

from app.errors import DegenerateCalibrationError, UsageError
from app.models import CalibrationResult, PrepTag, RecordSet

ComplexArray = Union[complex, np.ndarray]


def _axis_spread(values: np.ndarray, axis: complex) -> float:
    along = np.real((values - np.median(values.real) - 1j * np.median(values.imag)) * np.conj(axis))
    return float(median_abs_deviation(along, scale="normal"))


def calibrate(ground: np.ndarray, excited: np.ndarray) -> CalibrationResult:
    """Mean responses of the ground set and the pi-pulsed set.

    snr_hat pools a robust per-set spread along the g-e axis, so the minority
    population inside each set does not inflate the noise estimate.
    """
    ground = np.asarray(ground, dtype=np.complex128)
    excited = np.asarray(excited, dtype=np.complex128)
    if len(ground) == 0 or len(excited) == 0:
        raise UsageError("calibration needs non-empty ground and pi-pulse collections")

    v_g_hat = complex(ground.mean())
    v_e_hat = complex(excited.mean())
    if v_g_hat == v_e_hat:
        raise DegenerateCalibrationError("ground and pi-pulse responses coincide")

    axis = (v_e_hat - v_g_hat) / abs(v_e_hat - v_g_hat)
    s_g, s_e = _axis_spread(ground, axis), _axis_spread(excited, axis)
    pooled = np.sqrt((len(ground) * s_g**2 + len(excited) * s_e**2) / (len(ground) + len(excited)))
    snr_hat = abs(v_e_hat - v_g_hat) / pooled if pooled > 0 else None

    return CalibrationResult(
        v_g_hat=v_g_hat,
        v_e_hat=v_e_hat,
        n_cal=len(ground) + len(excited),
        snr_hat=snr_hat,
    )


def calibrate_records(records: RecordSet) -> CalibrationResult:
    """Ground set: both Run I voltages (equilibrium). Pi set: Run II voltages."""
    run1 = records.with_prep(PrepTag.NONE)
    run2 = records.with_prep(PrepTag.PI_GE)
    if len(run1) == 0 or len(run2) == 0:
        raise UsageError("calibration needs Run I (prep=none) and Run II (prep=pi_ge) records")
    return calibrate(np.concatenate([run1.v1, run1.v2]), run2.v1)


def normalize(v: ComplexArray, calib: CalibrationResult) -> ComplexArray:
    """Map v_g_hat to 0 and v_e_hat to 1; the perpendicular component is dropped"""
    delta = calib.v_e_hat - calib.v_g_hat
    if delta == 0:
        raise DegenerateCalibrationError("calibration responses coincide")
    return np.real((np.asarray(v) - calib.v_g_hat) / delta)


def project_raw(v: ComplexArray, calib: CalibrationResult) -> ComplexArray:
    """Un-normalized projection on the g-e axis, oriented so the ground response is non-negative"""
    axis = calib.axis
    sign = -1.0 if np.real(calib.v_g_hat * np.conj(axis)) < 0 else 1.0
    return sign * np.real(np.asarray(v) * np.conj(axis))
