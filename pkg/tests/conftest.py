import json
import math
from typing import Any, Dict

import pytest

from app.models import ApparatusModel, PulseModel, QubitModel, SimConfig


def build_config(
    p_e: float = 0.0,
    n_shots: int = 1000,
    seed: int = 1234,
    snr: float = math.inf,
    tau: float = 0.0,
    t1: float = 10e-6,
    t_meas: float = 0.0,
    **extra: Any,
) -> SimConfig:
    """Config with v_g = 0, v_e = 1 and noise set from the SNR"""
    apparatus_fields = {k: extra.pop(k) for k in list(extra) if k in ApparatusModel.model_fields}
    pulse_fields = {k: extra.pop(k) for k in list(extra) if k in PulseModel.model_fields}
    noise_sigma = 0.0 if math.isinf(snr) else 1.0 / snr
    return SimConfig(
        qubit=QubitModel(p_e_equilibrium=p_e, t1=t1),
        apparatus=ApparatusModel(noise_sigma=noise_sigma, t_meas=t_meas, **apparatus_fields),
        pulses=PulseModel(**pulse_fields),
        n_shots=n_shots,
        tau=tau,
        seed=seed,
        **extra,
    )


@pytest.fixture
def make_config():
    return build_config


@pytest.fixture
def write_json(tmp_path):
    def _write(name: str, payload: Dict[str, Any]):
        path = tmp_path / name
        path.write_text(json.dumps(payload), encoding="utf-8")
        return path
    return _write
