import csv
import json
import math

import numpy as np
import pytest

from app.errors import RecordFormatError
from app.models import Estimate, EstimatorType, SweepResult, SweepRow, SweepSpec
from app.services.record_service import (
    RECORD_COLUMNS,
    SWEEP_COLUMNS,
    config_digest,
    format_float,
    record_service,
)
from app.services.simulation_service import simulation_service

HEADER = ",".join(RECORD_COLUMNS)


def write_lines(path, *lines):
    path.write_text("\n".join([HEADER, *lines]) + "\n", encoding="utf-8")
    return path


def test_records_survive_a_file_round_trip(tmp_path, make_config):
    config = make_config(p_e=0.05, snr=6.0, n_shots=300, tau=2e-6, rabi_angles=[0.0, 1.3], qutrit_shots=25)
    records = simulation_service.generate_dataset(config)
    path = record_service.write_records(records, tmp_path / "records.csv")
    loaded = record_service.read_records(path)
    assert np.array_equal(loaded.shot_index, records.shot_index)
    assert np.array_equal(loaded.prep, records.prep)
    assert np.array_equal(loaded.with_ge_pi, records.with_ge_pi)
    assert np.array_equal(loaded.v1, records.v1)
    assert np.array_equal(loaded.v2, records.v2, equal_nan=True)
    assert np.array_equal(loaded.rabi_angle, records.rabi_angle, equal_nan=True)
    assert loaded.truth is None


def test_record_file_layout(tmp_path, make_config):
    records = simulation_service.generate_dataset(make_config(n_shots=1, rabi_angles=[0.5], tau=1e-6))
    path = record_service.write_records(records, tmp_path / "records.csv")
    rows = list(csv.DictReader(path.open(encoding="utf-8")))
    assert list(rows[0]) == RECORD_COLUMNS
    assert [r["prep"] for r in rows] == ["none", "pi_ge", "pi_ef_rabi", "pi_ef_rabi"]
    assert rows[0]["v2_re"] == "0" and rows[0]["with_ge_pi"] == ""
    assert rows[1]["v2_re"] == "" and rows[1]["v1_re"] == "1"
    assert [r["with_ge_pi"] for r in rows[2:]] == ["false", "true"]
    assert rows[2]["rabi_angle_rad"] == "0.5"


def test_bad_header_is_row_one(tmp_path):
    path = tmp_path / "records.csv"
    path.write_text("shot,prep\n", encoding="utf-8")
    with pytest.raises(RecordFormatError) as info:
        record_service.read_records(path)
    assert info.value.row == 1


@pytest.mark.parametrize(
    "bad_line, message",
    [
        ("2,hot,,,0,0,0,0,0", "unknown prep"),
        ("2,none,,,0,0,0,,", "v2 is required"),
        ("2,pi_ge,,,0,1,0,0,0", "v2 is required"),
        ("2,none,0.5,,0,0,0,0,0", "rabi fields"),
        ("2,pi_ef_rabi,0.5,maybe,0,1,0,,", "with_ge_pi"),
        ("2,pi_ge,,,-1e-6,1,0,,", "tau_s"),
        ("2,pi_ge,,,0,abc,0,,", "not a number"),
        ("2,pi_ge,,,0,nan,0,,", "finite"),
        ("-2,pi_ge,,,0,1,0,,", "shot_index"),
        ("2,pi_ge,,,0,1", "expected 9 fields"),
    ],
)
def test_schema_violations_name_the_row(tmp_path, bad_line, message):
    path = write_lines(tmp_path / "records.csv", "0,none,,,0,0,0,0,0", "1,pi_ge,,,0,1,0,,", bad_line)
    with pytest.raises(RecordFormatError, match=message) as info:
        record_service.read_records(path)
    assert info.value.row == 4
    assert str(info.value).startswith("row 4: ")


@pytest.mark.parametrize("bad_line", [b"2,pi_ge,,,0,\xff\xfe,0,,", b"2,pi_ge,,,0,1\x00,0,,"])
def test_undecodable_bytes_name_the_row(tmp_path, bad_line):
    path = tmp_path / "records.csv"
    path.write_bytes(b"\n".join([HEADER.encode(), b"0,none,,,0,0,0,0,0", bad_line]) + b"\n")
    with pytest.raises(RecordFormatError) as info:
        record_service.read_records(path)
    assert info.value.row == 3


def test_format_float():
    assert format_float(0.1) == "0.10000000000000001"
    assert format_float(None) == ""
    assert format_float(math.nan) == ""
    assert float(format_float(1 / 3)) == 1 / 3


def test_config_digest_is_canonical(make_config):
    config = make_config(n_shots=10, seed=5)
    assert config_digest(config) == config_digest(config.model_dump(mode="json"))
    assert config_digest({"a": 1, "b": 2}) == config_digest({"b": 2, "a": 1})
    assert config_digest(config) != config_digest(config.with_seed(6))


def test_sidecar_is_reproducible(tmp_path, make_config):
    config = make_config(n_shots=10, seed=5)
    path = record_service.write_sidecar(tmp_path / "records.csv", config, 20)
    first = path.read_bytes()
    record_service.write_sidecar(tmp_path / "records.csv", config, 20)
    assert path.read_bytes() == first
    payload = json.loads(first)
    assert path.name == "records.json"
    assert payload["seed"] == 5 and payload["record_count"] == 20
    assert payload["constants_version"] == "CODATA 2018"


def test_manifest_path_naming(tmp_path):
    assert record_service.manifest_path(tmp_path / "out.csv").name == "out.manifest.json"


def test_sweep_table_columns(tmp_path, make_config):
    spec = SweepSpec(variable="tau", values=[0.0, 1e-6], base_config=make_config(n_shots=10))
    estimate = Estimate(method=EstimatorType.CORRELATOR_EXACT, p_e=0.011, std_error=0.001, n_shots=10)
    result = SweepResult(
        experiment="decay_scan",
        spec=spec,
        rows=[
            SweepRow(x_name="tau", x_value=0.0, estimates=[estimate], truth_p_e=0.01, g1=0.012, g1_std=0.001, g1_truth=0.0102),
            SweepRow(x_name="tau", x_value=1e-6, estimates=[estimate]),
        ],
    )
    path = record_service.write_sweep(result, tmp_path / "sweep")
    rows = list(csv.DictReader(path.open(encoding="utf-8")))
    assert list(rows[0]) == SWEEP_COLUMNS
    assert [r["method"] for r in rows] == ["correlator_exact", "g1_tau", "correlator_exact"]
    assert float(rows[0]["deviation"]) == pytest.approx(0.001)
    assert rows[2]["truth_p_e"] == "" and rows[2]["deviation"] == ""
