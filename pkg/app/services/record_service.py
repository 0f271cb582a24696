import csv
import hashlib
import json
import logging
import math
from pathlib import Path
from typing import Any, BinaryIO, Dict, Iterator, List, Optional, Type, TypeVar, Union

import numpy as np
from pydantic import BaseModel

from app import __version__
from app.errors import RecordFormatError
from app.models import (
    CONSTANTS_VERSION,
    PREP_BY_CODE,
    PREP_CODES,
    PrepTag,
    RecordSet,
    RunManifest,
    SimConfig,
    SweepResult,
)

RECORD_COLUMNS = [
    "shot_index", "prep", "rabi_angle_rad", "with_ge_pi", "tau_s",
    "v1_re", "v1_im", "v2_re", "v2_im",
]
SWEEP_COLUMNS = ["x_name", "x_value", "method", "p_e", "std_error", "truth_p_e", "deviation"]
SWEEP_CSV = "sweep.csv"
SWEEP_MANIFEST = "sweep_manifest.json"

ModelT = TypeVar("ModelT", bound=BaseModel)
PathLike = Union[str, Path]


def format_float(value: Optional[float]) -> str:
    """17 significant digits; None and NaN become an empty field"""
    if value is None or math.isnan(value):
        return ""
    return format(float(value), ".17g")


def config_digest(payload: Any) -> str:
    """SHA-256 of the canonical JSON form of `payload`"""
    if isinstance(payload, BaseModel):
        payload = payload.model_dump(mode="json")
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def file_digest(path: PathLike) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _parse_float(text: str, column: str, row: int, required: bool) -> float:
    if text == "":
        if required:
            raise RecordFormatError(f"column {column} is empty", row)
        return math.nan
    try:
        value = float(text)
    except ValueError:
        raise RecordFormatError(f"column {column}: {text!r} is not a number", row)
    if not math.isfinite(value):
        raise RecordFormatError(f"column {column} must be finite", row)
    return value


def _decoded_lines(f: BinaryIO) -> Iterator[str]:
    for row, raw in enumerate(f, start=1):
        try:
            line = raw.decode("utf-8")
        except UnicodeDecodeError as e:
            raise RecordFormatError(f"invalid UTF-8 at byte {e.start}", row)
        if "\x00" in line:
            raise RecordFormatError("NUL byte in row", row)
        yield line


def _csv_rows(reader: Any) -> Iterator[List[str]]:
    while True:
        try:
            fields = next(reader)
        except StopIteration:
            return
        except csv.Error as e:
            raise RecordFormatError(f"malformed CSV: {e}", reader.line_num)
        yield fields


class RecordService:
    """Reads and writes record files, JSON sidecars, run manifests and sweep tables"""

    def __init__(self):
        self.logger = logging.getLogger(__name__)

    # --- records ----------------------------------------------------------------

    def write_records(self, records: RecordSet, path: PathLike) -> Path:
        path = Path(path)
        with path.open("w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(RECORD_COLUMNS)
            for i in range(len(records)):
                tag = PREP_BY_CODE[int(records.prep[i])]
                rabi = tag is PrepTag.PI_EF_RABI
                has_v2 = tag is PrepTag.NONE
                v1, v2 = records.v1[i], records.v2[i]
                writer.writerow([
                    int(records.shot_index[i]),
                    tag.value,
                    format_float(records.rabi_angle[i]) if rabi else "",
                    ("true" if records.with_ge_pi[i] == 1 else "false") if rabi else "",
                    format_float(records.tau[i]),
                    format_float(v1.real),
                    format_float(v1.imag),
                    format_float(v2.real) if has_v2 else "",
                    format_float(v2.imag) if has_v2 else "",
                ])
        self.logger.info(f"Wrote {len(records)} records to {path}")
        return path

    def read_records(self, path: PathLike) -> RecordSet:
        """Parse a record CSV; schema violations name the offending file row (header = row 1)"""
        path = Path(path)
        columns: Dict[str, List[Any]] = {
            name: [] for name in ("shot_index", "prep", "rabi_angle", "with_ge_pi", "tau", "v1", "v2")
        }
        with path.open("rb") as f:
            reader = csv.reader(_decoded_lines(f))
            rows = _csv_rows(reader)
            header = next(rows, None)
            if header != RECORD_COLUMNS:
                raise RecordFormatError(f"header must be {','.join(RECORD_COLUMNS)}", 1)
            for fields in rows:
                row = reader.line_num
                if not fields:
                    continue
                if len(fields) != len(RECORD_COLUMNS):
                    raise RecordFormatError(
                        f"expected {len(RECORD_COLUMNS)} fields, got {len(fields)}", row
                    )
                cell = dict(zip(RECORD_COLUMNS, fields))
                try:
                    tag = PrepTag(cell["prep"])
                except ValueError:
                    raise RecordFormatError(f"unknown prep {cell['prep']!r}", row)
                try:
                    shot_index = int(cell["shot_index"])
                except ValueError:
                    raise RecordFormatError(f"shot_index {cell['shot_index']!r} is not an integer", row)
                if shot_index < 0:
                    raise RecordFormatError("shot_index must be non-negative", row)

                rabi = tag is PrepTag.PI_EF_RABI
                if rabi:
                    angle = _parse_float(cell["rabi_angle_rad"], "rabi_angle_rad", row, True)
                    if cell["with_ge_pi"] not in ("true", "false"):
                        raise RecordFormatError("with_ge_pi must be true or false", row)
                    with_ge_pi = int(cell["with_ge_pi"] == "true")
                else:
                    if cell["rabi_angle_rad"] or cell["with_ge_pi"]:
                        raise RecordFormatError(f"{tag.value} rows take no rabi fields", row)
                    angle, with_ge_pi = math.nan, -1

                tau = _parse_float(cell["tau_s"], "tau_s", row, True)
                if tau < 0:
                    raise RecordFormatError("tau_s must be non-negative", row)
                v1 = complex(
                    _parse_float(cell["v1_re"], "v1_re", row, True),
                    _parse_float(cell["v1_im"], "v1_im", row, True),
                )
                has_v2 = bool(cell["v2_re"] or cell["v2_im"])
                if has_v2 != (tag is PrepTag.NONE):
                    raise RecordFormatError("v2 is required exactly on prep=none rows", row)
                v2 = complex(
                    _parse_float(cell["v2_re"], "v2_re", row, has_v2),
                    _parse_float(cell["v2_im"], "v2_im", row, has_v2),
                )

                columns["shot_index"].append(shot_index)
                columns["prep"].append(PREP_CODES[tag])
                columns["rabi_angle"].append(angle)
                columns["with_ge_pi"].append(with_ge_pi)
                columns["tau"].append(tau)
                columns["v1"].append(v1)
                columns["v2"].append(v2)

        records = RecordSet(
            shot_index=np.asarray(columns["shot_index"], dtype=np.int64),
            prep=np.asarray(columns["prep"], dtype=np.int8),
            rabi_angle=np.asarray(columns["rabi_angle"], dtype=float),
            with_ge_pi=np.asarray(columns["with_ge_pi"], dtype=np.int8),
            tau=np.asarray(columns["tau"], dtype=float),
            v1=np.asarray(columns["v1"], dtype=np.complex128),
            v2=np.asarray(columns["v2"], dtype=np.complex128),
        )
        self.logger.info(f"Read {len(records)} records from {path}")
        return records

    # --- configs and provenance ---------------------------------------------------

    def load_model(self, path: PathLike, model: Type[ModelT]) -> ModelT:
        """Parse a JSON config file into `model`; syntax errors carry line and column"""
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        return model.model_validate(data)

    def sidecar_path(self, records_path: PathLike) -> Path:
        return Path(records_path).with_suffix(".json")

    def manifest_path(self, output_path: PathLike) -> Path:
        path = Path(output_path)
        return path.with_name(f"{path.stem}.manifest.json")

    def write_sidecar(self, records_path: PathLike, config: SimConfig, record_count: int) -> Path:
        path = self.sidecar_path(records_path)
        payload = {
            "artifact_version": __version__,
            "constants_version": CONSTANTS_VERSION,
            "config": config.model_dump(mode="json"),
            "seed": config.seed,
            "config_digest": config_digest(config),
            "record_count": record_count,
        }
        self.write_json(path, payload)
        return path

    def write_manifest(self, path: PathLike, manifest: RunManifest) -> Path:
        path = Path(path)
        self.write_json(path, manifest.model_dump(mode="json"))
        self.logger.info(f"Wrote manifest {path}")
        return path

    def write_json(self, path: PathLike, payload: Any) -> Path:
        path = Path(path)
        path.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
        return path

    def read_json(self, path: PathLike) -> Any:
        return json.loads(Path(path).read_text(encoding="utf-8"))

    # --- sweeps -------------------------------------------------------------------

    def sweep_rows(self, result: SweepResult) -> List[Dict[str, str]]:
        table = []
        for row in result.rows:
            for estimate in row.estimates:
                deviation = None if row.truth_p_e is None else estimate.p_e - row.truth_p_e
                table.append({
                    "x_name": row.x_name,
                    "x_value": format_float(row.x_value),
                    "method": estimate.method.value,
                    "p_e": format_float(estimate.p_e),
                    "std_error": format_float(estimate.std_error),
                    "truth_p_e": format_float(row.truth_p_e),
                    "deviation": format_float(deviation),
                })
            if row.g1 is not None:
                deviation = None if row.g1_truth is None else row.g1 - row.g1_truth
                table.append({
                    "x_name": row.x_name,
                    "x_value": format_float(row.x_value),
                    "method": "g1_tau",
                    "p_e": format_float(row.g1),
                    "std_error": format_float(row.g1_std),
                    "truth_p_e": format_float(row.g1_truth),
                    "deviation": format_float(deviation),
                })
        return table

    def write_sweep(self, result: SweepResult, out_dir: PathLike) -> Path:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        path = out_dir / SWEEP_CSV
        with path.open("w", newline="", encoding="utf-8") as f:
            writer = csv.DictWriter(f, fieldnames=SWEEP_COLUMNS, lineterminator="\n")
            writer.writeheader()
            for line in self.sweep_rows(result):
                writer.writerow(line)
        self.logger.info(f"Wrote {len(result.rows)} sweep points to {path}")
        return path

    def sweep_manifest_path(self, out_dir: PathLike) -> Path:
        return Path(out_dir) / SWEEP_MANIFEST


record_service = RecordService()
