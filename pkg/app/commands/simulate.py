import argparse
import logging
from pathlib import Path

from app import __version__
from app.commands.common import default_workers, emit_stdout, ensure_parent, resolve_seed, utc_now
from app.models import RunManifest, SimConfig
from app.services.record_service import config_digest, file_digest, record_service
from app.services.simulation_service import simulation_service

logger = logging.getLogger(__name__)


def add_parser(subparsers) -> None:
    parser = subparsers.add_parser("simulate", help="generate a record file from a simulation config")
    parser.add_argument("--config", required=True, type=Path, help="SimConfig JSON file")
    parser.add_argument("--out", required=True, type=Path, help="record CSV to write")
    parser.add_argument("--seed", type=int, help="overrides the seed in the config")
    parser.add_argument("--workers", type=int, default=None, help="parallel workers (default: THERMOMETRY_WORKERS or CPU count)")
    parser.add_argument("--stdout", action="store_true", help="print the JSON sidecar to stdout")
    parser.set_defaults(handler=handle)


def handle(args: argparse.Namespace) -> int:
    started_at = utc_now()
    config = record_service.load_model(args.config, SimConfig)
    seed, source = resolve_seed(args.seed, config.seed)
    config = config.with_seed(seed)
    workers = args.workers or default_workers()

    logger.info(f"Simulating {args.config} with seed {seed} ({source}), {workers} worker(s)")
    records = simulation_service.generate_dataset(config, workers=workers)

    out = record_service.write_records(records, ensure_parent(args.out))
    sidecar = record_service.write_sidecar(out, config, len(records))
    manifest_path = record_service.manifest_path(out)
    record_service.write_manifest(manifest_path, RunManifest(
        subcommand="simulate",
        config_digest=config_digest(config),
        seed=seed,
        artifact_version=__version__,
        started_at=started_at,
        finished_at=utc_now(),
        outputs=[str(out), str(sidecar)],
        details={"seed_source": source, "record_count": len(records), "records_sha256": file_digest(out)},
    ))

    if args.stdout:
        emit_stdout(record_service.read_json(sidecar))
    return 0
