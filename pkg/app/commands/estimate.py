import argparse
import logging
from pathlib import Path

from app import __version__
from app.commands.common import default_workers, emit_stdout, ensure_parent, resolve_seed, utc_now
from app.models import EstimatorType, RunManifest, SimConfig, UncertaintyMode
from app.services.estimation_service import estimation_service
from app.services.record_service import config_digest, file_digest, record_service

logger = logging.getLogger(__name__)


def add_parser(subparsers) -> None:
    parser = subparsers.add_parser("estimate", help="estimate P_e from a record file")
    parser.add_argument("records", type=Path, help="record CSV")
    parser.add_argument(
        "--method", choices=[m.value for m in EstimatorType],
        help="estimator (default: THERMOMETRY_DEFAULT_METHOD or correlator_exact)",
    )
    parser.add_argument("--out", type=Path, help="Estimate JSON to write (default: <records>.estimate.json)")
    parser.add_argument("--config", type=Path, help="SimConfig whose t_meas and t1 drive the T1 correction")
    parser.add_argument("--seed", type=int, help="bootstrap seed")
    parser.add_argument(
        "--uncertainty", choices=[m.value for m in UncertaintyMode], default=UncertaintyMode.BOOTSTRAP.value,
    )
    parser.add_argument("--workers", type=int, default=None, help="bootstrap workers")
    parser.add_argument("--stdout", action="store_true", help="print the Estimate JSON to stdout instead of a file")
    parser.set_defaults(handler=handle)


def handle(args: argparse.Namespace) -> int:
    started_at = utc_now()
    records = record_service.read_records(args.records)
    config = record_service.load_model(args.config, SimConfig) if args.config else None
    seed, source = resolve_seed(args.seed, None)
    method = estimation_service.estimator_manager.resolve(args.method)

    context = estimation_service.context(
        t_meas=config.apparatus.t_meas if config else 0.0,
        t1=config.qubit.t1 if config else None,
        apply_t1_correction=config is not None,
        uncertainty=UncertaintyMode(args.uncertainty),
        bootstrap_seed=seed,
        workers=args.workers or default_workers(),
    )
    estimate = estimation_service.estimate(records, method, context)
    payload = estimate.model_dump(mode="json")

    if args.stdout:
        emit_stdout(payload)
        return 0

    out = args.out or args.records.with_suffix(".estimate.json")
    record_service.write_json(ensure_parent(out), payload)
    digest_inputs = {
        "records_sha256": file_digest(args.records),
        "method": method.value,
        "config": config.model_dump(mode="json") if config else None,
        "uncertainty": context.uncertainty.value,
        "n_resamples": context.n_resamples,
        "seed": seed,
    }
    record_service.write_manifest(record_service.manifest_path(out), RunManifest(
        subcommand="estimate",
        config_digest=config_digest(digest_inputs),
        seed=seed,
        artifact_version=__version__,
        started_at=started_at,
        finished_at=utc_now(),
        outputs=[str(out)],
        details={"seed_source": source, **digest_inputs},
    ))
    logger.info(f"Wrote estimate to {out}")
    return 0
