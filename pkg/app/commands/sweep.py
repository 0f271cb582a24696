import argparse
import logging
from pathlib import Path

from app import __version__
from app.commands.common import default_workers, resolve_seed, utc_now
from app.models import RunManifest, SweepSpec
from app.services.estimation_service import estimation_service
from app.services.record_service import config_digest, file_digest, record_service
from app.services.sweep_service import sweep_service

logger = logging.getLogger(__name__)


def add_parser(subparsers) -> None:
    parser = subparsers.add_parser("sweep", help="run a harness experiment from a sweep spec")
    parser.add_argument("--spec", required=True, type=Path, help="SweepSpec JSON file")
    parser.add_argument("--out", required=True, type=Path, help="output directory")
    parser.add_argument("--seed", type=int, help="overrides the seed in the spec")
    parser.add_argument("--workers", type=int, default=None, help="points run in parallel")
    parser.set_defaults(handler=handle)


def handle(args: argparse.Namespace) -> int:
    started_at = utc_now()
    spec = record_service.load_model(args.spec, SweepSpec)
    seed, source = resolve_seed(args.seed, spec.seed)
    spec = spec.model_copy(update={"seed": seed})
    workers = args.workers or default_workers()

    result = sweep_service.run(spec, seed=seed, workers=workers)
    csv_path = record_service.write_sweep(result, args.out)
    manifest_path = record_service.sweep_manifest_path(args.out)

    n_resamples = estimation_service.default_resamples
    record_service.write_manifest(manifest_path, RunManifest(
        subcommand="sweep",
        config_digest=config_digest({"spec": spec.model_dump(mode="json"), "n_resamples": n_resamples}),
        seed=seed,
        artifact_version=__version__,
        started_at=started_at,
        finished_at=utc_now(),
        outputs=[str(csv_path), str(manifest_path)],
        details={
            "seed_source": source,
            "experiment": result.experiment.value,
            "spec": spec.model_dump(mode="json"),
            "n_resamples": n_resamples,
            "rows": [
                {"x_name": r.x_name, "x_value": r.x_value, "seeds": r.seeds, "reference": r.reference}
                for r in result.rows
            ],
            "summary": result.summary,
            "sweep_sha256": file_digest(csv_path),
        },
    ))
    return 0
