import json
import logging
import os
import secrets
import sys
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Optional, Tuple

from app.errors import UsageError

logger = logging.getLogger(__name__)


def default_workers() -> int:
    return max(1, int(os.getenv("THERMOMETRY_WORKERS", os.cpu_count() or 1)))


def resolve_seed(flag: Optional[int], configured: Optional[int]) -> Tuple[int, str]:
    """Seed precedence: command-line flag, then the config file, then a fresh random draw"""
    if flag is not None:
        if not 0 <= flag < 2**64:
            raise UsageError(f"seed must lie in [0, 2^64), got {flag}")
        return flag, "flag"
    if configured is not None:
        return configured, "config"
    seed = secrets.randbits(63)
    logger.info(f"No seed given; drew {seed}")
    return seed, "random"


def utc_now() -> datetime:
    return datetime.now(timezone.utc)


def ensure_parent(path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def emit_stdout(payload: Any) -> None:
    sys.stdout.write(json.dumps(payload, indent=2) + "\n")
    sys.stdout.flush()
