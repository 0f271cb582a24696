from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List

import numpy as np

from app.errors import UsageError
from app.models import EstimationContext, RecordSet
from app.services.estimators.base import Estimator
from app.services.streams import Stage, substream

MIN_RESAMPLES = 100
MIN_RECORDS = 10


def _strata(records: RecordSet) -> List[np.ndarray]:
    labels = records.group_keys()
    return [np.flatnonzero(labels == label) for label in np.unique(labels)]


def bootstrap_statistic(
    records: RecordSet,
    statistic: Callable[[RecordSet], float],
    n_resamples: int,
    seed: int,
    workers: int = 1,
) -> float:
    """Standard deviation of `statistic` over resamples with replacement.

    Resampling is stratified by prep, rabi angle and variant, so every resample
    keeps the protocol's composition. Resample i draws from its own substream,
    which makes the result independent of `workers`.
    """
    if n_resamples < MIN_RESAMPLES:
        raise UsageError(f"the bootstrap needs at least {MIN_RESAMPLES} resamples, got {n_resamples}")
    if len(records) < MIN_RECORDS:
        raise UsageError(f"the bootstrap needs at least {MIN_RECORDS} records, got {len(records)}")
    strata = _strata(records)

    def resample(i: int) -> float:
        rng = substream(seed, Stage.BOOTSTRAP, i)
        index = np.concatenate([members[rng.integers(0, len(members), len(members))] for members in strata])
        return statistic(records.take(index))

    if workers <= 1:
        values = [resample(i) for i in range(n_resamples)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            values = list(pool.map(resample, range(n_resamples)))
    return float(np.std(values, ddof=1))


def bootstrap_std(
    records: RecordSet,
    estimator: Estimator,
    context: EstimationContext,
    n_resamples: int,
    seed: int,
) -> float:
    return bootstrap_statistic(
        records,
        lambda sample: estimator.point_estimate(sample, context),
        n_resamples,
        seed,
        context.workers,
    )
