"""Dataset-mode selection and contrastive example retrieval.

Long metrics (at least 10 training chunks) earn their own rules
(one-for-one); short ones share a rule across the dataset or group
(one-for-all).  Contrastive chunks give the detection prompt normal
context to compare error samples against.
"""

from __future__ import annotations

import math
import random
import statistics
from dataclasses import dataclass

from .dataset import DatasetMode, MetricSeries
from .errors import DataError
from .preprocess import Chunk, chunk_series

#: Minimum training-chunk count for a metric to train alone.
ONE_FOR_ONE_THRESHOLD = 10


@dataclass(frozen=True)
class TrainingUnit:
    """One rule-training target: a single metric, or a group sharing a rule."""

    unit_id: str
    series: tuple[MetricSeries, ...]

    def __post_init__(self) -> None:
        if not self.series:
            raise DataError(f"unit {self.unit_id!r} has no series")


@dataclass(frozen=True)
class SelectionPlan:
    mode: DatasetMode
    units: tuple[TrainingUnit, ...]

    def __post_init__(self) -> None:
        seen: set[str] = set()
        for unit in self.units:
            for series in unit.series:
                if series.metric_id in seen:
                    raise DataError(f"metric {series.metric_id!r} appears in two units")
                seen.add(series.metric_id)


def count_chunks(series: MetricSeries, chunk_size: int) -> int:
    try:
        return len(chunk_series(series, chunk_size))
    except DataError:
        return 0


def choose_mode(
    series: MetricSeries, chunk_size: int, override: DatasetMode | None = None
) -> DatasetMode:
    """one-for-one iff the series yields at least 10 chunks; an explicit
    override always wins."""
    if override is not None and override != DatasetMode.AUTO:
        return override
    if count_chunks(series, chunk_size) >= ONE_FOR_ONE_THRESHOLD:
        return DatasetMode.ONE_FOR_ONE
    return DatasetMode.ONE_FOR_ALL


def build_plan(
    dataset: list[MetricSeries], mode: DatasetMode, chunk_size: int
) -> SelectionPlan:
    if not dataset:
        raise DataError("empty dataset")
    if mode == DatasetMode.AUTO:
        # Resolve per-dataset with the first (sorted) metric as representative.
        mode = choose_mode(dataset[0], chunk_size)
    if mode == DatasetMode.ONE_FOR_ONE:
        units = tuple(TrainingUnit(s.metric_id, (s,)) for s in dataset)
    else:
        grouped: dict[str, list[MetricSeries]] = {}
        for series in dataset:
            grouped.setdefault(series.group_id or "all", []).append(series)
        units = tuple(
            TrainingUnit(group, tuple(members)) for group, members in sorted(grouped.items())
        )
    return SelectionPlan(mode=mode, units=units)


def chunk_stats(chunk: Chunk) -> tuple[float, float]:
    return statistics.fmean(chunk.values), statistics.pstdev(chunk.values)


def retrieve_contrastive(
    error_chunks: list[Chunk],
    pool: list[Chunk],
    mode: DatasetMode,
    count: int,
    rng: random.Random,
) -> list[Chunk]:
    """Pick `count` pool chunks to contrast with the error chunks.

    one-for-one: uniform random (seeded).  one-for-all: nearest to the
    error set by Euclidean distance in (mean, std) space, ties kept in
    pool order.  More chunks requested than available returns the pool.
    """
    if not pool:
        raise DataError("contrastive pool is empty")
    if count <= 0:
        return []
    if count >= len(pool):
        return list(pool)
    if mode == DatasetMode.ONE_FOR_ONE:
        return rng.sample(pool, count)

    merged: list[float] = []
    for chunk in error_chunks:
        merged.extend(chunk.values)
    if not merged:
        raise DataError("no error values to compare against")
    mu = statistics.fmean(merged)
    sigma = statistics.pstdev(merged)
    scored = []
    for index, chunk in enumerate(pool):
        mu_c, sigma_c = chunk_stats(chunk)
        distance = math.sqrt((mu_c - mu) ** 2 + (sigma_c - sigma) ** 2)
        scored.append((distance, index))
    scored.sort()
    return [pool[index] for _, index in scored[:count]]
