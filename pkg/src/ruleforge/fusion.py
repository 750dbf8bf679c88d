"""Fusing rule predictions with an external base detector's labels.

Two rule sets patch the base detector from opposite sides: fn_rules flag
anomalies the base missed, fp_rules confirm anomalies the base raised.
Aggregation is pointwise:

    base=0 and fn=1  ->  1   (missed anomaly recovered)
    base=1 and fp=0  ->  0   (false alarm suppressed)
    otherwise        ->  base

The neutral inputs are fn=all-zeros and fp=all-ones; with those,
aggregation is the identity on base.
"""

from __future__ import annotations

import csv
import logging
import random
from dataclasses import dataclass

from .dataset import ABNORMAL, NORMAL, DatasetMode, LabelSequence, MetricSeries
from .errors import DataError, ParseError
from .preprocess import Chunk, chunk_series
from .rules import RuleArtifact
from .runtime import RuleRuntime
from .selection import retrieve_contrastive

logger = logging.getLogger(__name__)

KIND_FN = "fn"
KIND_FP = "fp"


@dataclass(frozen=True)
class BaseDetectorLabels:
    """Per-point labels produced by an external detector for one metric."""

    metric_id: str
    labels: LabelSequence
    source_name: str = "base"


@dataclass(frozen=True)
class FusionBundle:
    """Everything needed to run fused detection on one metric.

    base may be None for rules-only operation; either rule list may be
    empty, in which case that side degenerates to the base labels.
    """

    base: BaseDetectorLabels | None
    fn_rules: tuple[RuleArtifact, ...] = ()
    fp_rules: tuple[RuleArtifact, ...] = ()

    def __post_init__(self) -> None:
        if self.base is None and not self.fn_rules:
            raise DataError("rules-only fusion needs at least one fn rule")


def read_base_labels(
    path, metric_id: str | None = None, source_name: str = "base"
) -> BaseDetectorLabels:
    """Load a base detector's output CSV with header ``timestamp,label``."""
    from pathlib import Path

    path = Path(path)
    labels: list[int] = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty file") from None
        if [h.strip().lower() for h in header] != ["timestamp", "label"]:
            raise ParseError(f"{path}:1: expected header 'timestamp,label', got {header!r}")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != 2:
                raise ParseError(f"{path}:{lineno}: expected 2 columns, got {len(row)}")
            raw = row[1].strip()
            if raw not in ("0", "1"):
                raise ParseError(f"{path}:{lineno}: label must be 0 or 1, got {raw!r}")
            labels.append(int(raw))
    if not labels:
        raise ParseError(f"{path}: no data rows")
    return BaseDetectorLabels(
        metric_id=metric_id or path.stem,
        labels=LabelSequence.of(labels),
        source_name=source_name,
    )


def _check_alignment(series: MetricSeries, base: BaseDetectorLabels) -> None:
    if len(base.labels) != len(series):
        raise DataError(
            f"base labels for {series.metric_id!r} have length {len(base.labels)}, "
            f"series has {len(series)}"
        )
    if series.labels is None:
        raise DataError(f"series {series.metric_id!r} has no ground-truth labels")


def collect_error_samples(
    series: MetricSeries,
    base: BaseDetectorLabels,
    kind: str,
    chunk_size: int,
    mode: DatasetMode = DatasetMode.ONE_FOR_ALL,
    rng: random.Random | None = None,
    contrast_count: int | None = None,
) -> tuple[list[Chunk], list[Chunk]]:
    """Find chunks where the base detector erred, plus contrast chunks.

    fn: chunks containing a point with truth=1 and base=0; contrast is
    drawn from fully true-negative chunks.  fp: chunks containing a point
    with truth=0 and base=1; contrast is drawn from chunks where the base
    detected real anomalies without false alarms.  Returns ([], []) when
    the base made no errors of the requested kind.
    """
    if kind not in (KIND_FN, KIND_FP):
        raise DataError(f"unknown error kind {kind!r}")
    _check_alignment(series, base)

    chunks = chunk_series(series, chunk_size)
    error_chunks: list[Chunk] = []
    pool: list[Chunk] = []
    for chunk in chunks:
        assert chunk.labels is not None
        base_slice = base.labels.slice(chunk.start_offset, chunk.start_offset + len(chunk))
        pairs = list(zip(chunk.labels, base_slice))
        if kind == KIND_FN:
            is_error = any(gt == ABNORMAL and b == NORMAL for gt, b in pairs)
            is_contrast = all(gt == NORMAL and b == NORMAL for gt, b in pairs)
        else:
            is_error = any(gt == NORMAL and b == ABNORMAL for gt, b in pairs)
            is_contrast = any(gt == ABNORMAL and b == ABNORMAL for gt, b in pairs) and not any(
                gt == NORMAL and b == ABNORMAL for gt, b in pairs
            )
        if is_error:
            error_chunks.append(chunk)
        elif is_contrast:
            pool.append(chunk)

    if not error_chunks:
        return [], []
    count = len(error_chunks) if contrast_count is None else contrast_count
    if not pool or count <= 0:
        return error_chunks, []
    contrast = retrieve_contrastive(
        error_chunks, pool, mode, count, rng or random.Random(0)
    )
    return error_chunks, contrast


def aggregate(base: LabelSequence, *, fn: LabelSequence, fp: LabelSequence) -> LabelSequence:
    """Pointwise fusion of base labels with the two rule-set outputs.

    Keyword-only rule arguments because mixing up fn and fp silently
    inverts the result.
    """
    if len(fn) != len(base) or len(fp) != len(base):
        raise DataError(
            f"length mismatch: base={len(base)} fn={len(fn)} fp={len(fp)}"
        )
    fused = []
    for b, f_n, f_p in zip(base, fn, fp):
        if b == NORMAL and f_n == ABNORMAL:
            fused.append(ABNORMAL)
        elif b == ABNORMAL and f_p == NORMAL:
            fused.append(NORMAL)
        else:
            fused.append(b)
    return LabelSequence.of(fused)


def run_rule_set(
    rules: tuple[RuleArtifact, ...], chunk: Chunk, runtime: RuleRuntime
) -> LabelSequence | None:
    """Pointwise OR of all rules in a set; None when any execution fails."""
    combined = [NORMAL] * len(chunk)
    for rule in rules:
        outcome = runtime.execute(rule, chunk)
        if not outcome.ok:
            logger.warning(
                "rule %s failed on %s[%d:%d]: %s: %s",
                rule.rule_id,
                chunk.metric_id,
                chunk.start_offset,
                chunk.start_offset + len(chunk),
                outcome.status,
                outcome.diagnostic.splitlines()[-1] if outcome.diagnostic else "",
            )
            return None
        assert outcome.labels is not None
        for i, label in enumerate(outcome.labels):
            if label == ABNORMAL:
                combined[i] = ABNORMAL
    return LabelSequence.of(combined)


def detect(
    series: MetricSeries,
    bundle: FusionBundle,
    runtime: RuleRuntime,
    chunk_size: int,
) -> LabelSequence:
    """Chunk the series, run both rule sets, and fuse with base labels.

    Without a base detector the fn-rule output is returned directly
    (fp_rules are only meaningful against base alarms).  A chunk where
    rule execution fails falls back to the base labels for that span.
    """
    if bundle.base is not None and len(bundle.base.labels) != len(series):
        raise DataError(
            f"base labels have length {len(bundle.base.labels)}, series has {len(series)}"
        )
    chunks = chunk_series(series, chunk_size)
    out: list[int] = []
    for chunk in chunks:
        span = (chunk.start_offset, chunk.start_offset + len(chunk))
        base_slice = (
            bundle.base.labels.slice(*span)
            if bundle.base is not None
            else LabelSequence.zeros(len(chunk))
        )
        fn_labels = (
            run_rule_set(bundle.fn_rules, chunk, runtime)
            if bundle.fn_rules
            else LabelSequence.zeros(len(chunk))
        )
        fp_labels = (
            run_rule_set(bundle.fp_rules, chunk, runtime)
            if bundle.fp_rules
            else LabelSequence.ones(len(chunk))
        )
        if fn_labels is None or fp_labels is None:
            out.extend(base_slice)
            continue
        if bundle.base is None:
            out.extend(fn_labels)
        else:
            out.extend(aggregate(base_slice, fn=fn_labels, fp=fp_labels))
    return LabelSequence.of(out)
