"""Scaling, re-indexing, chunking, and prompt-ready text rendering of series.

Values shown to agents are rounded to a significant-figure budget and can be
digit-spaced so number tokens align with single digits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal

from .dataset import LabelSequence, MetricSeries
from .errors import DataError

# Chunk-size presets that worked well on the public benchmarks.
CHUNK_SIZE_PRESETS = {"kpi": 2500, "yahoo": 500, "internal": 1000}


@dataclass(frozen=True)
class PreprocessConfig:
    significant_figures: int = 4
    chunk_size: int = 500
    digit_spacing: bool = False

    def __post_init__(self) -> None:
        if self.significant_figures < 1:
            raise DataError("significant_figures must be >= 1")
        if self.chunk_size < 2:
            raise DataError("chunk_size must be >= 2")


@dataclass(frozen=True)
class Chunk:
    """A contiguous, re-indexed window of a series; the unit fed to agents
    and rules.  Row indices always restart at 0."""

    metric_id: str
    start_offset: int
    values: tuple[float, ...]
    labels: LabelSequence | None = None

    def __post_init__(self) -> None:
        if self.labels is not None and len(self.labels) != len(self.values):
            raise DataError(
                f"chunk {self.metric_id!r}@{self.start_offset}: label/value length mismatch"
            )

    def __len__(self) -> int:
        return len(self.values)

    def rows(self) -> list[tuple[float, int]]:
        return [(v, i) for i, v in enumerate(self.values)]

    def require_labels(self) -> LabelSequence:
        if self.labels is None:
            raise DataError(f"chunk {self.metric_id!r}@{self.start_offset} has no labels")
        return self.labels


def scale_to_sig_figs(values, figures: int):
    """Round each value to ``figures`` significant digits, half away from zero."""
    if figures < 1:
        raise DataError("figures must be >= 1")
    out = []
    for v in values:
        if not math.isfinite(v):
            raise DataError(f"non-finite value {v!r}")
        if v == 0:
            out.append(0.0)
            continue
        exponent = math.floor(math.log10(abs(v)))
        quantum = Decimal(1).scaleb(exponent - figures + 1)
        out.append(float(Decimal(repr(v)).quantize(quantum, rounding=ROUND_HALF_UP)))
    return out


def reindex(series: MetricSeries) -> MetricSeries:
    """Drop timestamps; position order becomes the index."""
    if series.timestamps is None:
        return series
    return MetricSeries(
        metric_id=series.metric_id,
        values=series.values,
        timestamps=None,
        labels=series.labels,
        group_id=series.group_id,
    )


def chunk_series(series: MetricSeries, size: int) -> list[Chunk]:
    """Cut into consecutive non-overlapping windows of ``size`` points.

    A final remainder shorter than 2 points is merged into the previous
    chunk (so the last chunk may carry size+1 points); a remainder of 2 or
    more stays its own chunk.
    """
    if size < 2:
        raise DataError(f"chunk size must be >= 2, got {size}")
    n = len(series)
    if n < 2:
        raise DataError(f"metric {series.metric_id!r}: need at least 2 points, got {n}")

    bounds: list[tuple[int, int]] = []
    start = 0
    while start < n:
        stop = min(start + size, n)
        if n - stop < 2 and n - stop > 0:
            stop = n
        bounds.append((start, stop))
        start = stop

    labels = series.labels
    return [
        Chunk(
            metric_id=series.metric_id,
            start_offset=lo,
            values=series.values[lo:hi],
            labels=None if labels is None else labels.slice(lo, hi),
        )
        for lo, hi in bounds
    ]


def format_value(v: float) -> str:
    """Render a float compactly: integral values without the trailing .0.

    repr() otherwise, so parsing the text recovers the exact float;
    negative zero keeps its sign for the same reason.
    """
    if v == int(v) and abs(v) < 1e16 and not (v == 0.0 and math.copysign(1.0, v) < 0):
        return str(int(v))
    return repr(v)


def space_digits(text: str) -> str:
    """Put a space after every character except a leading sign, so each
    digit becomes its own token ("1234" -> "1 2 3 4", "-0.5" -> "-0 . 5")."""
    parts = []
    for ch in text:
        if ch in "+-":
            parts.append(ch)
        else:
            parts.append(ch + " ")
    return "".join(parts).rstrip()


def render_chunk_text(chunk: Chunk, config: PreprocessConfig) -> str:
    """One line per row: ``index<TAB>value``, deterministic.

    Values are rendered as given; apply scale_to_sig_figs upstream.  Keeping
    rendering scale-free makes it injective on distinct chunks.
    """
    if len(chunk) == 0:
        raise DataError("cannot render an empty chunk")
    lines = []
    for i, v in enumerate(chunk.values):
        text = format_value(v)
        if config.digit_spacing:
            text = space_digits(text)
        lines.append(f"{i}\t{text}")
    return "\n".join(lines)


def scale_series(series: MetricSeries, figures: int) -> MetricSeries:
    """scale_to_sig_figs applied to a whole series."""
    return MetricSeries(
        metric_id=series.metric_id,
        values=tuple(scale_to_sig_figs(series.values, figures)),
        timestamps=series.timestamps,
        labels=series.labels,
        group_id=series.group_id,
    )
