"""Segment extraction and the four F1 definitions for time-series anomaly
detection.

An incident is a maximal run of consecutive abnormal points.  The four
scores differ in what counts as an instance:

* point_f1      - every data point is an instance.
* point_f1_pa   - point adjustment first: a ground-truth segment with at
                  least one predicted point becomes fully predicted.
* overlap_f1    - each incident is one instance; false positives ignored.
* event_f1_pa   - each incident is one instance for TP/FN, but every
                  predicted point outside all ground-truth segments counts
                  as a false positive.

event_f1_pa is the primary score wherever a single scalar is needed.

Zero-division convention: when tp == fp == fn == 0 (nothing to find, nothing
claimed) precision, recall and F1 are all 1.0; any other zero denominator
makes that ratio 0.
"""

from __future__ import annotations

from dataclasses import dataclass

from .dataset import LabelSequence
from .errors import DataError


@dataclass(frozen=True)
class Segment:
    """Inclusive index range of one incident."""

    start: int
    end: int

    def __post_init__(self) -> None:
        if self.start > self.end:
            raise DataError(f"segment start {self.start} > end {self.end}")

    def __len__(self) -> int:
        return self.end - self.start + 1

    def covers(self, index: int) -> bool:
        return self.start <= index <= self.end


@dataclass(frozen=True)
class MetricScores:
    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    f1: float

    def as_dict(self) -> dict:
        return {
            "tp": self.tp,
            "fp": self.fp,
            "fn": self.fn,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MetricScores":
        return cls(
            tp=int(d["tp"]), fp=int(d["fp"]), fn=int(d["fn"]),
            precision=float(d["precision"]), recall=float(d["recall"]),
            f1=float(d["f1"]),
        )


METHOD_NAMES = ("point_f1", "point_f1_pa", "overlap_f1", "event_f1_pa")


@dataclass(frozen=True)
class EvaluationReport:
    """Confusion counts and ratios for each of the four definitions."""

    point_f1: MetricScores
    point_f1_pa: MetricScores
    overlap_f1: MetricScores
    event_f1_pa: MetricScores

    def as_dict(self) -> dict:
        return {name: getattr(self, name).as_dict() for name in METHOD_NAMES}

    @classmethod
    def from_dict(cls, d: dict) -> "EvaluationReport":
        return cls(**{name: MetricScores.from_dict(d[name]) for name in METHOD_NAMES})

    @property
    def primary_f1(self) -> float:
        return self.event_f1_pa.f1


def _scores(tp: int, fp: int, fn: int) -> MetricScores:
    if tp == 0 and fp == 0 and fn == 0:
        return MetricScores(0, 0, 0, 1.0, 1.0, 1.0)
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return MetricScores(tp, fp, fn, precision, recall, f1)


def _check_lengths(gt: LabelSequence, pred: LabelSequence) -> None:
    if len(gt) != len(pred):
        raise DataError(f"label length mismatch: gt {len(gt)} vs pred {len(pred)}")


def extract_segments(labels: LabelSequence) -> list[Segment]:
    """Maximal runs of 1s as inclusive index ranges, ascending."""
    segments: list[Segment] = []
    start = None
    for i, lab in enumerate(labels):
        if lab == 1 and start is None:
            start = i
        elif lab == 0 and start is not None:
            segments.append(Segment(start, i - 1))
            start = None
    if start is not None:
        segments.append(Segment(start, len(labels) - 1))
    return segments


def adjust_predictions(gt: LabelSequence, pred: LabelSequence) -> LabelSequence:
    """Point adjustment: fill every ground-truth segment that contains at
    least one predicted point."""
    _check_lengths(gt, pred)
    adjusted = list(pred)
    for seg in extract_segments(gt):
        if any(pred[i] == 1 for i in range(seg.start, seg.end + 1)):
            for i in range(seg.start, seg.end + 1):
                adjusted[i] = 1
    return LabelSequence.of(adjusted)


def point_f1(gt: LabelSequence, pred: LabelSequence) -> MetricScores:
    _check_lengths(gt, pred)
    tp = sum(1 for g, p in zip(gt, pred) if g == 1 and p == 1)
    fp = sum(1 for g, p in zip(gt, pred) if g == 0 and p == 1)
    fn = sum(1 for g, p in zip(gt, pred) if g == 1 and p == 0)
    return _scores(tp, fp, fn)


def point_f1_pa(gt: LabelSequence, pred: LabelSequence) -> MetricScores:
    return point_f1(gt, adjust_predictions(gt, pred))


def overlap_f1(gt: LabelSequence, pred: LabelSequence) -> MetricScores:
    _check_lengths(gt, pred)
    segments = extract_segments(gt)
    tp = sum(
        1 for seg in segments
        if any(pred[i] == 1 for i in range(seg.start, seg.end + 1))
    )
    return _scores(tp, 0, len(segments) - tp)


def event_f1_pa(gt: LabelSequence, pred: LabelSequence) -> MetricScores:
    _check_lengths(gt, pred)
    segments = extract_segments(gt)
    tp = sum(
        1 for seg in segments
        if any(pred[i] == 1 for i in range(seg.start, seg.end + 1))
    )
    fn = len(segments) - tp
    fp = sum(
        1 for i, p in enumerate(pred)
        if p == 1 and not any(seg.covers(i) for seg in segments)
    )
    return _scores(tp, fp, fn)


def evaluate_all(gt: LabelSequence, pred: LabelSequence) -> EvaluationReport:
    return EvaluationReport(
        point_f1=point_f1(gt, pred),
        point_f1_pa=point_f1_pa(gt, pred),
        overlap_f1=overlap_f1(gt, pred),
        event_f1_pa=event_f1_pa(gt, pred),
    )


def macro_average(reports: dict[str, EvaluationReport]) -> dict:
    """Unweighted per-metric mean of precision/recall/F1 for each definition,
    plus summed raw counts."""
    if not reports:
        raise DataError("no reports to average")
    out: dict = {}
    for name in METHOD_NAMES:
        entries = [getattr(r, name) for r in reports.values()]
        n = len(entries)
        out[name] = {
            "tp": sum(e.tp for e in entries),
            "fp": sum(e.fp for e in entries),
            "fn": sum(e.fn for e in entries),
            "precision": sum(e.precision for e in entries) / n,
            "recall": sum(e.recall for e in entries) / n,
            "f1": sum(e.f1 for e in entries) / n,
        }
    return out
