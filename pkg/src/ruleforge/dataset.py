"""Dataset ingestion, canonical series/label types, and train/test splitting.

CSV contract: header ``timestamp,value,label`` (label column optional for
detection-time input), one file per metric, filename stem is the metric id.
An optional ``groups.csv`` maps ``metric_id,group_id``.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

from .errors import DataError, ParseError

NORMAL = 0
ABNORMAL = 1


@dataclass(frozen=True)
class LabelSequence:
    """Binary anomaly labels; every element is 0 (normal) or 1 (abnormal)."""

    labels: tuple[int, ...]

    def __post_init__(self) -> None:
        for i, lab in enumerate(self.labels):
            if lab not in (NORMAL, ABNORMAL):
                raise DataError(f"label at position {i} is {lab!r}, expected 0 or 1")

    @classmethod
    def of(cls, labels: Iterable[int]) -> "LabelSequence":
        return cls(tuple(int(x) for x in labels))

    @classmethod
    def zeros(cls, n: int) -> "LabelSequence":
        return cls((0,) * n)

    @classmethod
    def ones(cls, n: int) -> "LabelSequence":
        return cls((1,) * n)

    def __len__(self) -> int:
        return len(self.labels)

    def __iter__(self) -> Iterator[int]:
        return iter(self.labels)

    def __getitem__(self, i: int) -> int:
        return self.labels[i]

    def count_abnormal(self) -> int:
        return sum(self.labels)

    def slice(self, start: int, stop: int) -> "LabelSequence":
        return LabelSequence(self.labels[start:stop])

    def concat(self, other: "LabelSequence") -> "LabelSequence":
        return LabelSequence(self.labels + other.labels)


@dataclass(frozen=True)
class MetricSeries:
    """One labeled univariate time series.

    Timestamps are optional; when absent, index order defines time.  Labels
    are required at training time and optional at detection time.
    """

    metric_id: str
    values: tuple[float, ...]
    timestamps: tuple[int, ...] | None = None
    labels: LabelSequence | None = None
    group_id: str | None = None

    def __post_init__(self) -> None:
        for i, v in enumerate(self.values):
            if not math.isfinite(v):
                raise DataError(
                    f"metric {self.metric_id!r}: non-finite value {v!r} at index {i}"
                )
        if self.timestamps is not None:
            if len(self.timestamps) != len(self.values):
                raise DataError(
                    f"metric {self.metric_id!r}: {len(self.timestamps)} timestamps "
                    f"for {len(self.values)} values"
                )
            for a, b in zip(self.timestamps, self.timestamps[1:]):
                if b <= a:
                    raise DataError(
                        f"metric {self.metric_id!r}: timestamps not strictly increasing"
                    )
        if self.labels is not None and len(self.labels) != len(self.values):
            raise DataError(
                f"metric {self.metric_id!r}: {len(self.labels)} labels "
                f"for {len(self.values)} values"
            )

    def __len__(self) -> int:
        return len(self.values)

    def require_labels(self) -> LabelSequence:
        if self.labels is None:
            raise DataError(f"metric {self.metric_id!r} has no labels")
        return self.labels

    def slice(self, start: int, stop: int) -> "MetricSeries":
        ts = None if self.timestamps is None else self.timestamps[start:stop]
        return MetricSeries(
            metric_id=self.metric_id,
            values=self.values[start:stop],
            timestamps=ts,
            labels=None if self.labels is None else self.labels.slice(start, stop),
            group_id=self.group_id,
        )


class DatasetMode(enum.Enum):
    ONE_FOR_ONE = "one-for-one"
    ONE_FOR_ALL = "one-for-all"
    AUTO = "auto"


@dataclass(frozen=True)
class DatasetSpec:
    source: Path
    split_ratio: float = 0.7
    mode: DatasetMode = DatasetMode.AUTO
    group_key: str | None = None

    def __post_init__(self) -> None:
        if not (0.0 < self.split_ratio < 1.0):
            raise DataError(f"split_ratio must be in (0, 1), got {self.split_ratio}")


def _parse_row(path: Path, lineno: int, row: Sequence[str], has_label: bool):
    expected = 3 if has_label else 2
    if len(row) != expected:
        raise ParseError(f"{path}:{lineno}: expected {expected} fields, got {len(row)}")
    ts_text = row[0].strip()
    try:
        ts = int(ts_text) if ts_text else None
    except ValueError:
        raise ParseError(f"{path}:{lineno}: bad timestamp {row[0]!r}") from None
    try:
        value = float(row[1])
    except ValueError:
        raise ParseError(f"{path}:{lineno}: bad value {row[1]!r}") from None
    if not math.isfinite(value):
        raise DataError(f"{path}:{lineno}: non-finite value {row[1]!r}")
    label = None
    if has_label:
        lab_text = row[2].strip()
        try:
            label = int(lab_text)
        except ValueError:
            raise ParseError(f"{path}:{lineno}: bad label {row[2]!r}") from None
        if label not in (NORMAL, ABNORMAL):
            raise DataError(f"{path}:{lineno}: label must be 0 or 1, got {label}")
    return ts, value, label


def read_metric_csv(path: Path, require_labels: bool = True) -> MetricSeries:
    """Read one per-metric CSV; the filename stem is the metric id."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: no data rows") from None
        header = [h.strip().lower() for h in header]
        if header == ["timestamp", "value", "label"]:
            has_label = True
        elif header == ["timestamp", "value"]:
            has_label = False
        else:
            raise ParseError(f"{path}:1: unrecognized header {header!r}")
        if require_labels and not has_label:
            raise DataError(f"{path}: label column required but absent")

        timestamps: list[int] = []
        values: list[float] = []
        labels: list[int] = []
        saw_ts = saw_empty_ts = False
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            ts, value, label = _parse_row(path, lineno, row, has_label)
            if ts is None:
                saw_empty_ts = True
            else:
                saw_ts = True
                timestamps.append(ts)
            values.append(value)
            if label is not None:
                labels.append(label)

    if not values:
        raise DataError(f"{path}: no data rows")
    if saw_ts and saw_empty_ts:
        raise ParseError(f"{path}: mixed empty and non-empty timestamps")
    return MetricSeries(
        metric_id=path.stem,
        values=tuple(values),
        timestamps=tuple(timestamps) if saw_ts else None,
        labels=LabelSequence.of(labels) if has_label else None,
    )


def write_metric_csv(series: MetricSeries, path: Path) -> None:
    """Inverse of read_metric_csv; floats are written with repr so a
    re-read reproduces the series bit-exactly."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        if series.labels is not None:
            writer.writerow(["timestamp", "value", "label"])
            for i, v in enumerate(series.values):
                ts = "" if series.timestamps is None else series.timestamps[i]
                writer.writerow([ts, repr(v), series.labels[i]])
        else:
            writer.writerow(["timestamp", "value"])
            for i, v in enumerate(series.values):
                ts = "" if series.timestamps is None else series.timestamps[i]
                writer.writerow([ts, repr(v)])


def _read_groups(path: Path) -> dict[str, str]:
    groups: dict[str, str] = {}
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip().lower() for h in header] != ["metric_id", "group_id"]:
            raise ParseError(f"{path}:1: expected header metric_id,group_id")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise ParseError(f"{path}:{lineno}: expected 2 fields, got {len(row)}")
            groups[row[0].strip()] = row[1].strip()
    return groups


def load_dataset(path: Path, spec: DatasetSpec | None = None,
                 require_labels: bool = True) -> list[MetricSeries]:
    """Load every per-metric CSV under ``path`` (or a single CSV file).

    Returns one MetricSeries per metric id, sorted by metric id.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"dataset path does not exist: {path}")
    if path.is_file():
        return [read_metric_csv(path, require_labels=require_labels)]

    files = sorted(p for p in path.glob("*.csv") if p.name != "groups.csv")
    if not files:
        raise DataError(f"no metric CSV files under {path}")
    groups_file = path / "groups.csv"
    groups = _read_groups(groups_file) if groups_file.exists() else {}

    out: list[MetricSeries] = []
    for f in files:
        series = read_metric_csv(f, require_labels=require_labels)
        gid = groups.get(series.metric_id)
        if gid is not None:
            series = MetricSeries(
                metric_id=series.metric_id,
                values=series.values,
                timestamps=series.timestamps,
                labels=series.labels,
                group_id=gid,
            )
        out.append(series)
    out.sort(key=lambda s: s.metric_id)
    return out


def split_train_test(series: MetricSeries, ratio: float) -> tuple[MetricSeries, MetricSeries]:
    """Split into (train, test): the first floor(ratio * N) points train, the
    rest test.  Either side coming out empty is an error."""
    if not (0.0 < ratio < 1.0):
        raise DataError(f"split ratio must be in (0, 1), got {ratio}")
    n = len(series)
    if n == 0:
        raise DataError(f"metric {series.metric_id!r} is empty")
    cut = math.floor(ratio * n + 1e-9)
    if cut == 0 or cut == n:
        raise DataError(
            f"metric {series.metric_id!r}: split ratio {ratio} on {n} points "
            "produces an empty partition"
        )
    return series.slice(0, cut), series.slice(cut, n)
