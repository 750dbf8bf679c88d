"""Native interpreter for the threshold-dsl rule dialect.

A dsl rule is a JSON document:

    {"rules": [
        {"kind": "zscore", "threshold": 3.0},
        {"kind": "diff-spike", "threshold": 4000.0},
        {"kind": "range-run", "low": 2000.0, "high": 15000.0, "run": 10}
    ]}

Each entry flags a subset of points; the rule as a whole is their
pointwise OR.  Entries may carry a "comment" string which is ignored at
execution time.  Schema violations raise DslSyntaxError so callers can
map them onto the same failure class as unparseable script rules.
"""

from __future__ import annotations

import json
import math
import statistics
from dataclasses import dataclass

from .errors import RuleforgeError


class DslSyntaxError(RuleforgeError):
    """The dsl document is not valid JSON or violates the schema."""


@dataclass(frozen=True)
class ZScoreCondition:
    threshold: float

    def flags(self, values: tuple[float, ...]) -> list[int]:
        mean = statistics.fmean(values)
        std = statistics.pstdev(values)
        if std == 0.0:
            return [0] * len(values)
        return [1 if abs(v - mean) > self.threshold * std else 0 for v in values]


@dataclass(frozen=True)
class DiffSpikeCondition:
    threshold: float

    def flags(self, values: tuple[float, ...]) -> list[int]:
        out = [0] * len(values)
        for i in range(1, len(values)):
            if abs(values[i] - values[i - 1]) > self.threshold:
                out[i] = 1
        return out


@dataclass(frozen=True)
class RangeRunCondition:
    low: float
    high: float
    run: int

    def flags(self, values: tuple[float, ...]) -> list[int]:
        out = [0] * len(values)
        i = 0
        n = len(values)
        while i < n:
            if values[i] < self.low or values[i] > self.high:
                j = i
                while j < n and (values[j] < self.low or values[j] > self.high):
                    j += 1
                if j - i >= self.run:
                    for k in range(i, j):
                        out[k] = 1
                i = j
            else:
                i += 1
        return out


Condition = ZScoreCondition | DiffSpikeCondition | RangeRunCondition

_SCHEMAS = {
    "zscore": {"threshold"},
    "diff-spike": {"threshold"},
    "range-run": {"low", "high", "run"},
}


def _number(entry: dict, key: str, index: int) -> float:
    value = entry[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise DslSyntaxError(f"rules[{index}].{key}: expected a number, got {value!r}")
    value = float(value)
    if not math.isfinite(value):
        raise DslSyntaxError(f"rules[{index}].{key}: must be finite")
    return value


def parse_dsl(source: str) -> tuple[Condition, ...]:
    """Parse and validate a dsl document into executable conditions."""
    try:
        doc = json.loads(source)
    except json.JSONDecodeError as exc:
        raise DslSyntaxError(f"not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or set(doc) != {"rules"}:
        raise DslSyntaxError('top level must be an object with a single "rules" key')
    entries = doc["rules"]
    if not isinstance(entries, list) or not entries:
        raise DslSyntaxError('"rules" must be a nonempty array')

    conditions: list[Condition] = []
    for i, entry in enumerate(entries):
        if not isinstance(entry, dict):
            raise DslSyntaxError(f"rules[{i}]: expected an object")
        kind = entry.get("kind")
        if kind not in _SCHEMAS:
            raise DslSyntaxError(f"rules[{i}]: unknown kind {kind!r}")
        allowed = _SCHEMAS[kind] | {"kind", "comment"}
        extra = set(entry) - allowed
        if extra:
            raise DslSyntaxError(f"rules[{i}]: unexpected keys {sorted(extra)}")
        missing = _SCHEMAS[kind] - set(entry)
        if missing:
            raise DslSyntaxError(f"rules[{i}]: missing keys {sorted(missing)}")
        if "comment" in entry and not isinstance(entry["comment"], str):
            raise DslSyntaxError(f"rules[{i}].comment: expected a string")

        if kind == "zscore":
            conditions.append(ZScoreCondition(_number(entry, "threshold", i)))
        elif kind == "diff-spike":
            conditions.append(DiffSpikeCondition(_number(entry, "threshold", i)))
        else:
            low = _number(entry, "low", i)
            high = _number(entry, "high", i)
            if low > high:
                raise DslSyntaxError(f"rules[{i}]: low must not exceed high")
            run = entry["run"]
            if isinstance(run, bool) or not isinstance(run, int) or run < 1:
                raise DslSyntaxError(f"rules[{i}].run: expected an integer >= 1")
            conditions.append(RangeRunCondition(low, high, run))
    return tuple(conditions)


def evaluate_dsl(conditions: tuple[Condition, ...], values: tuple[float, ...]) -> list[int]:
    """Pointwise OR over all condition flag vectors."""
    if not values:
        return []
    out = [0] * len(values)
    for condition in conditions:
        for i, flag in enumerate(condition.flags(values)):
            if flag:
                out[i] = 1
    return out


def run_dsl(source: str, values: tuple[float, ...]) -> list[int]:
    return evaluate_dsl(parse_dsl(source), values)
