from __future__ import annotations

import math
import random
import statistics

import pytest

from ruleforge.dsl import (
    DiffSpikeCondition,
    DslSyntaxError,
    RangeRunCondition,
    ZScoreCondition,
    parse_dsl,
    run_dsl,
)


def dsl(*entries) -> str:
    import json

    return json.dumps({"rules": list(entries)})


# hand-written oracle for the whole dialect, combined by OR
def oracle(entries, values):
    out = [0] * len(values)
    for entry in entries:
        if entry["kind"] == "zscore":
            mean = sum(values) / len(values)
            var = sum((v - mean) ** 2 for v in values) / len(values)
            std = math.sqrt(var)
            if std > 0:
                for i, v in enumerate(values):
                    if abs(v - mean) > entry["threshold"] * std:
                        out[i] = 1
        elif entry["kind"] == "diff-spike":
            for i in range(1, len(values)):
                if abs(values[i] - values[i - 1]) > entry["threshold"]:
                    out[i] = 1
        else:
            flagged = set()
            run = []
            for i, v in enumerate(values):
                if v < entry["low"] or v > entry["high"]:
                    run.append(i)
                else:
                    if len(run) >= entry["run"]:
                        flagged.update(run)
                    run = []
            if len(run) >= entry["run"]:
                flagged.update(run)
            for i in flagged:
                out[i] = 1
    return out


def test_zscore_flags_spike():
    values = tuple([10.0] * 49 + [1000.0])
    labels = run_dsl(dsl({"kind": "zscore", "threshold": 3.0}), values)
    assert labels == oracle([{"kind": "zscore", "threshold": 3.0}], values)
    assert labels.index(1) == 49 and sum(labels) == 1


def test_zscore_constant_series_flags_nothing():
    values = (5.0,) * 30
    assert run_dsl(dsl({"kind": "zscore", "threshold": 0.1}), values) == [0] * 30


def test_diff_spike():
    values = (1.0, 2.0, 80.0, 81.0, 3.0)
    labels = run_dsl(dsl({"kind": "diff-spike", "threshold": 50.0}), values)
    assert labels == [0, 0, 1, 0, 1]


def test_range_run_needs_full_run():
    entry = {"kind": "range-run", "low": 0.0, "high": 10.0, "run": 3}
    short_run = (5.0, 20.0, 20.0, 5.0, 5.0)
    assert run_dsl(dsl(entry), short_run) == [0, 0, 0, 0, 0]
    long_run = (5.0, 20.0, 20.0, 20.0, 5.0)
    assert run_dsl(dsl(entry), long_run) == [0, 1, 1, 1, 0]
    tail_run = (5.0, 5.0, 20.0, 20.0, 20.0)
    assert run_dsl(dsl(entry), tail_run) == [0, 0, 1, 1, 1]


def test_or_combination_matches_oracle_on_random_data():
    rng = random.Random(99)
    entries = [
        {"kind": "zscore", "threshold": 2.0},
        {"kind": "diff-spike", "threshold": 30.0},
        {"kind": "range-run", "low": 10.0, "high": 90.0, "run": 2},
    ]
    source = dsl(*entries)
    for _ in range(50):
        values = tuple(rng.uniform(0.0, 100.0) for _ in range(40))
        assert run_dsl(source, values) == oracle(entries, values)


def test_parse_validations():
    with pytest.raises(DslSyntaxError):
        parse_dsl("not json")
    with pytest.raises(DslSyntaxError):
        parse_dsl('{"rules": []}')
    with pytest.raises(DslSyntaxError):
        parse_dsl('{"other": 1}')
    with pytest.raises(DslSyntaxError):
        parse_dsl(dsl({"kind": "nope", "threshold": 1}))
    with pytest.raises(DslSyntaxError):
        parse_dsl(dsl({"kind": "zscore"}))
    with pytest.raises(DslSyntaxError):
        parse_dsl(dsl({"kind": "zscore", "threshold": 1, "extra": 2}))
    with pytest.raises(DslSyntaxError):
        parse_dsl(dsl({"kind": "zscore", "threshold": "high"}))
    with pytest.raises(DslSyntaxError):
        parse_dsl(dsl({"kind": "range-run", "low": 5, "high": 1, "run": 2}))
    with pytest.raises(DslSyntaxError):
        parse_dsl(dsl({"kind": "range-run", "low": 0, "high": 1, "run": 0}))
    with pytest.raises(DslSyntaxError):
        parse_dsl(dsl({"kind": "zscore", "threshold": 1, "comment": 5}))


def test_parse_accepts_comments():
    conditions = parse_dsl(dsl({"kind": "zscore", "threshold": 2.5, "comment": "why"}))
    assert conditions == (ZScoreCondition(2.5),)


def test_condition_types():
    assert DiffSpikeCondition(5.0).flags((0.0, 10.0)) == [0, 1]
    assert RangeRunCondition(0.0, 1.0, 1).flags((2.0,)) == [1]
    values = (1.0, 1.0, 9.0)
    z = ZScoreCondition(1.0)
    mean = statistics.fmean(values)
    std = statistics.pstdev(values)
    assert z.flags(values) == [1 if abs(v - mean) > std else 0 for v in values]
