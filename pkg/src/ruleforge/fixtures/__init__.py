"""Built-in fixture rules and synthetic data used by tests and demos.

Each script fixture has a threshold-dsl twin implementing the same
detection logic, so the two dialects can be checked against each other.
"""

from __future__ import annotations

from importlib import resources

from ..dataset import LabelSequence, MetricSeries
from ..preprocess import Chunk
from ..rules import DIALECT_DSL, DIALECT_SCRIPT, RuleArtifact

#: (script source, dsl source) pairs with identical behaviour.
FIXTURE_PAIRS = (
    ("zscore_rule.py", "dsl_zscore.json"),
    ("diff_spike_rule.py", "dsl_diff_spike.json"),
    ("range_run_rule.py", "dsl_range_run.json"),
)

SPIKE_LENGTH = 50
SPIKE_INDEX = 25
SPIKE_BASE = 10.0
SPIKE_VALUE = 1000.0


def fixture_source(name: str) -> str:
    return (resources.files(__package__) / name).read_text(encoding="utf-8")


def fixture_rule(name: str, rule_id: str | None = None) -> RuleArtifact:
    if name.endswith(".py"):
        dialect = DIALECT_SCRIPT
    elif name.endswith(".json"):
        dialect = DIALECT_DSL
    else:
        raise ValueError(f"cannot infer dialect for fixture {name!r}")
    return RuleArtifact.create(
        rule_id=rule_id or f"fixture-{name.rsplit('.', 1)[0].replace('_', '-')}",
        dialect=dialect,
        source=fixture_source(name),
    )


def spike_values(
    length: int = SPIKE_LENGTH,
    spike_index: int = SPIKE_INDEX,
    base: float = SPIKE_BASE,
    spike: float = SPIKE_VALUE,
) -> tuple[float, ...]:
    """A flat series with a single large spike; the z-score fixtures flag
    exactly the spike."""
    values = [base] * length
    values[spike_index] = spike
    return tuple(values)


def spike_chunk(metric_id: str = "spike-fixture", **kwargs) -> Chunk:
    values = spike_values(**kwargs)
    spike_index = kwargs.get("spike_index", SPIKE_INDEX)
    labels = LabelSequence.of(1 if i == spike_index else 0 for i in range(len(values)))
    return Chunk(metric_id=metric_id, start_offset=0, values=values, labels=labels)


def spike_series(metric_id: str = "spike-fixture", **kwargs) -> MetricSeries:
    chunk = spike_chunk(metric_id, **kwargs)
    return MetricSeries(metric_id=metric_id, values=chunk.values, labels=chunk.labels)
