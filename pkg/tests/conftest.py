from __future__ import annotations

import sys
import textwrap

import pytest

from ruleforge.dataset import LabelSequence, MetricSeries
from ruleforge.runtime import ScriptSandbox


def wrap(source: str) -> str:
    """Marker-wrap rule source the way a model response would."""
    return f"*** python begin ***\n{source}\n*** python end ***"


@pytest.fixture
def spiky_series() -> MetricSeries:
    values = [10.0] * 120
    values[30] = 500.0
    values[90] = 480.0
    labels = [1 if v > 100.0 else 0 for v in values]
    return MetricSeries(
        metric_id="m1", values=tuple(values), labels=LabelSequence.of(labels)
    )


@pytest.fixture
def stub_sandbox(tmp_path):
    """Factory for sandboxes backed by small local scripts standing in for
    the real shim; each interprets the wire protocol just enough for one
    test."""

    def make(body: str) -> ScriptSandbox:
        path = tmp_path / f"stub{len(list(tmp_path.iterdir()))}.py"
        path.write_text(textwrap.dedent(body), encoding="utf-8")
        return ScriptSandbox([sys.executable, str(path)])

    return make


#: Stub that flags values over 100, ignoring the rule source argument.
THRESHOLD_STUB = """
    import sys
    n = int(sys.stdin.readline())
    rows = [sys.stdin.readline().rstrip("\\n").split("\\t") for _ in range(n)]
    for value, _index in rows:
        sys.stdout.write(("1" if float(value) > 100.0 else "0") + "\\n")
"""
