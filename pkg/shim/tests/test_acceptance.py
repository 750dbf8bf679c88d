"""Acceptance checks for the sandbox shim.

Each test covers one numbered criterion and prints a single pass/fail
line; run with ``pytest -v -s tests/test_acceptance.py`` to see them.
The host package is imported only as the other end of the wire protocol
and as the reference interpreter for the declarative dialect.
"""

from __future__ import annotations

import math
import random
import statistics
import struct
import time
from contextlib import contextmanager

from conftest import SHIM, run_shim

from ruleforge.dsl import run_dsl
from ruleforge.fixtures import (
    FIXTURE_PAIRS,
    SPIKE_INDEX,
    fixture_source,
    spike_chunk,
    spike_values,
)
from ruleforge.preprocess import Chunk
from ruleforge.runtime import (
    STATUS_RUNTIME_ERROR,
    STATUS_SYNTAX_ERROR,
    STATUS_TIMEOUT,
    ScriptSandbox,
    encode_chunk,
)


@contextmanager
def criterion(number: int, description: str, bound: float | None = None):
    start = time.monotonic()
    try:
        yield
    except BaseException:
        print(f"criterion {number}: FAIL - {description}")
        raise
    elapsed = time.monotonic() - start
    if bound is not None and elapsed > bound:
        print(f"criterion {number}: FAIL - {description} "
              f"(took {elapsed:.1f}s, bound {bound:.0f}s)")
        raise AssertionError(f"criterion {number} exceeded its {bound}s runtime bound")
    print(f"criterion {number}: pass - {description} ({elapsed:.2f}s)")


#: Echoes both wire columns back on stderr so the test can compare bits.
ECHO_RULE = """\
import sys

import numpy as np


def inference(sample: np.ndarray) -> np.ndarray:
    for value, index in sample:
        print(f"{int(index)}\\t{float(value)!r}", file=sys.stderr)
    return np.zeros(len(sample), dtype=int)
"""

LOOP_RULE = """\
def inference(sample):
    while True:
        pass
"""

RAISING_RULE = """\
def inference(sample):
    return 1 / 0
"""


def wire_values(rng: random.Random, count: int) -> tuple[float, ...]:
    """Finite doubles across the representable range, plus awkward exacts."""
    exacts = (0.0, -0.0, 5e-324, -5e-324, 1.7976931348623157e308, math.pi, -math.e)
    values = []
    for _ in range(count):
        roll = rng.random()
        if roll < 0.5:
            values.append(rng.uniform(-1e6, 1e6))
        elif roll < 0.7:
            values.append(float(rng.randrange(-(10**9), 10**9)))
        elif roll < 0.8:
            values.append(rng.uniform(-1.0, 1.0) * 10.0 ** rng.randrange(-300, 301))
        elif roll < 0.9:
            values.append(rng.uniform(-1e-5, 1e-5))
        else:
            values.append(rng.choice(exacts))
    return tuple(values)


def test_criterion_10():
    with criterion(10, "script sandbox: spike exactness, wire fidelity, timeout, exit codes"):
        sandbox = ScriptSandbox(SHIM)

        # The z-score fixture flags exactly the spike index.  Derive the
        # expected set independently before trusting the rule.
        values = spike_values()
        mean = statistics.fmean(values)
        std = statistics.pstdev(values)
        derived = {i for i, v in enumerate(values) if abs(v - mean) > 3 * std}
        assert derived == {SPIKE_INDEX}
        outcome = sandbox.run(fixture_source("zscore_rule.py"), spike_chunk(), timeout=30.0)
        assert outcome.ok, outcome.diagnostic
        assert {i for i, label in enumerate(outcome.labels) if label} == derived

        # A 10,000-point chunk crosses the wire bit-exactly in both columns.
        points = wire_values(random.Random(10), 10_000)
        payload = encode_chunk(Chunk(metric_id="wire", start_offset=0, values=points))
        proc = run_shim(ECHO_RULE, payload, timeout=60.0)
        assert proc.returncode == 0
        assert proc.stdout == b"0\n" * 10_000
        lines = proc.stderr.decode("ascii").splitlines()
        assert len(lines) == 10_000
        for row, line in enumerate(lines):
            index_text, value_text = line.split("\t")
            assert int(index_text) == row
            assert struct.pack("<d", float(value_text)) == struct.pack("<d", points[row])

        # A nonterminating rule is killed within twice the configured bound.
        probe = Chunk(metric_id="probe", start_offset=0, values=(1.0, 2.0, 3.0))
        start = time.monotonic()
        outcome = sandbox.run(LOOP_RULE, probe, timeout=1.0)
        elapsed = time.monotonic() - start
        assert outcome.status == STATUS_TIMEOUT
        assert elapsed < 2.0
        assert outcome.wall_time < 2.0

        # Exit codes 2/3 surface as syntax_error/runtime_error on the host.
        assert run_shim("def inference(:\n", encode_chunk(probe)).returncode == 2
        assert run_shim(RAISING_RULE, encode_chunk(probe)).returncode == 3
        assert sandbox.run("def inference(:\n", probe, timeout=30.0).status == STATUS_SYNTAX_ERROR
        outcome = sandbox.run(RAISING_RULE, probe, timeout=30.0)
        assert outcome.status == STATUS_RUNTIME_ERROR
        assert "ZeroDivisionError" in outcome.diagnostic


def band_values(rng: random.Random) -> tuple[float, ...]:
    """Series shaped to exercise every fixture: in-band noise, out-of-band
    excursions of mixed lengths, band-edge values, and large spikes."""
    length = rng.randrange(30, 61)
    values: list[float] = []
    while len(values) < length:
        roll = rng.random()
        if roll < 0.55:
            values.append(rng.uniform(15.0, 85.0))
        elif roll < 0.75:
            run = rng.randrange(1, 6)
            if rng.random() < 0.5:
                level = rng.uniform(-40.0, 5.0)
            else:
                level = rng.uniform(95.0, 200.0)
            values.extend(level + rng.uniform(-3.0, 3.0) for _ in range(run))
        elif roll < 0.9:
            values.append(rng.choice((10.0, 90.0, 9.875, 90.125, 10.5, 89.5)))
        else:
            values.append(rng.uniform(300.0, 2000.0))
    return tuple(values[:length])


def test_criterion_11():
    with criterion(11, "dsl and script fixture twins agree on 100 random chunks"):
        rng = random.Random(11)
        chunks = [band_values(rng) for _ in range(100)]
        sandbox = ScriptSandbox(SHIM)
        for script_name, dsl_name in FIXTURE_PAIRS:
            script = fixture_source(script_name)
            dsl = fixture_source(dsl_name)
            flagged = 0
            for values in chunks:
                native = run_dsl(dsl, values)
                chunk = Chunk(metric_id="rand", start_offset=0, values=values)
                outcome = sandbox.run(script, chunk, timeout=30.0)
                assert outcome.ok, outcome.diagnostic
                assert list(outcome.labels) == native, script_name
                flagged += sum(native)
            # Guard against a vacuous pass where a fixture never fires.
            assert flagged > 0, script_name
