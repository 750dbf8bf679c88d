from __future__ import annotations

import pytest

from conftest import THRESHOLD_STUB

from ruleforge.errors import SandboxUnavailableError
from ruleforge.fixtures import fixture_rule, spike_chunk
from ruleforge.preprocess import Chunk
from ruleforge.rules import DIALECT_DSL, DIALECT_SCRIPT, RuleArtifact
from ruleforge.runtime import (
    RuleRuntime,
    ScriptSandbox,
    decode_labels,
    encode_chunk,
    execute_rule,
    syntax_check,
)

DSL_ZSCORE = '{"rules": [{"kind": "zscore", "threshold": 3.0}]}'


def make_chunk(values, metric_id="m", start=0):
    return Chunk(metric_id=metric_id, start_offset=start, values=tuple(values))


class TestDslExecution:
    def test_spike_flagged(self):
        rule = fixture_rule("dsl_zscore.json")
        outcome = RuleRuntime().execute(rule, spike_chunk())
        assert outcome.ok
        assert [i for i, lab in enumerate(outcome.labels) if lab] == [25]

    def test_constant_chunk_all_normal(self):
        rule = RuleArtifact.create("r", DIALECT_DSL, DSL_ZSCORE)
        outcome = RuleRuntime().execute(rule, make_chunk([4.2] * 20))
        assert outcome.ok and outcome.labels.count_abnormal() == 0

    def test_bad_dsl_is_syntax_error(self):
        rule = RuleArtifact.create("r", DIALECT_DSL, '{"rules": [{"kind": "bogus"}]}')
        outcome = RuleRuntime().execute(rule, make_chunk([1.0, 2.0]))
        assert outcome.status == "syntax_error"
        assert outcome.labels is None
        assert outcome.diagnostic

    def test_deterministic_across_repeats(self):
        rule = fixture_rule("dsl_combo.json")
        chunk = spike_chunk()
        results = {tuple(RuleRuntime().execute(rule, chunk).labels) for _ in range(10)}
        assert len(results) == 1

    def test_syntax_check_uses_flat_chunk(self):
        rule = RuleArtifact.create("r", DIALECT_DSL, DSL_ZSCORE)
        outcome = RuleRuntime().syntax_check(rule)
        assert outcome.ok
        assert len(outcome.labels) == 16
        assert outcome.labels.count_abnormal() == 0

    def test_module_level_helpers(self):
        rule = RuleArtifact.create("r", DIALECT_DSL, DSL_ZSCORE)
        assert syntax_check(rule).ok
        assert execute_rule(rule, make_chunk([1.0, 1.0, 50.0])).ok


def test_script_without_sandbox_is_environment_error():
    rule = RuleArtifact.create("r", DIALECT_SCRIPT, "def inference(s): return s")
    with pytest.raises(SandboxUnavailableError):
        RuleRuntime(sandbox=None).execute(rule, make_chunk([1.0, 2.0]))


def test_wire_encoding_is_exact():
    chunk = make_chunk([10.0, 0.1, -3.5])
    assert encode_chunk(chunk) == b"3\n10\t0\n0.1\t1\n-3.5\t2\n"


def test_decode_labels_rejects_bad_frames():
    assert list(decode_labels("0\n1\n0\n", 3)) == [0, 1, 0]
    with pytest.raises(ValueError):
        decode_labels("0\n1\n", 3)
    with pytest.raises(ValueError):
        decode_labels("0\n2\n1\n", 3)
    with pytest.raises(ValueError):
        decode_labels("0\n 1\n0\n", 3)


class TestScriptSandbox:
    def test_ok_path(self, stub_sandbox):
        sandbox = stub_sandbox(THRESHOLD_STUB)
        rule = RuleArtifact.create("r", DIALECT_SCRIPT, "unused")
        outcome = RuleRuntime(sandbox=sandbox).execute(rule, make_chunk([10.0, 500.0, 20.0]))
        assert outcome.ok
        assert list(outcome.labels) == [0, 1, 0]

    def test_exit_2_maps_to_syntax_error(self, stub_sandbox):
        sandbox = stub_sandbox(
            """
            import sys
            sys.stderr.write("SyntaxError: unexpected EOF\\n")
            sys.exit(2)
            """
        )
        rule = RuleArtifact.create("r", DIALECT_SCRIPT, "broken(")
        outcome = RuleRuntime(sandbox=sandbox).execute(rule, make_chunk([1.0, 2.0]))
        assert outcome.status == "syntax_error"
        assert "SyntaxError" in outcome.diagnostic

    def test_exit_3_maps_to_runtime_error(self, stub_sandbox):
        sandbox = stub_sandbox(
            """
            import sys
            sys.stderr.write("ZeroDivisionError: division by zero\\n")
            sys.exit(3)
            """
        )
        rule = RuleArtifact.create("r", DIALECT_SCRIPT, "x")
        outcome = RuleRuntime(sandbox=sandbox).execute(rule, make_chunk([1.0, 2.0]))
        assert outcome.status == "runtime_error"
        assert "ZeroDivisionError" in outcome.diagnostic

    def test_unexpected_exit_code_is_runtime_error(self, stub_sandbox):
        sandbox = stub_sandbox("import sys; sys.exit(7)")
        rule = RuleArtifact.create("r", DIALECT_SCRIPT, "x")
        outcome = RuleRuntime(sandbox=sandbox).execute(rule, make_chunk([1.0, 2.0]))
        assert outcome.status == "runtime_error"
        assert "7" in outcome.diagnostic

    def test_wrong_length_output_is_protocol_error(self, stub_sandbox):
        sandbox = stub_sandbox(
            """
            import sys
            n = int(sys.stdin.readline())
            for _ in range(n - 1):
                sys.stdout.write("0\\n")
            """
        )
        rule = RuleArtifact.create("r", DIALECT_SCRIPT, "x")
        outcome = RuleRuntime(sandbox=sandbox).execute(rule, make_chunk([1.0] * 5))
        assert outcome.status == "protocol_error"

    def test_timeout_kills_the_rule(self, stub_sandbox):
        sandbox = stub_sandbox("import time; time.sleep(60)")
        rule = RuleArtifact.create("r", DIALECT_SCRIPT, "while True: pass")
        outcome = RuleRuntime(sandbox=sandbox, timeout=0.5).execute(rule, make_chunk([1.0, 2.0]))
        assert outcome.status == "timeout"
        assert outcome.wall_time < 5.0

    def test_next_execution_succeeds_after_failure(self, stub_sandbox):
        bad = stub_sandbox("import sys; sys.exit(3)")
        good = stub_sandbox(THRESHOLD_STUB)
        rule = RuleArtifact.create("r", DIALECT_SCRIPT, "x")
        runtime = RuleRuntime(sandbox=bad)
        assert runtime.execute(rule, make_chunk([1.0, 2.0])).status == "runtime_error"
        runtime.sandbox = good
        assert runtime.execute(rule, make_chunk([1.0, 2.0])).ok

    def test_source_reaches_the_sandbox(self, stub_sandbox):
        # stub echoes one label per point: 1 iff the source file mentions "magic"
        sandbox = stub_sandbox(
            """
            import sys
            flag = "1" if "magic" in open(sys.argv[1]).read() else "0"
            n = int(sys.stdin.readline())
            for _ in range(n):
                sys.stdout.write(flag + "\\n")
            """
        )
        runtime = RuleRuntime(sandbox=sandbox)
        with_magic = RuleArtifact.create("r1", DIALECT_SCRIPT, "magic = True")
        without = RuleArtifact.create("r2", DIALECT_SCRIPT, "plain = True")
        assert list(runtime.execute(with_magic, make_chunk([1.0, 2.0])).labels) == [1, 1]
        assert list(runtime.execute(without, make_chunk([1.0, 2.0])).labels) == [0, 0]


def test_sandbox_from_environment(monkeypatch, tmp_path):
    monkeypatch.delenv("RULEFORGE_SHIM", raising=False)
    assert ScriptSandbox.from_environment() is None
    shim = tmp_path / "shim.py"
    shim.write_text("pass\n")
    monkeypatch.setenv("RULEFORGE_SHIM", str(shim))
    sandbox = ScriptSandbox.from_environment()
    assert sandbox is not None
    assert sandbox.command[-1] == str(shim)
    assert len(sandbox.command) == 2  # python interpreter prepended


def test_missing_shim_binary_raises_environment_error():
    sandbox = ScriptSandbox(["/nonexistent/shim-binary"])
    rule = RuleArtifact.create("r", DIALECT_SCRIPT, "x")
    with pytest.raises(SandboxUnavailableError):
        sandbox.run(rule.source, make_chunk([1.0, 2.0]), timeout=5.0)
