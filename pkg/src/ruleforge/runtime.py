"""Rule execution: native threshold-dsl interpretation and out-of-process
script execution over a line-oriented wire protocol.

Script dialect transport, bit-exact:

    host -> sandbox stdin : "N\\n" then N lines "value<TAB>index\\n"
    sandbox -> host stdout: exactly N lines, each "0" or "1"
    sandbox stderr        : free-form diagnostics
    exit codes            : 0 ok, 2 syntax error, 3 runtime error

Values are serialized with repr() so a float round-trips bit-exactly.
Rule source never runs inside the host process.
"""

from __future__ import annotations

import os
import shlex
import subprocess
import sys
import tempfile
import time
import traceback
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .dataset import LabelSequence
from .dsl import DslSyntaxError, parse_dsl, run_dsl
from .errors import SandboxUnavailableError
from .preprocess import Chunk, format_value
from .rules import DIALECT_DSL, DIALECT_SCRIPT, RuleArtifact

STATUS_OK = "ok"
STATUS_SYNTAX_ERROR = "syntax_error"
STATUS_RUNTIME_ERROR = "runtime_error"
STATUS_TIMEOUT = "timeout"
STATUS_PROTOCOL_ERROR = "protocol_error"
STATUSES = (
    STATUS_OK,
    STATUS_SYNTAX_ERROR,
    STATUS_RUNTIME_ERROR,
    STATUS_TIMEOUT,
    STATUS_PROTOCOL_ERROR,
)

DEFAULT_TIMEOUT = 10.0
SHIM_ENV_VAR = "RULEFORGE_SHIM"

_EXIT_STATUS = {2: STATUS_SYNTAX_ERROR, 3: STATUS_RUNTIME_ERROR}

#: Shape of the dummy input used by syntax checking.
SYNTAX_CHECK_LENGTH = 16


@dataclass(frozen=True)
class ExecutionOutcome:
    """Result of running one rule on one chunk."""

    status: str
    labels: LabelSequence | None
    diagnostic: str
    wall_time: float

    def __post_init__(self) -> None:
        if self.status not in STATUSES:
            raise ValueError(f"unknown status {self.status!r}")
        # ok iff labels were produced; builders enforce the length match.
        if (self.status == STATUS_OK) != (self.labels is not None):
            raise ValueError(f"status {self.status!r} inconsistent with labels")

    @property
    def ok(self) -> bool:
        return self.status == STATUS_OK

    @classmethod
    def success(cls, labels: LabelSequence, wall_time: float) -> "ExecutionOutcome":
        return cls(STATUS_OK, labels, "", wall_time)

    @classmethod
    def failure(cls, status: str, diagnostic: str, wall_time: float) -> "ExecutionOutcome":
        return cls(status, None, diagnostic, wall_time)


def encode_chunk(chunk: Chunk) -> bytes:
    lines = [f"{len(chunk)}\n"]
    for value, index in chunk.rows():
        lines.append(f"{format_value(value)}\t{index}\n")
    return "".join(lines).encode("ascii")


def decode_labels(stdout_text: str, expected: int) -> LabelSequence:
    """Parse sandbox output; raises ValueError on any framing violation."""
    lines = stdout_text.splitlines()
    if len(lines) != expected:
        raise ValueError(f"expected {expected} label lines, got {len(lines)}")
    labels = []
    for lineno, line in enumerate(lines, start=1):
        if line not in ("0", "1"):
            raise ValueError(f"label line {lineno}: expected 0 or 1, got {line!r}")
        labels.append(int(line))
    return LabelSequence.of(labels)


class ScriptSandbox:
    """Runs script-dialect rule source in a subprocess via the shim command.

    The shim command is invoked as `<command...> <source-path>` with the
    wire payload on stdin.
    """

    def __init__(self, command: Sequence[str]):
        if not command:
            raise SandboxUnavailableError("empty sandbox command")
        self.command = list(command)

    @classmethod
    def from_command(cls, command: str | Sequence[str]) -> "ScriptSandbox":
        if isinstance(command, str):
            command = shlex.split(command)
        return cls(command)

    @classmethod
    def from_environment(cls) -> "ScriptSandbox | None":
        """Build a sandbox from $RULEFORGE_SHIM, or None if unset."""
        raw = os.environ.get(SHIM_ENV_VAR, "").strip()
        if not raw:
            return None
        command = shlex.split(raw)
        # Convenience: a bare path to a .py file runs under this interpreter.
        if len(command) == 1 and command[0].endswith(".py"):
            command = [sys.executable, command[0]]
        return cls(command)

    def run(self, source: str, chunk: Chunk, timeout: float) -> ExecutionOutcome:
        payload = encode_chunk(chunk)
        start = time.monotonic()
        with tempfile.TemporaryDirectory(prefix="ruleforge-rule-") as workdir:
            source_path = Path(workdir) / "rule.py"
            source_path.write_text(source, encoding="utf-8")
            try:
                proc = subprocess.run(
                    [*self.command, str(source_path)],
                    input=payload,
                    capture_output=True,
                    timeout=timeout,
                )
            except subprocess.TimeoutExpired:
                elapsed = time.monotonic() - start
                return ExecutionOutcome.failure(
                    STATUS_TIMEOUT, f"no result within {timeout}s", elapsed
                )
            except OSError as exc:
                raise SandboxUnavailableError(
                    f"cannot launch sandbox {self.command!r}: {exc}"
                ) from exc
        elapsed = time.monotonic() - start
        stderr_text = proc.stderr.decode("utf-8", errors="replace").strip()

        if proc.returncode != 0:
            status = _EXIT_STATUS.get(proc.returncode, STATUS_RUNTIME_ERROR)
            diagnostic = stderr_text or f"sandbox exited with code {proc.returncode}"
            return ExecutionOutcome.failure(status, diagnostic, elapsed)
        try:
            labels = decode_labels(proc.stdout.decode("ascii", errors="replace"), len(chunk))
        except ValueError as exc:
            detail = f"; stderr: {stderr_text}" if stderr_text else ""
            return ExecutionOutcome.failure(STATUS_PROTOCOL_ERROR, f"{exc}{detail}", elapsed)
        return ExecutionOutcome.success(labels, elapsed)


def _execute_dsl(rule: RuleArtifact, chunk: Chunk) -> ExecutionOutcome:
    start = time.monotonic()
    try:
        labels = run_dsl(rule.source, chunk.values)
    except DslSyntaxError as exc:
        return ExecutionOutcome.failure(STATUS_SYNTAX_ERROR, str(exc), time.monotonic() - start)
    except Exception:
        return ExecutionOutcome.failure(
            STATUS_RUNTIME_ERROR, traceback.format_exc(), time.monotonic() - start
        )
    elapsed = time.monotonic() - start
    if len(labels) != len(chunk):
        return ExecutionOutcome.failure(
            STATUS_PROTOCOL_ERROR,
            f"interpreter produced {len(labels)} labels for {len(chunk)} points",
            elapsed,
        )
    return ExecutionOutcome.success(LabelSequence.of(labels), elapsed)


class RuleRuntime:
    """Dialect dispatch plus shared timeout policy.

    threshold-dsl rules run in-process through the native interpreter;
    script rules require a ScriptSandbox.
    """

    def __init__(self, sandbox: ScriptSandbox | None = None, timeout: float = DEFAULT_TIMEOUT):
        if timeout <= 0:
            raise ValueError("timeout must be positive")
        self.sandbox = sandbox
        self.timeout = timeout

    def execute(
        self, rule: RuleArtifact, chunk: Chunk, timeout: float | None = None
    ) -> ExecutionOutcome:
        if len(chunk) == 0:
            raise ValueError("chunk must be nonempty")
        if rule.dialect == DIALECT_DSL:
            return _execute_dsl(rule, chunk)
        assert rule.dialect == DIALECT_SCRIPT
        if self.sandbox is None:
            raise SandboxUnavailableError(
                f"script dialect needs a sandbox; set ${SHIM_ENV_VAR} or pass one explicitly"
            )
        return self.sandbox.run(rule.source, chunk, timeout or self.timeout)

    def syntax_check(self, rule: RuleArtifact) -> ExecutionOutcome:
        """Run the rule on a flat dummy chunk; ok iff it produces valid output."""
        dummy = Chunk(
            metric_id="syntax-check",
            start_offset=0,
            values=(0.0,) * SYNTAX_CHECK_LENGTH,
        )
        return self.execute(rule, dummy)

    def validate_dsl_source(self, source: str) -> str | None:
        """Cheap static validation; returns a message or None when fine."""
        try:
            parse_dsl(source)
        except DslSyntaxError as exc:
            return str(exc)
        return None


def execute_rule(
    rule: RuleArtifact,
    chunk: Chunk,
    timeout: float = DEFAULT_TIMEOUT,
    sandbox: ScriptSandbox | None = None,
) -> ExecutionOutcome:
    return RuleRuntime(sandbox=sandbox, timeout=timeout).execute(rule, chunk)


def syntax_check(rule: RuleArtifact, sandbox: ScriptSandbox | None = None) -> ExecutionOutcome:
    return RuleRuntime(sandbox=sandbox).syntax_check(rule)
