"""Run one script-dialect rule on one chunk, then exit.

Invocation: `sandbox-shim <rule-source.py>` (or `python -m ruleshim ...`)
with the framed chunk on stdin:

    line 1      : point count N
    lines 2..N+1: "value<TAB>index"

The rule source must define `inference(sample)` taking an (N, 2) float
array whose columns are (value, index) and returning one label per row.
Any label != 0 counts as 1.  Exactly N lines of "0"/"1" go to stdout.

Exit codes: 0 ok; 2 the source could not be loaded (unreadable file or a
compile error); 3 the rule failed while running (module body raised, no
inference function, inference raised, or unusable output).  Diagnostics
and tracebacks go to stderr, never stdout.
"""

from __future__ import annotations

import sys
import traceback
from pathlib import Path
from typing import TextIO

import numpy as np

EXIT_OK = 0
EXIT_SYNTAX = 2
EXIT_RUNTIME = 3


class ProtocolError(Exception):
    """The stdin frame does not follow the wire format."""


def read_frame(stream: TextIO) -> np.ndarray:
    """Read the framed chunk and return the (N, 2) sample array."""
    header = stream.readline()
    if not header:
        raise ProtocolError("missing header line")
    try:
        count = int(header.strip())
    except ValueError:
        raise ProtocolError(f"bad point count {header.strip()!r}") from None
    if count < 0:
        raise ProtocolError(f"negative point count {count}")
    sample = np.empty((count, 2), dtype=float)
    for row in range(count):
        line = stream.readline()
        if not line:
            raise ProtocolError(f"expected {count} rows, input ended after {row}")
        parts = line.rstrip("\n").split("\t")
        if len(parts) != 2:
            raise ProtocolError(f"row {row}: expected value<TAB>index, got {line!r}")
        try:
            sample[row, 0] = float(parts[0])
            sample[row, 1] = int(parts[1])
        except ValueError:
            raise ProtocolError(f"row {row}: cannot parse {line!r}") from None
    return sample


def coerce_labels(result: object, expected: int) -> list[int]:
    """Normalize whatever inference() returned to a 0/1 list of length expected."""
    arr = np.asarray(result)
    if arr.ndim != 1:
        raise ValueError(f"rule output has shape {arr.shape}, expected ({expected},)")
    if arr.shape[0] != expected:
        raise ValueError(f"rule produced {arr.shape[0]} labels for {expected} points")
    if arr.dtype.kind not in "biufc":
        raise ValueError(f"rule output dtype {arr.dtype} is not numeric")
    # NaN != 0 is true, so a NaN label flags the point rather than crashing.
    return (arr != 0).astype(int).tolist()


def run_rule(code, sample: np.ndarray) -> list[int]:
    namespace: dict = {"__name__": "rule"}
    exec(code, namespace)
    inference = namespace.get("inference")
    if not callable(inference):
        raise TypeError("rule source defines no callable inference(sample)")
    return coerce_labels(inference(sample), len(sample))


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    if len(argv) != 1:
        print("usage: sandbox-shim <rule-source.py>", file=sys.stderr)
        return EXIT_SYNTAX
    try:
        source = Path(argv[0]).read_text(encoding="utf-8")
    except OSError as exc:
        print(f"cannot read rule source: {exc}", file=sys.stderr)
        return EXIT_SYNTAX
    try:
        code = compile(source, argv[0], "exec")
    except SyntaxError:
        traceback.print_exc(file=sys.stderr)
        return EXIT_SYNTAX

    try:
        sample = read_frame(sys.stdin)
    except ProtocolError as exc:
        print(f"malformed input frame: {exc}", file=sys.stderr)
        return EXIT_RUNTIME

    # Stray prints inside the rule must not corrupt the label stream.
    real_stdout = sys.stdout
    sys.stdout = sys.stderr
    try:
        labels = run_rule(code, sample)
    except BaseException:  # a rule calling sys.exit() is a failure too
        traceback.print_exc(file=sys.stderr)
        return EXIT_RUNTIME
    finally:
        sys.stdout = real_stdout

    sys.stdout.write("".join(f"{label}\n" for label in labels))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
