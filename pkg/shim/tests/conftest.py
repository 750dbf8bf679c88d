from __future__ import annotations

import subprocess
import sys
import tempfile
from pathlib import Path

#: How the host is expected to launch the shim.
SHIM = [sys.executable, "-m", "ruleshim"]


def encode(values, start: int = 0) -> bytes:
    """Frame a chunk the way the host does: header, then value<TAB>index."""
    lines = [f"{len(values)}\n"]
    lines += [f"{value!r}\t{start + row}\n" for row, value in enumerate(values)]
    return "".join(lines).encode("ascii")


def run_shim(source: str, payload: bytes, timeout: float = 30.0) -> subprocess.CompletedProcess:
    """Run the shim on a throwaway source file; output stays as bytes."""
    with tempfile.TemporaryDirectory(prefix="ruleshim-test-") as workdir:
        path = Path(workdir) / "rule.py"
        path.write_text(source, encoding="utf-8")
        return subprocess.run(SHIM + [str(path)], input=payload, capture_output=True, timeout=timeout)


#: Plain rule used wherever the test only cares about the harness itself.
THRESHOLD_RULE = """\
import numpy as np


def inference(sample: np.ndarray) -> np.ndarray:
    values = sample[:, 0]
    labels = np.zeros(len(values), dtype=int)
    labels[values > 100.0] = 1
    return labels
"""
