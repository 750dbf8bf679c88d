"""Prompt assembly for the three agents, and code extraction from replies.

Templates live as editable text files under ``templates/`` so prompt
wording can be tuned without touching code.  Placeholders use
``${field}`` syntax; rendering fails loudly when a field is absent.
"""

from __future__ import annotations

import difflib
import re
from importlib import resources
from string import Template
from typing import Iterable, Mapping, Sequence

from .errors import ExtractionError, TemplateError
from .gateway import AGENT_ROLES
from .preprocess import Chunk, PreprocessConfig, render_chunk_text

BEGIN_MARKER = "*** python begin ***"
END_MARKER = "*** python end ***"

_FENCE_RE = re.compile(r"```[a-zA-Z0-9_+-]*\n(.*?)```", re.DOTALL)


def _load_template(name: str) -> str:
    ref = resources.files(__package__) / "templates" / name
    try:
        return ref.read_text(encoding="utf-8")
    except (FileNotFoundError, OSError) as exc:
        raise TemplateError(f"prompt template {name!r} not found") from exc


def system_prompt(agent: str) -> str:
    if agent not in AGENT_ROLES:
        raise TemplateError(f"unknown agent {agent!r}")
    return _load_template(f"system_{agent}.txt").strip()


def render_prompt(agent: str, context: Mapping[str, str]) -> str:
    """Instantiate the agent's template with `context`; every placeholder
    must be supplied."""
    if agent not in AGENT_ROLES:
        raise TemplateError(f"unknown agent {agent!r}")
    text = _load_template(f"{agent}.txt")
    try:
        return Template(text).substitute({k: str(v) for k, v in context.items()})
    except KeyError as exc:
        raise TemplateError(
            f"{agent} prompt is missing required field {exc.args[0]!r}"
        ) from exc
    except ValueError as exc:
        raise TemplateError(f"{agent} template is malformed: {exc}") from exc


def code_template() -> str:
    return _load_template("code_template.txt").strip()


def detection_context(data_block: str, previous_source: str | None = None) -> dict[str, str]:
    if previous_source:
        previous_block = f"{BEGIN_MARKER}\n{previous_source.strip()}\n{END_MARKER}"
    else:
        previous_block = "None selected yet; this is the first iteration."
    return {
        "data_block": data_block,
        "previous_block": previous_block,
        "code_template": code_template(),
    }


def repair_context(source: str, diagnostic: str) -> dict[str, str]:
    return {"source": source.strip(), "diagnostic": diagnostic.strip() or "(no output)"}


def review_context(
    candidate_source: str,
    metrics_block: str,
    diff_block: str,
    incorrect_block: str,
    previous_source: str | None = None,
) -> dict[str, str]:
    if previous_source:
        history_block = Template(_load_template("review_history.txt")).substitute(
            previous_source=previous_source.strip()
        )
    else:
        history_block = _load_template("review_first.txt").strip()
    return {
        "candidate_source": candidate_source.strip(),
        "metrics_block": metrics_block,
        "diff_block": diff_block or "(no textual differences)",
        "incorrect_block": incorrect_block or "(none collected)",
        "history_block": history_block.strip(),
    }


def indices_to_ranges(indices: Iterable[int]) -> str:
    """Compress sorted point indices into "a-b, c" range notation."""
    items = sorted(set(indices))
    if not items:
        return ""
    parts = []
    start = prev = items[0]
    for idx in items[1:]:
        if idx == prev + 1:
            prev = idx
            continue
        parts.append(f"{start}-{prev}" if prev > start else str(start))
        start = prev = idx
    parts.append(f"{start}-{prev}" if prev > start else str(start))
    return ", ".join(parts)


def format_training_block(
    sections: Sequence[tuple[str, Chunk]], config: PreprocessConfig
) -> str:
    """Render titled chunk samples for the detection prompt.

    Labeled chunks get an explicit list of anomalous indices (chunk-local,
    matching the rendered index column) so the agent can line patterns up
    with positions.
    """
    blocks = []
    for title, chunk in sections:
        lines = [f"### {title}", render_chunk_text(chunk, config)]
        if chunk.labels is not None:
            abnormal = [i for i, lab in enumerate(chunk.labels) if lab == 1]
            if abnormal:
                lines.append(f"Anomalous indices: {indices_to_ranges(abnormal)}")
            else:
                lines.append("No anomalies in this sample.")
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks)


def format_metrics_block(rows: Mapping[str, Mapping[str, float]]) -> str:
    """Tabulate named score reports (e.g. {"previous": {...}, "candidate": {...}})."""
    header = f"{'rule':<12} {'precision':>9} {'recall':>9} {'f1':>9}"
    lines = [header]
    for name, scores in rows.items():
        lines.append(
            f"{name:<12} {scores['precision']:>9.4f} {scores['recall']:>9.4f} "
            f"{scores['f1']:>9.4f}"
        )
    return "\n".join(lines)


def format_diff(previous_source: str, candidate_source: str) -> str:
    diff = difflib.unified_diff(
        previous_source.strip().splitlines(),
        candidate_source.strip().splitlines(),
        fromfile="previous",
        tofile="candidate",
        lineterm="",
    )
    return "\n".join(diff)


def format_incorrect_samples(rows: Sequence[tuple[int, float, int, int, int]]) -> str:
    """Rows of (index, value, truth, previous label, candidate label)."""
    lines = ["index\tvalue\ttruth\tprevious\tcandidate"]
    for index, value, truth, prev, cand in rows:
        lines.append(f"{index}\t{value}\t{truth}\t{prev}\t{cand}")
    return "\n".join(lines)


def extract_code(response: str) -> str:
    """Return the program between the first begin/end marker pair.

    Falls back to the first triple-backtick fence when no marker pair is
    present; anything else is an extraction failure.
    """
    start = response.find(BEGIN_MARKER)
    if start != -1:
        body_start = start + len(BEGIN_MARKER)
        end = response.find(END_MARKER, body_start)
        if end != -1:
            body = response[body_start:end].strip("\n")
            body = _strip_inner_fence(body)
            if body.strip():
                return body
    fence = _FENCE_RE.search(response)
    if fence:
        body = fence.group(1).strip("\n")
        if body.strip():
            return body
    raise ExtractionError("response contains no extractable code block")


def _strip_inner_fence(body: str) -> str:
    # Models sometimes nest a backtick fence inside the markers.
    lines = body.splitlines()
    if len(lines) >= 2 and lines[0].startswith("```") and lines[-1].strip() == "```":
        return "\n".join(lines[1:-1])
    return body
