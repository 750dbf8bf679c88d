"""Rule artifacts and the on-disk rule registry.

Registry layout, one directory per rule so engineers can read rules in
place:

    <registry>/<rule_id>/rule.src
    <registry>/<rule_id>/meta.json
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace
from pathlib import Path

from .errors import DataError, RegistryError
from .evaluation import EvaluationReport

DIALECT_SCRIPT = "script"
DIALECT_DSL = "threshold-dsl"
DIALECTS = (DIALECT_SCRIPT, DIALECT_DSL)

_COMMENT_RE = re.compile(r"((?:Abnormal|Normal) Rule \d+\b.*?)\s*$")


@dataclass(frozen=True)
class Provenance:
    """How a rule came to be: fresh from the detection agent, or derived
    from another rule by the repair or review agent."""

    kind: str  # "fresh" | "repair" | "review"
    parent: str | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("fresh", "repair", "review"):
            raise DataError(f"unknown provenance kind {self.kind!r}")
        if self.kind == "fresh" and self.parent is not None:
            raise DataError("fresh provenance cannot have a parent")
        if self.kind != "fresh" and not self.parent:
            raise DataError(f"{self.kind} provenance requires a parent rule id")

    def as_text(self) -> str:
        if self.kind == "fresh":
            return "fresh"
        return f"{self.kind}-of:{self.parent}"

    @classmethod
    def from_text(cls, text: str) -> "Provenance":
        if text == "fresh":
            return cls("fresh")
        m = re.fullmatch(r"(repair|review)-of:(.+)", text)
        if not m:
            raise DataError(f"bad provenance text {text!r}")
        return cls(m.group(1), m.group(2))


def extract_rule_comments(source: str, dialect: str) -> tuple[str, ...]:
    """Pull the human-readable "Abnormal Rule N" / "Normal Rule N" lines out
    of rule source so they can be surfaced in reports."""
    found: list[str] = []
    if dialect == DIALECT_DSL:
        try:
            doc = json.loads(source)
        except json.JSONDecodeError:
            return ()
        for entry in doc.get("rules", []) if isinstance(doc, dict) else []:
            if isinstance(entry, dict) and isinstance(entry.get("comment"), str):
                found.append(entry["comment"])
        return tuple(found)
    for line in source.splitlines():
        stripped = line.strip()
        if stripped.startswith("#"):
            m = _COMMENT_RE.search(stripped.lstrip("# "))
            if m:
                found.append(m.group(1))
    return tuple(found)


@dataclass(frozen=True)
class RuleArtifact:
    """One trained rule: source text plus provenance and scores."""

    rule_id: str
    dialect: str
    source: str
    created_from: Provenance = field(default_factory=lambda: Provenance("fresh"))
    trial: int = 0
    iteration: int = 0
    validation_scores: EvaluationReport | None = None
    comments_extracted: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if not self.rule_id:
            raise DataError("rule_id must be nonempty")
        if self.dialect not in DIALECTS:
            raise DataError(f"unknown dialect {self.dialect!r}")
        if not self.source.strip():
            raise DataError(f"rule {self.rule_id!r}: source is empty")

    @classmethod
    def create(cls, rule_id: str, dialect: str, source: str, **kwargs) -> "RuleArtifact":
        """Build an artifact with comments extracted from the source."""
        return cls(
            rule_id=rule_id,
            dialect=dialect,
            source=source,
            comments_extracted=extract_rule_comments(source, dialect),
            **kwargs,
        )

    def with_scores(self, scores: EvaluationReport) -> "RuleArtifact":
        return replace(self, validation_scores=scores)


def _meta_dict(rule: RuleArtifact) -> dict:
    return {
        "rule_id": rule.rule_id,
        "dialect": rule.dialect,
        "created_from": rule.created_from.as_text(),
        "trial": rule.trial,
        "iteration": rule.iteration,
        "comments_extracted": list(rule.comments_extracted),
        "validation_scores": (
            None if rule.validation_scores is None else rule.validation_scores.as_dict()
        ),
    }


def save_rule(registry: Path, rule: RuleArtifact) -> Path:
    """Persist a rule; an existing rule with the same id is a collision."""
    registry = Path(registry)
    rule_dir = registry / rule.rule_id
    if rule_dir.exists():
        raise RegistryError(f"rule id {rule.rule_id!r} already exists in {registry}")
    rule_dir.mkdir(parents=True)
    (rule_dir / "rule.src").write_text(rule.source, encoding="utf-8")
    meta = json.dumps(_meta_dict(rule), indent=2, sort_keys=True) + "\n"
    (rule_dir / "meta.json").write_text(meta, encoding="utf-8")
    return rule_dir


def load_rule(registry: Path, rule_id: str) -> RuleArtifact:
    rule_dir = Path(registry) / rule_id
    if not rule_dir.is_dir():
        raise RegistryError(f"rule id {rule_id!r} not found in {registry}")
    source = (rule_dir / "rule.src").read_text(encoding="utf-8")
    meta = json.loads((rule_dir / "meta.json").read_text(encoding="utf-8"))
    scores = meta.get("validation_scores")
    return RuleArtifact(
        rule_id=meta["rule_id"],
        dialect=meta["dialect"],
        source=source,
        created_from=Provenance.from_text(meta["created_from"]),
        trial=int(meta["trial"]),
        iteration=int(meta["iteration"]),
        validation_scores=None if scores is None else EvaluationReport.from_dict(scores),
        comments_extracted=tuple(meta.get("comments_extracted", ())),
    )


def list_rules(registry: Path) -> list[str]:
    registry = Path(registry)
    if not registry.is_dir():
        return []
    return sorted(p.name for p in registry.iterdir() if (p / "meta.json").is_file())
