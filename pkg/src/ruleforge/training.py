"""The iterative rule-training loop: propose, repair, review, select.

One iteration proposes n candidate rules from the same training data,
pushes each through the repair loop until it passes a syntax check, then
through the review loop which refuses any regression of validation
accuracy against the best rule so far.  The k best survivors are kept.
Because review can fall back to the previous best rule, the best
validation score never decreases across iterations.

All records produced here are free of timestamps so that a mock-backed
run is byte-identical when repeated.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

from .dataset import LabelSequence, MetricSeries
from .errors import ExtractionError, GatewayError, TrainingError
from .evaluation import EvaluationReport, evaluate_all
from .gateway import (
    ROLE_DETECTION,
    ROLE_REPAIR,
    ROLE_REVIEW,
    CompletionRequest,
    TranscriptLog,
)
from .preprocess import Chunk, PreprocessConfig, chunk_series
from .prompts import (
    detection_context,
    extract_code,
    format_diff,
    format_incorrect_samples,
    format_metrics_block,
    format_training_block,
    render_prompt,
    repair_context,
    review_context,
    system_prompt,
)
from .rules import DIALECT_SCRIPT, DIALECTS, Provenance, RuleArtifact, save_rule
from .runtime import RuleRuntime

#: Cap on mislabeled points quoted back to the review agent.
MAX_INCORRECT_SAMPLES = 8

#: Detection-only proposals per candidate size during calibration.
CALIBRATION_PROPOSALS = 3


@dataclass(frozen=True)
class TrainingConfig:
    n_candidates: int = 5
    top_k: int = 1
    max_iterations: int = 20
    max_repair_rounds: int = 3
    max_review_rounds: int = 3
    chunk_size: int = 500
    dialect: str = DIALECT_SCRIPT
    seed: int = 0

    def __post_init__(self) -> None:
        for name in ("n_candidates", "top_k", "max_iterations", "max_repair_rounds",
                     "max_review_rounds"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.top_k > self.n_candidates:
            raise ValueError("top_k cannot exceed n_candidates")
        if self.chunk_size < 2:
            raise ValueError("chunk_size must be >= 2")
        if self.dialect not in DIALECTS:
            raise ValueError(f"unknown dialect {self.dialect!r}")


@dataclass(frozen=True)
class CandidateRecord:
    candidate_index: int
    rule_id: str | None
    status: str  # proposal fate: selected | scored | reverted | discarded-*
    validation_f1: float | None

    def as_dict(self) -> dict:
        return {
            "candidate_index": self.candidate_index,
            "rule_id": self.rule_id,
            "status": self.status,
            "validation_f1": self.validation_f1,
        }


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    candidates: tuple[CandidateRecord, ...]
    selected_rule_ids: tuple[str, ...]
    best_validation: EvaluationReport | None

    def as_dict(self) -> dict:
        return {
            "iteration": self.iteration,
            "candidates": [c.as_dict() for c in self.candidates],
            "selected_rule_ids": list(self.selected_rule_ids),
            "best_validation": (
                None if self.best_validation is None else self.best_validation.as_dict()
            ),
        }


class _Agent:
    """Shared gateway plumbing: render, send, log, extract."""

    def __init__(self, gateway, transcript: TranscriptLog | None):
        self.gateway = gateway
        self.transcript = transcript or TranscriptLog(None)
        self.calls = 0

    def ask(self, role: str, context: dict[str, str]) -> str:
        request = CompletionRequest.for_role(
            role, system_prompt(role), render_prompt(role, context)
        )
        exchange = self.gateway.complete(request)
        self.transcript.record(exchange)
        self.calls += 1
        return exchange.response


def validation_labels(
    rule: RuleArtifact, validation: MetricSeries, runtime: RuleRuntime, chunk_size: int
) -> LabelSequence | None:
    """Chunk-wise rule predictions over the validation series, or None when
    any chunk execution fails."""
    parts: list[int] = []
    for chunk in chunk_series(validation, chunk_size):
        outcome = runtime.execute(rule, chunk)
        if not outcome.ok:
            return None
        assert outcome.labels is not None
        parts.extend(outcome.labels)
    return LabelSequence.of(parts)


def score_rule(
    rule: RuleArtifact, validation: MetricSeries, runtime: RuleRuntime, chunk_size: int
) -> RuleArtifact | None:
    predicted = validation_labels(rule, validation, runtime, chunk_size)
    if predicted is None:
        return None
    assert validation.labels is not None
    return rule.with_scores(evaluate_all(validation.labels, predicted))


def _f1(rule: RuleArtifact) -> float:
    assert rule.validation_scores is not None
    return rule.validation_scores.primary_f1


def repair_loop(
    candidate: RuleArtifact,
    agent: _Agent,
    runtime: RuleRuntime,
    max_rounds: int,
) -> RuleArtifact | None:
    """Return the first version of the candidate that passes the syntax
    check, asking the repair agent up to max_rounds times.  None when the
    candidate stays broken."""
    outcome = runtime.syntax_check(candidate)
    if outcome.ok:
        return candidate
    current = candidate
    diagnostic = outcome.diagnostic
    for round_number in range(1, max_rounds + 1):
        response = agent.ask(ROLE_REPAIR, repair_context(current.source, diagnostic))
        try:
            source = extract_code(response)
        except ExtractionError:
            continue
        repaired = RuleArtifact.create(
            rule_id=f"{candidate.rule_id}-r{round_number}",
            dialect=candidate.dialect,
            source=source,
            created_from=Provenance("repair", candidate.rule_id),
            trial=candidate.trial,
            iteration=candidate.iteration,
        )
        outcome = runtime.syntax_check(repaired)
        if outcome.ok:
            return repaired
        current, diagnostic = repaired, outcome.diagnostic
    return None


def _incorrect_block(
    previous: RuleArtifact,
    candidate: RuleArtifact,
    validation: MetricSeries,
    runtime: RuleRuntime,
    chunk_size: int,
) -> str:
    prev_labels = validation_labels(previous, validation, runtime, chunk_size)
    cand_labels = validation_labels(candidate, validation, runtime, chunk_size)
    if prev_labels is None or cand_labels is None or validation.labels is None:
        return ""
    rows = []
    for i, (gt, p, c) in enumerate(zip(validation.labels, prev_labels, cand_labels)):
        if p == gt and c != gt:
            rows.append((i, validation.values[i], gt, p, c))
        if len(rows) == MAX_INCORRECT_SAMPLES:
            break
    if not rows:
        return ""
    return format_incorrect_samples(rows)


def review_loop(
    candidate: RuleArtifact,
    previous_best: RuleArtifact | None,
    validation: MetricSeries,
    agent: _Agent,
    runtime: RuleRuntime,
    config: TrainingConfig,
) -> RuleArtifact:
    """Accept the candidate unless it regresses validation accuracy; on a
    regression, let the review agent revise it up to max_review_rounds
    times, then fall back to the previous best (revert)."""
    assert candidate.validation_scores is not None
    if previous_best is None or _f1(candidate) >= _f1(previous_best):
        return candidate

    current = candidate
    for round_number in range(1, config.max_review_rounds + 1):
        context = review_context(
            candidate_source=current.source,
            metrics_block=format_metrics_block(
                {
                    "previous": previous_best.validation_scores.as_dict()["event_f1_pa"],
                    "candidate": current.validation_scores.as_dict()["event_f1_pa"],
                }
            ),
            diff_block=format_diff(previous_best.source, current.source),
            incorrect_block=_incorrect_block(
                previous_best, current, validation, runtime, config.chunk_size
            ),
            previous_source=previous_best.source,
        )
        response = agent.ask(ROLE_REVIEW, context)
        try:
            source = extract_code(response)
        except ExtractionError:
            continue
        revised = RuleArtifact.create(
            rule_id=f"{candidate.rule_id}-v{round_number}",
            dialect=candidate.dialect,
            source=source,
            created_from=Provenance("review", candidate.rule_id),
            trial=candidate.trial,
            iteration=candidate.iteration,
        )
        if not runtime.syntax_check(revised).ok:
            repaired = repair_loop(revised, agent, runtime, config.max_repair_rounds)
            if repaired is None:
                continue
            revised = repaired
        scored = score_rule(revised, validation, runtime, config.chunk_size)
        if scored is None:
            continue
        if _f1(scored) >= _f1(previous_best):
            return scored
        current = scored
    return previous_best


def _titled_sections(chunks: list[Chunk]) -> list[tuple[str, Chunk]]:
    sections = []
    for i, chunk in enumerate(chunks, start=1):
        has_anomalies = chunk.labels is not None and chunk.labels.count_abnormal() > 0
        kind = "contains anomalies" if has_anomalies else "normal reference"
        sections.append((f"Sample {i} ({kind})", chunk))
    return sections


def train_trial(
    train_chunks: list[Chunk],
    validation: MetricSeries,
    config: TrainingConfig,
    gateway,
    runtime: RuleRuntime,
    registry: Path | None = None,
    transcript: TranscriptLog | None = None,
    records_path: Path | None = None,
    trial: int = 1,
) -> tuple[list[RuleArtifact], list[IterationRecord]]:
    """Run one full training trial; returns (selected rules, records).

    On a gateway failure the records accumulated so far are persisted to
    records_path before the error propagates, so the run is inspectable.
    """
    if not train_chunks:
        raise TrainingError("no training chunks")
    if len(validation) < 2 or validation.labels is None:
        raise TrainingError("validation series must be labeled and have >= 2 points")

    agent = _Agent(gateway, transcript)
    render_config = PreprocessConfig(chunk_size=config.chunk_size)
    data_block = format_training_block(_titled_sections(train_chunks), render_config)

    records: list[IterationRecord] = []
    selected: list[RuleArtifact] = []
    best: RuleArtifact | None = None
    saved: set[str] = set()

    try:
        for iteration in range(1, config.max_iterations + 1):
            survivors: list[tuple[int, RuleArtifact]] = []
            candidate_records: list[CandidateRecord] = []
            context = detection_context(
                data_block, previous_source=best.source if best else None
            )
            for index in range(config.n_candidates):
                rule_id = f"t{trial}-i{iteration:02d}-c{index}"
                response = agent.ask(ROLE_DETECTION, context)
                try:
                    source = extract_code(response)
                except ExtractionError:
                    candidate_records.append(
                        CandidateRecord(index, None, "discarded-extraction", None)
                    )
                    continue
                fresh = RuleArtifact.create(
                    rule_id=rule_id,
                    dialect=config.dialect,
                    source=source,
                    trial=trial,
                    iteration=iteration,
                )
                repaired = repair_loop(fresh, agent, runtime, config.max_repair_rounds)
                if repaired is None:
                    candidate_records.append(
                        CandidateRecord(index, rule_id, "discarded-syntax", None)
                    )
                    continue
                scored = score_rule(repaired, validation, runtime, config.chunk_size)
                if scored is None:
                    candidate_records.append(
                        CandidateRecord(index, repaired.rule_id, "discarded-validation", None)
                    )
                    continue
                reviewed = review_loop(scored, best, validation, agent, runtime, config)
                status = "reverted" if reviewed is best and best is not None else "scored"
                survivors.append((index, reviewed))
                candidate_records.append(
                    CandidateRecord(index, reviewed.rule_id, status, _f1(reviewed))
                )

            if survivors:
                # Highest validation score wins; ties keep the earlier
                # candidate; a rule already selected is never duplicated.
                ranked = sorted(survivors, key=lambda item: (-_f1(item[1]), item[0]))
                picked: list[RuleArtifact] = []
                for _, rule in ranked:
                    if rule.rule_id not in {r.rule_id for r in picked}:
                        picked.append(rule)
                    if len(picked) == config.top_k:
                        break
                selected = picked
                best = selected[0]
                marked = {rule.rule_id for rule in selected}
                candidate_records = [
                    replace(rec, status="selected")
                    if rec.rule_id in marked and rec.status == "scored"
                    else rec
                    for rec in candidate_records
                ]
                if registry is not None:
                    for rule in selected:
                        if rule.rule_id not in saved:
                            save_rule(registry, rule)
                            saved.add(rule.rule_id)

            records.append(
                IterationRecord(
                    iteration=iteration,
                    candidates=tuple(candidate_records),
                    selected_rule_ids=tuple(rule.rule_id for rule in selected),
                    best_validation=best.validation_scores if best else None,
                )
            )
    except GatewayError:
        if records_path is not None:
            write_records(records_path, records)
        raise

    if records_path is not None:
        write_records(records_path, records)
    return selected, records


def write_records(path: Path, records: list[IterationRecord]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = json.dumps([r.as_dict() for r in records], indent=2, sort_keys=True)
    path.write_text(payload + "\n", encoding="utf-8")


def calibrate_chunk_size(
    series: MetricSeries,
    candidate_sizes: list[int],
    gateway,
    runtime: RuleRuntime,
    config: TrainingConfig | None = None,
    transcript: TranscriptLog | None = None,
) -> int:
    """Propose a few detection-only rules per candidate size and keep the
    size whose best proposal scores highest on the series; ties prefer
    the smaller size."""
    if not candidate_sizes:
        raise TrainingError("no candidate chunk sizes")
    config = config or TrainingConfig()
    agent = _Agent(gateway, transcript)

    results: list[tuple[float, int]] = []
    for size in candidate_sizes:
        try:
            chunks = chunk_series(series, size)
        except Exception:
            continue
        render_config = PreprocessConfig(chunk_size=size)
        data_block = format_training_block(_titled_sections(chunks[:4]), render_config)
        context = detection_context(data_block)
        size_best: float | None = None
        for proposal in range(CALIBRATION_PROPOSALS):
            response = agent.ask(ROLE_DETECTION, context)
            try:
                source = extract_code(response)
            except ExtractionError:
                continue
            rule = RuleArtifact.create(
                rule_id=f"calib-s{size}-p{proposal}",
                dialect=config.dialect,
                source=source,
            )
            if not runtime.syntax_check(rule).ok:
                continue
            scored = score_rule(rule, series, runtime, size)
            if scored is None:
                continue
            f1 = _f1(scored)
            size_best = f1 if size_best is None else max(size_best, f1)
        if size_best is not None:
            results.append((size_best, size))
    if not results:
        raise TrainingError("every proposal failed for every candidate size")
    results.sort(key=lambda item: (-item[0], item[1]))
    return results[0][1]
