"""Command-line entry points: train, detect, evaluate, calibrate.

Configuration is a single YAML file; unknown keys are rejected so typos
fail fast.  Credentials never live in the file: the gateway section
names an environment variable and the value is read at startup.

Exit codes: 0 ok, 1 usage or internal failure, 2 data error, 3 gateway
error, 4 sandbox error.
"""

from __future__ import annotations

import argparse
import json
import os
import random
import sys
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .dataset import (
    DatasetMode,
    DatasetSpec,
    LabelSequence,
    MetricSeries,
    load_dataset,
    read_metric_csv,
    split_train_test,
)
from .errors import (
    DataError,
    GatewayError,
    RuleforgeError,
    SandboxError,
    SandboxUnavailableError,
)
from .evaluation import evaluate_all, extract_segments
from .fusion import FusionBundle, detect, read_base_labels
from .gateway import (
    BACKEND_HTTP,
    BACKEND_MOCK,
    HttpGateway,
    MockGateway,
    MockScript,
    TranscriptLog,
)
from .preprocess import CHUNK_SIZE_PRESETS, PreprocessConfig, chunk_series, scale_series
from .rules import DIALECT_DSL, DIALECT_SCRIPT, load_rule
from .runtime import DEFAULT_TIMEOUT, SHIM_ENV_VAR, RuleRuntime, ScriptSandbox
from .selection import build_plan
from .training import TrainingConfig, calibrate_chunk_size, train_trial, write_records

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_GATEWAY = 3
EXIT_SANDBOX = 4

#: Fraction of the training partition kept for training proper; the rest
#: is the held-out validation slice.
VALIDATION_SPLIT = 0.7


@dataclass(frozen=True)
class BundleConfig:
    base: str | None = None
    fn_rules: tuple[str, ...] = ()
    fp_rules: tuple[str, ...] = ()


@dataclass(frozen=True)
class GatewayConfig:
    backend: str = BACKEND_MOCK
    endpoint: str | None = None
    model: str | None = None
    credential_env: str | None = None
    mock_script: str | None = None


@dataclass(frozen=True)
class RunConfig:
    dataset: DatasetSpec
    preprocess: PreprocessConfig = field(default_factory=PreprocessConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    gateway: GatewayConfig = field(default_factory=GatewayConfig)
    registry: str | None = None
    output_dir: str = "runs"
    seed: int = 0
    sandbox_command: str | None = None
    sandbox_timeout: float = DEFAULT_TIMEOUT
    bundles: dict[str, BundleConfig] = field(default_factory=dict)


def _require_keys(section: dict, allowed: set[str], where: str) -> None:
    unknown = set(section) - allowed
    if unknown:
        raise DataError(f"config {where}: unknown keys {sorted(unknown)}")


def _resolve_chunk_size(value) -> int:
    if isinstance(value, str):
        preset = value.strip().lower()
        if preset not in CHUNK_SIZE_PRESETS:
            raise DataError(
                f"config preprocess.chunk_size: unknown preset {value!r}; "
                f"presets are {sorted(CHUNK_SIZE_PRESETS)}"
            )
        return CHUNK_SIZE_PRESETS[preset]
    if isinstance(value, bool) or not isinstance(value, int):
        raise DataError("config preprocess.chunk_size: expected an integer or preset name")
    return value


def load_config(path: Path) -> RunConfig:
    try:
        raw = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise DataError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise DataError(f"config {path} is not valid YAML: {exc}") from exc
    if not isinstance(raw, dict):
        raise DataError(f"config {path}: top level must be a mapping")
    _require_keys(
        raw,
        {"dataset", "preprocess", "training", "gateway", "registry", "output_dir",
         "seed", "sandbox_command", "sandbox_timeout", "bundles"},
        "top level",
    )

    dataset_raw = raw.get("dataset")
    if not isinstance(dataset_raw, dict) or "source" not in dataset_raw:
        raise DataError("config dataset: required section with a 'source' key")
    _require_keys(dataset_raw, {"source", "split_ratio", "mode", "group_key"}, "dataset")
    mode_raw = dataset_raw.get("mode", "auto")
    try:
        mode = DatasetMode(mode_raw)
    except ValueError:
        raise DataError(
            f"config dataset.mode: {mode_raw!r} is not one of "
            f"{[m.value for m in DatasetMode]}"
        ) from None
    dataset = DatasetSpec(
        source=str(dataset_raw["source"]),
        split_ratio=float(dataset_raw.get("split_ratio", 0.7)),
        mode=mode,
        group_key=dataset_raw.get("group_key"),
    )

    pre_raw = raw.get("preprocess", {}) or {}
    _require_keys(pre_raw, {"significant_figures", "chunk_size", "digit_spacing"}, "preprocess")
    preprocess = PreprocessConfig(
        significant_figures=int(pre_raw.get("significant_figures", 4)),
        chunk_size=_resolve_chunk_size(pre_raw.get("chunk_size", 500)),
        digit_spacing=bool(pre_raw.get("digit_spacing", False)),
    )

    train_raw = raw.get("training", {}) or {}
    _require_keys(
        train_raw,
        {"n_candidates", "top_k", "max_iterations", "max_repair_rounds",
         "max_review_rounds", "dialect"},
        "training",
    )
    try:
        training = TrainingConfig(
            n_candidates=int(train_raw.get("n_candidates", 5)),
            top_k=int(train_raw.get("top_k", 1)),
            max_iterations=int(train_raw.get("max_iterations", 20)),
            max_repair_rounds=int(train_raw.get("max_repair_rounds", 3)),
            max_review_rounds=int(train_raw.get("max_review_rounds", 3)),
            chunk_size=preprocess.chunk_size,
            dialect=str(train_raw.get("dialect", DIALECT_SCRIPT)),
            seed=int(raw.get("seed", 0)),
        )
    except ValueError as exc:
        raise DataError(f"config training: {exc}") from exc

    gw_raw = raw.get("gateway", {}) or {}
    _require_keys(gw_raw, {"backend", "endpoint", "model", "credential_env", "mock_script"},
                  "gateway")
    backend = gw_raw.get("backend", BACKEND_MOCK)
    if backend not in (BACKEND_MOCK, BACKEND_HTTP):
        raise DataError(f"config gateway.backend: {backend!r} must be mock or http")
    gateway = GatewayConfig(
        backend=backend,
        endpoint=gw_raw.get("endpoint"),
        model=gw_raw.get("model"),
        credential_env=gw_raw.get("credential_env"),
        mock_script=gw_raw.get("mock_script"),
    )

    bundles_raw = raw.get("bundles", {}) or {}
    if not isinstance(bundles_raw, dict):
        raise DataError("config bundles: must be a mapping of bundle name to settings")
    bundles: dict[str, BundleConfig] = {}
    for name, spec in bundles_raw.items():
        spec = spec or {}
        _require_keys(spec, {"base", "fn_rules", "fp_rules"}, f"bundles.{name}")
        bundles[name] = BundleConfig(
            base=spec.get("base"),
            fn_rules=tuple(spec.get("fn_rules", ()) or ()),
            fp_rules=tuple(spec.get("fp_rules", ()) or ()),
        )

    return RunConfig(
        dataset=dataset,
        preprocess=preprocess,
        training=training,
        gateway=gateway,
        registry=raw.get("registry"),
        output_dir=str(raw.get("output_dir", "runs")),
        seed=int(raw.get("seed", 0)),
        sandbox_command=raw.get("sandbox_command"),
        sandbox_timeout=float(raw.get("sandbox_timeout", DEFAULT_TIMEOUT)),
        bundles=bundles,
    )


def build_gateway(config: GatewayConfig):
    if config.backend == BACKEND_MOCK:
        if not config.mock_script:
            raise GatewayError("mock backend needs gateway.mock_script (or --mock-script)")
        return MockGateway(MockScript.load(Path(config.mock_script)))
    credential = None
    if config.credential_env:
        credential = os.environ.get(config.credential_env)
        if not credential:
            raise GatewayError(
                f"credential environment variable {config.credential_env} is not set"
            )
    return HttpGateway(
        endpoint=config.endpoint or "", model=config.model or "", credential=credential
    )


def build_runtime(config: RunConfig, needs_sandbox: bool) -> RuleRuntime:
    sandbox = None
    if config.sandbox_command:
        sandbox = ScriptSandbox.from_command(config.sandbox_command)
    else:
        sandbox = ScriptSandbox.from_environment()
    if needs_sandbox and sandbox is None:
        # Surface the configuration problem now, not mid-run.
        raise SandboxUnavailableError(
            f"script-dialect rules need a sandbox; set sandbox_command or ${SHIM_ENV_VAR}"
        )
    return RuleRuntime(sandbox=sandbox, timeout=config.sandbox_timeout)


def _apply_overrides(config: RunConfig, args: argparse.Namespace) -> RunConfig:
    from dataclasses import replace

    if getattr(args, "seed", None) is not None:
        config = replace(
            config, seed=args.seed, training=replace(config.training, seed=args.seed)
        )
    if getattr(args, "registry", None):
        config = replace(config, registry=str(args.registry))
    if getattr(args, "out", None):
        config = replace(config, output_dir=str(args.out))
    if getattr(args, "mock_script", None):
        config = replace(
            config,
            gateway=GatewayConfig(backend=BACKEND_MOCK, mock_script=str(args.mock_script)),
        )
    return config


def _registry_path(config: RunConfig, out_dir: Path) -> Path:
    return Path(config.registry) if config.registry else out_dir / "registry"


def _prepare_unit_data(
    unit_series: tuple[MetricSeries, ...], config: RunConfig
) -> tuple[list, MetricSeries]:
    """Chunked training data and the held-out validation slice for a unit."""
    train_chunks = []
    validation: MetricSeries | None = None
    for series in unit_series:
        scaled = scale_series(series, config.preprocess.significant_figures)
        train_part, _test_part = split_train_test(scaled, config.dataset.split_ratio)
        inner_train, inner_val = split_train_test(train_part, VALIDATION_SPLIT)
        train_chunks.extend(chunk_series(inner_train, config.preprocess.chunk_size))
        if validation is None or len(inner_val) > len(validation):
            validation = inner_val
    assert validation is not None
    return train_chunks, validation


def cmd_train(args: argparse.Namespace) -> int:
    config = _apply_overrides(load_config(args.config), args)
    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    registry = _registry_path(config, out_dir)

    dataset = load_dataset(Path(config.dataset.source), config.dataset)
    plan = build_plan(dataset, config.dataset.mode, config.preprocess.chunk_size)
    gateway = build_gateway(config.gateway)
    runtime = build_runtime(config, needs_sandbox=config.training.dialect == DIALECT_SCRIPT)
    transcript = TranscriptLog(out_dir / "transcripts.jsonl")

    summary: dict[str, dict] = {}
    for trial_number, unit in enumerate(plan.units, start=1):
        train_chunks, validation = _prepare_unit_data(unit.series, config)
        selected, records = train_trial(
            train_chunks,
            validation,
            config.training,
            gateway,
            runtime,
            registry=registry,
            transcript=transcript,
            records_path=out_dir / f"records-{unit.unit_id}.json",
            trial=trial_number,
        )
        summary[unit.unit_id] = {
            "selected_rule_ids": [rule.rule_id for rule in selected],
            "best_event_f1_pa": (
                selected[0].validation_scores.primary_f1 if selected else None
            ),
            "iterations": len(records),
        }
        best = summary[unit.unit_id]["best_event_f1_pa"]
        shown = "n/a" if best is None else f"{best:.4f}"
        print(f"{unit.unit_id}: selected {summary[unit.unit_id]['selected_rule_ids']} "
              f"(validation Event-F1 PA {shown})")

    (out_dir / "summary.json").write_text(
        json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    print(f"run directory: {out_dir}")
    return EXIT_OK


def _load_label_csv(path: Path) -> LabelSequence:
    """Accept either a labeled metric CSV or a plain timestamp,label CSV."""
    with Path(path).open(encoding="utf-8") as fh:
        header = fh.readline().strip().lower()
    if header.replace(" ", "") == "timestamp,label":
        return read_base_labels(path).labels
    series = read_metric_csv(path, require_labels=True)
    assert series.labels is not None
    return series.labels


def cmd_evaluate(args: argparse.Namespace) -> int:
    gt = _load_label_csv(args.ground_truth)
    pred = _load_label_csv(args.predictions)
    if len(gt) != len(pred):
        raise DataError(
            f"label length mismatch: ground truth has {len(gt)}, predictions {len(pred)}"
        )
    report = evaluate_all(gt, pred).as_dict()
    text = json.dumps(report, indent=2, sort_keys=True)
    print(text)
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text + "\n", encoding="utf-8")
    return EXIT_OK


def _write_labels_csv(path: Path, series: MetricSeries, labels: LabelSequence) -> None:
    lines = ["timestamp,label"]
    for i, label in enumerate(labels):
        stamp = series.timestamps[i] if series.timestamps is not None else i
        lines.append(f"{stamp},{label}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _plot_detection(path: Path, series: MetricSeries, labels: LabelSequence) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(12, 4))
    xs = range(len(series))
    ax.plot(xs, series.values, linewidth=0.8, label=series.metric_id)
    for segment in extract_segments(labels):
        ax.axvspan(segment.start, segment.end + 1, alpha=0.3, color="red")
    if series.labels is not None:
        for segment in extract_segments(series.labels):
            ax.axvspan(segment.start, segment.end + 1, alpha=0.2, color="green")
    ax.set_xlabel("index")
    ax.set_ylabel("value")
    ax.legend(loc="upper right")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def cmd_detect(args: argparse.Namespace) -> int:
    config = _apply_overrides(load_config(args.config), args)
    if args.bundle not in config.bundles:
        raise DataError(
            f"bundle {args.bundle!r} not defined in config; "
            f"available: {sorted(config.bundles)}"
        )
    bundle_config = config.bundles[args.bundle]
    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    registry = _registry_path(config, out_dir)

    series = read_metric_csv(Path(args.series), require_labels=False)
    series = scale_series(series, config.preprocess.significant_figures)

    fn_rules = tuple(load_rule(registry, rid) for rid in bundle_config.fn_rules)
    fp_rules = tuple(load_rule(registry, rid) for rid in bundle_config.fp_rules)
    base = read_base_labels(Path(bundle_config.base)) if bundle_config.base else None
    if base is not None and len(base.labels) != len(series):
        raise DataError(
            f"base labels ({len(base.labels)}) do not align with series ({len(series)})"
        )
    bundle = FusionBundle(base=base, fn_rules=fn_rules, fp_rules=fp_rules)

    needs_sandbox = any(r.dialect == DIALECT_SCRIPT for r in fn_rules + fp_rules)
    runtime = build_runtime(config, needs_sandbox=needs_sandbox)
    labels = detect(series, bundle, runtime, config.preprocess.chunk_size)

    labels_path = out_dir / f"{series.metric_id}-labels.csv"
    _write_labels_csv(labels_path, series, labels)
    segments = extract_segments(labels)
    report = {
        "metric_id": series.metric_id,
        "points": len(series),
        "abnormal_points": labels.count_abnormal(),
        "incidents": [
            {"start": s.start, "end": s.end, "length": s.end - s.start + 1}
            for s in segments
        ],
        "bundle": args.bundle,
        "rules": {
            "fn": [r.rule_id for r in fn_rules],
            "fp": [r.rule_id for r in fp_rules],
        },
        "base_source": None if base is None else base.source_name,
    }
    report_path = out_dir / f"{series.metric_id}-incidents.json"
    report_path.write_text(
        json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    print(f"labels: {labels_path}")
    print(f"incidents: {report_path} ({len(segments)} incident(s))")
    if args.plot:
        plot_path = out_dir / f"{series.metric_id}-detection.png"
        _plot_detection(plot_path, series, labels)
        print(f"plot: {plot_path}")
    return EXIT_OK


def cmd_calibrate(args: argparse.Namespace) -> int:
    config = _apply_overrides(load_config(args.config), args)
    dataset = load_dataset(Path(config.dataset.source), config.dataset)
    matches = [s for s in dataset if s.metric_id == args.metric]
    if not matches:
        raise DataError(
            f"metric {args.metric!r} not in dataset; "
            f"available: {[s.metric_id for s in dataset]}"
        )
    series = scale_series(matches[0], config.preprocess.significant_figures)
    train_part, _ = split_train_test(series, config.dataset.split_ratio)

    sizes = [int(s) for s in args.sizes.split(",")] if args.sizes else sorted(
        CHUNK_SIZE_PRESETS.values()
    )
    gateway = build_gateway(config.gateway)
    runtime = build_runtime(config, needs_sandbox=config.training.dialect == DIALECT_SCRIPT)
    chosen = calibrate_chunk_size(train_part, sizes, gateway, runtime, config.training)
    print(chosen)
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors by default; 2 is reserved for data
    # errors here, so remap to 1.
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common_flags(parser: argparse.ArgumentParser, needs_config: bool = True) -> None:
    if needs_config:
        parser.add_argument("--config", required=True, type=Path,
                            help="path to the YAML run configuration")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the configured random seed")
    parser.add_argument("--registry", type=Path, default=None,
                        help="override the rule registry directory")
    parser.add_argument("--mock-script", type=Path, default=None, dest="mock_script",
                        help="use the mock gateway with this response script")
    parser.add_argument("--out", type=Path, default=None,
                        help="override the output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="ruleforge",
        description="Train, fuse, and evaluate executable anomaly-detection rules.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", parents=[], help="run the full training loop")
    _common_flags(p_train)
    p_train.set_defaults(func=cmd_train)

    p_detect = sub.add_parser("detect", help="label a series with a trained bundle")
    _common_flags(p_detect)
    p_detect.add_argument("--series", required=True, type=Path,
                          help="CSV of the series to label")
    p_detect.add_argument("--bundle", required=True,
                          help="bundle name from the config's bundles section")
    p_detect.add_argument("--plot", action="store_true",
                          help="also write a PNG with prediction overlays")
    p_detect.set_defaults(func=cmd_detect)

    p_eval = sub.add_parser("evaluate", help="score predictions against ground truth")
    p_eval.add_argument("--ground-truth", required=True, type=Path, dest="ground_truth")
    p_eval.add_argument("--predictions", required=True, type=Path)
    p_eval.add_argument("--out", type=Path, default=None,
                        help="also write the JSON report here")
    p_eval.set_defaults(func=cmd_evaluate)

    p_cal = sub.add_parser("calibrate", help="pick a chunk size for a metric")
    _common_flags(p_cal)
    p_cal.add_argument("--metric", required=True, help="metric id to calibrate on")
    p_cal.add_argument("--sizes", default=None,
                       help="comma-separated candidate chunk sizes "
                            "(default: the built-in presets)")
    p_cal.set_defaults(func=cmd_calibrate)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    random.seed(getattr(args, "seed", None) or 0)
    try:
        return args.func(args)
    except SandboxError as exc:
        print(f"sandbox error: {exc}", file=sys.stderr)
        return EXIT_SANDBOX
    except GatewayError as exc:
        print(f"gateway error: {exc}", file=sys.stderr)
        return EXIT_GATEWAY
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except RuleforgeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
