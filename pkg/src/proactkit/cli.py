"""Command-line entry point for reproducible evaluation, reward, ranking,
alignment, simulation, and annotation runs.

Exit codes: 0 success, 1 input validation, 2 I/O, 3 configuration.
"""
from __future__ import annotations

import argparse
import csv
import json
import re
import sys
from pathlib import Path
from typing import Any, Sequence

import yaml

from . import alignment as align_mod
from . import annotator as annot_mod
from . import metrics as metrics_mod
from . import orchsim
from . import ranking as ranking_mod
from . import records
from . import rewards as rewards_mod
from .config import ConfigError, RunConfig, load_config
from .datamodel import validate_instance
from .records import RecordFormatError

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_IO = 2
EXIT_CONFIG = 3


class ValidationFailure(Exception):
    """Input data failed validation; carries the violation listing."""

    def __init__(self, message: str, violations: Sequence[str] = ()):
        super().__init__(message)
        self.violations = list(violations)


def _write_json_report(path: Path, payload: dict[str, Any], config: RunConfig) -> None:
    payload = {"config_digest": config.digest(), **payload}
    path.parent.mkdir(parents=True, exist_ok=True)
    with records.open_maybe_gzip(path, "wt") as fh:
        fh.write(records.canonical_json(payload))


def _metric_cell(value: float | None) -> str:
    return "" if value is None else f"{value:.6f}"


# --------------------------------------------------------------------------
# catalog
# --------------------------------------------------------------------------


def cmd_catalog(args: argparse.Namespace, config: RunConfig) -> int:
    from .datamodel import render_catalog

    docs = []
    for path in (args.ontology, args.type_spec, args.properties):
        with records.open_maybe_gzip(path, "rt") as fh:
            docs.append(json.load(fh))
    catalog = render_catalog(*docs)
    records.save_catalog(catalog, args.out)
    return EXIT_OK


# --------------------------------------------------------------------------
# evaluate
# --------------------------------------------------------------------------


def _read_docs_lenient(path: str | Path, violations: list[str]):
    """Yield parsed records, turning bad lines into violations instead of aborting."""
    with records.open_maybe_gzip(path, "rt") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                yield json.loads(line)
            except json.JSONDecodeError as exc:
                violations.append(f"{path}:{line_no}: not valid JSON ({exc})")


def cmd_evaluate(args: argparse.Namespace, config: RunConfig) -> int:
    catalog = records.load_catalog(args.catalog)
    violations: list[str] = []
    dialogues = []
    for idx, doc in enumerate(_read_docs_lenient(args.dataset, violations)):
        try:
            dialogues.append(records.eval_dialogue_from_doc(doc))
        except RecordFormatError as exc:
            violations.append(f"record {idx}: {exc}")
    if not dialogues and not violations:
        raise ValidationFailure("no dialogues in dataset")

    ftr_mode = metrics_mod.FaultMode(args.ftr_mode)
    per_dialogue: dict[str, list] = {}
    for ed in dialogues:
        for et in ed.turns:
            for inst in (*et.predicted, *et.reference):
                violations.extend(f"{ed.id}: {v}" for v in validate_instance(inst, catalog))
        per_dialogue[ed.id] = metrics_mod.evaluate_dialogue(ed, ftr_mode=ftr_mode)

    report = metrics_mod.aggregate_report(per_dialogue)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    agg_payload: dict[str, Any] = {
        "dialogue_count": report.dialogue_count,
        "columns": list(metrics_mod.METRIC_COLUMNS),
        "micro": report.column_values(),
        "metrics": {
            name: {
                "micro_mean": agg.mean,
                "defined_turns": agg.defined_turns,
                "undefined_turns": agg.undefined_turns,
                "dialogue_mean": agg.dialogue_mean,
                "dialogue_std": agg.dialogue_std,
            }
            for name, agg in report.metrics.items()
        },
        "difference": None
        if report.difference is None
        else {
            "mu": report.difference.mu,
            "delta": report.difference.delta,
            "inputs": list(report.difference.inputs),
        },
        "warnings": list(report.warnings),
        "violations": violations,
    }
    _write_json_report(out_dir / "aggregate.json", agg_payload, config)

    with records.open_maybe_gzip(out_dir / "per_dialogue.csv", "wt") as fh:
        fh.write(f"# config_digest={config.digest()}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["dialogue_id", *metrics_mod.METRIC_COLUMNS])
        for dialogue_id in sorted(per_dialogue):
            row_report = metrics_mod.aggregate_report({dialogue_id: per_dialogue[dialogue_id]})
            cells = row_report.column_values()
            writer.writerow(
                [dialogue_id, *(_metric_cell(cells[c]) for c in metrics_mod.METRIC_COLUMNS)]
            )

    if violations:
        for v in violations:
            print(f"violation: {v}", file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK


# --------------------------------------------------------------------------
# reward
# --------------------------------------------------------------------------


def _verify_group_metrics(group) -> list[str]:
    """Recompute stored metric scores from the predicted-action payloads."""
    problems = []
    if group.turn is None or group.reference is None or group.ranges is None:
        return [f"group {group.scenario_id!r}: no payload to verify against"]
    for t in group.trajectories:
        if t.predicted is None:
            problems.append(f"group {group.scenario_id!r} trajectory {t.trajectory_id}: no payload")
            continue
        recomputed = metrics_mod.turn_reward_metrics(
            metrics_mod.TurnMetricInput(
                turn_index=group.turn,
                predicted=t.predicted,
                reference=group.reference,
                ranges=group.ranges,
            )
        )
        for name, expected in recomputed.items():
            stored = getattr(t.metrics, name if name != "ptr" else "ptr")
            if abs(stored - expected) > 1e-9:
                problems.append(
                    f"group {group.scenario_id!r} trajectory {t.trajectory_id}: "
                    f"{name} stored {stored} != recomputed {expected}"
                )
    return problems


def _apply_scripted_judge(groups, responses_path, max_retries, max_concurrent):
    responses = {
        doc["scenario_id"]: doc["response"] for doc in records.read_jsonl(responses_path)
    }
    missing = [g.scenario_id for g in groups if g.scenario_id not in responses]
    if missing:
        raise ValidationFailure("no judge response for groups: " + ", ".join(missing))

    from concurrent.futures import ThreadPoolExecutor

    def judge_one(group):
        scores = rewards_mod.score_group(
            group,
            transport=lambda _prompt, body=responses[group.scenario_id]: body,
            max_retries=max_retries,
            sleep=lambda _delay: None,
        )
        return rewards_mod.attach_scores(group, scores)

    with ThreadPoolExecutor(max_workers=max(1, max_concurrent)) as pool:
        return list(pool.map(judge_one, groups))


def cmd_reward(args: argparse.Namespace, config: RunConfig) -> int:
    rule_name = args.rule or config.get("llm.trajectory_reward_rule")
    schedule = rewards_mod.RewardSchedule.from_rule_name(
        rule_name,
        lam=args.hybrid_lambda if args.hybrid_lambda is not None else config.get("llm.hybrid_ruler_weight", 0.5),
        lambda_max=args.lambda_max
        if args.lambda_max is not None
        else config.get("llm.upper_limit_weight_for_scheduled_ruler", 0.3),
        total_steps=args.total_steps or config.get("llm.total_steps", 1),
    )
    groups = [records.group_from_doc(doc) for doc in records.read_jsonl(args.rollouts)]
    if not groups:
        raise ValidationFailure("no rollout groups")

    if args.verify_metrics:
        problems = [p for g in groups for p in _verify_group_metrics(g)]
        if problems:
            raise ValidationFailure("stored metrics disagree with payloads", problems)

    if args.judge:
        if not args.judge.startswith("scripted="):
            raise ConfigError(f"unknown judge transport {args.judge!r} (use 'scripted=PATH')")
        groups = _apply_scripted_judge(
            groups,
            args.judge.split("=", 1)[1],
            max_retries=config.get("llm.judger.max_retries", 3),
            max_concurrent=args.max_concurrent_api_number,
        )

    if schedule.needs_judge:
        missing = [
            g.scenario_id
            for g in groups
            if any(t.judge_score is None for t in g.trajectories)
        ]
        if missing:
            raise ValidationFailure(
                f"reward rule {rule_name!r} needs judge scores; missing in groups: "
                + ", ".join(missing)
            )

    digest = config.digest()
    rewarded_docs = []
    for group in groups:
        step = args.step if args.step is not None else group.step
        trajectories = []
        for t in group.trajectories:
            metrics = rewards_mod.TurnRewardInput(
                rac=t.metrics.rac,
                max_rac=t.metrics.max_rac,
                ptr=t.metrics.ptr,
                ftr=t.metrics.ftr,
                ruler=t.judge_score,
            )
            trajectories.append(
                rewards_mod.RolloutTrajectory(
                    trajectory_id=t.trajectory_id,
                    completion=t.completion,
                    metrics=metrics,
                    judge_score=t.judge_score,
                    reward=rewards_mod.compute_reward(schedule, metrics, step),
                    predicted=t.predicted,
                )
            )
        rewarded = rewards_mod.TrajectoryGroup(
            scenario_id=group.scenario_id,
            step=step,
            context_system=group.context_system,
            context_user=group.context_user,
            trajectories=tuple(trajectories),
            dialogue_id=group.dialogue_id,
            turn=group.turn,
            reference=group.reference,
            ranges=group.ranges,
        )
        doc = records.group_to_doc(rewarded)
        doc["config_digest"] = digest
        rewarded_docs.append(doc)
    records.write_jsonl(rewarded_docs, args.out)
    return EXIT_OK


# --------------------------------------------------------------------------
# rank
# --------------------------------------------------------------------------


def read_model_rows(path: str | Path) -> list[ranking_mod.ModelRow]:
    rows = []
    with records.open_maybe_gzip(path, "rt") as fh:
        reader = csv.DictReader(line for line in fh if not line.startswith("#"))
        for record in reader:
            try:
                rows.append(
                    ranking_mod.ModelRow(
                        model_id=record["model_id"],
                        ac=float(record["ac"]),
                        max_ac=float(record["max_ac"]),
                        difference=float(record["difference"]),
                        pt=float(record["pt"]),
                        ftr=float(record["ftr"]),
                        rar=float(record["rar"]),
                    )
                )
            except (KeyError, ValueError, TypeError) as exc:
                raise ValidationFailure(f"bad model row {record!r}: {exc}") from exc
    return rows


def cmd_rank(args: argparse.Namespace, config: RunConfig) -> int:
    rows = read_model_rows(args.table)
    if not rows:
        raise ValidationFailure("no model rows in table")
    results = ranking_mod.compute_pri(rows)
    ranked = ranking_mod.rank_group(results, top_k=args.top_k)
    with records.open_maybe_gzip(args.out, "wt") as fh:
        fh.write(f"# config_digest={config.digest()}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["rank", "top_k", "model_id", "pri", "ci", "ti", "tied"])
        for rr in ranked:
            writer.writerow(
                [
                    rr.rank,
                    f"({rr.top_k})" if rr.top_k else "",
                    rr.result.model_id,
                    f"{rr.result.pri:.6f}",
                    f"{rr.result.ci:.6f}",
                    f"{rr.result.ti:.6f}",
                    "tie" if rr.tied else "",
                ]
            )
    return EXIT_OK


# --------------------------------------------------------------------------
# align
# --------------------------------------------------------------------------


def _load_annotation_ranges(path: str | Path) -> dict[str, Any]:
    from .datamodel import compute_reference_ranges

    ranges = {}
    for doc in records.read_jsonl(path):
        if "reference_ranges" in doc:
            ranges[doc["id"]] = records.ranges_from_doc(doc["reference_ranges"])
        else:
            ranges[doc["id"]] = compute_reference_ranges(records.dialogue_from_doc(doc))
    return ranges


def cmd_align(args: argparse.Namespace, config: RunConfig) -> int:
    annotations = _load_annotation_ranges(args.annotations)
    triggers = [
        align_mod.ObservedTrigger(
            dialogue_id=doc["dialogue_id"], turn=int(doc["turn"]), action=doc["action"]
        )
        for doc in records.read_jsonl(args.triggers)
    ]
    if not triggers:
        raise ValidationFailure("no observed triggers")
    sigmas = args.sigma or [0, 1, 2, 3, 4]
    rows = align_mod.threshold_sweep(triggers, annotations, sigmas, args.threshold)
    stats = align_mod.annotation_quality_stats(
        annotations, triggers, critical_action=args.critical_action, sigma=min(sigmas)
    )
    ec = align_mod.dataset_ec(triggers, annotations, sigma=min(sigmas))
    kept, dropped = align_mod.filter_dialogues(ec.per_dialogue, args.threshold)

    payload = {
        "sweep": [
            {
                "sigma": r.sigma,
                "triggers_at_ec1": r.triggers_at_ec1,
                "pct_triggers_at_ec1": r.pct_triggers_at_ec1,
                "mean": r.mean,
                "std": r.std,
                "pct_dialogues_above_threshold": r.pct_dialogues_above_threshold,
            }
            for r in rows
        ],
        "quality": {
            "overall_coverage": stats.overall_coverage,
            "annotation_coverage": stats.annotation_coverage,
            "score_consistency": stats.score_consistency,
            "turn_gap_mean": stats.turn_gap_mean,
            "phantom_noise_rate": stats.phantom_noise_rate,
            "critical_miss_rate": stats.critical_miss_rate,
        },
        "filter": {"threshold": args.threshold, "kept": kept, "dropped": dropped},
    }
    out = Path(args.out)
    _write_json_report(out, payload, config)
    # sweep table column layout: sigma, trigger counts at full score
    # (dataset granularity), dataset mean/std, share of passing dialogues
    sweep_csv = out.with_suffix(".csv")
    with records.open_maybe_gzip(sweep_csv, "wt") as fh:
        fh.write(f"# config_digest={config.digest()}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            [
                "sigma",
                "triggers_at_ec1",
                "pct_triggers_at_ec1",
                "dataset_mean",
                "dataset_std_over_dialogues",
                "pct_dialogues_above_threshold",
            ]
        )
        for r in rows:
            writer.writerow(
                [
                    r.sigma,
                    r.triggers_at_ec1,
                    f"{r.pct_triggers_at_ec1:.6f}",
                    f"{r.mean:.6f}",
                    f"{r.std:.6f}",
                    f"{r.pct_dialogues_above_threshold:.6f}",
                ]
            )
    return EXIT_OK


# --------------------------------------------------------------------------
# sim
# --------------------------------------------------------------------------


def cmd_sim(args: argparse.Namespace, config: RunConfig) -> int:
    with open(args.scenario, encoding="utf-8") as fh:
        scenario = yaml.safe_load(fh) or {}

    service_doc = scenario.get("service", {})
    model = orchsim.ServiceModel(
        mean_service_time=float(service_doc.get("mean_service_time", 14.6)),
        capacity_per_server=int(service_doc.get("capacity_per_server", 1)),
        serial_overhead=float(service_doc.get("serial_overhead", 140.0)),
    )
    workload = int(scenario.get("workload", orchsim.CALIBRATED_WORKLOAD))
    sweep = scenario.get("server_sweep", [1, 2, 4, 8])

    makespans = {}
    for count in sweep:
        servers = [orchsim.ServerState(id=i, port=8000 + i) for i in range(int(count))]
        makespans[int(count)] = orchsim.simulate_rollout_phase(
            workload, servers, model, seed=args.seed
        ).makespan
    base = makespans[min(makespans)]
    payload: dict[str, Any] = {
        "workload": workload,
        "makespans": {str(k): v for k, v in sorted(makespans.items())},
        "speedups": {str(k): base / v for k, v in sorted(makespans.items())},
    }

    training = scenario.get("training")
    if training:
        plan = orchsim.partition_payload(
            int(training["payload"]),
            int(training["workers"]),
            bool(training.get("replicate", args.replicate_dataset_across_ranks)),
        )
        traces = orchsim.simulate_training(
            plan,
            base_batch=int(training.get("base_batch", 4)),
            token_budget=int(training.get("token_budget", 4 * 9216)),
            dynamic=bool(training.get("dynamic", False)),
            epochs=int(training.get("epochs", 1)),
            tokens_per_sample=training.get("tokens_per_sample"),
            fail_at_step=training.get("fail_at_step"),
        )
        trace_docs = [
            {
                "step": t.step,
                "epoch": t.epoch,
                "batch_sizes": list(t.batch_sizes),
                "barrier_time": t.barrier_time,
                "tokens_used": t.tokens_used,
                "checkpoint": t.checkpoint,
            }
            for t in traces
        ]
        out = Path(args.out)
        trace_path = out.with_name(out.stem + ".traces.jsonl")
        records.write_jsonl(trace_docs, trace_path)
        payload["training"] = {
            "steps": len(traces),
            "per_worker_visits": orchsim.total_sample_visits(traces),
            "checkpointed": any(t.checkpoint for t in traces),
            "trace_file": trace_path.name,
        }

    _write_json_report(Path(args.out), payload, config)
    return EXIT_OK


# --------------------------------------------------------------------------
# annotate
# --------------------------------------------------------------------------


def _scripted_provider(path: str | Path) -> annot_mod.CompletionProvider:
    """Replay canned responses keyed by the current turn's utterance text.

    The responses file holds ``{"text": <turn text>, "response": <raw JSON>}``
    records; a prompt whose current turn matches no entry fails the call.
    """
    responses = {doc["text"]: doc["response"] for doc in records.read_jsonl(path)}
    marker = re.compile(r'says: "(.*?)"\n', re.DOTALL)

    def provider(system: str, user: str, *, temperature: float, max_tokens: int) -> str:
        _, _, tail = user.partition("## CURRENT TURN TO ANNOTATE")
        match = marker.search(tail)
        if match is None or match.group(1) not in responses:
            raise annot_mod.ProviderError("no scripted response matches this prompt")
        return responses[match.group(1)]

    return provider


EMPTY_ANNOTATION = json.dumps({"proactive_annotations": []})


def _empty_provider(system: str, user: str, *, temperature: float, max_tokens: int) -> str:
    return EMPTY_ANNOTATION


def cmd_annotate(args: argparse.Namespace, config: RunConfig) -> int:
    cfg = (
        annot_mod.load_annotator_config(args.annotator_config)
        if args.annotator_config
        else annot_mod.AnnotatorConfig()
    )
    overrides: dict[str, Any] = {}
    if args.without_future:
        overrides["with_future"] = False
    if args.start_index is not None:
        overrides["start_index"] = args.start_index
    if args.max_dialogues is not None:
        overrides["max_dialogues"] = args.max_dialogues
    if args.max_workers is not None:
        overrides["max_workers"] = args.max_workers
    if overrides:
        from dataclasses import replace

        cfg = replace(cfg, **overrides)

    catalog = records.load_catalog(args.catalog)
    dialogues = records.read_dialogues(args.dataset)
    if not dialogues:
        raise ValidationFailure("no dialogues in dataset")

    if args.provider == "empty":
        provider: annot_mod.CompletionProvider = _empty_provider
    elif args.provider.startswith("scripted="):
        provider = _scripted_provider(args.provider.split("=", 1)[1])
    else:
        raise ConfigError(f"unknown provider {args.provider!r} (use 'empty' or 'scripted=PATH')")

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    output_path = out_dir / annot_mod.annotated_output_path(args.dataset, cfg.output_suffix).name
    report = annot_mod.run_batch(dialogues, catalog, provider, cfg, output_path)
    _write_json_report(
        out_dir / "batch_report.json",
        {
            "processed": list(report.processed_ids),
            "failed_turns": report.failed_turns,
            "violations": list(report.violations),
            "output": report.output_path,
        },
        config,
    )
    return EXIT_OK


# --------------------------------------------------------------------------
# parser and dispatch
# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="proactkit",
        description="Evaluate, reward, rank, and orchestrate proactive task-scheduling agents.",
    )
    parser.add_argument("--config", action="append", default=[], help="YAML config file (repeatable)")
    parser.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override a config key (dot path)",
    )
    parser.add_argument("--seed", type=int, default=None, help="seed for all randomness")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("catalog", help="render an action catalog from its three source documents")
    p.add_argument("ontology")
    p.add_argument("type_spec")
    p.add_argument("properties")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_catalog)

    p = sub.add_parser("evaluate", help="compute proactiveness metrics over a dataset")
    p.add_argument("dataset")
    p.add_argument("catalog")
    p.add_argument("--out", required=True)
    p.add_argument(
        "--ftr-mode",
        choices=[m.value for m in metrics_mod.FaultMode],
        default=metrics_mod.FaultMode.NEVER_READY.value,
    )
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("reward", help="attach rewards to rollout trajectory groups")
    p.add_argument("rollouts")
    p.add_argument("--reward-rule", "--rule", dest="rule", default=None, help="reward rule identifier")
    p.add_argument("--u", dest="step", type=int, default=None, help="training step index")
    p.add_argument("--total-steps", type=int, default=None)
    p.add_argument("--lambda", dest="hybrid_lambda", type=float, default=None)
    p.add_argument("--lambda-max", dest="lambda_max", type=float, default=None)
    p.add_argument("--judge", default=None, help="judge transport, e.g. 'scripted=PATH'")
    p.add_argument(
        "--max-concurrent-api-number",
        type=int,
        default=8,
        help="bound on in-flight judge calls",
    )
    p.add_argument("--verify-metrics", action="store_true", help="recompute stored metrics from payloads")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_reward)

    p = sub.add_parser("rank", help="rank a comparison group by composite index")
    p.add_argument("table")
    p.add_argument("--top-k", type=int, default=4)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_rank)

    p = sub.add_parser("align", help="validate annotations against observed triggers")
    p.add_argument("annotations")
    p.add_argument("triggers")
    p.add_argument("--sigma", type=int, nargs="*", default=None)
    p.add_argument("--threshold", type=float, default=align_mod.DEFAULT_PASS_THRESHOLD)
    p.add_argument("--critical-action", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_align)

    p = sub.add_parser("sim", help="simulate the inference cluster and training loop")
    p.add_argument("scenario")
    p.add_argument("--replicate-dataset-across-ranks", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sim)

    p = sub.add_parser("annotate", help="run the oracle annotation pipeline")
    p.add_argument("dataset")
    p.add_argument("catalog")
    p.add_argument("--annotator-config", default=None)
    p.add_argument("--provider", default="empty", help="'empty' or 'scripted=PATH'")
    p.add_argument("--without-future", action="store_true")
    p.add_argument("--start-index", type=int, default=None)
    p.add_argument("--max-dialogues", type=int, default=None)
    p.add_argument("--max-workers", type=int, default=None)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_annotate)

    return parser


def _parse_overrides(pairs: Sequence[str]) -> dict[str, str]:
    out = {}
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError(f"override {pair!r} must look like key=value")
        key, value = pair.split("=", 1)
        out[key] = value
    return out


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        overrides = _parse_overrides(args.overrides)
        if args.seed is not None:
            overrides["seed"] = args.seed
        config = load_config(args.config, overrides)
        if args.seed is None:
            args.seed = config.get("seed", 0)
        return args.func(args, config)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValidationFailure as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        for violation in exc.violations:
            print(f"  {violation}", file=sys.stderr)
        return EXIT_VALIDATION
    except RecordFormatError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except ValueError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
