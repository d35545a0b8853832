"""Validation of oracle annotations against observed triggers.

An annotation passes the early-ready criterion when the action's annotated
ready window opens at least sigma turns before the observed trigger; the
per-dialogue mean drives dataset filtering.
"""
from __future__ import annotations

import statistics
from dataclasses import dataclass
from typing import Mapping, Sequence

from .datamodel import Dialogue, ReferenceRange

DEFAULT_PASS_THRESHOLD = 0.8


@dataclass(frozen=True)
class ObservedTrigger:
    dialogue_id: str
    turn: int
    action: str

    def __post_init__(self) -> None:
        if self.turn < 1:
            raise ValueError("trigger turns are 1-based")


@dataclass(frozen=True)
class EcConfig:
    sigma: int = 0
    dialogue_pass_threshold: float = DEFAULT_PASS_THRESHOLD

    def __post_init__(self) -> None:
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")
        if not 0.0 <= self.dialogue_pass_threshold <= 1.0:
            raise ValueError("pass threshold must lie in [0, 1]")


def ec_score(trigger: ObservedTrigger, ranges: ReferenceRange, sigma: int) -> float:
    """1.0 when the earliest same-name ready turn plus sigma is no later than
    the trigger turn; 0.0 otherwise, including when no ready range exists."""
    start = ranges.start(trigger.action)
    if start is None:
        return 0.0
    return 1.0 if start + sigma <= trigger.turn else 0.0


@dataclass(frozen=True)
class DatasetEc:
    mean: float
    std: float
    per_dialogue: Mapping[str, float]
    trigger_count: int


def dataset_ec(
    triggers: Sequence[ObservedTrigger],
    annotations: Mapping[str, ReferenceRange],
    sigma: int,
) -> DatasetEc:
    """Mean per-trigger EC over the whole trigger set, with per-dialogue means.

    The reported std is the population std over per-dialogue means, the unit
    used for filtering.
    """
    if not triggers:
        raise ValueError("empty trigger list")
    per_dialogue_scores: dict[str, list[float]] = {}
    total = 0.0
    for trig in triggers:
        ranges = annotations.get(trig.dialogue_id, ReferenceRange(per_action={}))
        score = ec_score(trig, ranges, sigma)
        total += score
        per_dialogue_scores.setdefault(trig.dialogue_id, []).append(score)
    per_dialogue = {
        did: sum(scores) / len(scores) for did, scores in sorted(per_dialogue_scores.items())
    }
    means = list(per_dialogue.values())
    std = statistics.pstdev(means) if len(means) > 1 else 0.0
    return DatasetEc(
        mean=total / len(triggers),
        std=std,
        per_dialogue=per_dialogue,
        trigger_count=len(triggers),
    )


def filter_dialogues(
    per_dialogue: Mapping[str, float], threshold: float = DEFAULT_PASS_THRESHOLD
) -> tuple[list[str], list[str]]:
    """Partition dialogue ids by strict comparison against the pass threshold."""
    if not 0.0 <= threshold <= 1.0:
        raise ValueError("threshold must lie in [0, 1]")
    kept = sorted(did for did, score in per_dialogue.items() if score > threshold)
    dropped = sorted(did for did, score in per_dialogue.items() if score <= threshold)
    return kept, dropped


@dataclass(frozen=True)
class QualityStats:
    overall_coverage: float
    annotation_coverage: float
    score_consistency: float
    turn_gap_mean: float
    phantom_noise_rate: float
    critical_miss_rate: float | None


def annotation_quality_stats(
    annotations: Mapping[str, ReferenceRange],
    triggers: Sequence[ObservedTrigger],
    critical_action: str | None = None,
    sigma: int = 0,
) -> QualityStats:
    """Hindsight-vs-causal annotation quality statistics.

    turn_gap_mean averages (trigger turn - earliest ready turn) over triggers
    whose ready window opens no later than the trigger, keeping the gap
    nonnegative. A phantom is an annotated ready range for an action never
    observed triggered in that dialogue. The critical miss rate counts
    critical-action triggers with no annotation occurrence at all.
    """
    if not triggers:
        raise ValueError("empty trigger list")

    ec = dataset_ec(triggers, annotations, sigma)
    covered = 0
    gaps: list[int] = []
    critical_total = 0
    critical_missed = 0
    triggered_by_dialogue: dict[str, set[str]] = {}
    for trig in triggers:
        triggered_by_dialogue.setdefault(trig.dialogue_id, set()).add(trig.action)
        ranges = annotations.get(trig.dialogue_id, ReferenceRange(per_action={}))
        has_annotation = trig.action in ranges.occurrences
        if has_annotation:
            covered += 1
        start = ranges.start(trig.action)
        if start is not None and start <= trig.turn:
            gaps.append(trig.turn - start)
        if critical_action is not None and trig.action == critical_action:
            critical_total += 1
            if not has_annotation:
                critical_missed += 1

    phantom_total = 0
    phantoms = 0
    for dialogue_id, ranges in annotations.items():
        observed = triggered_by_dialogue.get(dialogue_id, set())
        for action, turns in ranges.per_action.items():
            if not turns:
                continue
            phantom_total += 1
            if action not in observed:
                phantoms += 1

    return QualityStats(
        overall_coverage=ec.mean,
        annotation_coverage=covered / len(triggers),
        score_consistency=ec.std,
        turn_gap_mean=sum(gaps) / len(gaps) if gaps else 0.0,
        phantom_noise_rate=phantoms / phantom_total if phantom_total else 0.0,
        critical_miss_rate=(critical_missed / critical_total) if critical_total else None,
    )


@dataclass(frozen=True)
class SweepRow:
    sigma: int
    triggers_at_ec1: int
    pct_triggers_at_ec1: float
    mean: float
    std: float
    pct_dialogues_above_threshold: float


def threshold_sweep(
    triggers: Sequence[ObservedTrigger],
    annotations: Mapping[str, ReferenceRange],
    sigmas: Sequence[int] = (0, 1, 2, 3, 4),
    pass_threshold: float = DEFAULT_PASS_THRESHOLD,
) -> list[SweepRow]:
    """One row per sigma: EC=1 trigger counts (dataset granularity), dataset
    mean/std, and the share of dialogues above the pass threshold."""
    rows = []
    for sigma in sigmas:
        ec = dataset_ec(triggers, annotations, sigma)
        at_one = sum(
            1
            for trig in triggers
            if ec_score(
                trig, annotations.get(trig.dialogue_id, ReferenceRange(per_action={})), sigma
            )
            == 1.0
        )
        kept, _ = filter_dialogues(ec.per_dialogue, pass_threshold)
        rows.append(
            SweepRow(
                sigma=sigma,
                triggers_at_ec1=at_one,
                pct_triggers_at_ec1=at_one / len(triggers),
                mean=ec.mean,
                std=ec.std,
                pct_dialogues_above_threshold=len(kept) / len(ec.per_dialogue),
            )
        )
    return rows


def triggers_from_dialogues(dialogues: Sequence[Dialogue]) -> list[ObservedTrigger]:
    """Collect observed triggers embedded in dialogue records."""
    out = []
    for d in dialogues:
        for turn, action in d.observed_triggers or ():
            out.append(ObservedTrigger(dialogue_id=d.id, turn=turn, action=action))
    return out
