"""Per-turn proactiveness metrics and dataset aggregation.

Rates over an empty denominator are reported as undefined and excluded from
aggregation instead of being coerced to zero, which would bias conservative
models that rarely predict.
"""
from __future__ import annotations

import math
import statistics
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Callable, Mapping, Sequence

from .datamodel import (
    ActionInstance,
    Dialogue,
    ParameterSpec,
    ReferenceRange,
    TriggerStatus,
    Turn,
    compute_reference_ranges,
    is_ready,
)

METRIC_COLUMNS = (
    "AC",
    "MaxAC",
    "Difference",
    "PT",
    "FTR",
    "RAR",
    "IC",
    "AD",
    "ATR",
    "FalseTriggered",
    "FRR",
)

SimilarityFunction = Callable[[str, str], float]


@dataclass(frozen=True)
class MetricValue:
    """A rate with its provenance; ``value is None`` flags an undefined turn."""

    value: float | None
    numerator: float
    denominator: float
    warnings: tuple[str, ...] = ()

    @property
    def defined(self) -> bool:
        return self.value is not None

    @classmethod
    def undefined(cls, reason: str = "") -> "MetricValue":
        return cls(None, 0.0, 0.0, (reason,) if reason else ())

    @classmethod
    def rate(cls, numerator: float, denominator: float, warnings: tuple[str, ...] = ()) -> "MetricValue":
        if denominator <= 0:
            return cls(None, numerator, denominator, warnings)
        return cls(numerator / denominator, numerator, denominator, warnings)


@dataclass(frozen=True)
class TurnMetricInput:
    turn_index: int
    predicted: tuple[ActionInstance, ...]
    reference: tuple[ActionInstance, ...]
    ranges: ReferenceRange

    def __post_init__(self) -> None:
        object.__setattr__(self, "predicted", tuple(self.predicted))
        object.__setattr__(self, "reference", tuple(self.reference))
        if self.turn_index < 1:
            raise ValueError("turn_index is 1-based")


class FaultMode(str, Enum):
    """How a ready prediction falls outside the reference coverage.

    NEVER_READY: the action has no ready turn anywhere in the dialogue
    (default). OUTSIDE_WINDOW: the current turn is not inside the action's
    ready window.
    """

    NEVER_READY = "never_ready"
    OUTSIDE_WINDOW = "outside_window"


# --------------------------------------------------------------------------
# parameter matching
# --------------------------------------------------------------------------


def canonicalize_value(value: str) -> str:
    return value.strip().casefold()


def values_equal(a: str | None, b: str | None) -> bool:
    """Compare canonicalized parameter values; numeric strings compare numerically."""
    if a is None or b is None:
        return a is None and b is None
    ca, cb = canonicalize_value(a), canonicalize_value(b)
    try:
        return float(ca) == float(cb)
    except ValueError:
        return ca == cb


def param_match_score(pred: Sequence[ParameterSpec], ref: Sequence[ParameterSpec]) -> int:
    """Count reference parameters matched by a same-name prediction.

    A match requires an equal provided flag and, when provided, equal
    canonicalized values.
    """
    by_name: dict[str, ParameterSpec] = {}
    for p in pred:
        by_name.setdefault(p.name, p)
    matched = 0
    for r in ref:
        p = by_name.get(r.name)
        if p is None or p.provided != r.provided:
            continue
        if not r.provided or values_equal(p.value, r.value):
            matched += 1
    return matched


def _alignment(pred: ActionInstance, ref: ActionInstance) -> Fraction | None:
    """Parameter-level alignment of one prediction against one reference.

    None indicates a degenerate reference with zero declared parameters.
    Scores stay exact rationals so that means of equal scores never drift
    above the maximum after rounding.
    """
    denom = len(ref.inputs_required) + len(ref.inputs_optional)
    if denom == 0:
        return None
    matched = param_match_score(pred.inputs_required, ref.inputs_required) + param_match_score(
        pred.inputs_optional, ref.inputs_optional
    )
    return Fraction(matched, denom)


def _best_alignment(
    pred: ActionInstance, reference: Sequence[ActionInstance]
) -> tuple[Fraction, list[str]]:
    """Best alignment against same-name references; no candidate scores 0."""
    best = Fraction(0)
    warnings = []
    for ref in reference:
        if ref.spec_name != pred.spec_name:
            continue
        score = _alignment(pred, ref)
        if score is None:
            warnings.append(
                f"reference action {ref.spec_name!r} declares no parameters; candidate scored 0"
            )
            continue
        if score > best:
            best = score
    return best, warnings


def _exact_rate(exact: Fraction, warnings: tuple[str, ...] = ()) -> MetricValue:
    # store the reduced fraction so value == numerator/denominator holds in floats
    return MetricValue(float(exact), exact.numerator, exact.denominator, warnings)


def action_consistency(i: TurnMetricInput) -> MetricValue:
    """Average parameter-level alignment of the predicted set against the references."""
    if not i.predicted:
        return MetricValue.undefined("no predictions")
    scores = []
    warnings: list[str] = []
    for pred in i.predicted:
        best, warns = _best_alignment(pred, i.reference)
        scores.append(best)
        warnings.extend(warns)
    return _exact_rate(sum(scores, Fraction(0)) / len(scores), tuple(warnings))


def max_action_consistency(i: TurnMetricInput) -> MetricValue:
    """Best single-prediction alignment at this turn."""
    if not i.predicted:
        return MetricValue.undefined("no predictions")
    best = Fraction(0)
    warnings: list[str] = []
    for pred in i.predicted:
        score, warns = _best_alignment(pred, i.reference)
        warnings.extend(warns)
        if score > best:
            best = score
    return _exact_rate(best, tuple(warnings))


@dataclass(frozen=True)
class DifferenceStats:
    """Relative gap between best-case and average alignment with first-order error."""

    mu: float
    delta: float
    inputs: tuple[float, float, float, float]  # (A, dA, M, dM)


def consistency_difference(a: float, da: float, m: float, dm: float) -> DifferenceStats:
    if a <= 0:
        raise ValueError("undefined relative gap: average consistency must be positive")
    mu = (m - a) / a
    delta = math.sqrt((dm / a) ** 2 + (m * da / (a * a)) ** 2)
    return DifferenceStats(mu=mu, delta=delta, inputs=(a, da, m, dm))


# --------------------------------------------------------------------------
# timing metrics
# --------------------------------------------------------------------------


def proactive_timing(i: TurnMetricInput) -> MetricValue:
    """Fraction of predictions made no later than their reference-ready window."""
    if not i.predicted:
        return MetricValue.undefined("no predictions")
    hits = sum(
        1
        for pred in i.predicted
        if any(tau >= i.turn_index for tau in i.ranges.ready_turns(pred.spec_name))
    )
    return MetricValue.rate(hits, len(i.predicted))


def fault_trigger_rate(i: TurnMetricInput, mode: FaultMode = FaultMode.NEVER_READY) -> MetricValue:
    """Share of ready predictions that fall outside the reference coverage."""
    ready_preds = [p for p in i.predicted if is_ready(p.status)]
    if not ready_preds:
        return MetricValue.undefined("no ready predictions")
    if mode is FaultMode.NEVER_READY:
        faults = sum(1 for p in ready_preds if not i.ranges.ready_turns(p.spec_name))
    else:
        faults = sum(1 for p in ready_preds if i.turn_index not in i.ranges.ready_turns(p.spec_name))
    return MetricValue.rate(faults, len(ready_preds))


def ready_action_rate(i: TurnMetricInput) -> MetricValue:
    """Proportion of predictions marked ready at this turn."""
    if not i.predicted:
        return MetricValue.undefined("no predictions")
    return MetricValue.rate(sum(1 for p in i.predicted if is_ready(p.status)), len(i.predicted))


# --------------------------------------------------------------------------
# auxiliary metrics
# --------------------------------------------------------------------------


def token_overlap_similarity(a: str, b: str) -> float:
    """Default question similarity: token-set overlap over case-folded words."""
    ta = set(a.casefold().split())
    tb = set(b.casefold().split())
    if not ta and not tb:
        return 1.0
    union = ta | tb
    return len(ta & tb) / len(union)


def information_consistency(
    ref_questions: Sequence[str],
    pred_questions: Sequence[str],
    sim: SimilarityFunction = token_overlap_similarity,
) -> MetricValue:
    """Mean pairwise similarity between predicted and reference questions."""
    if not ref_questions or not pred_questions:
        return MetricValue.undefined("empty question set")
    total = sum(sim(r, p) for r in ref_questions for p in pred_questions)
    return MetricValue.rate(total, len(ref_questions) * len(pred_questions))


@dataclass(frozen=True)
class TransitionModel:
    """Action-to-action transition counts with Laplace smoothing."""

    counts: Mapping[tuple[str, str], int]
    catalog_actions: frozenset[str]
    epsilon: float = 1e-7

    def __post_init__(self) -> None:
        if self.epsilon <= 0:
            raise ValueError("smoothing epsilon must be positive")

    @classmethod
    def from_sequences(
        cls, sequences: Sequence[Sequence[str]], catalog_actions: Sequence[str], epsilon: float = 1e-7
    ) -> "TransitionModel":
        counts: dict[tuple[str, str], int] = {}
        for seq in sequences:
            for prev, nxt in zip(seq, seq[1:]):
                counts[(prev, nxt)] = counts.get((prev, nxt), 0) + 1
        return cls(counts=counts, catalog_actions=frozenset(catalog_actions), epsilon=epsilon)


def transition_probability(model: TransitionModel, prev: str, nxt: str) -> float:
    """Smoothed conditional probability of ``nxt`` following ``prev``."""
    if not model.catalog_actions:
        raise ValueError("empty action catalog")
    if nxt not in model.catalog_actions:
        raise ValueError(f"action {nxt!r} not in catalog")
    numer = model.counts.get((prev, nxt), 0) + model.epsilon
    denom = sum(model.counts.get((prev, a), 0) + model.epsilon for a in sorted(model.catalog_actions))
    return numer / denom


def action_dependency(
    prev_preds: Sequence[ActionInstance],
    cur_preds: Sequence[ActionInstance],
    model: TransitionModel,
) -> MetricValue:
    """How well consecutive predictions follow the learned workflow transitions."""
    if not cur_preds:
        return MetricValue.undefined("no predictions")
    total = 0.0
    for cur in cur_preds:
        for prev in prev_preds:
            total += transition_probability(model, prev.spec_name, cur.spec_name)
    return MetricValue.rate(total, len(cur_preds))


def observation_rates(i: TurnMetricInput) -> tuple[MetricValue, MetricValue, MetricValue]:
    """(ATR, false-triggered rate, false-ready rate) over all predictions."""
    if not i.predicted:
        missing = MetricValue.undefined("no predictions")
        return missing, missing, missing
    ref_names = {r.spec_name for r in i.reference}
    n = len(i.predicted)
    triggered_present = sum(
        1
        for p in i.predicted
        if p.status is TriggerStatus.TRIGGERED and p.spec_name in ref_names
    )
    triggered_absent = sum(
        1
        for p in i.predicted
        if p.status is TriggerStatus.TRIGGERED and p.spec_name not in ref_names
    )
    ready_absent = sum(
        1 for p in i.predicted if is_ready(p.status) and p.spec_name not in ref_names
    )
    return (
        MetricValue.rate(triggered_present, n),
        MetricValue.rate(triggered_absent, n),
        MetricValue.rate(ready_absent, n),
    )


# --------------------------------------------------------------------------
# turn / dialogue / dataset evaluation
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class EvalTurn:
    turn: Turn
    predicted: tuple[ActionInstance, ...] = ()
    reference: tuple[ActionInstance, ...] = ()
    predicted_questions: tuple[str, ...] = ()
    reference_questions: tuple[str, ...] = ()


@dataclass(frozen=True)
class EvalDialogue:
    id: str
    turns: tuple[EvalTurn, ...]

    def reference_dialogue(self) -> Dialogue:
        from .datamodel import TurnAnnotation

        return Dialogue(
            id=self.id,
            turns=tuple(TurnAnnotation(turn=t.turn, actions=t.reference) for t in self.turns),
        )


def evaluate_turn(
    i: TurnMetricInput,
    *,
    prev_predicted: Sequence[ActionInstance] = (),
    model: TransitionModel | None = None,
    sim: SimilarityFunction = token_overlap_similarity,
    ref_questions: Sequence[str] = (),
    pred_questions: Sequence[str] = (),
    ftr_mode: FaultMode = FaultMode.NEVER_READY,
) -> dict[str, MetricValue]:
    atr, false_triggered, frr = observation_rates(i)
    out = {
        "AC": action_consistency(i),
        "MaxAC": max_action_consistency(i),
        "PT": proactive_timing(i),
        "FTR": fault_trigger_rate(i, ftr_mode),
        "RAR": ready_action_rate(i),
        "IC": information_consistency(ref_questions, pred_questions, sim),
        "ATR": atr,
        "FalseTriggered": false_triggered,
        "FRR": frr,
    }
    if model is not None:
        out["AD"] = action_dependency(prev_predicted, i.predicted, model)
    else:
        out["AD"] = MetricValue.undefined("no transition model")
    return out


def evaluate_dialogue(
    dialogue: EvalDialogue,
    *,
    model: TransitionModel | None = None,
    sim: SimilarityFunction = token_overlap_similarity,
    ftr_mode: FaultMode = FaultMode.NEVER_READY,
) -> list[tuple[int, dict[str, MetricValue]]]:
    ranges = compute_reference_ranges(dialogue.reference_dialogue())
    out = []
    prev: tuple[ActionInstance, ...] = ()
    for et in dialogue.turns:
        i = TurnMetricInput(
            turn_index=et.turn.index,
            predicted=et.predicted,
            reference=et.reference,
            ranges=ranges,
        )
        out.append(
            (
                et.turn.index,
                evaluate_turn(
                    i,
                    prev_predicted=prev,
                    model=model,
                    sim=sim,
                    ref_questions=et.reference_questions,
                    pred_questions=et.predicted_questions,
                    ftr_mode=ftr_mode,
                ),
            )
        )
        prev = et.predicted
    return out


def turn_reward_metrics(
    i: TurnMetricInput, ftr_mode: FaultMode = FaultMode.NEVER_READY
) -> dict[str, float]:
    """The four reward-feeding metric values for one turn, as plain floats.

    Reward rules need numbers, so undefined rates degrade to 0.0 here (an
    empty prediction set earns no alignment credit and no fault penalty).
    """

    def value(mv: MetricValue) -> float:
        return mv.value if mv.defined else 0.0

    return {
        "rac": value(action_consistency(i)),
        "max_rac": value(max_action_consistency(i)),
        "ptr": value(proactive_timing(i)),
        "ftr": value(fault_trigger_rate(i, ftr_mode)),
    }


@dataclass(frozen=True)
class MetricAggregate:
    mean: float | None
    defined_turns: int
    undefined_turns: int
    dialogue_mean: float | None
    dialogue_std: float | None


@dataclass(frozen=True)
class DatasetReport:
    """Micro (over turns) and macro (over dialogues) aggregates per metric.

    Micro averages are the headline numbers; the cross-dialogue std feeds the
    Difference statistic.
    """

    metrics: Mapping[str, MetricAggregate]
    difference: DifferenceStats | None
    dialogue_count: int
    warnings: tuple[str, ...] = ()

    def column_values(self) -> dict[str, float | None]:
        out: dict[str, float | None] = {}
        for col in METRIC_COLUMNS:
            if col == "Difference":
                out[col] = self.difference.mu if self.difference else None
            else:
                agg = self.metrics.get(col)
                out[col] = agg.mean if agg else None
        return out


def aggregate_report(
    per_dialogue: Mapping[str, Sequence[tuple[int, Mapping[str, MetricValue]]]],
) -> DatasetReport:
    names = [c for c in METRIC_COLUMNS if c != "Difference"]
    aggregates: dict[str, MetricAggregate] = {}
    warnings: list[str] = []
    per_metric_dialogue_means: dict[str, list[float]] = {name: [] for name in names}

    for name in names:
        defined_values: list[float] = []
        undefined = 0
        for dialogue_id in sorted(per_dialogue):
            dialogue_values = []
            for _, metric_map in per_dialogue[dialogue_id]:
                mv = metric_map.get(name)
                if mv is None:
                    continue
                warnings.extend(mv.warnings)
                if mv.defined:
                    dialogue_values.append(mv.value)
                else:
                    undefined += 1
            defined_values.extend(dialogue_values)
            if dialogue_values:
                per_metric_dialogue_means[name].append(sum(dialogue_values) / len(dialogue_values))
        d_means = per_metric_dialogue_means[name]
        aggregates[name] = MetricAggregate(
            mean=sum(defined_values) / len(defined_values) if defined_values else None,
            defined_turns=len(defined_values),
            undefined_turns=undefined,
            dialogue_mean=sum(d_means) / len(d_means) if d_means else None,
            dialogue_std=statistics.stdev(d_means) if len(d_means) > 1 else None,
        )

    difference = None
    ac, mx = aggregates["AC"], aggregates["MaxAC"]
    if ac.mean is not None and mx.mean is not None and ac.mean > 0:
        difference = consistency_difference(
            ac.mean, ac.dialogue_std or 0.0, mx.mean, mx.dialogue_std or 0.0
        )

    return DatasetReport(
        metrics=aggregates,
        difference=difference,
        dialogue_count=len(per_dialogue),
        warnings=tuple(dict.fromkeys(warnings)),
    )
