"""Turn-level reward rules and the trajectory-judge prompt/response codec.

The judge itself is external: callers supply a transport from prompt text to
response text, and scores attach back to trajectories by id, so concurrent
judge calls are order-independent.
"""
from __future__ import annotations

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from enum import Enum
from typing import Callable, Iterable, Mapping, Sequence


class MetricBase(str, Enum):
    RAC = "rac"
    MAX_RAC = "max_rac"


class RewardRule(str, Enum):
    RAC = "rac"
    MAX_RAC = "max_rac"
    RULER = "ruler"
    CUSTOM_RULER = "custom_ruler"
    WEIGHTED_METRIC = "weighted_metric"
    ADAPTIVE_METRIC = "adaptive_metric"
    HYBRID_RULER = "hybrid_ruler"
    ADAPTIVE_RULER = "adaptive_ruler"


# configuration identifiers accepted verbatim, mapped to (rule, metric base)
RULE_NAMES: dict[str, tuple[RewardRule, MetricBase]] = {
    "rac": (RewardRule.RAC, MetricBase.RAC),
    "rac_score": (RewardRule.RAC, MetricBase.RAC),
    "max_rac": (RewardRule.MAX_RAC, MetricBase.MAX_RAC),
    "max_rac_score": (RewardRule.MAX_RAC, MetricBase.MAX_RAC),
    "ruler": (RewardRule.RULER, MetricBase.RAC),
    "custom_ruler": (RewardRule.CUSTOM_RULER, MetricBase.RAC),
    "weighted_metric": (RewardRule.WEIGHTED_METRIC, MetricBase.RAC),
    "weighted_rac_score": (RewardRule.WEIGHTED_METRIC, MetricBase.RAC),
    "weighted_max_rac_score": (RewardRule.WEIGHTED_METRIC, MetricBase.MAX_RAC),
    "adaptive_metric": (RewardRule.ADAPTIVE_METRIC, MetricBase.RAC),
    "adaptive_metric_score": (RewardRule.ADAPTIVE_METRIC, MetricBase.RAC),
    "hybrid_ruler": (RewardRule.HYBRID_RULER, MetricBase.RAC),
    "hybrid_ruler_weighted_rac_score": (RewardRule.HYBRID_RULER, MetricBase.RAC),
    "hybrid_ruler_weighted_max_rac_score": (RewardRule.HYBRID_RULER, MetricBase.MAX_RAC),
    "adaptive_ruler": (RewardRule.ADAPTIVE_RULER, MetricBase.RAC),
    "schedule_ruler_weighted_rac_score": (RewardRule.ADAPTIVE_RULER, MetricBase.RAC),
    "schedule_ruler_weighted_max_rac_score": (RewardRule.ADAPTIVE_RULER, MetricBase.MAX_RAC),
}

RULER_RULES = frozenset(
    {RewardRule.RULER, RewardRule.CUSTOM_RULER, RewardRule.HYBRID_RULER, RewardRule.ADAPTIVE_RULER}
)

# published defaults
WEIGHTED_PT_WEIGHT = 0.05
WEIGHTED_FTR_WEIGHT = 0.01
ADAPTIVE_PHASE_WEIGHTS = (0.8, 0.6, 0.3, 0.6)
DEFAULT_LAMBDA_MAX = 0.3


@dataclass(frozen=True)
class TurnRewardInput:
    """Per-turn metric values feeding the reward rules; all in [0, 1]."""

    rac: float
    max_rac: float
    ptr: float = 0.0
    ftr: float = 0.0
    ruler: float | None = None

    def __post_init__(self) -> None:
        for name in ("rac", "max_rac", "ptr", "ftr"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1]")
        if self.ruler is not None and not 0.0 <= self.ruler <= 1.0:
            raise ValueError(f"ruler={self.ruler} outside [0, 1]")

    def base(self, base: MetricBase) -> float:
        return self.rac if base is MetricBase.RAC else self.max_rac


def metric_reward(i: TurnRewardInput, base: MetricBase) -> float:
    """Single-objective alignment reward: the chosen consistency value verbatim."""
    return i.base(base)


def trajectory_reward(turn_values: Sequence[float]) -> float:
    """Trajectory-level variant: running mean of the per-turn values up to t."""
    if not turn_values:
        raise ValueError("trajectory reward needs at least one turn value")
    return sum(turn_values) / len(turn_values)


def weighted_metric_reward(
    i: TurnRewardInput,
    base: MetricBase,
    pt_weight: float = WEIGHTED_PT_WEIGHT,
    ftr_weight: float = WEIGHTED_FTR_WEIGHT,
) -> float:
    """Dense consistency signal plus a small timing bonus and fault penalty."""
    return i.base(base) + pt_weight * i.ptr - ftr_weight * i.ftr


def adaptive_metric_reward(
    i: TurnRewardInput,
    u: int,
    total_steps: int,
    weights: tuple[float, float, float, float] = ADAPTIVE_PHASE_WEIGHTS,
) -> float:
    """Stage-aware metric reward: exploration, balanced, then conservative phase.

    Phase boundaries use the real-valued training fraction u/U with
    left-closed intervals.
    """
    if total_steps < 1:
        raise ValueError("total_steps must be >= 1")
    if u < 0 or u >= total_steps:
        raise ValueError(f"step u={u} outside [0, {total_steps})")
    w1, w2, w3, w4 = weights
    progress = u / total_steps
    if progress < 1.0 / 3.0:
        return w1 * i.max_rac + (1.0 - w1) * i.ptr
    if progress < 2.0 / 3.0:
        return w2 * i.rac + w3 * i.ptr - (1.0 - w2 - w3) * i.ftr
    return w4 * i.rac - (1.0 - w4) * i.ftr


def _require_judge(i: TurnRewardInput) -> float:
    if i.ruler is None:
        raise ValueError("judge score required for a judge-weighted reward")
    return i.ruler


def hybrid_ruler_reward(i: TurnRewardInput, lam: float, base: MetricBase) -> float:
    """Fixed-weight convex combination of metric base and judge score."""
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda={lam} outside [0, 1]")
    return (1.0 - lam) * i.base(base) + lam * _require_judge(i)


def ruler_lambda(u: int, total_steps: int, lambda_max: float = DEFAULT_LAMBDA_MAX) -> float:
    """Judge-weight schedule rising linearly from 0 to the cap over training."""
    if total_steps < 1:
        raise ValueError("total_steps must be >= 1")
    if u < 0 or u >= total_steps:
        raise ValueError(f"step u={u} outside [0, {total_steps})")
    if total_steps == 1:
        return lambda_max
    return lambda_max * min(1.0, u / (total_steps - 1))


def adaptive_ruler_reward(
    i: TurnRewardInput,
    u: int,
    total_steps: int,
    lambda_max: float = DEFAULT_LAMBDA_MAX,
    base: MetricBase = MetricBase.RAC,
) -> float:
    """Schedule-weighted judge reward; equals the metric base exactly at u=0."""
    lam = ruler_lambda(u, total_steps, lambda_max)
    return (1.0 - lam) * i.base(base) + lam * _require_judge(i)


@dataclass(frozen=True)
class RewardSchedule:
    """A named reward rule with its knobs, resolvable from config identifiers."""

    rule: RewardRule
    metric_base: MetricBase = MetricBase.RAC
    pt_weight: float = WEIGHTED_PT_WEIGHT
    ftr_weight: float = WEIGHTED_FTR_WEIGHT
    phase_weights: tuple[float, float, float, float] = ADAPTIVE_PHASE_WEIGHTS
    lam: float = 0.5
    lambda_max: float = DEFAULT_LAMBDA_MAX
    total_steps: int = 1

    def __post_init__(self) -> None:
        for name in ("pt_weight", "ftr_weight", "lam", "lambda_max"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1]")
        if any(not 0.0 <= w <= 1.0 for w in self.phase_weights):
            raise ValueError("phase weights must lie in [0, 1]")
        if self.total_steps < 1:
            raise ValueError("total_steps must be >= 1")

    @classmethod
    def from_rule_name(cls, name: str, **overrides) -> "RewardSchedule":
        try:
            rule, base = RULE_NAMES[name]
        except KeyError:
            raise ValueError(f"unknown reward rule {name!r}") from None
        return cls(rule=rule, metric_base=base, **overrides)

    @property
    def needs_judge(self) -> bool:
        return self.rule in RULER_RULES


def compute_reward(schedule: RewardSchedule, i: TurnRewardInput, u: int = 0) -> float:
    """Dispatch one turn's reward according to the schedule."""
    rule = schedule.rule
    if rule is RewardRule.RAC:
        return metric_reward(i, MetricBase.RAC)
    if rule is RewardRule.MAX_RAC:
        return metric_reward(i, MetricBase.MAX_RAC)
    if rule in (RewardRule.RULER, RewardRule.CUSTOM_RULER):
        return _require_judge(i)
    if rule is RewardRule.WEIGHTED_METRIC:
        return weighted_metric_reward(i, schedule.metric_base, schedule.pt_weight, schedule.ftr_weight)
    if rule is RewardRule.ADAPTIVE_METRIC:
        return adaptive_metric_reward(i, u, schedule.total_steps, schedule.phase_weights)
    if rule is RewardRule.HYBRID_RULER:
        return hybrid_ruler_reward(i, schedule.lam, schedule.metric_base)
    if rule is RewardRule.ADAPTIVE_RULER:
        return adaptive_ruler_reward(i, u, schedule.total_steps, schedule.lambda_max, schedule.metric_base)
    raise ValueError(f"unhandled rule {rule}")


# --------------------------------------------------------------------------
# trajectory groups and the judge codec
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class RolloutTrajectory:
    trajectory_id: str
    completion: str
    metrics: TurnRewardInput
    judge_score: float | None = None
    reward: float | None = None
    # structured predicted-action payload, kept so stored metric scores stay
    # recomputable from the record itself
    predicted: tuple | None = None


@dataclass(frozen=True)
class TrajectoryGroup:
    """K rollouts of one dialogue-turn scenario; the unit of judging and advantages."""

    scenario_id: str
    step: int
    context_system: str
    context_user: str
    trajectories: tuple[RolloutTrajectory, ...]
    dialogue_id: str | None = None
    turn: int | None = None
    reference: tuple | None = None
    ranges: object | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "trajectories", tuple(self.trajectories))
        if not self.trajectories:
            raise ValueError("a trajectory group cannot be empty")
        ids = [t.trajectory_id for t in self.trajectories]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate trajectory ids in group {self.scenario_id!r}")

    def expected_ids(self) -> frozenset[str]:
        return frozenset(t.trajectory_id for t in self.trajectories)


GRADING_STANDARDS_HEADER = (
    "All of the trajectories below have been given the same goal. Your job is to\n"
    "consider each of them and assign a score between 0 and 1 based on your\n"
    "best judgment of how well the agent achieves its goal.\n"
    "Grading standards:\n"
    "- A trajectory that achieves its goal should always receive a significantly\n"
    "  higher score than one that does not.\n"
    "- A trajectory that achieves its goal more efficiently (e.g., avoiding\n"
    "  unproductive detours) should receive a higher score.\n"
    "- If one trajectory is only slightly better than another, the score\n"
    "  difference should be small; if significantly better, the difference\n"
    "  should be large.\n"
)

GRADING_STANDARDS_FOOTER = (
    "- Partial credit may be given for trajectories that make progress toward\n"
    "  the goal but do not complete it.\n"
)


def build_ruler_prompt(group: TrajectoryGroup, custom_rules: Sequence[str] = ()) -> str:
    """Assemble the judge prompt: grading standards, injected custom rules,
    the shared rollout context, and one tagged block per trajectory in group
    order."""
    parts = ["<system message>\n", GRADING_STANDARDS_HEADER]
    for rule in custom_rules:
        parts.append(f"- {rule}\n")
    parts.append(GRADING_STANDARDS_FOOTER)
    parts.append("</system message>\n")
    parts.append("<user message>\n<context>\n")
    context = [
        {"content": group.context_system, "role": "user"},
        {"content": group.context_user, "role": "user"},
    ]
    parts.append(json.dumps(context, indent=2))
    parts.append("\n</context>\nTrajectories:\n")
    for traj in group.trajectories:
        parts.append(f'<trajectory id="{traj.trajectory_id}">\n')
        parts.append(json.dumps([{"role": "assistant", "content": traj.completion}], indent=2))
        parts.append("\n</trajectory>\n")
    parts.append("</user message>\n")
    return "".join(parts)


class JudgeError(Exception):
    """Base class for judge transport and response failures."""


class RulerParseError(JudgeError):
    """The response is not the documented score document."""


class RulerCompletenessError(JudgeError):
    """Scores are missing, duplicated, or name an unknown trajectory."""


class RulerRangeError(JudgeError):
    """A score falls outside [0, 1]."""


class JudgeRetriesExhausted(JudgeError):
    """No parseable response within the retry budget."""


def parse_ruler_scores(response: str, expected_ids: Iterable[str]) -> list[tuple[str, float]]:
    """Parse and validate the judge score document against the group's ids."""
    expected = set(expected_ids)
    try:
        doc = json.loads(response)
    except json.JSONDecodeError as exc:
        raise RulerParseError(f"response is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or not isinstance(doc.get("scores"), list):
        raise RulerParseError('response must be an object with a "scores" array')

    out: list[tuple[str, float]] = []
    seen: set[str] = set()
    for entry in doc["scores"]:
        if not isinstance(entry, dict) or "trajectory_id" not in entry or "score" not in entry:
            raise RulerParseError("each score entry needs trajectory_id and score")
        tid = str(entry["trajectory_id"])
        if tid in seen:
            raise RulerCompletenessError(f"duplicate trajectory id {tid!r}")
        if tid not in expected:
            raise RulerCompletenessError(f"unexpected trajectory id {tid!r}")
        seen.add(tid)
        score = entry["score"]
        if not isinstance(score, (int, float)) or isinstance(score, bool):
            raise RulerParseError(f"score for trajectory {tid!r} is not a number")
        if not 0.0 <= float(score) <= 1.0:
            raise RulerRangeError(f"score {score} for trajectory {tid!r} outside [0, 1]")
        out.append((tid, float(score)))
    missing = expected - seen
    if missing:
        raise RulerCompletenessError(f"missing trajectory ids {sorted(missing)}")
    return out


PR_RATING_VALUES = frozenset({-1, 1, 2, 3, 4, 5})


def parse_pr_rating(response: str) -> int:
    """Extract the discrete proactiveness rating; -1 is the cannot-evaluate sentinel."""
    try:
        doc = json.loads(response)
    except json.JSONDecodeError as exc:
        raise RulerParseError(f"rating response is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or "rating" not in doc:
        raise RulerParseError('rating response must be an object with a "rating" field')
    rating = doc["rating"]
    if not isinstance(rating, int) or isinstance(rating, bool) or rating not in PR_RATING_VALUES:
        raise RulerRangeError(f"rating {rating!r} not in {sorted(PR_RATING_VALUES)}")
    return rating


@dataclass(frozen=True)
class JudgeExchange:
    """One judged group: the prompt sent, the rules injected, the scores back."""

    prompt: str
    custom_rules: tuple[str, ...]
    scores: tuple[tuple[str, float], ...]


JudgeTransport = Callable[[str], str]


def score_group(
    group: TrajectoryGroup,
    transport: JudgeTransport,
    custom_rules: Sequence[str] = (),
    max_retries: int = 3,
    backoff_base: float = 0.5,
    sleep: Callable[[float], None] = time.sleep,
) -> dict[str, float]:
    """Call the judge for one group, retrying malformed responses with backoff.

    The first attempt plus up to ``max_retries`` retries; exhaustion raises
    ``JudgeRetriesExhausted`` carrying the last parse error. Transports may
    raise ``JudgeError`` themselves to mark a call retryable; anything else
    propagates immediately.
    """
    prompt = build_ruler_prompt(group, custom_rules)
    last_error: Exception | None = None
    for attempt in range(max_retries + 1):
        if attempt:
            sleep(backoff_base * (2 ** (attempt - 1)))
        try:
            response = transport(prompt)
            return dict(parse_ruler_scores(response, group.expected_ids()))
        except JudgeError as exc:
            last_error = exc
    raise JudgeRetriesExhausted(
        f"group {group.scenario_id!r}: no valid judge response after "
        f"{max_retries + 1} attempts: {last_error}"
    )


def run_judge_exchange(
    group: TrajectoryGroup,
    transport: JudgeTransport,
    custom_rules: Sequence[str] = (),
    max_retries: int = 3,
    backoff_base: float = 0.5,
    sleep: Callable[[float], None] = time.sleep,
) -> JudgeExchange:
    """Judge one group and keep the full exchange for audit trails."""
    scores = score_group(group, transport, custom_rules, max_retries, backoff_base, sleep)
    return JudgeExchange(
        prompt=build_ruler_prompt(group, custom_rules),
        custom_rules=tuple(custom_rules),
        scores=tuple(sorted(scores.items())),
    )


def attach_scores(group: TrajectoryGroup, scores: Mapping[str, float]) -> TrajectoryGroup:
    return replace(
        group,
        trajectories=tuple(
            replace(t, judge_score=scores.get(t.trajectory_id, t.judge_score))
            for t in group.trajectories
        ),
    )


def score_groups(
    groups: Sequence[TrajectoryGroup],
    transport: JudgeTransport,
    custom_rules: Sequence[str] = (),
    max_retries: int = 3,
    max_concurrent: int = 8,
    backoff_base: float = 0.5,
    sleep: Callable[[float], None] = time.sleep,
) -> list[TrajectoryGroup]:
    """Judge many groups with a bounded number of in-flight calls.

    Results attach by trajectory id, so completion order does not matter.
    """
    if max_concurrent < 1:
        raise ValueError("max_concurrent must be >= 1")
    with ThreadPoolExecutor(max_workers=max_concurrent) as pool:
        futures = [
            pool.submit(score_group, g, transport, custom_rules, max_retries, backoff_base, sleep)
            for g in groups
        ]
        return [attach_scores(g, f.result()) for g, f in zip(groups, futures)]
