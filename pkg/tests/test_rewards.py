import json
import re
from pathlib import Path

import pytest

from proactkit.rewards import (
    ADAPTIVE_PHASE_WEIGHTS,
    JudgeRetriesExhausted,
    MetricBase,
    RewardRule,
    RewardSchedule,
    RolloutTrajectory,
    RulerCompletenessError,
    RulerParseError,
    RulerRangeError,
    TrajectoryGroup,
    TurnRewardInput,
    adaptive_metric_reward,
    adaptive_ruler_reward,
    attach_scores,
    build_ruler_prompt,
    compute_reward,
    hybrid_ruler_reward,
    metric_reward,
    parse_pr_rating,
    parse_ruler_scores,
    ruler_lambda,
    score_group,
    score_groups,
    trajectory_reward,
    weighted_metric_reward,
)

DATA = Path(__file__).parent / "data"


def make_group(k=3, scenario="support-d17-t4", with_scores=False):
    return TrajectoryGroup(
        scenario_id=scenario,
        step=3,
        context_system="You are an expert AI assistant for professional task scheduling.",
        context_user=(
            "## CONVERSATION AT TURN 4\n"
            "Turn 1 (customer): Hi, my order never arrived.\n"
            "Turn 2 (agent): Let me check that for you."
        ),
        trajectories=tuple(
            RolloutTrajectory(
                trajectory_id=str(i),
                completion=(
                    f"<think>candidate {i} weighs the context</think>\n"
                    '<action>{"proactive_action_opportunities": []}</action>'
                ),
                metrics=TurnRewardInput(rac=0.2 * i, max_rac=0.25 * i, ptr=0.1, ftr=0.0),
                judge_score=0.3 * i if with_scores else None,
            )
            for i in range(1, k + 1)
        ),
    )


CUSTOM_RULE = (
    "Reward early and correct triggering: give bonus credit to trajectories that mark "
    "appropriate ready or triggered opportunities at the earliest relevant dialogue turn; "
    "the reward diminishes as they are delayed. Penalize inaccuracy: deduct for wrongly "
    "assigned ready or triggered status and for missed valid opportunities."
)


class TestMetricRewards:
    def test_pass_through(self):
        i = TurnRewardInput(rac=0.4, max_rac=0.9)
        assert metric_reward(i, MetricBase.RAC) == 0.4
        assert metric_reward(i, MetricBase.MAX_RAC) == 0.9

    def test_trajectory_running_mean(self):
        assert trajectory_reward([0.2, 0.6]) == pytest.approx(0.4)

    def test_trajectory_empty_rejected(self):
        with pytest.raises(ValueError):
            trajectory_reward([])

    def test_input_bounds_validated(self):
        with pytest.raises(ValueError):
            TurnRewardInput(rac=1.2, max_rac=0.5)
        with pytest.raises(ValueError):
            TurnRewardInput(rac=0.5, max_rac=0.5, ruler=-0.1)


class TestWeightedMetricReward:
    def test_published_weights(self):
        i = TurnRewardInput(rac=0.5, max_rac=0.5, ptr=0.2, ftr=0.1)
        assert weighted_metric_reward(i, MetricBase.RAC) == pytest.approx(0.509, abs=1e-12)

    def test_zero_timing_terms(self):
        i = TurnRewardInput(rac=0.7, max_rac=0.8)
        assert weighted_metric_reward(i, MetricBase.MAX_RAC) == pytest.approx(0.8, abs=1e-12)

    def test_boundary_arithmetic(self):
        i = TurnRewardInput(rac=0.0, max_rac=0.0, ptr=1.0, ftr=1.0)
        assert weighted_metric_reward(i, MetricBase.RAC) == pytest.approx(0.04, abs=1e-12)


class TestAdaptiveMetricReward:
    def test_exploration_phase(self):
        i = TurnRewardInput(rac=0.0, max_rac=0.5, ptr=0.1)
        assert adaptive_metric_reward(i, 0, 9) == pytest.approx(0.42, abs=1e-12)

    def test_balanced_phase_includes_lower_boundary(self):
        i = TurnRewardInput(rac=0.5, max_rac=0.0, ptr=0.2, ftr=0.1)
        # u/U == 1/3 falls in the balanced phase
        assert adaptive_metric_reward(i, 3, 9) == pytest.approx(0.35, abs=1e-12)

    def test_conservative_phase_includes_boundary(self):
        i = TurnRewardInput(rac=0.5, max_rac=0.0, ftr=0.1)
        assert adaptive_metric_reward(i, 6, 9) == pytest.approx(0.26, abs=1e-12)

    def test_phase_reduction_without_timing_signal(self):
        i = TurnRewardInput(rac=0.5, max_rac=0.7)
        assert adaptive_metric_reward(i, 0, 9) == pytest.approx(0.8 * 0.7, abs=1e-12)
        assert adaptive_metric_reward(i, 4, 9) == pytest.approx(0.6 * 0.5, abs=1e-12)
        assert adaptive_metric_reward(i, 8, 9) == pytest.approx(0.6 * 0.5, abs=1e-12)

    def test_balanced_phase_weights_sum_to_one(self):
        w1, w2, w3, w4 = ADAPTIVE_PHASE_WEIGHTS
        assert w2 + w3 + 0.1 == pytest.approx(1.0)

    def test_step_bounds(self):
        i = TurnRewardInput(rac=0.5, max_rac=0.5)
        with pytest.raises(ValueError):
            adaptive_metric_reward(i, 9, 9)
        with pytest.raises(ValueError):
            adaptive_metric_reward(i, -1, 9)

    def test_reward_bounds_over_unit_inputs(self):
        worst_low, worst_high = 0.0, 0.0
        for u, total in [(0, 9), (3, 9), (8, 9)]:
            for rac in (0.0, 1.0):
                for max_rac in (0.0, 1.0):
                    for ptr in (0.0, 1.0):
                        for ftr in (0.0, 1.0):
                            i = TurnRewardInput(rac=rac, max_rac=max_rac, ptr=ptr, ftr=ftr)
                            r = adaptive_metric_reward(i, u, total)
                            worst_low = min(worst_low, r)
                            worst_high = max(worst_high, r)
        assert worst_low >= -0.4 - 1e-12
        assert worst_high <= 1.0 + 1e-12

    def test_every_rule_bounded_on_unit_inputs(self):
        # the conservative phase floors everything at -0.4; the fixed-weight
        # combination tops out at 1.0 + its timing bonus
        grid = [0.0, 0.25, 0.5, 0.75, 1.0]
        low, high = 0.0, 0.0
        for rac in grid:
            for ptr in (0.0, 1.0):
                for ftr in (0.0, 1.0):
                    for ruler in (0.0, 1.0):
                        i = TurnRewardInput(rac=rac, max_rac=rac, ptr=ptr, ftr=ftr, ruler=ruler)
                        values = [
                            metric_reward(i, MetricBase.RAC),
                            weighted_metric_reward(i, MetricBase.RAC),
                            adaptive_metric_reward(i, 0, 3),
                            adaptive_metric_reward(i, 1, 3),
                            adaptive_metric_reward(i, 2, 3),
                            hybrid_ruler_reward(i, 0.5, MetricBase.RAC),
                            adaptive_ruler_reward(i, 1, 3),
                        ]
                        low = min(low, *values)
                        high = max(high, *values)
        assert low >= -0.4 - 1e-12
        assert high <= 1.0 + 0.05 + 1e-12


class TestJudgeWeightedRewards:
    def test_hybrid_endpoints(self):
        i = TurnRewardInput(rac=0.4, max_rac=0.7, ruler=0.8)
        assert hybrid_ruler_reward(i, 0.0, MetricBase.RAC) == pytest.approx(0.4)
        assert hybrid_ruler_reward(i, 1.0, MetricBase.RAC) == pytest.approx(0.8)

    def test_hybrid_mixture(self):
        i = TurnRewardInput(rac=0.4, max_rac=0.7, ruler=0.8)
        assert hybrid_ruler_reward(i, 0.5, MetricBase.RAC) == pytest.approx(0.6)

    def test_missing_judge_score(self):
        i = TurnRewardInput(rac=0.4, max_rac=0.7)
        with pytest.raises(ValueError, match="judge score required"):
            hybrid_ruler_reward(i, 0.5, MetricBase.RAC)

    def test_schedule_start_equals_metric(self):
        i = TurnRewardInput(rac=0.37, max_rac=0.5, ruler=0.9)
        assert adaptive_ruler_reward(i, 0, 10, base=MetricBase.RAC) == 0.37

    def test_schedule_endpoint(self):
        i = TurnRewardInput(rac=0.5, max_rac=0.5, ruler=0.9)
        assert adaptive_ruler_reward(i, 9, 10, lambda_max=0.3) == pytest.approx(0.62, abs=1e-12)

    def test_lambda_schedule_nondecreasing_and_capped(self):
        total = 25
        values = [ruler_lambda(u, total, 0.3) for u in range(total)]
        assert values[0] == 0.0
        assert all(b >= a for a, b in zip(values, values[1:]))
        assert max(values) == pytest.approx(0.3)

    def test_single_step_schedule_uses_cap(self):
        assert ruler_lambda(0, 1, 0.3) == 0.3

    def test_monotone_in_judge_score(self):
        for u, total in [(0, 10), (5, 10), (9, 10)]:
            rewards = []
            for k in range(100):
                i = TurnRewardInput(rac=0.4, max_rac=0.6, ruler=k / 99)
                rewards.append(adaptive_ruler_reward(i, u, total, 0.3, MetricBase.RAC))
            assert all(b >= a - 1e-15 for a, b in zip(rewards, rewards[1:]))
            hybrid = [
                hybrid_ruler_reward(
                    TurnRewardInput(rac=0.4, max_rac=0.6, ruler=k / 99), 0.3, MetricBase.RAC
                )
                for k in range(100)
            ]
            assert all(b >= a - 1e-15 for a, b in zip(hybrid, hybrid[1:]))


class TestRewardSchedule:
    @pytest.mark.parametrize(
        "name,rule,base",
        [
            ("rac_score", RewardRule.RAC, MetricBase.RAC),
            ("max_rac_score", RewardRule.MAX_RAC, MetricBase.MAX_RAC),
            ("ruler", RewardRule.RULER, MetricBase.RAC),
            ("weighted_rac_score", RewardRule.WEIGHTED_METRIC, MetricBase.RAC),
            ("weighted_max_rac_score", RewardRule.WEIGHTED_METRIC, MetricBase.MAX_RAC),
            ("adaptive_metric_score", RewardRule.ADAPTIVE_METRIC, MetricBase.RAC),
            ("hybrid_ruler_weighted_rac_score", RewardRule.HYBRID_RULER, MetricBase.RAC),
            ("hybrid_ruler_weighted_max_rac_score", RewardRule.HYBRID_RULER, MetricBase.MAX_RAC),
            ("schedule_ruler_weighted_rac_score", RewardRule.ADAPTIVE_RULER, MetricBase.RAC),
            ("schedule_ruler_weighted_max_rac_score", RewardRule.ADAPTIVE_RULER, MetricBase.MAX_RAC),
        ],
    )
    def test_rule_name_registry(self, name, rule, base):
        schedule = RewardSchedule.from_rule_name(name)
        assert schedule.rule is rule
        assert schedule.metric_base is base

    def test_unknown_rule(self):
        with pytest.raises(ValueError, match="unknown reward rule"):
            RewardSchedule.from_rule_name("definitely_not_a_rule")

    def test_dispatcher_matches_direct_calls(self):
        i = TurnRewardInput(rac=0.4, max_rac=0.8, ptr=0.3, ftr=0.2, ruler=0.7)
        cases = {
            "rac_score": 0.4,
            "max_rac_score": 0.8,
            "ruler": 0.7,
            "weighted_max_rac_score": weighted_metric_reward(i, MetricBase.MAX_RAC),
            "adaptive_metric_score": adaptive_metric_reward(i, 2, 10),
            "hybrid_ruler_weighted_rac_score": hybrid_ruler_reward(i, 0.5, MetricBase.RAC),
            "schedule_ruler_weighted_max_rac_score": adaptive_ruler_reward(
                i, 2, 10, 0.3, MetricBase.MAX_RAC
            ),
        }
        for name, expected in cases.items():
            schedule = RewardSchedule.from_rule_name(name, total_steps=10)
            assert compute_reward(schedule, i, u=2) == pytest.approx(expected)

    def test_needs_judge(self):
        assert RewardSchedule.from_rule_name("ruler").needs_judge
        assert RewardSchedule.from_rule_name("schedule_ruler_weighted_rac_score").needs_judge
        assert not RewardSchedule.from_rule_name("rac_score").needs_judge


class TestRulerPrompt:
    def test_general_golden(self):
        assert build_ruler_prompt(make_group()) == (DATA / "ruler_prompt_general.txt").read_text()

    def test_custom_golden(self):
        assert build_ruler_prompt(make_group(), [CUSTOM_RULE]) == (
            DATA / "ruler_prompt_custom.txt"
        ).read_text()

    def test_custom_rule_injected_exactly_once_between_standards_and_context(self):
        prompt = build_ruler_prompt(make_group(), [CUSTOM_RULE])
        assert prompt.count(CUSTOM_RULE) == 1
        assert prompt.index("Grading standards:") < prompt.index(CUSTOM_RULE) < prompt.index("<context>")

    def test_general_prompt_has_no_injected_rules(self):
        general = build_ruler_prompt(make_group())
        custom = build_ruler_prompt(make_group(), [CUSTOM_RULE])
        assert CUSTOM_RULE not in general
        assert len(custom) > len(general)

    def test_trajectory_blocks(self):
        prompt = build_ruler_prompt(make_group(k=3))
        ids = re.findall(r'<trajectory id="(\d+)">', prompt)
        assert ids == ["1", "2", "3"]

    def test_context_appears_once(self):
        group = make_group()
        prompt = build_ruler_prompt(group)
        assert prompt.count(group.context_user.splitlines()[0].strip('# ')) >= 1
        assert prompt.count("<context>") == 1


def response_doc(scores):
    return json.dumps(
        {
            "scores": [
                {"trajectory_id": tid, "explanation": "<explanation for rating>", "score": s}
                for tid, s in scores
            ]
        }
    )


class TestRulerParsing:
    def test_accepts_documented_example(self):
        doc = response_doc([("1", 0.95), ("2", 0.90), ("3", 0.85), ("4", 0.30)])
        parsed = parse_ruler_scores(doc, {"1", "2", "3", "4"})
        assert parsed == [("1", 0.95), ("2", 0.90), ("3", 0.85), ("4", 0.30)]

    def test_out_of_range_score(self):
        with pytest.raises(RulerRangeError):
            parse_ruler_scores(response_doc([("1", 1.5)]), {"1"})

    def test_missing_id(self):
        with pytest.raises(RulerCompletenessError):
            parse_ruler_scores(response_doc([("1", 0.5), ("3", 0.5)]), {"1", "2", "3"})

    def test_duplicate_id(self):
        with pytest.raises(RulerCompletenessError):
            parse_ruler_scores(response_doc([("1", 0.5), ("1", 0.6)]), {"1", "2"})

    def test_unexpected_id(self):
        with pytest.raises(RulerCompletenessError):
            parse_ruler_scores(response_doc([("1", 0.5), ("9", 0.6)]), {"1"})

    def test_malformed_document(self):
        with pytest.raises(RulerParseError):
            parse_ruler_scores("not json at all", {"1"})
        with pytest.raises(RulerParseError):
            parse_ruler_scores(json.dumps({"wrong": []}), {"1"})
        with pytest.raises(RulerParseError):
            parse_ruler_scores(json.dumps({"scores": [{"trajectory_id": "1"}]}), {"1"})

    def test_error_kinds_are_distinct(self):
        assert not issubclass(RulerRangeError, RulerCompletenessError)
        assert not issubclass(RulerCompletenessError, RulerRangeError)
        assert not issubclass(RulerParseError, (RulerRangeError, RulerCompletenessError))


class TestPrRating:
    def test_documented_scale(self):
        assert parse_pr_rating(json.dumps({"reasoning": "...", "rating": 4})) == 4

    def test_cannot_evaluate_sentinel(self):
        assert parse_pr_rating(json.dumps({"reasoning": "...", "rating": -1})) == -1

    def test_zero_rejected(self):
        with pytest.raises(RulerRangeError):
            parse_pr_rating(json.dumps({"rating": 0}))

    def test_malformed(self):
        with pytest.raises(RulerParseError):
            parse_pr_rating("nope")


class ScriptedTransport:
    """Returns canned score documents after a configurable number of failures."""

    def __init__(self, failures=0, score=0.5):
        self.failures = failures
        self.calls = 0
        self.score = score

    def __call__(self, prompt):
        self.calls += 1
        ids = re.findall(r'<trajectory id="([^"]+)">', prompt)
        if self.calls <= self.failures:
            return "garbled output"
        return response_doc([(tid, self.score) for tid in ids])


class TestJudgeClient:
    def test_retry_then_success_with_backoff(self):
        transport = ScriptedTransport(failures=2)
        delays = []
        scores = score_group(make_group(), transport, sleep=delays.append)
        assert transport.calls == 3
        assert delays == [0.5, 1.0]
        assert set(scores) == {"1", "2", "3"}

    def test_retries_exhausted(self):
        transport = ScriptedTransport(failures=10)
        with pytest.raises(JudgeRetriesExhausted):
            score_group(make_group(), transport, max_retries=3, sleep=lambda _d: None)
        assert transport.calls == 4

    def test_attach_by_id_is_order_independent(self):
        group = make_group()
        attached = attach_scores(group, {"3": 0.9, "1": 0.1, "2": 0.5})
        by_id = {t.trajectory_id: t.judge_score for t in attached.trajectories}
        assert by_id == {"1": 0.1, "2": 0.5, "3": 0.9}

    def test_score_groups_bounded_concurrency(self):
        groups = [make_group(scenario=f"s{i}") for i in range(6)]
        transport = ScriptedTransport()
        scored = score_groups(groups, transport, max_concurrent=3, sleep=lambda _d: None)
        assert len(scored) == 6
        for g in scored:
            assert all(t.judge_score == 0.5 for t in g.trajectories)

    def test_exchange_captures_prompt_and_scores(self):
        from proactkit.rewards import run_judge_exchange

        group = make_group()
        exchange = run_judge_exchange(
            group, ScriptedTransport(), custom_rules=[CUSTOM_RULE], sleep=lambda _d: None
        )
        assert exchange.prompt == build_ruler_prompt(group, [CUSTOM_RULE])
        assert exchange.custom_rules == (CUSTOM_RULE,)
        assert exchange.scores == (("1", 0.5), ("2", 0.5), ("3", 0.5))

    def test_transport_judge_error_is_retried(self):
        from proactkit.rewards import JudgeError

        calls = {"n": 0}

        def flaky_transport(prompt):
            calls["n"] += 1
            if calls["n"] == 1:
                raise JudgeError("transient backend failure")
            ids = re.findall(r'<trajectory id="([^"]+)">', prompt)
            return response_doc([(tid, 0.5) for tid in ids])

        scores = score_group(make_group(), flaky_transport, sleep=lambda _d: None)
        assert calls["n"] == 2
        assert set(scores.values()) == {0.5}

    def test_duplicate_trajectory_ids_rejected(self):
        with pytest.raises(ValueError, match="duplicate"):
            TrajectoryGroup(
                scenario_id="s",
                step=0,
                context_system="",
                context_user="",
                trajectories=(
                    RolloutTrajectory("1", "", TurnRewardInput(rac=0.1, max_rac=0.1)),
                    RolloutTrajectory("1", "", TurnRewardInput(rac=0.2, max_rac=0.2)),
                ),
            )
