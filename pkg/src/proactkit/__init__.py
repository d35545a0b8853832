"""Toolkit for evaluating, rewarding, ranking, and orchestrating proactive
task-scheduling dialogue agents."""

__version__ = "0.1.0"

from .datamodel import (
    ActionCatalog,
    ActionInstance,
    ActionSpec,
    Dialogue,
    ParameterSpec,
    ReferenceRange,
    TriggerStatus,
    Turn,
    TurnAnnotation,
    compute_reference_ranges,
    is_ready,
    is_valid_transition,
    update_action_states,
)
from .metrics import (
    FaultMode,
    MetricValue,
    TurnMetricInput,
    action_consistency,
    aggregate_report,
    consistency_difference,
    evaluate_dialogue,
    fault_trigger_rate,
    max_action_consistency,
    proactive_timing,
    ready_action_rate,
)
from .ranking import ModelRow, PriResult, compute_pri, minmax_normalize, rank_group
from .rewards import RewardSchedule, TrajectoryGroup, TurnRewardInput, compute_reward
from .grpo import ClipConfig, GroupRewards, cap_clip_weight, group_advantages, turn_update_weights
