"""Group-relative advantages and the cap-clip gradient-weight rule.

Log-probability ratios are caller-supplied; this module is pure arithmetic
over one rollout group at a time.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

STD_FLOOR = 1e-8


@dataclass(frozen=True)
class ClipConfig:
    epsilon: float = 0.2
    epsilon_high: float = 0.2
    ratio_cap: float = 10.0

    def __post_init__(self) -> None:
        if not 0 < self.epsilon < 1 or not 0 < self.epsilon_high < 1:
            raise ValueError("clip epsilons must lie in (0, 1)")
        if self.ratio_cap < 1:
            raise ValueError("ratio cap must be >= 1")


@dataclass(frozen=True)
class GroupRewards:
    rewards: tuple[float, ...]
    step: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "rewards", tuple(float(r) for r in self.rewards))
        if not self.rewards:
            raise ValueError("a rollout group needs at least one reward")


@dataclass(frozen=True)
class CandidateUpdate:
    advantage: float
    ratio: float
    weight: float


def group_advantages(group: GroupRewards, use_sample_std: bool = False) -> list[float]:
    """Normalize rewards within the group to zero mean, unit spread.

    A (near-)constant group yields all-zero advantages rather than dividing
    by a vanishing spread.
    """
    rewards = group.rewards
    k = len(rewards)
    mean = sum(rewards) / k
    divisor = k - 1 if use_sample_std and k > 1 else k
    variance = sum((r - mean) ** 2 for r in rewards) / divisor
    std = math.sqrt(variance)
    if std < STD_FLOOR:
        return [0.0] * k
    return [(r - mean) / std for r in rewards]


def cap_clip_weight(ratio: float, advantage: float, config: ClipConfig = ClipConfig()) -> float:
    """Gradient weight for one candidate: capped ratio with one-sided clipping."""
    if ratio < 0:
        raise ValueError("importance ratio must be nonnegative")
    capped = min(ratio, config.ratio_cap)
    clipped = min(max(capped, 1.0 - config.epsilon), 1.0 + config.epsilon_high)
    unclipped_term = capped * advantage
    clipped_term = clipped * advantage
    if unclipped_term <= clipped_term:
        return unclipped_term
    return clipped_term


def turn_update_weights(
    group: GroupRewards,
    ratios: Sequence[float],
    config: ClipConfig = ClipConfig(),
    use_sample_std: bool = False,
) -> list[CandidateUpdate]:
    """Per-candidate advantages and gradient weights for one dialogue-turn group."""
    if len(ratios) != len(group.rewards):
        raise ValueError(
            f"got {len(ratios)} ratios for {len(group.rewards)} rewards"
        )
    advantages = group_advantages(group, use_sample_std=use_sample_std)
    return [
        CandidateUpdate(
            advantage=adv,
            ratio=min(float(r), config.ratio_cap),
            weight=cap_clip_weight(float(r), adv, config),
        )
        for adv, r in zip(advantages, ratios)
    ]
