"""Composite proactiveness ranking and run-consistency statistics."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

INDEX_FLOOR = 0.001

METRIC_FIELDS = ("ac", "max_ac", "difference", "pt", "ftr", "rar")
# metrics where a lower raw value is better and the normalized column is flipped
INVERTED_FIELDS = frozenset({"difference", "ftr"})


@dataclass(frozen=True)
class ModelRow:
    model_id: str
    ac: float
    max_ac: float
    difference: float
    pt: float
    ftr: float
    rar: float


@dataclass(frozen=True)
class PriResult:
    model_id: str
    ci: float
    ti: float
    pri: float
    normalized: Mapping[str, float]


def minmax_normalize(values: Sequence[float]) -> list[float]:
    """Scale into [0, 1] within the group; a constant column maps to 0.5."""
    if not values:
        raise ValueError("cannot normalize an empty list")
    lo, hi = min(values), max(values)
    if hi == lo:
        return [0.5] * len(values)
    return [(v - lo) / (hi - lo) for v in values]


def pri_from_indices(ci: float, ti: float) -> float:
    """Harmonic mean of the consistency and timing indices, floored for stability."""
    ci = max(ci, INDEX_FLOOR)
    ti = max(ti, INDEX_FLOOR)
    return 2.0 * ci * ti / (ci + ti)


def compute_pri(group: Sequence[ModelRow]) -> list[PriResult]:
    """Min-max normalize every metric within the group, then combine.

    The consistency index averages the normalized AC, Max AC, and inverted
    Difference columns; the timing index averages normalized PT, inverted
    FTR, and RAR. Group membership is caller-defined and never inferred.
    """
    if not group:
        raise ValueError("empty comparison group")
    for row in group:
        for name in METRIC_FIELDS:
            value = getattr(row, name)
            if not math.isfinite(value):
                raise ValueError(f"row {row.model_id!r}: non-finite {name}={value}")

    normalized: dict[str, list[float]] = {
        name: minmax_normalize([getattr(r, name) for r in group]) for name in METRIC_FIELDS
    }
    results = []
    for idx, row in enumerate(group):
        norm = {name: normalized[name][idx] for name in METRIC_FIELDS}
        ci = (norm["ac"] + norm["max_ac"] + (1.0 - norm["difference"])) / 3.0
        ti = (norm["pt"] + (1.0 - norm["ftr"]) + norm["rar"]) / 3.0
        ci = max(ci, INDEX_FLOOR)
        ti = max(ti, INDEX_FLOOR)
        results.append(
            PriResult(model_id=row.model_id, ci=ci, ti=ti, pri=pri_from_indices(ci, ti), normalized=norm)
        )
    return results


@dataclass(frozen=True)
class RankedResult:
    result: PriResult
    rank: int
    top_k: int | None  # 1-based marker for the leading rows, None below the cut
    tied: bool


def rank_group(results: Sequence[PriResult], top_k: int = 4) -> list[RankedResult]:
    """Order by descending PRI; ties break lexicographically by model id and are flagged."""
    ordered = sorted(results, key=lambda r: (-r.pri, r.model_id))
    pri_counts: dict[float, int] = {}
    for r in ordered:
        pri_counts[r.pri] = pri_counts.get(r.pri, 0) + 1
    return [
        RankedResult(
            result=r,
            rank=i + 1,
            top_k=(i + 1) if i < top_k else None,
            tied=pri_counts[r.pri] > 1,
        )
        for i, r in enumerate(ordered)
    ]


# --------------------------------------------------------------------------
# run-to-run consistency
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class RunSeries:
    metric_id: str
    steps: tuple[tuple[int, float], ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "steps", tuple((int(u), float(v)) for u, v in self.steps))
        indices = [u for u, _ in self.steps]
        if any(b <= a for a, b in zip(indices, indices[1:])):
            raise ValueError(f"series {self.metric_id!r}: steps must be strictly increasing")

    @property
    def final_value(self) -> float:
        if not self.steps:
            raise ValueError(f"series {self.metric_id!r} is empty")
        return self.steps[-1][1]


def pearson(xs: Sequence[float], ys: Sequence[float]) -> float | None:
    """Linear correlation; None when either side has zero variance."""
    n = len(xs)
    if n != len(ys) or n < 2:
        raise ValueError("correlation needs two equally long series of length >= 2")
    mx = sum(xs) / n
    my = sum(ys) / n
    sxx = sum((x - mx) ** 2 for x in xs)
    syy = sum((y - my) ** 2 for y in ys)
    if sxx == 0 or syy == 0:
        return None
    sxy = sum((x - mx) * (y - my) for x, y in zip(xs, ys))
    return sxy / math.sqrt(sxx * syy)


@dataclass(frozen=True)
class RunConsistency:
    final: Mapping[str, float]
    trajectory: Mapping[str, float]
    combined: float
    warnings: tuple[str, ...] = ()


def run_consistency(run1: Sequence[RunSeries], run2: Sequence[RunSeries]) -> RunConsistency:
    """Compare two training runs metric by metric.

    Final-value consistency is 1 - |v1-v2| / (|v1|+|v2|); trajectory
    consistency is the linear correlation over the steps present in both
    runs. The combined score averages the two per-metric means.
    """
    by_id1 = {s.metric_id: s for s in run1}
    by_id2 = {s.metric_id: s for s in run2}
    if set(by_id1) != set(by_id2):
        missing = sorted(set(by_id1) ^ set(by_id2))
        raise ValueError(f"metrics present in only one run: {missing}")

    final: dict[str, float] = {}
    trajectory: dict[str, float] = {}
    warnings = []
    for metric_id in sorted(by_id1):
        s1, s2 = by_id1[metric_id], by_id2[metric_id]
        v1, v2 = s1.final_value, s2.final_value
        denom = abs(v1) + abs(v2)
        final[metric_id] = 1.0 if denom == 0 else 1.0 - abs(v1 - v2) / denom

        shared = sorted(set(u for u, _ in s1.steps) & set(u for u, _ in s2.steps))
        if len(shared) < 2:
            raise ValueError(f"series {metric_id!r}: need >= 2 overlapping steps for correlation")
        d1 = dict(s1.steps)
        d2 = dict(s2.steps)
        rho = pearson([d1[u] for u in shared], [d2[u] for u in shared])
        if rho is None:
            warnings.append(f"series {metric_id!r}: zero variance, correlation undefined")
        else:
            trajectory[metric_id] = rho

    final_mean = sum(final.values()) / len(final)
    traj_mean = sum(trajectory.values()) / len(trajectory) if trajectory else 0.0
    return RunConsistency(
        final=final,
        trajectory=trajectory,
        combined=0.5 * (final_mean + traj_mean),
        warnings=tuple(warnings),
    )


def avg_metric_gradient(series: RunSeries) -> float:
    """Mean change per checkpoint step (unit step spacing)."""
    values = [v for _, v in series.steps]
    if len(values) < 2:
        raise ValueError("need at least two points to take a gradient")
    diffs = [b - a for a, b in zip(values, values[1:])]
    return sum(diffs) / len(diffs)
