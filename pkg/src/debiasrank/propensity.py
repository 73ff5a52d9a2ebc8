"""Positional-transition propensity estimation from a reranker's behavior on randomized inputs."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import CandidateList, Ranking, complete_ranking


@dataclass(frozen=True)
class TransitionCounts:
    """k x k table of observed input-position -> output-rank transitions.

    Cell (i, r) counts how often the passage at input position i+1 received
    output rank r+1. With complete observations every row sums to the number
    of observations, i.e. total_queries * shuffles_per_query.
    """

    counts: np.ndarray
    total_queries: int
    shuffles_per_query: int
    k: int

    def __post_init__(self) -> None:
        counts = np.array(self.counts, dtype=np.int64)
        if counts.shape != (self.k, self.k):
            raise ValueError(f"counts must be {self.k}x{self.k}, got {counts.shape}")
        if (counts < 0).any():
            raise ValueError("counts must be nonnegative")
        counts.flags.writeable = False
        object.__setattr__(self, "counts", counts)

    @property
    def denominator(self) -> int:
        """Total passages observed across all permutations: |Q| * k * n."""
        return self.total_queries * self.k * self.shuffles_per_query


@dataclass(frozen=True)
class PropensityMatrix:
    """Estimated transition propensities, clamped away from zero.

    Before clamping each row sums to 1/k and the whole matrix sums to 1;
    after clamping every entry is at least epsilon_floor so inverse weights
    stay finite.
    """

    omega: np.ndarray
    epsilon_floor: float

    def __post_init__(self) -> None:
        omega = np.array(self.omega, dtype=np.float64)
        if omega.ndim != 2 or omega.shape[0] != omega.shape[1]:
            raise ValueError(f"omega must be square, got shape {omega.shape}")
        if self.epsilon_floor <= 0:
            raise ValueError("epsilon_floor must be > 0")
        if (omega < self.epsilon_floor).any():
            raise ValueError("omega entries must be >= epsilon_floor")
        omega.flags.writeable = False
        object.__setattr__(self, "omega", omega)

    @property
    def k(self) -> int:
        return self.omega.shape[0]


def count_transitions(observations: Sequence[tuple[CandidateList, Ranking]]) -> TransitionCounts:
    """Tally input-position -> output-rank transitions over reranked lists.

    Partial rankings are completed in original input order first, keeping row
    sums exact. The reduction is associative and commutative, so observation
    order never matters.
    """
    if not observations:
        raise ValueError("no observations")
    k = observations[0][0].k
    counts = np.zeros((k, k), dtype=np.int64)
    query_ids = set()
    for list_, ranking in observations:
        if list_.k != k or ranking.k != k:
            raise ValueError(f"inconsistent k: query {list_.query_id!r} has {list_.k}/{ranking.k}, expected {k}")
        if not ranking.is_complete:
            ranking = complete_ranking(ranking, list_)
        query_ids.add(list_.query_id)
        counts[np.arange(k), np.asarray(ranking.ranks, dtype=np.int64) - 1] += 1
    total_queries = len(query_ids)
    shuffles, remainder = divmod(len(observations), total_queries)
    if remainder:
        raise ValueError(
            f"{len(observations)} observations over {total_queries} queries: "
            "every query must be observed the same number of times"
        )
    return TransitionCounts(counts=counts, total_queries=total_queries, shuffles_per_query=shuffles, k=k)


def estimate_propensities(counts: TransitionCounts) -> PropensityMatrix:
    """Normalize transition counts into propensities and clamp empty cells.

    omega = counts / (|Q| * k * n). Zero cells would make inverse-propensity
    weights blow up, so entries are floored at one pseudo-observation,
    1 / (|Q| * k * n).
    """
    denom = counts.denominator
    if denom == 0:
        raise ValueError("empty estimation run: |Q| * k * n = 0")
    floor = 1.0 / denom
    omega = np.maximum(counts.counts / denom, floor)
    return PropensityMatrix(omega=omega, epsilon_floor=floor)


def propensity_heatmap(counts: TransitionCounts) -> list[tuple[int, int, int]]:
    """Dense (input_position, output_rank, count) rows for plotting, 1-based, lossless."""
    return [
        (i + 1, r + 1, int(counts.counts[i, r]))
        for i in range(counts.k)
        for r in range(counts.k)
    ]
