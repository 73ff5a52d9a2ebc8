"""Permutation generation: unbiased shuffling, group rotation, and position-aware augmentation."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import CandidateList, Ranking, RelevanceJudgments

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def _splitmix64(x: int) -> int:
    x = (x + _GOLDEN) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


@dataclass(frozen=True)
class RngStream:
    """Counter-based random stream addressed by (seed, stream_id).

    The same pair always yields the same byte stream; distinct stream ids give
    independent streams, so per-instance substreams stay reproducible under
    any iteration order.
    """

    seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        key = ((self.stream_id & _MASK64) << 64) | (self.seed & _MASK64)
        return np.random.Generator(np.random.Philox(key=key))

    def substream(self, index: int) -> "RngStream":
        child = _splitmix64(_splitmix64(self.stream_id) ^ ((index + 1) & _MASK64))
        return RngStream(self.seed, child)


@dataclass(frozen=True)
class AugmentedSet:
    """Reordered training instances, ``augmentation_factor`` per source instance."""

    instances: tuple[tuple[CandidateList, Ranking], ...]
    augmentation_factor: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "instances", tuple(self.instances))
        if self.augmentation_factor < 1:
            raise ValueError("augmentation_factor must be >= 1")
        if len(self.instances) % self.augmentation_factor != 0:
            raise ValueError("instance count must be a multiple of the augmentation factor")

    def __len__(self) -> int:
        return len(self.instances)


def _fisher_yates_order(k: int, gen: np.random.Generator) -> list[int]:
    order = list(range(k))
    for i in range(k - 1, 0, -1):
        j = int(gen.integers(0, i + 1))
        order[i], order[j] = order[j], order[i]
    return order


def fisher_yates_shuffle(list_: CandidateList, rng: RngStream) -> CandidateList:
    """Uniformly random reordering: every one of the k! orderings is equiprobable."""
    return list_.reordered(_fisher_yates_order(list_.k, rng.generator()))


def _group_orders(k: int, n: int) -> list[list[int]]:
    """0-based index orders for the n cyclic rotations of n contiguous groups.

    When n does not divide k the first k mod n groups take the extra element,
    so group sizes differ by at most one.
    """
    if n < 1:
        raise ValueError(f"group count must be positive, got {n}")
    if n > k:
        raise ValueError(f"group count {n} exceeds list length {k}")
    base, extra = divmod(k, n)
    groups: list[list[int]] = []
    start = 0
    for g in range(n):
        size = base + (1 if g < extra else 0)
        groups.append(list(range(start, start + size)))
        start += size
    orders = []
    for r in range(n):
        rotated = groups[r:] + groups[:r]
        orders.append([i for grp in rotated for i in grp])
    return orders


def group_rotate(shuffled: CandidateList, n: int) -> list[CandidateList]:
    """Split into n contiguous groups and emit all n left rotations of the group sequence."""
    return [shuffled.reordered(order) for order in _group_orders(shuffled.k, n)]


def _pull_back_truth(truth: Ranking, order: Sequence[int]) -> Ranking:
    # Ranks travel with passages, so the relevance order is unchanged.
    if not truth.is_complete:
        raise ValueError("incomplete permutation")
    return Ranking(tuple(truth.ranks[i] for i in order))


def pos_aug(
    dataset: Sequence[tuple[CandidateList, Ranking]],
    n: int,
    rng: RngStream,
) -> AugmentedSet:
    """Position-aware augmentation: one unbiased shuffle, then n group rotations.

    Each source instance yields n reorderings whose true permutations are
    relabeled in place, so every passage keeps its relevance rank while
    appearing across many input positions.
    """
    instances: list[tuple[CandidateList, Ranking]] = []
    k = None
    for idx, (list_, truth) in enumerate(dataset):
        if k is None:
            k = list_.k
        elif list_.k != k:
            raise ValueError(f"inconsistent k: {list_.k} vs {k}")
        shuffle = _fisher_yates_order(list_.k, rng.substream(idx).generator())
        for rotation in _group_orders(list_.k, n):
            order = [shuffle[i] for i in rotation]
            instances.append((list_.reordered(order), _pull_back_truth(truth, order)))
    return AugmentedSet(tuple(instances), n)


def rand_aug(
    dataset: Sequence[tuple[CandidateList, Ranking]],
    n: int,
    rng: RngStream,
) -> AugmentedSet:
    """Plain random augmentation baseline: n independent shuffles per instance."""
    if n < 1:
        raise ValueError(f"augmentation factor must be positive, got {n}")
    instances: list[tuple[CandidateList, Ranking]] = []
    for idx, (list_, truth) in enumerate(dataset):
        gen = rng.substream(idx).generator()
        for _ in range(n):
            order = _fisher_yates_order(list_.k, gen)
            instances.append((list_.reordered(order), _pull_back_truth(truth, order)))
    return AugmentedSet(tuple(instances), n)


def place_relevant_at(
    list_: CandidateList,
    judgments: RelevanceJudgments,
    p: int,
) -> CandidateList:
    """Move the judged-relevant passage to position p, keeping all other passages in order.

    With several judged passages the highest grade wins, ties broken by input
    position.
    """
    if not 1 <= p <= list_.k:
        raise ValueError(f"target position {p} outside 1..{list_.k}")
    grades = [judgments.grade(list_.query_id, pid) for pid in list_.passage_ids]
    best = max(grades)
    if best <= 0:
        raise ValueError(f"no relevant passage in query {list_.query_id!r}")
    rel = grades.index(best)
    rest = [i for i in range(list_.k) if i != rel]
    rest.insert(p - 1, rel)
    return list_.reordered(rest)
