"""Shared data model: candidate lists, permutations, judgments, and run records.

All ranks and input positions are 1-based at every interface. Every type in
this module is an immutable value after construction and safe to share across
threads.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Mapping, Sequence

import numpy as np


def _frozen_array(values, dtype=np.float64) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class PassageRef:
    """One candidate passage: an opaque id, a feature vector, and an optional graded label."""

    passage_id: str
    features: np.ndarray
    relevance_label: int | None = None

    def __post_init__(self) -> None:
        if not self.passage_id:
            raise ValueError("passage_id must be nonempty")
        object.__setattr__(self, "features", _frozen_array(self.features))
        if self.features.ndim != 1:
            raise ValueError(f"features must be a vector, got shape {self.features.shape}")
        if self.relevance_label is not None and self.relevance_label < 0:
            raise ValueError(f"relevance_label must be >= 0, got {self.relevance_label}")


@dataclass(frozen=True)
class CandidateList:
    """A query with an ordered window of candidate passages.

    The input position of ``passages[i]`` is ``i + 1``. Passage ids are unique
    within the list and all feature vectors share one dimension.
    """

    query_id: str
    passages: tuple[PassageRef, ...]
    query_features: np.ndarray | None = None
    provenance: str = "unknown"

    def __post_init__(self) -> None:
        object.__setattr__(self, "passages", tuple(self.passages))
        if not self.query_id:
            raise ValueError("query_id must be nonempty")
        if len(self.passages) < 1:
            raise ValueError("candidate list must hold at least one passage")
        ids = [p.passage_id for p in self.passages]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate passage ids in query {self.query_id!r}")
        dims = {p.features.shape[0] for p in self.passages}
        if len(dims) != 1:
            raise ValueError(f"inconsistent feature dimensions in query {self.query_id!r}: {sorted(dims)}")
        if self.query_features is not None:
            object.__setattr__(self, "query_features", _frozen_array(self.query_features))

    @property
    def k(self) -> int:
        return len(self.passages)

    @property
    def feature_dim(self) -> int:
        return self.passages[0].features.shape[0]

    @property
    def passage_ids(self) -> tuple[str, ...]:
        return tuple(p.passage_id for p in self.passages)

    @cached_property
    def feature_matrix(self) -> np.ndarray:
        """(k, d) matrix with row i holding the features of input position i+1."""
        mat = np.stack([p.features for p in self.passages])
        mat.flags.writeable = False
        return mat

    def reordered(self, order: Sequence[int]) -> "CandidateList":
        """New list whose position j+1 holds the passage at 0-based source index order[j]."""
        if sorted(order) != list(range(self.k)):
            raise ValueError("order must be a permutation of 0..k-1")
        return CandidateList(
            query_id=self.query_id,
            passages=tuple(self.passages[i] for i in order),
            query_features=self.query_features,
            provenance=self.provenance,
        )

    def subset(self, indices: Sequence[int]) -> "CandidateList":
        """New list over a slice of passages, preserving the given order."""
        return CandidateList(
            query_id=self.query_id,
            passages=tuple(self.passages[i] for i in indices),
            query_features=self.query_features,
            provenance=self.provenance,
        )


@dataclass(frozen=True)
class Ranking:
    """A permutation of output ranks over input positions.

    ``ranks[i]`` is the output rank of the passage at input position i+1, or
    None while unassigned. A complete ranking is a bijection onto 1..k.
    """

    ranks: tuple[int | None, ...]

    def __post_init__(self) -> None:
        k = len(self.ranks)
        if k < 1:
            raise ValueError("ranking must cover at least one position")
        normalized: list[int | None] = []
        for r in self.ranks:
            if r is None:
                normalized.append(None)
                continue
            if isinstance(r, bool) or not isinstance(r, (int, np.integer)):
                raise ValueError(f"rank {r!r} is not an integer")
            if not 1 <= r <= k:
                raise ValueError(f"rank {r!r} outside 1..{k}")
            normalized.append(int(r))
        assigned = [r for r in normalized if r is not None]
        if len(set(assigned)) != len(assigned):
            raise ValueError("assigned ranks must be distinct")
        object.__setattr__(self, "ranks", tuple(normalized))

    @property
    def k(self) -> int:
        return len(self.ranks)

    @property
    def is_complete(self) -> bool:
        return all(r is not None for r in self.ranks)

    @property
    def num_assigned(self) -> int:
        return sum(1 for r in self.ranks if r is not None)

    @classmethod
    def identity(cls, k: int) -> "Ranking":
        return cls(tuple(range(1, k + 1)))

    @classmethod
    def from_order(cls, order: Sequence[int]) -> "Ranking":
        """Build from the rank-1-first sequence of 1-based input positions."""
        if sorted(order) != list(range(1, len(order) + 1)):
            raise ValueError("order must list every input position exactly once")
        ranks: list[int | None] = [None] * len(order)
        for rank, pos in enumerate(order, start=1):
            ranks[pos - 1] = rank
        return cls(tuple(ranks))

    def order(self) -> tuple[int, ...]:
        """1-based input positions listed best rank first. Requires completeness."""
        if not self.is_complete:
            raise ValueError("incomplete permutation")
        out = [0] * self.k
        for pos0, rank in enumerate(self.ranks):
            out[rank - 1] = pos0 + 1
        return tuple(out)


@dataclass(frozen=True)
class RelevanceJudgments:
    """Graded relevance judgments keyed by (query_id, passage_id)."""

    entries: Mapping[tuple[str, str], int]

    def __post_init__(self) -> None:
        entries = dict(self.entries)
        for (qid, pid), grade in entries.items():
            if grade < 0:
                raise ValueError(f"negative grade for ({qid!r}, {pid!r}): {grade}")
        object.__setattr__(self, "entries", entries)

    def grade(self, query_id: str, passage_id: str) -> int:
        """Judged grade, defaulting to 0 for unjudged pairs."""
        return self.entries.get((query_id, passage_id), 0)


@dataclass(frozen=True)
class RunRecord:
    """One line of a retrieval run: a passage ranked for a query."""

    query_id: str
    passage_id: str
    rank: int
    score: float
    tag: str

    def __post_init__(self) -> None:
        if self.rank < 1:
            raise ValueError(f"rank must be >= 1, got {self.rank}")


def invert_ranking(r: Ranking) -> Ranking:
    """Swap the input-position -> rank view for the rank -> input-position view.

    Applying it twice returns the original ranking.
    """
    if not r.is_complete:
        raise ValueError("incomplete permutation")
    inv: list[int | None] = [None] * r.k
    for pos0, rank in enumerate(r.ranks):
        inv[rank - 1] = pos0 + 1
    return Ranking(tuple(inv))


def kendall_tau(a: Ranking, b: Ranking) -> int:
    """Number of passage pairs ordered differently by the two rankings."""
    if not (a.is_complete and b.is_complete):
        raise ValueError("incomplete permutation")
    if a.k != b.k:
        raise ValueError(f"mismatched lengths: {a.k} vs {b.k}")
    ra = np.asarray(a.ranks, dtype=np.int64)
    rb = np.asarray(b.ranks, dtype=np.int64)
    da = np.sign(ra[:, None] - ra[None, :])
    db = np.sign(rb[:, None] - rb[None, :])
    return int(np.sum(da * db < 0) // 2)


def complete_ranking(partial: Ranking, original_order: CandidateList) -> Ranking:
    """Fill unassigned positions with ranks m+1..k in ascending input-position order."""
    if partial.k != original_order.k:
        raise ValueError(f"ranking covers {partial.k} positions but list has {original_order.k}")
    m = partial.num_assigned
    assigned = {r for r in partial.ranks if r is not None}
    if assigned != set(range(1, m + 1)):
        raise ValueError("assigned ranks must form the contiguous prefix 1..m")
    ranks = list(partial.ranks)
    next_rank = m + 1
    for i in range(partial.k):
        if ranks[i] is None:
            ranks[i] = next_rank
            next_rank += 1
    return Ranking(tuple(ranks))


def ranking_from_grades(grades: Sequence[int]) -> Ranking:
    """True permutation implied by graded labels: grade descending, then input position."""
    order0 = sorted(range(len(grades)), key=lambda i: (-grades[i], i))
    return Ranking.from_order([i + 1 for i in order0])


def ranking_from_id_order(list_: CandidateList, ids_in_rank_order: Sequence[str]) -> Ranking:
    """Ranking over ``list_`` matching an externally given best-first id sequence."""
    pos = {pid: i for i, pid in enumerate(list_.passage_ids)}
    if sorted(ids_in_rank_order) != sorted(pos):
        raise ValueError(f"id set mismatch for query {list_.query_id!r}")
    ranks: list[int | None] = [None] * list_.k
    for rank, pid in enumerate(ids_in_rank_order, start=1):
        ranks[pos[pid]] = rank
    return Ranking(tuple(ranks))


def rebase_ranking(ranking: Ranking, from_list: CandidateList, to_list: CandidateList) -> Ranking:
    """Re-express a ranking of ``from_list`` over ``to_list`` (same passages, other order)."""
    if not ranking.is_complete:
        raise ValueError("incomplete permutation")
    rank_by_id = {pid: ranking.ranks[i] for i, pid in enumerate(from_list.passage_ids)}
    if sorted(rank_by_id) != sorted(to_list.passage_ids):
        raise ValueError("candidate lists hold different passages")
    return Ranking(tuple(rank_by_id[pid] for pid in to_list.passage_ids))
