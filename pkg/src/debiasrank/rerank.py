"""Inference-side machinery: windowed reranking, sliding windows, fusion, and rank aggregation."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .core import CandidateList, Ranking, complete_ranking
from .permute import RngStream
from .scorer import ScorerParams, score


@dataclass(frozen=True)
class WindowConfig:
    window_size: int = 20
    step: int = 10

    def __post_init__(self) -> None:
        if not 1 <= self.step <= self.window_size:
            raise ValueError(f"need 1 <= step <= window_size, got step={self.step}, window={self.window_size}")


@dataclass(frozen=True)
class FusionInput:
    """Complete rankings over one shared candidate list, plus the reciprocal-rank constant."""

    rankings: tuple[Ranking, ...]
    rrf_c: float = 60.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "rankings", tuple(self.rankings))
        if not self.rankings:
            raise ValueError("at least one ranking is required")
        k = self.rankings[0].k
        for r in self.rankings:
            if not r.is_complete:
                raise ValueError("incomplete permutation")
            if r.k != k:
                raise ValueError(f"rankings cover different candidate sets: {r.k} vs {k}")
        if self.rrf_c <= 0:
            raise ValueError("rrf_c must be > 0")

    @property
    def k(self) -> int:
        return self.rankings[0].k


def _sort_by_score(scores: np.ndarray) -> np.ndarray:
    # Score descending, ties broken by ascending input position.
    return np.lexsort((np.arange(scores.shape[0]), -scores))


def rerank_window(
    params: ScorerParams,
    list_: CandidateList,
    p_fail: float = 0.0,
    rng: RngStream | None = None,
) -> Ranking:
    """Score and sort one window, with an optional generation-failure knob.

    Each passage independently drops out of the prediction with probability
    p_fail; survivors are sorted by score descending (ties by input position)
    and the dropped passages are appended in their original input order.
    """
    if not 0.0 <= p_fail < 1.0:
        raise ValueError(f"p_fail must be in [0, 1), got {p_fail}")
    scores = score(params, list_)
    k = list_.k
    if p_fail > 0.0:
        if rng is None:
            raise ValueError("p_fail > 0 requires an rng stream")
        failed = rng.generator().random(k) < p_fail
    else:
        failed = np.zeros(k, dtype=bool)
    ranks: list[int | None] = [None] * k
    next_rank = 1
    for idx in _sort_by_score(scores):
        if not failed[idx]:
            ranks[idx] = next_rank
            next_rank += 1
    return complete_ranking(Ranking(tuple(ranks)), list_)


def sliding_window_rerank(
    params: ScorerParams,
    full_list: CandidateList,
    cfg: WindowConfig,
) -> Ranking:
    """Rerank a long candidate list with overlapping windows, bottom of the list first.

    Each window is reranked in place with no failures; the window start then
    moves up by the step (clamped at the top), so strong late passages can
    bubble toward the front across passes.
    """
    big_k = full_list.k
    if big_k < cfg.window_size:
        raise ValueError(f"list of {big_k} passages is shorter than window {cfg.window_size}")
    current = list(range(big_k))
    starts = []
    s = big_k - cfg.window_size
    while True:
        starts.append(s)
        if s == 0:
            break
        s = max(0, s - cfg.step)
    for s in starts:
        window = current[s : s + cfg.window_size]
        sub = full_list.subset(window)
        local = rerank_window(params, sub, p_fail=0.0)
        current[s : s + cfg.window_size] = [window[pos - 1] for pos in local.order()]
    ranks = [0] * big_k
    for final_pos0, orig_idx in enumerate(current):
        ranks[orig_idx] = final_pos0 + 1
    return Ranking(tuple(ranks))


def rrf_fuse(inp: FusionInput) -> Ranking:
    """Reciprocal rank fusion: sum 1/(c + rank) per passage across rankings.

    Ties are broken by the passage's position in the first ranking.
    """
    k = inp.k
    totals = np.zeros(k)
    for r in inp.rankings:
        totals += 1.0 / (inp.rrf_c + np.asarray(r.ranks, dtype=np.float64))
    first = np.asarray(inp.rankings[0].ranks, dtype=np.int64)
    order = np.lexsort((first, -totals))
    ranks = [0] * k
    for rank0, idx in enumerate(order):
        ranks[idx] = rank0 + 1
    return Ranking(tuple(ranks))


def _preference_counts(rankings: tuple[Ranking, ...]) -> np.ndarray:
    """C[u, v] = number of rankings placing passage u before passage v."""
    k = rankings[0].k
    counts = np.zeros((k, k), dtype=np.int64)
    for r in rankings:
        ranks = np.asarray(r.ranks, dtype=np.int64)
        counts += ranks[:, None] < ranks[None, :]
    return counts


def total_kendall_distance(candidate: Ranking, rankings: tuple[Ranking, ...]) -> int:
    """Sum of Kendall tau distances from a candidate ranking to a set of rankings."""
    counts = _preference_counts(rankings)
    ranks = np.asarray(candidate.ranks, dtype=np.int64)
    before = ranks[:, None] < ranks[None, :]
    return int(counts.T[before].sum())


def _order_cost(order: tuple[int, ...], counts: np.ndarray) -> int:
    cost = 0
    for a, u in enumerate(order):
        for v in order[a + 1 :]:
            cost += counts[v, u]
    return int(cost)


def _kemeny_exact(counts: np.ndarray) -> list[int]:
    # Held-Karp over subsets: placing u before the remaining set R costs
    # sum_{v in R} counts[v, u] disagreements. Exact, and far cheaper than
    # scanning all k! orders.
    k = counts.shape[0]
    full = (1 << k) - 1
    best_cost: dict[int, int] = {0: 0}
    best_order: dict[int, list[int]] = {0: []}
    masks_by_size: list[list[int]] = [[] for _ in range(k + 1)]
    for mask in range(1 << k):
        masks_by_size[bin(mask).count("1")].append(mask)
    for size in range(k):
        for mask in masks_by_size[size]:
            base = best_cost[mask]
            rest = [v for v in range(k) if not mask & (1 << v)]
            for u in rest:
                cost = base + int(sum(counts[v, u] for v in rest if v != u))
                nxt = mask | (1 << u)
                if nxt not in best_cost or cost < best_cost[nxt]:
                    best_cost[nxt] = cost
                    best_order[nxt] = best_order[mask] + [u]
    return best_order[full]


def _local_search(order: list[int], counts: np.ndarray) -> list[int]:
    # Single-element insertion moves (adjacent transpositions are the j = i +- 1
    # special case). Adjacent swaps alone leave occasional local optima that an
    # exhaustive check rejects; insertions close that gap on small instances.
    order = list(order)
    k = len(order)
    improved = True
    while improved:
        improved = False
        for i in range(k):
            u = order[i]
            best_delta = 0
            best_j = i
            delta = 0
            for j in range(i - 1, -1, -1):  # move u before order[j]
                v = order[j]
                delta += counts[v, u] - counts[u, v]
                if delta < best_delta:
                    best_delta, best_j = delta, j
            delta = 0
            for j in range(i + 1, k):  # move u after order[j]
                v = order[j]
                delta += counts[u, v] - counts[v, u]
                if delta < best_delta:
                    best_delta, best_j = delta, j
            if best_j != i:
                order.pop(i)
                order.insert(best_j, u)
                improved = True
    return order


def permsc_aggregate(inp: FusionInput, exact_limit: int = 8) -> Ranking:
    """Central ranking minimizing the total Kendall tau distance to the inputs.

    Exact for k <= exact_limit; above that a Borda-count initialization is
    refined by adjacent-transposition local search until no swap lowers the
    total distance.
    """
    counts = _preference_counts(inp.rankings)
    k = inp.k
    if k <= exact_limit:
        order0 = _kemeny_exact(counts)
    else:
        totals = np.zeros(k, dtype=np.int64)
        for r in inp.rankings:
            totals += np.asarray(r.ranks, dtype=np.int64)
        borda = list(np.lexsort((np.arange(k), totals)))
        starts = [borda] + [list(np.asarray(r.ranks).argsort(kind="stable")) for r in inp.rankings]
        order0 = None
        best_cost = None
        for start in starts:
            candidate = _local_search(start, counts)
            cost = _order_cost(tuple(candidate), counts)
            if best_cost is None or cost < best_cost:
                best_cost = cost
                order0 = candidate
    ranks = [0] * k
    for rank0, idx in enumerate(order0):
        ranks[idx] = rank0 + 1
    return Ranking(tuple(ranks))


def kemeny_brute_force(inp: FusionInput) -> tuple[Ranking, int]:
    """Reference minimizer scanning every permutation. Only viable for small k."""
    counts = _preference_counts(inp.rankings)
    best_order = None
    best_cost = None
    for perm in itertools.permutations(range(inp.k)):
        cost = _order_cost(perm, counts)
        if best_cost is None or cost < best_cost:
            best_cost = cost
            best_order = perm
    ranks = [0] * inp.k
    for rank0, idx in enumerate(best_order):
        ranks[idx] = rank0 + 1
    return Ranking(tuple(ranks)), int(best_cost)
