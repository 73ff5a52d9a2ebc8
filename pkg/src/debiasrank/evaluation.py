"""NDCG@10, controlled positional sweeps, shuffled-order evaluation, and run variance."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .core import CandidateList, Ranking, RelevanceJudgments
from .permute import RngStream, fisher_yates_shuffle, place_relevant_at
from .rerank import rerank_window
from .scorer import ScorerParams

ORDER_MODES = ("original", "shuffled")


@dataclass(frozen=True)
class SweepResult:
    """Mean NDCG@k_cut per controlled relevant-passage position, plus their spread."""

    per_position_ndcg: tuple[float, ...]
    variance: float
    num_queries: int


@dataclass(frozen=True)
class EvalReport:
    mean_ndcg_at_10: float
    per_query: Mapping[str, float]
    order_mode: str
    seed: int | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "per_query", dict(self.per_query))
        if self.order_mode not in ORDER_MODES:
            raise ValueError(f"order_mode must be one of {ORDER_MODES}")


def _gain(rel: int) -> float:
    return float(2**rel - 1)


def ndcg_at_k(
    ranking: Ranking,
    list_: CandidateList,
    judgments: RelevanceJudgments,
    k_cut: int,
) -> float:
    """Normalized DCG truncated at k_cut, exponential gains, log2(rank+1) discount.

    Queries without any relevant passage score 0 by convention.
    """
    if k_cut < 1:
        raise ValueError(f"k_cut must be >= 1, got {k_cut}")
    if ranking.k != list_.k:
        raise ValueError(f"ranking covers {ranking.k} positions but list has {list_.k}")
    rels = [judgments.grade(list_.query_id, pid) for pid in list_.passage_ids]
    by_rank = [rels[pos - 1] for pos in ranking.order()]
    depth = min(k_cut, list_.k)
    dcg = sum(_gain(by_rank[r]) / math.log2(r + 2) for r in range(depth))
    ideal = sorted(rels, reverse=True)
    idcg = sum(_gain(ideal[r]) / math.log2(r + 2) for r in range(depth))
    if idcg == 0.0:
        return 0.0
    return dcg / idcg


def positional_sweep(
    params: ScorerParams,
    dataset: Sequence[CandidateList],
    judgments: RelevanceJudgments,
    k_cut: int = 10,
) -> SweepResult:
    """Place the relevant passage at every input position and rerank.

    per_position_ndcg[p-1] is the mean NDCG@k_cut over queries with the
    relevant passage forced to position p; variance is the population variance
    of those k means. A position-blind scorer gives a flat curve.
    """
    if not dataset:
        raise ValueError("empty dataset")
    k = dataset[0].k
    means = []
    for p in range(1, k + 1):
        total = 0.0
        for list_ in dataset:
            placed = place_relevant_at(list_, judgments, p)
            ranking = rerank_window(params, placed)
            total += ndcg_at_k(ranking, placed, judgments, k_cut)
        means.append(total / len(dataset))
    arr = np.asarray(means)
    return SweepResult(
        per_position_ndcg=tuple(float(m) for m in means),
        variance=float(arr.var()),
        num_queries=len(dataset),
    )


def rerank_runs(
    params: ScorerParams,
    dataset: Sequence[CandidateList],
    order_mode: str = "original",
    rng: RngStream | None = None,
    p_fail: float = 0.0,
) -> list[tuple[CandidateList, Ranking]]:
    """Rerank every query, optionally shuffling the input order per query first.

    Returns the list actually fed to the reranker alongside its ranking, so
    callers can rebase the result onto the original frame or write run files.
    """
    if order_mode not in ORDER_MODES:
        raise ValueError(f"order_mode must be one of {ORDER_MODES}")
    if order_mode == "shuffled" and rng is None:
        raise ValueError("shuffled order requires an rng stream")
    if p_fail > 0.0 and rng is None:
        raise ValueError("p_fail > 0 requires an rng stream")
    out = []
    for i, list_ in enumerate(dataset):
        used = list_
        if order_mode == "shuffled":
            used = fisher_yates_shuffle(list_, rng.substream(2 * i))
        fail_rng = rng.substream(2 * i + 1) if rng is not None else None
        out.append((used, rerank_window(params, used, p_fail=p_fail, rng=fail_rng)))
    return out


def evaluate(
    params: ScorerParams,
    dataset: Sequence[CandidateList],
    judgments: RelevanceJudgments,
    order_mode: str = "original",
    rng: RngStream | None = None,
    k_cut: int = 10,
    p_fail: float = 0.0,
) -> EvalReport:
    """Mean NDCG@k_cut over the dataset in original or per-query-shuffled order."""
    runs = rerank_runs(params, dataset, order_mode=order_mode, rng=rng, p_fail=p_fail)
    per_query = {
        used.query_id: ndcg_at_k(ranking, used, judgments, k_cut) for used, ranking in runs
    }
    mean = sum(per_query.values()) / len(per_query)
    return EvalReport(
        mean_ndcg_at_10=mean,
        per_query=per_query,
        order_mode=order_mode,
        seed=rng.seed if order_mode == "shuffled" else None,
    )


def run_variance(reports: Sequence[EvalReport]) -> float:
    """Population variance of the reports' mean NDCG, in percentage points."""
    if len(reports) < 2:
        raise ValueError("run variance needs at least two reports")
    vals = np.asarray([100.0 * r.mean_ndcg_at_10 for r in reports])
    return float(vals.var())
