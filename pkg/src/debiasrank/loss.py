"""Training objectives with analytic score gradients.

Five variants are supported:

* ``lm``           sequential-softmax (Plackett-Luce) likelihood of the true
                   identifier sequence;
* ``rank``         pairwise logistic loss weighted by 1/(i+j) over true ranks,
                   so misranking highly ranked passages costs more;
* ``rank_ips``     the same pairwise loss with each term divided by the product
                   of the two passages' transition propensities, up-weighting
                   underrepresented input-position/output-rank transitions;
* ``first``        lambda * rank + lm;
* ``debias_first`` lambda * rank_ips + lm.

All arithmetic is double precision; log(1+exp(z)) uses the stable branch
max(z, 0) + log1p(exp(-|z|)).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import expit

from .core import Ranking
from .propensity import PropensityMatrix

VARIANTS = ("lm", "rank", "rank_ips", "first", "debias_first")

_VARIANT_ALIASES = {
    "lm": "lm",
    "rank": "rank",
    "rank-ips": "rank_ips",
    "rank_ips": "rank_ips",
    "rankips": "rank_ips",
    "first": "first",
    "debias-first": "debias_first",
    "debias_first": "debias_first",
    "debiasfirst": "debias_first",
}


def canonical_variant(name: str) -> str:
    """Map a user-facing variant spelling onto its canonical token."""
    try:
        return _VARIANT_ALIASES[name.strip().lower()]
    except KeyError:
        raise ValueError(f"unknown loss variant {name!r}; expected one of {VARIANTS}") from None


@dataclass(frozen=True)
class LossConfig:
    """Loss variant plus the weight balancing the ranking term against the LM term."""

    lambda_: float = 0.1
    variant: str = "debias_first"

    def __post_init__(self) -> None:
        if not math.isfinite(self.lambda_) or self.lambda_ < 0:
            raise ValueError(f"lambda must be finite and >= 0, got {self.lambda_}")
        object.__setattr__(self, "variant", canonical_variant(self.variant))

    @property
    def needs_propensities(self) -> bool:
        return self.variant in ("rank_ips", "debias_first")


@dataclass(frozen=True)
class LossValue:
    """A loss evaluation: scalar value and its gradient with respect to the scores."""

    value: float
    grad_scores: np.ndarray

    def __post_init__(self) -> None:
        grad = np.array(self.grad_scores, dtype=np.float64)
        if not (math.isfinite(self.value) and np.isfinite(grad).all()):
            raise ValueError("loss produced non-finite values")
        grad.flags.writeable = False
        object.__setattr__(self, "grad_scores", grad)

    @property
    def k(self) -> int:
        return self.grad_scores.shape[0]


def _softplus(z: np.ndarray) -> np.ndarray:
    return np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z)))


def _check_scores(scores: np.ndarray, truth: Ranking) -> np.ndarray:
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 1:
        raise ValueError("scores must be a vector")
    if not np.isfinite(scores).all():
        raise ValueError("non-finite scores")
    if not truth.is_complete:
        raise ValueError("incomplete permutation")
    if scores.shape[0] != truth.k:
        raise ValueError(f"{scores.shape[0]} scores for {truth.k} ranked positions")
    return scores


def lm_loss(scores: np.ndarray, truth: Ranking) -> LossValue:
    """Sequential-softmax negative log-likelihood of emitting the true order.

    At step t the true t-th passage competes against every passage not yet
    emitted; the loss sums the negative log softmax probabilities over steps.
    Adding a constant to all scores changes nothing.
    """
    scores = _check_scores(scores, truth)
    order = np.asarray(truth.order(), dtype=np.int64) - 1
    ss = scores[order]
    # Suffix log-sum-exp: lse[t] = log sum_{u >= t} exp(ss[u]), accumulated stably.
    lse = np.logaddexp.accumulate(ss[::-1])[::-1]
    value = float(np.sum(lse - ss))
    k = ss.shape[0]
    # Step t only sees the suffix from t on; mask before exponentiating.
    diff = np.where(
        np.arange(k)[None, :] >= np.arange(k)[:, None],
        ss[None, :] - lse[:, None],
        -np.inf,
    )
    grad_sorted = np.exp(diff).sum(axis=0) - 1.0
    grad = np.zeros(k)
    grad[order] = grad_sorted
    return LossValue(value=value, grad_scores=grad)


def _pairwise(
    scores: np.ndarray,
    truth: Ranking,
    inverse_weights: np.ndarray | None,
) -> LossValue:
    ranks = np.asarray(truth.ranks, dtype=np.float64)
    better = ranks[:, None] < ranks[None, :]
    weights = np.where(better, 1.0 / (ranks[:, None] + ranks[None, :]), 0.0)
    if inverse_weights is not None:
        weights = weights * (inverse_weights[:, None] * inverse_weights[None, :])
    margins = scores[None, :] - scores[:, None]
    value = float(np.sum(weights * np.where(better, _softplus(margins), 0.0)))
    slopes = weights * np.where(better, expit(margins), 0.0)
    grad = slopes.sum(axis=0) - slopes.sum(axis=1)
    return LossValue(value=value, grad_scores=grad)


def rank_loss(scores: np.ndarray, truth: Ranking) -> LossValue:
    """Pairwise logistic loss over all true-order pairs, weighted 1/(i+j) by true ranks."""
    scores = _check_scores(scores, truth)
    return _pairwise(scores, truth, None)


def rank_ips_loss(
    scores: np.ndarray,
    truth: Ranking,
    omega: PropensityMatrix,
    input_positions: Sequence[int] | None = None,
) -> LossValue:
    """Propensity-calibrated pairwise loss.

    Every pair term of :func:`rank_loss` is further divided by the product of
    the two passages' propensities at their (input position, true rank)
    transition, so overrepresented transitions contribute less and
    underrepresented ones more. Requires a clamped propensity matrix.
    """
    scores = _check_scores(scores, truth)
    k = truth.k
    if input_positions is None:
        positions = np.arange(k)
    else:
        positions = np.asarray(input_positions, dtype=np.int64) - 1
        if positions.shape[0] != k or positions.min() < 0 or positions.max() >= omega.k:
            raise ValueError("input positions must be 1-based and within the propensity matrix")
    ranks = np.asarray(truth.ranks, dtype=np.int64) - 1
    if omega.k < k:
        raise ValueError(f"propensity matrix of size {omega.k} cannot cover {k} ranks")
    w = omega.omega[positions, ranks]
    if (w <= 0).any():
        raise ValueError("unclamped propensity")
    return _pairwise(scores, truth, 1.0 / w)


def joint_loss(
    cfg: LossConfig,
    scores: np.ndarray,
    truth: Ranking,
    omega: PropensityMatrix | None = None,
    input_positions: Sequence[int] | None = None,
) -> LossValue:
    """Dispatch a loss variant, combining ranking and LM terms where configured."""
    if cfg.needs_propensities and omega is None:
        raise ValueError(f"variant {cfg.variant!r} requires a propensity matrix")
    if cfg.variant == "lm":
        return lm_loss(scores, truth)
    if cfg.variant == "rank":
        return rank_loss(scores, truth)
    if cfg.variant == "rank_ips":
        return rank_ips_loss(scores, truth, omega, input_positions)
    if cfg.variant == "first":
        pair = rank_loss(scores, truth)
    else:  # debias_first
        pair = rank_ips_loss(scores, truth, omega, input_positions)
    lm = lm_loss(scores, truth)
    return LossValue(
        value=cfg.lambda_ * pair.value + lm.value,
        grad_scores=cfg.lambda_ * pair.grad_scores + lm.grad_scores,
    )
