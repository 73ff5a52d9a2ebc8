"""A small differentiable relevance scorer with an explicit positional-bias pathway.

The scorer is linear: a content term over passage features plus one additive
bias logit per input position, scaled by a fixed knob. It stands in for the
first-step identifier logits of a listwise reranker, keeping the positional
pathway isolated and fully inspectable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import CandidateList, PassageRef, Ranking, ranking_from_grades
from .permute import RngStream


@dataclass(frozen=True)
class ScorerParams:
    """Linear scorer parameters.

    content_weights and position_weights are trainable; bias_scale is a fixed
    experiment knob multiplying the positional logits at inference, modeling
    how severe the architectural bias is.
    """

    content_weights: np.ndarray
    position_weights: np.ndarray
    bias_scale: float = 0.0

    def __post_init__(self) -> None:
        cw = np.array(self.content_weights, dtype=np.float64)
        pw = np.array(self.position_weights, dtype=np.float64)
        if cw.ndim != 1 or pw.ndim != 1:
            raise ValueError("weights must be vectors")
        if not (np.isfinite(cw).all() and np.isfinite(pw).all() and math.isfinite(self.bias_scale)):
            raise ValueError("scorer parameters must be finite")
        cw.flags.writeable = False
        pw.flags.writeable = False
        object.__setattr__(self, "content_weights", cw)
        object.__setattr__(self, "position_weights", pw)

    @property
    def d(self) -> int:
        return self.content_weights.shape[0]

    @property
    def k(self) -> int:
        return self.position_weights.shape[0]

    def replace_weights(self, content_weights: np.ndarray, position_weights: np.ndarray) -> "ScorerParams":
        return ScorerParams(content_weights, position_weights, self.bias_scale)


@dataclass(frozen=True)
class ScoreGradient:
    """Jacobian of the score vector with respect to the scorer parameters.

    content[i] holds d score_i / d content_weights (the features of passage i);
    position[i, j] = bias_scale if the passage sits at input position j+1 else 0.
    """

    content: np.ndarray
    position: np.ndarray

    def backprop(self, grad_scores: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Chain-rule a loss gradient over scores into parameter space."""
        return grad_scores @ self.content, grad_scores @ self.position


def _check_dims(params: ScorerParams, list_: CandidateList) -> None:
    if list_.feature_dim != params.d:
        raise ValueError(f"feature dimension {list_.feature_dim} != content weights {params.d}")
    if list_.k > params.k:
        raise ValueError(f"list length {list_.k} exceeds position weights {params.k}")


def score(params: ScorerParams, list_: CandidateList) -> np.ndarray:
    """Relevance score per passage: content dot product plus scaled positional logit."""
    _check_dims(params, list_)
    feats = list_.feature_matrix
    if not np.isfinite(feats).all():
        raise ValueError(f"non-finite features in query {list_.query_id!r}")
    return feats @ params.content_weights + params.bias_scale * params.position_weights[: list_.k]


def score_gradient(params: ScorerParams, list_: CandidateList) -> ScoreGradient:
    """Exact per-passage parameter gradients of :func:`score`."""
    _check_dims(params, list_)
    feats = list_.feature_matrix
    if not np.isfinite(feats).all():
        raise ValueError(f"non-finite features in query {list_.query_id!r}")
    position = np.zeros((list_.k, params.k))
    position[np.arange(list_.k), np.arange(list_.k)] = params.bias_scale
    return ScoreGradient(content=feats, position=position)


@dataclass(frozen=True)
class SynthConfig:
    """Synthetic dataset knobs.

    relevance_position_skew controls how strongly relevant passages
    concentrate at early input positions (0 reproduces a uniform placement);
    noise_sigma scales the Gaussian feature noise around the relevance signal.
    """

    num_queries: int
    k: int = 20
    d: int = 8
    relevance_position_skew: float = 0.0
    label_grades: tuple[int, ...] = (0, 1)
    noise_sigma: float = 1.0
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "label_grades", tuple(sorted(set(self.label_grades))))
        if self.num_queries < 1:
            raise ValueError("num_queries must be >= 1")
        if self.k < 2:
            raise ValueError("k must be >= 2")
        if self.d < 1:
            raise ValueError("d must be >= 1")
        if self.relevance_position_skew < 0:
            raise ValueError("relevance_position_skew must be >= 0")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        if any(g < 0 for g in self.label_grades):
            raise ValueError("grades must be >= 0")
        nonzero = [g for g in self.label_grades if g > 0]
        if not nonzero:
            raise ValueError("at least one positive grade is required")
        if len(nonzero) >= self.k:
            raise ValueError("more relevant grades than available positions")


def _skewed_position_weights(k: int, skew: float) -> np.ndarray:
    w = np.exp(-skew * np.arange(k))
    return w / w.sum()


def synth_generate(
    cfg: SynthConfig,
) -> list[tuple[CandidateList, Ranking, dict[tuple[str, str], int]]]:
    """Generate a synthetic corpus with a controllable relevant-position imbalance.

    Per query: k passages with Gaussian features; one passage per positive
    grade is shifted along a fixed ground-truth direction by its grade. The
    top-graded passage's input position follows a geometric-like law with
    parameter relevance_position_skew. The true permutation sorts by grade,
    ties broken by input position. Byte-identical output for a fixed seed.
    """
    master = RngStream(cfg.seed)
    direction = np.ones(cfg.d) / math.sqrt(cfg.d)
    position_p = _skewed_position_weights(cfg.k, cfg.relevance_position_skew)
    grades_desc = sorted((g for g in cfg.label_grades if g > 0), reverse=True)
    out = []
    for q in range(cfg.num_queries):
        gen = master.substream(q).generator()
        qid = f"q{q:06d}"
        top_pos = int(gen.choice(cfg.k, p=position_p))
        remaining = [i for i in range(cfg.k) if i != top_pos]
        extra = [int(i) for i in gen.choice(len(remaining), size=len(grades_desc) - 1, replace=False)]
        labels = np.zeros(cfg.k, dtype=np.int64)
        labels[top_pos] = grades_desc[0]
        for grade, slot in zip(grades_desc[1:], extra):
            labels[remaining[slot]] = grade
        feats = cfg.noise_sigma * gen.standard_normal((cfg.k, cfg.d))
        feats += labels[:, None] * direction[None, :]
        passages = tuple(
            PassageRef(passage_id=f"{qid}-p{j:02d}", features=feats[j], relevance_label=int(labels[j]))
            for j in range(cfg.k)
        )
        list_ = CandidateList(query_id=qid, passages=passages, provenance="synthetic")
        truth = ranking_from_grades(labels.tolist())
        entries = {(qid, p.passage_id): int(g) for p, g in zip(passages, labels) if g > 0}
        out.append((list_, truth, entries))
    return out
