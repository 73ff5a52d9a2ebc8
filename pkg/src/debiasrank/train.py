"""Mini-batch gradient descent on the linear scorer, with gradient verification."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .core import CandidateList, Ranking
from .loss import LossConfig, joint_loss
from .permute import AugmentedSet, RngStream
from .propensity import PropensityMatrix
from .scorer import ScorerParams, score, score_gradient


@dataclass(frozen=True)
class TrainConfig:
    """Optimizer settings. Defaults mirror the usual large-model recipe; the
    desk-scale scorer wants a far larger learning rate, set per experiment."""

    learning_rate: float = 5e-6
    epochs: int = 3
    batch_size: int = 8
    loss: LossConfig = field(default_factory=LossConfig)
    seed: int = 0
    shuffle_each_epoch: bool = True
    momentum: float = 0.0

    def __post_init__(self) -> None:
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must be in [0, 1)")


@dataclass(frozen=True)
class TrainReport:
    loss_curve: tuple[float, ...]
    final_params: ScorerParams
    wall_time: float
    seed: int


def _instances(dataset) -> tuple[tuple[CandidateList, Ranking], ...]:
    if isinstance(dataset, AugmentedSet):
        return dataset.instances
    return tuple(dataset)


def _instance_grad(
    params: ScorerParams,
    list_: CandidateList,
    truth: Ranking,
    cfg: LossConfig,
    omega: PropensityMatrix | None,
) -> tuple[float, np.ndarray, np.ndarray]:
    scores = score(params, list_)
    lv = joint_loss(cfg, scores, truth, omega)
    grad_content, grad_position = score_gradient(params, list_).backprop(lv.grad_scores)
    return lv.value, grad_content, grad_position


def train(
    dataset,
    init: ScorerParams,
    cfg: TrainConfig,
    omega: PropensityMatrix | None = None,
) -> TrainReport:
    """Fine-tune content and position weights under the configured loss.

    Plain mini-batch SGD with optional momentum; batch gradients are averaged
    over instances. bias_scale stays fixed. Fully deterministic for a given
    seed, including the per-epoch shuffling order.
    """
    if cfg.loss.needs_propensities and omega is None:
        raise ValueError(f"variant {cfg.loss.variant!r} requires a propensity matrix")
    instances = _instances(dataset)
    if not instances:
        raise ValueError("empty training set")
    start = time.perf_counter()
    content = init.content_weights.copy()
    position = init.position_weights.copy()
    v_content = np.zeros_like(content)
    v_position = np.zeros_like(position)
    n = len(instances)
    curve = []
    for epoch in range(cfg.epochs):
        order = np.arange(n)
        if cfg.shuffle_each_epoch:
            order = RngStream(cfg.seed, epoch).generator().permutation(n)
        params = ScorerParams(content, position, init.bias_scale)
        epoch_loss = 0.0
        for batch_no, start_idx in enumerate(range(0, n, cfg.batch_size)):
            batch = order[start_idx : start_idx + cfg.batch_size]
            g_content = np.zeros_like(content)
            g_position = np.zeros_like(position)
            batch_loss = 0.0
            try:
                for idx in batch:
                    list_, truth = instances[idx]
                    value, gc, gp = _instance_grad(params, list_, truth, cfg.loss, omega)
                    batch_loss += value
                    g_content += gc
                    g_position += gp
                if not np.isfinite(batch_loss):
                    raise ValueError("non-finite loss")
                epoch_loss += batch_loss
                scale = 1.0 / len(batch)
                if cfg.momentum > 0:
                    v_content = cfg.momentum * v_content + g_content * scale
                    v_position = cfg.momentum * v_position + g_position * scale
                    content = content - cfg.learning_rate * v_content
                    position = position - cfg.learning_rate * v_position
                else:
                    content = content - cfg.learning_rate * g_content * scale
                    position = position - cfg.learning_rate * g_position * scale
                params = ScorerParams(content, position, init.bias_scale)
            except ValueError as exc:
                raise ValueError(
                    f"training diverged at epoch {epoch + 1}, batch {batch_no + 1}: {exc}"
                ) from None
        curve.append(epoch_loss / n)
    final = ScorerParams(content, position, init.bias_scale)
    return TrainReport(
        loss_curve=tuple(curve),
        final_params=final,
        wall_time=time.perf_counter() - start,
        seed=cfg.seed,
    )


@dataclass(frozen=True)
class GradCheckReport:
    """Analytic-vs-numeric gradient comparison for one training instance."""

    content_max_rel_error: float
    position_max_rel_error: float
    h: float
    tol: float

    @property
    def max_rel_error(self) -> float:
        return max(self.content_max_rel_error, self.position_max_rel_error)

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tol


def _rel_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    # Relative where either side has magnitude, absolute near a stationary point.
    denom = np.maximum(np.abs(analytic), np.abs(numeric))
    err = np.abs(analytic - numeric)
    with np.errstate(invalid="ignore", divide="ignore"):
        rel = np.where(denom > 1e-12, err / denom, err)
    return float(rel.max()) if rel.size else 0.0


def grad_check(
    loss_variant: LossConfig,
    params: ScorerParams,
    instance: tuple[CandidateList, Ranking],
    h: float = 1e-5,
    tol: float = 1e-6,
    omega: PropensityMatrix | None = None,
) -> GradCheckReport:
    """Compare the chain-rule parameter gradient against central finite differences."""
    if h <= 0:
        raise ValueError("h must be > 0")
    list_, truth = instance

    def value_at(p: ScorerParams) -> float:
        return joint_loss(loss_variant, score(p, list_), truth, omega).value

    _, g_content, g_position = _instance_grad(params, list_, truth, loss_variant, omega)

    def central(base: np.ndarray, rebuild) -> np.ndarray:
        num = np.zeros_like(base)
        for j in range(base.shape[0]):
            bumped = base.copy()
            bumped[j] = base[j] + h
            plus = value_at(rebuild(bumped))
            bumped[j] = base[j] - h
            minus = value_at(rebuild(bumped))
            num[j] = (plus - minus) / (2.0 * h)
        return num

    num_content = central(
        params.content_weights,
        lambda w: ScorerParams(w, params.position_weights, params.bias_scale),
    )
    num_position = central(
        params.position_weights,
        lambda w: ScorerParams(params.content_weights, w, params.bias_scale),
    )
    return GradCheckReport(
        content_max_rel_error=_rel_error(g_content, num_content),
        position_max_rel_error=_rel_error(g_position, num_position),
        h=h,
        tol=tol,
    )
