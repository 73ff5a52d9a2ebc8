"""Positional-bias mitigation for listwise reranking.

Inverse-propensity-scored ranking losses, position-aware data augmentation,
a linear stand-in scorer with a controllable positional-bias pathway, and the
measurement harness around them: propensity estimation, positional sweeps,
NDCG@10 evaluation, reciprocal rank fusion, and Kendall-tau rank aggregation.
"""

from .core import (
    CandidateList,
    PassageRef,
    Ranking,
    RelevanceJudgments,
    RunRecord,
    complete_ranking,
    invert_ranking,
    kendall_tau,
    ranking_from_grades,
    rebase_ranking,
)
from .evaluation import (
    EvalReport,
    SweepResult,
    evaluate,
    ndcg_at_k,
    positional_sweep,
    run_variance,
)
from .loss import LossConfig, LossValue, joint_loss, lm_loss, rank_ips_loss, rank_loss
from .permute import (
    AugmentedSet,
    RngStream,
    fisher_yates_shuffle,
    group_rotate,
    place_relevant_at,
    pos_aug,
    rand_aug,
)
from .propensity import (
    PropensityMatrix,
    TransitionCounts,
    count_transitions,
    estimate_propensities,
    propensity_heatmap,
)
from .rerank import (
    FusionInput,
    WindowConfig,
    permsc_aggregate,
    rerank_window,
    rrf_fuse,
    sliding_window_rerank,
)
from .scorer import ScorerParams, SynthConfig, score, score_gradient, synth_generate
from .train import TrainConfig, TrainReport, grad_check, train

__version__ = "0.1.0"

__all__ = [
    "AugmentedSet",
    "CandidateList",
    "EvalReport",
    "FusionInput",
    "LossConfig",
    "LossValue",
    "PassageRef",
    "PropensityMatrix",
    "Ranking",
    "RelevanceJudgments",
    "RngStream",
    "RunRecord",
    "ScorerParams",
    "SweepResult",
    "SynthConfig",
    "TrainConfig",
    "TrainReport",
    "TransitionCounts",
    "WindowConfig",
    "complete_ranking",
    "count_transitions",
    "estimate_propensities",
    "evaluate",
    "fisher_yates_shuffle",
    "grad_check",
    "group_rotate",
    "invert_ranking",
    "joint_loss",
    "kendall_tau",
    "lm_loss",
    "ndcg_at_k",
    "permsc_aggregate",
    "place_relevant_at",
    "pos_aug",
    "positional_sweep",
    "propensity_heatmap",
    "rand_aug",
    "rank_ips_loss",
    "rank_loss",
    "ranking_from_grades",
    "rebase_ranking",
    "rerank_window",
    "rrf_fuse",
    "run_variance",
    "score",
    "score_gradient",
    "sliding_window_rerank",
    "synth_generate",
    "train",
]
