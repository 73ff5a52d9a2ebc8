"""Shared fixtures, including the reference synthetic benchmark.

The benchmark is one fixed, fully deterministic experiment: a skewed training
corpus, a biased baseline scorer, propensities estimated from that scorer's
behavior on randomized inputs, and the debiased/ablation scorers trained on
top. Building it takes under a minute; it is session-scoped so the acceptance
tests share one build.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
import pytest

import debiasrank as dr
from debiasrank.loss import LossConfig
from debiasrank.permute import RngStream, fisher_yates_shuffle, pos_aug, rand_aug
from debiasrank.propensity import PropensityMatrix, count_transitions, estimate_propensities
from debiasrank.rerank import rerank_window
from debiasrank.train import TrainConfig, train

# Reference benchmark recipe. Changing anything here invalidates the pinned
# values in test_acceptance.py.
K = 20
D = 8
SKEW = 0.6
NOISE_SIGMA = 0.4
BIAS_SCALE = 0.25
POSITION_INIT_SPAN = 1.0
TRAIN_QUERIES = 1000
EVAL_QUERIES = 200
TRAIN_SEED = 7
DATA_SEED_TRAIN = 101
DATA_SEED_EVAL = 202
EST_SEED = 501
EST_QUERIES = 300
EST_SHUFFLES = 10
EST_P_FAIL = 0.1
AUG_N = 20
AUG_SEED = 33
EPOCHS = 6
BATCH_SIZE = 8
LR_JOINT = 0.005
LR_RANK = 0.04
LR_RANK_IPS = 2e-7  # LR_RANK scaled by the median squared propensity
LAMBDA_FIRST = 0.1
LAMBDA_DEBIAS = 1e-8
SHUFFLED_EVAL_SEED = 404


@dataclass(frozen=True)
class Benchmark:
    train_data: tuple
    eval_lists: tuple
    judgments: dr.RelevanceJudgments
    init: dr.ScorerParams
    omega: PropensityMatrix
    first: dr.ScorerParams
    debias: dr.ScorerParams
    randaug_first: dr.ScorerParams
    posaug_first: dr.ScorerParams
    rank_raw: dr.ScorerParams
    rank_ips_raw: dr.ScorerParams
    build_seconds: float


def _train_cfg(variant: str, lr: float, lam: float) -> TrainConfig:
    return TrainConfig(
        learning_rate=lr,
        epochs=EPOCHS,
        batch_size=BATCH_SIZE,
        loss=LossConfig(lambda_=lam, variant=variant),
        seed=TRAIN_SEED,
        shuffle_each_epoch=True,
    )


def build_benchmark() -> Benchmark:
    start = time.perf_counter()
    train_gen = dr.synth_generate(
        dr.SynthConfig(TRAIN_QUERIES, K, D, SKEW, (0, 1), NOISE_SIGMA, DATA_SEED_TRAIN)
    )
    eval_gen = dr.synth_generate(
        dr.SynthConfig(EVAL_QUERIES, K, D, SKEW, (0, 1), NOISE_SIGMA, DATA_SEED_EVAL)
    )
    train_data = tuple((lst, truth) for lst, truth, _ in train_gen)
    eval_lists = tuple(lst for lst, _, _ in eval_gen)
    entries: dict = {}
    for _, _, query_entries in eval_gen:
        entries.update(query_entries)
    judgments = dr.RelevanceJudgments(entries)

    init = dr.ScorerParams(
        content_weights=np.zeros(D),
        position_weights=np.linspace(POSITION_INIT_SPAN / 2, -POSITION_INIT_SPAN / 2, K),
        bias_scale=BIAS_SCALE,
    )

    first = train(train_data, init, _train_cfg("first", LR_JOINT, LAMBDA_FIRST)).final_params

    est = RngStream(EST_SEED)
    observations = []
    for qi, (lst, _) in enumerate(train_data[:EST_QUERIES]):
        q_stream = est.substream(qi)
        for s in range(EST_SHUFFLES):
            shuffled = fisher_yates_shuffle(lst, q_stream.substream(2 * s))
            ranking = rerank_window(first, shuffled, p_fail=EST_P_FAIL, rng=q_stream.substream(2 * s + 1))
            observations.append((shuffled, ranking))
    omega = estimate_propensities(count_transitions(observations))

    posaug = pos_aug(train_data, AUG_N, RngStream(AUG_SEED))
    randaug = rand_aug(train_data, AUG_N, RngStream(AUG_SEED))

    debias = train(
        posaug, init, _train_cfg("debias_first", LR_JOINT, LAMBDA_DEBIAS), omega=omega
    ).final_params
    randaug_first = train(randaug, init, _train_cfg("first", LR_JOINT, LAMBDA_FIRST)).final_params
    posaug_first = train(posaug, init, _train_cfg("first", LR_JOINT, LAMBDA_FIRST)).final_params
    rank_raw = train(train_data, init, _train_cfg("rank", LR_RANK, LAMBDA_FIRST)).final_params
    rank_ips_raw = train(
        train_data, init, _train_cfg("rank_ips", LR_RANK_IPS, LAMBDA_FIRST), omega=omega
    ).final_params

    return Benchmark(
        train_data=train_data,
        eval_lists=eval_lists,
        judgments=judgments,
        init=init,
        omega=omega,
        first=first,
        debias=debias,
        randaug_first=randaug_first,
        posaug_first=posaug_first,
        rank_raw=rank_raw,
        rank_ips_raw=rank_ips_raw,
        build_seconds=time.perf_counter() - start,
    )


@pytest.fixture(scope="session")
def benchmark() -> Benchmark:
    return build_benchmark()
