"""Command-line surface: file formats, flat key=value configuration, and pipelines.

Commands cover the full experiment loop: synthesize a biased corpus, estimate
transition propensities from a reference scorer, augment training data, train
under any loss variant, rerank, evaluate, sweep relevant-passage positions,
and aggregate runs. Every command is deterministic given its config and seeds:
re-running produces byte-identical outputs. Exit codes: 0 success, 1 usage
error, 2 data error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass

import numpy as np

from .core import (
    CandidateList,
    PassageRef,
    Ranking,
    RelevanceJudgments,
    RunRecord,
    ranking_from_grades,
)
from .evaluation import EvalReport, ndcg_at_k, positional_sweep, rerank_runs
from .loss import LossConfig
from .permute import RngStream, fisher_yates_shuffle, pos_aug, rand_aug
from .propensity import (
    PropensityMatrix,
    count_transitions,
    estimate_propensities,
    propensity_heatmap,
)
from .rerank import FusionInput, WindowConfig, permsc_aggregate, rerank_window, rrf_fuse, sliding_window_rerank
from .scorer import ScorerParams, SynthConfig, synth_generate
from .train import TrainConfig, train


class UsageError(Exception):
    """Bad invocation or configuration; exit code 1."""


class DataError(Exception):
    """Malformed or inconsistent input data; exit code 2."""


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("true", "1", "yes"):
        return True
    if t in ("false", "0", "no"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


# key -> (parser, default, help); the single source of truth for config keys,
# file parsing, and CLI flags.
CONFIG_FIELDS: dict[str, tuple] = {
    "candidates": (str, "", "input candidates JSONL"),
    "qrels": (str, "", "input qrels file"),
    "params": (str, "", "input scorer params CSV"),
    "propensity": (str, "", "input propensity CSV"),
    "runs": (str, "", "comma-separated run files (aggregate)"),
    "out": (str, "out", "output directory"),
    "seed": (int, 0, "master random seed"),
    "num_queries": (int, 100, "synthetic queries to generate"),
    "k": (int, 20, "passages per query"),
    "d": (int, 8, "feature dimension"),
    "skew": (float, 0.0, "relevant-position skew (0 = uniform)"),
    "noise_sigma": (float, 1.0, "feature noise scale"),
    "grades": (str, "0,1", "comma-separated label grades"),
    "n": (int, 10, "augmentation factor / shuffles per query"),
    "aug_mode": (str, "pos", "augmentation strategy: pos or rand"),
    "bias_scale": (float, 0.0, "positional-bias severity knob"),
    "position_init_span": (float, 0.0, "initial position-weight span, high to low"),
    "learning_rate": (float, 5e-6, "SGD learning rate"),
    "epochs": (int, 3, "training epochs"),
    "batch_size": (int, 8, "mini-batch size"),
    "lambda": (float, 0.1, "weight of the ranking loss in joint variants"),
    "variant": (str, "debias_first", "loss variant: lm, rank, rank_ips, first, debias_first"),
    "momentum": (float, 0.0, "SGD momentum"),
    "shuffle_each_epoch": (_parse_bool, True, "reshuffle training data every epoch"),
    "window_size": (int, 20, "reranking window size"),
    "step": (int, 10, "sliding-window step"),
    "p_fail": (float, 0.0, "per-passage generation-failure probability"),
    "order_mode": (str, "original", "evaluation input order: original or shuffled"),
    "k_cut": (int, 10, "NDCG truncation depth"),
    "rrf_c": (float, 60.0, "reciprocal-rank-fusion constant"),
    "exact_limit": (int, 8, "largest k solved exactly in rank aggregation"),
    "method": (str, "kemeny", "aggregation method: kemeny or rrf"),
    "tag": (str, "debiasrank", "run tag written to run files"),
}


def _attr(key: str) -> str:
    return "lambda_" if key == "lambda" else key


@dataclass(frozen=True)
class ExperimentConfig:
    candidates: str
    qrels: str
    params: str
    propensity: str
    runs: str
    out: str
    seed: int
    num_queries: int
    k: int
    d: int
    skew: float
    noise_sigma: float
    grades: str
    n: int
    aug_mode: str
    bias_scale: float
    position_init_span: float
    learning_rate: float
    epochs: int
    batch_size: int
    lambda_: float
    variant: str
    momentum: float
    shuffle_each_epoch: bool
    window_size: int
    step: int
    p_fail: float
    order_mode: str
    k_cut: int
    rrf_c: float
    exact_limit: int
    method: str
    tag: str

    def synth_config(self) -> SynthConfig:
        try:
            grades = tuple(int(g) for g in self.grades.split(","))
        except ValueError:
            raise UsageError(f"grades must be comma-separated integers, got {self.grades!r}") from None
        return SynthConfig(
            num_queries=self.num_queries,
            k=self.k,
            d=self.d,
            relevance_position_skew=self.skew,
            label_grades=grades,
            noise_sigma=self.noise_sigma,
            seed=self.seed,
        )

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            learning_rate=self.learning_rate,
            epochs=self.epochs,
            batch_size=self.batch_size,
            loss=LossConfig(lambda_=self.lambda_, variant=self.variant),
            seed=self.seed,
            shuffle_each_epoch=self.shuffle_each_epoch,
            momentum=self.momentum,
        )

    def window_config(self) -> WindowConfig:
        return WindowConfig(window_size=self.window_size, step=self.step)


def default_config() -> ExperimentConfig:
    return ExperimentConfig(**{_attr(k): default for k, (_, default, _h) in CONFIG_FIELDS.items()})


def parse_config_file(path: str) -> dict[str, object]:
    values: dict[str, object] = {}
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, _, text = line.partition("=")
        key = key.strip()
        if key not in CONFIG_FIELDS:
            raise UsageError(f"{path}:{lineno}: unknown config key {key!r}")
        parser = CONFIG_FIELDS[key][0]
        try:
            values[key] = parser(text.strip())
        except ValueError as exc:
            raise UsageError(f"{path}:{lineno}: bad value for {key}: {exc}") from None
    return values


def dump_config(cfg: ExperimentConfig) -> str:
    return "".join(f"{key}={_fmt(getattr(cfg, _attr(key)))}\n" for key in CONFIG_FIELDS)


# ---------------------------------------------------------------------------
# File formats.


def _require(cfg_value: str, key: str) -> str:
    if not cfg_value:
        raise UsageError(f"config key {key!r} is required for this command")
    return cfg_value


def _open_lines(path: str) -> list[str]:
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.readlines()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from None


def _write_text(path: str, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def write_candidates(path: str, instances) -> None:
    """JSON-lines candidates: one object per query, positions implicit in array order.

    ``instances`` holds (CandidateList, Ranking | None) pairs; a present truth
    permutation is stored as a parallel true_ranks array.
    """
    out = []
    for list_, truth in instances:
        passages = []
        for p in list_.passages:
            obj: dict = {"passage_id": p.passage_id, "features": list(map(float, p.features))}
            if p.relevance_label is not None:
                obj["label"] = p.relevance_label
            passages.append(obj)
        record: dict = {"query_id": list_.query_id, "passages": passages}
        if truth is not None:
            record["true_ranks"] = list(truth.ranks)
        if list_.provenance != "unknown":
            record["provenance"] = list_.provenance
        out.append(json.dumps(record, separators=(",", ":")))
    _write_text(path, "".join(line + "\n" for line in out))


def read_candidates(path: str) -> list[tuple[CandidateList, Ranking | None]]:
    instances: list[tuple[CandidateList, Ranking | None]] = []
    for lineno, raw in enumerate(_open_lines(path), start=1):
        line = raw.strip()
        if not line:
            continue
        try:
            record = json.loads(line)
            passages = tuple(
                PassageRef(
                    passage_id=p["passage_id"],
                    features=p["features"],
                    relevance_label=p.get("label"),
                )
                for p in record["passages"]
            )
            list_ = CandidateList(
                query_id=record["query_id"],
                passages=passages,
                provenance=record.get("provenance", "file"),
            )
            truth: Ranking | None = None
            if "true_ranks" in record:
                truth = Ranking(tuple(record["true_ranks"]))
                if truth.k != list_.k:
                    raise ValueError(f"{truth.k} true ranks for {list_.k} passages")
                if not truth.is_complete:
                    raise ValueError("true_ranks must be a complete permutation")
            elif any(p.relevance_label is not None for p in passages):
                truth = ranking_from_grades([p.relevance_label or 0 for p in passages])
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from None
        instances.append((list_, truth))
    if not instances:
        raise DataError(f"{path}: no candidate lists")
    return instances


def write_qrels(path: str, judgments: RelevanceJudgments) -> None:
    lines = [f"{qid} 0 {pid} {grade}\n" for (qid, pid), grade in judgments.entries.items()]
    _write_text(path, "".join(lines))


def read_qrels(path: str) -> RelevanceJudgments:
    entries: dict[tuple[str, str], int] = {}
    for lineno, raw in enumerate(_open_lines(path), start=1):
        line = raw.strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 4:
            raise DataError(f"{path}:{lineno}: expected 'query_id 0 passage_id grade'")
        qid, _, pid, grade_text = parts
        try:
            grade = int(grade_text)
        except ValueError:
            raise DataError(f"{path}:{lineno}: grade must be an integer, got {grade_text!r}") from None
        if (qid, pid) in entries:
            raise DataError(f"{path}:{lineno}: duplicate judgment for ({qid}, {pid})")
        entries[(qid, pid)] = grade
    try:
        return RelevanceJudgments(entries)
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None


def write_run(path: str, records: list[RunRecord]) -> None:
    lines = [f"{r.query_id} Q0 {r.passage_id} {r.rank} {r.score!r} {r.tag}\n" for r in records]
    _write_text(path, "".join(lines))


def read_run(path: str) -> list[RunRecord]:
    records = []
    per_query: dict[str, set[int]] = {}
    for lineno, raw in enumerate(_open_lines(path), start=1):
        line = raw.strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 6:
            raise DataError(f"{path}:{lineno}: expected 'query_id Q0 passage_id rank score tag'")
        qid, _, pid, rank_text, score_text, tag = parts
        try:
            rank = int(rank_text)
            score = float(score_text)
            record = RunRecord(query_id=qid, passage_id=pid, rank=rank, score=score, tag=tag)
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from None
        seen = per_query.setdefault(qid, set())
        if rank in seen:
            raise DataError(f"{path}:{lineno}: duplicate rank {rank} for query {qid}")
        seen.add(rank)
        records.append(record)
    for qid, ranks in per_query.items():
        if ranks != set(range(1, len(ranks) + 1)):
            raise DataError(f"{path}: ranks for query {qid} are not contiguous from 1")
    if not records:
        raise DataError(f"{path}: empty run")
    return records


def write_params(path: str, params: ScorerParams) -> None:
    lines = ["name,value\n"]
    for i, w in enumerate(params.content_weights):
        lines.append(f"content_weights[{i}],{float(w)!r}\n")
    for j, w in enumerate(params.position_weights):
        lines.append(f"position_weights[{j}],{float(w)!r}\n")
    lines.append(f"bias_scale,{float(params.bias_scale)!r}\n")
    _write_text(path, "".join(lines))


def read_params(path: str) -> ScorerParams:
    content: dict[int, float] = {}
    position: dict[int, float] = {}
    bias_scale = 0.0
    lines = _open_lines(path)
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or (lineno == 1 and line == "name,value"):
            continue
        name, _, value_text = line.partition(",")
        try:
            value = float(value_text)
        except ValueError:
            raise DataError(f"{path}:{lineno}: bad value {value_text!r}") from None
        if name == "bias_scale":
            bias_scale = value
        elif name.startswith("content_weights[") and name.endswith("]"):
            content[int(name[16:-1])] = value
        elif name.startswith("position_weights[") and name.endswith("]"):
            position[int(name[17:-1])] = value
        else:
            raise DataError(f"{path}:{lineno}: unknown parameter {name!r}")
    if not content or not position:
        raise DataError(f"{path}: missing content or position weights")
    cw = np.array([content[i] for i in range(len(content))])
    pw = np.array([position[i] for i in range(len(position))])
    return ScorerParams(content_weights=cw, position_weights=pw, bias_scale=bias_scale)


def write_propensity(path: str, matrix: PropensityMatrix) -> None:
    lines = ["input_position,output_rank,omega\n"]
    for i in range(matrix.k):
        for r in range(matrix.k):
            lines.append(f"{i + 1},{r + 1},{float(matrix.omega[i, r])!r}\n")
    _write_text(path, "".join(lines))


def read_propensity(path: str) -> PropensityMatrix:
    cells: dict[tuple[int, int], float] = {}
    for lineno, raw in enumerate(_open_lines(path), start=1):
        line = raw.strip()
        if not line or (lineno == 1 and line.startswith("input_position")):
            continue
        parts = line.split(",")
        if len(parts) != 3:
            raise DataError(f"{path}:{lineno}: expected input_position,output_rank,omega")
        try:
            i, r, omega = int(parts[0]), int(parts[1]), float(parts[2])
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from None
        cells[(i, r)] = omega
    if not cells:
        raise DataError(f"{path}: empty propensity file")
    k = max(i for i, _ in cells)
    if len(cells) != k * k:
        raise DataError(f"{path}: expected {k * k} cells for k={k}, got {len(cells)}")
    omega = np.zeros((k, k))
    for (i, r), value in cells.items():
        omega[i - 1, r - 1] = value
    try:
        return PropensityMatrix(omega=omega, epsilon_floor=float(omega.min()))
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None


def _provenance_line(**kv) -> str:
    return "# " + " ".join(f"{key}={_fmt(value)}" for key, value in kv.items()) + "\n"


# ---------------------------------------------------------------------------
# Commands.


def _load_dataset(cfg: ExperimentConfig, need_truth: bool):
    instances = read_candidates(_require(cfg.candidates, "candidates"))
    if need_truth:
        missing = [l.query_id for l, t in instances if t is None]
        if missing:
            raise DataError(f"query {missing[0]!r} has neither labels nor true_ranks")
    ks = {l.k for l, _ in instances}
    if len(ks) != 1:
        raise DataError(f"candidate lists have mixed lengths {sorted(ks)}")
    return instances


def _init_params(cfg: ExperimentConfig, d: int, k: int) -> ScorerParams:
    if cfg.params:
        return read_params(cfg.params)
    span = cfg.position_init_span
    position = np.linspace(span / 2.0, -span / 2.0, k) if k > 1 else np.zeros(1)
    return ScorerParams(
        content_weights=np.zeros(d),
        position_weights=position,
        bias_scale=cfg.bias_scale,
    )


def _run_records(list_: CandidateList, ranking: Ranking, tag: str) -> list[RunRecord]:
    k = list_.k
    records = []
    for rank, pos in enumerate(ranking.order(), start=1):
        records.append(
            RunRecord(
                query_id=list_.query_id,
                passage_id=list_.passages[pos - 1].passage_id,
                rank=rank,
                score=float(k - rank + 1),
                tag=tag,
            )
        )
    return records


def cmd_synth(cfg: ExperimentConfig) -> None:
    os.makedirs(cfg.out, exist_ok=True)
    generated = synth_generate(cfg.synth_config())
    entries: dict[tuple[str, str], int] = {}
    for _, _, query_entries in generated:
        entries.update(query_entries)
    write_candidates(os.path.join(cfg.out, "candidates.jsonl"), [(l, t) for l, t, _ in generated])
    write_qrels(os.path.join(cfg.out, "qrels.txt"), RelevanceJudgments(entries))
    print(f"wrote {len(generated)} queries (k={cfg.k}, d={cfg.d}, skew={cfg.skew}) to {cfg.out}")


def cmd_estimate_propensity(cfg: ExperimentConfig) -> None:
    os.makedirs(cfg.out, exist_ok=True)
    instances = _load_dataset(cfg, need_truth=False)
    params = read_params(_require(cfg.params, "params"))
    master = RngStream(cfg.seed)
    observations = []
    for qi, (list_, _) in enumerate(instances):
        q_stream = master.substream(qi)
        for s in range(cfg.n):
            shuffled = fisher_yates_shuffle(list_, q_stream.substream(2 * s))
            ranking = rerank_window(params, shuffled, p_fail=cfg.p_fail, rng=q_stream.substream(2 * s + 1))
            observations.append((shuffled, ranking))
    counts = count_transitions(observations)
    matrix = estimate_propensities(counts)
    write_propensity(os.path.join(cfg.out, "propensity.csv"), matrix)
    heat_lines = ["input_position,output_rank,count\n"]
    heat_lines += [f"{i},{r},{c}\n" for i, r, c in propensity_heatmap(counts)]
    _write_text(os.path.join(cfg.out, "transitions.csv"), "".join(heat_lines))
    row_sums = counts.counts.sum(axis=1) / counts.denominator
    dev = float(np.abs(row_sums - 1.0 / counts.k).max())
    print(
        f"estimated propensities from {len(observations)} observations "
        f"({counts.total_queries} queries x {counts.shuffles_per_query} shuffles, k={counts.k})"
    )
    print(f"pre-clamp row sums: expected {1.0 / counts.k!r}, max deviation {dev:.3e}")


def cmd_augment(cfg: ExperimentConfig) -> None:
    os.makedirs(cfg.out, exist_ok=True)
    instances = _load_dataset(cfg, need_truth=True)
    rng = RngStream(cfg.seed)
    if cfg.aug_mode == "pos":
        augmented = pos_aug(instances, cfg.n, rng)
    elif cfg.aug_mode == "rand":
        augmented = rand_aug(instances, cfg.n, rng)
    else:
        raise UsageError(f"aug_mode must be 'pos' or 'rand', got {cfg.aug_mode!r}")
    write_candidates(os.path.join(cfg.out, "augmented.jsonl"), list(augmented.instances))
    print(f"augmented {len(instances)} instances x{cfg.n} ({cfg.aug_mode}) -> {len(augmented)}")


def cmd_train(cfg: ExperimentConfig) -> None:
    os.makedirs(cfg.out, exist_ok=True)
    instances = _load_dataset(cfg, need_truth=True)
    first_list = instances[0][0]
    init = _init_params(cfg, d=first_list.feature_dim, k=first_list.k)
    train_cfg = cfg.train_config()
    omega = None
    if train_cfg.loss.needs_propensities:
        omega = read_propensity(_require(cfg.propensity, "propensity"))
    report = train(instances, init, train_cfg, omega=omega)
    write_params(os.path.join(cfg.out, "params.csv"), report.final_params)
    lines = [
        _provenance_line(
            variant=train_cfg.loss.variant,
            learning_rate=train_cfg.learning_rate,
            epochs=train_cfg.epochs,
            batch_size=train_cfg.batch_size,
            **{"lambda": train_cfg.loss.lambda_},
            seed=train_cfg.seed,
        ),
        "epoch,mean_loss\n",
    ]
    lines += [f"{e + 1},{loss!r}\n" for e, loss in enumerate(report.loss_curve)]
    _write_text(os.path.join(cfg.out, "train_report.csv"), "".join(lines))
    print(
        f"trained {train_cfg.loss.variant} on {len(instances)} instances: "
        f"epoch losses {[round(v, 6) for v in report.loss_curve]}"
    )


def cmd_rerank(cfg: ExperimentConfig) -> None:
    os.makedirs(cfg.out, exist_ok=True)
    instances = _load_dataset(cfg, need_truth=False)
    params = read_params(_require(cfg.params, "params"))
    window = cfg.window_config()
    master = RngStream(cfg.seed)
    records: list[RunRecord] = []
    for qi, (list_, _) in enumerate(instances):
        if list_.k > window.window_size:
            ranking = sliding_window_rerank(params, list_, window)
        else:
            ranking = rerank_window(params, list_, p_fail=cfg.p_fail, rng=master.substream(qi))
        records.extend(_run_records(list_, ranking, cfg.tag))
    write_run(os.path.join(cfg.out, "run.txt"), records)
    print(f"reranked {len(instances)} queries -> {cfg.out}/run.txt")


def cmd_eval(cfg: ExperimentConfig) -> None:
    os.makedirs(cfg.out, exist_ok=True)
    instances = _load_dataset(cfg, need_truth=False)
    judgments = read_qrels(_require(cfg.qrels, "qrels"))
    params = read_params(_require(cfg.params, "params"))
    dataset = [l for l, _ in instances]
    rng = RngStream(cfg.seed) if (cfg.order_mode == "shuffled" or cfg.p_fail > 0) else None
    if cfg.order_mode not in ("original", "shuffled"):
        raise UsageError(f"order_mode must be 'original' or 'shuffled', got {cfg.order_mode!r}")
    runs = rerank_runs(params, dataset, order_mode=cfg.order_mode, rng=rng, p_fail=cfg.p_fail)
    per_query = {used.query_id: ndcg_at_k(r, used, judgments, cfg.k_cut) for used, r in runs}
    mean = sum(per_query.values()) / len(per_query)
    report = EvalReport(
        mean_ndcg_at_10=mean,
        per_query=per_query,
        order_mode=cfg.order_mode,
        seed=cfg.seed if cfg.order_mode == "shuffled" else None,
    )
    records: list[RunRecord] = []
    for used, ranking in runs:
        records.extend(_run_records(used, ranking, f"{cfg.tag}-{cfg.order_mode}"))
    write_run(os.path.join(cfg.out, f"run_{cfg.order_mode}.txt"), records)
    lines = [
        _provenance_line(
            order_mode=cfg.order_mode,
            seed=cfg.seed if cfg.order_mode == "shuffled" else "none",
            k_cut=cfg.k_cut,
            p_fail=cfg.p_fail,
            params=os.path.basename(cfg.params),
        ),
        "query_id,ndcg\n",
    ]
    lines += [f"{qid},{val!r}\n" for qid, val in report.per_query.items()]
    _write_text(os.path.join(cfg.out, f"eval_{cfg.order_mode}.csv"), "".join(lines))
    print(f"mean NDCG@{cfg.k_cut} ({cfg.order_mode}): {report.mean_ndcg_at_10:.4f}")


def cmd_sweep(cfg: ExperimentConfig) -> None:
    os.makedirs(cfg.out, exist_ok=True)
    instances = _load_dataset(cfg, need_truth=False)
    judgments = read_qrels(_require(cfg.qrels, "qrels"))
    params = read_params(_require(cfg.params, "params"))
    result = positional_sweep(params, [l for l, _ in instances], judgments, k_cut=cfg.k_cut)
    lines = [
        _provenance_line(
            params=os.path.basename(cfg.params), k_cut=cfg.k_cut, num_queries=result.num_queries
        ),
        "position,mean_ndcg\n",
    ]
    lines += [f"{p + 1},{v!r}\n" for p, v in enumerate(result.per_position_ndcg)]
    _write_text(os.path.join(cfg.out, "sweep.csv"), "".join(lines))
    print(f"sweep variance over {len(result.per_position_ndcg)} positions: {result.variance:.6e}")


def cmd_aggregate(cfg: ExperimentConfig) -> None:
    os.makedirs(cfg.out, exist_ok=True)
    paths = [p for p in _require(cfg.runs, "runs").split(",") if p]
    if not paths:
        raise UsageError("runs must name at least one run file")
    runs = []
    for path in paths:
        by_query: dict[str, list[tuple[int, str]]] = {}
        for record in read_run(path):
            by_query.setdefault(record.query_id, []).append((record.rank, record.passage_id))
        runs.append({qid: [pid for _, pid in sorted(pairs)] for qid, pairs in by_query.items()})
    reference = runs[0]
    for path, run in zip(paths[1:], runs[1:]):
        if set(run) != set(reference):
            raise DataError(f"{path}: query ids differ from {paths[0]}")
    records: list[RunRecord] = []
    for qid, canonical_ids in reference.items():
        rankings = []
        for path, run in zip(paths, runs):
            ids = run[qid]
            if sorted(ids) != sorted(canonical_ids):
                raise DataError(f"{path}: passage set for query {qid} differs from {paths[0]}")
            rank_of = {pid: r for r, pid in enumerate(ids, start=1)}
            rankings.append(Ranking(tuple(rank_of[pid] for pid in canonical_ids)))
        fusion = FusionInput(rankings=tuple(rankings), rrf_c=cfg.rrf_c)
        if cfg.method == "kemeny":
            aggregated = permsc_aggregate(fusion, exact_limit=cfg.exact_limit)
        elif cfg.method == "rrf":
            aggregated = rrf_fuse(fusion)
        else:
            raise UsageError(f"method must be 'kemeny' or 'rrf', got {cfg.method!r}")
        k = len(canonical_ids)
        for rank, pos in enumerate(aggregated.order(), start=1):
            records.append(
                RunRecord(
                    query_id=qid,
                    passage_id=canonical_ids[pos - 1],
                    rank=rank,
                    score=float(k - rank + 1),
                    tag=f"{cfg.tag}-{cfg.method}",
                )
            )
    write_run(os.path.join(cfg.out, "aggregated_run.txt"), records)
    print(f"aggregated {len(paths)} runs over {len(reference)} queries ({cfg.method})")


def cmd_diagnose(cfg: ExperimentConfig) -> None:
    os.makedirs(cfg.out, exist_ok=True)
    instances = _load_dataset(cfg, need_truth=True)
    counts = count_transitions([(l, t) for l, t in instances])
    heat_lines = ["input_position,true_rank,count\n"]
    heat_lines += [f"{i},{r},{c}\n" for i, r, c in propensity_heatmap(counts)]
    _write_text(os.path.join(cfg.out, "transitions.csv"), "".join(heat_lines))
    top_positions = np.zeros(counts.k, dtype=np.int64)
    for list_, truth in instances:
        top_positions[truth.ranks.index(1)] += 1
    hist_lines = ["position,count\n"]
    hist_lines += [f"{p + 1},{c}\n" for p, c in enumerate(top_positions)]
    _write_text(os.path.join(cfg.out, "relevant_positions.csv"), "".join(hist_lines))
    max_cell = int(counts.counts.max())
    min_cell = int(counts.counts.min())
    ratio = float("inf") if min_cell == 0 else max_cell / min_cell
    print(f"transitions: max cell {max_cell}, min cell {min_cell}, max/min ratio {ratio}")
    print(f"top-ranked passage input positions: {top_positions.tolist()}")


COMMANDS = {
    "synth": cmd_synth,
    "estimate-propensity": cmd_estimate_propensity,
    "augment": cmd_augment,
    "train": cmd_train,
    "rerank": cmd_rerank,
    "eval": cmd_eval,
    "sweep": cmd_sweep,
    "aggregate": cmd_aggregate,
    "diagnose": cmd_diagnose,
}


class _Parser(argparse.ArgumentParser):
    # Usage errors exit 1; exit 2 is reserved for data errors.
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="debiasrank", description=__doc__)
    parser.add_argument("--dump-config", action="store_true", help="print the effective config and exit")
    sub = parser.add_subparsers(dest="command", metavar="command")
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="key=value config file")
        p.add_argument("--dump-config", action="store_true", help="print the effective config and exit")
        for key, (parse, _default, help_text) in CONFIG_FIELDS.items():
            p.add_argument(f"--{key}", dest=_attr(key), type=parse, default=None, help=help_text)
    return parser


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    values = {key: default for key, (_, default, _h) in CONFIG_FIELDS.items()}
    if getattr(args, "config", None):
        values.update(parse_config_file(args.config))
    for key in CONFIG_FIELDS:
        flag_value = getattr(args, _attr(key), None)
        if flag_value is not None:
            values[key] = flag_value
    return ExperimentConfig(**{_attr(k): v for k, v in values.items()})


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
        if getattr(args, "dump_config", False):
            sys.stdout.write(dump_config(cfg))
            return 0
        if not args.command:
            raise UsageError("a command is required (see --help)")
        COMMANDS[args.command](cfg)
    except UsageError as exc:
        print(f"debiasrank: error: {exc}", file=sys.stderr)
        return 1
    except (DataError, ValueError, OSError) as exc:
        print(f"debiasrank: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
