"""REINFORCE training that imitates the exact scheduler, plus evaluation.

Each sampled graph is labeled on the fly by the exact oracle; the policy's
sampled node order and the oracle's label order are both mapped to stage
vectors by the same target-fill rule, and the reward is their cosine
similarity. A greedy rollout of the best-so-far checkpoint is the baseline.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass

import numpy as np

from .errors import OracleTimeout, ShapeError, TrainingDiverged
from .exact import Schedule, exact_schedule, is_feasible, label_sequence, objective_of
from .deploy import cost_model, gap_to_optimal, repair_schedule
from .graph import ComputeDag, SamplerConfig, embed_graph, sample_dag
from .heuristic import list_schedule, minmax_fill
from .policy import (
    PolicyParams,
    backward,
    decode_sequence,
    encode,
    init_params,
    save_checkpoint,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RewardConfig:
    epsilon: float = 1e-8


@dataclass
class TrainConfig:
    epochs: int = 300
    learning_rate: float = 1e-4
    lr_decay: float = 1.0  # multiplicative per-epoch factor (1.0 = constant)
    entropy_weight: float = 0.0  # exploration bonus against decode collapse
    batch_size: int = 128
    degrees: tuple[int, ...] = (2, 3, 4, 5, 6)
    graphs_per_degree: int = 200_000
    num_stages: int = 4
    num_nodes: int = 30
    hidden_dim: int = 256
    memory_range: tuple[int, int] = (1024, 4 * 1024 * 1024)
    epsilon: float = 1e-8
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    val_size: int = 64
    oracle_time_limit: float | None = 10.0
    divergence_warmup: int = 3

    def validate(self) -> None:
        if self.epochs <= 0 or self.learning_rate <= 0 or self.batch_size <= 0:
            raise ValueError("epochs, learning_rate, batch_size must be positive")
        if not 0.0 < self.lr_decay <= 1.0:
            raise ValueError("lr_decay must be in (0, 1]")
        if not self.degrees:
            raise ValueError("degrees must be nonempty")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")

    def to_dict(self) -> dict:
        return {
            "epochs": self.epochs,
            "learning_rate": self.learning_rate,
            "lr_decay": self.lr_decay,
            "entropy_weight": self.entropy_weight,
            "batch_size": self.batch_size,
            "degrees": list(self.degrees),
            "graphs_per_degree": self.graphs_per_degree,
            "num_stages": self.num_stages,
            "num_nodes": self.num_nodes,
            "hidden_dim": self.hidden_dim,
            "memory_range": list(self.memory_range),
            "epsilon": self.epsilon,
            "seed": self.seed,
            "val_size": self.val_size,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        kw = dict(d)
        if "degrees" in kw:
            kw["degrees"] = tuple(kw["degrees"])
        if "memory_range" in kw:
            kw["memory_range"] = tuple(kw["memory_range"])
        return cls(**kw)


def seq_to_schedule(sequence, dag: ComputeDag, n: int) -> Schedule:
    """Map a node ordering to a stage assignment.

    The ordering is split into n contiguous nonempty runs minimizing the
    heaviest run; run k becomes stage k. On an ordering sorted by an optimal
    schedule's stages this recovers that schedule's peak exactly, so a policy
    that imitates the oracle ordering perfectly scores a zero peak-memory gap.
    """
    stage_of = minmax_fill(list(sequence), dag.memories(), n)
    return Schedule(tuple(stage_of), n)


def cosine_reward(s, s_prime, epsilon: float = 1e-8) -> float:
    """Cosine similarity of two stage vectors; in [0, 1] for stage indices."""
    a = np.asarray(s, dtype=np.float64)
    b = np.asarray(s_prime, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"stage vectors differ in length: {a.shape} vs {b.shape}")
    denom = max(np.sqrt(a @ a) * np.sqrt(b @ b), epsilon)
    return float((a @ b) / denom)


def sequence_reward(pi, gamma, epsilon: float = 1e-8) -> float:
    """Cosine similarity applied to the raw index sequences (diagnostic)."""
    a = np.asarray(pi, dtype=np.float64)
    b = np.asarray(gamma, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"sequences differ in length: {a.shape} vs {b.shape}")
    denom = max(np.sqrt(a @ a) * np.sqrt(b @ b), epsilon)
    return float((a @ b) / denom)


class Adam:
    """Standard Adam over a PolicyParams tree."""

    def __init__(self, params: PolicyParams, lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = params.zeros_like()
        self.v = params.zeros_like()

    def step(self, params: PolicyParams, grads: PolicyParams) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bias1 = 1.0 - b1 ** self.t
        bias2 = 1.0 - b2 ** self.t
        for name, g in grads.tensors():
            m = getattr(self.m, name)
            v = getattr(self.v, name)
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            p = getattr(params, name)
            p -= self.lr * (m / bias1) / (np.sqrt(v / bias2) + self.eps)
        params.check_finite("params after update")


def _graph_seed(base_seed: int, degree: int, index: int, stream: int) -> int:
    ss = np.random.SeedSequence(entropy=(base_seed, stream, degree, index))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@dataclass
class _GraphRecord:
    dag: ComputeDag
    embedding: object
    label_vec: np.ndarray  # stage vector of rho(gamma)
    exact_peak: int


class _Dataset:
    """Lazy sampled-graph store with memoized oracle labels."""

    def __init__(self, cfg: TrainConfig, stream: int):
        self.cfg = cfg
        self.keys = [
            (deg, i)
            for deg in cfg.degrees
            for i in range(cfg.graphs_per_degree)
        ]
        self.stream = stream
        self.records: dict[tuple[int, int], _GraphRecord] = {}
        self.skipped = 0
        self.max_degree = max(cfg.degrees)

    def get(self, key) -> _GraphRecord | None:
        if key in self.records:
            return self.records[key]
        deg, i = key
        cfg = self.cfg
        dag = sample_dag(SamplerConfig(
            num_nodes=cfg.num_nodes,
            max_degree=deg,
            memory_range=cfg.memory_range,
            seed=_graph_seed(cfg.seed, deg, i, self.stream),
        ))
        try:
            sched, obj = exact_schedule(dag, cfg.num_stages, time_limit=cfg.oracle_time_limit)
        except OracleTimeout:
            self.skipped += 1
            log.warning("oracle timeout on %s; skipping (%d so far)", dag.name, self.skipped)
            self.records[key] = None
            return None
        gamma = label_sequence(sched, dag)
        label = seq_to_schedule(gamma, dag, cfg.num_stages)
        rec = _GraphRecord(
            dag=dag,
            embedding=embed_graph(dag, self.max_degree),
            label_vec=np.array(label.stage_of, dtype=np.float64),
            exact_peak=obj.peak_stage_memory,
        )
        self.records[key] = rec
        return rec


def _greedy_reward(rec: _GraphRecord, params: PolicyParams, cfg: TrainConfig) -> float:
    enc = encode(rec.embedding, params)
    trace = decode_sequence(enc, params, mode="greedy")
    s_prime = seq_to_schedule(trace.sequence, rec.dag, cfg.num_stages)
    return cosine_reward(rec.label_vec, np.array(s_prime.stage_of), cfg.epsilon)


def train(
    cfg: TrainConfig,
    checkpoint_path=None,
    metrics_path=None,
) -> tuple[PolicyParams, list[dict]]:
    """REINFORCE with a greedy rollout baseline; returns final params + metrics.

    Deterministic for a fixed config: sampling, batching and updates all
    derive from cfg.seed.
    """
    cfg.validate()
    data = _Dataset(cfg, stream=0)
    val_data = _Dataset(cfg, stream=1)
    n_val = max(1, cfg.val_size // len(cfg.degrees))
    val_keys = [(deg, i) for deg in cfg.degrees for i in range(n_val)]

    max_degree = max(cfg.degrees)
    params = init_params(cfg.hidden_dim, max_degree, seed=cfg.seed)
    baseline = params.copy()
    baseline_version = 0
    baseline_cache: dict[tuple[int, tuple[int, int]], float] = {}
    opt = Adam(params, cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)
    rng = np.random.default_rng(np.random.SeedSequence(entropy=(cfg.seed, 0xE915)))

    def val_score(p: PolicyParams) -> float:
        """Mean (1 - R) of greedy decoding on the fixed validation set."""
        costs = []
        for key in val_keys:
            rec = val_data.get(key)
            if rec is None:
                continue
            costs.append(1.0 - _greedy_reward(rec, p, cfg))
        return float(np.mean(costs))

    baseline_val = val_score(baseline)
    metrics: list[dict] = []
    metrics_fh = open(metrics_path, "w", encoding="utf-8") if metrics_path else None
    try:
        for epoch in range(cfg.epochs):
            t0 = time.monotonic()
            opt.lr = cfg.learning_rate * cfg.lr_decay ** epoch
            order = rng.permutation(len(data.keys))
            rewards = []
            for start in range(0, len(order), cfg.batch_size):
                batch = [data.keys[j] for j in order[start:start + cfg.batch_size]]
                grad_sum = params.zeros_like()
                used = 0
                for key in batch:
                    rec = data.get(key)
                    if rec is None:
                        continue
                    enc = encode(rec.embedding, params)
                    trace = decode_sequence(enc, params, mode="sample", rng=rng)
                    s_prime = seq_to_schedule(trace.sequence, rec.dag, cfg.num_stages)
                    r = cosine_reward(rec.label_vec, np.array(s_prime.stage_of), cfg.epsilon)
                    trace.reward = r
                    rewards.append(r)

                    bkey = (baseline_version, key)
                    if bkey not in baseline_cache:
                        baseline_cache[bkey] = 1.0 - _greedy_reward(rec, baseline, cfg)
                    adv = (1.0 - r) - baseline_cache[bkey]
                    if adv == 0.0 and cfg.entropy_weight == 0.0:
                        used += 1
                        continue
                    g = backward(trace, adv, params,
                                 entropy_weight=cfg.entropy_weight)
                    for name, arr in g.tensors():
                        acc = getattr(grad_sum, name)
                        acc += arr
                    used += 1
                if used == 0:
                    continue
                for name, arr in grad_sum.tensors():
                    arr /= used
                opt.step(params, grad_sum)

            mean_reward = float(np.mean(rewards)) if rewards else 0.0
            cand_val = val_score(params)
            promoted = cand_val < baseline_val
            if promoted:
                baseline = params.copy()
                baseline_version += 1
                baseline_val = cand_val
            wall_ms = (time.monotonic() - t0) * 1000.0
            rec = {
                "epoch": epoch,
                "mean_reward": mean_reward,
                "val_reward": 1.0 - cand_val,
                "baseline_promoted": promoted,
                "wall_ms": wall_ms,
            }
            metrics.append(rec)
            if metrics_fh:
                metrics_fh.write(json.dumps(rec) + "\n")
                metrics_fh.flush()
            log.info(
                "epoch %d: mean R %.4f, val R %.4f%s",
                epoch, mean_reward, 1.0 - cand_val, " (promoted)" if promoted else "",
            )
            if epoch >= cfg.divergence_warmup and mean_reward < 0.01:
                raise TrainingDiverged(
                    f"mean reward {mean_reward:.4f} after epoch {epoch}; "
                    f"{data.skipped} oracle skips"
                )
    finally:
        if metrics_fh:
            metrics_fh.close()

    if checkpoint_path:
        save_checkpoint(params, checkpoint_path, config=cfg.to_dict())
    return params, metrics


def rl_schedule(
    dag: ComputeDag, params: PolicyParams, n: int
) -> tuple[Schedule, "object", float]:
    """Greedy inference -> target fill -> repair; returns (schedule, objective,
    inference seconds excluding graph embedding I/O)."""
    embedding = embed_graph(dag, params.max_degree)
    t0 = time.perf_counter()
    enc = encode(embedding, params)
    trace = decode_sequence(enc, params, mode="greedy")
    raw = seq_to_schedule(trace.sequence, dag, n)
    repaired = repair_schedule(raw, dag)
    dt = time.perf_counter() - t0
    return repaired, objective_of(repaired, dag), dt


def evaluate(
    params: PolicyParams,
    dags: list[ComputeDag],
    n: int,
    epsilon: float = 1e-8,
    oracle_time_limit: float | None = None,
) -> dict:
    """Gap-to-optimal, reward, feasibility and solving-time comparison."""
    per_graph = []
    by_degree: dict[int, list[float]] = {}
    for dag in dags:
        t0 = time.perf_counter()
        exact_sched, exact_obj = exact_schedule(dag, n, time_limit=oracle_time_limit)
        exact_s = time.perf_counter() - t0

        t0 = time.perf_counter()
        _, heur_obj = list_schedule(dag, n)
        heur_s = time.perf_counter() - t0

        rl_sched, rl_obj, rl_s = rl_schedule(dag, params, n)

        gamma = label_sequence(exact_sched, dag)
        label_vec = np.array(seq_to_schedule(gamma, dag, n).stage_of, dtype=np.float64)
        embedding = embed_graph(dag, params.max_degree)
        enc = encode(embedding, params)
        trace = decode_sequence(enc, params, mode="greedy")
        pred_vec = np.array(seq_to_schedule(trace.sequence, dag, n).stage_of)
        reward = cosine_reward(label_vec, pred_vec, epsilon)

        gap = gap_to_optimal(rl_obj, exact_obj)
        cost = cost_model(rl_sched, dag)
        degree = max((len(p) for p in dag.parents()), default=0)
        record = {
            "graph": dag.name,
            "n": n,
            "degree": degree,
            "reward": reward,
            "peak_rl": rl_obj.peak_stage_memory,
            "peak_exact": exact_obj.peak_stage_memory,
            "peak_heuristic": heur_obj.peak_stage_memory,
            "gap_pct": 100.0 * gap.relative_gap,
            "per_stage": list(rl_obj.per_stage_memory),
            "proxy_latency": {
                "pipeline": cost.pipeline_latency,
                "per_stage": list(cost.stage_latency),
            },
            "solve_ms": {
                "rl": rl_s * 1000.0,
                "exact": exact_s * 1000.0,
                "heuristic": heur_s * 1000.0,
            },
            "stages_after_repair": rl_sched.num_stages,
            "feasible": is_feasible(rl_sched, dag),
        }
        per_graph.append(record)
        by_degree.setdefault(degree, []).append(record["gap_pct"])

    gaps = [r["gap_pct"] for r in per_graph]
    return {
        "n": n,
        "num_graphs": len(per_graph),
        "mean_reward": float(np.mean([r["reward"] for r in per_graph])),
        "mean_gap_pct": float(np.mean(gaps)),
        "feasibility_rate": float(np.mean([r["feasible"] for r in per_graph])),
        "per_degree_gap_pct": {
            str(d): float(np.mean(v)) for d, v in sorted(by_degree.items())
        },
        "mean_solve_ms": {
            k: float(np.mean([r["solve_ms"][k] for r in per_graph]))
            for k in ("rl", "exact", "heuristic")
        },
        "graphs": per_graph,
    }
