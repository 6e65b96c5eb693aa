"""Command-line workflow: sample graphs, schedule, train, evaluate, oracle-check.

Every subcommand is reproducible from its flags and --seed; reports are JSON
first, with human-readable summaries printed on top.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from .errors import PipeschedError
from .exact import brute_force_schedule, exact_schedule, save_schedule
from .graph import SamplerConfig, load_graph, sample_dag, save_graph
from .heuristic import list_schedule
from .policy import load_checkpoint
from .train import TrainConfig, evaluate, rl_schedule, train


def _cmd_sample(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ss = np.random.SeedSequence(entropy=(args.seed, args.nodes, args.degree))
    seeds = ss.generate_state(args.count, dtype=np.uint64)
    for i in range(args.count):
        dag = sample_dag(SamplerConfig(
            num_nodes=args.nodes,
            max_degree=args.degree,
            seed=int(seeds[i]),
        ))
        save_graph(dag, out / f"graph_{i:05d}.json")
    print(f"wrote {args.count} graphs to {out}")
    return 0


def _cmd_schedule(args) -> int:
    dag = load_graph(args.graph)
    if args.method == "exact":
        sched, obj = exact_schedule(dag, args.stages)
    elif args.method == "heuristic":
        sched, obj = list_schedule(dag, args.stages)
    else:
        if not args.checkpoint:
            raise PipeschedError("--method rl requires --checkpoint")
        params, _ = load_checkpoint(args.checkpoint)
        sched, obj, _ = rl_schedule(dag, params, args.stages)
    save_schedule(sched, obj, args.out)
    print(f"{args.method} schedule for {dag.name}: peak {obj.peak_stage_memory} bytes "
          f"over {sched.num_stages} stages -> {args.out}")
    return 0


def _cmd_train(args) -> int:
    with open(args.config, "r", encoding="utf-8") as fh:
        cfg = TrainConfig.from_dict(json.load(fh))
    checkpoint = args.checkpoint or "checkpoint.bin"
    metrics = args.metrics or "metrics.jsonl"
    train(cfg, checkpoint_path=checkpoint, metrics_path=metrics)
    print(f"checkpoint -> {checkpoint}; metrics -> {metrics}")
    return 0


def _cmd_evaluate(args) -> int:
    params, _ = load_checkpoint(args.checkpoint)
    paths = sorted(Path(args.dataset).glob("*.json"))
    if not paths:
        raise PipeschedError(f"no graph files under {args.dataset}")
    dags = [load_graph(p) for p in paths]
    report = evaluate(params, dags, args.stages)
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=1)
        fh.write("\n")
    print(f"{report['num_graphs']} graphs: mean reward {report['mean_reward']:.4f}, "
          f"mean gap {report['mean_gap_pct']:.2f}%, "
          f"solve ms rl/exact/heuristic = "
          f"{report['mean_solve_ms']['rl']:.2f}/"
          f"{report['mean_solve_ms']['exact']:.2f}/"
          f"{report['mean_solve_ms']['heuristic']:.3f} -> {args.out}")
    return 0


def _cmd_oracle_check(args) -> int:
    rng = np.random.default_rng(args.seed)
    mismatches = 0
    t0 = time.monotonic()
    for trial in range(args.trials):
        nv = int(rng.integers(2, args.max_nodes + 1))
        dag = sample_dag(SamplerConfig(
            num_nodes=nv,
            max_degree=int(rng.integers(1, min(3, nv - 1) + 1)),
            seed=int(rng.integers(0, 2**63)),
        ))
        n = int(rng.integers(1, min(4, nv) + 1))
        _, exact_obj = exact_schedule(dag, n)
        _, brute_obj = brute_force_schedule(dag, n)
        if exact_obj.peak_stage_memory != brute_obj.peak_stage_memory:
            mismatches += 1
            print(f"MISMATCH on {dag.name} n={n}: "
                  f"{exact_obj.peak_stage_memory} != {brute_obj.peak_stage_memory}")
    dt = time.monotonic() - t0
    print(f"{mismatches} mismatches over {args.trials} trials ({dt:.1f}s)")
    return 0 if mismatches == 0 else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pipesched", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("sample", help="generate synthetic graph files")
    sp.add_argument("--nodes", type=int, required=True)
    sp.add_argument("--degree", type=int, required=True)
    sp.add_argument("--count", type=int, default=1)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=_cmd_sample)

    sp = sub.add_parser("schedule", help="schedule one graph file")
    sp.add_argument("--graph", required=True)
    sp.add_argument("--stages", type=int, required=True)
    sp.add_argument("--method", choices=["exact", "heuristic", "rl"], default="exact")
    sp.add_argument("--checkpoint")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=_cmd_schedule)

    sp = sub.add_parser("train", help="train the pointer-network scheduler")
    sp.add_argument("--config", required=True, help="JSON TrainConfig")
    sp.add_argument("--checkpoint", help="output checkpoint path")
    sp.add_argument("--metrics", help="output metrics JSONL path")
    sp.set_defaults(func=_cmd_train)

    sp = sub.add_parser("evaluate", help="gap/solve-time report over a graph dir")
    sp.add_argument("--dataset", required=True)
    sp.add_argument("--stages", type=int, required=True)
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=_cmd_evaluate)

    sp = sub.add_parser("oracle-check", help="exact vs brute-force verification")
    sp.add_argument("--max-nodes", type=int, default=8)
    sp.add_argument("--trials", type=int, default=200)
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=_cmd_oracle_check)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO)
    try:
        return args.func(args)
    except PipeschedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
