"""Pipeline-stage scheduling of DNN-style computation DAGs.

Exact branch-and-bound, greedy list scheduling, and an imitation-trained
pointer-network scheduler, with shared graph and schedule file formats.
"""

from .graph import (
    ComputeDag,
    GraphEmbedding,
    OpNode,
    SamplerConfig,
    asap_levels,
    embed_graph,
    hash_node_id,
    load_graph,
    sample_dag,
    save_graph,
)
from .exact import (
    Schedule,
    ScheduleObjective,
    brute_force_schedule,
    exact_schedule,
    label_sequence,
    load_schedule,
    objective_of,
    save_schedule,
)
from .heuristic import list_schedule
from .deploy import cost_model, gap_to_optimal, repair_schedule
from .policy import (
    PolicyParams,
    backward,
    decode_sequence,
    decode_step,
    encode,
    init_params,
    load_checkpoint,
    save_checkpoint,
)
from .train import (
    TrainConfig,
    cosine_reward,
    evaluate,
    rl_schedule,
    seq_to_schedule,
    sequence_reward,
    train,
)

__all__ = [
    "ComputeDag", "GraphEmbedding", "OpNode", "SamplerConfig",
    "asap_levels", "embed_graph", "hash_node_id", "load_graph",
    "sample_dag", "save_graph",
    "Schedule", "ScheduleObjective", "brute_force_schedule", "exact_schedule",
    "label_sequence", "load_schedule", "objective_of", "save_schedule",
    "list_schedule",
    "cost_model", "gap_to_optimal", "repair_schedule",
    "PolicyParams", "backward", "decode_sequence", "decode_step", "encode",
    "init_params", "load_checkpoint", "save_checkpoint",
    "TrainConfig", "cosine_reward", "evaluate", "rl_schedule",
    "seq_to_schedule", "sequence_reward", "train",
]
