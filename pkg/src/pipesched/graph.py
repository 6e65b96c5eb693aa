"""DAG representation, ASAP leveling, node embedding, synthetic sampler, file I/O.

Graphs are immutable once built: nodes are indexed 0..|V|-1 and edges are
(parent_index, child_index) pairs. The JSON file format is the contract with
the external model converter.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigError, CyclicGraph, DegreeOverflow, ParseError

# node_id must fit the embedding integer width; 32 bits is plenty
_ID_BITS = 32
_ID_MASK = (1 << _ID_BITS) - 1


def hash_node_id(op_name: str, salt: int = 0) -> int:
    """Deterministic non-negative 32-bit id for an operator name.

    ``salt`` is the occurrence index used to resolve collisions within one
    graph; callers that only need determinism pass salt=0.
    """
    if not op_name:
        raise ValueError("op_name must be non-empty")
    data = op_name if salt == 0 else f"{op_name}#{salt}"
    digest = hashlib.sha256(data.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") & _ID_MASK


@dataclass(frozen=True)
class OpNode:
    op_name: str
    node_id: int
    memory_bytes: int


@dataclass(frozen=True)
class ComputeDag:
    """Directed acyclic graph of operator nodes with memory footprints."""

    nodes: tuple[OpNode, ...]
    edges: tuple[tuple[int, int], ...]
    name: str = "graph"

    @classmethod
    def build(
        cls,
        ops: Sequence[tuple[str, int]],
        edges: Sequence[tuple[int, int]],
        name: str = "graph",
    ) -> "ComputeDag":
        """Construct and validate a DAG from (op_name, memory_bytes) pairs.

        Node ids are hashed from op names, salted by occurrence index when two
        names collide within this graph.
        """
        seen_ids: set[int] = set()
        nodes = []
        for op_name, mem in ops:
            if mem < 0:
                raise ValueError(f"negative memory for {op_name!r}")
            salt = 0
            nid = hash_node_id(op_name, salt)
            while nid in seen_ids:
                salt += 1
                nid = hash_node_id(op_name, salt)
            seen_ids.add(nid)
            nodes.append(OpNode(op_name, nid, int(mem)))

        n = len(nodes)
        edge_set = set()
        for u, v in edges:
            if not (0 <= u < n and 0 <= v < n):
                raise ParseError(f"edge ({u}, {v}) references a node outside 0..{n - 1}")
            if u == v:
                raise ParseError(f"self-loop on node {u}")
            if (u, v) in edge_set:
                raise ParseError(f"duplicate edge ({u}, {v})")
            edge_set.add((u, v))

        dag = cls(tuple(nodes), tuple((int(u), int(v)) for u, v in edges), name)
        asap_levels(dag)  # raises CyclicGraph on a cycle
        return dag

    def __len__(self) -> int:
        return len(self.nodes)

    def parents(self) -> list[list[int]]:
        out: list[list[int]] = [[] for _ in self.nodes]
        for u, v in self.edges:
            out[v].append(u)
        return out

    def children(self) -> list[list[int]]:
        out: list[list[int]] = [[] for _ in self.nodes]
        for u, v in self.edges:
            out[u].append(v)
        return out

    def memories(self) -> np.ndarray:
        return np.array([nd.memory_bytes for nd in self.nodes], dtype=np.int64)

    def total_memory(self) -> int:
        return int(self.memories().sum())


def asap_levels(dag: ComputeDag) -> list[int]:
    """Earliest topological level per node: 1 for sources, 1 + max parent level.

    Raises CyclicGraph naming one back edge when the graph is not acyclic.
    """
    n = len(dag)
    indeg = [0] * n
    children = [[] for _ in range(n)]
    for u, v in dag.edges:
        indeg[v] += 1
        children[u].append(v)

    level = [1] * n
    queue = [v for v in range(n) if indeg[v] == 0]
    done = 0
    head = 0
    while head < len(queue):
        u = queue[head]
        head += 1
        done += 1
        for v in children[u]:
            level[v] = max(level[v], level[u] + 1)
            indeg[v] -= 1
            if indeg[v] == 0:
                queue.append(v)
    if done != n:
        stuck = {v for v in range(n) if indeg[v] > 0}
        for u, v in dag.edges:
            if u in stuck and v in stuck:
                raise CyclicGraph((u, v))
        raise CyclicGraph(dag.edges[0])  # unreachable in practice
    return level


def topological_order(dag: ComputeDag) -> list[int]:
    """Nodes sorted by (ASAP level, index); a valid topological order."""
    levels = asap_levels(dag)
    return sorted(range(len(dag)), key=lambda v: (levels[v], v))


@dataclass(frozen=True)
class GraphEmbedding:
    """Per-node integer feature rows consumed by the encoder.

    Row layout: [asap_level, parent_level_1..D, parent_id_1..D, node_id,
    memory_bytes]. Missing parent slots use the source-node convention:
    level 0, id -1.
    """

    rows: np.ndarray  # |V| x (2 + 2D + 1), int64
    max_degree: int


def embed_graph(dag: ComputeDag, max_degree: int) -> GraphEmbedding:
    levels = asap_levels(dag)
    parents = dag.parents()
    d = max_degree
    rows = np.zeros((len(dag), 2 + 2 * d + 1), dtype=np.int64)
    for v, node in enumerate(dag.nodes):
        ps = sorted(parents[v])
        if len(ps) > d:
            raise DegreeOverflow(v, len(ps), d)
        plevels = [levels[p] for p in ps] + [0] * (d - len(ps))
        pids = [dag.nodes[p].node_id for p in ps] + [-1] * (d - len(ps))
        rows[v] = [levels[v], *plevels, *pids, node.node_id, node.memory_bytes]
    return GraphEmbedding(rows, d)


@dataclass(frozen=True)
class SamplerConfig:
    num_nodes: int
    max_degree: int
    memory_range: tuple[int, int] = (1024, 4 * 1024 * 1024)
    seed: int = 0
    memory_granularity: int = 1

    def validate(self) -> None:
        if self.num_nodes < 2:
            raise ConfigError("num_nodes must be >= 2")
        if self.max_degree < 1:
            raise ConfigError("max_degree must be >= 1")
        lo, hi = self.memory_range
        if lo > hi or lo < 0:
            raise ConfigError(f"bad memory_range {self.memory_range}")
        g = self.memory_granularity
        if g < 1:
            raise ConfigError("memory_granularity must be >= 1")
        if -(-lo // g) > hi // g:
            raise ConfigError(
                f"memory_range {self.memory_range} contains no multiple of {g}")


def sample_dag(cfg: SamplerConfig) -> ComputeDag:
    """Random layered-free DAG: each non-source node draws 1..max_degree parents
    uniformly from lower-indexed nodes, so acyclicity holds by construction.

    The maximum in-degree is forced to be attained by at least one node.
    Reproducible from cfg.seed alone.
    """
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    n, d = cfg.num_nodes, cfg.max_degree

    edges: list[tuple[int, int]] = []
    indegrees = [0] * n
    for v in range(1, n):
        k = min(v, int(rng.integers(1, d + 1)))
        ps = rng.choice(v, size=k, replace=False)
        indegrees[v] = k
        for p in sorted(int(p) for p in ps):
            edges.append((p, v))

    # guarantee the max degree is attained: rewire the last node that can hold it
    if n > d and max(indegrees) < d:
        v = n - 1
        edges = [(u, w) for u, w in edges if w != v]
        ps = rng.choice(v, size=d, replace=False)
        for p in sorted(int(p) for p in ps):
            edges.append((p, v))

    lo, hi = cfg.memory_range
    g = cfg.memory_granularity
    mems = rng.integers(-(-lo // g), hi // g + 1, size=n) * g
    ops = [(f"op_{v}", int(mems[v])) for v in range(n)]
    return ComputeDag.build(ops, edges, name=f"synthetic_n{n}_d{d}_s{cfg.seed}")


def save_graph(dag: ComputeDag, path) -> None:
    payload = {
        "name": dag.name,
        "nodes": [{"op": nd.op_name, "memory_bytes": nd.memory_bytes} for nd in dag.nodes],
        "edges": [[u, v] for u, v in dag.edges],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=1)
        fh.write("\n")


def load_graph(path) -> ComputeDag:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc

    try:
        name = payload["name"]
        raw_nodes = payload["nodes"]
        raw_edges = payload["edges"]
    except (KeyError, TypeError) as exc:
        raise ParseError(f"{path}: missing field {exc}") from exc

    ops = []
    for i, nd in enumerate(raw_nodes):
        try:
            ops.append((nd["op"], int(nd["memory_bytes"])))
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"{path}: bad node record at index {i}: {exc}") from exc
    try:
        edges = [(int(u), int(v)) for u, v in raw_edges]
    except (TypeError, ValueError) as exc:
        raise ParseError(f"{path}: bad edge record: {exc}") from exc

    try:
        return ComputeDag.build(ops, edges, name=str(name))
    except (ParseError, CyclicGraph, ValueError) as exc:
        raise ParseError(f"{path}: {exc}") from exc
