"""Fast list-scheduling baseline: greedy memory-target segmentation in ASAP order.

Stands in for a commercial compiler's closed heuristic in quality and
solving-time comparisons.
"""

from __future__ import annotations

from .errors import Infeasible
from .exact import Schedule, ScheduleObjective, objective_of
from .graph import ComputeDag, topological_order


def greedy_fill(walk: list[int], memories, n: int) -> list[int]:
    """Assign stages to nodes walked in ``walk`` order by target filling.

    A stage advances when adding the next node would push its sum past
    total/n (stage already nonempty, stages remaining), and is forced to
    advance when exactly enough nodes remain to give every later stage one
    node. With len(walk) >= n every stage ends nonempty.
    """
    nv = len(walk)
    if nv < n:
        raise Infeasible(f"cannot fill {n} stages with {nv} nodes")
    total = sum(int(memories[v]) for v in walk)
    target = total / n

    stage_of = [0] * nv
    stage = 0
    stage_sum = 0
    stage_len = 0
    for i, v in enumerate(walk):
        remaining = nv - i  # including v
        must_advance = stage_len > 0 and remaining <= (n - 1 - stage)
        want_advance = stage_len > 0 and stage_sum + int(memories[v]) > target
        if (must_advance or want_advance) and stage < n - 1:
            stage += 1
            stage_sum = 0
            stage_len = 0
        stage_of[v] = stage
        stage_sum += int(memories[v])
        stage_len += 1
    return stage_of


def minmax_fill(walk: list[int], memories, n: int) -> list[int]:
    """Split ``walk`` into n contiguous nonempty segments minimizing the
    heaviest segment; segment k becomes stage k.

    Classic interval-partition dynamic program, O(n * len(walk)^2). Ties
    resolve toward the earliest cut positions so the result is a function of
    its inputs. Unlike the greedy target fill this recovers arbitrarily
    unbalanced optimal partitions, which matters when the walk comes from an
    optimal schedule's node order.
    """
    nv = len(walk)
    if nv < n:
        raise Infeasible(f"cannot fill {n} stages with {nv} nodes")
    prefix = [0] * (nv + 1)
    for i, v in enumerate(walk):
        prefix[i + 1] = prefix[i] + int(memories[v])

    inf = float("inf")
    # best[k][i]: minimal peak splitting walk[:i] into k segments
    best = [[inf] * (nv + 1) for _ in range(n + 1)]
    cut = [[0] * (nv + 1) for _ in range(n + 1)]
    best[0][0] = 0
    for k in range(1, n + 1):
        # segment k-1 is walk[j:i]; leave >= n-k nodes for later segments
        for i in range(k, nv - (n - k) + 1):
            for j in range(k - 1, i):
                peak = max(best[k - 1][j], prefix[i] - prefix[j])
                if peak < best[k][i]:
                    best[k][i] = peak
                    cut[k][i] = j
    stage_of = [0] * nv
    i = nv
    for k in range(n, 0, -1):
        j = cut[k][i]
        for p in range(j, i):
            stage_of[walk[p]] = k - 1
        i = j
    return stage_of


def list_schedule(dag: ComputeDag, n: int) -> tuple[Schedule, ScheduleObjective]:
    """Greedy target-fill over the ASAP order; O(|V| log |V| + |E|)."""
    if n < 1:
        raise Infeasible("need at least one stage")
    if n > len(dag):
        raise Infeasible(f"cannot fill {n} stages with {len(dag)} nodes")
    walk = topological_order(dag)
    stage_of = greedy_fill(walk, dag.memories(), n)
    sched = Schedule(tuple(stage_of), n)
    return sched, objective_of(sched, dag)
