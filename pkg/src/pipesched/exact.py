"""Exact minimum-peak-stage-memory pipeline partitioning.

A schedule maps every node to a stage index such that stage(u) <= stage(v)
for each edge (u, v) and every stage is nonempty. The exact solver is a
two-phase branch-and-bound: phase 1 finds the optimal peak value, phase 2
reconstructs the lexicographically smallest stage vector attaining it, so the
solver is a deterministic function usable as an imitation label oracle.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass

from .errors import FeasibilityError, Infeasible, OracleTimeout, ParseError, TooLarge
from .graph import ComputeDag, asap_levels, topological_order

BRUTE_FORCE_NODE_LIMIT = 12


@dataclass(frozen=True)
class Schedule:
    stage_of: tuple[int, ...]
    num_stages: int

    def stages(self) -> list[list[int]]:
        out: list[list[int]] = [[] for _ in range(self.num_stages)]
        for v, s in enumerate(self.stage_of):
            out[s].append(v)
        return out


@dataclass(frozen=True)
class ScheduleObjective:
    peak_stage_memory: int
    per_stage_memory: tuple[int, ...]


def objective_of(schedule: Schedule, dag: ComputeDag) -> ScheduleObjective:
    sums = [0] * schedule.num_stages
    for v, s in enumerate(schedule.stage_of):
        sums[s] += dag.nodes[v].memory_bytes
    return ScheduleObjective(max(sums), tuple(sums))


def check_feasible(schedule: Schedule, dag: ComputeDag) -> None:
    """Raise FeasibilityError on a dependency violation or an empty stage."""
    for u, v in dag.edges:
        if schedule.stage_of[u] > schedule.stage_of[v]:
            raise FeasibilityError(
                f"edge ({u}, {v}) runs backwards: stages "
                f"{schedule.stage_of[u]} > {schedule.stage_of[v]}"
            )
    used = set(schedule.stage_of)
    for s in range(schedule.num_stages):
        if s not in used:
            raise FeasibilityError(f"stage {s} is empty")


def is_feasible(schedule: Schedule, dag: ComputeDag) -> bool:
    try:
        check_feasible(schedule, dag)
    except FeasibilityError:
        return False
    return True


def _polish(dag: ComputeDag, n: int, stage_of: list[int]) -> list[int]:
    """Deterministic local search lowering the peak stage memory.

    Steepest-descent single-node moves, then first-improvement pair swaps,
    on the objective (peak, sum of squared loads); the second component pulls
    loads toward balance so the branch-and-bound starts near the lower bound.
    """
    nv = len(dag)
    parents = dag.parents()
    children = dag.children()
    mems = [nd.memory_bytes for nd in dag.nodes]
    stage = list(stage_of)
    load = [0] * n
    cnt = [0] * n
    for v, s in enumerate(stage):
        load[s] += mems[v]
        cnt[s] += 1

    def interval(v: int) -> tuple[int, int]:
        lo = max((stage[p] for p in parents[v]), default=0)
        hi = min((stage[c] for c in children[v]), default=n - 1)
        return lo, hi

    def key() -> tuple[int, int]:
        return (max(load), sum(w * w for w in load))

    for _ in range(4 * nv):
        improved = False
        best_key = key()
        best_move = None
        for v in range(nv):
            s = stage[v]
            if cnt[s] == 1:
                continue
            lo, hi = interval(v)
            for t in range(lo, hi + 1):
                if t == s:
                    continue
                load[s] -= mems[v]
                load[t] += mems[v]
                k = key()
                load[s] += mems[v]
                load[t] -= mems[v]
                if k < best_key:
                    best_key, best_move = k, (v, t)
        if best_move is not None:
            v, t = best_move
            s = stage[v]
            load[s] -= mems[v]
            cnt[s] -= 1
            load[t] += mems[v]
            cnt[t] += 1
            stage[v] = t
            continue
        # pair swap: u leaves stage a for b while w leaves b for a
        base_key = key()
        for a in range(n):
            if improved:
                break
            for b in range(n):
                if a == b or improved:
                    continue
                for u in range(nv):
                    if stage[u] != a or improved:
                        continue
                    for w in range(nv):
                        if stage[w] != b:
                            continue
                        load[a] += mems[w] - mems[u]
                        load[b] += mems[u] - mems[w]
                        stage[u], stage[w] = b, a
                        lou, hiu = interval(u)
                        low, hiw = interval(w)
                        if lou <= b <= hiu and low <= a <= hiw and key() < base_key:
                            improved = True
                            break
                        stage[u], stage[w] = a, b
                        load[a] -= mems[w] - mems[u]
                        load[b] -= mems[u] - mems[w]
        if not improved:
            break
    return stage


def _feasible_assignment(dag: ComputeDag, n: int, cap: int,
                         deadline: float | None,
                         fixed: list[int] | None = None) -> list[int] | None:
    """Find a feasible assignment with every stage load <= cap, or prove that
    none exists (returns None). ``fixed`` optionally pins some nodes' stages.

    Stages are filled one at a time: stage k takes a down-closed node set
    whose weight lands in the window [remaining - (stages left)*cap, cap];
    the window check is what makes infeasibility proofs terminate. Within a
    stage, nodes are decided include/exclude in a heavy-first topological
    order, the classic subset-sum search shape.
    """
    nv = len(dag)
    mems = [nd.memory_bytes for nd in dag.nodes]
    parents = dag.parents()
    children = dag.children()
    levels = asap_levels(dag)
    # heavy-first within levels keeps small items late for the endgame while
    # preserving "parents are decided before children"
    order = sorted(range(nv), key=lambda v: (levels[v], -mems[v], v))
    total = sum(mems)

    stage_of = list(fixed) if fixed is not None else [-1] * nv
    fixed_load = [0] * n
    fixed_cnt = [0] * n
    for v, s in enumerate(stage_of):
        if s >= 0:
            fixed_load[s] += mems[v]
            fixed_cnt[s] += 1
    if max(fixed_load) > cap:
        return None
    # window per free node imposed by pinned neighbors
    min_stage = [0] * nv
    max_stage = [n - 1] * nv
    for v in range(nv):
        if stage_of[v] >= 0:
            continue
        for p in parents[v]:
            if stage_of[p] >= 0 and stage_of[p] > min_stage[v]:
                min_stage[v] = stage_of[p]
        for c in children[v]:
            if stage_of[c] >= 0 and stage_of[c] < max_stage[v]:
                max_stage[v] = stage_of[c]
        if min_stage[v] > max_stage[v]:
            return None
    counter = 0

    def fill_stage(k: int, rem_total: int, rem_count: int) -> bool:
        nonlocal counter
        if k == n - 1:
            if rem_total <= cap and rem_count >= 1:
                for v in range(nv):
                    if stage_of[v] < 0:
                        stage_of[v] = k
                return True
            return False
        left = n - k - 1  # stages after this one
        low = rem_total - left * cap - fixed_load[k]  # least free weight that fits
        budget = cap - fixed_load[k]
        todo = [v for v in order if stage_of[v] < 0]
        included: list[int] = []

        def grow(idx: int, cur: int, undecided: int) -> bool:
            """Binary include/exclude DFS over todo[idx:]; cur is the free
            stage weight so far, undecided the weight still decidable."""
            nonlocal counter
            counter += 1
            if deadline is not None and counter % 256 == 0 and time.monotonic() > deadline:
                raise OracleTimeout("exact scheduling exceeded its time budget")
            if cur + undecided < low:
                return False
            if idx == len(todo):
                if (cur >= low and (included or fixed_cnt[k])
                        and rem_count - len(included) - fixed_cnt[k] >= left):
                    return fill_stage(k + 1, rem_total - cur - fixed_load[k],
                                      rem_count - len(included) - fixed_cnt[k])
                return False
            v = todo[idx]
            # parents are all decided already: assigned to an earlier stage or
            # included here (stage_of set), else excluded (still -1)
            can_take = (min_stage[v] <= k
                        and cur + mems[v] <= budget
                        and all(stage_of[p] >= 0 for p in parents[v]))
            if can_take:
                included.append(v)
                stage_of[v] = k
                if grow(idx + 1, cur + mems[v], undecided - mems[v]):
                    return True
                stage_of[v] = -1
                included.pop()
            if max_stage[v] == k:
                return False  # a pinned child forbids any later stage
            if grow(idx + 1, cur, undecided - mems[v]):
                return True
            return False

        return grow(0, 0, sum(mems[v] for v in todo))

    # rem_total counts everything not yet placed: all free nodes plus fixed
    # nodes of stages >= the one being filled
    if fill_stage(0, total, nv):
        return stage_of
    return None


def _optimal_peak(dag: ComputeDag, n: int, upper: int, deadline: float | None) -> int:
    """Phase 1: iteratively tighten the cap from a known-achievable peak.

    Each round asks for any schedule strictly better than the incumbent; the
    round that proves infeasibility certifies the incumbent as optimal.
    """
    nv = len(dag)
    mems = [nd.memory_bytes for nd in dag.nodes]
    total = sum(mems)
    # every stage load is a sum of node memories, hence divisible by their
    # gcd; the optimum below any achievable cap is also a multiple of it
    g = max(math.gcd(*mems) if nv > 1 else mems[0], 1)
    glb = max(g * -(-total // (n * g)), max(mems))
    best = upper
    lower = glb
    # bisect between the certified lower bound and the incumbent; plain
    # cap-by-cap descent can crawl byte by byte when solutions are dense
    while lower < best:
        cap = lower + g * ((best - lower) // (2 * g))
        cap = min(cap, best - g)
        found = _feasible_assignment(dag, n, cap, deadline)
        if found is None:
            lower = cap + g
            continue
        loads = [0] * n
        for v, s in enumerate(found):
            loads[s] += mems[v]
        best = max(loads)
    return best


def _lex_min_schedule(dag: ComputeDag, n: int, peak_cap: int,
                      deadline: float | None) -> list[int]:
    """Phase 2: lexicographically smallest stage vector with peak <= peak_cap.

    Greedy per node in index order: pin the lowest stage that still admits a
    feasible completion; the completion checks reuse the phase-1 solver with
    the pins as constraints."""
    nv = len(dag)
    parents = dag.parents()
    fixed = [-1] * nv
    for v in range(nv):
        start = max((fixed[p] for p in parents[v] if fixed[p] >= 0), default=0)
        for s in range(start, n):
            fixed[v] = s
            if _feasible_assignment(dag, n, peak_cap, deadline, fixed) is not None:
                break
            fixed[v] = -1
        if fixed[v] < 0:
            raise Infeasible(f"no feasible {n}-stage schedule at peak {peak_cap}")
    return fixed


def exact_schedule(
    dag: ComputeDag, n: int, time_limit: float | None = None
) -> tuple[Schedule, ScheduleObjective]:
    """Globally minimal peak-stage-memory schedule; deterministic tie-break by
    lexicographically smallest stage vector."""
    if n < 1:
        raise Infeasible("need at least one stage")
    if n > len(dag):
        raise Infeasible(f"cannot fill {n} stages with {len(dag)} nodes")
    deadline = None if time_limit is None else time.monotonic() + time_limit

    if n == 1:
        sched = Schedule(tuple([0] * len(dag)), 1)
        return sched, objective_of(sched, dag)

    from .heuristic import list_schedule  # local import: avoids a module cycle

    heur_sched, heur_obj = list_schedule(dag, n)
    polished = _polish(dag, n, list(heur_sched.stage_of))
    upper = min(heur_obj.peak_stage_memory,
                objective_of(Schedule(tuple(polished), n), dag).peak_stage_memory)
    best = _optimal_peak(dag, n, upper, deadline)
    stage_of = _lex_min_schedule(dag, n, best, deadline)
    sched = Schedule(tuple(stage_of), n)
    obj = objective_of(sched, dag)
    assert obj.peak_stage_memory == best
    return sched, obj


def brute_force_schedule(dag: ComputeDag, n: int) -> tuple[Schedule, ScheduleObjective]:
    """Exhaustive enumeration of every dependency-feasible, all-stages-nonempty
    assignment; independent verification oracle for exact_schedule."""
    if len(dag) > BRUTE_FORCE_NODE_LIMIT:
        raise TooLarge(f"|V| = {len(dag)} > {BRUTE_FORCE_NODE_LIMIT}")
    if n < 1 or n > len(dag):
        raise Infeasible(f"cannot fill {n} stages with {len(dag)} nodes")

    nv = len(dag)
    parents = dag.parents()
    children = dag.children()
    mems = [nd.memory_bytes for nd in dag.nodes]
    stage_of = [-1] * nv
    stage_sum = [0] * n
    stage_cnt = [0] * n
    best_peak = math.inf
    best_vec: list[int] | None = None

    def rec(v: int) -> None:
        nonlocal best_peak, best_vec
        if v == nv:
            if all(c > 0 for c in stage_cnt):
                peak = max(stage_sum)
                # enumeration visits vectors in lexicographic order, so a
                # strict improvement is automatically the lex-min optimum
                if peak < best_peak:
                    best_peak = peak
                    best_vec = stage_of.copy()
            return
        lb = 0
        ub = n - 1
        for p in parents[v]:
            if stage_of[p] >= 0 and stage_of[p] > lb:
                lb = stage_of[p]
        for c in children[v]:
            if stage_of[c] >= 0 and stage_of[c] < ub:
                ub = stage_of[c]
        for s in range(lb, ub + 1):
            stage_of[v] = s
            stage_sum[s] += mems[v]
            stage_cnt[s] += 1
            rec(v + 1)
            stage_of[v] = -1
            stage_sum[s] -= mems[v]
            stage_cnt[s] -= 1

    rec(0)
    if best_vec is None:
        raise Infeasible(f"no feasible {n}-stage schedule")
    sched = Schedule(tuple(best_vec), n)
    return sched, objective_of(sched, dag)


def label_sequence(schedule: Schedule, dag: ComputeDag) -> list[int]:
    """Imitation target: nodes sorted by (stage, ASAP level, index)."""
    check_feasible(schedule, dag)
    levels = asap_levels(dag)
    return sorted(range(len(dag)), key=lambda v: (schedule.stage_of[v], levels[v], v))


def save_schedule(schedule: Schedule, objective: ScheduleObjective, path) -> None:
    payload = {
        "num_stages": schedule.num_stages,
        "stage_of": list(schedule.stage_of),
        "objective": {
            "peak_stage_memory": objective.peak_stage_memory,
            "per_stage_memory": list(objective.per_stage_memory),
        },
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=1)
        fh.write("\n")


def load_schedule(path) -> tuple[Schedule, ScheduleObjective]:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
        schedule = Schedule(tuple(payload["stage_of"]), int(payload["num_stages"]))
        obj = payload["objective"]
        objective = ScheduleObjective(
            int(obj["peak_stage_memory"]), tuple(obj["per_stage_memory"])
        )
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"{path}: {exc}") from exc
    return schedule, objective
