"""Post-inference schedule repair and the pipeline cost model.

Repair enforces two device rules: children of a shared parent land on one
stage (the earliest any of them predicted), and data never flows backwards
(a child is pushed to its parent's stage or later). Both are applied
alternately to a fixpoint; empty stages are then merged away.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

from .errors import FeasibilityError
from .exact import Schedule, ScheduleObjective, check_feasible, objective_of
from .graph import ComputeDag

log = logging.getLogger(__name__)

CACHE_BYTES_DEFAULT = 8 * 1024 * 1024  # per-stage on-chip parameter budget


def repair_schedule(schedule: Schedule, dag: ComputeDag) -> Schedule:
    """Make an arbitrary stage assignment deployable.

    A dependency-feasible input is returned as-is (repair is for broken
    predictions, not valid schedules). Otherwise two rules alternate until
    stable: co-stage — children of a multi-child node whose assignment is
    violated move together to the earliest stage any of them holds; dependency
    — a child earlier than its parent is pushed forward to the parent's stage.
    The dependency rule alone reaches feasibility, so the loop terminates as
    soon as no violations remain. Empty stages are merged out by renumbering;
    a stage-count shortfall is logged, never silently padded.
    """
    n = schedule.num_stages
    stage_of = list(schedule.stage_of)
    children = dag.children()

    def violated() -> bool:
        return any(stage_of[u] > stage_of[v] for u, v in dag.edges)

    if not violated() and set(stage_of) == set(range(n)):
        return schedule

    def co_stage_pass() -> None:
        # only parents with a currently-violating child pull their children
        # together; applying the rule to valid fan-outs would undo good
        # assignments instead of repairing bad ones
        for v in range(len(dag)):
            kids = children[v]
            if len(kids) < 2:
                continue
            if all(stage_of[c] >= stage_of[v] for c in kids):
                continue
            earliest = min(stage_of[c] for c in kids)
            for c in kids:
                stage_of[c] = earliest

    def dependency_fixpoint() -> None:
        # each sweep only raises stages, so this terminates within |V|*n sweeps
        changed = True
        while changed:
            changed = False
            for u, v in dag.edges:
                if stage_of[v] < stage_of[u]:
                    stage_of[v] = stage_of[u]
                    changed = True

    while violated():
        co_stage_pass()
        dependency_fixpoint()

    used = sorted(set(stage_of))
    renumber = {s: i for i, s in enumerate(used)}
    stage_of = [renumber[s] for s in stage_of]
    if len(used) < n:
        log.info(
            "repair left %d of %d stages nonempty on %s", len(used), n, dag.name
        )
    return Schedule(tuple(stage_of), len(used))


@dataclass(frozen=True)
class CostReport:
    per_stage_memory: tuple[int, ...]
    on_cache: tuple[int, ...]
    off_cache: tuple[int, ...]
    stage_latency: tuple[float, ...]
    pipeline_latency: float


def cost_model(
    schedule: Schedule,
    dag: ComputeDag,
    cache_bytes: int = CACHE_BYTES_DEFAULT,
    alpha: float = 1.0,
    beta: float = 64.0,
    kappa: float = float(1024 * 1024),
) -> CostReport:
    """Proxy latency from per-stage parameter caching.

    Bytes past the cache budget pay the DRAM penalty ``beta``; the pipeline
    proxy is the bottleneck stage plus ``kappa`` per inter-stage hop. The
    constants exist for relative comparisons only.
    """
    check_feasible(schedule, dag)
    obj = objective_of(schedule, dag)
    on = tuple(min(m, cache_bytes) for m in obj.per_stage_memory)
    off = tuple(max(0, m - cache_bytes) for m in obj.per_stage_memory)
    lat = tuple(
        alpha * m + beta * o for m, o in zip(obj.per_stage_memory, off)
    )
    pipeline = max(lat) + kappa * (schedule.num_stages - 1)
    return CostReport(obj.per_stage_memory, on, off, lat, pipeline)


@dataclass(frozen=True)
class GapReport:
    peak_candidate: int
    peak_exact: int
    relative_gap: float
    per_stage_abs_diff: tuple[int, ...]


def gap_to_optimal(
    candidate: ScheduleObjective, exact: ScheduleObjective
) -> GapReport:
    """Relative peak-memory gap plus sorted per-stage absolute differences."""
    if exact.peak_stage_memory <= 0:
        raise FeasibilityError("exact schedule has zero peak memory")
    gap = abs(candidate.peak_stage_memory - exact.peak_stage_memory) / exact.peak_stage_memory
    a = sorted(candidate.per_stage_memory, reverse=True)
    b = sorted(exact.per_stage_memory, reverse=True)
    if len(a) < len(b):
        a = a + [0] * (len(b) - len(a))
    elif len(b) < len(a):
        b = b + [0] * (len(a) - len(b))
    diffs = tuple(abs(x - y) for x, y in zip(a, b))
    return GapReport(candidate.peak_stage_memory, exact.peak_stage_memory, gap, diffs)
