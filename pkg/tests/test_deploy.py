import numpy as np
import pytest

from pipesched import ComputeDag, SamplerConfig, cost_model, gap_to_optimal, repair_schedule, sample_dag
from pipesched.exact import Schedule, ScheduleObjective, objective_of
from pipesched.errors import FeasibilityError


def chain(mems):
    ops = [(f"n{i}", m) for i, m in enumerate(mems)]
    edges = [(i, i + 1) for i in range(len(mems) - 1)]
    return ComputeDag.build(ops, edges)


class TestRepairSchedule:
    def test_feasible_no_shared_children_unchanged(self):
        dag = chain([1, 1, 1])
        sched = Schedule((0, 1, 2), 3)
        assert repair_schedule(sched, dag) == sched

    def test_dependency_pushes_child_forward(self):
        # backwards edge (0, 2) with stages [2, .., 1]; padding nodes keep
        # the lower stages occupied so no renumbering kicks in
        dag = ComputeDag.build(
            [("u", 1), ("p0", 1), ("p1", 1), ("v", 1)],
            [(0, 3)],
        )
        sched = Schedule((2, 0, 1, 1), 3)
        out = repair_schedule(sched, dag)
        assert out.stage_of[3] == out.stage_of[0] == 2

    def test_empty_stage_renumbered(self):
        dag = ComputeDag.build([("a", 1), ("b", 1)], [(0, 1)])
        out = repair_schedule(Schedule((2, 1), 3), dag)
        # child pushed to stage 2, single nonempty stage renumbered to 0
        assert out.num_stages == 1
        assert out.stage_of == (0, 0)

    def test_costage_fanout_then_push(self):
        # parent at stage 2 with children at stages 3 and 1: children unify on
        # stage 1, then the dependency rule pushes both to the parent's stage
        dag = ComputeDag.build(
            [("a", 1), ("b", 1), ("c", 1), ("f0", 1), ("f1", 1), ("f2", 1), ("f3", 1)],
            [(0, 1), (0, 2)],
        )
        sched = Schedule((2, 3, 1, 0, 1, 2, 3), 4)
        out = repair_schedule(sched, dag)
        assert out.stage_of[1] == out.stage_of[2]
        assert out.stage_of[1] >= out.stage_of[0]

    def test_dependency_feasible_after_random_perturbation(self):
        rng = np.random.default_rng(0)
        for _ in range(1000):
            dag = sample_dag(SamplerConfig(
                num_nodes=10, max_degree=3, seed=int(rng.integers(0, 2**32))))
            n = int(rng.integers(1, 5))
            sched = Schedule(tuple(int(s) for s in rng.integers(0, n, size=10)), n)
            out = repair_schedule(sched, dag)
            for u, v in dag.edges:
                assert out.stage_of[u] <= out.stage_of[v]
            assert set(out.stage_of) == set(range(out.num_stages))

    def test_idempotent(self):
        rng = np.random.default_rng(1)
        for _ in range(300):
            dag = sample_dag(SamplerConfig(
                num_nodes=8, max_degree=2, seed=int(rng.integers(0, 2**32))))
            sched = Schedule(tuple(int(s) for s in rng.integers(0, 3, size=8)), 3)
            once = repair_schedule(sched, dag)
            twice = repair_schedule(once, dag)
            assert once == twice


class TestCostModel:
    def test_at_cache_boundary_no_offcache(self):
        cache = 8 * 1024 * 1024
        dag = chain([cache, 1])
        sched = Schedule((0, 1), 2)
        report = cost_model(sched, dag, cache_bytes=cache)
        assert report.off_cache[0] == 0
        assert report.on_cache[0] == cache

    def test_infeasible_rejected(self):
        dag = chain([1, 1])
        with pytest.raises(FeasibilityError):
            cost_model(Schedule((1, 0), 2), dag)

    def test_cache_fitting_beats_spilling(self):
        mib = 1024 * 1024
        fits = chain([6 * mib, 6 * mib])
        spills = chain([12 * mib, 1 * mib])
        sched = Schedule((0, 1), 2)
        assert (cost_model(sched, fits).pipeline_latency
                < cost_model(sched, spills).pipeline_latency)

    def test_monotone_in_stage_memory(self):
        base = cost_model(Schedule((0, 1), 2), chain([100, 50]))
        bigger = cost_model(Schedule((0, 1), 2), chain([200, 50]))
        assert bigger.pipeline_latency >= base.pipeline_latency


class TestGapToOptimal:
    def test_identical_schedules_zero_gap(self):
        obj = ScheduleObjective(10, (10, 7))
        report = gap_to_optimal(obj, obj)
        assert report.relative_gap == 0.0
        assert report.per_stage_abs_diff == (0, 0)

    def test_ten_percent(self):
        report = gap_to_optimal(ScheduleObjective(11, (11,)), ScheduleObjective(10, (10,)))
        assert report.relative_gap == pytest.approx(0.10)

    def test_per_stage_sorted_descending_diff(self):
        cand = ScheduleObjective(9, (3, 9, 5))
        exact = ScheduleObjective(8, (8, 4, 5))
        report = gap_to_optimal(cand, exact)
        assert report.per_stage_abs_diff == (1, 0, 1)

    def test_mismatched_stage_counts_padded(self):
        cand = ScheduleObjective(9, (9,))
        exact = ScheduleObjective(5, (5, 4))
        report = gap_to_optimal(cand, exact)
        assert report.per_stage_abs_diff == (4, 4)
