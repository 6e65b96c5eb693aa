import numpy as np
import pytest

from pipesched import (
    ComputeDag,
    SamplerConfig,
    brute_force_schedule,
    exact_schedule,
    label_sequence,
    load_schedule,
    objective_of,
    sample_dag,
    save_schedule,
)
from pipesched.exact import Schedule, check_feasible
from pipesched.errors import FeasibilityError, Infeasible, TooLarge


def chain(mems):
    ops = [(f"n{i}", m) for i, m in enumerate(mems)]
    edges = [(i, i + 1) for i in range(len(mems) - 1)]
    return ComputeDag.build(ops, edges)


def diamond(m):
    return ComputeDag.build(
        [("a", m), ("b", m), ("c", m), ("d", m)],
        [(0, 1), (0, 2), (1, 3), (2, 3)],
    )


class TestExactSchedule:
    def test_chain_4224(self):
        # feasible 2-stage chain cuts give peaks 8, 6, 8; optimum is the middle cut
        sched, obj = exact_schedule(chain([4, 2, 2, 4]), 2)
        assert sched.stage_of == (0, 0, 1, 1)
        assert obj.peak_stage_memory == 6

    def test_single_stage_is_total(self):
        dag = sample_dag(SamplerConfig(num_nodes=9, max_degree=3, seed=4))
        sched, obj = exact_schedule(dag, 1)
        assert set(sched.stage_of) == {0}
        assert obj.peak_stage_memory == dag.total_memory()

    def test_one_node_per_stage_on_chain(self):
        dag = chain([5, 9, 3, 7])
        sched, obj = exact_schedule(dag, 4)
        assert sched.stage_of == (0, 1, 2, 3)
        assert obj.peak_stage_memory == 9

    def test_infeasible_more_stages_than_nodes(self):
        with pytest.raises(Infeasible):
            exact_schedule(chain([1, 1]), 3)

    def test_deterministic(self):
        dag = sample_dag(SamplerConfig(num_nodes=12, max_degree=3, seed=21))
        a = exact_schedule(dag, 3)
        b = exact_schedule(dag, 3)
        assert a == b

    def test_monotone_in_stage_count(self):
        dag = sample_dag(SamplerConfig(num_nodes=10, max_degree=2, seed=8))
        peaks = [exact_schedule(dag, n)[1].peak_stage_memory for n in range(1, 6)]
        assert peaks == sorted(peaks, reverse=True)

    def test_lower_bounds(self):
        for seed in range(20):
            dag = sample_dag(SamplerConfig(num_nodes=10, max_degree=3, seed=seed))
            for n in (2, 3, 4):
                _, obj = exact_schedule(dag, n)
                total = dag.total_memory()
                assert obj.peak_stage_memory >= -(-total // n)
                assert obj.peak_stage_memory >= max(dag.memories())

    def test_feasible_output(self):
        for seed in range(20):
            dag = sample_dag(SamplerConfig(num_nodes=10, max_degree=4, seed=seed))
            sched, obj = exact_schedule(dag, 3)
            check_feasible(sched, dag)
            assert objective_of(sched, dag) == obj


class TestBruteForce:
    def test_single_node(self):
        dag = ComputeDag.build([("solo", 3)], [])
        sched, obj = brute_force_schedule(dag, 1)
        assert sched.stage_of == (0,)
        assert obj.peak_stage_memory == 3

    def test_diamond_equal_memories(self):
        # {a,b} | {c,d} keeps every edge monotone and balances at 10 each
        sched, obj = brute_force_schedule(diamond(5), 2)
        assert obj.peak_stage_memory == 10
        assert sched.stage_of == (0, 0, 1, 1)

    def test_size_guard(self):
        dag = sample_dag(SamplerConfig(num_nodes=13, max_degree=2, seed=0))
        with pytest.raises(TooLarge):
            brute_force_schedule(dag, 2)

    def test_agreement_with_exact(self):
        rng = np.random.default_rng(7)
        for _ in range(60):
            nv = int(rng.integers(2, 9))
            dag = sample_dag(SamplerConfig(
                num_nodes=nv, max_degree=int(rng.integers(1, min(4, nv))),
                seed=int(rng.integers(0, 2**32))))
            for n in (2, 3, 4):
                if n > nv:
                    continue
                _, e = exact_schedule(dag, n)
                _, b = brute_force_schedule(dag, n)
                assert e.peak_stage_memory == b.peak_stage_memory

    def test_tie_break_matches_exact(self):
        # both solvers return the lexicographically smallest optimal vector
        for seed in range(25):
            dag = sample_dag(SamplerConfig(num_nodes=7, max_degree=2, seed=seed))
            for n in (2, 3):
                es, _ = exact_schedule(dag, n)
                bs, _ = brute_force_schedule(dag, n)
                assert es.stage_of == bs.stage_of


class TestLabelSequence:
    def test_one_node_per_stage(self):
        dag = chain([1, 1, 1])
        sched = Schedule((0, 1, 2), 3)
        assert label_sequence(sched, dag) == [0, 1, 2]

    def test_single_stage_is_asap_order(self):
        dag = diamond(1)
        sched = Schedule((0, 0, 0, 0), 1)
        assert label_sequence(sched, dag) == [0, 1, 2, 3]

    def test_chain_example(self):
        dag = chain([4, 2, 2, 4])
        sched, _ = exact_schedule(dag, 2)
        assert label_sequence(sched, dag) == [0, 1, 2, 3]

    def test_infeasible_schedule_rejected(self):
        dag = chain([1, 1])
        with pytest.raises(FeasibilityError):
            label_sequence(Schedule((1, 0), 2), dag)


class TestScheduleFile:
    def test_round_trip(self, tmp_path):
        dag = sample_dag(SamplerConfig(num_nodes=8, max_degree=2, seed=3))
        sched, obj = exact_schedule(dag, 3)
        p = tmp_path / "s.json"
        save_schedule(sched, obj, p)
        s2, o2 = load_schedule(p)
        assert s2 == sched
        assert o2 == obj
