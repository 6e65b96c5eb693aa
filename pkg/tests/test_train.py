import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pipesched import (
    ComputeDag,
    SamplerConfig,
    TrainConfig,
    cosine_reward,
    evaluate,
    exact_schedule,
    label_sequence,
    sample_dag,
    seq_to_schedule,
    sequence_reward,
    train,
)
from pipesched.errors import Infeasible, ShapeError
from pipesched.policy import init_params
from pipesched.train import Adam


def chain(mems):
    ops = [(f"n{i}", m) for i, m in enumerate(mems)]
    edges = [(i, i + 1) for i in range(len(mems) - 1)]
    return ComputeDag.build(ops, edges)


class TestSeqToSchedule:
    def test_oracle_label_recovers_chain_split(self):
        dag = chain([4, 2, 2, 4])
        sched, _ = exact_schedule(dag, 2)
        gamma = label_sequence(sched, dag)
        out = seq_to_schedule(gamma, dag, 2)
        assert out.stage_of == (0, 0, 1, 1)

    def test_single_stage(self):
        dag = chain([3, 1, 2])
        out = seq_to_schedule([0, 1, 2], dag, 1)
        assert out.stage_of == (0, 0, 0)

    def test_identity_on_chain_full_stages(self):
        dag = chain([1, 1, 1, 1])
        out = seq_to_schedule([0, 1, 2, 3], dag, 4)
        assert out.stage_of == (0, 1, 2, 3)

    def test_all_stages_nonempty(self):
        rng = np.random.default_rng(3)
        for _ in range(200):
            dag = sample_dag(SamplerConfig(
                num_nodes=9, max_degree=3, seed=int(rng.integers(0, 2**32))))
            pi = rng.permutation(9)
            out = seq_to_schedule(list(pi), dag, 4)
            assert set(out.stage_of) == {0, 1, 2, 3}

    def test_too_few_nodes(self):
        dag = chain([1, 1])
        with pytest.raises(Infeasible):
            seq_to_schedule([0, 1], dag, 3)


class TestCosineReward:
    def test_identity(self):
        assert cosine_reward([0, 1, 1, 2], [0, 1, 1, 2]) == pytest.approx(1.0)

    def test_zero_vector(self):
        assert cosine_reward([0, 0, 0], [0, 1, 2]) == 0.0

    def test_known_value(self):
        expected = 7 / (np.sqrt(6) * 3)
        assert cosine_reward([0, 1, 1, 2], [0, 1, 2, 2]) == pytest.approx(expected, abs=1e-9)

    def test_length_mismatch(self):
        with pytest.raises(ShapeError):
            cosine_reward([0, 1], [0, 1, 2])

    @settings(max_examples=300, deadline=None)
    @given(st.lists(st.integers(min_value=0, max_value=7), min_size=1, max_size=12),
           st.data())
    def test_symmetric_and_bounded(self, a, data):
        b = data.draw(st.lists(st.integers(min_value=0, max_value=7),
                               min_size=len(a), max_size=len(a)))
        r = cosine_reward(a, b)
        assert r == pytest.approx(cosine_reward(b, a))
        assert 0.0 <= r <= 1.0 + 1e-12


class TestSequenceReward:
    def test_identity(self):
        assert sequence_reward([2, 0, 1], [2, 0, 1]) == pytest.approx(1.0)

    def test_two_elem_swap(self):
        assert sequence_reward([1, 2], [2, 1]) == pytest.approx(0.8)

    def test_three_perm_reversal(self):
        # direct formula: dot([0,1,2],[2,1,0]) = 1, norms sqrt(5) each
        assert sequence_reward([0, 1, 2], [2, 1, 0]) == pytest.approx(0.2)

    def test_length_mismatch(self):
        with pytest.raises(ShapeError):
            sequence_reward([0, 1, 2], [0, 1])


class TestAdam:
    def test_zero_gradient_no_change(self):
        params = init_params(8, 2, seed=0)
        before = params.copy()
        opt = Adam(params, lr=0.1)
        opt.step(params, params.zeros_like())
        for (_, a), (_, b) in zip(params.tensors(), before.tensors()):
            assert np.array_equal(a, b)

    def test_descends_simple_quadratic(self):
        params = init_params(4, 1, seed=0)
        opt = Adam(params, lr=0.05)
        for _ in range(200):
            grads = params.zeros_like()
            grads.dec0_input[:] = 2.0 * params.dec0_input  # d/dx of x^2
            opt.step(params, grads)
        assert np.all(np.abs(params.dec0_input) < 0.05)


def tiny_config(**overrides):
    base = dict(
        epochs=2,
        learning_rate=1e-3,
        batch_size=8,
        degrees=(2,),
        graphs_per_degree=12,
        num_stages=2,
        num_nodes=6,
        hidden_dim=12,
        seed=7,
        val_size=4,
    )
    base.update(overrides)
    return TrainConfig(**base)


class TestTrainLoop:
    def test_runs_and_reports_metrics(self, tmp_path):
        metrics_path = tmp_path / "metrics.jsonl"
        params, metrics = train(tiny_config(), metrics_path=metrics_path)
        assert len(metrics) == 2
        for rec in metrics:
            assert set(rec) >= {"epoch", "mean_reward", "val_reward",
                                "baseline_promoted", "wall_ms"}
        assert metrics_path.read_text().count("\n") == 2

    def test_deterministic_checkpoints(self, tmp_path):
        a = tmp_path / "a.bin"
        b = tmp_path / "b.bin"
        train(tiny_config(), checkpoint_path=a)
        train(tiny_config(), checkpoint_path=b)
        assert a.read_bytes() == b.read_bytes()


class TestEvaluate:
    def test_report_shape_and_feasibility(self):
        cfg = tiny_config()
        params, _ = train(cfg)
        dags = [sample_dag(SamplerConfig(num_nodes=6, max_degree=2, seed=s))
                for s in range(400, 406)]
        report = evaluate(params, dags, 2)
        assert report["num_graphs"] == 6
        assert report["feasibility_rate"] == 1.0
        assert set(report["mean_solve_ms"]) == {"rl", "exact", "heuristic"}
        assert report["per_degree_gap_pct"]  # per-degree breakdown present
        for rec in report["graphs"]:
            assert rec["peak_rl"] >= rec["peak_exact"] * 0.999
