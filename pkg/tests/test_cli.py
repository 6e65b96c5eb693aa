import json

import pytest

from pipesched import load_graph, load_schedule, save_graph
from pipesched.cli import main
from pipesched.graph import ComputeDag


@pytest.fixture
def chain_file(tmp_path):
    dag = ComputeDag.build(
        [("n0", 4), ("n1", 2), ("n2", 2), ("n3", 4)],
        [(0, 1), (1, 2), (2, 3)],
        name="chain4224",
    )
    p = tmp_path / "chain.json"
    save_graph(dag, p)
    return p


def test_sample_writes_deterministic_files(tmp_path, capsys):
    a = tmp_path / "a"
    b = tmp_path / "b"
    for out in (a, b):
        rc = main(["sample", "--nodes", "8", "--degree", "2",
                   "--count", "3", "--seed", "11", "--out", str(out)])
        assert rc == 0
    names = sorted(p.name for p in a.glob("*.json"))
    assert names == ["graph_00000.json", "graph_00001.json", "graph_00002.json"]
    for name in names:
        assert (a / name).read_bytes() == (b / name).read_bytes()
        dag = load_graph(a / name)
        assert len(dag) == 8


def test_schedule_exact_chain(chain_file, tmp_path, capsys):
    out = tmp_path / "sched.json"
    rc = main(["schedule", "--graph", str(chain_file),
               "--stages", "2", "--out", str(out)])
    assert rc == 0
    assert "peak 6 bytes" in capsys.readouterr().out
    sched, obj = load_schedule(out)
    assert sched.stage_of == (0, 0, 1, 1)
    assert obj.peak_stage_memory == 6


def test_schedule_single_stage(chain_file, tmp_path):
    out = tmp_path / "sched.json"
    rc = main(["schedule", "--graph", str(chain_file),
               "--stages", "1", "--method", "heuristic", "--out", str(out)])
    assert rc == 0
    _, obj = load_schedule(out)
    assert obj.peak_stage_memory == 12


def test_schedule_rl_requires_checkpoint(chain_file, tmp_path, capsys):
    rc = main(["schedule", "--graph", str(chain_file), "--stages", "2",
               "--method", "rl", "--out", str(tmp_path / "s.json")])
    assert rc == 2
    assert "requires --checkpoint" in capsys.readouterr().err


def test_schedule_missing_graph_exits_2(tmp_path, capsys):
    rc = main(["schedule", "--graph", str(tmp_path / "absent.json"),
               "--stages", "2", "--out", str(tmp_path / "s.json")])
    assert rc == 2
    assert "error:" in capsys.readouterr().err


def test_schedule_infeasible_stage_count(chain_file, tmp_path, capsys):
    rc = main(["schedule", "--graph", str(chain_file),
               "--stages", "9", "--out", str(tmp_path / "s.json")])
    assert rc == 2


def test_oracle_check_reports_zero_mismatches(capsys):
    rc = main(["oracle-check", "--max-nodes", "6", "--trials", "25", "--seed", "1"])
    assert rc == 0
    assert "0 mismatches over 25 trials" in capsys.readouterr().out


def test_train_and_evaluate_round_trip(tmp_path, capsys):
    cfg = {
        "epochs": 1,
        "learning_rate": 1e-3,
        "batch_size": 4,
        "degrees": [2],
        "graphs_per_degree": 8,
        "num_stages": 2,
        "num_nodes": 6,
        "hidden_dim": 8,
        "seed": 3,
        "val_size": 2,
    }
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(cfg))
    ckpt = tmp_path / "ck.bin"
    metrics = tmp_path / "m.jsonl"
    rc = main(["train", "--config", str(cfg_path),
               "--checkpoint", str(ckpt), "--metrics", str(metrics)])
    assert rc == 0
    assert ckpt.exists() and metrics.exists()

    data = tmp_path / "eval_graphs"
    main(["sample", "--nodes", "6", "--degree", "2", "--count", "4",
          "--seed", "5", "--out", str(data)])
    report_path = tmp_path / "report.json"
    rc = main(["evaluate", "--dataset", str(data), "--stages", "2",
               "--checkpoint", str(ckpt), "--out", str(report_path)])
    assert rc == 0
    report = json.loads(report_path.read_text())
    assert report["num_graphs"] == 4
    assert report["feasibility_rate"] == 1.0
