import csv
import json

import pytest

from causalkt.cli import main


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    data, run, graph = root / "data", root / "run", root / "graph"
    assert main(["generate", "--skills", "5", "--students", "60", "--steps", "10", "--graph", "chain",
                 "--seed", "3", "--out", str(data)]) == 0
    config = root / "config.json"
    config.write_text(json.dumps({"epochs": 2, "batch_size": 16, "embedding_dim": 4}))
    assert main(["train", "--data", str(data), "--config", str(config), "--schedule-period-epochs", "1",
                 "--out", str(run)]) == 0
    assert main(["extract", "--checkpoint", str(run / "checkpoint.json"), "--kappa", "0.45",
                 "--out", str(graph)]) == 0
    return root


def test_generate_outputs(workspace):
    data = workspace / "data"
    world = json.loads((data / "world.json").read_text())
    assert world["num_skills"] == 5 and len(world["edges"]) == 4
    rows = list(csv.reader((data / "responses.csv").open()))
    assert rows[0] == ["user_id", "sequence", "skill_id", "is_correct"] and len(rows) == 1 + 60 * 10
    assert json.loads((data / "skill_index.json").read_text()) == {str(i): i for i in range(5)}


def test_train_outputs(workspace):
    run = workspace / "run"
    for name in ("checkpoint.json", "history.csv", "history.png", "metrics.json", "skill_index.json"):
        assert (run / name).exists(), name
    header = (run / "history.csv").read_text().splitlines()[0]
    assert header == "epoch,loss,hardness,L_sparsity,temperature,unroll"
    metrics = json.loads((run / "metrics.json").read_text())
    assert metrics["heldout_students"] == 6 and 0 <= metrics["heldout"]["auc"] <= 1
    ckpt = json.loads((run / "checkpoint.json").read_text())
    assert ckpt["config"]["schedule_period_epochs"] == 1 and ckpt["config"]["epochs"] == 2


def test_extract_outputs(workspace):
    graph = workspace / "graph"
    for name in ("edges.csv", "graph.dot", "ordering.json", "structure.png"):
        assert (graph / name).exists(), name
    order = json.loads((graph / "ordering.json").read_text())
    assert sorted(order["order"]) == [str(i) for i in range(5)] and order["kappa"] == 0.45
    assert (graph / "edges.csv").read_text().startswith("src_skill_id,dst_skill_id\n")


def test_evaluate_against_itself(workspace, capsys):
    world = str(workspace / "data" / "world.json")
    assert main(["evaluate", "--pred", world, "--truth", world]) == 0
    assert json.loads(capsys.readouterr().out) == {"precision": 1.0, "recall": 1.0, "f1": 1.0}


def test_evaluate_edge_list_against_world(workspace, capsys):
    assert main(["evaluate", "--pred", str(workspace / "graph" / "edges.csv"),
                 "--truth", str(workspace / "data" / "world.json")]) == 0
    scores = json.loads(capsys.readouterr().out)
    assert set(scores) == {"precision", "recall", "f1"}


def test_sweep_kappa(workspace, capsys, tmp_path):
    assert main(["sweep-kappa", "--checkpoint", str(workspace / "run" / "checkpoint.json"),
                 "--truth", str(workspace / "data" / "world.json"), "--grid", "0.40:0.55:0.05",
                 "--out", str(tmp_path)]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "kappa,precision,recall,f1"
    assert [line.split(",")[0] for line in lines[1:]] == ["0.4", "0.45", "0.5", "0.55"]
    assert (tmp_path / "kappa_sweep.csv").read_text().splitlines() == lines
    assert (tmp_path / "kappa_sweep.png").exists()


@pytest.mark.parametrize(
    "argv",
    [
        ["generate", "--skills", "3", "--bogus"],
        ["evaluate", "--pred", "missing.csv", "--truth", "missing.csv"],
        ["frobnicate"],
    ],
)
def test_errors_exit_nonzero(argv, capsys):
    assert main(argv) != 0
    assert capsys.readouterr().err


def test_malformed_grid(workspace, capsys):
    code = main(["sweep-kappa", "--checkpoint", str(workspace / "run" / "checkpoint.json"),
                 "--truth", str(workspace / "data" / "world.json"), "--grid", "0.4-0.5"])
    assert code != 0 and "grid" in capsys.readouterr().err


def test_kappa_out_of_range(workspace, tmp_path, capsys):
    code = main(["extract", "--checkpoint", str(workspace / "run" / "checkpoint.json"), "--kappa", "1.5",
                 "--out", str(tmp_path)])
    assert code != 0 and "kappa" in capsys.readouterr().err


def test_missing_data_directory(tmp_path, capsys):
    assert main(["train", "--data", str(tmp_path / "nope"), "--out", str(tmp_path / "o")]) != 0
    assert "error" in capsys.readouterr().err
