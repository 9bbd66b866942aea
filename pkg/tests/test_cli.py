import json
import subprocess
import sys

import numpy as np
import pytest

from modrecon.cli import main
from modrecon.graph import load_assignment
from modrecon.metrics import accuracy, modularity_score, nmi
from modrecon.report import read_metrics_csv

from conftest import DATA, dataset

KARATE = ["--edges", str(DATA / "karate" / "edges.txt"), "--labels", str(DATA / "karate" / "labels.txt")]


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def karate_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("train")
    code = run("train", *KARATE, "--seeds", "0..1", "--epochs", "15", "--k", "2", "--out", out)
    assert code == 0
    return out


def test_train_writes_artifacts(karate_run):
    names = {p.name for p in karate_run.iterdir()}
    for f in ("report.json", "metrics.csv", "timings.csv", "config.txt", "checkpoint_seed0.npz",
              "checkpoint_seed1.npz", "assignment_seed0.txt", "embedding_seed1.npy"):
        assert f in names
    report = json.loads((karate_run / "report.json").read_text())
    assert [s["seed"] for s in report["seeds"]] == [0, 1]
    assert "best" in report["summary"]["NMI"]
    assert len(report["seeds"][0]["loss_trace"]) > 0


def test_metrics_recomputable_from_assignments(karate_run):
    g = dataset("karate")
    rows = read_metrics_csv(karate_run / "metrics.csv")
    for row in rows:
        labels = load_assignment(karate_run / f"assignment_seed{row['seed']}.txt", g)
        assert row["Q"] == modularity_score(g, labels)
        assert row["NMI"] == nmi(labels, g.labels)
        assert row["AC"] == accuracy(labels, g.labels)


def test_timings_csv(karate_run):
    lines = (karate_run / "timings.csv").read_text().splitlines()
    assert lines[0] == "phase,seed,seconds"
    assert {l.split(",")[0] for l in lines[1:]} >= {"load", "train", "cluster"}


def test_train_is_reproducible(karate_run, tmp_path):
    assert run("train", "--config", karate_run / "config.txt", "--out", tmp_path) == 0
    assert (tmp_path / "report.json").read_text() == (karate_run / "report.json").read_text()


def test_eval_same_checkpoint_twice(karate_run, tmp_path):
    ck = karate_run / "checkpoint_seed0.npz"
    assert run("eval", *KARATE, "--k", "2", "--checkpoint", ck, "--out", tmp_path / "a") == 0
    assert run("eval", *KARATE, "--k", "2", "--checkpoint", ck, "--out", tmp_path / "b") == 0
    a, b = ((tmp_path / d / "report.json").read_text() for d in "ab")
    assert a == b
    # eval re-embeds with the same stream as training, so the assignment matches
    assert (tmp_path / "a" / "eval_assignment_seed0.txt").read_text() == \
        (karate_run / "assignment_seed0.txt").read_text()


def test_eval_run_dir_sweep(karate_run, tmp_path):
    assert run("eval", *KARATE, "--k-range", "2..5", "--run-dir", karate_run, "--out", tmp_path) == 0
    report = json.loads((tmp_path / "report.json").read_text())
    assert len(report["seeds"]) == 2
    for s in report["seeds"]:
        assert [r["k"] for r in s["sweep"]] == [2, 3, 4, 5]
        assert s["k"] == max(s["sweep"], key=lambda r: r["Q"])["k"]
    assert (tmp_path / "eval_sweep_seed0.csv").exists()


def test_k_one_rejected(karate_run, tmp_path, capsys):
    code = run("eval", *KARATE, "--k", "1", "--checkpoint", karate_run / "checkpoint_seed0.npz", "--out", tmp_path)
    assert code == 2 and "k must be >= 2" in capsys.readouterr().err


def test_new_nodes(karate_run, tmp_path, capsys):
    rec = tmp_path / "new.jsonl"
    rec.write_text('{"id": "a", "stubs": [1, 2, 3]}\n{"id": "b", "stubs": [33, 32]}\n')
    code = run("eval", *KARATE, "--k", "2", "--checkpoint", karate_run / "checkpoint_seed0.npz",
               "--new-nodes", rec, "--out", tmp_path / "o")
    assert code == 0
    rows = [json.loads(l) for l in (tmp_path / "o" / "new_nodes.jsonl").read_text().splitlines()]
    assert [r["id"] for r in rows] == ["a", "b"]
    assert all(r["community"] in (0, 1) and r["latency_microseconds"] > 0 for r in rows)


def test_new_nodes_unknown_stub(karate_run, tmp_path, capsys):
    rec = tmp_path / "new.json"
    rec.write_text('[{"id": 0, "stubs": [1]}, {"id": 1, "stubs": [99]}]')
    code = run("eval", *KARATE, "--k", "2", "--checkpoint", karate_run / "checkpoint_seed0.npz",
               "--new-nodes", rec, "--out", tmp_path / "o")
    assert code == 2 and "record 2" in capsys.readouterr().err


def test_untrained_run_flagged(tmp_path):
    assert run("train", *KARATE, "--epochs", "0", "--k", "2", "--out", tmp_path) == 0
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["seeds"][0]["untrained"] is True
    assert any("untrained" in n for n in report["notes"])


def test_missing_labels_still_scores_q(tmp_path, capsys):
    code = run("train", "--edges", DATA / "karate" / "edges.txt", "--epochs", "5", "--k", "2", "--out", tmp_path)
    assert code == 0
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["seeds"][0]["Q"] is not None and report["seeds"][0]["NMI"] is None
    assert any("no labels" in e for e in report["errors"])
    assert "no labels" in capsys.readouterr().err


def test_config_error_has_line(tmp_path, capsys):
    cfg = tmp_path / "c.txt"
    cfg.write_text("model = twostage\nepochs = many\n")
    assert run("train", "--config", cfg, "--out", tmp_path) == 2
    assert "c.txt:2:" in capsys.readouterr().err


def test_bad_edge_file(tmp_path, capsys):
    e = tmp_path / "e.txt"
    e.write_text("1 2\n3\n")
    assert run("train", "--edges", e, "--k", "2", "--out", tmp_path / "o") == 2
    assert "e.txt:2" in capsys.readouterr().err


def test_gae_and_onestage_train(tmp_path):
    for kind in ("gae", "onestage"):
        assert run("train", *KARATE, "--model", kind, "--epochs", "5", "--k", "2", "--out", tmp_path / kind) == 0
        assert run("eval", *KARATE, "--k", "2", "--run-dir", tmp_path / kind, "--out", tmp_path / (kind + "e")) == 0
        a = json.loads((tmp_path / kind / "report.json").read_text())["seeds"][0]["Q"]
        b = json.loads((tmp_path / (kind + "e") / "report.json").read_text())["seeds"][0]["Q"]
        assert a == b


def test_infer_bench_rejects_zero_split(capsys):
    assert run("infer-bench", *KARATE, "--layer-dims", "8,4,4", "--split-fraction", "0") == 2
    assert "split_fraction" in capsys.readouterr().err


def test_infer_bench_small(tmp_path, capsys):
    code = run("infer-bench", "--n-synthetic", "300", "--epochs", "2", "--layer-dims", "8,4,4",
               "--neighbor-samples", "3", "--k", "10", "--out", tmp_path)
    assert code == 0
    out = capsys.readouterr().out
    for name in ("plain-1", "apam-1", "plain-2", "apam-2", "plain-3"):
        assert name in out


def test_scaling_rejects_repeated_sizes(capsys):
    assert run("scaling", "--n-list", "100,100,100") == 2


def test_scaling_small(tmp_path):
    assert run("scaling", "--n-list", "100,200,400", "--repeats", "1", "--out", tmp_path) == 0
    assert (tmp_path / "slopes.csv").read_text().startswith("kind,slope\ntwostage,")


def test_gradcheck(tmp_path, capsys):
    assert run("gradcheck", "--instances", "2", "--out", tmp_path) == 0
    assert "0 failed" in capsys.readouterr().out


def test_console_entry_point():
    res = subprocess.run([sys.executable, "-m", "modrecon", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    for verb in ("train", "eval", "infer-bench", "scaling", "gradcheck"):
        assert verb in res.stdout
