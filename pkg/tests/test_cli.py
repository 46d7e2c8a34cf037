import json
import os
import subprocess
import sys

import numpy as np
import pytest

from mpcolor import cli
from mpcolor.cli import main
from mpcolor.gnn import GnnModel
from mpcolor.graph import conflict_count
from mpcolor.instances import (
    export_coloring,
    export_edgelist,
    generate_corpus,
    generate_planted,
    import_coloring,
    load_corpus,
)
from mpcolor.training import TrainingDiverged


@pytest.fixture(scope="module")
def ws(tmp_path_factory):
    """Workspace with a small corpus, a trained checkpoint, and instance files."""
    root = tmp_path_factory.mktemp("cli")
    corpus_dir = root / "corpus"
    generate_corpus(out_dir=corpus_dir, count=4, n_range=(6, 9), k=3, density=0.4, seed=5)

    train_dir = root / "train"
    rc = main(["train", "--corpus", str(corpus_dir / "manifest.json"),
               "--epochs", "2", "--seed", "0", "--out", str(train_dir)])
    assert rc == 0

    g, witness = generate_planted(8, 3, 0.4, 77)
    instance = root / "inst.graph"
    instance.write_text(export_edgelist(g))
    coloring = root / "inst.colors"
    coloring.write_text(export_coloring(witness))
    bad = root / "bad.colors"
    bad.write_text(export_coloring(np.zeros(8, dtype=np.int64)))

    dimacs = root / "inst.col"
    lines = [f"p edge {g.node_count} {g.edge_count}"]
    lines += [f"e {u + 1} {v + 1}" for u, v in g.edges]
    dimacs.write_text("\n".join(lines) + "\n")

    return {
        "root": root,
        "manifest": corpus_dir / "manifest.json",
        "model": train_dir / "model.json",
        "train_dir": train_dir,
        "instance": instance,
        "dimacs": dimacs,
        "coloring": coloring,
        "bad_coloring": bad,
        "graph": g,
    }


class TestParsing:
    def test_missing_command_exits(self):
        with pytest.raises(SystemExit):
            main([])

    def test_unknown_command_exits(self):
        with pytest.raises(SystemExit):
            main(["optimize"])

    def test_console_script_help(self):
        proc = subprocess.run([sys.executable, "-m", "mpcolor.cli", "--help"],
                              capture_output=True, text=True)
        assert proc.returncode == 0
        for name in ("generate", "train", "solve", "bench", "verify", "serve"):
            assert name in proc.stdout


class TestConfigMerging:
    def test_missing_config_file(self, tmp_path):
        assert main(["generate", "--config", str(tmp_path / "nope.json")]) == 2

    def test_config_not_json(self, tmp_path):
        p = tmp_path / "cfg.json"
        p.write_text("{broken")
        assert main(["generate", "--config", str(p)]) == 2

    def test_config_root_must_be_object(self, tmp_path):
        p = tmp_path / "cfg.json"
        p.write_text("[1, 2]")
        assert main(["generate", "--config", str(p)]) == 2

    def test_flags_override_config(self, tmp_path):
        p = tmp_path / "cfg.json"
        p.write_text(json.dumps({"count": 2, "n_min": 5, "n_max": 6, "seed": 3}))
        out = tmp_path / "c"
        rc = main(["generate", "--config", str(p), "--count", "5", "--out", str(out)])
        assert rc == 0
        manifest, _ = load_corpus(out / "manifest.json")
        assert len(manifest.entries) == 5

    def test_out_under_file_is_io_error(self, tmp_path):
        blocker = tmp_path / "blocker"
        blocker.write_text("x")
        assert main(["generate", "--count", "1", "--n-min", "5", "--n-max", "5",
                     "--out", str(blocker / "sub")]) == 3


class TestGenerate:
    def test_writes_corpus_and_run_config(self, tmp_path, capsys):
        out = tmp_path / "c"
        rc = main(["generate", "--count", "3", "--n-min", "6", "--n-max", "8",
                   "--seed", "9", "--out", str(out)])
        assert rc == 0
        assert "wrote 3 instances" in capsys.readouterr().out
        manifest, graphs = load_corpus(out / "manifest.json")
        assert len(graphs) == 3
        assert all(6 <= g.node_count <= 8 for g in graphs)
        run_cfg = json.loads((out / "run_config.json").read_text())
        assert run_cfg["command"] == "generate"
        assert run_cfg["seed"] == 9

    def test_deterministic_across_directories(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        for out in (a, b):
            assert main(["generate", "--count", "3", "--n-min", "6", "--n-max", "8",
                         "--seed", "4", "--out", str(out)]) == 0
        assert (a / "manifest.json").read_bytes() == (b / "manifest.json").read_bytes()
        assert (a / "g0000.graph").read_bytes() == (b / "g0000.graph").read_bytes()


class TestTrain:
    def test_artifacts(self, ws):
        assert ws["model"].exists()
        history = (ws["train_dir"] / "history.csv").read_text().strip().splitlines()
        assert history[0].startswith("epoch,")
        assert len(history) == 3  # header + 2 epochs
        _, meta = GnnModel.load(ws["model"])
        assert meta["epochs_trained"] == 2
        assert meta["stage"] == "both"

    def test_resume_extends_history(self, ws, tmp_path):
        out = tmp_path / "t"
        args = ["train", "--corpus", str(ws["manifest"]), "--epochs", "2",
                "--seed", "0", "--out", str(out)]
        assert main(args) == 0
        assert main(args + ["--resume"]) == 0
        _, meta = GnnModel.load(out / "model.json")
        assert meta["epochs_trained"] == 4
        history = (out / "history.csv").read_text().strip().splitlines()
        assert len(history) == 5
        assert [row.split(",")[0] for row in history[1:]] == ["0", "1", "2", "3"]

    def test_resume_requires_checkpoint(self, ws, tmp_path):
        assert main(["train", "--corpus", str(ws["manifest"]), "--epochs", "1",
                     "--out", str(tmp_path / "x"), "--resume"]) == 2

    def test_k_contradiction(self, ws, tmp_path):
        assert main(["train", "--corpus", str(ws["manifest"]), "--epochs", "1",
                     "--k", "4", "--out", str(tmp_path / "x")]) == 2

    def test_corpus_and_instance_conflict(self, ws, tmp_path):
        assert main(["train", "--corpus", str(ws["manifest"]),
                     "--instance", str(ws["instance"]),
                     "--out", str(tmp_path / "x")]) == 2

    def test_needs_corpus_or_instance(self, tmp_path):
        assert main(["train", "--epochs", "1", "--out", str(tmp_path / "x")]) == 2

    def test_single_instance_mode(self, ws, tmp_path):
        out = tmp_path / "t"
        rc = main(["train", "--instance", str(ws["instance"]), "--epochs", "2",
                   "--seed", "1", "--out", str(out)])
        assert rc == 0
        model, meta = GnnModel.load(out / "model.json")
        assert model.cfg.k == 3
        assert meta["corpus_seed"] is None

    def test_stage_selection(self, ws, tmp_path):
        out = tmp_path / "t"
        rc = main(["train", "--corpus", str(ws["manifest"]), "--epochs", "2",
                   "--stage", "joint_init", "--out", str(out)])
        assert rc == 0
        _, meta = GnnModel.load(out / "model.json")
        assert meta["stage"] == "joint_init"

    def test_divergence_exit_code(self, ws, tmp_path, monkeypatch):
        def boom(*args, **kwargs):
            raise TrainingDiverged(3)
        monkeypatch.setattr(cli, "train_two_stage", boom)
        assert main(["train", "--corpus", str(ws["manifest"]), "--epochs", "1",
                     "--out", str(tmp_path / "x")]) == 4


class TestSolve:
    def test_corpus_solve_writes_outputs(self, ws, tmp_path, capsys):
        out = tmp_path / "s"
        rc = main(["solve", "--corpus", str(ws["manifest"]), "--model", str(ws["model"]),
                   "--passes", "2", "--seed", "1", "--out", str(out)])
        assert rc == 0
        assert "solved 4 instances" in capsys.readouterr().out
        report = json.loads((out / "solve_report.json").read_text())
        assert report["aggregate"]["count"] == 4
        manifest, graphs = load_corpus(ws["manifest"])
        for entry, g, row in zip(manifest.entries, graphs, report["rows"]):
            stem = entry.path.rsplit(".", 1)[0]
            colors = import_coloring((out / f"{stem}.colors").read_text(), g.node_count)
            assert conflict_count(g, colors) == row["conflicts"]

    def test_single_instance_solve(self, ws, tmp_path):
        out = tmp_path / "s"
        rc = main(["solve", "--instance", str(ws["instance"]), "--model", str(ws["model"]),
                   "--passes", "1", "--no-sa", "--out", str(out)])
        assert rc == 0
        assert (out / "inst.colors").exists()

    def test_dimacs_requires_k(self, ws, tmp_path):
        base = ["solve", "--instance", str(ws["dimacs"]), "--model", str(ws["model"]),
                "--passes", "1", "--out", str(tmp_path / "s")]
        assert main(base) == 2
        assert main(base + ["--k", "3"]) == 0

    def test_stage_alias(self, ws, tmp_path):
        out = tmp_path / "s"
        rc = main(["solve", "--instance", str(ws["instance"]), "--model", str(ws["model"]),
                   "--passes", "1", "--stage", "inference-only", "--out", str(out)])
        assert rc == 0
        report = json.loads((out / "solve_report.json").read_text())
        assert report["rows"][0]["stage"] == "inference"

    def test_unknown_stage(self, ws, tmp_path):
        assert main(["solve", "--instance", str(ws["instance"]), "--model", str(ws["model"]),
                     "--stage", "quantum", "--out", str(tmp_path / "s")]) == 2

    def test_missing_model(self, ws, tmp_path):
        assert main(["solve", "--instance", str(ws["instance"]),
                     "--model", str(tmp_path / "nope.json"),
                     "--out", str(tmp_path / "s")]) == 2

    def test_needs_input(self, ws, tmp_path):
        assert main(["solve", "--model", str(ws["model"]), "--out", str(tmp_path / "s")]) == 2


class TestBench:
    def test_baseline_only_needs_no_model(self, ws, tmp_path, capsys):
        out = tmp_path / "b"
        rc = main(["bench", "--corpus", str(ws["manifest"]), "--variants",
                   "dsatur,welsh_powell", "--pass-sweep", "", "--out", str(out)])
        assert rc == 0
        text = capsys.readouterr().out
        assert "dsatur" in text and "welsh_powell" in text
        assert (out / "bench_rows.csv").exists()
        assert (out / "bench_aggregates.csv").exists()
        assert not (out / "bench_sweep.csv").exists()
        data = json.loads((out / "bench.json").read_text())
        assert set(data["aggregates"]) == {"dsatur", "welsh_powell"}

    def test_pipeline_variants_and_sweep(self, ws, tmp_path, capsys):
        out = tmp_path / "b"
        rc = main(["bench", "--corpus", str(ws["manifest"]), "--model", str(ws["model"]),
                   "--variants", "dsatur,full+sa", "--pass-sweep", "1,2",
                   "--passes", "1", "--out", str(out)])
        assert rc == 0
        assert "passes   1" in capsys.readouterr().out
        sweep = (out / "bench_sweep.csv").read_text().strip().splitlines()
        assert len(sweep) == 3

    def test_invalid_variant(self, ws, tmp_path):
        assert main(["bench", "--corpus", str(ws["manifest"]), "--variants", "magic",
                     "--pass-sweep", "", "--out", str(tmp_path / "b")]) == 2

    def test_default_sweep_requires_model(self, ws, tmp_path):
        assert main(["bench", "--corpus", str(ws["manifest"]), "--variants", "dsatur",
                     "--out", str(tmp_path / "b")]) == 2


class TestVerify:
    def test_good_coloring(self, ws, capsys):
        rc = main(["verify", "--instance", str(ws["instance"]),
                   "--coloring", str(ws["coloring"])])
        assert rc == 0
        assert "conflicts=0" in capsys.readouterr().out

    def test_bad_coloring(self, ws, capsys):
        rc = main(["verify", "--instance", str(ws["instance"]),
                   "--coloring", str(ws["bad_coloring"])])
        assert rc == 1
        assert "conflicts=" in capsys.readouterr().out

    def test_missing_coloring_file(self, ws, tmp_path):
        assert main(["verify", "--instance", str(ws["instance"]),
                     "--coloring", str(tmp_path / "nope.colors")]) == 2

    def test_selfcheck(self, capsys):
        rc = main(["verify", "--count", "3", "--n-max", "6", "--seed", "1"])
        assert rc == 0
        out = capsys.readouterr().out
        assert "5/5 checks passed" in out
        assert out.count("PASS") == 5


class TestServe:
    def test_missing_checkpoint(self, tmp_path):
        assert main(["serve", "--model", str(tmp_path / "nope.json")]) == 2
