import csv
import json
import subprocess
import sys

import pytest

from xconflict.cli import EXIT_CONFLICTS, EXIT_FAILURE, EXIT_OK, EXIT_USAGE, main
from xconflict.model import ground_truth_graph


def run(*argv):
    return main([str(a) for a in argv])


def metrics_of(path):
    lines = [l for l in path.read_text().splitlines() if not l.startswith("#")]
    return {r["target"]: r for r in csv.DictReader(lines)}


def test_generate_is_deterministic(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert run("generate", "--scenario", "default", "--samples", 450, "--seed", 7, "--out", a) == EXIT_OK
    assert run("generate", "--samples", 450, "--seed", 7, "--out", b) == EXIT_OK
    assert a.read_bytes() == b.read_bytes()
    assert len(a.read_text().splitlines()) == 451
    manifest = json.loads((tmp_path / "a.manifest.json").read_text())
    assert manifest["seed"] == 7 and "a.csv" in manifest["artifacts"]


def test_missing_scenario_is_usage_error(tmp_path, capsys):
    missing = tmp_path / "absent.toml"
    assert run("generate", "--scenario", missing, "--out", tmp_path / "d.csv") == EXIT_USAGE
    assert str(missing) in capsys.readouterr().err


def test_bad_flags_are_usage_errors(tmp_path):
    assert run("pipeline", "--threshold", "1.5") == EXIT_USAGE
    assert run("pipeline", "--lr", "0", "--out-dir", tmp_path) == EXIT_USAGE
    assert run("nonsense") == EXIT_USAGE


def test_output_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("XCONFLICT_OUT", str(tmp_path / "env"))
    assert run("generate", "--samples", 10) == EXIT_OK
    assert (tmp_path / "env" / "dataset.csv").exists()


@pytest.fixture(scope="module")
def pipeline_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("pipe")
    assert main(["pipeline", "--samples", "450", "--epochs", "600", "--seed", "0", "--out-dir", str(out)]) == 0
    return out


def test_pipeline_artifacts(pipeline_dir):
    names = {p.name for p in pipeline_dir.iterdir()}
    for want in ("dataset.csv", "adjacency.csv", "correlation.csv", "graph.dot", "graph.edgelist",
                 "report.csv", "report.txt", "metrics.csv", "loss.csv", "model.json", "manifest.json"):
        assert want in names
    manifest = json.loads((pipeline_dir / "manifest.json").read_text())
    assert manifest["hyperparameters"]["learning_rate"] == 0.001
    assert manifest["hyperparameters"]["threshold"] == 0.5
    for name, entry in manifest["artifacts"].items():
        assert len(entry["sha256"]) == 64
    assert len((pipeline_dir / "loss.csv").read_text().splitlines()) == 601
    assert set(metrics_of(pipeline_dir / "metrics.csv")) == {"edges", "direct", "implicit", "indirect"}


def test_pipeline_defaults_follow_reported_settings():
    from xconflict.cli import build_parser
    args = build_parser().parse_args(["pipeline"])
    assert (args.epochs, args.lr, args.threshold) == (1000, 0.001, 0.5)


def test_short_training_is_degraded(tmp_path, pipeline_dir):
    assert run("pipeline", "--epochs", 10, "--out-dir", tmp_path) == EXIT_OK
    short = metrics_of(tmp_path / "metrics.csv")["edges"]
    long = metrics_of(pipeline_dir / "metrics.csv")["edges"]
    assert float(short["f1"]) < float(long["f1"])
    assert int(short["fp"]) > 0


def test_threshold_monotone_on_same_model(tmp_path, pipeline_dir):
    counts = []
    for t in (0.1, 0.5, 0.9):
        out = tmp_path / str(t)
        assert run("reconstruct", "--dataset", pipeline_dir / "dataset.csv", "--model",
                   pipeline_dir / "model.json", "--threshold", t, "--out-dir", out) == EXIT_OK
        rows = list(csv.reader((out / "adjacency.csv").read_text().splitlines()))[1:]
        counts.append(sum(int(v) for r in rows for v in r[1:]))
    assert counts == sorted(counts, reverse=True)


def test_train_then_reconstruct_matches_pipeline(tmp_path, pipeline_dir):
    assert run("train", "--dataset", pipeline_dir / "dataset.csv", "--epochs", 600,
               "--out-dir", tmp_path) == EXIT_OK
    assert (tmp_path / "model.json").read_bytes() == (pipeline_dir / "model.json").read_bytes()
    assert run("reconstruct", "--dataset", pipeline_dir / "dataset.csv", "--model", tmp_path / "model.json",
               "--out-dir", tmp_path) == EXIT_OK
    assert (tmp_path / "graph.edgelist").read_bytes() == (pipeline_dir / "graph.edgelist").read_bytes()


def test_label_ground_truth(tmp_path, scenario, capsys):
    el = tmp_path / "truth.edgelist"
    el.write_text(ground_truth_graph(scenario).to_edgelist())
    assert run("label", el, "--out-dir", tmp_path / "lab") == EXIT_OK
    text = capsys.readouterr().out
    assert "1 direct, 4 implicit, 15 indirect" in text
    assert (tmp_path / "lab" / "report.csv").exists()
    assert run("label", el, "--fail-on-conflict") == EXIT_CONFLICTS


def test_label_empty_edgelist_finds_direct_only(tmp_path, capsys):
    el = tmp_path / "empty.edgelist"
    el.write_text("")
    assert run("label", el) == EXIT_OK
    assert "1 direct, 0 implicit, 0 indirect" in capsys.readouterr().out


def test_label_no_conflicts_exit_zero_even_with_flag(tmp_path):
    scen = tmp_path / "s.toml"
    from xconflict.model import load_scenario, scenario_to_toml
    text = scenario_to_toml(load_scenario("default")).split("[[xapps]]")[0]
    scen.write_text(text)
    el = tmp_path / "e.edgelist"
    el.write_text("P1 K1\n")
    assert run("label", el, "--scenario", scen, "--fail-on-conflict") == EXIT_OK


def test_label_parse_errors(tmp_path, capsys):
    bad = tmp_path / "bad.edgelist"
    bad.write_text("P1 K1\n\nP2\n")
    assert run("label", bad) == EXIT_USAGE
    assert "bad.edgelist:3" in capsys.readouterr().err
    unknown = tmp_path / "unknown.edgelist"
    unknown.write_text("P1 K9\n")
    assert run("label", unknown) == EXIT_USAGE
    assert "K9" in capsys.readouterr().err
    pp = tmp_path / "pp.edgelist"
    pp.write_text("P1 P2\n")
    assert run("label", pp) == EXIT_USAGE


def test_evaluate_truth_scores_one(tmp_path, scenario, capsys):
    el = tmp_path / "t.edgelist"
    el.write_text(ground_truth_graph(scenario).to_edgelist())
    assert run("evaluate", el) == EXIT_OK
    last = capsys.readouterr().out.splitlines()[-4:]
    assert all(line.endswith(",1,1,1") for line in last)


@pytest.mark.parametrize("fmt, first", [("dot", "graph conflicts {"), ("csv", ",P1,P2"), ("edgelist", "P1 K1")])
def test_export_formats(fmt, first, capsys):
    assert run("export", "--format", fmt) == EXIT_OK
    assert capsys.readouterr().out.splitlines()[0].startswith(first)


def test_sweep_command_and_resume(tmp_path, capsys):
    cfg = tmp_path / "s.toml"
    cfg.write_text(
        f'output_dir = "{tmp_path / "sw"}"\nbaseline_seeds = 20\n'
        "[axes]\nepochs = [5, 10]\nsamples = [30]\nthresholds = [0.5]\nseeds = [0, 1]\n"
    )
    assert run("sweep", cfg) == EXIT_OK
    first = (tmp_path / "sw" / "results.csv").read_bytes()
    assert run("sweep", cfg) == EXIT_OK
    assert (tmp_path / "sw" / "results.csv").read_bytes() == first
    assert (tmp_path / "sw" / "aggregate.csv").exists()


def test_sweep_empty_axes_rejected(tmp_path):
    cfg = tmp_path / "s.toml"
    cfg.write_text("[axes]\nepochs = []\nsamples = [30]\nthresholds = [0.5]\nseeds = [0]\n")
    assert run("sweep", cfg) == EXIT_USAGE


def test_sweep_failures_exit_nonzero(tmp_path, capsys):
    cfg = tmp_path / "s.toml"
    cfg.write_text(
        f'output_dir = "{tmp_path / "sw"}"\nbaseline_seeds = 0\n'
        "[axes]\nepochs = [5]\nsamples = [1]\nthresholds = [0.5]\nseeds = [0]\n"
    )
    assert run("sweep", cfg) == EXIT_FAILURE
    assert "1 cells failed" in capsys.readouterr().err


def test_console_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "xconflict.cli", "--version"], capture_output=True, text=True)
    assert out.returncode == 0 and out.stdout.startswith("xconflict ")
