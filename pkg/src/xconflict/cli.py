"""``xconflict`` command line.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error,
3 conflicts found (``label --fail-on-conflict`` only).
"""

from __future__ import annotations

import argparse
import contextlib
import hashlib
import json
import logging
import os
import platform
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__, kernels
from .evaluation import (
    KINDS,
    RunSettings,
    SweepConfigError,
    conflict_f1,
    edge_f1,
    load_sweep_config,
    metrics_csv,
    run_sweep,
)
from .graph import ConflictGraph, GraphError, read_edgelist
from .labeler import label_conflicts
from .model import ScenarioError, generate_dataset, ground_truth_graph, load_dataset, load_scenario
from .reconstruct import ReconstructedAdjacency, binarize, feature_correlation, inject_subscriptions
from .sage import ACTIVATIONS, forward, init_model, load_model, train
from .temporal import build_temporal_graph

EXIT_OK, EXIT_FAILURE, EXIT_USAGE, EXIT_CONFLICTS = 0, 1, 2, 3
OUT_ENV = "XCONFLICT_OUT"
DEFAULT_OUT = "xconflict-out"

log = logging.getLogger("xconflict")


class UsageError(Exception):
    """Bad flags, missing or invalid input files."""


class StageError(Exception):
    def __init__(self, stage: str, exc: BaseException):
        self.stage = stage
        super().__init__(f"stage '{stage}' failed: {exc}")


@contextlib.contextmanager
def stage(name: str):
    try:
        yield
    except (UsageError, StageError):
        raise
    except (ScenarioError, GraphError, SweepConfigError, FileNotFoundError) as exc:
        raise UsageError(f"stage '{name}': {exc}") from exc
    except Exception as exc:
        raise StageError(name, exc) from exc


def _out_dir(args) -> Path:
    out = Path(args.out_dir or os.environ.get(OUT_ENV) or DEFAULT_OUT)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write(path: Path, text: str, artifacts: dict) -> Path:
    path.write_text(text)
    artifacts[path.name] = path
    return path


def _manifest(path: Path, command: str, started: str, artifacts: dict, **fields) -> None:
    """Provenance record; the only artifact that carries timestamps."""
    doc = {
        "tool": "xconflict",
        "version": __version__,
        "command": command,
        "argv": sys.argv[1:],
        "kernel_backend": kernels.BACKEND,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "started": started,
        "finished": _now(),
        **fields,
        "artifacts": {name: {"path": str(p), "sha256": _sha256(p)} for name, p in sorted(artifacts.items())},
    }
    path.write_text(json.dumps(doc, indent=2, sort_keys=True, default=str) + "\n")


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _scenario(path: str):
    with stage("scenario"):
        return load_scenario(path)


# -- commands ------------------------------------------------------------------


def cmd_generate(args) -> int:
    started = _now()
    scenario = _scenario(args.scenario)
    with stage("generate"):
        ds = generate_dataset(scenario, args.samples, args.seed)
    if args.out:
        path = Path(args.out)
        path.parent.mkdir(parents=True, exist_ok=True)
    else:
        path = _out_dir(args) / "dataset.csv"
    csv_path, meta_path = ds.save(path)
    _manifest(
        path.with_name(path.stem + ".manifest.json"), "generate", started,
        {csv_path.name: csv_path, meta_path.name: meta_path},
        scenario=args.scenario, scenario_hash=scenario.hash(), seed=args.seed, samples=args.samples,
    )
    print(f"wrote {ds.n_samples} samples to {csv_path}")
    return EXIT_OK


def cmd_train(args) -> int:
    started = _now()
    out = _out_dir(args)
    with stage("load"):
        ds = load_dataset(args.dataset)
    with stage("build"):
        graph = build_temporal_graph(ds)
    d = graph.n_features
    dims = (d, *args.hidden, d)
    with stage("train"):
        model0 = init_model(dims, args.seed, args.activation)
        model, trace = train(model0, graph, args.epochs, args.lr)
    artifacts = {}
    model.save(out / "model.json")
    artifacts["model.json"] = out / "model.json"
    _write(out / "loss.csv", trace.to_csv(), artifacts)
    _manifest(out / "manifest.json", "train", started, artifacts,
              dataset=str(args.dataset), seed=args.seed, epochs=args.epochs, learning_rate=args.lr,
              layer_dims=list(dims), hidden_activation=args.activation,
              optimizer=trace.optimizer, model_fingerprint=model.fingerprint())
    print(f"trained {args.epochs} epochs, final loss {trace.losses[-1]:.6g}; model in {out / 'model.json'}")
    return EXIT_OK


def cmd_reconstruct(args) -> int:
    started = _now()
    out = _out_dir(args)
    scenario = _scenario(args.scenario)
    with stage("load"):
        ds = load_dataset(args.dataset)
        model = load_model(args.model) if args.model else None
    with stage("reconstruct"):
        if model is None:
            corr = feature_correlation(ds.values, ds.feature_names)
        else:
            corr = feature_correlation(forward(model, build_temporal_graph(ds)), ds.feature_names)
        adj = binarize(corr, args.threshold, args.mode)
    with stage("inject"):
        graph = inject_subscriptions(adj, scenario)
    artifacts = {}
    _write(out / "correlation.csv", corr.to_csv(), artifacts)
    _write(out / "adjacency.csv", adj.to_csv(), artifacts)
    _write(out / "graph.edgelist", graph.to_edgelist(), artifacts)
    _write(out / "graph.dot", graph.to_dot(), artifacts)
    _manifest(out / "manifest.json", "reconstruct", started, artifacts,
              dataset=str(args.dataset), model=args.model, threshold=args.threshold, mode=args.mode,
              scenario=args.scenario, scenario_hash=scenario.hash(),
              correlation_source="embedding" if model else "raw")
    print(f"{adj.edge_count} feature edges at threshold {args.threshold}; graph in {out / 'graph.edgelist'}")
    return EXIT_OK


def _graph_from_edgelist(path: str, scenario) -> ConflictGraph:
    with stage("parse"):
        edges = read_edgelist(path)
    classes = scenario.vertex_classes()
    unknown = sorted({v for e in edges for v in e if v not in classes})
    if unknown:
        raise UsageError(f"{path}: unknown vertex names {unknown}")
    with stage("parse"):
        return ConflictGraph.build(classes, edges + scenario.subscription_edges())


def cmd_label(args) -> int:
    scenario = _scenario(args.scenario)
    graph = _graph_from_edgelist(args.edgelist, scenario)
    report = label_conflicts(graph)
    if args.out_dir or os.environ.get(OUT_ENV):
        out = _out_dir(args)
        (out / "report.csv").write_text(report.to_csv())
        (out / "report.txt").write_text(report.summary())
    sys.stdout.write(report.summary())
    if args.fail_on_conflict and len(report):
        return EXIT_CONFLICTS
    return EXIT_OK


def cmd_evaluate(args) -> int:
    scenario = _scenario(args.scenario)
    graph = _graph_from_edgelist(args.edgelist, scenario)
    truth = ground_truth_graph(scenario)
    names = tuple(scenario.feature_names)
    idx = {n: i for i, n in enumerate(names)}
    mat = np.zeros((len(names), len(names)), dtype=np.int8)
    for u, v in graph.feature_edges():
        mat[idx[u], idx[v]] = mat[idx[v], idx[u]] = 1
    metrics = {"edges": edge_f1(ReconstructedAdjacency(mat, names), truth)}
    report, truth_report = label_conflicts(graph), label_conflicts(truth)
    for kind in KINDS:
        metrics[kind] = conflict_f1(report, truth_report, kind)
    sys.stdout.write(metrics_csv(metrics))
    return EXIT_OK


def cmd_pipeline(args) -> int:
    started = _now()
    out = _out_dir(args)
    settings = RunSettings(
        n_samples=args.samples, seed=args.seed, epochs=args.epochs, learning_rate=args.lr,
        threshold=args.threshold, mode=args.mode, layer_dims=None, hidden_activation=args.activation,
        correlate=args.correlate,
    )
    scenario = _scenario(args.scenario)
    artifacts = {}
    with stage("generate"):
        ds = generate_dataset(scenario, args.samples, args.seed)
        csv_path, meta_path = ds.save(out / "dataset.csv")
        artifacts.update({csv_path.name: csv_path, meta_path.name: meta_path})
    with stage("build"):
        tgraph = build_temporal_graph(ds)
    d = tgraph.n_features
    settings.layer_dims = (d, *args.hidden, d)
    with stage("train"):
        model0 = init_model(settings.layer_dims, args.seed, args.activation)
        model, trace = train(model0, tgraph, args.epochs, args.lr)
        model.save(out / "model.json")
        artifacts["model.json"] = out / "model.json"
        _write(out / "loss.csv", trace.to_csv(), artifacts)
    with stage("reconstruct"):
        source = ds.values if args.correlate == "raw" else forward(model, tgraph)
        corr = feature_correlation(source, scenario.feature_names)
        adj = binarize(corr, args.threshold, args.mode)
        _write(out / "correlation.csv", corr.to_csv(), artifacts)
        _write(out / "adjacency.csv", adj.to_csv(), artifacts)
    with stage("inject"):
        graph = inject_subscriptions(adj, scenario)
        _write(out / "graph.dot", graph.to_dot(), artifacts)
        _write(out / "graph.edgelist", graph.to_edgelist(), artifacts)
    with stage("label"):
        report = label_conflicts(graph)
        _write(out / "report.csv", report.to_csv(), artifacts)
        _write(out / "report.txt", report.summary(), artifacts)
    with stage("evaluate"):
        truth = ground_truth_graph(scenario)
        truth_report = label_conflicts(truth)
        metrics = {"edges": edge_f1(adj, truth)}
        for kind in KINDS:
            metrics[kind] = conflict_f1(report, truth_report, kind)
        _write(out / "metrics.csv", metrics_csv(metrics), artifacts)
    hyper = settings.hyperparameters()
    _manifest(out / "manifest.json", "pipeline", started, artifacts,
              scenario=args.scenario, scenario_hash=scenario.hash(), seed=args.seed,
              hyperparameters=hyper, model_fingerprint=model.fingerprint(),
              graph_fingerprint=graph.fingerprint())
    m = metrics["edges"]
    print(f"edges: precision {m.precision:.3f} recall {m.recall:.3f} f1 {m.f1:.3f} "
          f"({adj.edge_count} predicted, {len(truth.feature_edges())} true)")
    for kind in KINDS:
        print(f"{kind}: f1 {metrics[kind].f1:.3f}")
    print(f"artifacts in {out}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    started = _now()
    with stage("config"):
        cfg = load_sweep_config(args.config)
    if args.workers is not None:
        cfg.workers = args.workers
    if args.out_dir:
        cfg.output_dir = args.out_dir
    if cfg.workers < 1:
        raise UsageError("--workers must be >= 1")

    def progress(job, rows):
        n, s = job
        bad = sum(r["status"] != "ok" for r in rows)
        log.info("samples=%d seed=%d: %d cells%s", n, s, len(rows), f", {bad} failed" if bad else "")

    with stage("sweep"):
        result = run_sweep(cfg, progress)
    artifacts = {"results.csv": result.results_path, "aggregate.csv": result.aggregate_path}
    _manifest(Path(cfg.output_dir) / "manifest.json", "sweep", started, artifacts,
              config=str(args.config), axes={"epochs": cfg.epochs, "samples": cfg.samples,
                                             "thresholds": cfg.thresholds, "seeds": cfg.seeds},
              learning_rate=cfg.learning_rate, workers=cfg.workers)
    print(f"{len(result.rows)} records in {result.results_path}; medians in {result.aggregate_path}")
    if result.failures:
        print(f"{len(result.failures)} cells failed:", file=sys.stderr)
        for r in result.failures[:20]:
            print(f"  samples={r['samples']} epochs={r['epochs']} threshold={r['threshold']} "
                  f"seed={r['seed']}: {r['status']}", file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_OK


def cmd_export(args) -> int:
    scenario = _scenario(args.scenario)
    if args.edgelist:
        graph = _graph_from_edgelist(args.edgelist, scenario)
    else:
        graph = ground_truth_graph(scenario)
    text = graph.export(args.format)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


# -- parser ----------------------------------------------------------------------


def _unit_interval(text: str) -> float:
    v = float(text)
    if not 0.0 < v < 1.0:
        raise argparse.ArgumentTypeError(f"must lie in (0, 1), got {text}")
    return v


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {text}")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="xconflict", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def out_flag(sp):
        sp.add_argument("--out-dir", help=f"output directory (default ${OUT_ENV} or ./{DEFAULT_OUT})")

    def scenario_flag(sp):
        sp.add_argument("--scenario", default="default", help="scenario TOML path, or 'default'")

    def model_flags(sp):
        sp.add_argument("--hidden", type=_positive, nargs="+", default=[16], help="hidden layer widths")
        sp.add_argument("--activation", choices=sorted(ACTIVATIONS), default="relu")

    sp = sub.add_parser("generate", help="sample a synthetic telemetry dataset")
    scenario_flag(sp)
    sp.add_argument("--samples", type=_positive, default=450)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", help="dataset CSV path (default <out-dir>/dataset.csv)")
    out_flag(sp)
    sp.set_defaults(func=cmd_generate)

    sp = sub.add_parser("train", help="train the network on a dataset")
    sp.add_argument("--dataset", required=True)
    sp.add_argument("--epochs", type=_positive, default=1000)
    sp.add_argument("--lr", type=float, default=1e-3)
    sp.add_argument("--seed", type=int, default=0)
    model_flags(sp)
    out_flag(sp)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("reconstruct", help="correlate embeddings and build the conflict graph")
    sp.add_argument("--dataset", required=True)
    sp.add_argument("--model", help="trained model JSON; omit to correlate the raw data")
    sp.add_argument("--threshold", type=_unit_interval, default=0.5)
    sp.add_argument("--mode", choices=["absolute", "signed"], default="absolute")
    scenario_flag(sp)
    out_flag(sp)
    sp.set_defaults(func=cmd_reconstruct)

    sp = sub.add_parser("label", help="detect conflicts in an edge-list graph")
    sp.add_argument("edgelist")
    scenario_flag(sp)
    sp.add_argument("--fail-on-conflict", action="store_true", help="exit 3 when any conflict is found")
    out_flag(sp)
    sp.set_defaults(func=cmd_label)

    sp = sub.add_parser("evaluate", help="score an edge-list graph against the scenario ground truth")
    sp.add_argument("edgelist")
    scenario_flag(sp)
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("pipeline", help="generate, train, reconstruct, label and score in one go")
    scenario_flag(sp)
    sp.add_argument("--samples", type=_positive, default=450)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--epochs", type=_positive, default=1000)
    sp.add_argument("--lr", type=float, default=1e-3)
    sp.add_argument("--threshold", type=_unit_interval, default=0.5)
    sp.add_argument("--mode", choices=["absolute", "signed"], default="absolute")
    sp.add_argument("--correlate", choices=["embedding", "raw"], default="embedding",
                    help="'raw' correlates the dataset directly (diagnostic baseline)")
    model_flags(sp)
    out_flag(sp)
    sp.set_defaults(func=cmd_pipeline)

    sp = sub.add_parser("sweep", help="run a resumable grid of pipeline runs")
    sp.add_argument("config", help="sweep TOML file")
    sp.add_argument("--workers", type=int)
    sp.add_argument("--out-dir", help="overrides output_dir from the config")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("export", help="export the ground-truth or a given graph")
    scenario_flag(sp)
    sp.add_argument("--edgelist", help="graph to export instead of the ground truth")
    sp.add_argument("--format", choices=["dot", "csv", "edgelist"], default="edgelist")
    sp.add_argument("--out", help="output file (default stdout)")
    sp.set_defaults(func=cmd_export)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "lr", 1.0) <= 0:
        print("xconflict: error: --lr must be positive", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"xconflict {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except StageError as exc:
        print(f"xconflict {args.command}: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    except OSError as exc:
        print(f"xconflict {args.command}: I/O error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
