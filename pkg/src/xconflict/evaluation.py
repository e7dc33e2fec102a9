"""Precision/recall/F1 scoring and the end-to-end experiment runner."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import os
import statistics
import sys
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import kernels
from .graph import ConflictGraph
from .labeler import DIRECT, IMPLICIT, INDIRECT, KINDS, ConflictReport, label_conflicts
from .model import Scenario, generate_dataset, ground_truth_graph, load_scenario, resolve_scenario_path
from .reconstruct import (
    DEFAULT_THRESHOLD,
    CorrelationMatrix,
    ReconstructedAdjacency,
    binarize,
    feature_correlation,
    inject_subscriptions,
    random_graph_baseline,
)
from .sage import DEFAULT_DIMS, SageModel, TrainingTrace, forward, init_model, train_checkpoints
from .temporal import build_temporal_graph

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class F1Metrics:
    """Scores with the convention that a zero denominator yields 0."""

    true_positives: int
    false_positives: int
    false_negatives: int
    precision: float
    recall: float
    f1: float
    zero_division: str = "0"

    @classmethod
    def from_counts(cls, tp: int, fp: int, fn: int) -> "F1Metrics":
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        return cls(tp, fp, fn, precision, recall, f1)

    @classmethod
    def from_sets(cls, predicted: set, truth: set) -> "F1Metrics":
        tp = len(predicted & truth)
        return cls.from_counts(tp, len(predicted) - tp, len(truth) - tp)


def _unordered(pairs: Iterable[tuple[str, str]]) -> set[frozenset]:
    return {frozenset(p) for p in pairs}


def edge_f1(predicted: ReconstructedAdjacency, truth: ConflictGraph) -> F1Metrics:
    """Score feature-feature edges only; subscription edges are known by construction."""
    features = set(predicted.feature_names)
    truth_features = {v for v in truth.vertices if truth.classes[v] != "A"}
    if features != truth_features:
        raise ValueError(f"feature sets differ: {sorted(features ^ truth_features)}")
    return F1Metrics.from_sets(_unordered(predicted.edges()), _unordered(truth.feature_edges()))


def conflict_f1(predicted: ConflictReport, truth: ConflictReport, kind: str) -> F1Metrics:
    if kind not in KINDS:
        raise ValueError(f"unknown conflict kind {kind!r}")
    return F1Metrics.from_sets(predicted.of_kind(kind), truth.of_kind(kind))


@lru_cache(maxsize=None)
def random_baseline_f1(edge_count: int, truth_edges: frozenset, feature_names: tuple, n_seeds: int = 1000) -> float:
    """Mean edge F1 of random graphs whose edge probability matches ``edge_count``."""
    n = len(feature_names)
    p = edge_count / (n * (n - 1) / 2)
    truth = {frozenset(e) for e in truth_edges}
    scores = []
    for seed in range(n_seeds):
        adj = random_graph_baseline(n, p, seed, feature_names)
        scores.append(F1Metrics.from_sets(_unordered(adj.edges()), truth).f1)
    return float(np.mean(scores))


# -- single runs ---------------------------------------------------------------


@dataclass
class RunSettings:
    n_samples: int = 450
    seed: int = 0
    epochs: int = 1000
    learning_rate: float = 1e-3
    threshold: float = DEFAULT_THRESHOLD
    mode: str = "absolute"
    layer_dims: tuple[int, ...] = DEFAULT_DIMS
    hidden_activation: str = "relu"
    output_activation: str = "identity"
    # "embedding" is the method under test; "raw" correlates the dataset itself (diagnostic only)
    correlate: str = "embedding"

    def hyperparameters(self) -> dict:
        d = asdict(self)
        d["layer_dims"] = list(self.layer_dims)
        d["optimizer"] = {"name": "adam", "beta1": 0.9, "beta2": 0.999, "eps": 1e-8}
        d["kernel_backend"] = kernels.BACKEND
        return d


@dataclass
class RunResult:
    settings: RunSettings
    model: SageModel
    trace: TrainingTrace
    correlation: CorrelationMatrix
    adjacency: ReconstructedAdjacency
    graph: ConflictGraph
    report: ConflictReport
    truth_graph: ConflictGraph
    truth_report: ConflictReport
    metrics: dict[str, F1Metrics] = field(default_factory=dict)


def score(adjacency, graph, truth_graph, truth_report) -> tuple[ConflictReport, dict[str, F1Metrics]]:
    report = label_conflicts(graph)
    metrics = {"edges": edge_f1(adjacency, truth_graph)}
    for kind in KINDS:
        metrics[kind] = conflict_f1(report, truth_report, kind)
    return report, metrics


def run_once(scenario: Scenario, settings: RunSettings, dataset=None) -> RunResult:
    """generate -> build -> train -> reconstruct -> inject -> label -> score."""
    dataset = dataset if dataset is not None else generate_dataset(scenario, settings.n_samples, settings.seed)
    tgraph = build_temporal_graph(dataset)
    dims = tuple(settings.layer_dims)
    model0 = init_model(dims, settings.seed, settings.hidden_activation, settings.output_activation)
    model, trace = train_checkpoints(model0, tgraph, [settings.epochs], settings.learning_rate)[settings.epochs]
    if settings.correlate == "embedding":
        corr = feature_correlation(forward(model, tgraph), scenario.feature_names)
    elif settings.correlate == "raw":
        corr = feature_correlation(dataset.values, scenario.feature_names)
    else:
        raise ValueError(f"unknown correlation source {settings.correlate!r}")
    adj = binarize(corr, settings.threshold, settings.mode)
    graph = inject_subscriptions(adj, scenario)
    truth = ground_truth_graph(scenario)
    truth_report = label_conflicts(truth)
    report, metrics = score(adj, graph, truth, truth_report)
    return RunResult(settings, model, trace, corr, adj, graph, report, truth, truth_report, metrics)


METRICS_HEADER = (
    "# edge scores cover feature-feature pairs only; subscription edges are excluded\n"
    "# precision, recall and f1 are 0 when their denominator is 0\n"
)


def metrics_csv(metrics: dict[str, F1Metrics]) -> str:
    lines = [METRICS_HEADER + "target,tp,fp,fn,precision,recall,f1"]
    for name, m in metrics.items():
        lines.append(
            f"{name},{m.true_positives},{m.false_positives},{m.false_negatives},"
            f"{_fmt(m.precision)},{_fmt(m.recall)},{_fmt(m.f1)}"
        )
    return "\n".join(lines) + "\n"


# -- sweeps --------------------------------------------------------------------


class SweepConfigError(ValueError):
    pass


@dataclass
class SweepConfig:
    epochs: list[int]
    samples: list[int]
    thresholds: list[float]
    seeds: list[int]
    scenario: str = "default"
    output_dir: str = "sweep-out"
    learning_rate: float = 1e-3
    mode: str = "absolute"
    hidden_activation: str = "relu"
    layer_dims: tuple[int, ...] = DEFAULT_DIMS
    workers: int = 1
    baseline_seeds: int = 1000

    def __post_init__(self):
        for axis in ("epochs", "samples", "thresholds", "seeds"):
            values = getattr(self, axis)
            if not isinstance(values, list) or not values:
                raise SweepConfigError(f"axis {axis!r} must be a non-empty list")
        if any(e < 1 for e in self.epochs) or any(n < 1 for n in self.samples):
            raise SweepConfigError("epochs and samples must be positive")
        if any(not 0 < t < 1 for t in self.thresholds):
            raise SweepConfigError("thresholds must lie in (0, 1)")
        self.layer_dims = tuple(self.layer_dims)


def load_sweep_config(path: str | Path) -> SweepConfig:
    path = Path(path)
    try:
        doc = tomllib.loads(path.read_text())
    except OSError as exc:
        raise SweepConfigError(f"{path}: {exc.strerror}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise SweepConfigError(f"{path}: {exc}") from exc
    axes = doc.pop("axes", {})
    unknown = set(doc) - set(SweepConfig.__dataclass_fields__) | (set(axes) - {"epochs", "samples", "thresholds", "seeds"})
    if unknown:
        raise SweepConfigError(f"{path}: unknown keys {sorted(unknown)}")
    try:
        cfg = SweepConfig(
            epochs=axes.get("epochs", []),
            samples=axes.get("samples", []),
            thresholds=axes.get("thresholds", []),
            seeds=axes.get("seeds", []),
            **doc,
        )
    except SweepConfigError as exc:
        raise SweepConfigError(f"{path}: {exc}") from None
    # relative scenario/output paths are relative to the config file
    if cfg.scenario != "default" and not Path(cfg.scenario).is_absolute():
        cfg.scenario = str(path.parent / cfg.scenario)
    return cfg


METRIC_GROUPS = ("edges",) + KINDS
RESULT_COLUMNS = (
    ["config_hash", "scenario_hash", "samples", "epochs", "threshold", "seed", "status"]
    + [f"{g}_{m}" for g in METRIC_GROUPS for m in ("tp", "fp", "fn", "precision", "recall", "f1")]
    + ["edge_count", "baseline_f1", "final_loss"]
)


def cell_hash(scenario_hash: str, cfg: SweepConfig, samples: int, epochs: int, threshold: float) -> str:
    blob = json.dumps(
        [scenario_hash, samples, epochs, threshold, cfg.learning_rate, cfg.mode,
         cfg.hidden_activation, list(cfg.layer_dims)],
    )
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


def _fmt(v) -> str:
    return "%.17g" % v if isinstance(v, float) else str(v)


def _run_job(cfg: SweepConfig, scenario: Scenario, samples: int, seed: int) -> list[dict]:
    """All (epochs, threshold) cells for one dataset and seed: a single training run."""
    shash = scenario.hash()
    base = {"scenario_hash": shash, "samples": samples, "seed": seed}
    truth = ground_truth_graph(scenario)
    truth_report = label_conflicts(truth)
    truth_edges = frozenset(tuple(e) for e in truth.feature_edges())
    names = tuple(scenario.feature_names)
    rows = []

    def failed(epochs, thresholds, msg):
        for e in epochs:
            for t in thresholds:
                rows.append({**base, "config_hash": cell_hash(shash, cfg, samples, e, t),
                             "epochs": e, "threshold": t, "status": f"error: {msg}"})

    try:
        dataset = generate_dataset(scenario, samples, seed)
        tgraph = build_temporal_graph(dataset)
        model0 = init_model(cfg.layer_dims, seed, cfg.hidden_activation)
        snaps = train_checkpoints(model0, tgraph, cfg.epochs, cfg.learning_rate)
    except Exception as exc:  # a failed cell must not kill the sweep
        failed(cfg.epochs, cfg.thresholds, exc)
        return rows
    for e in sorted(cfg.epochs):
        model, trace = snaps[e]
        try:
            corr = feature_correlation(forward(model, tgraph), names)
        except Exception as exc:
            failed([e], cfg.thresholds, exc)
            continue
        for t in sorted(cfg.thresholds):
            adj = binarize(corr, t, cfg.mode)
            _, metrics = score(adj, inject_subscriptions(adj, scenario), truth, truth_report)
            row = {**base, "config_hash": cell_hash(shash, cfg, samples, e, t),
                   "epochs": e, "threshold": t, "status": "ok"}
            for g in METRIC_GROUPS:
                m = metrics[g]
                row.update({f"{g}_tp": m.true_positives, f"{g}_fp": m.false_positives,
                            f"{g}_fn": m.false_negatives, f"{g}_precision": m.precision,
                            f"{g}_recall": m.recall, f"{g}_f1": m.f1})
            row["edge_count"] = adj.edge_count
            row["baseline_f1"] = (
                random_baseline_f1(adj.edge_count, truth_edges, names, cfg.baseline_seeds)
                if cfg.baseline_seeds else ""
            )
            row["final_loss"] = float(trace.losses[-1])
            rows.append(row)
    return rows


def _drop_torn_tail(path: Path) -> None:
    """Cut a partial last line left behind by an interrupted append."""
    if not path.exists():
        return
    data = path.read_bytes()
    if data and not data.endswith(b"\n"):
        keep = data[: data.rfind(b"\n") + 1]
        log.warning("%s: discarding a partial trailing record", path)
        with path.open("r+b") as fh:
            fh.truncate(len(keep))


def _read_rows(path: Path) -> list[dict]:
    if not path.exists():
        return []
    with path.open(newline="") as fh:
        return list(csv.DictReader(fh))


def _append_rows(path: Path, rows: list[dict]) -> None:
    new = not path.exists() or path.stat().st_size == 0
    buf = []
    if new:
        buf.append(",".join(RESULT_COLUMNS))
    for r in rows:
        buf.append(",".join(_fmt(r.get(c, "")) for c in RESULT_COLUMNS))
    # one write per job keeps a record set whole if the sweep is interrupted
    with path.open("a") as fh:
        fh.write("\n".join(buf) + "\n")
        fh.flush()
        os.fsync(fh.fileno())


@dataclass
class SweepResult:
    config: SweepConfig
    rows: list[dict]
    results_path: Path
    aggregate_path: Path
    failures: list[dict]

    def cells(self, **where) -> list[dict]:
        return [r for r in self.rows if all(_same(r[k], v) for k, v in where.items())]


def _same(a, b) -> bool:
    try:
        return float(a) == float(b)
    except (TypeError, ValueError):
        return str(a) == str(b)


def _job_complete(rows: list[dict], cfg: SweepConfig, samples: int, seed: int) -> bool:
    have = {(int(r["epochs"]), float(r["threshold"])) for r in rows
            if int(r["samples"]) == samples and int(r["seed"]) == seed}
    return all((e, t) in have for e in cfg.epochs for t in cfg.thresholds)


def run_sweep(cfg: SweepConfig, progress=None) -> SweepResult:
    """Run every grid cell for every seed, skipping jobs already present in the results file."""
    scenario = load_scenario(resolve_scenario_path(cfg.scenario))
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    results_path = out / "results.csv"
    _drop_torn_tail(results_path)
    existing = _read_rows(results_path)
    shash = scenario.hash()
    if existing and any(r["scenario_hash"] != shash for r in existing):
        raise SweepConfigError(f"{results_path} holds results for a different scenario")
    todo = [(n, s) for n in cfg.samples for s in cfg.seeds if not _job_complete(existing, cfg, n, s)]
    log.info("sweep: %d jobs to run, %d already done", len(todo), len(cfg.samples) * len(cfg.seeds) - len(todo))

    def record(job, rows):
        _append_rows(results_path, rows)
        if progress:
            progress(job, rows)

    if cfg.workers > 1 and len(todo) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            futures = {pool.submit(_run_job, cfg, scenario, n, s): (n, s) for n, s in todo}
            for fut in as_completed(futures):
                record(futures[fut], fut.result())
    else:
        for n, s in todo:
            record((n, s), _run_job(cfg, scenario, n, s))

    rows = _dedupe(_read_rows(results_path))
    aggregate_path = out / "aggregate.csv"
    write_aggregate(rows, aggregate_path)
    failures = [r for r in rows if r["status"] != "ok"]
    return SweepResult(cfg, rows, results_path, aggregate_path, failures)


def _dedupe(rows: list[dict]) -> list[dict]:
    seen = {}
    for r in rows:
        seen[(r["samples"], r["epochs"], r["threshold"], r["seed"])] = r
    return sorted(seen.values(), key=lambda r: (int(r["samples"]), int(r["epochs"]), float(r["threshold"]), int(r["seed"])))


def write_aggregate(rows: list[dict], path: Path) -> None:
    """Median and spread across seeds per (samples, epochs, threshold) cell."""
    groups: dict[tuple, list[dict]] = {}
    for r in rows:
        if r["status"] == "ok":
            groups.setdefault((int(r["samples"]), int(r["epochs"]), float(r["threshold"])), []).append(r)
    cols = ["samples", "epochs", "threshold", "n_seeds"]
    metrics = [f"{g}_f1" for g in METRIC_GROUPS] + ["baseline_f1"]
    for m in metrics:
        cols += [f"{m}_median", f"{m}_min", f"{m}_max"]
    lines = [",".join(cols)]
    for key in sorted(groups):
        g = groups[key]
        vals = [str(key[0]), str(key[1]), _fmt(key[2]), str(len(g))]
        for m in metrics:
            xs = [float(r[m]) for r in g if r.get(m) not in ("", None)]
            if xs:
                vals += [_fmt(float(statistics.median(xs))), _fmt(min(xs)), _fmt(max(xs))]
            else:
                vals += ["", "", ""]
        lines.append(",".join(vals))
    path.write_text("\n".join(lines) + "\n")


def median_over_seeds(values: Sequence[float]) -> float:
    return float(statistics.median(values))
