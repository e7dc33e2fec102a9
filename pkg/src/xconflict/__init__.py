"""Conflict-graph reconstruction and xApp conflict labelling for a near-RT RIC model."""

__version__ = "0.1.0"

from .graph import ConflictGraph, GraphError, parse_edgelist, read_edgelist
from .model import (
    Scenario,
    ScenarioError,
    TimeSeriesDataset,
    evaluate_kpis,
    generate_dataset,
    ground_truth_graph,
    load_dataset,
    load_scenario,
)
from .temporal import TemporalGraph, build_temporal_graph
from .sage import SageModel, TrainingTrace, forward, init_model, train
from .reconstruct import binarize, feature_correlation, inject_subscriptions, random_graph_baseline
from .labeler import Conflict, ConflictReport, label_conflicts
from .evaluation import F1Metrics, RunSettings, conflict_f1, edge_f1, run_once, run_sweep

__all__ = [
    "Conflict", "ConflictGraph", "ConflictReport", "F1Metrics", "GraphError", "RunSettings",
    "SageModel", "Scenario", "ScenarioError", "TemporalGraph", "TimeSeriesDataset", "TrainingTrace",
    "binarize", "build_temporal_graph", "conflict_f1", "edge_f1", "evaluate_kpis", "feature_correlation",
    "forward", "generate_dataset", "ground_truth_graph", "init_model", "inject_subscriptions",
    "label_conflicts", "load_dataset", "load_scenario", "parse_edgelist", "random_graph_baseline",
    "read_edgelist", "run_once", "run_sweep", "train",
]
