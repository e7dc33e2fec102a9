"""Embedding correlation -> thresholded adjacency -> full conflict graph."""

from __future__ import annotations

import io
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .graph import PARAM, ConflictGraph
from .model import Scenario

DEFAULT_THRESHOLD = 0.5


class ConstantColumnError(ValueError):
    pass


@dataclass(frozen=True)
class CorrelationMatrix:
    values: np.ndarray
    feature_names: tuple[str, ...]

    def to_csv(self) -> str:
        return _matrix_csv(self.values, self.feature_names, "%.17g")


@dataclass(frozen=True)
class ReconstructedAdjacency:
    matrix: np.ndarray
    feature_names: tuple[str, ...]
    threshold: float | None = None
    mode: str = "absolute"
    source: str = ""

    def edges(self) -> set[tuple[str, str]]:
        n = len(self.feature_names)
        return {
            (self.feature_names[i], self.feature_names[j])
            for i in range(n)
            for j in range(i + 1, n)
            if self.matrix[i, j]
        }

    @property
    def edge_count(self) -> int:
        return int(np.triu(self.matrix, 1).sum())

    def to_csv(self) -> str:
        return _matrix_csv(self.matrix, self.feature_names, "%d")


def _matrix_csv(values, names, fmt) -> str:
    out = io.StringIO()
    out.write("," + ",".join(names) + "\n")
    for name, row in zip(names, values):
        out.write(name + "," + ",".join(fmt % v for v in row) + "\n")
    return out.getvalue()


def feature_correlation(embeddings, feature_names: Sequence[str] | None = None) -> CorrelationMatrix:
    """Pearson correlation between the columns of a T x d embedding matrix."""
    h = np.asarray(getattr(embeddings, "values", embeddings), dtype=np.float64)
    T, d = h.shape
    if T < 2:
        raise ValueError("correlation needs at least two rows")
    names = tuple(feature_names) if feature_names is not None else tuple(f"f{j}" for j in range(d))
    centred = h - h.mean(axis=0)
    norms = np.sqrt(np.sum(centred * centred, axis=0))
    for j, s in enumerate(norms):
        # relative test: a column of round-off noise around a constant counts as constant
        if not s > 1e-12 * max(1.0, float(np.abs(h[:, j]).max())) * np.sqrt(T):
            raise ConstantColumnError(f"embedding column {j} ({names[j]}) is constant")
    unit = centred / norms
    c = unit.T @ unit
    c = np.clip((c + c.T) / 2.0, -1.0, 1.0)
    np.fill_diagonal(c, 1.0)
    return CorrelationMatrix(c, names)


def binarize(corr: CorrelationMatrix, threshold: float = DEFAULT_THRESHOLD, mode: str = "absolute") -> ReconstructedAdjacency:
    """Edge (i, j) iff |r_ij| >= threshold (``mode="absolute"``) or r_ij >= threshold (``"signed"``)."""
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must lie in (0, 1), got {threshold}")
    r = corr.values
    if mode == "absolute":
        a = np.abs(r) >= threshold
    elif mode == "signed":
        a = r >= threshold
    else:
        raise ValueError(f"unknown mode {mode!r}")
    a = (a | a.T).astype(np.int8)
    np.fill_diagonal(a, 0)
    return ReconstructedAdjacency(a, corr.feature_names, float(threshold), mode, "correlation")


def inject_subscriptions(adj: ReconstructedAdjacency, scenario: Scenario) -> ConflictGraph:
    """Combine reconstructed feature edges with the scenario's known subscriptions.

    Only P-K and K-K pairs carry over from ``adj``; parameter-parameter pairs
    have no place in a conflict graph and are dropped.
    """
    if tuple(adj.feature_names) != tuple(scenario.feature_names):
        raise ValueError(
            f"adjacency features {list(adj.feature_names)} do not match scenario "
            f"features {scenario.feature_names}"
        )
    classes = scenario.vertex_classes()
    feature_edges = [
        (u, v) for u, v in adj.edges() if not (classes[u] == PARAM and classes[v] == PARAM)
    ]
    return ConflictGraph.build(classes, feature_edges + scenario.subscription_edges())


def random_graph_baseline(
    feature_count: int,
    edge_probability: float,
    seed: int,
    feature_names: Sequence[str] | None = None,
) -> ReconstructedAdjacency:
    """Each unordered pair becomes an edge independently with ``edge_probability``."""
    if not 0.0 <= edge_probability <= 1.0:
        raise ValueError("edge probability must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    iu = np.triu_indices(feature_count, 1)
    a = np.zeros((feature_count, feature_count), dtype=np.int8)
    a[iu] = rng.random(len(iu[0])) < edge_probability
    a = a | a.T
    names = tuple(feature_names) if feature_names is not None else tuple(f"f{j}" for j in range(feature_count))
    return ReconstructedAdjacency(a, names, None, "random", f"random(p={edge_probability}, seed={seed})")
