"""Chain-structured temporal graph built from a sample sequence."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import TimeSeriesDataset


class DegenerateFeatureError(ValueError):
    pass


@dataclass(frozen=True)
class TemporalGraph:
    """Vertices are sample indices 0..T-1; edges join consecutive samples.

    ``features`` holds the z-scored samples; ``mean`` and ``std`` undo it.
    """

    features: np.ndarray
    feature_names: tuple[str, ...]
    mean: np.ndarray
    std: np.ndarray

    @property
    def vertex_count(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def edges(self) -> list[tuple[int, int]]:
        return [(t, t + 1) for t in range(self.vertex_count - 1)]

    def degrees(self) -> np.ndarray:
        deg = np.full(self.vertex_count, 2, dtype=np.int64)
        deg[0] -= 1
        deg[-1] -= 1
        return deg

    def destandardize(self, z: np.ndarray | None = None) -> np.ndarray:
        z = self.features if z is None else z
        return z * self.std + self.mean

    def to_dot(self) -> str:
        lines = ["graph temporal {"]
        lines.extend(f"  {t};" for t in range(self.vertex_count))
        lines.extend(f"  {u} -- {v};" for u, v in self.edges)
        lines.append("}")
        return "\n".join(lines) + "\n"


def build_temporal_graph(dataset: TimeSeriesDataset) -> TemporalGraph:
    """Z-score each feature column (population std) and wrap it as a chain graph.

    A single-sample dataset has no spread to standardize by; it is centred and
    left at unit scale.
    """
    x = np.asarray(dataset.values, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 1:
        raise ValueError("dataset needs at least one row")
    mean = x.mean(axis=0)
    if x.shape[0] == 1:
        std = np.ones(x.shape[1])
    else:
        std = x.std(axis=0)
        for j, s in enumerate(std):
            if not s > 0:
                raise DegenerateFeatureError(
                    f"feature {dataset.feature_names[j]!r} is constant; cannot standardize"
                )
    z = np.ascontiguousarray((x - mean) / std)
    return TemporalGraph(z, tuple(dataset.feature_names), mean, std)


def neighborhood(graph: TemporalGraph, t: int) -> set[int]:
    if not 0 <= t < graph.vertex_count:
        raise IndexError(f"vertex {t} out of range [0, {graph.vertex_count})")
    return {u for u in (t - 1, t + 1) if 0 <= u < graph.vertex_count}
