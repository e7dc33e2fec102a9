"""Heterogeneous conflict graph over xApps (A), parameters (P) and KPIs (K)."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

XAPP, PARAM, KPI = "A", "P", "K"
VERTEX_CLASSES = (XAPP, PARAM, KPI)

# Unordered class pairs an edge may join.
ALLOWED_EDGE_CLASSES = frozenset(
    frozenset(pair) for pair in [(XAPP, PARAM), (XAPP, KPI), (PARAM, KPI), (KPI, KPI)]
)


class GraphError(ValueError):
    pass


@dataclass(frozen=True)
class ConflictGraph:
    """Undirected vertex-labelled graph.

    ``vertices`` fixes the ordering used by :meth:`adjacency`; edges are stored
    as pairs ordered by that same ordering.
    """

    vertices: tuple[str, ...]
    classes: Mapping[str, str]
    edges: frozenset[tuple[str, str]]
    _index: Mapping[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        index = {v: i for i, v in enumerate(self.vertices)}
        if len(index) != len(self.vertices):
            raise GraphError("duplicate vertex names")
        object.__setattr__(self, "_index", index)
        for v in self.vertices:
            if self.classes.get(v) not in VERTEX_CLASSES:
                raise GraphError(f"vertex {v!r} has no valid class")
        for u, v in self.edges:
            if u not in index or v not in index:
                raise GraphError(f"edge ({u}, {v}) references an unknown vertex")
            if index[u] >= index[v]:
                raise GraphError(f"edge ({u}, {v}) is not in canonical order")
            pair = frozenset((self.classes[u], self.classes[v]))
            if pair not in ALLOWED_EDGE_CLASSES:
                cu, cv = self.classes[u], self.classes[v]
                raise GraphError(f"edge ({u}, {v}) joins classes {cu}-{cv}")

    @classmethod
    def build(
        cls,
        vertex_classes: Mapping[str, str],
        edges: Iterable[tuple[str, str]] = (),
    ) -> "ConflictGraph":
        """Create a graph from an ordered ``name -> class`` mapping and any edge pairs."""
        vertices = tuple(vertex_classes)
        index = {v: i for i, v in enumerate(vertices)}
        canon = set()
        for u, v in edges:
            if u == v:
                raise GraphError(f"self-loop on {u!r}")
            if u not in index or v not in index:
                missing = u if u not in index else v
                raise GraphError(f"unknown vertex {missing!r}")
            canon.add((u, v) if index[u] < index[v] else (v, u))
        return cls(vertices, dict(vertex_classes), frozenset(canon))

    def index(self, v: str) -> int:
        return self._index[v]

    def of_class(self, cls: str) -> list[str]:
        return [v for v in self.vertices if self.classes[v] == cls]

    def has_edge(self, u: str, v: str) -> bool:
        if self._index[u] > self._index[v]:
            u, v = v, u
        return (u, v) in self.edges

    def neighbors(self) -> dict[str, set[str]]:
        nbrs: dict[str, set[str]] = {v: set() for v in self.vertices}
        for u, v in self.edges:
            nbrs[u].add(v)
            nbrs[v].add(u)
        return nbrs

    def sorted_edges(self) -> list[tuple[str, str]]:
        return sorted(self.edges, key=lambda e: (self._index[e[0]], self._index[e[1]]))

    def adjacency(self) -> np.ndarray:
        n = len(self.vertices)
        a = np.zeros((n, n), dtype=np.int8)
        for u, v in self.edges:
            i, j = self._index[u], self._index[v]
            a[i, j] = a[j, i] = 1
        return a

    def feature_edges(self) -> set[tuple[str, str]]:
        """Edges among parameters and KPIs only."""
        return {(u, v) for u, v in self.edges if XAPP not in (self.classes[u], self.classes[v])}

    def with_edges(self, edges: Iterable[tuple[str, str]]) -> "ConflictGraph":
        return ConflictGraph.build(self.classes_ordered(), list(self.edges) + list(edges))

    def classes_ordered(self) -> dict[str, str]:
        return {v: self.classes[v] for v in self.vertices}

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        for v in self.vertices:
            h.update(f"{self.classes[v]}:{v}\n".encode())
        for u, v in self.sorted_edges():
            h.update(f"{u}--{v}\n".encode())
        return h.hexdigest()[:16]

    # -- export -----------------------------------------------------------

    def to_edgelist(self) -> str:
        return "".join(f"{u} {v}\n" for u, v in self.sorted_edges())

    def to_dot(self, name: str = "conflicts", header: str | None = None) -> str:
        style = {
            XAPP: 'shape=box, style=filled, fillcolor="#f4cccc"',
            PARAM: 'shape=ellipse, style=filled, fillcolor="#cfe2f3"',
            KPI: 'shape=diamond, style=filled, fillcolor="#d9ead3"',
        }
        lines = []
        if header:
            lines.append(f"// {header}")
        lines.append(f"graph {name} {{")
        for v in self.vertices:
            lines.append(f'  "{v}" [{style[self.classes[v]]}];')
        for u, v in self.sorted_edges():
            lines.append(f'  "{u}" -- "{v}";')
        lines.append("}")
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        a = self.adjacency()
        rows = ["," + ",".join(self.vertices)]
        for v, row in zip(self.vertices, a):
            rows.append(v + "," + ",".join(str(int(x)) for x in row))
        return "\n".join(rows) + "\n"

    def export(self, fmt: str) -> str:
        if fmt == "dot":
            return self.to_dot()
        if fmt == "csv":
            return self.to_csv()
        if fmt == "edgelist":
            return self.to_edgelist()
        raise ValueError(f"unknown graph format {fmt!r}")


def parse_edgelist(text: str, source: str = "<edge list>") -> list[tuple[str, str]]:
    """Parse ``u v`` lines; blank lines and ``#`` comments are skipped."""
    edges = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise GraphError(f"{source}:{lineno}: expected 'u v', got {raw.strip()!r}")
        edges.append((parts[0], parts[1]))
    return edges


def read_edgelist(path: str | Path) -> list[tuple[str, str]]:
    path = Path(path)
    return parse_edgelist(path.read_text(), source=str(path))
