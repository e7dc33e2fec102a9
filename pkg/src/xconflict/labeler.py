"""Pattern matching for direct, implicit and indirect xApp conflicts.

Roles come from vertex classes: an A-P edge means the xApp controls the
parameter, an A-K edge means it monitors the KPI. K-K edges take part in no
pattern.
"""

from __future__ import annotations

import csv
import io
from collections import Counter
from dataclasses import dataclass

from .graph import KPI, PARAM, XAPP, ConflictGraph

DIRECT, IMPLICIT, INDIRECT = "direct", "implicit", "indirect"
KINDS = (DIRECT, IMPLICIT, INDIRECT)


@dataclass(frozen=True, order=True)
class Conflict:
    """``xapps`` is sorted for direct/implicit (symmetric) and ordered
    source -> target for indirect.

    Witnesses: direct ``(p,)``; implicit ``(p_m, p_n, k)`` with ``p_m``
    controlled by ``xapps[0]``; indirect ``(p_m, k, p_n)``.
    """

    kind: str
    xapps: tuple[str, str]
    witnesses: tuple[str, ...]

    def witness_edges(self) -> list[tuple[str, str]]:
        a, b = self.xapps
        if self.kind == DIRECT:
            (p,) = self.witnesses
            return [(a, p), (b, p)]
        if self.kind == IMPLICIT:
            pm, pn, k = self.witnesses
            return [(a, pm), (b, pn), (pm, k), (pn, k)]
        pm, k, pn = self.witnesses
        return [(a, pm), (pm, k), (k, b), (b, pn)]


def _roles(graph: ConflictGraph):
    nbrs = graph.neighbors()
    controls = {a: {v for v in nbrs[a] if graph.classes[v] == PARAM} for a in graph.of_class(XAPP)}
    monitors = {a: {v for v in nbrs[a] if graph.classes[v] == KPI} for a in graph.of_class(XAPP)}
    affects = {p: {v for v in nbrs[p] if graph.classes[v] == KPI} for p in graph.of_class(PARAM)}
    return controls, monitors, affects


def _pairs(xapps):
    return [(a, b) for i, a in enumerate(xapps) for b in xapps[i + 1:]]


def detect_direct(graph: ConflictGraph) -> list[Conflict]:
    controls, _, _ = _roles(graph)
    xapps = sorted(controls)
    out = []
    for a, b in _pairs(xapps):
        for p in sorted(controls[a] & controls[b]):
            out.append(Conflict(DIRECT, (a, b), (p,)))
    return sorted(out)


def detect_implicit(graph: ConflictGraph) -> list[Conflict]:
    controls, _, affects = _roles(graph)
    xapps = sorted(controls)
    out = []
    for a, b in _pairs(xapps):
        for pm in sorted(controls[a]):
            for pn in sorted(controls[b]):
                if pm == pn:
                    continue
                for k in sorted(affects[pm] & affects[pn]):
                    out.append(Conflict(IMPLICIT, (a, b), (pm, pn, k)))
    return sorted(out)


def detect_indirect(graph: ConflictGraph) -> list[Conflict]:
    """Depth-one chains a_i - p_m - k - a_j - p_n with p_m != p_n."""
    controls, monitors, affects = _roles(graph)
    xapps = sorted(controls)
    out = []
    for a in xapps:
        for b in xapps:
            if a == b:
                continue
            for pm in sorted(controls[a]):
                for k in sorted(affects[pm] & monitors[b]):
                    for pn in sorted(controls[b] - {pm}):
                        out.append(Conflict(INDIRECT, (a, b), (pm, k, pn)))
    return sorted(out)


@dataclass(frozen=True)
class ConflictReport:
    conflicts: tuple[Conflict, ...]
    graph_fingerprint: str = ""

    @property
    def counts(self) -> dict[str, int]:
        c = Counter(x.kind for x in self.conflicts)
        return {k: c.get(k, 0) for k in KINDS}

    def of_kind(self, kind: str) -> set[Conflict]:
        return {c for c in self.conflicts if c.kind == kind}

    def __len__(self):
        return len(self.conflicts)

    def to_csv(self) -> str:
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["kind", "xapp_i", "xapp_j", "witnesses"])
        for c in self.conflicts:
            w.writerow([c.kind, c.xapps[0], c.xapps[1], " ".join(c.witnesses)])
        return out.getvalue()

    def summary(self) -> str:
        counts = self.counts
        lines = [
            f"graph {self.graph_fingerprint}: {len(self.conflicts)} conflicts "
            f"({', '.join(f'{counts[k]} {k}' for k in KINDS)})"
        ]
        for c in self.conflicts:
            a, b = c.xapps
            if c.kind == DIRECT:
                lines.append(f"  direct    {a} <-> {b} on {c.witnesses[0]}")
            elif c.kind == IMPLICIT:
                pm, pn, k = c.witnesses
                lines.append(f"  implicit  {a} <-> {b}: {a}->{pm}, {b}->{pn} both affect {k}")
            else:
                pm, k, pn = c.witnesses
                lines.append(f"  indirect  {a} -> {b}: {a}->{pm} affects {k}, monitored by {b}->{pn}")
        return "\n".join(lines) + "\n"


def label_conflicts(graph: ConflictGraph) -> ConflictReport:
    found = set(detect_direct(graph)) | set(detect_implicit(graph)) | set(detect_indirect(graph))
    ordered = sorted(found, key=lambda c: (KINDS.index(c.kind), c.xapps, c.witnesses))
    return ConflictReport(tuple(ordered), graph.fingerprint())
