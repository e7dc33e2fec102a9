import random

import numpy as np
import pytest

from xconflict.graph import KPI, PARAM, XAPP, ConflictGraph
from xconflict.model import generate_dataset, load_scenario
from xconflict.temporal import build_temporal_graph

_criteria: dict[int, tuple[str, str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion number and title")


def pytest_runtest_makereport(item, call):
    marker = item.get_closest_marker("criterion")
    if marker is None or call.when != "call":
        return
    n, title = marker.args
    outcome = "PASS" if call.excinfo is None else "FAIL"
    detail = ""
    for name, value in item.user_properties:
        if name == "measured":
            detail = str(value)
    _criteria[n] = (title, outcome, detail)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_criteria):
        title, outcome, detail = _criteria[n]
        line = f"criterion {n:2d} {outcome}  {title}"
        if detail:
            line += f"  [{detail}]"
        terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def scenario():
    return load_scenario("default")


@pytest.fixture(scope="session")
def small_graph(scenario):
    return build_temporal_graph(generate_dataset(scenario, 60, 3))


def random_conflict_graph(rng: random.Random, max_vertices: int = 12, density: float | None = None) -> ConflictGraph:
    n = rng.randint(2, max_vertices)
    classes = {}
    counts = {XAPP: 0, PARAM: 0, KPI: 0}
    for _ in range(n):
        c = rng.choice([XAPP, PARAM, KPI])
        counts[c] += 1
        classes[f"{c.lower()}{counts[c]}"] = c
    allowed = {frozenset("AP"), frozenset("AK"), frozenset("PK"), frozenset("K")}
    p = density if density is not None else rng.uniform(0.15, 0.7)
    names = sorted(classes)
    edges = [
        (u, v)
        for i, u in enumerate(names)
        for v in names[i + 1:]
        if frozenset(classes[u] + classes[v]) in allowed and rng.random() < p
    ]
    return ConflictGraph.build(classes, edges)


def random_features(rng: np.random.Generator, T: int, d: int) -> np.ndarray:
    return rng.standard_normal((T, d))
