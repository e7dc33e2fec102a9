"""Scenario definitions and the closed-form Gaussian conflict model.

A scenario declares the control parameters (with sampling ranges), the KPIs,
and which xApps control/monitor what. The built-in ``gaussian4`` model maps
seven parameters to four KPIs; it is the data source and the ground truth for
everything downstream.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import sys
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .graph import KPI, PARAM, XAPP, ConflictGraph

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

DEFAULT_MODEL = "gaussian4"
# Sampling excludes the lowest 0.1% of each range: zero-width Gaussians are singular.
LOWER_MARGIN = 1e-3


class ScenarioError(ValueError):
    """Invalid scenario file or definition; ``location`` points at the offending entry."""

    def __init__(self, message: str, location: str = ""):
        self.location = location
        super().__init__(f"{location}: {message}" if location else message)


class ModelDomainError(ValueError):
    pass


@dataclass(frozen=True)
class ParameterSpec:
    name: str
    lower: float
    upper: float


@dataclass(frozen=True)
class KpiSpec:
    name: str
    equation: str


@dataclass(frozen=True)
class XAppSpec:
    name: str
    controls: tuple[str, ...] = ()
    monitors: tuple[str, ...] = ()


@dataclass(frozen=True)
class StructuralModel:
    """A fixed set of KPI equations over positional parameter slots.

    ``inputs`` lists, per equation id, the parameter slots and earlier
    equations it reads. This is the dependency structure the reconstruction
    tries to recover.
    """

    model_id: str
    n_parameters: int
    equations: tuple[str, ...]
    inputs: dict[str, tuple[str, ...]] = field(hash=False)


GAUSSIAN4 = StructuralModel(
    model_id="gaussian4",
    n_parameters=7,
    equations=("K1", "K2", "K3", "K4"),
    inputs={
        "K1": ("P1", "P2"),
        "K2": ("P1", "P3"),
        "K3": ("P4", "P5", "K1"),
        "K4": ("P6", "P7", "K2"),
    },
)

MODELS = {GAUSSIAN4.model_id: GAUSSIAN4}


@dataclass(frozen=True)
class Scenario:
    parameters: tuple[ParameterSpec, ...]
    kpis: tuple[KpiSpec, ...]
    xapps: tuple[XAppSpec, ...] = ()
    model_id: str = DEFAULT_MODEL

    def __post_init__(self):
        _validate(self)

    @property
    def parameter_names(self) -> list[str]:
        return [p.name for p in self.parameters]

    @property
    def kpi_names(self) -> list[str]:
        return [k.name for k in self.kpis]

    @property
    def feature_names(self) -> list[str]:
        return self.parameter_names + self.kpi_names

    @property
    def lower(self) -> np.ndarray:
        return np.array([p.lower for p in self.parameters], dtype=np.float64)

    @property
    def upper(self) -> np.ndarray:
        return np.array([p.upper for p in self.parameters], dtype=np.float64)

    def vertex_classes(self) -> dict[str, str]:
        """Vertex ordering shared by every graph built from this scenario."""
        out = {name: PARAM for name in self.parameter_names}
        out.update({name: KPI for name in self.kpi_names})
        out.update({x.name: XAPP for x in self.xapps})
        return out

    def subscription_edges(self) -> list[tuple[str, str]]:
        edges = []
        for x in self.xapps:
            edges.extend((x.name, p) for p in x.controls)
            edges.extend((x.name, k) for k in x.monitors)
        return edges

    def to_dict(self) -> dict:
        return {
            "model": {"id": self.model_id},
            "parameters": [asdict(p) for p in self.parameters],
            "kpis": [asdict(k) for k in self.kpis],
            "xapps": [
                {"name": x.name, "controls": list(x.controls), "monitors": list(x.monitors)}
                for x in self.xapps
            ],
        }

    def hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _validate(s: Scenario) -> None:
    if s.model_id not in MODELS:
        raise ScenarioError(f"unknown model id {s.model_id!r}", "model.id")
    names: dict[str, str] = {}
    for i, p in enumerate(s.parameters):
        loc = f"parameters[{i}]"
        if p.name in names:
            raise ScenarioError(f"duplicate name {p.name!r}", loc)
        if not (np.isfinite(p.lower) and np.isfinite(p.upper)) or not p.lower < p.upper:
            raise ScenarioError(f"bounds must satisfy lower < upper, got [{p.lower}, {p.upper}]", loc)
        names[p.name] = PARAM
    for i, k in enumerate(s.kpis):
        loc = f"kpis[{i}]"
        if k.name in names:
            raise ScenarioError(f"duplicate name {k.name!r}", loc)
        names[k.name] = KPI
    for i, x in enumerate(s.xapps):
        loc = f"xapps[{i}]"
        if x.name in names:
            raise ScenarioError(f"duplicate name {x.name!r}", loc)
        for p in x.controls:
            if names.get(p) != PARAM:
                raise ScenarioError(f"controls undeclared parameter {p!r}", f"{loc}.controls")
        for k in x.monitors:
            if names.get(k) != KPI:
                raise ScenarioError(f"monitors undeclared KPI {k!r}", f"{loc}.monitors")
        names[x.name] = XAPP

    model = MODELS[s.model_id]
    if len(s.parameters) != model.n_parameters:
        raise ScenarioError(
            f"model {model.model_id} needs {model.n_parameters} parameters, got {len(s.parameters)}",
            "parameters",
        )
    if tuple(k.equation for k in s.kpis) != model.equations:
        raise ScenarioError(
            f"model {model.model_id} needs KPI equations {list(model.equations)} in order",
            "kpis",
        )


# -- scenario files ----------------------------------------------------------


def default_scenario_path() -> Path:
    return Path(str(resources.files("xconflict") / "data" / "default_scenario.toml"))


def resolve_scenario_path(path: str | Path) -> Path:
    if str(path) == "default":
        return default_scenario_path()
    return Path(path)


def parse_scenario(text: str, source: str = "<scenario>") -> Scenario:
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ScenarioError(str(exc), source) from exc

    def entries(key):
        value = doc.get(key, [])
        if not isinstance(value, list):
            raise ScenarioError("expected an array of tables", f"{source}:{key}")
        return value

    def need(entry, key, loc):
        if key not in entry:
            raise ScenarioError(f"missing key {key!r}", loc)
        return entry[key]

    try:
        params = []
        for i, e in enumerate(entries("parameters")):
            loc = f"{source}:parameters[{i}]"
            lower, upper = need(e, "lower", loc), need(e, "upper", loc)
            if not all(isinstance(b, (int, float)) for b in (lower, upper)):
                raise ScenarioError("bounds must be numbers", loc)
            params.append(ParameterSpec(str(need(e, "name", loc)), float(lower), float(upper)))
        kpis = []
        for i, e in enumerate(entries("kpis")):
            loc = f"{source}:kpis[{i}]"
            name = str(need(e, "name", loc))
            kpis.append(KpiSpec(name, str(e.get("equation", name))))
        xapps = []
        for i, e in enumerate(entries("xapps")):
            loc = f"{source}:xapps[{i}]"
            xapps.append(
                XAppSpec(
                    str(need(e, "name", loc)),
                    tuple(str(p) for p in e.get("controls", [])),
                    tuple(str(k) for k in e.get("monitors", [])),
                )
            )
        model_id = str(doc.get("model", {}).get("id", DEFAULT_MODEL))
        return Scenario(tuple(params), tuple(kpis), tuple(xapps), model_id)
    except ScenarioError as exc:
        if exc.location.startswith(source):
            raise
        raise ScenarioError(str(exc).split(": ", 1)[-1], f"{source}:{exc.location}") from None


def load_scenario(path: str | Path) -> Scenario:
    """Load and validate a TOML scenario file; ``"default"`` loads the shipped one."""
    path = resolve_scenario_path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario file: {exc.strerror}", str(path)) from exc
    return parse_scenario(text, source=str(path))


def scenario_to_toml(s: Scenario) -> str:
    out = io.StringIO()
    out.write(f'[model]\nid = "{s.model_id}"\n')
    for p in s.parameters:
        out.write(f'\n[[parameters]]\nname = "{p.name}"\nlower = {p.lower!r}\nupper = {p.upper!r}\n')
    for k in s.kpis:
        out.write(f'\n[[kpis]]\nname = "{k.name}"\nequation = "{k.equation}"\n')
    for x in s.xapps:
        controls = ", ".join(f'"{p}"' for p in x.controls)
        monitors = ", ".join(f'"{k}"' for k in x.monitors)
        out.write(f'\n[[xapps]]\nname = "{x.name}"\ncontrols = [{controls}]\nmonitors = [{monitors}]\n')
    return out.getvalue()


# -- sampling and KPI evaluation ---------------------------------------------


def sample_parameters(scenario: Scenario, rng: np.random.Generator) -> np.ndarray:
    """One independent uniform draw per parameter on ``(lower + margin, upper]``."""
    return _draw(scenario, rng.random(len(scenario.parameters)))


def _draw(scenario: Scenario, u: np.ndarray) -> np.ndarray:
    lo, hi = scenario.lower, scenario.upper
    width = (hi - lo) * (1.0 - LOWER_MARGIN)
    # u in [0, 1) maps onto (hi - width, hi]
    return hi - u * width


def evaluate_kpis(params: np.ndarray) -> np.ndarray:
    """KPIs of the ``gaussian4`` model for one parameter vector or a batch of rows."""
    p = np.asarray(params, dtype=np.float64)
    single = p.ndim == 1
    p = np.atleast_2d(p)
    if p.shape[1] != 7:
        raise ModelDomainError(f"expected 7 parameters, got {p.shape[1]}")
    p1, p2, p3, p4, p5, p6, p7 = p.T
    for name, col in (("P2", p2), ("P3", p3), ("P5", p5), ("P6", p6)):
        if not np.all(col > 0):
            raise ModelDomainError(f"{name} must be strictly positive (Gaussian width)")
    k1 = 0.5 * np.exp(-((p1 + 50.0) ** 2) / (2.0 * p2) ** 2)
    k2 = np.exp(-((p1 - 50.0) ** 2) / (2.0 * p3) ** 2)
    k3 = np.exp(-((p4 + k1) ** 2) / (2.0 * p5) ** 2)
    k4 = np.exp(-((p7 + k2) ** 2) / (2.0 * p6) ** 2)
    k = np.column_stack([k1, k2, k3, k4])
    return k[0] if single else k


# -- datasets ----------------------------------------------------------------


@dataclass(frozen=True)
class TimeSeriesDataset:
    values: np.ndarray
    feature_names: tuple[str, ...]
    seed: int | None = None
    scenario_hash: str = ""

    @property
    def n_samples(self) -> int:
        return self.values.shape[0]

    def to_csv(self) -> str:
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(self.feature_names)
        for row in self.values:
            writer.writerow(["%.17g" % v for v in row])
        return out.getvalue()

    def metadata(self) -> dict:
        return {
            "seed": self.seed,
            "scenario_hash": self.scenario_hash,
            "n_samples": self.n_samples,
            "feature_names": list(self.feature_names),
        }

    def save(self, path: str | Path) -> tuple[Path, Path]:
        path = Path(path)
        path.write_text(self.to_csv())
        meta = sidecar_path(path)
        meta.write_text(json.dumps(self.metadata(), indent=2, sort_keys=True) + "\n")
        return path, meta


def sidecar_path(path: Path) -> Path:
    return path.with_name(path.name + ".meta.json")


def load_dataset(path: str | Path) -> TimeSeriesDataset:
    path = Path(path)
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty dataset file")
    names = tuple(rows[0])
    try:
        values = np.array([[float(v) for v in r] for r in rows[1:]], dtype=np.float64)
    except ValueError as exc:
        raise ValueError(f"{path}: {exc}") from exc
    values = values.reshape(len(rows) - 1, len(names))
    seed, shash = None, ""
    meta = sidecar_path(path)
    if meta.exists():
        doc = json.loads(meta.read_text())
        seed, shash = doc.get("seed"), doc.get("scenario_hash", "")
    return TimeSeriesDataset(values, names, seed, shash)


def generate_dataset(scenario: Scenario, n_samples: int, seed: int) -> TimeSeriesDataset:
    """``n_samples`` i.i.d. parameter draws with their KPIs, as rows in draw order."""
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    rng = np.random.default_rng(seed)
    # Row-major fill: identical to n_samples consecutive sample_parameters() calls.
    params = _draw(scenario, rng.random((n_samples, len(scenario.parameters))))
    kpis = evaluate_kpis(params)
    values = np.ascontiguousarray(np.hstack([params, kpis]))
    return TimeSeriesDataset(values, tuple(scenario.feature_names), seed, scenario.hash())


# -- ground truth ------------------------------------------------------------


def dependency_edges(scenario: Scenario) -> list[tuple[str, str]]:
    """Feature edges read off the model equations, in scenario names."""
    model = MODELS[scenario.model_id]
    slot = {f"P{i + 1}": p.name for i, p in enumerate(scenario.parameters)}
    slot.update({k.equation: k.name for k in scenario.kpis})
    edges = []
    for k in scenario.kpis:
        edges.extend((slot[src], k.name) for src in model.inputs[k.equation])
    return edges


def ground_truth_graph(scenario: Scenario) -> ConflictGraph:
    if scenario.model_id not in MODELS:
        raise ScenarioError(f"unknown model id {scenario.model_id!r}", "model.id")
    return ConflictGraph.build(
        scenario.vertex_classes(),
        dependency_edges(scenario) + scenario.subscription_edges(),
    )
