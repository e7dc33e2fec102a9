"""Mean-aggregating graph network trained to reconstruct its own input.

Each layer replaces a vertex's embedding by the element-wise mean over the
vertex and its chain neighbours, applies a weight matrix, then an activation.
The final layer's output is regressed onto the standardized features with a
per-vertex summed squared error.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import kernels
from .temporal import TemporalGraph

ACTIVATIONS = {"identity": kernels.IDENTITY, "relu": kernels.RELU, "tanh": kernels.TANH}

DEFAULT_DIMS = (11, 16, 11)
ADAM_DEFAULTS = {"beta1": 0.9, "beta2": 0.999, "eps": 1e-8}


class TrainingDivergedError(RuntimeError):
    def __init__(self, epoch: int, loss: float):
        self.epoch, self.loss = epoch, loss
        super().__init__(f"non-finite loss {loss!r} at epoch {epoch}")


@dataclass(frozen=True)
class SageModel:
    """``layer_dims`` lists the width of every layer, input first.

    ``[11, 16, 11]`` is three layers (input, hidden, output) joined by two
    weight matrices of shapes 16x11 and 11x16.
    """

    layer_dims: tuple[int, ...]
    weights: tuple[np.ndarray, ...]
    hidden_activation: str = "relu"
    output_activation: str = "identity"
    seed: int | None = None

    def __post_init__(self):
        if len(self.weights) != len(self.layer_dims) - 1:
            raise ValueError("need one weight matrix per pair of consecutive layers")
        for k, W in enumerate(self.weights):
            want = (self.layer_dims[k + 1], self.layer_dims[k])
            if W.shape != want:
                raise ValueError(f"weight {k} has shape {W.shape}, expected {want}")
        for a in (self.hidden_activation, self.output_activation):
            if a not in ACTIVATIONS:
                raise ValueError(f"unknown activation {a!r}")

    @property
    def n_layers(self) -> int:
        return len(self.layer_dims)

    @property
    def activation_codes(self) -> list[int]:
        n = len(self.weights)
        names = [self.hidden_activation] * (n - 1) + [self.output_activation]
        return [ACTIVATIONS[a] for a in names]

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(repr((self.layer_dims, self.hidden_activation, self.output_activation)).encode())
        for W in self.weights:
            h.update(np.ascontiguousarray(W, dtype="<f8").tobytes())
        return h.hexdigest()[:16]

    def to_dict(self) -> dict:
        return {
            "format": "xconflict-sage/1",
            "layer_dims": list(self.layer_dims),
            "hidden_activation": self.hidden_activation,
            "output_activation": self.output_activation,
            "seed": self.seed,
            # row-major, float repr round-trips exactly
            "weights": [[float(v) for v in W.ravel()] for W in self.weights],
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n")


def load_model(path: str | Path) -> SageModel:
    doc = json.loads(Path(path).read_text())
    dims = tuple(int(d) for d in doc["layer_dims"])
    weights = tuple(
        np.array(w, dtype=np.float64).reshape(dims[k + 1], dims[k])
        for k, w in enumerate(doc["weights"])
    )
    return SageModel(dims, weights, doc["hidden_activation"], doc["output_activation"], doc.get("seed"))


@dataclass(frozen=True)
class EmbeddingMatrix:
    values: np.ndarray
    layer_index: int


@dataclass(frozen=True)
class TrainingTrace:
    losses: np.ndarray
    learning_rate: float
    optimizer: dict = field(default_factory=lambda: {"name": "adam", **ADAM_DEFAULTS})
    model_fingerprint: str = ""
    backend: str = ""

    @property
    def epochs(self) -> int:
        return len(self.losses)

    def to_csv(self) -> str:
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["epoch", "loss"])
        for e, loss in enumerate(self.losses, start=1):
            w.writerow([e, "%.17g" % loss])
        return out.getvalue()


def init_model(
    layer_dims=DEFAULT_DIMS,
    seed: int = 0,
    hidden_activation: str = "relu",
    output_activation: str = "identity",
) -> SageModel:
    """Uniform variance-scaled init: each W drawn i.i.d. on [-b, b], b = sqrt(6 / (d_in + d_out))."""
    dims = tuple(int(d) for d in layer_dims)
    if len(dims) < 2 or any(d < 1 for d in dims):
        raise ValueError(f"need at least two positive layer widths, got {list(layer_dims)}")
    rng = np.random.default_rng(seed)
    weights = []
    for d_in, d_out in zip(dims[:-1], dims[1:]):
        b = np.sqrt(6.0 / (d_in + d_out))
        weights.append(rng.uniform(-b, b, size=(d_out, d_in)))
    return SageModel(dims, tuple(weights), hidden_activation, output_activation, seed)


def _check_dims(model: SageModel, graph: TemporalGraph) -> None:
    if graph.n_features != model.layer_dims[0] or graph.n_features != model.layer_dims[-1]:
        raise ValueError(
            f"graph has {graph.n_features} features; model maps "
            f"{model.layer_dims[0]} -> {model.layer_dims[-1]}"
        )


def forward(model: SageModel, graph: TemporalGraph, backend=None) -> EmbeddingMatrix:
    if graph.n_features != model.layer_dims[0]:
        raise ValueError(f"graph has {graph.n_features} features, model expects {model.layer_dims[0]}")
    backend = backend or kernels.backend
    out = backend.forward(graph.features, list(model.weights), model.activation_codes)
    return EmbeddingMatrix(out, len(model.weights))


def mse_loss(embeddings: EmbeddingMatrix, graph: TemporalGraph) -> float:
    """Squared error summed over features, averaged over vertices."""
    h = np.asarray(embeddings.values)
    if h.shape != graph.features.shape:
        raise ValueError(f"shape mismatch {h.shape} vs {graph.features.shape}")
    diff = h - graph.features
    return float(np.sum(diff * diff)) / graph.vertex_count


def loss_and_grads(model: SageModel, graph: TemporalGraph, backend=None):
    _check_dims(model, graph)
    backend = backend or kernels.backend
    return backend.loss_and_grads(graph.features, list(model.weights), model.activation_codes)


def train_checkpoints(
    model: SageModel,
    graph: TemporalGraph,
    epochs,
    learning_rate: float = 1e-3,
    backend=None,
    **adam,
) -> dict[int, tuple[SageModel, TrainingTrace]]:
    """Train once to ``max(epochs)`` and return the model at every requested epoch count.

    Identical to separate :func:`train` runs per epoch count, since training
    is deterministic and each run is a prefix of the longest one.
    """
    _check_dims(model, graph)
    epochs = sorted({int(e) for e in epochs})
    if not epochs or epochs[0] < 1:
        raise ValueError("epoch counts must be positive")
    if not learning_rate > 0:
        raise ValueError("learning rate must be positive")
    opts = {**ADAM_DEFAULTS, **adam}
    backend = backend or kernels.backend
    trace, _, snaps, failed = backend.train_adam(
        graph.features,
        list(model.weights),
        model.activation_codes,
        epochs[-1],
        float(learning_rate),
        opts["beta1"],
        opts["beta2"],
        opts["eps"],
        epochs,
    )
    if failed >= 0:
        raise TrainingDivergedError(failed + 1, float(trace[failed]))
    out = {}
    for e in epochs:
        trained = replace(model, weights=tuple(snaps[e]))
        out[e] = (
            trained,
            TrainingTrace(
                losses=np.array(trace[:e]),
                learning_rate=float(learning_rate),
                optimizer={"name": "adam", **opts},
                model_fingerprint=trained.fingerprint(),
                backend=kernels.backend_name(backend),
            ),
        )
    return out


def train(
    model: SageModel,
    graph: TemporalGraph,
    epochs: int,
    learning_rate: float = 1e-3,
    backend=None,
    **adam,
) -> tuple[SageModel, TrainingTrace]:
    """Full-batch Adam on the reconstruction loss; ``trace.losses[e]`` precedes update ``e``."""
    if int(epochs) < 1:
        raise ValueError("epochs must be >= 1")
    return train_checkpoints(model, graph, [epochs], learning_rate, backend, **adam)[int(epochs)]


def gradient_check(model: SageModel, graph: TemporalGraph, step: float = 1e-5, backend=None) -> float:
    """Largest relative gap between analytic and central-difference gradients.

    Relative error per entry is ``|a - n| / max(|a| + |n|, 1e-7)``.
    """
    if graph.vertex_count > 10:
        raise ValueError("gradient check is meant for tiny graphs (T <= 10)")
    backend = backend or kernels.backend
    acts = model.activation_codes
    _, grads = loss_and_grads(model, graph, backend)
    weights = [W.copy() for W in model.weights]
    x = graph.features

    def loss_at():
        out = backend.forward(x, weights, acts)
        d = out - x
        return float(np.sum(d * d)) / x.shape[0]

    worst = 0.0
    for W, G in zip(weights, grads):
        for idx in np.ndindex(W.shape):
            orig = W[idx]
            W[idx] = orig + step
            up = loss_at()
            W[idx] = orig - step
            down = loss_at()
            W[idx] = orig
            num = (up - down) / (2.0 * step)
            rel = abs(G[idx] - num) / max(abs(G[idx]) + abs(num), 1e-7)
            worst = max(worst, rel)
    return worst
