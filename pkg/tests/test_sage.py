import math

import numpy as np
import pytest

from xconflict import kernels
from xconflict.model import generate_dataset
from xconflict.sage import (
    EmbeddingMatrix,
    SageModel,
    TrainingDivergedError,
    forward,
    gradient_check,
    init_model,
    load_model,
    loss_and_grads,
    mse_loss,
    train,
    train_checkpoints,
)
from xconflict.temporal import TemporalGraph, build_temporal_graph

BACKENDS = sorted(kernels.available_backends())


def graph_of(x):
    x = np.ascontiguousarray(x, dtype=np.float64)
    d = x.shape[1]
    return TemporalGraph(x, tuple(f"f{j}" for j in range(d)), np.zeros(d), np.ones(d))


def naive_forward(x, weights, acts):
    """Materialises each vertex's neighbour set and averages explicitly."""
    T = len(x)
    h = [list(row) for row in x]
    for W, act in zip(weights, acts):
        nxt = []
        for t in range(T):
            members = [t] + [u for u in (t - 1, t + 1) if 0 <= u < T]
            m = [sum(h[u][i] for u in members) / len(members) for i in range(len(h[t]))]
            z = [sum(W[r][i] * m[i] for i in range(len(m))) for r in range(len(W))]
            if act == "relu":
                z = [max(v, 0.0) for v in z]
            elif act == "tanh":
                z = [math.tanh(v) for v in z]
            nxt.append(z)
        h = nxt
    return np.array(h)


def naive_loss(h, x):
    total = 0.0
    for t in range(len(x)):
        for j in range(len(x[t])):
            total += (h[t][j] - x[t][j]) ** 2
    return total / len(x)


# -- init ----------------------------------------------------------------------


def test_init_shapes_and_bounds():
    m = init_model((11, 16, 11), seed=3)
    assert m.n_layers == 3
    assert [W.shape for W in m.weights] == [(16, 11), (11, 16)]
    b = math.sqrt(6 / (11 + 16))
    assert all(np.abs(W).max() <= b for W in m.weights)
    assert math.sqrt(6 / 22) == pytest.approx(0.5222, abs=5e-5)
    sq = init_model((11, 11), seed=0)
    assert np.abs(sq.weights[0]).max() <= math.sqrt(6 / 22)


def test_init_is_seeded():
    a, b = init_model(seed=5), init_model(seed=5)
    assert all(np.array_equal(u, v) for u, v in zip(a.weights, b.weights))
    assert a.fingerprint() == b.fingerprint() != init_model(seed=6).fingerprint()


@pytest.mark.parametrize("dims", [(11,), (11, 0, 11), ()])
def test_init_rejects_bad_dims(dims):
    with pytest.raises(ValueError):
        init_model(dims)


def test_model_validates_shapes():
    with pytest.raises(ValueError, match="shape"):
        SageModel((3, 4), (np.zeros((3, 4)),))
    with pytest.raises(ValueError, match="activation"):
        SageModel((3, 3), (np.zeros((3, 3)),), hidden_activation="gelu")


def test_model_json_round_trip(tmp_path):
    m = init_model(seed=9, hidden_activation="tanh")
    m.save(tmp_path / "m.json")
    back = load_model(tmp_path / "m.json")
    assert back.fingerprint() == m.fingerprint()
    assert back.hidden_activation == "tanh"


# -- forward and loss -----------------------------------------------------------


@pytest.mark.parametrize("backend", BACKENDS)
def test_identity_fixed_point_on_constant_chain(backend):
    rng = np.random.default_rng(0)
    for _ in range(10):
        x = np.tile(rng.standard_normal(4), (3, 1))
        m = SageModel((4, 4, 4), (np.eye(4), np.eye(4)), "identity", "identity")
        out = forward(m, graph_of(x), kernels.load_backend(backend)).values
        assert np.allclose(out, x, rtol=0, atol=1e-15)


def test_single_vertex_uses_self_only():
    x = np.array([[1.0, -2.0, 3.0]])
    W = np.arange(9.0).reshape(3, 3)
    m = SageModel((3, 3), (W,), output_activation="identity")
    assert np.allclose(forward(m, graph_of(x)).values, x @ W.T)


@pytest.mark.parametrize("backend", BACKENDS)
def test_forward_matches_naive_oracle(backend):
    rng = np.random.default_rng(42)
    be = kernels.load_backend(backend)
    for i in range(50):
        T = int(rng.integers(1, 21))
        d, hdim = int(rng.integers(2, 7)), int(rng.integers(2, 9))
        hidden = ["relu", "tanh", "identity"][i % 3]
        m = init_model((d, hdim, d), seed=i, hidden_activation=hidden)
        x = rng.standard_normal((T, d))
        got = forward(m, graph_of(x), be).values
        want = naive_forward(x, [W.tolist() for W in m.weights], [hidden, "identity"])
        assert np.abs(got - want).max() < 1e-12


def test_mse_examples():
    x = np.zeros((1, 11))
    h = x.copy()
    h[0, 0] = 1.0
    assert mse_loss(EmbeddingMatrix(x.copy(), 2), graph_of(x)) == 0.0
    assert mse_loss(EmbeddingMatrix(h, 2), graph_of(x)) == 1.0


def test_mse_matches_naive_oracle():
    rng = np.random.default_rng(7)
    for _ in range(50):
        T, d = int(rng.integers(1, 30)), int(rng.integers(1, 12))
        x, h = rng.standard_normal((T, d)), rng.standard_normal((T, d))
        got = mse_loss(EmbeddingMatrix(h, 2), graph_of(x))
        assert abs(got - naive_loss(h.tolist(), x.tolist())) < 1e-12
        assert got >= 0


def test_dimension_mismatch():
    m = init_model((5, 4, 5))
    with pytest.raises(ValueError):
        forward(m, graph_of(np.zeros((3, 4))))


# -- gradients -------------------------------------------------------------------


def tiny_instance(seed):
    rng = np.random.default_rng(seed)
    T = int(rng.integers(3, 11))
    d, hdim = int(rng.integers(2, 6)), int(rng.integers(2, 7))
    hidden = ["relu", "tanh"][seed % 2]
    return init_model((d, hdim, d), seed, hidden), graph_of(rng.standard_normal((T, d)))


@pytest.mark.parametrize("backend", BACKENDS)
@pytest.mark.parametrize("seed", range(10))
def test_gradient_check(backend, seed):
    model, g = tiny_instance(seed)
    assert gradient_check(model, g, backend=kernels.load_backend(backend)) < 1e-4


def test_gradient_check_refuses_large_graphs(small_graph):
    with pytest.raises(ValueError):
        gradient_check(init_model(), small_graph)


@pytest.mark.parametrize("backend", BACKENDS)
def test_linear_closed_form_gradient(backend):
    rng = np.random.default_rng(1)
    T, d = 7, 4
    x = rng.standard_normal((T, d))
    W = rng.standard_normal((d, d))
    # chain-mean operator as an explicit matrix
    A = np.zeros((T, T))
    for t in range(T):
        members = [t] + [u for u in (t - 1, t + 1) if 0 <= u < T]
        A[t, members] = 1.0 / len(members)
    M = A @ x
    closed = (2.0 / T) * (M @ W.T - x).T @ M
    m = SageModel((d, d), (W,), output_activation="identity")
    loss, grads = loss_and_grads(m, graph_of(x), kernels.load_backend(backend))
    assert loss == pytest.approx(np.sum((M @ W.T - x) ** 2) / T, rel=1e-13)
    assert np.allclose(grads[0], closed, rtol=0, atol=1e-12)


@pytest.mark.parametrize("backend", BACKENDS)
def test_zero_features_give_zero_gradient(backend):
    m = init_model((5, 6, 5), seed=2)
    _, grads = loss_and_grads(m, graph_of(np.zeros((6, 5))), kernels.load_backend(backend))
    assert all(not G.any() for G in grads)


# -- training ----------------------------------------------------------------------


def test_epoch_bounds(small_graph):
    m = init_model()
    with pytest.raises(ValueError):
        train(m, small_graph, 0)
    with pytest.raises(ValueError):
        train(m, small_graph, 5, learning_rate=0)
    _, trace = train(m, small_graph, 1)
    assert trace.epochs == 1
    assert trace.to_csv().splitlines()[0] == "epoch,loss"


@pytest.mark.parametrize("seed", range(5))
def test_default_training_converges_smoothly(scenario, seed):
    g = build_temporal_graph(generate_dataset(scenario, 450, seed))
    _, trace = train(init_model(seed=seed), g, 1000, 1e-3)
    assert trace.losses[-1] < trace.losses[0]
    smooth = np.convolve(trace.losses, np.ones(50) / 50, mode="valid")
    assert (np.diff(smooth) <= 0).all()


def test_checkpoints_match_separate_runs(small_graph):
    m = init_model(seed=1)
    snaps = train_checkpoints(m, small_graph, [5, 20])
    for e in (5, 20):
        alone, trace = train(m, small_graph, e)
        assert alone.fingerprint() == snaps[e][0].fingerprint()
        assert trace.losses.tobytes() == snaps[e][1].losses.tobytes()


def test_training_is_bit_reproducible(small_graph):
    runs = [train(init_model(seed=4), small_graph, 50) for _ in range(2)]
    assert runs[0][0].fingerprint() == runs[1][0].fingerprint()
    assert runs[0][1].to_csv() == runs[1][1].to_csv()


def test_divergence_raises_with_epoch(small_graph):
    huge = SageModel((11, 16, 11), tuple(W * 1e200 for W in init_model().weights))
    with pytest.raises(TrainingDivergedError) as err:
        train(huge, small_graph, 5)
    assert err.value.epoch == 1
