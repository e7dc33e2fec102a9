"""Pure numpy kernels for the mean-aggregating network.

Same contract as the compiled ``_ckernels`` module. Activation codes:
0 identity, 1 rectifier, 2 tanh.
"""

import numpy as np

IDENTITY, RELU, TANH = 0, 1, 2


def chain_sum(h):
    # (self + prev) + next, matching the compiled summation order
    s = h.copy()
    s[1:] += h[:-1]
    s[:-1] += h[1:]
    return s


def chain_degrees(T):
    deg = np.full(T, 3.0)
    deg[0] -= 1.0
    deg[-1] -= 1.0
    if T == 1:
        deg[0] = 1.0
    return deg[:, None]


def chain_mean(h):
    h = np.asarray(h, dtype=np.float64)
    return chain_sum(h) / chain_degrees(h.shape[0])


def _act(z, code):
    if code == RELU:
        return np.maximum(z, 0.0)
    if code == TANH:
        return np.tanh(z)
    return z


def _act_grad(z, h, code):
    if code == RELU:
        return (z > 0.0).astype(np.float64)
    if code == TANH:
        return 1.0 - h * h
    return np.ones_like(z)


def _forward_cache(x, weights, acts):
    deg = chain_degrees(x.shape[0])
    cache = []
    h = x
    for W, code in zip(weights, acts):
        m = chain_sum(h) / deg
        z = m @ W.T
        h = _act(z, code)
        cache.append((m, z, h))
    return cache, deg


def forward(x, weights, acts):
    cache, _ = _forward_cache(np.asarray(x, dtype=np.float64), weights, acts)
    return cache[-1][2]


def loss_and_grads(x, weights, acts):
    x = np.asarray(x, dtype=np.float64)
    T = x.shape[0]
    cache, deg = _forward_cache(x, weights, acts)
    out = cache[-1][2]
    diff = out - x
    loss = float(np.sum(diff * diff)) / T
    grads = [None] * len(weights)
    dh = (2.0 / T) * diff
    for k in range(len(weights) - 1, -1, -1):
        m, z, h = cache[k]
        dz = dh * _act_grad(z, h, acts[k])
        grads[k] = dz.T @ m
        if k > 0:
            dh = chain_sum((dz @ weights[k]) / deg)
    return loss, grads


def train_adam(x, weights, acts, epochs, lr, beta1, beta2, eps, checkpoints=()):
    """Full-batch Adam. Returns (trace, weights, snapshots, failed_epoch).

    ``trace[e]`` is the loss evaluated before update ``e``; ``snapshots`` maps
    each requested epoch count to the weights after that many updates.
    ``failed_epoch`` is -1 unless a non-finite loss stopped training early.
    """
    x = np.asarray(x, dtype=np.float64)
    weights = [np.array(W, dtype=np.float64) for W in weights]
    m1 = [np.zeros_like(W) for W in weights]
    m2 = [np.zeros_like(W) for W in weights]
    want = set(int(c) for c in checkpoints)
    snapshots = {}
    if 0 in want:
        snapshots[0] = [W.copy() for W in weights]
    trace = np.empty(epochs)
    b1t = 1.0
    b2t = 1.0
    for e in range(epochs):
        # overflow surfaces as a non-finite loss and is reported below
        with np.errstate(over="ignore", invalid="ignore"):
            loss, grads = loss_and_grads(x, weights, acts)
        trace[e] = loss
        if not np.isfinite(loss):
            return trace[: e + 1], weights, snapshots, e
        b1t *= beta1
        b2t *= beta2
        for W, g, a, b in zip(weights, grads, m1, m2):
            a *= beta1
            a += (1.0 - beta1) * g
            b *= beta2
            b += (1.0 - beta2) * (g * g)
            mhat = a / (1.0 - b1t)
            vhat = b / (1.0 - b2t)
            W -= lr * mhat / (np.sqrt(vhat) + eps)
        if e + 1 in want:
            snapshots[e + 1] = [W.copy() for W in weights]
    return trace, weights, snapshots, -1
