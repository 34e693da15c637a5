"""Feed-forward ReLU network with softmax output and exact manual gradients.

Layers use the row-vector convention ``h_next = relu(h @ W + b)``; the last
layer has no activation and produces logits.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError, InconsistentDimension, UsageError

PROB_FLOOR = 1e-12


@dataclass
class MLPModel:
    widths: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @classmethod
    def init(cls, widths, seed: int = 0) -> "MLPModel":
        """He-normal weights, zero biases."""
        rng = np.random.default_rng(seed)
        widths = [int(w) for w in widths]
        if len(widths) < 2 or min(widths) < 1:
            raise UsageError(f"invalid layer widths {widths}")
        weights = [rng.standard_normal((a, b)) * np.sqrt(2.0 / a) for a, b in zip(widths[:-1], widths[1:])]
        biases = [np.zeros(b) for b in widths[1:]]
        return cls(widths, weights, biases)

    @property
    def n_classes(self) -> int:
        return self.widths[-1]

    def parameters(self) -> list[np.ndarray]:
        out = []
        for W, b in zip(self.weights, self.biases):
            out += [W, b]
        return out

    def copy(self) -> "MLPModel":
        return MLPModel(list(self.widths), [W.copy() for W in self.weights], [b.copy() for b in self.biases])

    def flat(self) -> np.ndarray:
        """Parameters in layer order, each weight matrix row-major then its bias."""
        return np.concatenate([p.ravel() for p in self.parameters()])

    def predict(self, X) -> np.ndarray:
        logits, _ = forward(self, np.atleast_2d(X))
        return np.argmax(logits, axis=-1)

    __call__ = predict


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - np.max(logits, axis=-1, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=-1, keepdims=True)


def _check_input(model, X):
    X = np.asarray(X, dtype=np.float64)
    if X.shape[-1] != model.widths[0]:
        raise InconsistentDimension(f"input dimension {X.shape[-1]} != model input width {model.widths[0]}")
    if not np.all(np.isfinite(X)):
        raise DataError("non-finite model input")
    return X


def _forward_cache(model, X):
    acts = [X]
    h = X
    last = len(model.weights) - 1
    for n, (W, b) in enumerate(zip(model.weights, model.biases)):
        z = h @ W + b
        h = z if n == last else np.maximum(z, 0.0)
        acts.append(h)
    return acts


def forward(model: MLPModel, x):
    """Return ``(logits, probs)`` for a single input or a batch of rows."""
    X = _check_input(model, x)
    logits = _forward_cache(model, X)[-1]
    return logits, softmax(logits)


def _backward(model, acts, dlogits):
    """Reverse pass; returns ([dW0, db0, dW1, ...], dX)."""
    grads = [None] * (2 * len(model.weights))
    g = dlogits
    for n in range(len(model.weights) - 1, -1, -1):
        h_in = acts[n]
        grads[2 * n] = h_in.T @ g
        grads[2 * n + 1] = g.sum(axis=0)
        g = g @ model.weights[n].T
        if n > 0:
            g = g * (acts[n] > 0)
    return grads, g


# ---------------------------------------------------------------- losses


def cross_entropy(probs, y):
    """``-log(max(probs[y], 1e-12))``, elementwise over a batch."""
    probs = np.asarray(probs, dtype=np.float64)
    y = np.asarray(y)
    C = probs.shape[-1]
    if np.any(y < 0) or np.any(y >= C):
        raise UsageError(f"label out of range [0, {C})")
    py = np.take_along_axis(np.atleast_2d(probs), np.atleast_1d(y).reshape(-1, 1), axis=1)[:, 0]
    out = -np.log(np.maximum(py, PROB_FLOOR))
    return float(out[0]) if probs.ndim == 1 else out


def kl_div(p, q):
    """KL(p || q) with both arguments floored at 1e-12 inside the log."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise InconsistentDimension(f"probability vectors differ in shape: {p.shape} vs {q.shape}")
    val = np.sum(p * (np.log(np.maximum(p, PROB_FLOOR)) - np.log(np.maximum(q, PROB_FLOOR))), axis=-1)
    return float(val) if p.ndim == 1 else val


def _ce_dlogits(probs, y):
    n = probs.shape[0]
    py = probs[np.arange(n), y]
    d = probs.copy()
    d[np.arange(n), y] -= 1.0
    d[py <= PROB_FLOOR] = 0.0
    return d


def _kl_dlogits(p, q):
    """Gradients of KL(p || q) w.r.t. the logits behind p and behind q."""
    active_p = p > PROB_FLOOR
    active_q = q > PROB_FLOOR
    g_p = np.log(np.maximum(p, PROB_FLOOR)) - np.log(np.maximum(q, PROB_FLOOR)) + active_p
    dz_p = p * (g_p - np.sum(p * g_p, axis=1, keepdims=True))
    pq = p * active_q
    dz_q = -pq + q * np.sum(pq, axis=1, keepdims=True)
    return dz_p, dz_q


@dataclass
class Gradients:
    loss: float
    params: list[np.ndarray]
    inputs: np.ndarray
    adv_inputs: np.ndarray | None = None


def grad(model: MLPModel, X, y=None, *, kind: str = "ce", X_adv=None, beta: float = 1.0) -> Gradients:
    """Exact gradients of a batch-mean loss.

    kind="ce":     mean cross-entropy at X.
    kind="kl":     mean KL(f(X_adv) || f(X)).
    kind="trades": mean cross-entropy at X + beta * mean KL(f(X_adv) || f(X)).
    """
    X = _check_input(model, np.atleast_2d(X))
    n = X.shape[0]
    acts = _forward_cache(model, X)
    probs = softmax(acts[-1])
    dz = np.zeros_like(probs)
    loss = 0.0
    if kind in ("ce", "trades"):
        y = np.asarray(y, dtype=np.int64).reshape(-1)
        loss += float(np.mean(cross_entropy(probs, y)))
        dz += _ce_dlogits(probs, y) / n
    if kind not in ("ce", "kl", "trades"):
        raise UsageError(f"unknown loss kind {kind!r}")
    weight = 1.0 if kind == "kl" else beta
    grads_adv = dX_adv = None
    if kind in ("kl", "trades"):
        X_adv = _check_input(model, np.atleast_2d(X_adv))
        acts_adv = _forward_cache(model, X_adv)
        p_adv = softmax(acts_adv[-1])
        loss += weight * float(np.mean(kl_div(p_adv, probs)))
        dz_adv, dz_nat = _kl_dlogits(p_adv, probs)
        dz += weight * dz_nat / n
        grads_adv, dX_adv = _backward(model, acts_adv, weight * dz_adv / n)
    grads, dX = _backward(model, acts, dz)
    if grads_adv is not None:
        grads = [a + b for a, b in zip(grads, grads_adv)]
    return Gradients(loss, grads, dX, dX_adv)


def kl_input_grad(model: MLPModel, X_adv, q):
    """Per-row KL(f(x') || q) and its gradient w.r.t. x', with q held fixed."""
    acts = _forward_cache(model, X_adv)
    p = softmax(acts[-1])
    dz_p, _ = _kl_dlogits(p, q)
    _, dX = _backward(model, acts, dz_p)
    return kl_div(p, q), dX


def ce_input_grad(model: MLPModel, X, y):
    """Per-row cross-entropy and its gradient w.r.t. the input."""
    acts = _forward_cache(model, X)
    probs = softmax(acts[-1])
    _, dX = _backward(model, acts, _ce_dlogits(probs, y))
    return cross_entropy(probs, y), dX
