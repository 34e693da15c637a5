"""L2 PGD attack and empirical robust-radius estimation.

Classifiers expose ``predict(X) -> labels`` and ``loss_grad(X, y) ->
(losses, input_gradients)`` for the cross-entropy of each row.
``MLPClassifier`` supplies exact gradients; ``ScoreClassifier`` wraps any
score function and differentiates it by central finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericalFailure, RadiusBracketExceeded, UsageError
from .model import MLPModel, ce_input_grad, cross_entropy, softmax


@dataclass(frozen=True)
class AttackConfig:
    T_attack: int = 40
    restarts: int = 3
    bisect_steps: int = 12
    r_hi: float = 4.0

    def __post_init__(self):
        if min(self.T_attack, self.restarts, self.bisect_steps) < 1 or not self.r_hi > 0:
            raise UsageError("attack counts must be >= 1 and r_hi > 0")


class MLPClassifier:
    def __init__(self, model: MLPModel):
        self.model = model
        self.n_classes = model.n_classes

    def predict(self, X):
        return self.model.predict(X)

    def loss_grad(self, X, y):
        return ce_input_grad(self.model, np.atleast_2d(X), np.asarray(y).reshape(-1))


class ScoreClassifier:
    """Black-box classifier from a score function ``(m, d) -> (m, C)``."""

    def __init__(self, scores, h: float = 1e-5):
        self.scores = scores
        self.h = h

    def predict(self, X):
        return np.argmax(self.scores(np.atleast_2d(X)), axis=1)

    def loss_grad(self, X, y):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        y = np.asarray(y).reshape(-1)
        loss = cross_entropy(softmax(self.scores(X)), y)
        g = np.empty_like(X)
        for k in range(X.shape[1]):
            e = np.zeros(X.shape[1])
            e[k] = self.h
            up = cross_entropy(softmax(self.scores(X + e)), y)
            down = cross_entropy(softmax(self.scores(X - e)), y)
            g[:, k] = (up - down) / (2 * self.h)
        return loss, g


def linear_classifier(w, c: float, scale: float = 1.0) -> ScoreClassifier:
    """Two-class classifier predicting 1 where ``w @ x > c``."""
    w = np.asarray(w, dtype=float)
    return ScoreClassifier(lambda X: np.c_[np.zeros(len(X)), scale * (X @ w - c)])


def _project_ball(P, x, radius):
    diff = P - x
    norm = np.linalg.norm(diff, axis=1, keepdims=True)
    scale = np.where(norm > radius, radius / np.where(norm > 0, norm, 1.0), 1.0)
    return x + diff * scale


def pgd_attack(classifier, x, y: int, radius: float, config: AttackConfig = AttackConfig(), rng=None, init=None):
    """Search B(x, radius) for a point not labeled ``y``.

    Restarts run side by side: the first from ``init`` (or ``x``), the
    rest from uniform random points of the ball. Each step moves
    ``radius / 5`` along the normalized cross-entropy gradient and projects
    back. Returns the successful point closest to ``x``, ``x`` itself if it
    is already misclassified, or ``None``.
    """
    x = np.asarray(x, dtype=float)
    if classifier.predict(x[None, :])[0] != y:
        return x.copy()
    if radius <= 0:
        return None
    rng = rng if rng is not None else np.random.default_rng(0)
    d = x.size
    R = config.restarts
    u = rng.standard_normal((R, d))
    u *= (radius * rng.uniform(size=(R, 1)) ** (1.0 / d)) / np.linalg.norm(u, axis=1, keepdims=True)
    P = x + u
    P[0] = x if init is None else init
    P = _project_ball(P, x, radius)
    labels = np.full(R, y)
    found = np.zeros(R, dtype=bool)
    best = P.copy()
    step = radius / 5.0
    for _ in range(config.T_attack):
        hit = classifier.predict(P) != y
        newly = hit & ~found
        best[newly] = P[newly]
        found |= hit
        if found.all():
            break
        _, g = classifier.loss_grad(P, labels)
        if not np.all(np.isfinite(g)):
            raise NumericalFailure("non-finite attack gradient")
        norm = np.linalg.norm(g, axis=1, keepdims=True)
        direction = np.where(norm > 0, g / np.where(norm > 0, norm, 1.0), 0.0)
        active = ~found
        P[active] = _project_ball(P[active] + step * direction[active], x, radius)
    hit = classifier.predict(P) != y
    newly = hit & ~found
    best[newly] = P[newly]
    found |= hit
    if not found.any():
        return None
    dist = np.where(found, np.linalg.norm(best - x, axis=1), np.inf)
    return best[int(np.argmin(dist))].copy()


def empirical_robust_radius(classifier, x, y: int, config: AttackConfig = AttackConfig(), rng=None) -> float:
    """Bisect for the smallest radius at which the attack succeeds.

    Every success is remembered, so a radius at least as large as a known
    adversarial distance counts as a success (monotone bracket). Returns the
    midpoint of the final bracket.
    """
    x = np.asarray(x, dtype=float)
    if classifier.predict(x[None, :])[0] != y:
        return 0.0
    rng = rng if rng is not None else np.random.default_rng(0)
    adv = pgd_attack(classifier, x, y, config.r_hi, config, rng)
    if adv is None:
        raise RadiusBracketExceeded(config.r_hi)
    known = [adv]
    lo, hi = 0.0, config.r_hi
    for _ in range(config.bisect_steps):
        mid = 0.5 * (lo + hi)
        warm = min(known, key=lambda p: np.linalg.norm(p - x))
        if np.linalg.norm(warm - x) <= mid:
            hi = mid
            continue
        adv = pgd_attack(classifier, x, y, mid, config, rng, init=_project_ball(warm[None, :], x, mid)[0])
        if adv is None:
            lo = mid
        else:
            known.append(adv)
            hi = mid
    return 0.5 * (lo + hi)
