"""Natural and regional-smoothness training of small MLPs.

The smoothness objective is cross-entropy plus ``beta`` times the largest
KL divergence between the prediction at a training point and anywhere in
its region, the inner maximum approximated by projected gradient ascent.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .dataset import LabeledDataset
from .errors import DataError, Diverged, UsageError
from .model import MLPModel, cross_entropy, forward, grad, kl_div, kl_input_grad
from .nnindex import NNIndex
from .regions import Region, RegionBatch, build_regions, pgd_step_size

METHODS = ("natural", "trades_uniform", "nonuniform_ball", "ellipsoid", "subvoronoi")
INIT_NOISE = 1e-3


@dataclass
class TrainConfig:
    method: str = "natural"
    beta: float = 6.0
    r: float = 0.5
    lam: float = 1.0
    k: int = 100
    m_samples: int = 50
    T: int = 10
    epochs: int = 200
    lr: float = 0.01
    momentum: float = 0.9
    batch_size: int = 64
    eta: float = 0.02
    thresh: float = 0.1
    seed: int = 0
    hidden: tuple = (64, 64)
    decay_epochs: tuple = ()

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        self.decay_epochs = tuple(int(e) for e in self.decay_epochs)
        if self.method not in METHODS:
            raise UsageError(f"unknown method {self.method!r}; choose from {', '.join(METHODS)}")
        if self.T < 0 or self.beta < 0 or self.epochs < 1 or self.batch_size < 1:
            raise UsageError("need T >= 0, beta >= 0, epochs >= 1, batch_size >= 1")
        if not 0.0 < self.lam <= 1.0:
            raise UsageError(f"lambda must lie in (0, 1], got {self.lam}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        d["decay_epochs"] = list(self.decay_epochs)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


# ---------------------------------------------------------------- inner maximization


def pgd_batch(model: MLPModel, X, regions: RegionBatch, T: int, alpha, rng=None, step: str = "grad"):
    """Projected ascent on KL(f(x') || f(x)) for each row of X within its own region.

    The start point is the anchor plus tiny Gaussian noise (the KL gradient
    vanishes exactly at the anchor). ``step="grad"`` takes normalized
    gradient steps of length ``alpha``; ``step="sign"`` takes ``alpha * sign(g)``.
    Returns the best iterate seen per row and its KL value.
    """
    X = np.asarray(X, dtype=np.float64)
    alpha = np.broadcast_to(np.asarray(alpha, dtype=np.float64), (X.shape[0],))
    if T == 0:
        return X.copy(), np.zeros(X.shape[0])
    if not np.all(regions.contains(X)):
        raise DataError("anchor outside its region")
    rng = rng if rng is not None else np.random.default_rng(0)
    _, q = forward(model, X)
    cur = regions.project(X + INIT_NOISE * alpha[:, None] * rng.standard_normal(X.shape))
    best = cur.copy()
    best_kl = np.full(X.shape[0], -np.inf)
    for t in range(T + 1):
        kl, g = kl_input_grad(model, cur, q)
        better = kl > best_kl
        best[better] = cur[better]
        best_kl = np.where(better, kl, best_kl)
        if t == T:
            break
        if step == "sign":
            direction = np.sign(g)
        else:
            norm = np.linalg.norm(g, axis=1, keepdims=True)
            direction = np.where(norm > 0, g / np.where(norm > 0, norm, 1.0), 0.0)
        cur = regions.project(cur + alpha[:, None] * direction)
    return best, best_kl


def pgd_inner_max(model: MLPModel, x_i, region: Region, T: int, alpha: float | None = None, rng=None, step="grad"):
    alpha = pgd_step_size(region) if alpha is None else alpha
    best, _ = pgd_batch(model, np.asarray(x_i, dtype=float)[None, :], RegionBatch.stack([region]), T, alpha, rng, step)
    return best[0]


def trades_loss(model: MLPModel, X, y, regions, beta: float, T: int, rng=None, step="grad") -> float:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if not isinstance(regions, RegionBatch):
        regions = RegionBatch.stack(regions)
    if len(regions) != X.shape[0]:
        raise UsageError(f"{len(regions)} regions for a batch of {X.shape[0]}")
    X_adv, _ = pgd_batch(model, X, regions, T, regions.step_sizes(), rng, step)
    _, p_nat = forward(model, X)
    _, p_adv = forward(model, X_adv)
    return float(np.mean(cross_entropy(p_nat, y)) + beta * np.mean(kl_div(p_adv, p_nat)))


# ---------------------------------------------------------------- adaptive radii


@dataclass
class AdaptiveRadiusState:
    eps: np.ndarray
    eps_max: np.ndarray

    @classmethod
    def start(cls, eps_max) -> "AdaptiveRadiusState":
        eps_max = np.asarray(eps_max, dtype=float)
        return cls(np.zeros_like(eps_max), eps_max.copy())

    def increment(self, i, eta: float):
        self.eps[i] = np.minimum(self.eps[i] + eta, self.eps_max[i])

    def penalize(self, i, kl_value, eta: float, thresh: float):
        hot = np.asarray(kl_value) > thresh
        self.eps[i] = np.where(hot, np.maximum(self.eps[i] - 2.0 * eta, 0.0), self.eps[i])


def adaptive_radius_update(state: AdaptiveRadiusState, i, kl_value=None, eta=0.02, thresh=0.1, phase="increment"):
    """One Algorithm-1 radius update; ``phase`` is "increment" or "penalty"."""
    if phase == "increment":
        state.increment(i, eta)
    elif phase == "penalty":
        state.penalize(i, kl_value, eta, thresh)
    else:
        raise UsageError(f"unknown phase {phase!r}")
    return state


# ---------------------------------------------------------------- training


@dataclass
class History:
    epoch: list = field(default_factory=list)
    loss: list = field(default_factory=list)
    train_acc: list = field(default_factory=list)

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epoch", "loss", "train_acc"])
            for row in zip(self.epoch, self.loss, self.train_acc):
                w.writerow([row[0], repr(float(row[1])), repr(float(row[2]))])


def train(config: TrainConfig, ds: LabeledDataset, regions: list | None = None):
    """Minibatch SGD with momentum. Returns ``(model, history)``.

    Regions are built once from the clean training set unless supplied.
    The non-uniform-ball method follows the adaptive radius schedule:
    radii start at 0, grow by ``eta`` each epoch up to their cap, and drop
    by ``2 * eta`` whenever the inner KL exceeds ``thresh``.
    """
    cfg = config
    X_all, y_all = ds.points, ds.labels
    model = MLPModel.init([ds.d, *cfg.hidden, ds.class_count], seed=cfg.seed)
    shuffle_rng = np.random.default_rng([cfg.seed, 1])
    pgd_rng = np.random.default_rng([cfg.seed, 2])
    velocity = [np.zeros_like(p) for p in model.parameters()]

    smooth = cfg.method != "natural" and cfg.beta > 0 and cfg.T > 0
    batch_regions = steps = state = None
    if smooth and cfg.method == "nonuniform_ball":
        index = NNIndex(ds)
        state = AdaptiveRadiusState.start(
            [cfg.lam * 0.5 * index.min_dist_diff_label(i)[1] for i in range(ds.n)]
        )
    elif smooth:
        if regions is None:
            regions = build_regions(ds, cfg.method, r=cfg.r, lam=cfg.lam, k=cfg.k, m_samples=cfg.m_samples, seed=cfg.seed)
        batch_regions = RegionBatch.stack(regions)
        steps = batch_regions.step_sizes()

    history = History()
    lr = cfg.lr
    for epoch in range(1, cfg.epochs + 1):
        if epoch in cfg.decay_epochs:
            lr *= 0.1
        perm = shuffle_rng.permutation(ds.n)
        losses = []
        for start in range(0, ds.n, cfg.batch_size):
            idx = perm[start:start + cfg.batch_size]
            X, y = X_all[idx], y_all[idx]
            if not smooth:
                g = grad(model, X, y, kind="ce")
            else:
                if state is not None:
                    state.increment(idx, cfg.eta)
                    radii = state.eps[idx]
                    X_adv, kl = pgd_batch(model, X, RegionBatch.balls(X, radii), cfg.T, radii / 5.0, pgd_rng, "sign")
                    state.penalize(idx, kl, cfg.eta, cfg.thresh)
                else:
                    X_adv, _ = pgd_batch(model, X, batch_regions.take(idx), cfg.T, steps[idx], pgd_rng, "grad")
                g = grad(model, X, y, kind="trades", X_adv=X_adv, beta=cfg.beta)
            if not np.isfinite(g.loss) or not all(np.all(np.isfinite(p)) for p in g.params):
                raise Diverged(f"non-finite loss at epoch {epoch}")
            losses.append(g.loss)
            for p, v, dp in zip(model.parameters(), velocity, g.params):
                v *= cfg.momentum
                v += dp
                p -= lr * v
        history.epoch.append(epoch)
        history.loss.append(float(np.mean(losses)))
        history.train_acc.append(float(np.mean(model.predict(X_all) == y_all)))
    return model, history


# ---------------------------------------------------------------- checkpoints


def save_checkpoint(path, model: MLPModel, config: dict | None = None) -> None:
    """One JSON header line, then the f64 little-endian parameter blob."""
    header = {
        "format": "ncg-mlp-1",
        "widths": list(model.widths),
        "activation": "relu",
        "seed": (config or {}).get("seed"),
        "config": config or {},
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        fh.write(model.flat().astype("<f8").tobytes())


def load_checkpoint(path):
    """Return ``(model, header)``."""
    with open(path, "rb") as fh:
        line = fh.readline()
        blob = fh.read()
    try:
        header = json.loads(line)
    except ValueError:
        raise DataError(f"{path}: not a model checkpoint") from None
    widths = header["widths"]
    flat = np.frombuffer(blob, dtype="<f8").astype(np.float64)
    weights, biases, pos = [], [], 0
    for a, b in zip(widths[:-1], widths[1:]):
        weights.append(flat[pos:pos + a * b].reshape(a, b).copy())
        pos += a * b
        biases.append(flat[pos:pos + b].copy())
        pos += b
    if pos != flat.size:
        raise DataError(f"{path}: parameter blob has {flat.size} values, expected {pos}")
    return MLPModel(list(widths), weights, biases), header
