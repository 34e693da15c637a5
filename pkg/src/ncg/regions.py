"""Smoothness regions attached to training points.

Four geometries are supported: a uniform L2 ball, a per-point ball sized by
the distance to the closest differently-labeled point, a PCA ellipsoid fit
to nearby differently-labeled points, and a (sub-sampled) sub-Voronoi
polytope. Balls are projected onto in closed form; ellipsoids and polytopes
by bisection along the segment from the anchor to the query point.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .dataset import LabeledDataset
from .errors import (
    DataError,
    DegenerateSpectrum,
    InconsistentDimension,
    InsufficientSamples,
    SingleClass,
    UsageError,
)
from .nnindex import NNIndex, _distances

TOL = 1e-9
BISECT_STEPS = 30
LAMBDA_SEARCH = (1.0, 500.0)
LAMBDA_SEARCH_STEPS = 30
MAX_INSIDE_FRACTION = 0.05


@dataclass(frozen=True, eq=False)
class UniformBall:
    anchor: int
    center: np.ndarray
    radius: float

    kind = "uniform_ball"

    def params(self):
        return {"radius": float(self.radius)}


@dataclass(frozen=True, eq=False)
class NonUniformBall:
    anchor: int
    center: np.ndarray
    eps_max: float
    lam: float

    kind = "nonuniform_ball"

    @property
    def radius(self) -> float:
        return self.eps_max

    def params(self):
        return {"eps_max": float(self.eps_max), "lambda": float(self.lam)}


@dataclass(frozen=True, eq=False)
class Ellipsoid:
    anchor: int
    center: np.ndarray
    axes: np.ndarray  # (K, d), orthonormal rows
    scales: np.ndarray  # (K,) semi-axis lengths

    kind = "ellipsoid"

    def params(self):
        return {"axes": self.axes.tolist(), "scales": self.scales.tolist()}


@dataclass(frozen=True, eq=False)
class SubVoronoi:
    anchor: int
    center: np.ndarray
    W: np.ndarray  # (J, d); constraint W @ x <= b
    b: np.ndarray  # (J,)
    lam: float

    kind = "subvoronoi"

    def params(self):
        return {"W": self.W.tolist(), "b": self.b.tolist(), "lambda": float(self.lam)}


Region = UniformBall | NonUniformBall | Ellipsoid | SubVoronoi


def region_to_json(region: Region) -> str:
    return json.dumps(
        {"variant": region.kind, "anchor": int(region.anchor), "center": region.center.tolist(), **region.params()},
        sort_keys=True,
    )


# ---------------------------------------------------------------- construction


def uniform_ball(ds: LabeledDataset, i: int, r: float) -> UniformBall:
    if r < 0:
        raise UsageError("radius must be non-negative")
    return UniformBall(i, ds.points[i].copy(), float(r))


def nonuniform_radius(index: NNIndex, i: int, lam: float) -> float:
    if not 0.0 < lam <= 1.0:
        raise UsageError(f"lambda must lie in (0, 1], got {lam}")
    _, dist = index.min_dist_diff_label(i)
    return lam * 0.5 * dist


def nonuniform_ball(index: NNIndex, i: int, lam: float) -> NonUniformBall:
    return NonUniformBall(i, index.ds.points[i].copy(), nonuniform_radius(index, i, lam), float(lam))


def principal_directions(samples, center):
    """SVD of the samples after subtracting ``center``.

    Returns (directions, singular_values), directions as rows, sorted by
    decreasing singular value.
    """
    D = np.asarray(samples, dtype=np.float64) - np.asarray(center, dtype=np.float64)
    _, s, Vt = np.linalg.svd(D, full_matrices=False)
    return Vt, s


def _quadratic_form(axes, scales, center, X):
    proj = (np.atleast_2d(X) - center) @ axes.T
    return np.sum((proj / scales) ** 2, axis=1)


def fit_ellipsoid(ds: LabeledDataset, i: int, k: int = 100, index: NNIndex | None = None) -> Ellipsoid:
    """PCA ellipsoid at row ``i`` from its ``k`` nearest differently-labeled points.

    Semi-axes are ``lam * s_m / sqrt(k)``: the RMS spread of the samples along
    each principal direction, scaled by the largest ``lam`` in [1, 500] that
    leaves at most 5% of the samples inside, then halved.
    """
    if k < 2 or k % 2:
        raise UsageError(f"k must be even and >= 2, got {k}")
    index = index or NNIndex(ds)
    center = ds.points[i]
    other = index.diff_label_rows(i)
    if other.size == 0:
        raise SingleClass("dataset has a single class")
    if other.size < k:
        raise InsufficientSamples(f"row {i}: only {other.size} differently-labeled points, need k={k}")
    dist = _distances(ds.points[other], center[None, :])[0]
    nearest = other[np.argsort(dist, kind="stable")[:k]]
    samples = ds.points[nearest]

    Vt, s = principal_directions(samples, center)
    K = min(k // 2, s.size)
    axes, s = Vt[:K], s[:K]
    if s[-1] <= 1e-12 * max(s[0], 1e-300):
        raise DegenerateSpectrum(f"row {i}: zero singular value among the top {K} directions")
    base = s / np.sqrt(k)

    limit = int(np.floor(MAX_INSIDE_FRACTION * k))
    lo, hi = LAMBDA_SEARCH
    for _ in range(LAMBDA_SEARCH_STEPS):
        mid = 0.5 * (lo + hi)
        inside = np.count_nonzero(_quadratic_form(axes, mid * base, center, samples) <= 1.0)
        if inside <= limit:
            lo = mid
        else:
            hi = mid
    scales = 0.5 * lo * base
    return Ellipsoid(i, center.copy(), axes.copy(), scales)


def build_subvoronoi(
    ds: LabeledDataset,
    index: NNIndex,
    i: int,
    m_samples: int | None = 50,
    lam: float = 1.0,
    seed: int = 0,
) -> SubVoronoi:
    """Bisector half-spaces between row ``i`` and a random subset of
    differently-labeled rows, each boundary pulled toward the anchor by ``lam``.

    ``m_samples=None`` (or any value >= the number available) keeps every
    differently-labeled row, giving the full sub-Voronoi cell.
    """
    if not 0.0 < lam <= 1.0:
        raise UsageError(f"lambda must lie in (0, 1], got {lam}")
    other = index.diff_label_rows(i)
    if other.size == 0:
        raise SingleClass("dataset has a single class")
    if m_samples is not None and m_samples < other.size:
        rng = np.random.default_rng(seed ^ i)
        other = np.sort(rng.choice(other, size=m_samples, replace=False))
    xi = ds.points[i]
    Xj = ds.points[other]
    W = Xj - xi
    if np.any(np.all(W == 0.0, axis=1)):
        raise DataError(f"row {i} coincides with a differently-labeled row")
    at_anchor = W @ xi
    b_raw = np.einsum("jd,jd->j", W, 0.5 * (xi + Xj))
    b = at_anchor + lam * (b_raw - at_anchor)
    return SubVoronoi(i, xi.copy(), W, b, float(lam))


# ---------------------------------------------------------------- batched geometry


class RegionBatch:
    """A stack of same-kind regions supporting vectorized membership and projection."""

    def __init__(self, kind, centers, **arrays):
        self.kind = kind
        self.centers = centers
        self.arrays = arrays

    @classmethod
    def stack(cls, regions) -> "RegionBatch":
        regions = list(regions)
        kinds = {r.kind for r in regions}
        if len(kinds) != 1:
            raise UsageError("cannot stack regions of different kinds")
        kind = kinds.pop()
        centers = np.stack([r.center for r in regions])
        if kind in ("uniform_ball", "nonuniform_ball"):
            return cls("ball", centers, radii=np.array([r.radius for r in regions], dtype=float))
        if kind == "ellipsoid":
            K = max(r.axes.shape[0] for r in regions)
            d = centers.shape[1]
            axes = np.zeros((len(regions), K, d))
            inv = np.zeros((len(regions), K))
            longest = np.empty(len(regions))
            for n, r in enumerate(regions):
                axes[n, : r.axes.shape[0]] = r.axes
                inv[n, : r.scales.size] = 1.0 / r.scales
                longest[n] = r.scales.max()
            return cls("ellipsoid", centers, axes=axes, inv_scales=inv, longest=longest)
        J = max(r.W.shape[0] for r in regions)
        d = centers.shape[1]
        W = np.zeros((len(regions), J, d))
        # padding rows read 0 @ x <= b with b >= 0, i.e. always satisfied
        b = np.zeros((len(regions), J))
        for n, r in enumerate(regions):
            W[n, : r.W.shape[0]] = r.W
            b[n, : r.b.size] = r.b
        return cls("subvoronoi", centers, W=W, b=b)

    @classmethod
    def balls(cls, centers, radii) -> "RegionBatch":
        return cls("ball", np.asarray(centers, dtype=float), radii=np.asarray(radii, dtype=float))

    def __len__(self):
        return self.centers.shape[0]

    def take(self, idx) -> "RegionBatch":
        return RegionBatch(self.kind, self.centers[idx], **{k: v[idx] for k, v in self.arrays.items()})

    def _excess(self, X):
        """Signed constraint value: <= 0 inside (before tolerance)."""
        c = self.centers
        if self.kind == "ball":
            return np.linalg.norm(X - c, axis=1) - self.arrays["radii"]
        if self.kind == "ellipsoid":
            proj = np.einsum("nkd,nd->nk", self.arrays["axes"], X - c)
            return np.sum((proj * self.arrays["inv_scales"]) ** 2, axis=1) - 1.0
        lhs = np.einsum("njd,nd->nj", self.arrays["W"], X)
        return np.max(lhs - self.arrays["b"], axis=1)

    def contains(self, X) -> np.ndarray:
        return self._excess(np.asarray(X, dtype=float)) <= TOL

    def project(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        c = self.centers
        if self.kind == "ball":
            r = self.arrays["radii"]
            diff = X - c
            norm = np.linalg.norm(diff, axis=1)
            outside = norm > r
            scale = np.where(outside, r / np.where(norm > 0, norm, 1.0), 1.0)
            out = np.where(outside[:, None], c + scale[:, None] * diff, X)
            return out
        inside = self.contains(X)
        if np.all(inside):
            return X.copy()
        diff = X - c
        lo = np.zeros(len(X))
        hi = np.ones(len(X))
        for _ in range(BISECT_STEPS):
            mid = 0.5 * (lo + hi)
            ok = self.contains(c + mid[:, None] * diff)
            lo = np.where(ok, mid, lo)
            hi = np.where(ok, hi, mid)
        return np.where(inside[:, None], X, c + lo[:, None] * diff)

    def step_sizes(self) -> np.ndarray:
        if self.kind == "ball":
            return self.arrays["radii"] / 5.0
        if self.kind == "ellipsoid":
            return self.arrays["longest"] / 5.0
        W, b, c = self.arrays["W"], self.arrays["b"], self.centers
        norms = np.linalg.norm(W, axis=2)
        slack = b - np.einsum("njd,nd->nj", W, c)
        dist = np.where(norms > 0, slack / np.where(norms > 0, norms, 1.0), 0.0)
        return dist.max(axis=1) / 5.0


# ---------------------------------------------------------------- single-region API


def _single(region: Region, x) -> tuple[RegionBatch, np.ndarray]:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != region.center.shape:
        raise InconsistentDimension(f"point shape {x.shape} != region dimension {region.center.shape}")
    return RegionBatch.stack([region]), x[None, :]


def contains(region: Region, x) -> bool:
    batch, X = _single(region, x)
    return bool(batch.contains(X)[0])


def project(region: Region, x) -> np.ndarray:
    batch, X = _single(region, x)
    if not batch.contains(batch.centers)[0]:
        raise DataError("region does not contain its anchor")
    return batch.project(X)[0]


def pgd_step_size(region: Region, current_radius: float | None = None) -> float:
    """PGD step: one fifth of the ball radius, the longest semi-axis, or the
    distance from the anchor to its farthest half-space."""
    if isinstance(region, NonUniformBall) and current_radius is not None:
        return current_radius / 5.0
    return float(RegionBatch.stack([region]).step_sizes()[0])


def build_regions(ds: LabeledDataset, method: str, *, r=0.5, lam=1.0, k=100, m_samples=50, seed=0, index=None):
    """Regions for every training row, in row order."""
    index = index or NNIndex(ds)
    rows = range(ds.n)
    if method == "trades_uniform":
        return [uniform_ball(ds, i, r) for i in rows]
    if method == "nonuniform_ball":
        return [nonuniform_ball(index, i, lam) for i in rows]
    if method == "ellipsoid":
        return [fit_ellipsoid(ds, i, k, index) for i in rows]
    if method == "subvoronoi":
        return [build_subvoronoi(ds, index, i, m_samples, lam, seed) for i in rows]
    raise UsageError(f"method {method!r} has no smoothness regions")
