"""Exact L2 nearest-neighbor queries by brute force.

Squared distances are accumulated one coordinate at a time, left to right,
so a query gives bit-identical results whether it runs alone or inside a
batch. Ties go to the smallest row index.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import NamedTuple

import numpy as np

from .dataset import LabeledDataset
from .errors import DataError, InconsistentDimension, SingleClass, ZeroMarginPair

_CHUNK = 256


class Neighbor(NamedTuple):
    row: int
    distance: float
    label: int


def _distances(X: np.ndarray, Q: np.ndarray) -> np.ndarray:
    """L2 distances between each row of Q (m x d) and each row of X (n x d)."""
    acc = np.zeros((Q.shape[0], X.shape[0]))
    for k in range(X.shape[1]):
        diff = Q[:, k, None] - X[None, :, k]
        acc += diff * diff
    return np.sqrt(acc)


class NNIndex:
    def __init__(self, ds: LabeledDataset):
        self.ds = ds
        self._X = ds.points
        self._y = ds.labels

    @property
    def d(self) -> int:
        return self._X.shape[1]

    def _check(self, Q):
        Q = np.asarray(Q, dtype=np.float64)
        if Q.ndim != 2 or Q.shape[1] != self.d:
            raise InconsistentDimension(f"query dimension {Q.shape[-1]} != index dimension {self.d}")
        if not np.all(np.isfinite(Q)):
            raise DataError("non-finite query coordinates")
        return Q

    def nearest(self, q) -> Neighbor:
        q = np.asarray(q, dtype=np.float64)
        if q.ndim != 1:
            raise InconsistentDimension("nearest expects a single d-vector")
        rows, dists = self._query(self._check(q[None, :]))
        r = int(rows[0])
        return Neighbor(r, float(dists[0]), int(self._y[r]))

    def _query(self, Q):
        rows = np.empty(Q.shape[0], dtype=np.int64)
        dists = np.empty(Q.shape[0])
        for start in range(0, Q.shape[0], _CHUNK):
            D = _distances(self._X, Q[start:start + _CHUNK])
            idx = np.argmin(D, axis=1)
            rows[start:start + _CHUNK] = idx
            dists[start:start + _CHUNK] = D[np.arange(D.shape[0]), idx]
        return rows, dists

    def nearest_arrays(self, queries, threads: int = 1):
        """Vectorized form of :meth:`nearest_batch`: (rows, distances, labels)."""
        Q = self._check(queries)
        if threads <= 1 or Q.shape[0] <= _CHUNK:
            rows, dists = self._query(Q)
        else:
            parts = [Q[s:s + _CHUNK] for s in range(0, Q.shape[0], _CHUNK)]
            with ThreadPoolExecutor(max_workers=threads) as pool:
                results = list(pool.map(self._query, parts))
            rows = np.concatenate([r for r, _ in results])
            dists = np.concatenate([d for _, d in results])
        return rows, dists, self._y[rows]

    def nearest_batch(self, queries, threads: int = 1) -> list[Neighbor]:
        rows, dists, labels = self.nearest_arrays(queries, threads=threads)
        return [Neighbor(int(r), float(d), int(y)) for r, d, y in zip(rows, dists, labels)]

    def min_dist_diff_label(self, i: int) -> tuple[int, float]:
        """Closest row whose label differs from row ``i``."""
        y = self._y
        other = np.flatnonzero(y != y[i])
        if other.size == 0:
            raise SingleClass("dataset has a single class")
        D = _distances(self._X[other], self._X[i][None, :])[0]
        k = int(np.argmin(D))
        if D[k] == 0.0:
            raise ZeroMarginPair(f"row {i} coincides with differently-labeled row {int(other[k])}")
        return int(other[k]), float(D[k])

    def diff_label_rows(self, i: int) -> np.ndarray:
        return np.flatnonzero(self._y != self._y[i])

    def predict(self, queries) -> np.ndarray:
        """1-NN classifier."""
        return self.nearest_arrays(np.atleast_2d(queries))[2]
