"""Labeled datasets, file formats, class hold-out and synthetic generators."""

from __future__ import annotations

import csv
import enum
import os
import struct
from dataclasses import dataclass

import numpy as np

from .errors import (
    DataError,
    EmptyFile,
    EmptyOODSet,
    InconsistentDimension,
    InvalidLevel,
    LabelOutOfRange,
    MissingFile,
    TooFewClasses,
    UsageError,
    ZeroMarginPair,
)

MAGIC = b"NCG1"
_HEADER = struct.Struct("<4sIII")


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    points: np.ndarray
    labels: np.ndarray
    class_count: int
    name: str = ""

    def __post_init__(self):
        points = np.array(self.points, dtype=np.float64, copy=True)
        labels = np.array(self.labels, dtype=np.int64, copy=True).reshape(-1)
        if points.ndim != 2 or points.shape[0] < 1 or points.shape[1] < 1:
            raise InconsistentDimension(f"points must be an n x d matrix with n, d >= 1, got {points.shape}")
        if labels.shape[0] != points.shape[0]:
            raise InconsistentDimension(f"{points.shape[0]} points but {labels.shape[0]} labels")
        if not np.all(np.isfinite(points)):
            raise DataError("non-finite coordinates")
        C = int(self.class_count)
        if labels.min() < 0 or labels.max() >= C:
            raise LabelOutOfRange(f"labels must lie in [0, {C})")
        missing = np.setdiff1d(np.arange(C), labels)
        if missing.size:
            raise DataError(f"classes without examples: {missing.tolist()}")
        _check_no_conflicting_duplicates(points, labels)
        points.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "class_count", C)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]


def _check_no_conflicting_duplicates(points, labels):
    _, inverse = np.unique(points, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    order = np.lexsort((labels, inverse))
    same_point = inverse[order][1:] == inverse[order][:-1]
    diff_label = labels[order][1:] != labels[order][:-1]
    bad = np.flatnonzero(same_point & diff_label)
    if bad.size:
        i, j = sorted((int(order[bad[0]]), int(order[bad[0] + 1])))
        raise ZeroMarginPair(f"rows {i} and {j} coincide but carry different labels")


@dataclass(frozen=True, eq=False)
class OODSet:
    """Out-of-distribution inputs, optionally with semantic labels."""

    points: np.ndarray
    true_labels: np.ndarray | None = None
    source: str = ""

    def __post_init__(self):
        points = np.array(self.points, dtype=np.float64, copy=True)
        if points.ndim != 2:
            raise InconsistentDimension(f"OOD points must be an m x d matrix, got shape {points.shape}")
        if points.shape[0] < 1:
            raise EmptyOODSet("OOD set has no points")
        if not np.all(np.isfinite(points)):
            raise DataError("non-finite coordinates in OOD set")
        points.setflags(write=False)
        object.__setattr__(self, "points", points)
        if self.true_labels is not None:
            labels = np.array(self.true_labels, dtype=np.int64, copy=True).reshape(-1)
            if labels.shape[0] != points.shape[0]:
                raise InconsistentDimension("true_labels length does not match points")
            labels.setflags(write=False)
            object.__setattr__(self, "true_labels", labels)

    @property
    def m(self) -> int:
        return self.points.shape[0]


# ---------------------------------------------------------------- file I/O


def save_dataset(ds: LabeledDataset, path, format: str | None = None) -> None:
    _write_records(path, ds.points, ds.labels, ds.class_count, format)


def save_ood(ood: OODSet, path, class_count: int, format: str | None = None) -> None:
    """Write an OOD set in the dataset format; missing labels are written as 0."""
    labels = ood.true_labels if ood.true_labels is not None else np.zeros(ood.m, dtype=np.int64)
    _write_records(path, ood.points, labels, class_count, format)


def _write_records(path, points, labels, class_count, format):
    format = format or guess_format(path)
    if format == "binary":
        n, d = points.shape
        rec = np.empty(n, dtype=[("label", "<i4"), ("x", "<f4", (d,))])
        rec["label"] = labels
        rec["x"] = points
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(MAGIC, n, d, class_count))
            fh.write(rec.tobytes())
    elif format == "csv":
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            for y, row in zip(labels, points):
                writer.writerow([int(y)] + [repr(float(v)) for v in row])
    else:
        raise UsageError(f"unknown format {format!r}")


def _read_records(path, format):
    format = format or guess_format(path)
    if not os.path.exists(path):
        raise MissingFile(f"no such file: {path}")
    if format == "binary":
        with open(path, "rb") as fh:
            raw = fh.read()
        if not raw:
            raise EmptyFile(f"{path} is empty")
        if len(raw) < _HEADER.size:
            raise DataError(f"{path}: truncated header")
        magic, n, d, C = _HEADER.unpack_from(raw)
        if magic != MAGIC:
            raise DataError(f"{path}: bad magic {magic!r}")
        dt = np.dtype([("label", "<i4"), ("x", "<f4", (d,))])
        body = raw[_HEADER.size:]
        if len(body) != n * dt.itemsize:
            raise InconsistentDimension(f"{path}: expected {n} records of dimension {d}")
        if n == 0:
            raise EmptyFile(f"{path} holds no records")
        rec = np.frombuffer(body, dtype=dt, count=n)
        points = rec["x"].astype(np.float64).reshape(n, d)
        labels = rec["label"].astype(np.int64)
        if labels.min() < 0 or labels.max() >= C:
            raise LabelOutOfRange(f"{path}: label outside declared class count {C}")
        return points, labels, int(C)
    if format == "csv":
        rows = []
        with open(path, newline="") as fh:
            for lineno, row in enumerate(csv.reader(fh), 1):
                if not row or all(not cell.strip() for cell in row):
                    continue
                if rows and len(row) != len(rows[0]):
                    raise InconsistentDimension(
                        f"{path}:{lineno}: row has {len(row)} fields, expected {len(rows[0])}"
                    )
                if len(row) < 2:
                    raise InconsistentDimension(f"{path}:{lineno}: need a label and at least one coordinate")
                rows.append(row)
        if not rows:
            raise EmptyFile(f"{path} is empty")
        try:
            labels = np.array([int(r[0]) for r in rows], dtype=np.int64)
            points = np.array([[float(v) for v in r[1:]] for r in rows], dtype=np.float64)
        except ValueError as exc:
            raise DataError(f"{path}: {exc}") from None
        if labels.min() < 0:
            raise LabelOutOfRange(f"{path}: negative label")
        return points, labels, int(labels.max()) + 1
    raise UsageError(f"unknown format {format!r}")


def load_dataset(path, format: str | None = None, class_count: int | None = None) -> LabeledDataset:
    """Load a dataset. CSV has no header, so the class count is inferred
    from the labels unless given."""
    points, labels, C = _read_records(path, format)
    if class_count is not None:
        if labels.max() >= class_count:
            raise LabelOutOfRange(f"{path}: label {labels.max()} >= declared class count {class_count}")
        C = class_count
    return LabeledDataset(points, labels, C, name=os.path.basename(str(path)))


def load_ood(path, format: str | None = None, labeled: bool = False) -> OODSet:
    points, labels, _ = _read_records(path, format)
    return OODSet(points, labels if labeled else None, source=os.path.basename(str(path)))


def guess_format(path) -> str:
    """``csv`` for a ``.csv`` extension, otherwise ``binary``; used when no format is given."""
    return "csv" if str(path).lower().endswith(".csv") else "binary"


# ---------------------------------------------------------------- hold-out


def hold_out_class(ds: LabeledDataset, c: int):
    """Remove class ``c`` from the training set and return it as OOD data.

    Returns ``(train, ood, label_map)`` where ``label_map`` maps original
    labels of the remaining classes to contiguous indices.
    """
    C = ds.class_count
    if C < 3:
        raise TooFewClasses(f"need at least 3 classes to hold one out, got {C}")
    if not 0 <= c < C:
        raise UsageError(f"class {c} out of range [0, {C})")
    keep = ds.labels != c
    label_map = {old: new for new, old in enumerate(k for k in range(C) if k != c)}
    remap = np.array([label_map.get(k, -1) for k in range(C)])
    train = LabeledDataset(ds.points[keep], remap[ds.labels[keep]], C - 1, name=f"{ds.name}-wo{c}")
    ood = OODSet(ds.points[~keep], None, source=f"{ds.name}:class{c}")
    return train, ood, label_map


# ---------------------------------------------------------------- generators

ORANGE, PURPLE = 0, 1


@dataclass(frozen=True)
class ThreeClusterSpec:
    """Two orange clusters flanking a purple one, plus an unlabeled OOD cluster.

    The purple cluster sits closer to the left orange cluster than to the
    right one; the OOD cluster lies in the wide right-hand gap, nearer to
    purple, where naturally trained networks tend to place the boundary too
    close to purple. ``ood_noise=None`` reuses ``noise``.
    """

    orange_centers: tuple = ((-1.5, 0.0), (3.0, 0.0))
    purple_center: tuple = (0.0, 0.0)
    ood_center: tuple = (1.2, 0.0)
    noise: float = 0.1
    samples_per_cluster: int = 200
    ood_noise: float | None = 0.03

    def validate(self):
        if self.samples_per_cluster < 1:
            raise UsageError("samples_per_cluster must be positive")
        ood = np.asarray(self.ood_center, dtype=float)
        d_purple = np.linalg.norm(ood - np.asarray(self.purple_center, dtype=float))
        d_orange = min(np.linalg.norm(ood - np.asarray(c, dtype=float)) for c in self.orange_centers)
        if not d_purple < d_orange:
            raise UsageError("OOD center must be strictly closer to the purple center than to any orange center")


def generate_three_cluster(spec: ThreeClusterSpec = ThreeClusterSpec(), seed: int = 0):
    spec.validate()
    rng = np.random.default_rng(seed)
    k = spec.samples_per_cluster
    centers = [*spec.orange_centers, spec.purple_center]
    chunks = [np.asarray(c, dtype=float) + spec.noise * rng.standard_normal((k, 2)) for c in centers]
    labels = np.repeat([ORANGE, ORANGE, PURPLE], k)
    ood_noise = spec.noise if spec.ood_noise is None else spec.ood_noise
    ood = np.asarray(spec.ood_center, dtype=float) + ood_noise * rng.standard_normal((k, 2))
    train = LabeledDataset(np.vstack(chunks), labels, 2, name=f"three-cluster-s{seed}")
    return train, OODSet(ood, None, source="three-cluster:ood")


# ---------------------------------------------------------------- corruption


class CorruptionKind(str, enum.Enum):
    GAUSSIAN_NOISE = "gaussian_noise"
    UNIFORM_NOISE = "uniform_noise"
    CONTRAST = "contrast"


@dataclass(frozen=True)
class CorruptionSpec:
    kind: CorruptionKind
    level: int

    def __post_init__(self):
        object.__setattr__(self, "kind", CorruptionKind(self.kind))
        if not (isinstance(self.level, (int, np.integer)) and 0 <= self.level <= 5):
            raise InvalidLevel(f"corruption level must be an integer in 0..5, got {self.level!r}")

    def describe(self) -> str:
        return f"{self.kind.value}-{self.level}"


def apply_corruption(points, spec: CorruptionSpec, seed: int = 0) -> np.ndarray:
    points = np.asarray(points, dtype=np.float64)
    if spec.level == 0:
        return points.copy()
    rng = np.random.default_rng(seed)
    if spec.kind is CorruptionKind.GAUSSIAN_NOISE:
        sigma = 0.1 * spec.level * points.std(axis=0)
        return points + sigma * rng.standard_normal(points.shape)
    if spec.kind is CorruptionKind.UNIFORM_NOISE:
        a = 0.1 * spec.level * points.std(axis=0)
        return points + rng.uniform(-1.0, 1.0, size=points.shape) * a
    mean = points.mean(axis=0)
    return mean + (1.0 - 0.15 * spec.level) * (points - mean)
