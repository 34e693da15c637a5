"""NCG accuracy and the evaluation protocols built on it.

A *classifier* here is any callable mapping an (m, d) array to m integer
labels; ``MLPModel`` and ``NNIndex.predict`` both qualify.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from importlib import resources

import numpy as np

from .dataset import OODSet
from .errors import DataError, EmptyOODSet, MissingTrueLabels, UsageError
from .nnindex import NNIndex
from .stats import TestResult, chi2_uniform, welch_t_one_sided


def _predict(classifier, X) -> np.ndarray:
    fn = getattr(classifier, "predict", classifier)
    return np.asarray(fn(X), dtype=np.int64).reshape(-1)


def _check_label_space(classifier, index: NNIndex):
    n_classes = getattr(classifier, "n_classes", None)
    if n_classes is not None and n_classes != index.ds.class_count:
        raise DataError(f"classifier predicts {n_classes} classes but the index has {index.ds.class_count}")


def ncg_agreement(classifier, index: NNIndex, ood: OODSet):
    """Per-point predictions, 1-NN labels and 1-NN distances."""
    if ood.m < 1:
        raise EmptyOODSet("empty OOD set")
    _check_label_space(classifier, index)
    _, dist, nn_labels = index.nearest_arrays(ood.points)
    return _predict(classifier, ood.points), nn_labels, dist


def ncg_accuracy(classifier, index: NNIndex, ood: OODSet) -> float:
    """Fraction of OOD points whose prediction equals their nearest training label."""
    pred, nn, _ = ncg_agreement(classifier, index, ood)
    return float(np.mean(pred == nn))


@dataclass
class NCGSplit:
    """Semantic accuracy on the NCG-correct and NCG-incorrect parts.

    An empty part has count 0 and accuracy ``None``.
    """

    acc_correct: float | None
    acc_incorrect: float | None
    n_correct: int
    n_incorrect: int
    hits_correct: np.ndarray = field(repr=False)
    hits_incorrect: np.ndarray = field(repr=False)

    def welch(self, alpha: float = 0.05) -> TestResult | None:
        """One-sided test that NCG-correct points are more often classified
        correctly; ``None`` when either part has fewer than 2 points."""
        if self.n_correct < 2 or self.n_incorrect < 2:
            return None
        return welch_t_one_sided(self.hits_correct, self.hits_incorrect, alpha)


def split_by_ncg(classifier, index: NNIndex, ood: OODSet) -> NCGSplit:
    if ood.true_labels is None:
        raise MissingTrueLabels("split_by_ncg needs OOD points with true labels")
    pred, nn, _ = ncg_agreement(classifier, index, ood)
    agree = pred == nn
    hits = (pred == ood.true_labels).astype(np.float64)
    a, b = hits[agree], hits[~agree]
    return NCGSplit(
        float(a.mean()) if a.size else None,
        float(b.mean()) if b.size else None,
        int(a.size),
        int(b.size),
        a,
        b,
    )


@dataclass
class BinStat:
    bin: int
    lo: float
    hi: float
    count: int
    mean_distance: float | None
    ncg_accuracy: float | None
    members: np.ndarray = field(repr=False)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("members")
        return d


def bin_by_distance(index: NNIndex, ood: OODSet, mode: str = "equal_count", bins: int = 5, classifier=None):
    """Group OOD points by distance to their closest training point.

    ``equal_count`` sorts by distance (index tie-break) and deals out
    ``m // bins`` points per bin, the remainder going one each to the
    closest bins. ``equal_width`` cuts [min, max] into equal intervals,
    the last one closed; a zero-width range puts everything in bin 0.
    NCG accuracy per bin is reported when a classifier is given.
    """
    if bins < 1:
        raise UsageError("bins must be >= 1")
    _, dist, nn = index.nearest_arrays(ood.points)
    m = dist.size
    agree = None if classifier is None else (_predict(classifier, ood.points) == nn)
    if mode == "equal_count":
        if m < bins:
            raise DataError(f"{m} points cannot fill {bins} equal-count bins")
        order = np.argsort(dist, kind="stable")
        sizes = [m // bins + (1 if b < m % bins else 0) for b in range(bins)]
        bounds = np.concatenate([[0], np.cumsum(sizes)])
        groups = [order[bounds[b]:bounds[b + 1]] for b in range(bins)]
    elif mode == "equal_width":
        lo, hi = float(dist.min()), float(dist.max())
        if hi == lo:
            assign = np.zeros(m, dtype=np.int64)
        else:
            assign = np.minimum(((dist - lo) / (hi - lo) * bins).astype(np.int64), bins - 1)
        groups = [np.flatnonzero(assign == b) for b in range(bins)]
    else:
        raise UsageError(f"unknown bin mode {mode!r}")

    out = []
    if mode == "equal_width":
        edges = np.linspace(dist.min(), dist.max(), bins + 1)
    for b, members in enumerate(groups):
        if mode == "equal_width":
            lo_b, hi_b = float(edges[b]), float(edges[b + 1])
        else:
            lo_b = float(dist[members].min()) if members.size else float("nan")
            hi_b = float(dist[members].max()) if members.size else float("nan")
        out.append(
            BinStat(
                b,
                lo_b,
                hi_b,
                int(members.size),
                float(dist[members].mean()) if members.size else None,
                float(agree[members].mean()) if (agree is not None and members.size) else None,
                members,
            )
        )
    return out


def coverage_within_radius(index: NNIndex, ood: OODSet, radii: dict) -> float:
    """Fraction of OOD points inside the robust-radius ball of their nearest
    training row, over the points whose nearest row has a radius."""
    rows, dist, _ = index.nearest_arrays(ood.points)
    included = np.array([int(r) in radii for r in rows])
    if not included.any():
        raise EmptyOODSet("no OOD point has a nearest training row with a known radius")
    r = np.array([radii[int(row)] for row in rows[included]], dtype=np.float64)
    return float(np.mean(dist[included] <= r))


@dataclass
class Histogram:
    edges: np.ndarray
    counts: np.ndarray
    log_scale: bool


def distance_histogram(values, log_scale: bool = False, bins: int = 10, range=None) -> Histogram:
    v = np.asarray(values, dtype=np.float64).reshape(-1)
    if log_scale:
        if np.any(v <= 0):
            raise DataError("log-scale histogram needs positive values")
        v = np.log10(v)
    if v.size and range is None and v.min() == v.max():
        return Histogram(np.array([v[0] - 0.5, v[0] + 0.5]), np.array([v.size]), log_scale)
    counts, edges = np.histogram(v, bins=bins, range=range)
    return Histogram(edges, counts, log_scale)


def ncg_chance_test(pred, nn_labels, class_count: int, alpha: float = 0.01) -> TestResult:
    """Chi-squared test that ``(prediction - 1-NN label) mod C`` is uniform.

    Under chance-level agreement every offset is equally likely; a
    significant excess at offset 0 means above-chance NCG accuracy.
    """
    offsets = (np.asarray(pred) - np.asarray(nn_labels)) % class_count
    counts = np.bincount(offsets, minlength=class_count)
    res = chi2_uniform(counts, alpha)
    return TestResult("ncg_chance_chi2", res.statistic, res.degrees_of_freedom, res.p_value, alpha, res.reject)


# ---------------------------------------------------------------- report


@dataclass
class NCGReport:
    ncg_accuracy: float
    m: int
    test_accuracy: float | None = None
    ncg_correct_test_acc: float | None = None
    ncg_incorrect_test_acc: float | None = None
    ncg_correct_count: int | None = None
    ncg_incorrect_count: int | None = None
    per_bin: list = field(default_factory=list)
    coverage: float | None = None
    tests: list = field(default_factory=list)
    levels: list = field(default_factory=list)
    slopes: dict = field(default_factory=dict)
    distances: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(_jsonable(self.to_dict()), sort_keys=True, indent=2) + "\n"

    def write_bins_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["bin", "lo", "hi", "count", "mean_distance", "ncg_accuracy"])
            for b in self.per_bin:
                w.writerow([b["bin"], b["lo"], b["hi"], b["count"], b["mean_distance"], b["ncg_accuracy"]])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if np.isfinite(f) else None
    return obj


def report_schema() -> dict:
    return json.loads(resources.files("ncg").joinpath("report.schema.json").read_text())


def evaluate(classifier, index: NNIndex, ood: OODSet, *, bins: int = 0, bin_mode: str = "equal_count",
             alpha_chi2: float = 0.01, alpha_welch: float = 0.05) -> NCGReport:
    """NCG accuracy plus everything derivable from one OOD set."""
    pred, nn, dist = ncg_agreement(classifier, index, ood)
    report = NCGReport(ncg_accuracy=float(np.mean(pred == nn)), m=ood.m)
    report.tests.append(ncg_chance_test(pred, nn, index.ds.class_count, alpha_chi2).to_dict())
    if ood.true_labels is not None:
        report.test_accuracy = float(np.mean(pred == ood.true_labels))
        split = split_by_ncg(classifier, index, ood)
        report.ncg_correct_test_acc = split.acc_correct
        report.ncg_incorrect_test_acc = split.acc_incorrect
        report.ncg_correct_count = split.n_correct
        report.ncg_incorrect_count = split.n_incorrect
        welch = split.welch(alpha_welch)
        if welch is not None:
            report.tests.append(welch.to_dict())
    if bins:
        report.per_bin = [b.to_dict() for b in bin_by_distance(index, ood, bin_mode, bins, classifier)]
    report.distances = {"ood_min": float(dist.min()), "ood_mean": float(dist.mean()), "ood_max": float(dist.max())}
    return report
