"""Monte-Carlo simulation of the NCG vs OOD-detection sample-complexity gap.

Each class j in 1..C owns three cubes of side 1/sqrt(d) whose lower corners
sit at a*e1 for a = 1 + 10j (frequent training cube), 3 + 10j (rare
training cube, probability eps) and 5 + 10j (OOD cube). A trial draws
training samples until every frequent cube has been seen (enough for 1-NN
to label every OOD point correctly) and until every training cube has been
seen (a prerequisite for detecting OOD points).
"""

from __future__ import annotations

import csv
import itertools
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import TrialCapExceeded, UsageError
from .nnindex import _distances

OFFSETS = (1.0, 3.0, 5.0)
SAFETY_CAP = 10**9
_CHUNK = 1024


@dataclass(frozen=True)
class TheoremWorld:
    C: int
    d: int
    eps: float

    def __post_init__(self):
        if self.C < 1 or self.d < 1:
            raise UsageError("need C >= 1 and d >= 1")
        if not 0.0 < self.eps < 0.5:
            raise UsageError(f"eps must lie in (0, 1/2), got {self.eps}")

    @property
    def side(self) -> float:
        return 1.0 / np.sqrt(self.d)

    def corner(self, j: int, i: int) -> np.ndarray:
        """Lower corner of cube (j, i); j in 1..C, i in {0, 1, 2}."""
        c = np.zeros(self.d)
        c[0] = OFFSETS[i] + 10.0 * j
        return c

    def in_cube(self, x, j: int, i: int, slack: float = 1e-12) -> bool:
        off = np.asarray(x, dtype=float) - self.corner(j, i)
        return bool(np.all(off >= -slack) and np.all(off <= self.side + slack))

    def _points(self, j, i, rng):
        j = np.asarray(j)
        pts = rng.uniform(0.0, self.side, size=(j.size, self.d))
        pts[:, 0] += np.asarray(OFFSETS)[np.asarray(i)] + 10.0 * j
        return pts


def sample_mu(world: TheoremWorld, rng, force=None):
    """One training draw: ``(point, label j, (j, i))``. ``force=(j, i)`` skips the
    random cube choice."""
    if force is None:
        j = int(rng.integers(1, world.C + 1))
        i = 0 if rng.uniform() >= world.eps else 1
    else:
        j, i = force
    return world._points([j], [i], rng)[0], j, (j, i)


def sample_nu(world: TheoremWorld, rng):
    j = int(rng.integers(1, world.C + 1))
    return world._points([j], [2], rng)[0], j


@dataclass(frozen=True)
class TrialRecord:
    samples_to_ncg: int
    samples_to_detect: int
    nu_correct_fraction: float


def _first_cover(codes, n_codes, seen, offset):
    """Position (1-based, plus offset) where the last unseen code first appears, or None."""
    for pos, code in enumerate(codes):
        if not seen[code]:
            seen[code] = True
            if seen.all():
                return offset + pos + 1
    return None


def trial(world: TheoremWorld, rng, n_test: int = 100, cap: int = SAFETY_CAP) -> TrialRecord:
    if n_test < 1:
        raise UsageError("n_test must be >= 1")
    C = world.C
    seen_low = np.zeros(C, dtype=bool)
    seen_all = np.zeros(2 * C, dtype=bool)
    js, is_ = [], []
    drawn = 0
    t_ncg = t_detect = None
    while t_detect is None:
        if drawn >= cap:
            raise TrialCapExceeded(f"no full cover after {cap} draws")
        n = min(_CHUNK, cap - drawn)
        j = rng.integers(1, C + 1, size=n)
        i = (rng.uniform(size=n) < world.eps).astype(np.int64)
        if t_ncg is None:
            js.append(j)
            is_.append(i)
            low = np.flatnonzero(i == 0)
            t = _first_cover(j[low] - 1, C, seen_low, 0)
            if t is not None:
                t_ncg = drawn + int(low[t - 1]) + 1
        t_detect = _first_cover((j - 1) * 2 + i, 2 * C, seen_all, drawn)
        drawn += n

    j_all = np.concatenate(js)[:t_ncg]
    i_all = np.concatenate(is_)[:t_ncg]
    train_pts = world._points(j_all, i_all, rng)
    test_j = rng.integers(1, C + 1, size=n_test)
    test_pts = world._points(test_j, np.full(n_test, 2), rng)
    D = _distances(train_pts, test_pts)
    nn_label = j_all[np.argmin(D, axis=1)]
    return TrialRecord(int(t_ncg), int(t_detect), float(np.mean(nn_label == test_j)))


def _quartiles(v):
    q1, med, q3 = np.percentile(v, [25, 50, 75])
    return {"mean": float(np.mean(v)), "median": float(med), "q1": float(q1), "q3": float(q3),
            "min": int(np.min(v)), "max": int(np.max(v))}


def harmonic(n: int) -> float:
    return float(sum(1.0 / k for k in range(1, n + 1)))


def run_trials(world: TheoremWorld, trials: int, seed: int = 0, n_test: int = 100, threads: int = 1):
    """Independent trials, trial t seeded with ``seed ^ t``."""
    if trials < 1:
        raise UsageError("trials must be >= 1")

    def one(t):
        return trial(world, np.random.default_rng(seed ^ t), n_test)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(one, range(trials)))
    return [one(t) for t in range(trials)]


def complexity_curve(world: TheoremWorld, trials: int, seed: int = 0, n_test: int = 100, threads: int = 1):
    """Aggregate stopping-time statistics; returns ``(summary, records)``."""
    records = run_trials(world, trials, seed, n_test, threads)
    ncg = np.array([r.samples_to_ncg for r in records])
    det = np.array([r.samples_to_detect for r in records])
    nu = np.array([r.nu_correct_fraction for r in records])
    H = harmonic(world.C)
    summary = {
        "C": world.C,
        "d": world.d,
        "eps": world.eps,
        "trials": trials,
        "seed": seed,
        "n_test": n_test,
        "samples_to_ncg": _quartiles(ncg),
        "samples_to_detect": _quartiles(det),
        "median_ratio": float(np.median(det) / np.median(ncg)),
        "nu_correct_fraction": float(np.mean(nu)),
        "nu_correct_min": float(np.min(nu)),
        "analytic_ncg_mean": world.C * H / (1.0 - world.eps),
        "analytic_detect_mean_rare_cubes": world.C * H / world.eps,
    }
    return summary, records


def write_records_csv(records, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["trial", "samples_to_ncg", "samples_to_detect", "nu_correct_fraction"])
        for t, r in enumerate(records):
            w.writerow([t, r.samples_to_ncg, r.samples_to_detect, repr(r.nu_correct_fraction)])


def summary_json(summary: dict) -> str:
    return json.dumps(summary, sort_keys=True, indent=2) + "\n"


# ---------------------------------------------------------------- exact geometry


def cube_corners(world: TheoremWorld, j: int, i: int) -> np.ndarray:
    base = world.corner(j, i)
    return np.array([base + world.side * np.array(bits) for bits in itertools.product((0.0, 1.0), repeat=world.d)])


def box_min_distance(lo_a, hi_a, lo_b, hi_b) -> float:
    gap = np.maximum(0.0, np.maximum(lo_a - hi_b, lo_b - hi_a))
    return float(np.sqrt(np.sum(gap * gap)))


def geometry_bounds(world: TheoremWorld):
    """Brute-force separation bounds over all classes.

    Returns ``(max_same, min_other)``: the largest distance between a point
    of an OOD cube and a point of its own frequent cube (attained at
    corners, by convexity), and the smallest distance between an OOD cube
    and any training cube of another class (corner enumeration gives an
    upper bound, the box gap the exact value; both are returned in
    ``min_other`` as the smaller of the two, which equals the box gap).
    """
    max_same = 0.0
    min_other = np.inf
    s = world.side
    for j in range(1, world.C + 1):
        ood = cube_corners(world, j, 2)
        own = cube_corners(world, j, 0)
        max_same = max(max_same, float(_distances(own, ood).max()))
        for jj in range(1, world.C + 1):
            if jj == j:
                continue
            for i in (0, 1):
                corners = cube_corners(world, jj, i)
                lo_a, lo_b = world.corner(j, 2), world.corner(jj, i)
                gap = box_min_distance(lo_a, lo_a + s, lo_b, lo_b + s)
                min_other = min(min_other, gap, float(_distances(corners, ood).min()))
    return max_same, float(min_other)
