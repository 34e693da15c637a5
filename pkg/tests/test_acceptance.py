"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -s`` to see the summary lines.
"""

from __future__ import annotations

import json
import pathlib
import time

import numpy as np
import pytest

from ncg.attacks import AttackConfig, empirical_robust_radius, linear_classifier
from ncg.cli import main as cli_main
from ncg.dataset import CorruptionSpec, LabeledDataset, OODSet, ThreeClusterSpec, apply_corruption, generate_three_cluster
from ncg.evaluation import evaluate, ncg_accuracy, split_by_ncg
from ncg.model import MLPModel, forward, grad, kl_input_grad
from ncg.nnindex import NNIndex
from ncg.regions import RegionBatch, UniformBall, build_regions, fit_ellipsoid, nonuniform_ball
from ncg.stats import chi2_sf, chi2_uniform, ls_slope, student_t_sf, welch_t_one_sided
from ncg.theoremsim import TheoremWorld, complexity_curve, cube_corners
from ncg.trainer import TrainConfig, train
from ncg.nnindex import _distances

FIXTURES = pathlib.Path(__file__).parent / "fixtures"
PILOT = json.loads((FIXTURES / "fig3_pilot.json").read_text())


def verdict(number: int, ok: bool, detail: str):
    print(f"\nCRITERION {number:>2} {'PASS' if ok else 'FAIL'}: {detail}")
    assert ok, detail


# ---------------------------------------------------------------- 1 and 10 share trained models


@pytest.fixture(scope="module")
def fig3_runs():
    """Every method trained on every pilot seed of the default three-cluster data."""
    spec = ThreeClusterSpec()
    runs = {}
    start = time.perf_counter()
    for seed in PILOT["seeds"]:
        train_ds, ood = generate_three_cluster(spec, seed)
        index = NNIndex(train_ds)
        for method, overrides in PILOT["methods"].items():
            cfg = TrainConfig(method=method, seed=seed, **overrides)
            model, hist = train(cfg, train_ds)
            runs[method, seed] = {
                "model": model,
                "train_acc": hist.train_acc[-1],
                "ncg": ncg_accuracy(model, index, ood),
                "index": index,
            }
    return runs, time.perf_counter() - start


def test_criterion_01_fig3_replication(fig3_runs):
    runs, elapsed = fig3_runs
    th = PILOT["thresholds"]
    med = {m: float(np.median([runs[m, s]["ncg"] for s in PILOT["seeds"]])) for m in PILOT["methods"]}
    min_acc = min(r["train_acc"] for r in runs.values())
    gap = med["subvoronoi"] - med["natural"]
    ok = (
        med["subvoronoi"] >= th["subvoronoi_median_ncg"]
        and gap >= th["gap_over_natural"]
        and min_acc >= th["train_accuracy"]
        and elapsed < th["runtime_seconds"]
    )
    detail = (
        "median NCG " + ", ".join(f"{m}={v:.3f}" for m, v in med.items())
        + f"; gap {gap:.3f}; min train acc {min_acc:.3f}; {elapsed:.0f}s"
    )
    verdict(1, ok, detail)


# ---------------------------------------------------------------- 2


def test_criterion_02_theorem_separation():
    start = time.perf_counter()
    summary, records = complexity_curve(TheoremWorld(10, 5, 0.05), 200, seed=1)
    elapsed = time.perf_counter() - start
    ncg_med = summary["samples_to_ncg"]["median"]
    det_med = summary["samples_to_detect"]["median"]
    ratio = summary["median_ratio"]
    all_correct = all(r.nu_correct_fraction == 1.0 for r in records)
    ok = 20 <= ncg_med <= 60 and det_med >= 300 and ratio >= 5 and all_correct and elapsed < 30
    verdict(2, ok, f"median ncg {ncg_med}, detect {det_med}, ratio {ratio:.1f}, "
                   f"all nu correct {all_correct}, {elapsed:.1f}s")


# ---------------------------------------------------------------- 3


def test_criterion_03_geometric_bounds():
    """Corner enumeration of every cube pair, compared with the stated 5 / 6 bounds."""
    slack = 1e-12
    worst_same, worst_other, where = 0.0, np.inf, None
    for d in range(1, 7):
        for C in range(1, 6):
            w = TheoremWorld(C, d, 0.05)
            for j in range(1, C + 1):
                ood = cube_corners(w, j, 2)
                worst_same = max(worst_same, float(_distances(cube_corners(w, j, 0), ood).max()))
                for jj in range(1, C + 1):
                    if jj == j:
                        continue
                    for i in (0, 1):
                        dist = float(_distances(cube_corners(w, jj, i), ood).min())
                        if dist < worst_other:
                            worst_other, where = dist, (d, C, j, jj, i)
    ok = worst_same <= 5.0 + slack and worst_other >= 6.0 - slack
    verdict(3, ok, f"max same-class distance {worst_same:.6f} (bound 5); min other-class corner distance "
                   f"{worst_other:.6f} at (d, C, j, j', i)={where} (bound 6)")


# ---------------------------------------------------------------- 4


def _rel_err(a, b):
    a, b = np.ravel(a), np.ravel(b)
    scale = max(np.linalg.norm(a), np.linalg.norm(b), 1e-300)
    return float(np.linalg.norm(a - b) / scale)


def _fd_params(model, loss, h=1e-6):
    out = []
    for p in model.parameters():
        g = np.zeros_like(p)
        for k in np.ndindex(p.shape):
            old = p[k]
            p[k] = old + h
            up = loss()
            p[k] = old - h
            down = loss()
            p[k] = old
            g[k] = (up - down) / (2 * h)
        out.append(g)
    return out


def test_criterion_04_gradient_oracle():
    start = time.perf_counter()
    worst = 0.0
    for net in range(50):
        rng = np.random.default_rng(1000 + net)
        d, C = int(rng.integers(2, 5)), int(rng.integers(2, 5))
        widths = [d, *rng.integers(3, 9, size=int(rng.integers(1, 3))).tolist(), C]
        model = MLPModel.init(widths, seed=net)
        # He init leaves biases at zero; random biases keep pre-activations off the ReLU kink
        for b in model.biases:
            b += 0.1 * rng.standard_normal(b.shape)
        X = rng.standard_normal((4, d))
        Xa = X + 0.3 * rng.standard_normal((4, d))
        y = rng.integers(0, C, 4)
        beta = float(rng.uniform(0.5, 6.0))
        for kind in ("ce", "kl", "trades"):
            g = grad(model, X, y, kind=kind, X_adv=Xa, beta=beta)
            fd = _fd_params(model, lambda: grad(model, X, y, kind=kind, X_adv=Xa, beta=beta).loss)
            worst = max(worst, _rel_err(np.concatenate([a.ravel() for a in g.params]),
                                        np.concatenate([b.ravel() for b in fd])))
        # input gradient of the inner objective with the clean prediction held fixed
        q = forward(model, X)[1]
        _, gx = kl_input_grad(model, Xa, q)
        fdx = np.zeros_like(Xa)
        for k in np.ndindex(Xa.shape):
            old = Xa[k]
            Xa[k] = old + 1e-6
            up = kl_input_grad(model, Xa, q)[0].sum()
            Xa[k] = old - 1e-6
            down = kl_input_grad(model, Xa, q)[0].sum()
            Xa[k] = old
            fdx[k] = (up - down) / 2e-6
        worst = max(worst, _rel_err(gx, fdx))
    elapsed = time.perf_counter() - start
    verdict(4, worst < 1e-6 and elapsed < 60, f"worst relative error {worst:.2e} over 50 networks, {elapsed:.1f}s")


# ---------------------------------------------------------------- 5


def _random_regions(variant, rng, count):
    """Regions of one variant with random anchors, plus query points."""
    X = np.vstack([rng.normal(-1.5, 1.0, (150, 3)), rng.normal(1.5, 1.0, (150, 3))])
    ds = LabeledDataset(X, np.repeat([0, 1], 150), 2)
    index = NNIndex(ds)
    rows = rng.integers(0, ds.n, count)
    if variant == "uniform_ball":
        regions = [UniformBall(int(i), ds.points[i].copy(), float(rng.uniform(0.05, 2.0))) for i in rows]
    elif variant == "nonuniform_ball":
        regions = [nonuniform_ball(index, int(i), float(rng.uniform(0.1, 1.0))) for i in rows]
    elif variant == "ellipsoid":
        cache = {}
        regions = []
        for i in rows:
            if int(i) not in cache:
                cache[int(i)] = fit_ellipsoid(ds, int(i), k=40, index=index)
            regions.append(cache[int(i)])
    else:
        all_regions = build_regions(ds, "subvoronoi", lam=0.8, m_samples=20, index=index)
        regions = [all_regions[i] for i in rows]
    centers = np.stack([r.center for r in regions])
    queries = centers + rng.standard_normal((count, 3)) * rng.uniform(0.1, 6.0, (count, 1))
    return regions, queries


@pytest.mark.parametrize("variant", ["uniform_ball", "nonuniform_ball", "ellipsoid", "subvoronoi"])
def test_criterion_05_projection(variant):
    rng = np.random.default_rng(5)
    regions, Q = _random_regions(variant, rng, 1000)
    batch = RegionBatch.stack(regions)
    P = batch.project(Q)
    feasible = bool(np.all(batch._excess(P) <= 1e-9))
    c = batch.centers
    if batch.kind == "ball":
        r = batch.arrays["radii"]
        norm = np.linalg.norm(Q - c, axis=1)
        closed = np.where((norm > r)[:, None], c + (Q - c) * (r / norm)[:, None], Q)
        geom = float(np.max(np.abs(P - closed)))
        ok = feasible and geom <= 1e-12
        what = f"max deviation from closed form {geom:.1e}"
    else:
        # collinearity: P - c is parallel to Q - c with a coefficient in [0, 1]
        u, v = Q - c, P - c
        t = np.einsum("nd,nd->n", u, v) / np.einsum("nd,nd->n", u, u)
        geom = float(np.max(np.linalg.norm(v - t[:, None] * u, axis=1)))
        ok = feasible and geom <= 1e-9 and bool(np.all((t >= -1e-12) & (t <= 1 + 1e-12)))
        what = f"max distance from segment [x_i, x] {geom:.1e}"
    verdict(5, ok, f"{variant}: 1000 pairs, feasible within 1e-9 {feasible}, {what}")


# ---------------------------------------------------------------- 6


def _scan(points, labels, q):
    best_row, best = -1, np.inf
    for i in range(points.shape[0]):
        s = float(np.sum((points[i] - q) ** 2))
        if s < best:
            best_row, best = i, s
    return best_row, best, int(labels[best_row])


def test_criterion_06_nn_oracle():
    mismatches = 0
    worst = 0.0
    for t in range(50):
        rng = np.random.default_rng(600 + t)
        n, d = int(rng.integers(2, 501)), int(rng.integers(1, 33))
        X = rng.standard_normal((n, d))
        if t % 5 == 0:
            X = np.round(X)  # integer grid: forces exact distance ties
            X = np.unique(X, axis=0)
            n = X.shape[0]
        y = rng.integers(0, 3, n)
        y[:3 if n >= 3 else n] = np.arange(min(n, 3))
        C = int(y.max()) + 1
        ds = LabeledDataset(X, y, C)
        index = NNIndex(ds)
        Q = rng.standard_normal((100, d))
        if t % 5 == 0:
            Q = np.round(Q * 2) / 2
        rows, dist, labels = index.nearest_arrays(Q)
        for k in range(100):
            r, sq, lab = _scan(ds.points, ds.labels, Q[k])
            if rows[k] != r or labels[k] != lab:
                mismatches += 1
            worst = max(worst, abs(dist[k] - np.sqrt(sq)))
    verdict(6, mismatches == 0 and worst <= 1e-12,
            f"{mismatches} index/label mismatches, max distance difference {worst:.1e} over 5000 queries")


# ---------------------------------------------------------------- 7


def test_criterion_07_ncg_identities():
    failures = []
    for t in range(20):
        rng = np.random.default_rng(700 + t)
        C = int(rng.integers(2, 5))
        n, d = 80, int(rng.integers(2, 6))
        y = np.concatenate([np.arange(C), rng.integers(0, C, n - C)])
        ds = LabeledDataset(rng.standard_normal((n, d)), y, C)
        index = NNIndex(ds)
        ood = OODSet(rng.standard_normal((60, d)) * 3, rng.integers(0, C, 60))
        if ncg_accuracy(index, index, ood) != 1.0:
            failures.append("1-NN wrapper")
        model = MLPModel.init([d, 8, C], seed=t)
        train_acc = float(np.mean(model.predict(ds.points) == ds.labels))
        if ncg_accuracy(model, index, OODSet(ds.points)) != train_acc:
            failures.append("OOD = train set")
        split = split_by_ncg(model, index, ood)
        total = float(np.mean(model.predict(ood.points) == ood.true_labels))
        parts = [(split.acc_correct or 0.0) * split.n_correct, (split.acc_incorrect or 0.0) * split.n_incorrect]
        if abs(sum(parts) / ood.m - total) > 1e-12:
            failures.append("split recombination")
    verdict(7, not failures, f"20 random datasets, failures: {failures or 'none'}")


# ---------------------------------------------------------------- 8


def test_criterion_08_statistics_oracle():
    oracle = json.loads((FIXTURES / "stats_oracle.json").read_text())
    err = max(
        [abs(chi2_sf(c["x"], c["df"]) - c["p"]) for c in oracle["chi2_sf"]]
        + [abs(student_t_sf(c["t"], c["df"]) - c["p"]) for c in oracle["t_sf"]]
    )
    uniform = chi2_uniform([10, 10, 10, 10]).p_value
    same = np.array([0.0, 1.0, 1.0, 0.0, 1.0, 1.0])
    welch = welch_t_one_sided(same, same.copy()).p_value
    verdict(8, err <= 1e-8 and uniform == 1.0 and welch == 0.5,
            f"max |p - oracle| {err:.1e}; uniform counts p={uniform}; identical samples p={welch}")


# ---------------------------------------------------------------- 9


def test_criterion_09_robust_radius():
    cfg = AttackConfig(bisect_steps=12, r_hi=4.0)
    worst = 0.0
    for t in range(20):
        rng = np.random.default_rng(900 + t)
        d = int(rng.integers(2, 8))
        w = rng.standard_normal(d)
        x = rng.standard_normal(d)
        true = float(rng.uniform(0.2, 3.5))
        c = float(w @ x + true * np.linalg.norm(w))  # boundary w @ z = c at distance `true`
        est = empirical_robust_radius(linear_classifier(w, c), x, 0, cfg, rng)
        worst = max(worst, abs(est - true) / true)
    verdict(9, worst <= 0.02, f"worst relative error {worst:.4f} over 20 linear classifiers")


# ---------------------------------------------------------------- 10


def test_criterion_10_corruption_trend(fig3_runs):
    runs, _ = fig3_runs
    spec = ThreeClusterSpec()
    passed = total = 0
    slopes_ok = True
    for seed in PILOT["seeds"]:
        test_ds, _ = generate_three_cluster(spec, seed + PILOT["test_seed_offset"])
        for method in PILOT["methods"]:
            run = runs[method, seed]
            levels, ncg, acc = [], [], []
            for level in range(6):
                pts = apply_corruption(test_ds.points, CorruptionSpec("gaussian_noise", level), seed + level)
                rep = evaluate(run["model"], run["index"], OODSet(pts, test_ds.labels))
                levels.append(level)
                ncg.append(rep.ncg_accuracy)
                acc.append(rep.test_accuracy)
                if level >= 2:
                    total += 1
                    welch = next((t for t in rep.tests if t["name"] == "welch_t_one_sided"), None)
                    passed += bool(welch and welch["reject"])
            slopes_ok &= all(np.isfinite(ls_slope(levels, v)[0]) for v in (ncg, acc))
    need = PILOT["thresholds"]["welch_pass_fraction"]
    verdict(10, slopes_ok and passed > need * total,
            f"Welch passes in {passed}/{total} (method, level>=2, seed) cells (need > {need:.0%}); slopes finite {slopes_ok}")


# ---------------------------------------------------------------- 11


def test_criterion_11_cli_determinism(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    commands = [
        ["gen", "three-cluster", "--seed", "7", "--out", "tr.ncg", "--ood", "ood.ncg", "--test", "te.ncg",
         "--report", "gen.json"],
        ["gen", "theorem", "--C", "3", "--d", "2", "--n", "60", "--out", "th.csv", "--ood", "tho.csv",
         "--report", "gen_th.json"],
        ["gen", "holdout", "--data", "th.csv", "--class", "1", "--out", "ho.csv", "--ood", "hoo.csv",
         "--report", "gen_ho.json"],
        ["gen", "corrupt", "--data", "te.ncg", "--kind", "gaussian_noise", "--level", "3", "--out", "co.ncg",
         "--report", "gen_co.json"],
        ["train", "--data", "tr.ncg", "--method", "subvoronoi", "--epochs", "3", "--m-samples", "10",
         "--out", "m.ckpt", "--history", "h.csv"],
        ["eval", "--model", "m.ckpt", "--data", "tr.ncg", "--ood", "te.ncg", "--ood-labeled", "--bins", "3",
         "--radius-samples", "2", "--corrupt", "gaussian_noise", "--levels", "0,2,4", "--bins-csv", "b.csv",
         "--svg-dir", "svg", "--out", "rep.json"],
        ["theorem", "--C", "4", "--d", "3", "--trials", "30", "--seed", "2", "--out", "thm.json",
         "--csv", "thm.csv", "--svg", "thm.svg", "--threads", "2"],
    ]
    reports = ["gen.json", "gen_th.json", "gen_ho.json", "gen_co.json", "m.ckpt", "rep.json", "thm.json"]
    for argv in commands:
        assert cli_main(argv) == 0, argv

    def snapshot():
        files = sorted(p for p in tmp_path.rglob("*") if p.is_file() and not p.name.endswith(".orig"))
        return {str(p.relative_to(tmp_path)): p.read_bytes() for p in files}

    first = snapshot()
    for name in reports:
        (tmp_path / (name + ".orig")).write_bytes((tmp_path / name).read_bytes())
    for p in list(tmp_path.rglob("*")):
        if p.is_file() and not p.name.endswith(".orig"):
            p.unlink()
    for name in reports:
        assert cli_main(["rerun", name + ".orig"]) == 0, name
    second = snapshot()
    differ = sorted(k for k in first if first.get(k) != second.get(k))
    verdict(11, not differ and first.keys() == second.keys(),
            f"{len(commands)} commands, {len(first)} output files, byte differences: {differ or 'none'}")
