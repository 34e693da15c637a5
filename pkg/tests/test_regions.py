import numpy as np
import pytest

from ncg.dataset import LabeledDataset
from ncg.errors import DegenerateSpectrum, InsufficientSamples, UsageError
from ncg.nnindex import NNIndex
from ncg.regions import (
    RegionBatch,
    build_regions,
    build_subvoronoi,
    contains,
    fit_ellipsoid,
    nonuniform_ball,
    pgd_step_size,
    project,
    region_to_json,
    uniform_ball,
)

from conftest import random_dataset


@pytest.fixture
def two_class(rng):
    X = np.vstack([rng.standard_normal((120, 3)) - 2.0, rng.standard_normal((120, 3)) + 2.0])
    return LabeledDataset(X, np.repeat([0, 1], 120), 2)


def test_nonuniform_radius_is_half_margin():
    ds = LabeledDataset(np.array([[0.0], [4.0]]), [0, 1], 2)
    ball = nonuniform_ball(NNIndex(ds), 0, 0.5)
    assert ball.radius == pytest.approx(1.0)


def test_uniform_projection_closed_form(rng):
    ds = LabeledDataset(np.array([[0.0, 0.0], [3.0, 4.0]]), [0, 1], 2)
    ball = uniform_ball(ds, 0, 2.0)
    np.testing.assert_allclose(project(ball, [3.0, 4.0]), [1.2, 1.6], atol=1e-15)
    np.testing.assert_array_equal(project(ball, [0.5, 0.5]), [0.5, 0.5])


def test_ellipsoid_contains_anchor_and_few_samples(two_class):
    index = NNIndex(two_class)
    e = fit_ellipsoid(two_class, 0, k=40, index=index)
    assert contains(e, e.center)
    assert e.axes.shape[0] == 3
    np.testing.assert_allclose(e.axes @ e.axes.T, np.eye(3), atol=1e-12)
    # the unhalved ellipsoid holds at most 5% of the samples, so the halved one too
    other = index.diff_label_rows(0)
    inside = sum(contains(e, two_class.points[j]) for j in other)
    assert inside <= 0.05 * 40


def test_ellipsoid_errors(rng):
    ds = random_dataset(rng, n=20, d=2, C=2)
    with pytest.raises(InsufficientSamples):
        fit_ellipsoid(ds, 0, k=100)
    with pytest.raises(UsageError):
        fit_ellipsoid(ds, 0, k=3)
    flat = LabeledDataset(np.c_[np.arange(6.0), np.zeros(6)], [0, 1, 1, 1, 1, 1], 2)
    with pytest.raises(DegenerateSpectrum):
        fit_ellipsoid(flat, 0, k=4)


def test_subvoronoi_full_cell_is_voronoi(rng):
    ds = random_dataset(rng, n=40, d=2, C=2)
    index = NNIndex(ds)
    cell = build_subvoronoi(ds, index, 0, m_samples=None)
    for q in rng.uniform(-3, 3, size=(300, 2)):
        d_anchor = np.linalg.norm(q - ds.points[0])
        d_other = np.min(np.linalg.norm(ds.points[index.diff_label_rows(0)] - q, axis=1))
        if abs(d_anchor - d_other) > 1e-9:
            assert contains(cell, q) == (d_anchor < d_other)


def test_subvoronoi_shrink_and_sampling(rng):
    ds = random_dataset(rng, n=80, d=2, C=2)
    index = NNIndex(ds)
    full = build_subvoronoi(ds, index, 3, m_samples=None)
    half = build_subvoronoi(ds, index, 3, m_samples=None, lam=0.5)
    at = full.W @ full.center
    np.testing.assert_allclose(half.b - at, 0.5 * (full.b - at), atol=1e-12)
    sub = build_subvoronoi(ds, index, 3, m_samples=5, seed=9)
    assert sub.W.shape[0] == 5
    again = build_subvoronoi(ds, index, 3, m_samples=5, seed=9)
    np.testing.assert_array_equal(sub.W, again.W)


def test_step_sizes(two_class):
    index = NNIndex(two_class)
    assert pgd_step_size(uniform_ball(two_class, 0, 1.0)) == pytest.approx(0.2)
    e = fit_ellipsoid(two_class, 0, k=40, index=index)
    assert pgd_step_size(e) == pytest.approx(e.scales.max() / 5)
    nb = nonuniform_ball(index, 0, 1.0)
    assert pgd_step_size(nb, current_radius=0.5) == pytest.approx(0.1)


def test_batch_matches_single(two_class, rng):
    regions = build_regions(two_class, "subvoronoi", m_samples=7)
    batch = RegionBatch.stack(regions[:10])
    X = two_class.points[:10] + rng.standard_normal((10, 3))
    P = batch.project(X)
    for n in range(10):
        np.testing.assert_array_equal(P[n], project(regions[n], X[n]))


def test_region_json(two_class):
    assert '"variant": "uniform_ball"' in region_to_json(uniform_ball(two_class, 0, 1.0))


def test_ball_projection_is_closest_point(rng):
    ds = LabeledDataset(np.array([[0.0, 0.0, 0.0], [5.0, 0.0, 0.0]]), [0, 1], 2)
    ball = uniform_ball(ds, 0, 1.3)
    for _ in range(200):
        x = rng.standard_normal(3) * 3
        p = project(ball, x)
        other = rng.standard_normal(3)
        other *= rng.uniform() ** (1 / 3) * 1.3 / np.linalg.norm(other)
        assert np.linalg.norm(p - x) <= np.linalg.norm(other - x) + 1e-12


def test_nonuniform_ball_inside_full_cell(rng):
    ds = random_dataset(rng, n=50, d=3, C=3)
    index = NNIndex(ds)
    for i in range(0, 50, 7):
        ball = nonuniform_ball(index, i, 1.0)
        cell = build_subvoronoi(ds, index, i, m_samples=None)
        for _ in range(150):
            u = rng.standard_normal(3)
            u *= rng.uniform() ** (1 / 3) * ball.radius / np.linalg.norm(u)
            assert contains(cell, ball.center + u)


def test_shrinkage_is_monotone(rng, two_class):
    index = NNIndex(two_class)
    for i in (0, 5, 200):
        big = build_subvoronoi(two_class, index, i, m_samples=15, lam=0.9, seed=1)
        small = build_subvoronoi(two_class, index, i, m_samples=15, lam=0.4, seed=1)
        nb_big, nb_small = nonuniform_ball(index, i, 0.9), nonuniform_ball(index, i, 0.4)
        for x in two_class.points[i] + 2 * rng.standard_normal((200, 3)):
            if contains(small, x):
                assert contains(big, x)
            if contains(nb_small, x):
                assert contains(nb_big, x)
