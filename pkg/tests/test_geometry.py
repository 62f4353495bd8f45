"""Atlas, boundary metric, curvature, boundary Laplacian and height curvature."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kappaflow.fields import Grid
from kappaflow.geometry import (BoundaryLine, DegenerateCurve, DomainSpec, boundary_geometry,
                                build_atlas, curvature_vector, height_curvature, induced_metric,
                                laplace_beltrami0, laplace_beltrami0_matrix, normal_projection)

CIRCLE = BoundaryLine(1.0, False, 1.0)
SPECTRAL = BoundaryLine(1.0, True, 1.0)


def ellipse(n, a=1.0, b=2.0, phase=None):
    s = np.arange(n) / n
    t = 2 * np.pi * s if phase is None else phase(s)
    return np.stack([a * np.cos(t), b * np.sin(t)]), s


@pytest.mark.parametrize("K", [4, 6, 8])
def test_partition_of_unity(K):
    spec = DomainSpec("disk", charts=K)
    g = spec.grid(64, 32)
    at = build_atlas(spec, g)
    assert np.max(np.abs(at.partition_sum() - 1.0)) < 1e-12
    assert np.all(at.alpha >= 0) and np.all(at.alpha_int >= -1e-15)
    assert at.support_margin() > 0


def test_too_few_charts():
    spec = DomainSpec("disk", charts=2)
    with pytest.raises(ValueError):
        build_atlas(spec, spec.grid(16, 16))


def test_strip_atlas():
    spec = DomainSpec("strip")
    g = spec.grid(32, 17)
    at = build_atlas(spec, g)
    assert at.K == 1
    assert np.max(np.abs(at.partition_sum() - 1.0)) < 1e-12


def test_circle_metric_and_curvature():
    R = 1.7
    g = Grid.disk(64, 16, R)
    line = BoundaryLine.of(g)
    bg = boundary_geometry(g.X[:, :, -1], line)
    assert np.max(np.abs(bg.g - (2 * np.pi * R) ** 2)) < 1e-10
    assert np.max(np.abs(bg.H - 1.0 / R)) < 1e-10
    outward = g.X[:, :, -1] / R
    assert np.max(np.abs(bg.n - outward)) < 1e-12


def test_ellipse_metric():
    eta, s = ellipse(256)
    g, _ = induced_metric(eta, SPECTRAL)
    oracle = 4 * np.pi ** 2 * (np.sin(2 * np.pi * s) ** 2 + 4 * np.cos(2 * np.pi * s) ** 2)
    assert np.max(np.abs(g - oracle)) < 1e-9


def test_ellipse_curvature_fd_second_order():
    errs = []
    for n in (64, 128):
        eta, s = ellipse(n)
        bg = boundary_geometry(eta, CIRCLE)
        t = 2 * np.pi * s
        oracle = 2.0 / (np.sin(t) ** 2 + 4 * np.cos(t) ** 2) ** 1.5
        errs.append(np.max(np.abs(bg.H - oracle)))
    assert bg.H[0] == pytest.approx(0.25, abs=1e-3)
    assert errs[0] / errs[1] > 3.5


def test_curvature_vector_pairs_to_sqrt_g_H():
    eta, _ = ellipse(128)
    bg = boundary_geometry(eta, SPECTRAL)
    cv = curvature_vector(eta, SPECTRAL)
    assert np.max(np.abs(-np.sum(cv * bg.n, axis=0) - bg.sqrt_g * bg.H)) < 1e-10


def test_reparametrization_covariance():
    n = 256
    eta1, s = ellipse(n)
    eta2, _ = ellipse(n, phase=lambda s: 2 * np.pi * s + 0.3 * np.sin(2 * np.pi * s))
    H1 = boundary_geometry(eta1, SPECTRAL).H
    H2 = boundary_geometry(eta2, SPECTRAL).H
    t2 = 2 * np.pi * s + 0.3 * np.sin(2 * np.pi * s)
    oracle = 2.0 / (np.sin(t2) ** 2 + 4 * np.cos(t2) ** 2) ** 1.5
    assert np.max(np.abs(H2 - oracle)) < 1e-8
    assert np.max(np.abs(H1 - 2.0 / (np.sin(2 * np.pi * s) ** 2 + 4 * np.cos(2 * np.pi * s) ** 2) ** 1.5)) < 1e-8


def test_flat_strip_has_no_curvature():
    g = Grid.strip(32, 9)
    cv = curvature_vector(g.X[:, :, -1], BoundaryLine.of(g))
    assert np.max(np.abs(cv)) < 1e-14


def test_collapsed_curve():
    with pytest.raises(DegenerateCurve):
        induced_metric(np.ones((2, 32)), CIRCLE)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_projection_idempotent(seed):
    rng = np.random.default_rng(seed)
    th = rng.random(16) * 2 * np.pi
    n = np.stack([np.cos(th), np.sin(th)])
    P = normal_projection(n)
    P2 = np.einsum("ikn,kjn->ijn", P, P)
    assert np.max(np.abs(P2 - P)) < 1e-12


def test_laplace_beltrami_examples():
    n = 64
    s = np.arange(n) / n
    one = np.ones(n)
    flat = BoundaryLine(1.0, True, -1.0, "flat")
    assert np.max(np.abs(laplace_beltrami0(one, one, one, flat))) < 1e-12
    f = np.sin(2 * np.pi * s)
    assert np.max(np.abs(laplace_beltrami0(f, one, one, flat) + 4 * np.pi ** 2 * f)) < 1e-9
    # circle of radius R in the unit parameter: sqrt g = 2 pi R, angle = 2 pi s
    R = 1.5
    sg = np.full(n, 2 * np.pi * R)
    lb = laplace_beltrami0(f, sg, sg, SPECTRAL)
    assert np.max(np.abs(lb + f / R ** 2)) < 1e-9


def test_laplace_beltrami_matrix_weighted_symmetric():
    n = 32
    s = np.arange(n) / n
    sg0 = 2 + np.cos(2 * np.pi * s)
    sgk = 2 + 0.5 * np.sin(2 * np.pi * s)
    L = laplace_beltrami0_matrix(sg0, sgk, CIRCLE)
    W = sgk[:, None] * L
    assert np.max(np.abs(W - W.T)) < 1e-12


def test_height_curvature():
    n = 128
    line = CIRCLE
    assert np.max(np.abs(height_curvature(np.zeros(n), line, radius=1.3) - 1 / 1.3)) < 1e-12
    assert np.max(np.abs(height_curvature(np.full(n, 0.2), line, radius=1.3) - 1 / 1.5)) < 1e-12
    with pytest.raises(ValueError):
        height_curvature(np.full(n, 0.9), line, radius=1.0)


def test_height_curvature_matches_explicit_curve():
    n = 1024
    s = np.arange(n) / n
    th = 2 * np.pi * s
    h = 0.05 * np.sin(2 * th)
    curve = (1 + h) * np.stack([np.cos(th), np.sin(th)])
    Hc = boundary_geometry(curve, SPECTRAL).H
    Hh = height_curvature(h, SPECTRAL, radius=1.0)
    assert np.max(np.abs(Hc - Hh)) < 1e-6
