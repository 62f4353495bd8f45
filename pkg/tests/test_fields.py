"""Grid calculus, pull-back caches, Sobolev norms, composition and serialization."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kappaflow.fields import (Field, Grid, OutsideHull, WindowBreach, compose, det2, inv2,
                              matmul2, piola_residual, pullback_cache, random_smooth_field,
                              sobolev_norm)
from kappaflow.smoothing import fit_slope


def test_grid_size_guard():
    with pytest.raises(ValueError):
        Grid.strip(4, 16)
    with pytest.raises(ValueError):
        Grid.disk(15, 16)


def test_quadratic_gradient_exact_on_box():
    g = Grid.box(16, 12)
    x, y = g.X
    gr = g.grad(x ** 2)
    inner = (slice(2, -2), slice(2, -2))
    assert np.max(np.abs(gr[0][inner] - 2 * x[inner])) < 1e-10
    assert np.max(np.abs(gr[1][inner])) < 1e-10


def test_rotation_curl_and_div_on_box():
    g = Grid.box(12, 12)
    x, y = g.X
    F = np.stack([-y, x])
    assert np.max(np.abs(g.curl2d(F) - 2.0)) < 1e-12
    assert np.max(np.abs(g.div(F))) < 1e-12


def test_rotation_curl_on_disk_is_fourth_order():
    errs = []
    for n in (32, 64):
        g = Grid.disk(n, n)
        x, y = g.X
        errs.append(np.max(np.abs(g.curl2d(np.stack([-y, x])) - 2.0)))
    assert errs[0] / errs[1] > 10.0


def test_spectral_derivative_on_strip():
    g = Grid.strip(32, 9)
    x = g.X[0]
    d = g.grad(np.sin(2 * np.pi * x))
    assert np.max(np.abs(d[0] - 2 * np.pi * np.cos(2 * np.pi * x))) < 1e-12
    assert np.max(np.abs(d[1])) < 1e-12


def test_summation_by_parts_interior_support():
    # fields supported away from the top and bottom rows: no boundary flux
    g = Grid.strip(32, 33)
    x, y = g.X
    bump = np.where(np.abs(y - 0.5) < 0.3, np.cos(np.pi * (y - 0.5) / 0.6) ** 4, 0.0)
    f = bump * np.cos(2 * np.pi * x)
    F = np.stack([bump * np.sin(4 * np.pi * x), bump * np.cos(2 * np.pi * x) * (y - 0.5)])
    lhs = np.sum(g.weights * np.sum(g.grad(f) * F, axis=0)) + np.sum(g.weights * f * g.div(F))
    assert abs(lhs) < 1e-10


def test_identity_cache():
    g = Grid.disk(16, 16)
    c = pullback_cache(g, g.X)
    eye = np.eye(2)[:, :, None, None]
    assert np.max(np.abs(c.a - eye)) < 1e-12
    assert np.max(np.abs(c.J - 1.0)) < 1e-12
    assert np.max(np.abs(c.cof - eye)) < 1e-12


def test_shear_cache_against_closed_form_inverse():
    errs = []
    for n2 in (33, 65):
        g = Grid.strip(16, n2)
        x, y = g.X
        eta = g.X + np.stack([0.01 * np.sin(2 * np.pi * y), 0 * y])
        c = pullback_cache(g, eta)
        s = 0.02 * np.pi * np.cos(2 * np.pi * y)
        oracle = np.stack([np.stack([np.ones_like(s), -s]), np.stack([0 * s, np.ones_like(s)])])
        assert np.max(np.abs(c.J - 1.0)) < 1e-12
        errs.append(np.max(np.abs(c.a - oracle)))
    assert errs[0] < 1e-4
    assert errs[0] / errs[1] > 12


def test_collapse_is_a_window_breach():
    g = Grid.strip(16, 9)
    eta = np.stack([g.X[0], 1e-12 * g.X[1]])
    with pytest.raises(WindowBreach):
        pullback_cache(g, eta)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10_000), amp=st.floats(0.0, 0.05))
def test_a_grad_eta_is_identity(seed, amp):
    g = Grid.disk(16, 16)
    rng = np.random.default_rng(seed)
    eta = g.X + amp * random_smooth_field(g, rng, ncomp=2)
    c = pullback_cache(g, eta)
    assert np.max(np.abs(matmul2(c.a, c.F) - np.eye(2)[:, :, None, None])) < 1e-12


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=4, max_size=4))
def test_inverse_helper(vals):
    F = np.array(vals, float).reshape(2, 2, 1, 1) + 4 * np.eye(2)[:, :, None, None]
    if abs(det2(F)[0, 0]) < 1e-3:
        return
    assert np.allclose(matmul2(inv2(F), F)[..., 0, 0], np.eye(2), atol=1e-10)


def test_piola_residual_converges_on_disk():
    hs, res = [], []
    for n in (32, 64, 128):
        g = Grid.disk(n, n)
        x, y = g.X
        eta = g.X + 0.05 * np.stack([np.sin(x + 2 * y), np.cos(3 * x - y)])
        c = pullback_cache(g, eta)
        r = piola_residual(g, c.cof)
        hs.append(g.h2)
        res.append(g.l2(r[0]) + g.l2(r[1]))
    assert fit_slope(hs, res) >= 4 - 0.3


def test_piola_residual_vanishes_on_strip():
    # spectral and FD4 derivatives commute there, so the identity is discrete
    g = Grid.strip(32, 17)
    x, y = g.X
    eta = g.X + 0.03 * np.stack([np.sin(2 * np.pi * x) * y ** 2, np.cos(2 * np.pi * x) * y ** 3])
    c = pullback_cache(g, eta)
    assert np.max(np.abs(piola_residual(g, c.cof))) < 1e-12


def test_sobolev_norms_of_a_sine():
    g = Grid.strip(32, 17)
    f = np.sin(2 * np.pi * g.X[0])
    assert sobolev_norm(g, f, 0) ** 2 == pytest.approx(0.5, rel=1e-12)
    assert sobolev_norm(g, f, 1) ** 2 == pytest.approx((1 + 4 * np.pi ** 2) / 2, rel=1e-12)
    assert sobolev_norm(g, 0 * f, 2.5) == 0.0


@pytest.mark.parametrize("kind", ["strip", "disk"])
def test_sobolev_zero_is_l2(kind):
    g = Grid.strip(16, 9) if kind == "strip" else Grid.disk(16, 16)
    f = random_smooth_field(g, np.random.default_rng(1))
    assert sobolev_norm(g, f, 0) == pytest.approx(g.l2(f), rel=1e-12)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000), s=st.floats(0, 2.5), ds=st.floats(0, 2.5))
def test_sobolev_monotone_in_order(seed, s, ds):
    for g in (Grid.strip(16, 9), Grid.disk(16, 16)):
        f = random_smooth_field(g, np.random.default_rng(seed))
        assert sobolev_norm(g, f, s) <= sobolev_norm(g, f, s + ds) * (1 + 1e-12)


def test_compose_identity_and_polynomial():
    g = Grid.box(12, 12, 2.0, 2.0)
    x, y = g.X
    F = np.sin(x) * np.cos(y)
    assert np.max(np.abs(compose(g, F, g.X) - F)) < 1e-12
    P = x * y
    inner = (x < 1.6) & (y < 1.6)
    tx, ty = x[inner] + 0.3, y[inner] + 0.2
    out = compose(g, P, np.stack([tx, ty]))
    assert np.max(np.abs(out - tx * ty)) < 1e-12


def test_compose_fourth_order_on_strip():
    errs = []
    rng = np.random.default_rng(3)
    pts = np.stack([rng.random(50), 0.1 + 0.8 * rng.random(50)])
    for n in (16, 32):
        g = Grid.strip(n, n)
        out = compose(g, np.sin(2 * np.pi * g.X[0]), pts)
        errs.append(np.max(np.abs(out - np.sin(2 * np.pi * pts[0]))))
    assert errs[0] / errs[1] > 12


def test_compose_outside_hull():
    g = Grid.disk(16, 16)
    with pytest.raises(OutsideHull):
        compose(g, g.X[0], np.array([[2.0], [0.0]]))


def test_field_round_trip_and_finiteness(tmp_path):
    g = Grid.disk(16, 16)
    v = random_smooth_field(g, np.random.default_rng(0), ncomp=2)
    f = Field(g, v, t=0.25)
    f.save(tmp_path / "v.txt")
    back = Field.load(tmp_path / "v.txt")
    assert back.t == 0.25 and back.ncomp == 2
    assert np.max(np.abs(back.data - v)) < 1e-12
    bad = v.copy()
    bad[0, 0, 0] = np.nan
    with pytest.raises(ValueError):
        Field(g, bad)
