"""Pressure operators and solves."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kappaflow.dynamics import initial_velocity
from kappaflow.experiments import strain_pressure_error
from kappaflow.fields import Grid, pullback_cache, random_smooth_field
from kappaflow.pressure import (ConsistentOperator, EllipticOperator, SolverError, boundary_pressure,
                                coefficient_tensor, divergence, momentum_rhs, penalized_pressure,
                                reference_sqrt_g, solve_pressure_dirichlet)
from kappaflow.smoothing import fit_slope


def deformed(grid, seed, amp=0.03):
    eta = grid.X + amp * random_smooth_field(grid, np.random.default_rng(seed), ncomp=2)
    return eta, pullback_cache(grid, eta, eta)


@pytest.mark.parametrize("kind", ["disk", "strip"])
def test_compact_matrix_symmetric_psd(kind):
    g = Grid.disk(16, 8) if kind == "disk" else Grid.strip(16, 9)
    _, c = deformed(g, 1)
    op = EllipticOperator(g, coefficient_tensor(c), dirichlet_rows=())
    H = op.matrix().toarray()
    assert np.max(np.abs(H - H.T)) < 1e-12 * np.max(np.abs(H))
    assert np.linalg.eigvalsh(H).min() > -1e-10 * np.max(np.abs(H))
    q = random_smooth_field(g, np.random.default_rng(2))
    assert np.max(np.abs(op.apply(q).ravel() - H @ q.ravel())) < 1e-10
    assert np.max(np.abs(op.apply(np.ones(g.shape)))) < 1e-10


@settings(max_examples=8, deadline=None)
@given(st.integers(0, 10_000))
def test_numba_kernel_matches_array_route(seed):
    g = Grid.disk(16, 12)
    _, c = deformed(g, seed)
    op = ConsistentOperator(g, c, precondition=False)
    q = random_smooth_field(g, np.random.default_rng(seed + 1))
    fast, ref = op.apply(q), op.apply_array(q)
    assert np.max(np.abs(fast - ref)) <= 1e-13 * np.max(np.abs(ref))


@pytest.mark.parametrize("kind", ["disk", "strip"])
def test_consistent_operator_is_divergence_of_momentum(kind):
    g = Grid.disk(16, 12) if kind == "disk" else Grid.strip(16, 9)
    _, c = deformed(g, 3)
    q = random_smooth_field(g, np.random.default_rng(4))
    op = ConsistentOperator(g, c, precondition=False)
    lhs = op.apply_array(q)
    rhs = -divergence(g, c, momentum_rhs(g, c, q))
    sl = slice(1, None) if kind == "strip" else slice(None)
    assert np.max(np.abs(lhs[:, sl] - rhs[:, sl])) < 1e-10
    assert np.max(np.abs(op.apply(np.full(g.shape, 2.0)))) < 1e-12


def test_strain_flow_pressure():
    rows = [strain_pressure_error(n) for n in (16, 32)]
    for r in rows:
        assert r["max_error"] <= 4 * 5 / r["n"] ** 2
        assert r["cross_gap"] <= 10 * max((1.0 / r["n"]) ** 2, 1e-10)
    assert -fit_slope([r["n"] for r in rows], [r["max_error"] for r in rows]) > 3.5


def test_solver_routes_agree():
    gaps = []
    for n in (16, 32):
        g = Grid.disk(n, n)
        eta = g.X + 0.02 * np.stack([np.sin(g.X[0] + 2 * g.X[1]), np.cos(3 * g.X[0] - g.X[1])])
        c = pullback_cache(g, eta, eta)
        u = initial_velocity(g, "strain")
        args = (g, eta, u, eta, u, c, 1.0, 0.0)
        qd, sd, _ = solve_pressure_dirichlet(*args, method="direct")
        qp, sp_, _ = solve_pressure_dirichlet(*args, method="pcg")
        qc, sc, _ = solve_pressure_dirichlet(*args, method="consistent")
        assert np.max(np.abs(qd - qp)) < 1e-8
        assert sd.residual < 1e-10 and sp_.residual < 1e-9 and sc.residual < 1e-9
        gaps.append(np.max(np.abs(qd - qc)))
    # two discretisations of one problem: the gap closes under refinement
    assert gaps[0] / gaps[1] > 3


def test_gmres_failure_is_reported():
    g = Grid.disk(16, 16)
    _, c = deformed(g, 6)
    op = ConsistentOperator(g, c, precondition=True)
    f = random_smooth_field(g, np.random.default_rng(7))
    with pytest.raises(SolverError):
        op.solve_dirichlet(f, tol=1e-15, maxiter=1)


def test_boundary_pressure_on_a_circle():
    R = 2.0
    g = Grid.disk(32, 8, R)
    q, bg, _ = boundary_pressure(g, g.X, g.X, np.zeros((2,) + g.shape), reference_sqrt_g(g), 0.7, 0.1)
    assert np.max(np.abs(q - 0.7 / R)) < 1e-12


def test_penalized_pressure():
    g = Grid.disk(16, 16)
    c = pullback_cache(g, g.X, g.X)
    rot = initial_velocity(g, "rotation")
    assert np.max(np.abs(penalized_pressure(g, rot, c, 1e-3))) < 1e-9
    with pytest.raises(ValueError):
        penalized_pressure(g, rot, c, 0.0)
    gs = Grid.strip(16, 9)
    cs = pullback_cache(gs, gs.X, gs.X)
    w = np.stack([0 * gs.X[1], gs.X[1]])
    assert np.max(np.abs(penalized_pressure(gs, w, cs, 0.5) + 2.0)) < 1e-10
