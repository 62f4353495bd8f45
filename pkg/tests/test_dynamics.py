"""Time integration: parameters, step control, steady states and guards."""

import math

import numpy as np
import pytest

from kappaflow.dynamics import (LagrangianState, RunParams, Simulation, cfl_dt, fixed_point_sigma0,
                                initial_velocity, standing_wave_velocity)
from kappaflow.experiments import setup, translation_run, violent_run
from kappaflow.geometry import DomainSpec


def disk(n=16):
    return setup(DomainSpec("disk"), n, n)


@pytest.mark.parametrize("bad", [
    dict(mode="nope"), dict(sigma=-1.0), dict(kappa=0.0), dict(mode="penalized", eps=0.0),
    dict(mode="kappa_sigma0_transport", sigma=1.0), dict(dt=-1.0), dict(t_end=-1.0),
    dict(solver="magic"),
])
def test_params_rejected(bad):
    with pytest.raises(ValueError):
        RunParams(**bad).validate()


def test_fixed_dt_is_returned():
    g, _ = disk()
    assert cfl_dt(g, None, RunParams(dt=0.0123)) == 0.0123


def test_capillary_dt_scales_with_h_to_three_halves():
    p = RunParams(sigma=1.0, kappa=1e-15, dt_max=1e9, cfl=0.3)
    dts = []
    for n in (64, 128):
        g, _ = setup(DomainSpec("strip"), n, 9)
        dts.append(cfl_dt(g, np.zeros((2,) + g.shape), p))
    assert dts[1] / dts[0] == pytest.approx(2 ** -1.5, abs=1e-12)


def test_velocity_bound_enters_the_step():
    g, _ = disk()
    p = RunParams(sigma=0.0, kappa=0.02, mode="kappa_sigma0_transport", dt_max=1.0)
    v = np.full((2,) + g.shape, 5.0)
    assert cfl_dt(g, v, p) == pytest.approx(0.3 * 2 * math.pi / 16 / 5.0)


def test_initial_data():
    g, _ = disk()
    x, y = g.X
    assert np.array_equal(initial_velocity(g, "rotation", omega=2.0), 2.0 * np.stack([-y, x]))
    assert np.all(initial_velocity(g, "translation", velocity=(1, 2))[1] == 2)
    with pytest.raises(ValueError):
        initial_velocity(g, "vortex")
    with pytest.raises(ValueError):
        standing_wave_velocity(g, 2 * math.pi, 1e-3, 1.0)


def test_standing_wave_is_potential_and_divergence_free():
    gs, _ = setup(DomainSpec("strip"), 64, 33)
    u = standing_wave_velocity(gs, 2 * math.pi, 1e-3, 1.0)
    scale = np.max(np.abs(gs.jacobian(u)))
    assert np.max(np.abs(gs.div(u))) < 3e-3 * scale
    assert np.max(np.abs(gs.curl2d(u))) < 3e-3 * scale
    assert np.max(np.abs(u[1][:, 0])) == 0.0


def test_bad_initial_field():
    g, at = disk()
    bad = np.zeros((2,) + g.shape)
    bad[0, 0, 0] = np.inf
    with pytest.raises(ValueError):
        Simulation(g, at, RunParams(sigma=1.0), bad)


def test_state_copy_is_deep():
    g, at = disk()
    sim = Simulation(g, at, RunParams(sigma=1.0), np.zeros((2,) + g.shape))
    s = sim.state0.copy()
    s.v[0, 0, 0] = 9.0
    assert sim.state0.v[0, 0, 0] == 0.0
    assert isinstance(s, LagrangianState)


def test_circle_at_rest_stays_at_rest():
    g, at = disk()
    res = Simulation(g, at, RunParams(sigma=1.0, t_end=0.02), np.zeros((2,) + g.shape)).run()
    assert res.status == "completed"
    assert np.max(np.abs(res.state.v)) < 1e-8
    assert all(r["div_residual"] < 1e-8 for r in res.records)


@pytest.mark.parametrize("kind", ["disk", "strip"])
def test_translation_is_exact(kind):
    out = translation_run(kind, n=16, t_end=0.1)
    assert out["status"] == "completed"
    assert out["max_deviation"] <= 1e-8


def test_rotation_without_surface_tension_violates_taylor_sign():
    g, at = disk()
    u0 = initial_velocity(g, "rotation")
    p = RunParams(sigma=0.0, mode="kappa_sigma0_transport", t_end=0.01)
    res = Simulation(g, at, p, u0).run()
    assert res.status == "taylor_violation"
    assert res.records[0]["taylor_margin"] == pytest.approx(-1.0, rel=0.05)
    p.taylor_override = True
    assert Simulation(g, at, p, u0).run().status == "completed"


def test_strain_margin_is_positive():
    g, at = disk()
    p = RunParams(sigma=0.0, mode="kappa_sigma0_transport", t_end=0.02)
    res = Simulation(g, at, p, initial_velocity(g, "strain")).run()
    assert res.status == "completed"
    assert res.records[0]["taylor_margin"] == pytest.approx(1.0, rel=0.05)
    assert all(r["taylor_margin"] > 0 for r in res.records)


def test_violent_datum_breaches_without_nan():
    res = violent_run(n=16)
    assert res.status == "window_breach"
    assert res.message
    for rec in res.records:
        assert all(math.isfinite(v) for v in rec.values() if isinstance(v, float))
    assert np.all(np.isfinite(res.state.v)) and np.all(np.isfinite(res.state.eta))


def test_penalized_step_converges():
    g, at = setup(DomainSpec("disk"), 16, 8)
    p = RunParams(sigma=1.0, mode="penalized", eps=1e-3, dt=0.005, t_end=0.01)
    res = Simulation(g, at, p, initial_velocity(g, "strain", strength=0.2)).run()
    assert res.status == "completed"
    assert all(r.get("solver_iterations", 1) >= 1 for r in res.records[1:])


def test_fixed_point_contracts():
    g, at = disk()
    fp = fixed_point_sigma0(g, at, initial_velocity(g, "strain"), 0.02, 0.05, 5)
    assert fp.converged
    assert max(fp.ratios) <= 0.95
    assert fp.v.shape == (6, 2) + g.shape
