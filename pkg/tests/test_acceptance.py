"""Acceptance criteria, each at its stated tolerance.

Every test prints one PASS/FAIL line, and the lines are repeated in the
terminal summary.  The whole module takes roughly ten minutes on one core.
Deselect it with ``-m "not acceptance"``.
"""

import math
import time

import numpy as np
import pytest

from kappaflow import experiments as ex

pytestmark = pytest.mark.acceptance

KAPPAS = (0.08, 0.04, 0.02, 0.01)


@pytest.fixture(scope="module")
def audit():
    t0 = time.time()
    rows = ex.smoothing_audit(n=256, kappas=KAPPAS, corpus=10, seed=0)
    return rows, time.time() - t0


def test_01_smoothing_laws(audit, acceptance_report):
    rows, secs = audit
    slope = ex.fit_slope(KAPPAS, [r["commutator_opnorm"] for r in rows])
    fixed_slope = ex.fit_slope(KAPPAS, [r["commutator_l2"] for r in rows])
    gap = max(r["trace_gap"] for r in rows)
    emin = min(r["min_eigenvalue"] for r in rows)
    ok = abs(slope - 1.0) <= 0.2 and gap <= 1e-12 and emin >= -1e-10 and secs < 30
    assert acceptance_report(
        1, "smoothing laws", ok,
        f"commutator slope {slope:.3f} (fixed-pair L2 slope {fixed_slope:.2f}), trace gap {gap:.1e}, "
        f"min eigenvalue {emin:.1e}, {secs:.1f} s")


def test_02_norm_stability(audit, acceptance_report):
    rows, _ = audit
    parts, ok = [], True
    for s in (0, 1, 2):
        vals = [r[f"ratio_s{s}"] for r in rows]
        spread = (max(vals) - min(vals)) / max(vals)
        ok &= spread <= 0.10
        parts.append(f"s={s}: C={max(vals):.4f} spread={100 * spread:.1f}%")
    assert acceptance_report(2, "norm ratio flat in kappa", ok, ", ".join(parts))


def test_03_pressure_solver(acceptance_report):
    t0 = time.time()
    rows = [ex.strain_pressure_error(n) for n in (64, 128)]
    secs = time.time() - t0
    ok = secs < 10
    parts = []
    for r in rows:
        const = r["max_error"] * r["n"] ** 2 / 4
        lim = 10 * max((1.0 / r["n"]) ** 2, 1e-10)
        ok &= const <= 5 and r["cross_gap"] <= lim
        parts.append(f"n={r['n']}: err={r['max_error']:.2e} C={const:.4f} gap={r['cross_gap']:.1e}")
    assert acceptance_report(3, "strain-flow pressure", ok, ", ".join(parts) + f", {secs:.1f} s")


def test_04_steady_states(acceptance_report):
    t0 = time.time()
    disk = ex.translation_run("disk", n=32, t_end=1.0)
    strip = ex.translation_run("strip", n=16, t_end=1.0)
    rot = ex.rotation_run(n=128, kappa=0.02, sigma=1.0)
    secs = time.time() - t0
    ok = (disk["status"] == strip["status"] == rot["status"] == "completed"
          and disk["max_deviation"] <= 1e-8 and strip["max_deviation"] <= 1e-8
          and rot["error"] <= 0.01 and rot["wall_time"] < 300)
    assert acceptance_report(
        4, "translation and rotation", ok,
        f"translation dev disk {disk['max_deviation']:.1e} strip {strip['max_deviation']:.1e}, "
        f"rotation error {100 * rot['error']:.2f}% in {rot['wall_time']:.0f} s (total {secs:.0f} s)")


def test_05_transport_identity(acceptance_report):
    r = ex.transport_convergence()
    factors = r["factors"]
    consts = [row["bound_constant"] for row in r["rows"]]
    ok = (all(row["status"] == "completed" for row in r["rows"]) and len(factors) == 2
          and all(4 * 0.7 <= f <= 4 * 1.3 for f in factors))
    assert acceptance_report(
        5, "curl transport reduction factor 4 +- 30%", ok,
        "factors " + ", ".join(f"{f:.2f}" for f in factors)
        + "; C in residual <= C(dt^2+h^2)t: " + ", ".join(f"{c:.1f}" for c in consts))


def test_06_dispersion(acceptance_report):
    t0 = time.time()
    rows = ex.dispersion_table((1, 2, 3), n1=128, n2=64)
    secs = time.time() - t0
    ok = secs < 600 and all(r["status"] == "completed" and r["rel_err"] <= 0.02 for r in rows)
    parts = [f"k{r['k_index']}: {r['omega_measured']:.4f}/{r['omega_theory']:.4f} ({100 * r['rel_err']:.3f}%)"
             for r in rows]
    assert acceptance_report(6, "capillary dispersion", ok, ", ".join(parts) + f", {secs:.0f} s")


def test_07_penalization(acceptance_report):
    r = ex.epsilon_sweep()
    ok = all(row["status"] == "completed" for row in r["rows"]) and abs(r["slope"] - 1.0) <= 0.2
    divs = ", ".join(f"{row['eps']:.0e}: {row['div_mean']:.2e}" for row in r["rows"])
    assert acceptance_report(7, "penalized divergence ~ eps", ok, f"slope {r['slope']:.3f} ({divs})")


def test_08_taylor_sign(acceptance_report):
    r = ex.taylor_margins()
    om2 = r["omega"] ** 2
    ok = (abs(r["strain_initial"] - 1.0) <= 0.05 and r["strain_min"] > 0
          and r["rotation_status"] == "taylor_violation"
          and abs(r["rotation_initial"] + om2) <= 0.05 * om2)
    assert acceptance_report(
        8, "Taylor margins", ok,
        f"strain {r['strain_initial']:.5f} (min {r['strain_min']:.3f}, {r['strain_status']}), "
        f"rotation {r['rotation_initial']:.5f} ({r['rotation_status']})")


def test_09_kappa_self_convergence(acceptance_report):
    r = ex.kappa_sweep((0.08, 0.04, 0.02))
    ok = r["monotone"] and all(s == "completed" for s in r["statuses"])
    order = "n/a" if r["order"] is None else f"{r['order']:.2f}"
    assert acceptance_report(9, "kappa -> 0 monotone", ok,
                             "distances " + ", ".join(f"{d:.4g}" for d in r["distances"]) + f", order {order}")


def test_10_slab_fixed_point(acceptance_report):
    r = ex.fixed_point_vs_rk4()
    ok = r["converged"] and r["max_ratio"] <= 0.95 and r["distance"] <= 1e-3 and r["status"] == "completed"
    assert acceptance_report(10, "slab fixed point", ok,
                             f"contraction {r['max_ratio']:.4f}, distance to method of lines {r['distance']:.1e}")


def test_11_validity_window(acceptance_report):
    res = ex.violent_run()
    finite = all(math.isfinite(v) for rec in res.records for v in rec.values() if isinstance(v, float))
    finite &= bool(np.all(np.isfinite(res.state.v)) and np.all(np.isfinite(res.state.eta)))
    ok = res.status == "window_breach" and finite
    assert acceptance_report(11, "violent datum", ok,
                             f"status {res.status} at t={res.state.t:.4f}, finite output {finite}")
