"""Experiment drivers shared by the command line, the acceptance suite and the demos.

Each driver builds its own grid and atlas, runs, and returns plain Python
data (dicts, lists of rows) so callers can print, tabulate or assert.
"""

from __future__ import annotations

import math
import time
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import diagnostics as dg
from .dynamics import (RunParams, RunResult, Simulation, fixed_point_sigma0, initial_velocity,
                       sup_l2_distance)
from .fields import Grid, pullback_cache, random_smooth_field, sobolev_norm
from .geometry import ChartAtlas, DomainSpec, build_atlas
from .pressure import (momentum_rhs, pressure_source, solve_pressure_dirichlet,
                       solve_pressure_neumann)
from .smoothing import (Mollifier, Smoother, commutator_operator_norm, fit_slope,
                        layer_h_half, layer_operator)


def capillary_omega(k: float, sigma: float, depth: float) -> float:
    """Linear capillary standing-wave frequency on fluid of finite depth."""
    return math.sqrt(sigma * k ** 3 * math.tanh(k * depth))


def setup(spec: DomainSpec, n1: int, n2: int):
    grid = spec.grid(n1, n2)
    return grid, build_atlas(spec, grid)


# ---------------------------------------------------------------------------
# pressure


def strain_pressure_error(n: int, radius: float = 1.0, solver: str = "direct") -> Dict[str, float]:
    """Strain flow ``u = (-x, y)`` on the disk at ``eta = Id``, zero surface tension.

    The exact pressure is ``(R^2 - r^2) / 2``.  Returns the max nodal error,
    ``n^2`` times it, and the Dirichlet/Neumann cross gap.
    """
    spec = DomainSpec("disk", radius)
    grid, atlas = setup(spec, n, n)
    X = grid.X
    u = initial_velocity(grid, "strain")
    cache = pullback_cache(grid, X, X)
    q, stats, _ = solve_pressure_dirichlet(grid, X, u, X, u, cache, 0.0, 0.0, method=solver)
    r2 = X[0] ** 2 + X[1] ** 2
    exact = 0.5 * (radius ** 2 - r2)
    err = float(np.max(np.abs(q - exact)))
    vt = momentum_rhs(grid, cache, q)
    pin = float(np.sum(grid.bweights * q[:, -1]) / np.sum(grid.bweights))
    qn, _ = solve_pressure_neumann(grid, u, u, vt, cache, pin_value=pin)
    gap = grid.l2(qn - q) / math.sqrt(grid.area)
    return {"n": n, "max_error": err, "scaled": err * n * n, "cross_gap": gap,
            "residual": stats.residual}


def resolution_sweep(values: Sequence[int]) -> Dict:
    rows = [strain_pressure_error(int(n)) for n in values]
    order = -fit_slope([r["n"] for r in rows], [r["max_error"] for r in rows])
    return {"rows": rows, "order": order}


# ---------------------------------------------------------------------------
# smoothing


def smoothing_audit(n: int = 256, kappas: Sequence[float] = (0.08, 0.04, 0.02, 0.01),
                    corpus: int = 10, seed: int = 0, charts: int = 8, kappa0: float = 0.2,
                    mollifier: str = "bump") -> List[Dict]:
    """Commutator, trace and norm-ratio measurements over a kappa sweep.

    The commutator ``P[f g] - f P[g]`` uses one periodic boundary layer of
    ``n`` nodes with ``f = cos(2 pi x)`` and is reported both for a fixed
    smooth ``g`` and as the operator norm over all ``g``.  Norm ratios are
    ``max ||v_k||_s / ||v||_s`` over a random smooth corpus on the strip.
    """
    mol = Mollifier(mollifier)
    rng = np.random.default_rng(seed)
    x = np.arange(n) / n
    f = np.cos(2 * np.pi * x)
    g = np.sin(6 * np.pi * x) + 0.5 * np.cos(10 * np.pi * x)
    strip = DomainSpec("strip", kappa0=kappa0, charts=charts)
    sg = strip.grid(64, 32)
    satlas = build_atlas(strip, sg)
    fields = [random_smooth_field(sg, rng, decay=3.0) for _ in range(corpus)]
    disk = DomainSpec("disk", charts=charts, kappa0=kappa0)
    dgd = disk.grid(n, 16)
    datlas = build_atlas(disk, dgd)
    rows = []
    for kappa in kappas:
        t0 = time.time()
        P = layer_operator(n, 1.0 / n, kappa, mol)
        c = P @ (f * g) - f * (P @ g)
        opnorm = commutator_operator_norm(n, 1.0, f, kappa, mol)
        sm = Smoother(satlas, kappa, mol)
        ratios = {}
        for s in (0, 1, 2):
            ratios[s] = max(sobolev_norm(sg, sm.apply(w), s) / sobolev_norm(sg, w, s) for w in fields)
        # trace commutation and boundary operator spectrum on the disk atlas
        dsm = Smoother(datlas, kappa, mol)
        w = random_smooth_field(dgd, rng, ncomp=2)
        trace_gap = float(np.max(np.abs(dsm.apply(w)[:, :, -1]
                                        - (dsm.boundary_matrix() @ w[:, :, -1].T).T)))
        S = dsm.boundary_matrix()
        ev = np.linalg.eigvalsh(0.5 * (S + S.T))
        w1 = random_smooth_field(dgd, rng, ncomp=2)
        rows.append({
            "kappa": kappa,
            "commutator_l2": float(np.sqrt(np.mean(c * c))),
            "commutator_h_half": layer_h_half(c, 1.0),
            "commutator_opnorm": opnorm,
            "linf_deviation": float(np.max(np.abs(dsm.apply(w1) - w1))),
            "ratio_s0": ratios[0], "ratio_s1": ratios[1], "ratio_s2": ratios[2],
            "trace_gap": trace_gap,
            "symmetry_gap": float(np.max(np.abs(S - S.T))),
            "min_eigenvalue": float(ev.min()),
            "seconds": time.time() - t0,
        })
    return rows


# ---------------------------------------------------------------------------
# runs


def rotation_run(n: int = 128, kappa: float = 0.02, sigma: float = 1.0, omega: float = 1.0,
                 revolutions: float = 1.0, charts: int = 8, callback=None) -> Dict:
    spec = DomainSpec("disk", charts=charts)
    grid, atlas = setup(spec, n, n)
    u0 = initial_velocity(grid, "rotation", omega=omega)
    p = RunParams(sigma=sigma, kappa=kappa, t_end=revolutions * 2 * math.pi / omega)
    res = Simulation(grid, atlas, p, u0).run(callback)
    err = dg.rotation_error(grid, res.state.v, res.state.eta, omega)
    return {"status": res.status, "error": err, "t": res.state.t, "steps": res.state.step,
            "wall_time": res.wall_time, "records": res.records}


def translation_run(kind: str = "disk", n: int = 32, c=(0.3, 0.0), t_end: float = 1.0,
                    mode: Optional[str] = None, sigma: float = 1.0, kappa: float = 0.02) -> Dict:
    """Uniform translation; returns the largest velocity deviation over the run."""
    spec = DomainSpec(kind)
    grid, atlas = setup(spec, n, n if kind == "disk" else n // 2)
    if mode is None:
        mode = "kappa_sigma_pos" if kind == "strip" else "kappa_sigma0_transport"
    if mode == "kappa_sigma0_transport":
        sigma = 0.0
    u0 = initial_velocity(grid, "translation", velocity=c)
    p = RunParams(sigma=sigma, kappa=kappa, mode=mode, t_end=t_end, taylor_override=True)
    worst = [0.0]

    def cb(s, rec):
        worst[0] = max(worst[0], float(np.max(np.abs(s.v - u0))))

    res = Simulation(grid, atlas, p, u0).run(cb)
    return {"status": res.status, "max_deviation": worst[0], "steps": res.state.step}


def dispersion_run(k_index: int, n1: int = 128, n2: int = 64, sigma: float = 1.0,
                   kappa: float = 1e-4, depth: float = 1.0, length: float = 1.0,
                   amplitude: Optional[float] = None, periods: float = 1.25,
                   cfl: float = 0.3, kappa0: float = 0.2) -> Dict:
    """Linear capillary standing wave of wavenumber ``2 pi k_index / length``."""
    if sigma <= 0:
        raise ValueError("dispersion runs need sigma > 0")
    k = 2 * math.pi * k_index / length
    spec = DomainSpec("strip", depth=depth, length=length, kappa0=kappa0)
    grid, atlas = setup(spec, n1, n2)
    amp = 1e-3 * depth if amplitude is None else amplitude
    theory = capillary_omega(k, sigma, depth)
    resolved = k * grid.h1 <= 0.5
    u0 = initial_velocity(grid, "standing_wave", k=k, amplitude=amp, sigma=sigma)
    p = RunParams(sigma=sigma, kappa=kappa, t_end=periods * 2 * math.pi / theory, cfl=cfl)
    times: List[float] = []
    modes: List[float] = []
    energy: List[float] = []

    def cb(s, rec):
        times.append(s.t)
        modes.append(dg.surface_mode(grid, s.eta, k))
        energy.append(rec["E_phys"])

    t0 = time.time()
    res = Simulation(grid, atlas, p, u0).run(cb)
    row = {"k_index": k_index, "k": k, "omega_theory": theory, "omega_measured": float("nan"),
           "rel_err": float("nan"), "resolved": bool(resolved), "status": res.status,
           "steps": res.state.step, "seconds": time.time() - t0,
           "peak_amplitude": float(np.max(np.abs(modes))) if modes else 0.0,
           "energy_drift": (max(abs(e - energy[0]) for e in energy) / energy[0]) if energy else 0.0}
    if res.status == "completed":
        try:
            om = dg.zero_crossing_frequency(times, modes)
            row["omega_measured"] = om
            row["rel_err"] = abs(om - theory) / theory
        except ValueError:
            pass
    return row


def dispersion_table(modes: Sequence[int] = (1, 2, 3), **kw) -> List[Dict]:
    return [dispersion_run(m, **kw) for m in modes]


def kappa_sweep(values: Sequence[float] = (0.08, 0.04, 0.02), n1: int = 32, n2: int = 16,
                amplitude: float = 0.02, sigma: float = 1.0, t_end: float = 0.05,
                samples: int = 10) -> Dict:
    """Standing-wave trajectories at several kappa on a shared time grid.

    All members use the time step allowed at the largest kappa, so the
    trajectories are sampled at identical times; distances are sup-in-time
    L2 distances of ``(eta - X, v)``.
    """
    values = list(values)
    spec = DomainSpec("strip", kappa0=0.2)
    grid, atlas = setup(spec, n1, n2)
    u0 = initial_velocity(grid, "standing_wave", k=2 * math.pi, amplitude=amplitude, sigma=sigma)
    from .dynamics import cfl_dt
    dt = min(cfl_dt(grid, u0, RunParams(sigma=sigma, kappa=kap)) for kap in values)
    nsteps = int(math.ceil(t_end / dt))
    dt = t_end / nsteps
    every = max(1, nsteps // samples)
    trajs = []
    statuses = []
    for kap in values:
        p = RunParams(sigma=sigma, kappa=kap, t_end=t_end, dt=dt)
        snaps: List[np.ndarray] = []

        def cb(s, rec, snaps=snaps):
            if s.step % every == 0 or s.t >= t_end - 1e-12:
                snaps.append(np.concatenate([s.eta - grid.X, s.v]))

        res = Simulation(grid, atlas, p, u0).run(cb)
        statuses.append(res.status)
        trajs.append(np.stack(snaps))
    m = min(t.shape[0] for t in trajs)
    dists = [sup_l2_distance(grid, trajs[i][:m], trajs[i + 1][:m]) for i in range(len(values) - 1)]
    monotone = all(b < a for a, b in zip(dists, dists[1:]))
    order = None
    if len(dists) >= 2 and all(d > 0 for d in dists):
        ratio = values[0] / values[1]
        order = math.log(dists[0] / dists[1]) / math.log(ratio)
    return {"values": values, "distances": dists, "monotone": monotone, "order": order,
            "statuses": statuses, "dt": dt, "steps": nsteps}


def epsilon_sweep(values: Sequence[float] = (1e-2, 1e-3, 1e-4), n: int = 16, t_end: float = 0.05,
                  strength: float = 1.0, kappa: float = 0.02, dt: float = 0.005) -> Dict:
    """Penalized strain flow on the disk; divergence residual against eps.

    The time step is fixed: at ``dt = 0.01`` the largest eps develops a
    spurious growing mode of angular order two after a few steps.
    """
    spec = DomainSpec("disk")
    grid, atlas = setup(spec, n, n)
    u0 = initial_velocity(grid, "strain", strength=strength)
    rows = []
    for eps in values:
        p = RunParams(sigma=0.0, kappa=kappa, eps=eps, mode="penalized", t_end=t_end, dt=dt)
        divs: List[float] = []
        res = Simulation(grid, atlas, p, u0).run(lambda s, rec: divs.append(rec["div_residual"]))
        rows.append({"eps": eps, "status": res.status, "div_final": divs[-1],
                     "div_max": max(divs), "div_mean": float(np.mean(divs[1:])) if len(divs) > 1 else 0.0,
                     "steps": res.state.step})
    ok = [r for r in rows if r["status"] == "completed" and r["div_mean"] > 0]
    slope = fit_slope([r["eps"] for r in ok], [r["div_mean"] for r in ok]) if len(ok) >= 2 else float("nan")
    return {"rows": rows, "slope": slope}


def taylor_margins(n: int = 64, omega: float = 1.0, t_end: float = 0.2) -> Dict:
    """Initial and running Taylor margins for strain flow and the rigid-rotation counterexample."""
    spec = DomainSpec("disk")
    grid, atlas = setup(spec, n, n)
    strain = initial_velocity(grid, "strain")
    margins: List[float] = []
    p = RunParams(sigma=0.0, kappa=0.02, mode="kappa_sigma0_transport", t_end=t_end)
    res = Simulation(grid, atlas, p, strain).run(lambda s, rec: margins.append(rec["taylor_margin"]))
    rot = initial_velocity(grid, "rotation", omega=omega)
    pr = RunParams(sigma=0.0, kappa=0.02, mode="kappa_sigma0_transport", t_end=t_end)
    rres = Simulation(grid, atlas, pr, rot).run()
    return {"strain_initial": margins[0], "strain_min": min(margins), "strain_status": res.status,
            "rotation_initial": rres.records[0]["taylor_margin"] if rres.records else float("nan"),
            "rotation_status": rres.status, "omega": omega}


def transport_convergence(resolutions: Sequence[int] = (16, 32, 64), t_end: float = 0.1,
                          amplitude: float = 0.05, kappa: float = 1e-3, dt_factor: float = 0.016) -> Dict:
    """Vorticity-transport residual of an irrotational standing wave under mesh doubling.

    Space and time are refined together, ``dt = dt_factor / n1``; the
    default factor keeps the finest run inside its parabolic step bound.
    Each row also reports ``residual / ((dt^2 + h^2) t)``, the constant of
    the expected bound.
    """
    rows = []
    for n in resolutions:
        spec = DomainSpec("strip", kappa0=0.2)
        grid, atlas = setup(spec, n, n // 2)
        u0 = initial_velocity(grid, "standing_wave", k=2 * math.pi, amplitude=amplitude, sigma=1.0)
        nsteps = int(round(t_end * n / dt_factor))
        dt = t_end / nsteps
        p = RunParams(sigma=1.0, kappa=kappa, t_end=t_end, dt=dt)
        res = Simulation(grid, atlas, p, u0).run()
        last = res.records[-1]
        h = grid.h1
        rows.append({"n": n, "dt": dt, "h": h, "status": res.status,
                     "curl_residual": last["curl_residual"], "lagrangian_curl": last["lagrangian_curl"],
                     "bound_constant": last["curl_residual"] / ((dt * dt + h * h) * t_end)})
    factors = [a["curl_residual"] / b["curl_residual"] for a, b in zip(rows, rows[1:])
               if b["curl_residual"] > 0]
    return {"rows": rows, "factors": factors}


def fixed_point_vs_rk4(n: int = 16, t_slab: float = 0.05, nt: int = 10, kappa: float = 0.02,
                       strength: float = 1.0, tol: float = 1e-10) -> Dict:
    """Slab fixed point against the method-of-lines run on the same time levels."""
    spec = DomainSpec("disk")
    grid, atlas = setup(spec, n, n)
    u0 = initial_velocity(grid, "strain", strength=strength)
    fp = fixed_point_sigma0(grid, atlas, u0, kappa, t_slab, nt, tol=tol)
    dt_fp = t_slab / nt
    sub = 4
    p = RunParams(sigma=0.0, kappa=kappa, mode="kappa_sigma0_transport", t_end=t_slab, dt=dt_fp / sub)
    vs: List[np.ndarray] = []
    res = Simulation(grid, atlas, p, u0).run(
        lambda s, rec: vs.append(s.v.copy()) if s.step % sub == 0 else None)
    m = min(len(vs), fp.v.shape[0])
    dist = sup_l2_distance(grid, np.stack(vs[:m]), fp.v[:m])
    rate = max(fp.ratios) if fp.ratios else 0.0
    return {"iterations": fp.iterations, "ratios": fp.ratios, "max_ratio": rate,
            "distance": dist, "converged": fp.converged, "status": res.status,
            "divergence_transport": fp.divergence_transport}


def violent_run(n: int = 32, strength: float = 40.0, t_end: float = 1.0) -> RunResult:
    """Strong strain flow that must leave the validity window."""
    spec = DomainSpec("disk")
    grid, atlas = setup(spec, n, n)
    u0 = initial_velocity(grid, "strain", strength=strength)
    p = RunParams(sigma=0.0, kappa=0.02, mode="kappa_sigma0_transport", t_end=t_end)
    return Simulation(grid, atlas, p, u0).run()
