"""Time evolution of the smoothed Lagrangian problem.

Three modes share one explicit fourth-order Runge-Kutta integrator:

``kappa_sigma_pos``
    pressure solved at every stage with surface tension and the boundary
    viscosity ``kappa Lap0(v . n_k)`` in the Dirichlet data;
``kappa_sigma0_transport``
    zero surface tension, zero Dirichlet data (the smoothed transport
    problem); its slab fixed point is :func:`fixed_point_sigma0`;
``penalized``
    the pressure is replaced by ``-(1/eps) Tr(a_k grad v)`` inside the domain,
    no elliptic solve.  The penalty is stiff (a grad-div diffusion with
    coefficient ``1/eps``), so this mode does not use RK4: the velocity takes
    a linearly implicit Euler step with the geometry frozen at the start of
    the step, the positions follow with the new velocity.  The tendency is
    probed into a dense matrix, which limits the mode to small grids.

The state carries ``eta``, ``v``, the smoothed flow ``eta_k`` (advanced with
``v_k``), the chart-local smoothed flows and the time integral of the
vorticity forcing used by the transport monitor.
"""

from __future__ import annotations

import dataclasses
import math
import time as _time
from typing import Callable, List, Optional

import numpy as np

from . import diagnostics as dg
from .fields import Grid, PullbackCache, WindowBreach, pullback_cache
from .geometry import BoundaryLine, ChartAtlas, DegenerateCurve
from .pressure import (ConsistentOperator, EllipticOperator, SolverError, boundary_pressure, coefficient_tensor,
                       divergence, momentum_rhs, penalized_pressure, pressure_source, reference_sqrt_g,
                       solve_pressure_dirichlet)
from .smoothing import Mollifier, Smoother

MODES = ("kappa_sigma_pos", "kappa_sigma0_transport", "penalized")
SOLVERS = ("consistent", "pcg", "direct")


class StepFailure(RuntimeError):
    """A step could not be completed within the allowed number of halvings."""


class TaylorSignViolation(ValueError):
    """Zero-surface-tension run started without a positive Taylor margin."""


@dataclasses.dataclass
class RunParams:
    sigma: float = 0.0
    kappa: float = 0.02
    eps: float = 0.0
    mode: str = "kappa_sigma_pos"
    dt: Optional[float] = None
    cfl: float = 0.3
    dt_max: float = 1e-2
    parabolic_safety: float = 1.0
    t_end: float = 0.0
    div_tol: float = 1e-3
    eps0: Optional[float] = 2.5
    taylor_override: bool = False
    relax: float = 0.0
    solver: str = "consistent"
    mollifier: str = "bump"
    max_steps: int = 1_000_000
    snapshot_every: int = 0
    max_halvings: int = 8

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")
        if self.kappa <= 0:
            raise ValueError("kappa must be positive")
        if self.mode == "penalized" and self.eps <= 0:
            raise ValueError("penalized mode needs eps > 0")
        if self.mode != "penalized" and self.eps < 0:
            raise ValueError("eps must be nonnegative")
        if self.mode == "kappa_sigma0_transport" and self.sigma != 0:
            raise ValueError("transport mode is the zero-surface-tension problem")
        if self.dt is not None and self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.t_end < 0:
            raise ValueError("t_end must be nonnegative")
        if self.solver not in SOLVERS:
            raise ValueError(f"solver must be one of {SOLVERS}")


@dataclasses.dataclass
class LagrangianState:
    t: float
    eta: np.ndarray
    v: np.ndarray
    eta_k: np.ndarray
    eta_lk: np.ndarray
    acc_B: np.ndarray
    q: Optional[np.ndarray] = None
    B: Optional[np.ndarray] = None
    step: int = 0

    def copy(self) -> "LagrangianState":
        return dataclasses.replace(self, eta=self.eta.copy(), v=self.v.copy(), eta_k=self.eta_k.copy(),
                                   eta_lk=self.eta_lk.copy(), acc_B=self.acc_B.copy(),
                                   q=None if self.q is None else self.q.copy(),
                                   B=None if self.B is None else self.B.copy())


@dataclasses.dataclass
class StageEval:
    cache: PullbackCache
    v_k: np.ndarray
    v_lk: np.ndarray
    dv: np.ndarray
    q: np.ndarray
    stats: dict


@dataclasses.dataclass
class RunResult:
    status: str
    state: LagrangianState
    records: List[dict]
    snapshots: List[LagrangianState]
    message: str = ""
    wall_time: float = 0.0


def boundary_spacing(grid: Grid) -> float:
    """Tangential node spacing of the reference boundary, in length units."""
    if grid.kind == "disk":
        return 2 * np.pi * grid.radius / grid.n1
    return grid.h1


def cfl_dt(grid: Grid, v: np.ndarray, params: RunParams) -> float:
    """``C min(h/|v|, h^1.5/sqrt(sigma + kappa/h))`` capped by ``dt_max`` and a parabolic bound.

    The parabolic bound ``safety * 2 / (kappa k^3)`` with ``k`` the largest
    resolved boundary wavenumber keeps the explicit boundary viscosity
    stable.  The penalty of the penalized mode is integrated implicitly and
    adds no bound.
    """
    if params.dt is not None:
        return float(params.dt)
    h = boundary_spacing(grid)
    cands = [params.dt_max]
    vmax = float(np.max(np.abs(v))) if v is not None else 0.0
    if vmax > 0:
        cands.append(params.cfl * h / vmax)
    sig = params.sigma if params.mode != "kappa_sigma0_transport" else 0.0
    kap = params.kappa if params.mode != "kappa_sigma0_transport" else 0.0
    stiff = sig + kap / h
    if stiff > 0:
        cands.append(params.cfl * h ** 1.5 / math.sqrt(stiff))
    if kap > 0:
        kmax = (math.pi if grid.spectral1 else 1.3722) / h
        cands.append(params.parabolic_safety * 2.0 / (kap * kmax ** 3))
    return float(min(cands))


class Simulation:
    """Time integration of one configuration."""

    def __init__(self, grid: Grid, atlas: ChartAtlas, params: RunParams, u0: np.ndarray):
        params.validate()
        self.grid = grid
        self.atlas = atlas
        self.params = params
        self.smoother = Smoother(atlas, params.kappa, Mollifier(params.mollifier))
        self.sqrt_g0 = reference_sqrt_g(grid)
        self.line = BoundaryLine.of(grid)
        u0 = np.array(u0, dtype=float)
        if u0.shape != (2,) + grid.shape or not np.all(np.isfinite(u0)):
            raise ValueError("initial velocity must be a finite vector field on the grid")
        self.u0 = u0
        self._qhist: List[tuple] = []
        X = grid.X
        band = np.zeros(grid.shape)
        band[:, atlas.band] = 1.0
        eta_lk = np.stack([X * band for _ in range(atlas.K)])
        self.state0 = LagrangianState(0.0, X.copy(), u0.copy(), X.copy(), eta_lk,
                                      np.zeros(grid.shape))
        self.curl_u0: Optional[np.ndarray] = None
        self._div0: Optional[float] = None

    # stage evaluation -----------------------------------------------------
    def _check_boundary(self, eta: np.ndarray, eta_k: np.ndarray) -> None:
        floor = 0.5 * self.sqrt_g0
        for arr, name in ((eta, "eta"), (eta_k, "eta_k")):
            t = self.line.dpos(arr[:, :, -1])
            sg = np.sqrt(np.sum(t * t, axis=0))
            if np.any(sg < floor):
                raise WindowBreach(f"boundary metric of {name} collapsed below half its initial value")

    def evaluate(self, eta, v, eta_k, x0=None) -> StageEval:
        p = self.params
        g = self.grid
        for arr in (eta, v, eta_k):
            if not np.all(np.isfinite(arr)):
                raise WindowBreach("non-finite state")
        cache = pullback_cache(g, eta, eta_k, eps0=p.eps0)
        self._check_boundary(eta, eta_k)
        v_k, v_lk = self.smoother.both(v)
        dv = g.jacobian(v)
        stats: dict = {}
        if p.mode == "penalized":
            q = self._penalized_q(eta, eta_k, v, cache)
        else:
            sigma = p.sigma if p.mode == "kappa_sigma_pos" else 0.0
            kappa = p.kappa if p.mode == "kappa_sigma_pos" else 0.0
            try:
                q, st, _ = solve_pressure_dirichlet(g, eta, v, eta_k, v_k, cache, sigma, kappa,
                                                    sqrt_g0=self.sqrt_g0, method=p.solver, x0=x0,
                                                    relax=p.relax)
            except DegenerateCurve as exc:
                raise WindowBreach(str(exc)) from exc
            stats = {"iterations": st.iterations, "residual": st.residual}
        return StageEval(cache, v_k, v_lk, dv, q, stats)

    def _penalized_q(self, eta, eta_k, v, cache) -> np.ndarray:
        p = self.params
        q = penalized_pressure(self.grid, v, cache, p.eps)
        q[:, -1], _, _ = boundary_pressure(self.grid, eta, eta_k, v, self.sqrt_g0, p.sigma, p.kappa)
        return q

    def derivatives(self, ev: StageEval, v: np.ndarray):
        vt = momentum_rhs(self.grid, ev.cache, ev.q)
        return v, vt, ev.v_k, ev.v_lk

    # warm starts ------------------------------------------------------------
    def _remember(self, t: float, q: np.ndarray) -> None:
        h = [e for e in self._qhist if abs(e[0] - t) > 1e-12 * max(1.0, abs(t))]
        h.append((t, q))
        self._qhist = h[-3:]

    def _guess(self, t: float) -> Optional[np.ndarray]:
        """Polynomial extrapolation of recent pressures to time ``t`` (solver initial guess)."""
        h = self._qhist
        if not h:
            return None
        for tj, qj in h:
            if abs(tj - t) <= 1e-12 * max(1.0, abs(t)):
                return qj
        out = np.zeros_like(h[-1][1])
        for j, (tj, qj) in enumerate(h):
            w = 1.0
            for m, (tm, _) in enumerate(h):
                if m != j:
                    w *= (t - tm) / (tj - tm)
            out += w * qj
        return out

    # stepping -------------------------------------------------------------
    def _rk4(self, s: LagrangianState, dt: float, ev0: Optional[StageEval] = None):
        y0 = (s.eta, s.v, s.eta_k, s.eta_lk)
        ks = []
        stats = []
        y = y0
        coeffs = (0.0, 0.5, 0.5, 1.0)
        for i, c in enumerate(coeffs):
            if i:
                y = tuple(a + (c * dt) * b for a, b in zip(y0, ks[-1]))
            if i == 0 and ev0 is not None:
                ev = ev0
            else:
                ev = self.evaluate(y[0], y[1], y[2], x0=self._guess(s.t + c * dt))
                self._remember(s.t + c * dt, ev.q)
            if i == 0:
                ev0 = ev
            ks.append(self.derivatives(ev, y[1]))
            stats.append(ev.stats)
        new = tuple(a + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
                    for a, k1, k2, k3, k4 in zip(y0, *ks))
        return new, ev0, stats

    def _penalized_step(self, s: LagrangianState, dt: float, ev0: Optional[StageEval] = None,
                        tol: float = 1e-7, max_iter: int = 12):
        """Backward Euler step; the geometry is iterated to the end of the step."""
        g = self.grid
        if ev0 is None:
            ev0 = self.evaluate(s.eta, s.v, s.eta_k)
        m = s.v.size
        e = np.zeros(m)
        v1 = s.v
        new = (s.eta, s.v, s.eta_k, s.eta_lk)
        res = 0.0
        for it in range(1, max_iter + 1):
            eta, eta_k = new[0], new[2]
            cache = ev0.cache if it == 1 else pullback_cache(g, eta, eta_k, eps0=self.params.eps0)

            def tendency(v):
                return momentum_rhs(g, cache, self._penalized_q(eta, eta_k, v, cache)).ravel()

            c = tendency(np.zeros_like(s.v))
            A = np.empty((m, m))
            for i in range(m):
                e[i] = 1.0
                A[:, i] = tendency(e.reshape(s.v.shape)) - c
                e[i] = 0.0
            A *= -dt
            A[np.diag_indices(m)] += 1.0
            b = s.v.ravel() + dt * c
            vn = np.linalg.solve(A, b)
            res = float(np.linalg.norm(A @ vn - b) / max(np.linalg.norm(b), 1e-300))
            vn = vn.reshape(s.v.shape)
            change = float(np.max(np.abs(vn - v1)))
            v1 = vn
            v_k, v_lk = self.smoother.both(v1)
            new = (s.eta + dt * v1, v1, s.eta_k + dt * v_k, s.eta_lk + dt * v_lk)
            if it > 1 and change <= tol * max(1.0, float(np.max(np.abs(v1)))):
                break
        else:
            raise SolverError("implicit penalized step did not converge")
        return new, ev0, [{"iterations": it, "residual": res}]

    def _constrained_divergence(self, cache, v) -> float:
        """L2 divergence over the rows where the pressure equation holds.

        The free-surface row (and the wall row of the strip) carry boundary
        conditions instead, so their divergence is not controlled by the
        scheme; it is still reported in the step records.
        """
        d, _ = dg.divergence_residual(self.grid, cache, v)
        d[:, -1] = 0.0
        if self.grid.kind != "disk":
            d[:, 0] = 0.0
        return self.grid.l2(d)

    def _initial_divergence(self) -> float:
        """Discrete divergence of the initial data; step rejection measures growth beyond it."""
        if self._div0 is None:
            s = self.state0
            cache = pullback_cache(self.grid, s.eta, s.eta_k, eps0=None, check=False)
            self._div0 = self._constrained_divergence(cache, s.v)
        return self._div0

    def transport_B(self, cache, v, v_k, dv=None) -> np.ndarray:
        return dg.transport_source(self.grid, cache, v, v_k, dv)

    def step(self, s: LagrangianState, dt: float, ev0: Optional[StageEval] = None):
        """One step (RK4, or implicit Euler when penalized) with rejection and halving on constraint blow-up.

        A step is rejected when the divergence exceeds ``10 div_tol`` plus the
        discrete divergence of the initial data.

        ``ev0`` is the stage evaluation of ``s`` if already known.  Returns
        ``(new_state, evaluation_of_new_state, dt_used, stage_stats)``.
        """
        p = self.params
        for attempt in range(p.max_halvings + 1):
            try:
                advance = self._penalized_step if p.mode == "penalized" else self._rk4
                new, ev0, stats = advance(s, dt, ev0)
                ns = LagrangianState(s.t + dt, new[0], new[1], new[2], new[3], s.acc_B, step=s.step + 1)
                ev1 = self.evaluate(ns.eta, ns.v, ns.eta_k, x0=self._guess(ns.t))
                self._remember(ns.t, ev1.q)
            except SolverError:
                dt *= 0.5
                continue
            divn = self._constrained_divergence(ev1.cache, ns.v)
            limit = 10 * p.div_tol + self._initial_divergence() if p.mode != "penalized" else math.inf
            if divn > limit or not math.isfinite(divn):
                dt *= 0.5
                continue
            B0 = s.B if s.B is not None else self.transport_B(ev0.cache, s.v, ev0.v_k, ev0.dv)
            B1 = self.transport_B(ev1.cache, ns.v, ev1.v_k, ev1.dv)
            ns.acc_B = s.acc_B + 0.5 * dt * (B0 + B1)
            ns.B = B1
            ns.q = ev1.q
            return ns, ev1, dt, stats
        raise StepFailure(f"step at t={s.t:.6g} failed after {p.max_halvings} halvings")

    def record(self, s: LagrangianState, ev: StageEval, dt: float, stats=None) -> dict:
        if self.curl_u0 is None:
            self.curl_u0 = dg.lagrangian_curl(self.grid, ev.cache, self.u0)
        solver = None
        if stats:
            its = [st.get("iterations", 0) for st in stats]
            res = [st.get("residual", 0.0) for st in stats]
            solver = {"iterations": int(sum(its)), "residual": float(max(res))}
        rec = dg.step_record(self.grid, s.t, dt, ev.cache, s.eta, s.eta_k, s.v, ev.v_k, ev.q,
                             self.params.sigma, self.curl_u0, s.acc_B, solver)
        rec["step"] = s.step
        return rec

    def check_taylor(self, ev: StageEval, s: LagrangianState) -> float:
        m = dg.taylor_margin(self.grid, ev.cache, ev.q, s.eta_k)
        return m

    def run(self, callback: Optional[Callable[[LagrangianState, dict], None]] = None,
            t_end: Optional[float] = None) -> RunResult:
        p = self.params
        t_end = p.t_end if t_end is None else t_end
        wall = _time.time()
        s = self.state0.copy()
        records: List[dict] = []
        snaps: List[LagrangianState] = []
        try:
            ev = self.evaluate(s.eta, s.v, s.eta_k)
            s.q = ev.q
            s.B = self.transport_B(ev.cache, s.v, ev.v_k, ev.dv)
            rec = self.record(s, ev, 0.0)
            records.append(rec)
            if p.sigma == 0 and p.mode != "penalized" and rec["taylor_margin"] <= 0 and not p.taylor_override:
                raise TaylorSignViolation(
                    f"initial Taylor margin {rec['taylor_margin']:.4g} is not positive")
            snaps.append(s.copy())
            if callback:
                callback(s, rec)
            while s.t < t_end - 1e-14 and s.step < p.max_steps:
                dt = cfl_dt(self.grid, s.v, p)
                if t_end - s.t < 1.000001 * dt:
                    dt = t_end - s.t
                elif t_end - s.t < 2 * dt:
                    dt = 0.5 * (t_end - s.t)
                s, ev, dt, stats = self.step(s, dt, ev)
                rec = self.record(s, ev, dt, stats)
                records.append(rec)
                if p.snapshot_every and s.step % p.snapshot_every == 0:
                    snaps.append(s.copy())
                if callback:
                    callback(s, rec)
        except TaylorSignViolation as exc:
            return RunResult("taylor_violation", s, records, snaps, str(exc), _time.time() - wall)
        except (WindowBreach, FloatingPointError) as exc:
            return RunResult("window_breach", s, records, snaps, str(exc), _time.time() - wall)
        except (StepFailure, SolverError) as exc:
            return RunResult("step_failure", s, records, snaps, str(exc), _time.time() - wall)
        if not snaps or snaps[-1].t != s.t:
            snaps.append(s.copy())
        return RunResult("completed", s, records, snaps, "", _time.time() - wall)


# ---------------------------------------------------------------------------
# zero-surface-tension slab fixed point


@dataclasses.dataclass
class FixedPointResult:
    times: np.ndarray
    v: np.ndarray
    iterations: int
    distances: List[float]
    ratios: List[float]
    divergence_transport: float
    converged: bool


class NonContraction(RuntimeError):
    """Picard iteration failed to contract; the slab is too long."""


def _cumtrapz(values: np.ndarray, dt: float) -> np.ndarray:
    out = np.zeros_like(values)
    out[1:] = np.cumsum(0.5 * dt * (values[1:] + values[:-1]), axis=0)
    return out


def fixed_point_sigma0(grid: Grid, atlas: ChartAtlas, u0: np.ndarray, kappa: float,
                       t_slab: float, nt: int, tol: float = 1e-10, max_iter: int = 50,
                       v_bar: Optional[np.ndarray] = None, mollifier: str = "bump",
                       eps0: Optional[float] = 2.5, solver: str = "consistent") -> FixedPointResult:
    """Picard iteration of ``v -> u0 - int inv(F_k)^T grad q[v]`` over a time slab.

    The iterate is a trajectory sampled at ``nt + 1`` equally spaced times;
    for a trial trajectory, the flows ``eta = Id + int v`` and
    ``eta_k = Id + int v_k`` and the transport pressure (zero boundary data)
    are computed at every time level and the momentum update is integrated
    with the trapezoidal rule.  The seed is the constant-in-time trajectory
    ``u0``.
    """
    smoother = Smoother(atlas, kappa, Mollifier(mollifier))
    times = np.linspace(0.0, t_slab, nt + 1)
    dt = t_slab / nt
    X = grid.X
    vb = np.repeat(u0[None], nt + 1, axis=0) if v_bar is None else np.array(v_bar, float)
    dists: List[float] = []
    ratios: List[float] = []
    bad = 0
    converged = False
    q_prev = None
    it = 0
    for it in range(1, max_iter + 1):
        vk = np.stack([smoother.apply(vb[n]) for n in range(nt + 1)])
        etak = X[None] + _cumtrapz(vk, dt)
        acc = np.zeros_like(vb)
        for n in range(nt + 1):
            cache = pullback_cache(grid, etak[n], etak[n], eps0=eps0)
            f = pressure_source(grid, cache, vb[n], vk[n])
            if solver == "consistent":
                q, _ = ConsistentOperator(grid, cache).solve_dirichlet(f, None, x0=q_prev)
            else:
                op = EllipticOperator(grid, coefficient_tensor(cache))
                q, _ = op.solve_dirichlet(f, np.zeros(grid.shape), x0=q_prev, method=solver)
            q_prev = q
            acc[n] = momentum_rhs(grid, cache, q)
        vt = u0[None] + _cumtrapz(acc, dt)
        d = max(grid.l2(vt[n] - vb[n]) for n in range(nt + 1))
        dists.append(d)
        if len(dists) > 1 and dists[-2] > 0:
            ratios.append(d / dists[-2])
            bad = bad + 1 if ratios[-1] >= 0.95 else 0
            if bad >= 3:
                raise NonContraction("Picard iteration is not contracting; shorten the slab")
        vb = vt
        if d < tol:
            converged = True
            break
    # transported divergence identity: Tr(a_k grad v) must stay at its initial value
    divs = []
    vk = np.stack([smoother.apply(vb[n]) for n in range(nt + 1)])
    etak = X[None] + _cumtrapz(vk, dt)
    for n in range(nt + 1):
        cache = pullback_cache(grid, etak[n], etak[n], eps0=None, check=False)
        divs.append(divergence(grid, cache, vb[n]) / cache.J_k)
    div_res = max(grid.l2(dd - divs[0]) for dd in divs)
    return FixedPointResult(times, vb, it, dists, ratios, div_res, converged)


def sup_l2_distance(grid: Grid, a: np.ndarray, b: np.ndarray) -> float:
    return max(grid.l2(a[n] - b[n]) for n in range(a.shape[0]))


# ---------------------------------------------------------------------------
# initial data


def standing_wave_velocity(grid: Grid, k: float, amplitude: float, sigma: float) -> np.ndarray:
    """Potential flow that starts a linear capillary standing wave from a flat surface.

    ``u0 = grad phi`` with ``phi = B cosh(k x2) / cosh(k d) cos(k x1)``; ``B`` is
    chosen so that the surface elevation is ``amplitude sin(omega t) cos(k x1)``
    to linear order.
    """
    if grid.kind != "strip":
        raise ValueError("standing waves live on the strip")
    d = grid.length2
    omega = math.sqrt(sigma * k ** 3 * math.tanh(k * d))
    B = amplitude * omega / (k * math.tanh(k * d))
    x, y = grid.X
    c = B / math.cosh(k * d)
    return np.stack([-k * c * np.cosh(k * y) * np.sin(k * x), k * c * np.sinh(k * y) * np.cos(k * x)])


def initial_velocity(grid: Grid, kind: str, *, velocity=(0.0, 0.0), omega: float = 1.0,
                     strength: float = 1.0, k: float = 2 * np.pi, amplitude: Optional[float] = None,
                     sigma: float = 1.0) -> np.ndarray:
    """Named initial data: zero, translation, rotation, strain, standing_wave."""
    x, y = grid.X
    if kind == "zero":
        return np.zeros((2,) + grid.shape)
    if kind == "translation":
        c = np.asarray(velocity, float)
        return c[:, None, None] * np.ones((2,) + grid.shape)
    if kind == "rotation":
        return omega * np.stack([-y, x])
    if kind == "strain":
        return strength * np.stack([-x, y])
    if kind == "standing_wave":
        amp = 1e-3 * grid.length2 if amplitude is None else amplitude
        return standing_wave_velocity(grid, k, amp, sigma)
    raise ValueError(f"unknown initial data {kind!r}")
