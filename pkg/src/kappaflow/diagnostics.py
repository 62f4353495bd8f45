"""Monitors: energies, transport residuals, Taylor margin, Hodge reconstruction.

All functions are pure and act on arrays sampled on a :class:`Grid`.
"""

from __future__ import annotations

import dataclasses
import math
from typing import Dict, List, Optional, Sequence

import numpy as np

from .fields import Grid, PullbackCache, sobolev_norm
from .geometry import BoundaryLine, boundary_geometry
from .pressure import EllipticOperator, divergence


# ---------------------------------------------------------------------------
# pointwise monitors


def divergence_residual(grid: Grid, cache: PullbackCache, v: np.ndarray):
    """``Tr(a_k grad v)`` and its L2 norm."""
    d = divergence(grid, cache, v)
    return d, grid.l2(d)


def eulerian_gradient(cache: PullbackCache, dv: np.ndarray) -> np.ndarray:
    """``d u^l / d y_j`` from reference derivatives ``dv[l, r]`` via ``inv(F_k)``."""
    return np.einsum("lr...,rj...->lj...", dv, cache.Finv_k)


def lagrangian_curl(grid: Grid, cache: PullbackCache, v: np.ndarray,
                    dv: Optional[np.ndarray] = None) -> np.ndarray:
    """Curl of ``v`` taken in the coordinates of the smoothed flow."""
    dv = grid.jacobian(v) if dv is None else dv
    G = eulerian_gradient(cache, dv)
    return G[1, 0] - G[0, 1]


def transport_source(grid: Grid, cache: PullbackCache, v: np.ndarray, v_k: np.ndarray,
                     dv: Optional[np.ndarray] = None) -> np.ndarray:
    """Time derivative of :func:`lagrangian_curl` forced by the smoothed transport.

    ``-(d1 u_k^m dm u^2 - d2 u_k^m dm u^1)`` in Eulerian derivatives.
    """
    dv = grid.jacobian(v) if dv is None else dv
    G = eulerian_gradient(cache, dv)
    Gk = eulerian_gradient(cache, grid.jacobian(v_k))
    return -(np.einsum("m...,m...->...", Gk[:, 0], G[1]) - np.einsum("m...,m...->...", Gk[:, 1], G[0]))


def vorticity_transport_residual(grid: Grid, cache: PullbackCache, v: np.ndarray,
                                 curl_u0: np.ndarray, accumulated_B: np.ndarray):
    r = lagrangian_curl(grid, cache, v) - curl_u0 - accumulated_B
    return r, grid.l2(r)


def taylor_margin(grid: Grid, cache: PullbackCache, q: np.ndarray, eta_k: np.ndarray) -> float:
    """``min over the free boundary of -grad p . n`` with ``grad p = inv(F_k)^T grad q``."""
    gq = grid.grad(q)[:, :, -1]
    gp = np.einsum("ji...,j...->i...", cache.Finv_k[:, :, :, -1], gq)
    n = boundary_geometry(eta_k[:, :, -1], BoundaryLine.of(grid)).n
    return float(np.min(-np.sum(gp * n, axis=0)))


def boundary_length(grid: Grid, eta: np.ndarray) -> float:
    line = BoundaryLine.of(grid)
    t = line.dpos(eta[:, :, -1])
    return float(np.sum(np.sqrt(np.sum(t * t, axis=0))) * line.length / grid.n1)


def physical_energy(grid: Grid, J: np.ndarray, v: np.ndarray, eta: np.ndarray, sigma: float) -> float:
    """``1/2 int J |v|^2 + sigma * length(eta(boundary))``; the strip counts the top only."""
    kin = 0.5 * grid.integrate(J * np.sum(v * v, axis=0))
    return kin + (sigma * boundary_length(grid, eta) if sigma else 0.0)


def rotation_error(grid: Grid, v: np.ndarray, eta: np.ndarray, omega: float) -> float:
    """Relative L2 distance of the Eulerian velocity from the rigid rotation ``omega J y``."""
    rigid = omega * np.stack([-eta[1], eta[0]])
    return grid.l2(v - rigid) / grid.l2(omega * np.stack([-grid.X[1], grid.X[0]]))


# ---------------------------------------------------------------------------
# energies from state histories


def fornberg_weights(x0: float, x: Sequence[float], m: int) -> np.ndarray:
    """Finite-difference weights for derivatives ``0..m`` at ``x0`` on nodes ``x``."""
    x = np.asarray(x, float)
    n = x.size
    c = np.zeros((n, m + 1))
    c1, c4 = 1.0, x[0] - x0
    c[0, 0] = 1.0
    for i in range(1, n):
        mn = min(i, m)
        c2, c5, c4 = 1.0, c4, x[i] - x0
        for j in range(i):
            c3 = x[i] - x[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i, k] = c1 * (k * c[i - 1, k - 1] - c5 * c[i - 1, k]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for k in range(mn, 0, -1):
                c[j, k] = (c4 * c[j, k] - k * c[j, k - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    return c


def time_derivatives(times: Sequence[float], values: Sequence[np.ndarray], kmax: int = 3) -> List[Optional[np.ndarray]]:
    """Derivatives ``0..kmax`` at the latest time from the stored samples.

    Duplicate times are merged (the latest entry wins).  Entry ``k`` is ``None``
    if fewer than ``k + 1`` distinct samples exist.
    """
    uniq: Dict[float, np.ndarray] = {}
    for t, val in zip(times, values):
        uniq[float(t)] = np.asarray(val, float)
    ts = sorted(uniq)
    out: List[Optional[np.ndarray]] = []
    for k in range(kmax + 1):
        need = k + 2 if k else 1
        if len(ts) < k + 1:
            out.append(None)
            continue
        use = ts[-min(len(ts), need + 1):]
        W = fornberg_weights(use[-1], use, k)
        out.append(sum(W[i, k] * uniq[t] for i, t in enumerate(use)))
    return out


def _position(grid: Grid, eta: np.ndarray) -> np.ndarray:
    """Positions enter norms as themselves on the disk and as displacements on the strip."""
    return eta if grid.kind == "disk" else eta - grid.X


def energy_kappa(grid: Grid, times: Sequence[float], etas: Sequence[np.ndarray]) -> Dict[str, Optional[float]]:
    """Squared norms of ``d^k eta / dt^k`` in ``H^{4.5-k}`` for ``k = 0..3`` and of ``v_ttt`` in L2.

    ``v_ttt`` is the fourth time derivative of ``eta``; components that need
    more history than available are ``None``.  On the strip ``eta`` is
    replaced by the displacement ``eta - X`` (the coordinate ``x1`` is not
    periodic).
    """
    ders = time_derivatives(times, [_position(grid, e) for e in etas], 4)
    rep: Dict[str, Optional[float]] = {}
    for k in range(4):
        d = ders[k]
        rep[f"dt{k}_eta"] = None if d is None else sobolev_norm(grid, d, 4.5 - k) ** 2
    d4 = ders[4]
    rep["v_ttt"] = None if d4 is None else grid.l2(d4) ** 2
    vals = [x for x in rep.values() if x is not None]
    rep["total"] = float(sum(vals)) if len(vals) == len(rep) else None
    return rep


def h_kappa(grid: Grid, atlas, v: np.ndarray) -> float:
    """``1/2 int xi |d1^3 v|^2`` with ``d1`` the tangential derivative in chart units."""
    d = v
    for _ in range(3):
        d = grid.d1(d) * atlas.scale
    return 0.5 * grid.integrate(atlas.xi * np.sum(d * d, axis=0))


def energy_tilde(grid: Grid, atlas, eta_k: np.ndarray, eta_lk: np.ndarray, eta: np.ndarray,
                 v: np.ndarray, q: np.ndarray, kappa: float, s: float = 3.5) -> Dict[str, float]:
    """Chart-wise and global norms monitored for the zero-surface-tension problem."""
    eta_k, eta = _position(grid, eta_k), _position(grid, eta)
    eta_lk = [_position(grid, e) if grid.kind != "disk" else e for e in eta_lk]
    rep = {"eta_k": sobolev_norm(grid, eta_k, s), "beta_eta": sobolev_norm(grid, atlas.beta * eta, s),
           "v": sobolev_norm(grid, v, 3.0), "q": sobolev_norm(grid, q, s)}
    for l in range(atlas.K):
        rep[f"chart{l}"] = sobolev_norm(grid, atlas.sqrt_alpha[l] * eta_lk[l], s)
        rep[f"kappa_v{l}"] = kappa * sobolev_norm(grid, atlas.sqrt_alpha[l] * v, s)
        rep[f"kappa32_v{l}"] = kappa ** 1.5 * sobolev_norm(grid, atlas.sqrt_alpha[l] * v, 4.0)
    return rep


# ---------------------------------------------------------------------------
# boundary regularity


class NotAGraph(ValueError):
    """The free boundary is no longer a graph over the reference boundary."""


def graph_height(grid: Grid, eta: np.ndarray, register: bool = True):
    """Height of the free boundary over the reference boundary.

    On the disk the height is ``|y| - R`` as a function of the polar angle;
    with ``register`` the centroid translation is removed first.  On the strip
    it is ``y2 - d`` as a function of ``y1``.  Returns ``(h, nodes)``.
    """
    b = eta[:, :, -1].copy()
    if grid.kind == "disk":
        if register:
            J = np.linalg.det(np.moveaxis(grid.map_jacobian(eta), (0, 1), (-2, -1)))
            c = np.array([grid.integrate(J * eta[i]) for i in range(2)]) / grid.integrate(J)
            b = b - c[:, None]
        ang = np.unwrap(np.arctan2(b[1], b[0]))
        if np.any(np.diff(ang) <= 0) or ang[-1] - ang[0] >= 2 * np.pi:
            raise NotAGraph("boundary angle is not monotone")
        rho = np.hypot(b[0], b[1])
        nodes = 2 * np.pi * grid.xi1
        h = np.interp(nodes, np.mod(ang, 2 * np.pi), rho, period=2 * np.pi) - grid.radius
        return h, nodes
    x1 = b[0]
    if np.any(np.diff(x1) <= 0):
        raise NotAGraph("boundary abscissa is not monotone")
    L = grid.length1
    xs = np.concatenate([x1 - L, x1, x1 + L])
    ys = np.concatenate([b[1], b[1], b[1]])
    h = np.interp(grid.xi1, xs, ys) - grid.length2
    return h, grid.xi1


def boundary_regularity(grid: Grid, eta: np.ndarray, orders: Sequence[float] = (2.0, 3.5)) -> Dict[str, float]:
    """Periodic Sobolev norms of the boundary height, in the reference parameter."""
    h, _ = graph_height(grid, eta)
    n = h.size
    H = np.fft.fft(h) / n
    k = 2 * np.pi * np.fft.fftfreq(n, d=1.0 / n) / grid.length1
    return {f"H{s}": float(np.sqrt(grid.length1 * np.sum((1 + k * k) ** s * np.abs(H) ** 2))) for s in orders}


# ---------------------------------------------------------------------------
# Hodge reconstruction


@dataclasses.dataclass
class HodgeResult:
    F: np.ndarray
    phi: np.ndarray
    psi: np.ndarray
    stability: float
    defect: float


def hodge_reconstruct(grid: Grid, div_f: np.ndarray, curl_f: np.ndarray, bc: str,
                      trace: np.ndarray, mean_flow: float = 0.0, s: float = 1.0) -> HodgeResult:
    """Vector field with prescribed divergence, curl and one boundary trace.

    ``F = grad phi + perp grad psi`` with ``perp grad psi = (-d2 psi, d1 psi)``.
    ``bc="normal"`` prescribes ``F.n`` on every boundary row (``phi`` Neumann,
    ``psi`` zero Dirichlet).  ``bc="tangential"`` prescribes ``F.tau`` with
    ``tau = perp n`` (``phi`` zero Dirichlet, ``psi`` Neumann).  ``trace`` has
    one entry per node of the boundary rows (shape ``(n1, n_rows)``: the last
    row on the disk, bottom then top on the strip).  On the strip one
    constant field is not determined by these data: the mean of ``F_1`` for
    normal data, the mean of ``F_2`` for tangential data.  It is set to
    ``mean_flow``.
    """
    if bc not in ("normal", "tangential"):
        raise ValueError("bc must be 'normal' or 'tangential'")
    rows = [-1] if grid.kind == "disk" else [0, -1]
    trace = np.asarray(trace, float).reshape(grid.n1, len(rows))
    flux = np.zeros(grid.shape)
    for c, row in enumerate(rows):
        n = _outward(grid, row)
        meas = grid.bweights * np.sqrt(np.sum((grid.detdx[:, row] * grid.dxi[1][:, :, row]) ** 2, axis=0))
        flux[:, row] = meas * trace[:, c]
    op_n = EllipticOperator(grid, dirichlet_rows=())
    op_d = EllipticOperator(grid, dirichlet_rows=rows)
    zero = np.zeros(grid.shape)
    if bc == "normal":
        phi, st = op_n.solve_neumann(div_f, flux)
        psi, _ = op_d.solve_dirichlet(curl_f, zero)
        defect = st.compatibility_defect
    else:
        phi, _ = op_d.solve_dirichlet(div_f, zero)
        psi, st = op_n.solve_neumann(curl_f, flux)
        defect = st.compatibility_defect
    gphi, gpsi = grid.grad(phi), grid.grad(psi)
    F = gphi + np.stack([-gpsi[1], gpsi[0]])
    if grid.kind == "strip":
        c = 0 if bc == "normal" else 1
        F[c] += mean_flow - grid.integrate(F[c]) / grid.area
    if defect > 1e-6:
        raise ValueError(f"incompatible Hodge data (defect {defect:.2e})")
    num = sobolev_norm(grid, F, s)
    bnorm = float(np.sqrt(np.sum(trace ** 2) / trace.size))
    den = grid.l2(F) + sobolev_norm(grid, div_f, max(s - 1, 0)) + sobolev_norm(grid, curl_f, max(s - 1, 0)) + bnorm
    return HodgeResult(F, phi, psi, num / den if den else 0.0, defect)


def _outward(grid: Grid, row: int) -> np.ndarray:
    if grid.kind == "disk":
        return grid.dxi[1][:, :, -1]
    n = np.zeros((2, grid.n1))
    n[1] = 1.0 if row % grid.n2 == grid.n2 - 1 else -1.0
    return n


def hodge_traces(grid: Grid, F: np.ndarray, bc: str) -> np.ndarray:
    """Boundary trace of ``F`` in the layout expected by :func:`hodge_reconstruct`."""
    rows = [-1] if grid.kind == "disk" else [0, -1]
    out = np.zeros((grid.n1, len(rows)))
    for c, row in enumerate(rows):
        n = _outward(grid, row)
        Fb = F[:, :, row]
        if bc == "normal":
            out[:, c] = np.sum(Fb * n, axis=0)
        else:
            tau = np.stack([-n[1], n[0]])
            out[:, c] = np.sum(Fb * tau, axis=0)
    return out


# ---------------------------------------------------------------------------
# per-step record


def step_record(grid: Grid, t: float, dt: float, cache: PullbackCache, eta: np.ndarray,
                eta_k: np.ndarray, v: np.ndarray, v_k: np.ndarray, q: np.ndarray, sigma: float,
                curl_u0: np.ndarray, acc_B: np.ndarray, solver: Optional[dict] = None) -> dict:
    _, div = divergence_residual(grid, cache, v)
    _, tr = vorticity_transport_residual(grid, cache, v, curl_u0, acc_B)
    rec = {
        "t": float(t), "dt": float(dt), "div_residual": div,
        "J_min": float(cache.J_k.min()), "J_max": float(cache.J_k.max()),
        "taylor_margin": taylor_margin(grid, cache, q, eta_k),
        "E_phys": physical_energy(grid, cache.J, v, eta, sigma),
        "curl_residual": tr,
        "lagrangian_curl": grid.l2(lagrangian_curl(grid, cache, v)),
        "volume": grid.integrate(cache.J),
    }
    if solver:
        rec.update({f"solver_{k}": val for k, val in solver.items()})
    for k, val in rec.items():
        if isinstance(val, float) and not math.isfinite(val):
            raise FloatingPointError(f"non-finite diagnostic {k}")
    return rec


# ---------------------------------------------------------------------------
# standing-wave measurements


def surface_mode(grid: Grid, eta: np.ndarray, k: float) -> float:
    """Cosine coefficient of wavenumber ``k`` in the top-surface elevation."""
    x = grid.X[0][:, -1]
    elev = eta[1][:, -1] - grid.length2
    return float(2.0 * np.mean(elev * np.cos(k * x)))


def zero_crossing_frequency(times: Sequence[float], amp: Sequence[float], t0_crossing: bool = True) -> float:
    """Angular frequency from the zero crossings of a sampled oscillation.

    Crossing times are located by linear interpolation and fitted to
    ``t_m = t_0 + m pi / omega``; a crossing at ``t = 0`` is included when
    ``t0_crossing`` is set.
    """
    t = np.asarray(times, float)
    a = np.asarray(amp, float)
    cross = [0.0] if t0_crossing else []
    for i in range(1, t.size):
        if a[i - 1] == 0.0 and i - 1 == 0:
            continue
        if a[i - 1] * a[i] < 0:
            cross.append(t[i - 1] - a[i - 1] * (t[i] - t[i - 1]) / (a[i] - a[i - 1]))
    if len(cross) < 2:
        raise ValueError("fewer than two zero crossings")
    m = np.arange(len(cross))
    slope = np.polyfit(m, np.asarray(cross), 1)[0]
    return float(np.pi / slope)
