"""Variable-coefficient pressure solvers on the fixed reference grid.

The operator is assembled from the quadratic form

    E(q) = integral of  grad q . K grad q  dx,     K = J_k inv(F_k) inv(F_k)^T,

so the matrix ``H`` (with ``E(q) = q^T H q``) is symmetric by construction and
``L q = -H q / w`` (``w`` the node quadrature weights) is the discrete
``div(K grad q)``.  Tangential derivatives use compact face differences on the
disk and spectral differences on the strip; radial derivatives use compact
face differences; mixed terms use central node differences.  With ``K = I``
this reduces to the five-point polar finite-volume Laplacian on the disk and
to the spectral-in-x1 Laplacian on the strip.
"""

from __future__ import annotations

import dataclasses
import warnings
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy import fft as sfft

from ._kernels import consistent_apply_polar
from .fields import Grid, PullbackCache, adj2, spectral_wavenumbers
from .geometry import BoundaryLine, boundary_geometry, laplace_beltrami0


class SolverError(RuntimeError):
    """Elliptic solve failed to reach its tolerance."""


@dataclasses.dataclass
class SolveStats:
    method: str
    iterations: int
    residual: float
    compatibility_defect: float = 0.0


def coefficient_tensor(cache: PullbackCache) -> np.ndarray:
    """``K = J_k inv(F_k) inv(F_k)^T``."""
    Fi = cache.Finv_k
    return cache.J_k * np.einsum("ik...,jk...->ij...", Fi, Fi)


# ---------------------------------------------------------------------------
# geometry-only difference operators, cached per grid


class _Stencils:
    def __init__(self, grid: Grid):
        self.grid = grid
        n1, n2 = grid.shape
        N = n1 * n2
        self.N = N
        idx = np.arange(N).reshape(n1, n2)
        h1, h2 = grid.h1, grid.h2
        # radial face differences: (n1, n2-1) faces
        rows = np.arange(n1 * (n2 - 1)).reshape(n1, n2 - 1)
        r = np.concatenate([rows.ravel(), rows.ravel()])
        c = np.concatenate([idx[:, 1:].ravel(), idx[:, :-1].ravel()])
        v = np.concatenate([np.full(rows.size, 1 / h2), np.full(rows.size, -1 / h2)])
        self.Df2 = sp.csr_matrix((v, (r, c)), shape=(rows.size, N))
        # radial node differences
        r, c, v = [], [], []
        def add(rr, cc, vv):
            r.append(rr.ravel()); c.append(cc.ravel()); v.append(np.broadcast_to(vv, rr.shape).ravel())
        add(idx[:, 1:-1], idx[:, 2:], 0.5 / h2)
        add(idx[:, 1:-1], idx[:, :-2], -0.5 / h2)
        add(idx[:, -1], idx[:, -1], 1 / h2)
        add(idx[:, -1], idx[:, -2], -1 / h2)
        if grid.kind == "disk":
            add(idx[:, 0], idx[:, 1], 0.5 / h2)
            add(idx[:, 0], np.roll(idx[:, 0], -n1 // 2), -0.5 / h2)
        else:
            add(idx[:, 0], idx[:, 1], 1 / h2)
            add(idx[:, 0], idx[:, 0], -1 / h2)
        self.G2 = sp.csr_matrix((np.concatenate(v), (np.concatenate(r), np.concatenate(c))), shape=(N, N))
        if grid.spectral1:
            self.D1 = None
            self.G1 = None
            k = spectral_wavenumbers(n1, grid.length1)
            self.k1 = k
            self.D1dense = sfft.irfft(sfft.rfft(np.eye(n1), axis=0) * (1j * k)[:, None], n=n1, axis=0)
        else:
            # tangential face differences (periodic) and central node differences
            f_r = np.concatenate([idx.ravel(), idx.ravel()])
            f_c = np.concatenate([np.roll(idx, -1, 0).ravel(), idx.ravel()])
            f_v = np.concatenate([np.full(N, 1 / h1), np.full(N, -1 / h1)])
            self.D1 = sp.csr_matrix((f_v, (f_r, f_c)), shape=(N, N))
            g_c = np.concatenate([np.roll(idx, -1, 0).ravel(), np.roll(idx, 1, 0).ravel()])
            g_v = np.concatenate([np.full(N, 0.5 / h1), np.full(N, -0.5 / h1)])
            self.G1 = sp.csr_matrix((g_v, (f_r, g_c)), shape=(N, N))
        self.Df2T = self.Df2.T.tocsr()
        self.G2T = self.G2.T.tocsr()
        if self.D1 is not None:
            self.D1T = self.D1.T.tocsr()
            self.G1T = self.G1.T.tocsr()
        # face geometry
        S = grid.xi1
        if grid.kind == "disk":
            thf = 2 * np.pi * (S + 0.5 * grid.h1)
            r2 = grid.xi2
            self.face0_grad = np.stack([-np.sin(thf)[:, None] / (2 * np.pi * r2[None, :]),
                                        np.cos(thf)[:, None] / (2 * np.pi * r2[None, :])])
            th = 2 * np.pi * S
            self.face1_grad = np.stack([np.broadcast_to(np.cos(th)[:, None], (n1, n2 - 1)),
                                        np.broadcast_to(np.sin(th)[:, None], (n1, n2 - 1))])
            w1 = np.pi * grid.h1 * (r2[1:] ** 2 - r2[:-1] ** 2)
            self.face1_w = np.broadcast_to(w1, (n1, n2 - 1)).copy()
        else:
            self.face0_grad = np.stack([np.ones((n1, n2)), np.zeros((n1, n2))])
            self.face1_grad = np.stack([np.zeros((n1, n2 - 1)), np.ones((n1, n2 - 1))])
            self.face1_w = np.full((n1, n2 - 1), grid.h1 * grid.h2)
        self.w = grid.weights


_STENCIL_CACHE: dict = {}


def _stencils(grid: Grid) -> _Stencils:
    key = id(grid)
    st = _STENCIL_CACHE.get(key)
    if st is None or st.grid is not grid:
        st = _Stencils(grid)
        if len(_STENCIL_CACHE) > 16:
            _STENCIL_CACHE.clear()
        _STENCIL_CACHE[key] = st
    return st


def _contract(a, K, b):
    return np.einsum("i...,ij...,j...->...", a, K, b)


class EllipticOperator:
    """Symmetric matrix of ``integral grad q . K grad q`` on ``grid``.

    ``dirichlet_rows`` lists second-axis rows whose values are prescribed;
    every other boundary row carries the natural (flux) condition.
    """

    def __init__(self, grid: Grid, K: Optional[np.ndarray] = None,
                 dirichlet_rows: Sequence[int] = (-1,)):
        self.grid = grid
        n1, n2 = grid.shape
        if K is None:
            K = np.broadcast_to(np.eye(2)[:, :, None, None], (2, 2, n1, n2))
        self.K = K
        st = _stencils(grid)
        self.st = st
        rows = sorted({int(r) % n2 for r in dirichlet_rows})
        self.dirichlet_rows = rows
        mask = np.zeros(grid.shape, dtype=bool)
        mask[:, rows] = True
        self.dmask = mask
        self.free = ~mask.ravel()
        w = grid.weights
        dxi = grid.dxi
        if grid.spectral1:
            self.c0 = w * _contract(dxi[0], K, dxi[0])
        else:
            Kf = 0.5 * (K + np.roll(K, -1, axis=-2))
            self.c0 = w * _contract(st.face0_grad, Kf, st.face0_grad)
        Kr = 0.5 * (K[..., 1:] + K[..., :-1])
        self.c1 = st.face1_w * _contract(st.face1_grad, Kr, st.face1_grad)
        self.c01 = w * _contract(dxi[0], K, dxi[1])
        self._c0f = self.c0.ravel()
        self._c1f = self.c1.ravel()
        self._c01f = self.c01.ravel()
        self._precond = None

    # application ----------------------------------------------------------
    def _d1(self, q2d):
        st = self.st
        return sfft.irfft(sfft.rfft(q2d, axis=0) * (1j * st.k1)[:, None], n=self.grid.n1, axis=0)

    def apply(self, q: np.ndarray) -> np.ndarray:
        st = self.st
        shape = self.grid.shape
        qf = np.asarray(q, float).ravel()
        out = st.Df2T @ (self._c1f * (st.Df2 @ qf))
        g2 = st.G2 @ qf
        if self.grid.spectral1:
            q2 = qf.reshape(shape)
            g1 = self._d1(q2)
            out += (-self._d1(self.c0 * g1)).ravel()
            out += (-self._d1(self.c01 * g2.reshape(shape))).ravel()
            out += st.G2T @ (self._c01f * g1.ravel())
        else:
            out += st.D1T @ (self._c0f * (st.D1 @ qf))
            g1 = st.G1 @ qf
            out += st.G1T @ (self._c01f * g2) + st.G2T @ (self._c01f * g1)
        return out.reshape(shape)

    def matrix(self) -> sp.csr_matrix:
        st = self.st
        H = st.Df2T @ sp.diags(self._c1f) @ st.Df2
        if self.grid.spectral1:
            n1, n2 = self.grid.shape
            D1 = sp.kron(sp.csr_matrix(st.D1dense), sp.identity(n2), format="csr")
            H = H + D1.T @ sp.diags(self._c0f) @ D1
            H = H + D1.T @ sp.diags(self._c01f) @ st.G2 + st.G2T @ sp.diags(self._c01f) @ D1
        else:
            H = H + st.D1T @ sp.diags(self._c0f) @ st.D1
            H = H + st.G1T @ sp.diags(self._c01f) @ st.G2 + st.G2T @ sp.diags(self._c01f) @ st.G1
        return H.tocsr()

    def laplacian(self, q: np.ndarray) -> np.ndarray:
        """Discrete ``div(K grad q)`` (meaningful off the Dirichlet rows)."""
        return -self.apply(q) / self.grid.weights

    # preconditioner -------------------------------------------------------
    def _build_precond(self):
        g = self.grid
        n1, n2 = g.shape
        a0 = self.c0.mean(axis=0)
        a1 = self.c1.mean(axis=0) / g.h2 ** 2
        m = np.arange(n1 // 2 + 1)
        if g.spectral1:
            lam = spectral_wavenumbers(n1, g.length1) ** 2
        else:
            lam = (2.0 - 2.0 * np.cos(2 * np.pi * m / n1)) / g.h1 ** 2
        diag = lam[:, None] * a0[None, :]
        diag[:, :-1] += a1[None, :]
        diag[:, 1:] += a1[None, :]
        lower = -a1.copy()
        dm = np.zeros(n2, dtype=bool)
        dm[self.dirichlet_rows] = True
        diag[:, dm] = 1.0
        off = lower.copy()
        off[dm[:-1] | dm[1:]] = 0.0
        if not dm.any():
            diag[0, 0] += 1e-8 * max(abs(diag[0]).max(), 1.0)
        # Thomas factorization per mode
        M = diag.shape[0]
        cp = np.zeros((M, n2 - 1))
        den = np.zeros((M, n2))
        den[:, 0] = diag[:, 0]
        for j in range(n2 - 1):
            cp[:, j] = off[j] / den[:, j]
            den[:, j + 1] = diag[:, j + 1] - off[j] * cp[:, j]
        self._precond = (off, cp, den, dm)

    def precondition(self, r: np.ndarray) -> np.ndarray:
        if self._precond is None:
            self._build_precond()
        off, cp, den, dm = self._precond
        n1, n2 = self.grid.shape
        R = sfft.rfft(r.reshape(n1, n2), axis=0)
        R[:, dm] = 0.0
        y = np.empty_like(R)
        y[:, 0] = R[:, 0] / den[:, 0]
        for j in range(1, n2):
            y[:, j] = (R[:, j] - off[j - 1] * y[:, j - 1]) / den[:, j]
        for j in range(n2 - 2, -1, -1):
            y[:, j] -= cp[:, j] * y[:, j + 1]
        z = sfft.irfft(y, n=n1, axis=0)
        z[self.dmask] = 0.0
        return z

    # solves ---------------------------------------------------------------
    def _rhs(self, f: np.ndarray, qb: Optional[np.ndarray], flux: Optional[np.ndarray]) -> np.ndarray:
        b = -self.grid.weights * np.asarray(f, float)
        if flux is not None:
            b = b + flux
        if qb is not None:
            qd = np.zeros(self.grid.shape)
            qd[self.dmask] = np.asarray(qb, float)[self.dmask]
            b = b - self.apply(qd)
        return b

    def solve_dirichlet(self, f: np.ndarray, qb: Optional[np.ndarray] = None,
                        flux: Optional[np.ndarray] = None, x0: Optional[np.ndarray] = None,
                        method: str = "pcg", tol: float = 1e-10, maxiter: int = 500):
        """Solve ``H q = -w f + flux`` off the Dirichlet rows with ``q = qb`` on them.

        ``qb`` is a full-grid array read only on the Dirichlet rows.
        """
        if not self.dirichlet_rows:
            raise ValueError("operator has no Dirichlet rows; use solve_neumann")
        b = self._rhs(f, qb, flux)
        b[self.dmask] = 0.0
        bnorm = float(np.linalg.norm(b))
        q = np.zeros(self.grid.shape)
        if qb is not None:
            q[self.dmask] = np.asarray(qb, float)[self.dmask]
        if bnorm == 0.0:
            return q, SolveStats(method, 0, 0.0)
        if method == "direct":
            H = self.matrix()
            fr = self.free
            x = spla.spsolve(H[fr][:, fr].tocsc(), b.ravel()[fr])
            xf = np.zeros(q.size)
            xf[fr] = x
            x = xf.reshape(self.grid.shape)
            res = self.apply(x)
            res[self.dmask] = 0.0
            rel = float(np.linalg.norm(res - b) / bnorm)
            q[~self.dmask] = x[~self.dmask]
            if not np.isfinite(rel) or rel > max(tol, 1e-8):
                raise SolverError(f"direct solve residual {rel:.3e}")
            return q, SolveStats("direct", 1, rel)
        x = np.zeros(self.grid.shape) if x0 is None else np.array(x0, float)
        x[self.dmask] = 0.0
        r = b - self._apply_free(x)
        z = self.precondition(r)
        p = z.copy()
        rz = float(np.vdot(r, z))
        it = 0
        rel = float(np.linalg.norm(r)) / bnorm
        while rel > tol and it < maxiter:
            Ap = self._apply_free(p)
            alpha = rz / float(np.vdot(p, Ap))
            x += alpha * p
            r -= alpha * Ap
            it += 1
            rel = float(np.linalg.norm(r)) / bnorm
            if rel <= tol:
                break
            z = self.precondition(r)
            rz_new = float(np.vdot(r, z))
            p = z + (rz_new / rz) * p
            rz = rz_new
        if not np.isfinite(rel) or rel > tol:
            raise SolverError(f"PCG stopped at relative residual {rel:.3e} after {it} iterations")
        q[~self.dmask] = x[~self.dmask]
        return q, SolveStats("pcg", it, rel)

    def _apply_free(self, x):
        y = self.apply(x)
        y[self.dmask] = 0.0
        return y

    def solve_neumann(self, f: np.ndarray, flux: Optional[np.ndarray] = None,
                      pin_mask: Optional[np.ndarray] = None, pin_value: float = 0.0):
        """Pure natural-condition solve; the source is shifted uniformly to restore compatibility.

        The additive constant is fixed by making the mean of ``q`` over
        ``pin_mask`` (default: the boundary row) equal ``pin_value``.
        """
        w = self.grid.weights
        f = np.asarray(f, float)
        flux = np.zeros(self.grid.shape) if flux is None else np.asarray(flux, float)
        total = float(np.sum(-w * f + flux))
        scale = float(np.sum(np.abs(w * f)) + np.sum(np.abs(flux))) or 1.0
        defect = abs(total) / scale
        if defect > 1e-6:
            warnings.warn(f"Neumann data incompatible by {defect:.2e}; source shifted uniformly",
                          RuntimeWarning, stacklevel=2)
        fc = f + total / float(w.sum())
        b = (-w * fc + flux).ravel()
        H = EllipticOperator(self.grid, self.K, dirichlet_rows=()).matrix()
        N = b.size
        one = np.ones((N, 1))
        A = sp.bmat([[H, sp.csr_matrix(one)], [sp.csr_matrix(one.T), None]], format="csc")
        sol = spla.spsolve(A, np.concatenate([b, [0.0]]))
        q = sol[:N].reshape(self.grid.shape)
        res = float(np.linalg.norm(H @ q.ravel() - b) / (np.linalg.norm(b) or 1.0))
        if not np.isfinite(res) or res > 1e-8:
            raise SolverError(f"Neumann solve residual {res:.3e}")
        pm = self.grid.is_boundary() if pin_mask is None else pin_mask
        q = q - q[pm].mean() + pin_value
        return q, SolveStats("direct-neumann", 1, res, defect)


# ---------------------------------------------------------------------------
# pressure problems


def pressure_source(grid: Grid, cache: PullbackCache, v: np.ndarray, v_k: np.ndarray,
                    dv: Optional[np.ndarray] = None) -> np.ndarray:
    """``adj(grad v_k)[j, i] d_j v^i``: the time derivative of the adjugate acting on ``grad v``."""
    dv = grid.jacobian(v) if dv is None else dv
    dvk = grid.jacobian(v_k)
    B = adj2(dvk)
    return np.einsum("ji...,ij...->...", B, dv)


def divergence(grid: Grid, cache: PullbackCache, v: np.ndarray, dv: Optional[np.ndarray] = None) -> np.ndarray:
    """``Tr(a_k grad v) = sum a_k[j, i] d_j v^i``."""
    dv = grid.jacobian(v) if dv is None else dv
    return np.einsum("ji...,ij...->...", cache.a_k, dv)


def boundary_pressure(grid: Grid, eta: np.ndarray, eta_k: np.ndarray, v: np.ndarray,
                      sqrt_g0: np.ndarray, sigma: float, kappa: float):
    """Dirichlet data ``sigma (sqrt g / sqrt g_k) H n.n_k - kappa Lap0(v.n_k)`` on the last row."""
    line = BoundaryLine.of(grid)
    bg = boundary_geometry(eta[:, :, -1], line)
    bk = boundary_geometry(eta_k[:, :, -1], line) if eta_k is not eta else bg
    q = np.zeros(grid.n1)
    if sigma:
        q += sigma * (bg.sqrt_g / bk.sqrt_g) * bg.H * np.sum(bg.n * bk.n, axis=0)
    if kappa:
        vn = np.sum(v[:, :, -1] * bk.n, axis=0)
        q -= kappa * laplace_beltrami0(vn, sqrt_g0, bk.sqrt_g, line)
    return q, bg, bk


def reference_sqrt_g(grid: Grid) -> np.ndarray:
    line = BoundaryLine.of(grid)
    t = line.dpos(grid.X[:, :, -1])
    return np.sqrt(np.sum(t * t, axis=0))


def solve_pressure_dirichlet(grid: Grid, eta: np.ndarray, v: np.ndarray, eta_k: np.ndarray,
                             v_k: np.ndarray, cache: PullbackCache, sigma: float, kappa: float,
                             sqrt_g0: Optional[np.ndarray] = None, method: str = "pcg",
                             x0: Optional[np.ndarray] = None, relax: float = 0.0,
                             tol: float = 1e-10, op: Optional[EllipticOperator] = None):
    """Pressure of the smoothed problem; returns ``(q, stats, operator)``.

    ``method`` is ``"consistent"`` (:class:`ConsistentOperator`, GMRES),
    ``"pcg"`` or ``"direct"`` (compact :class:`EllipticOperator`).
    ``relax`` adds ``relax * Tr(a_k grad v)`` to the source (zero by default).
    """
    if sqrt_g0 is None:
        sqrt_g0 = reference_sqrt_g(grid)
    dv = grid.jacobian(v)
    f = pressure_source(grid, cache, v, v_k, dv)
    if relax:
        f = f + relax * divergence(grid, cache, v, dv)
    qb_row, _, _ = boundary_pressure(grid, eta, eta_k, v, sqrt_g0, sigma, kappa)
    qb = np.zeros(grid.shape)
    qb[:, -1] = qb_row
    if method == "consistent":
        op = ConsistentOperator(grid, cache) if op is None else op
        q, stats = op.solve_dirichlet(f, qb, x0=x0, tol=tol)
        return q, stats, op
    if op is None:
        op = EllipticOperator(grid, coefficient_tensor(cache))
    q, stats = op.solve_dirichlet(f, qb, x0=x0, method=method, tol=tol)
    return q, stats, op


def neumann_flux(grid: Grid, cache: PullbackCache, v_t: np.ndarray) -> np.ndarray:
    """Boundary-row flux data ``-v_t . (a_k^T N)`` times the reference boundary measure."""
    flux = np.zeros(grid.shape)
    A = cache.a_k[:, :, :, -1]
    N = grid.dxi[1][:, :, -1]
    AN = np.einsum("ji...,j...->i...", A, N)
    meas = grid.bweights * grid.detdx[:, -1]
    flux[:, -1] = -meas * np.sum(v_t[:, :, -1] * AN, axis=0)
    return flux


def solve_pressure_neumann(grid: Grid, v: np.ndarray, v_k: np.ndarray, v_t: np.ndarray,
                           cache: PullbackCache, pin_value: float = 0.0,
                           op: Optional[EllipticOperator] = None):
    """Neumann form of the same pressure, pinned to ``pin_value`` on the boundary mean.

    On the strip the bottom row keeps its homogeneous flux condition.
    """
    f = pressure_source(grid, cache, v, v_k)
    flux = neumann_flux(grid, cache, v_t)
    if op is None:
        op = EllipticOperator(grid, coefficient_tensor(cache), dirichlet_rows=())
    return op.solve_neumann(f, flux, pin_value=pin_value)


def penalized_pressure(grid: Grid, w: np.ndarray, cache: PullbackCache, eps: float) -> np.ndarray:
    """``-(1/eps) Tr(a_k grad w)``, evaluated pointwise."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    return -divergence(grid, cache, w) / eps


def momentum_rhs(grid: Grid, cache: PullbackCache, q: np.ndarray) -> np.ndarray:
    """``-inv(F_k)^T grad q`` (the velocity tendency)."""
    gq = grid.grad(q)
    return -np.einsum("ji...,j...->i...", cache.Finv_k, gq)


# ---------------------------------------------------------------------------
# discretely consistent pressure operator


class _ModePreconditioner:
    """Exact inverse of the undeformed consistent operator, one dense radial block per angular mode.

    The undeformed operator commutes with shifts along the first axis, so its
    response to a point source on each row gives every Fourier block at once.
    """

    def __init__(self, grid: Grid, dirichlet_rows: Sequence[int]):
        from .fields import pullback_cache
        n1, n2 = grid.shape
        ident = pullback_cache(grid, grid.X, check=False)
        op = ConsistentOperator(grid, ident, dirichlet_rows, precondition=False)
        probes = np.zeros((n2, n1, n2))
        probes[np.arange(n2), 0, np.arange(n2)] = 1.0
        resp = op.apply(probes)                       # (source row, n1, n2)
        blocks = np.transpose(sfft.rfft(resp, axis=1), (1, 2, 0))  # (mode, row, source row)
        rows = op.compact.dirichlet_rows
        blocks[:, rows, :] = 0.0
        blocks[:, rows, rows] = 1.0
        inv = np.linalg.pinv(blocks, rcond=1e-12)
        # reflection symmetry of the undeformed operator makes every block real
        self.inv = np.ascontiguousarray(inv.real) if np.abs(inv.imag).max() < 1e-10 * np.abs(inv).max() else inv
        self.dmask = op.dmask

    def __call__(self, r: np.ndarray) -> np.ndarray:
        n1 = r.shape[0]
        R = sfft.rfft(r, axis=0)
        R[:, self.dmask[0]] = 0.0
        if np.isrealobj(self.inv):
            Z = np.matmul(self.inv, R.view(float).reshape(R.shape + (2,))).view(complex)[..., 0]
        else:
            Z = np.matmul(self.inv, R[:, :, None])[:, :, 0]
        z = sfft.irfft(Z, n=n1, axis=0)
        z[self.dmask] = 0.0
        return z


_MODE_CACHE: dict = {}


def _mode_preconditioner(grid: Grid, rows: Sequence[int]) -> _ModePreconditioner:
    key = (id(grid), tuple(sorted(int(r) % grid.n2 for r in rows)))
    hit = _MODE_CACHE.get(key)
    if hit is None or hit[0] is not grid:
        if len(_MODE_CACHE) > 8:
            _MODE_CACHE.clear()
        hit = (grid, _ModePreconditioner(grid, rows))
        _MODE_CACHE[key] = hit
    return hit[1]


class ConsistentOperator:
    """``A q = Tr(a_k grad(inv(F_k)^T grad q))`` built from the same node derivatives as the constraint.

    With this operator the discrete time derivative of ``Tr(a_k grad v)``
    vanishes to solver tolerance at every non-Dirichlet node, because the
    momentum update and the divergence monitor share their difference
    stencils.  The operator is not symmetric; it is solved with GMRES
    preconditioned by the exact inverse of the undeformed operator (one
    radial block per angular mode).  Grid-scale checkerboards lie (nearly)
    in its kernel; they are invisible to ``grad q`` and therefore to the
    dynamics.

    On the strip the bottom row carries the wall condition
    ``(inv(F_k)^T grad q)_2 = 0`` instead (no normal acceleration), scaled
    like a half-cell flux balance.
    """

    def __init__(self, grid: Grid, cache: PullbackCache, dirichlet_rows: Sequence[int] = (-1,),
                 precondition: bool = True):
        self.grid = grid
        self.cache = cache
        self.compact = EllipticOperator(grid, coefficient_tensor(cache), dirichlet_rows)
        self.dmask = self.compact.dmask
        self.free = self.compact.free
        self.wall = grid.kind != "disk" and 0 not in self.compact.dirichlet_rows
        self._rows = tuple(dirichlet_rows)
        self._pc = _mode_preconditioner(grid, self._rows) if precondition else None
        self._fast = grid.kind == "disk" and grid.n2 >= 5
        if self._fast:
            self._Fi = np.ascontiguousarray(cache.Finv_k, dtype=float)
            self._a = np.ascontiguousarray(cache.a_k, dtype=float)

    def apply(self, q: np.ndarray) -> np.ndarray:
        g = self.grid
        if q.ndim == 2 and self._fast:
            return consistent_apply_polar(q, self._Fi, self._a, g.dxi, g.h1, g.h2)
        return self.apply_array(q)

    def apply_array(self, q: np.ndarray) -> np.ndarray:
        """Array implementation of :meth:`apply` (any leading batch axes)."""
        g = self.grid
        Fi, a = self.cache.Finv_k, self.cache.a_k
        gq = g.grad(q)
        g0, g1 = gq[..., 0, :, :], gq[..., 1, :, :]
        flux = np.stack([Fi[0, 0] * g0 + Fi[1, 0] * g1, Fi[0, 1] * g0 + Fi[1, 1] * g1], axis=-3)
        G = g.grad(flux)
        out = (a[0, 0] * G[..., 0, 0, :, :] + a[1, 0] * G[..., 0, 1, :, :]
               + a[0, 1] * G[..., 1, 0, :, :] + a[1, 1] * G[..., 1, 1, :, :])
        if self.wall:
            out[..., 0] = (2.0 / g.h2) * (self.cache.J_k[:, 0] * Fi[1, 1, :, 0]) * flux[..., 1, :, 0]
        return out

    def solve_dirichlet(self, f: np.ndarray, qb: Optional[np.ndarray] = None,
                        x0: Optional[np.ndarray] = None, tol: float = 1e-10, maxiter: int = 400):
        """Solve ``A q = f`` off the Dirichlet rows with ``q = qb`` on them."""
        g = self.grid
        shape = g.shape
        fr = self.free
        q = np.zeros(shape)
        if qb is not None:
            q[self.dmask] = np.asarray(qb, float)[self.dmask]
        f = np.array(f, dtype=float)
        if self.wall:
            f[:, 0] = 0.0
        b = (f - self.apply(q)).ravel()[fr]
        bnorm = float(np.linalg.norm(b))
        if bnorm == 0.0:
            return q, SolveStats("gmres", 0, 0.0)
        nfree = int(fr.sum())

        def A(x):
            z = np.zeros(q.size)
            z[fr] = x
            return self.apply(z.reshape(shape)).ravel()[fr]

        def M(r):
            z = np.zeros(q.size)
            z[fr] = r
            return self._pc(z.reshape(shape)).ravel()[fr]

        Aop = spla.LinearOperator((nfree, nfree), matvec=A, dtype=float)
        Mop = spla.LinearOperator((nfree, nfree), matvec=M, dtype=float)
        start = None if x0 is None else np.asarray(x0, float).ravel()[fr]
        count = [0]
        x, info = spla.gmres(Aop, b, x0=start, rtol=tol, atol=0.0, restart=60, maxiter=maxiter,
                             M=Mop, callback=lambda _: count.__setitem__(0, count[0] + 1),
                             callback_type="pr_norm")
        rel = float(np.linalg.norm(A(x) - b) / bnorm)
        if not np.isfinite(rel) or rel > 10 * tol:
            raise SolverError(f"GMRES stopped at relative residual {rel:.3e} (info {info})")
        out = q.ravel()
        out[fr] = x
        return out.reshape(shape), SolveStats("gmres", count[0], rel)
