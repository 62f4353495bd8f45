"""Reference grids, discrete calculus, pullback caches and Sobolev norms.

Arrays follow one layout throughout the package: a scalar field has shape
``(n1, n2)``, a vector field ``(2, n1, n2)`` and a matrix field
``(2, 2, n1, n2)``.  Axis ``n1`` is the tangential (periodic) reference
coordinate and the last row ``[:, -1]`` of axis ``n2`` is the free boundary.

Three grid kinds are supported:

``disk``
    polar reference grid on the disk of radius ``R``.  ``s`` in ``[0, 1)``
    is the angle divided by ``2*pi`` and the radial nodes are
    ``r_j = (j + 1/2) dr`` with ``dr = R / (n2 - 1/2)`` so the last row lies
    on the circle and no node sits on the origin.
``strip``
    periodic strip ``[0, L) x [0, d]``, free top, flat impermeable bottom.
``box``
    non-periodic rectangle, used for interpolation and stencil checks.
"""

from __future__ import annotations

import dataclasses
from typing import Optional, Sequence

import numpy as np
from scipy import fft as sfft
from scipy.interpolate import RectBivariateSpline


class WindowBreach(RuntimeError):
    """Raised when the flow leaves the admissible validity window."""


GRID_KINDS = ("disk", "strip", "box")


def _fd4_periodic(f: np.ndarray, h: float, axis: int) -> np.ndarray:
    # differences first, so that constants give exactly zero
    g = np.moveaxis(f, axis, -1)
    n = g.shape[-1]
    w = np.concatenate([g[..., -2:], g, g[..., :2]], axis=-1)
    d = (8.0 * (w[..., 3:n + 3] - w[..., 1:n + 1]) - (w[..., 4:] - w[..., :n])) / (12.0 * h)
    return np.moveaxis(d, -1, axis)


def _fd4_edges(f: np.ndarray, out: np.ndarray, h: float, start: bool, end: bool) -> None:
    """Fourth-order one-sided stencils on the first/last two nodes of the last axis."""
    if start:
        f0, f1, f2, f3, f4 = (f[..., k] for k in range(5))
        out[..., 0] = (48 * (f1 - f0) - 36 * (f2 - f0) + 16 * (f3 - f0) - 3 * (f4 - f0)) / (12 * h)
        out[..., 1] = (-3 * (f0 - f1) + 18 * (f2 - f1) - 6 * (f3 - f1) + (f4 - f1)) / (12 * h)
    if end:
        f0, f1, f2, f3, f4 = (f[..., -1 - k] for k in range(5))
        out[..., -1] = -(48 * (f1 - f0) - 36 * (f2 - f0) + 16 * (f3 - f0) - 3 * (f4 - f0)) / (12 * h)
        out[..., -2] = -(-3 * (f0 - f1) + 18 * (f2 - f1) - 6 * (f3 - f1) + (f4 - f1)) / (12 * h)


def _fd4_line(f: np.ndarray, h: float, lead: Optional[np.ndarray] = None) -> np.ndarray:
    """First derivative along the last axis.

    ``lead`` optionally supplies two ghost values before index 0 (ordered
    ``[-2, -1]``), which replaces the one-sided start stencil.
    """
    n = f.shape[-1]
    out = np.empty_like(f)
    if lead is not None:
        g = np.concatenate([lead, f], axis=-1)
        c = (8.0 * (g[..., 3:n + 1] - g[..., 1:n - 1]) - (g[..., 4:n + 2] - g[..., 0:n - 2])) / (12.0 * h)
        out[..., : n - 2] = c
        _fd4_edges(f, out, h, start=False, end=True)
    else:
        out[..., 2:n - 2] = (8.0 * (f[..., 3:n - 1] - f[..., 1:n - 3]) - (f[..., 4:n] - f[..., 0:n - 4])) / (12.0 * h)
        _fd4_edges(f, out, h, start=True, end=True)
    return out


def spectral_wavenumbers(n: int, length: float) -> np.ndarray:
    """rfft wavenumbers with the Nyquist mode zeroed (odd derivatives)."""
    k = 2.0 * np.pi * np.arange(n // 2 + 1) / length
    if n % 2 == 0:
        k[-1] = 0.0
    return k


def line_derivative(f: np.ndarray, length: float, spectral: bool, order: int = 1) -> np.ndarray:
    """Derivative of periodic samples along the last axis.

    Spectral differentiation zeroes the Nyquist mode for odd orders; otherwise
    fourth-order central differences are used.
    """
    f = np.asarray(f, dtype=float)
    n = f.shape[-1]
    if spectral:
        k = 2.0 * np.pi * np.arange(n // 2 + 1) / length
        mult = (1j * k) ** order
        if n % 2 == 0 and order % 2:
            mult[-1] = 0.0
        return sfft.irfft(sfft.rfft(f, axis=-1) * mult, n=n, axis=-1)
    h = length / n
    if order == 1:
        return _fd4_periodic(f, h, -1)
    if order == 2:
        a = np.roll(f, -1, -1) + np.roll(f, 1, -1) - 2 * f
        b = np.roll(f, -2, -1) + np.roll(f, 2, -1) - 2 * f
        return (16.0 * a - b) / (12.0 * h * h)
    raise ValueError("only first and second line derivatives are provided")


class Grid:
    """Tensor reference grid.  Build with :meth:`disk`, :meth:`strip` or :meth:`box`."""

    def __init__(self, kind: str, n1: int, n2: int, length1: float, length2: float,
                 periodic1: bool, chart_id: int = 0):
        if kind not in GRID_KINDS:
            raise ValueError(f"unknown grid kind {kind!r}")
        if n1 < 8 or n2 < 8:
            raise ValueError("grids need at least 8 nodes per axis")
        if kind == "disk" and n1 % 2:
            raise ValueError("disk grids need an even number of angular nodes")
        if length1 <= 0 or length2 <= 0:
            raise ValueError("grid extents must be positive")
        self.kind = kind
        self.n1, self.n2 = int(n1), int(n2)
        self.shape = (self.n1, self.n2)
        self.periodic = (bool(periodic1), False)
        self.chart_id = chart_id
        self.length1, self.length2 = float(length1), float(length2)
        self.spectral1 = kind == "strip"
        # outward normal of the last row is orient * (t2, -t1) for tangent t = d(eta)/d(xi1)
        self.orient = 1.0 if kind == "disk" else -1.0
        if kind == "disk":
            self.radius = float(length2)
            self.h1 = 1.0 / n1
            self.h2 = self.radius / (n2 - 0.5)
            self.xi1 = np.arange(n1) * self.h1
            self.xi2 = (np.arange(n2) + 0.5) * self.h2
        else:
            self.h1 = length1 / n1 if periodic1 else length1 / (n1 - 1)
            self.h2 = length2 / (n2 - 1)
            self.xi1 = np.arange(n1) * self.h1
            self.xi2 = np.arange(n2) * self.h2
        self._build_metric()

    # constructors ---------------------------------------------------------
    @classmethod
    def disk(cls, n1: int, n2: int, radius: float = 1.0) -> "Grid":
        return cls("disk", n1, n2, 1.0, radius, True)

    @classmethod
    def strip(cls, n1: int, n2: int, depth: float = 1.0, length: float = 1.0) -> "Grid":
        return cls("strip", n1, n2, length, depth, True)

    @classmethod
    def box(cls, n1: int, n2: int, length1: float = 1.0, length2: float = 1.0) -> "Grid":
        return cls("box", n1, n2, length1, length2, False)

    def describe(self) -> dict:
        return {"kind": self.kind, "n1": self.n1, "n2": self.n2, "h1": self.h1, "h2": self.h2,
                "periodic": list(self.periodic), "chart_id": self.chart_id,
                "length1": self.length1, "length2": self.length2}

    # metric ---------------------------------------------------------------
    def _build_metric(self) -> None:
        S, Rr = np.meshgrid(self.xi1, self.xi2, indexing="ij")
        if self.kind == "disk":
            th = 2.0 * np.pi * S
            c, s = np.cos(th), np.sin(th)
            self.X = np.stack([Rr * c, Rr * s])
            self.dxi = np.empty((2, 2) + self.shape)
            self.dxi[0, 0] = -s / (2 * np.pi * Rr)
            self.dxi[0, 1] = c / (2 * np.pi * Rr)
            self.dxi[1, 0] = c
            self.dxi[1, 1] = s
            self.detdx = 2 * np.pi * Rr
            edges = np.concatenate([[0.0], 0.5 * (self.xi2[1:] + self.xi2[:-1]), [self.radius]])
            ring = np.pi * self.h1 * (edges[1:] ** 2 - edges[:-1] ** 2)
            self.weights = np.broadcast_to(ring, self.shape).copy()
            self.bweights = np.full(self.n1, self.h1)
        else:
            self.X = np.stack([S, Rr])
            self.dxi = np.zeros((2, 2) + self.shape)
            self.dxi[0, 0] = 1.0
            self.dxi[1, 1] = 1.0
            self.detdx = np.ones(self.shape)
            w1 = np.full(self.n1, self.h1)
            if not self.periodic[0]:
                w1[[0, -1]] *= 0.5
            w2 = np.full(self.n2, self.h2)
            w2[[0, -1]] *= 0.5
            self.weights = np.outer(w1, w2)
            self.bweights = w1
        self.area = float(self.weights.sum())

    # derivatives along reference axes -------------------------------------
    def d1(self, f: np.ndarray) -> np.ndarray:
        """Derivative along the first reference axis (axis -2)."""
        f = np.asarray(f, dtype=float)
        if self.spectral1:
            k = spectral_wavenumbers(self.n1, self.length1)
            F = sfft.rfft(f, axis=-2)
            F *= (1j * k)[:, None]
            return sfft.irfft(F, n=self.n1, axis=-2)
        if self.periodic[0]:
            return _fd4_periodic(f, self.h1, -2)
        return np.swapaxes(_fd4_line(np.swapaxes(f, -1, -2), self.h1), -1, -2)

    def d2(self, f: np.ndarray) -> np.ndarray:
        """Derivative along the second reference axis (axis -1)."""
        f = np.asarray(f, dtype=float)
        if self.kind == "disk":
            m = np.roll(f[..., :2], -self.n1 // 2, axis=-2)
            return _fd4_line(f, self.h2, lead=m[..., ::-1])
        return _fd4_line(f, self.h2)

    def dline(self, f: np.ndarray, order: int = 1) -> np.ndarray:
        """Derivative of a periodic line sample (last axis) in the first reference coordinate."""
        return line_derivative(f, self.length1, self.spectral1, order)

    # Cartesian calculus ---------------------------------------------------
    def grad(self, f: np.ndarray) -> np.ndarray:
        """Cartesian gradient; output inserts a component axis of length 2 before the grid axes."""
        f = np.asarray(f, dtype=float)
        a, b = self.d1(f), self.d2(f)
        out = np.empty(f.shape[:-2] + (2,) + f.shape[-2:])
        if self.kind == "disk":
            c = self.dxi
            np.multiply(c[0, 0], a, out=out[..., 0, :, :])
            out[..., 0, :, :] += c[1, 0] * b
            np.multiply(c[0, 1], a, out=out[..., 1, :, :])
            out[..., 1, :, :] += c[1, 1] * b
        else:
            out[..., 0, :, :] = a
            out[..., 1, :, :] = b
        return out

    def jacobian(self, eta: np.ndarray) -> np.ndarray:
        """``F[i, j] = d eta^i / d x_j`` of a periodic vector field."""
        return self.grad(eta)

    def map_jacobian(self, eta: np.ndarray) -> np.ndarray:
        """Deformation gradient of a map: ``I + grad(eta - X)``.

        The identity is added exactly, so ``eta = X`` gives ``F = I`` to the
        last bit, and the strip coordinate ``x1`` (not periodic) never reaches
        the spectral derivative.
        """
        eye = np.eye(2).reshape((2, 2) + (1,) * len(self.shape))
        return eye + self.grad(np.asarray(eta, float) - self.X)

    def boundary_reference(self, order: int = 0) -> np.ndarray:
        """Reference boundary curve (last row) or its exact derivatives in ``xi1``."""
        s = self.xi1
        if self.kind == "disk":
            w = 2 * np.pi / self.length1
            th = w * s
            R = self.radius
            base = [np.stack([np.cos(th), np.sin(th)]), np.stack([-np.sin(th), np.cos(th)])]
            return R * w ** order * (base[order % 2] * (-1) ** (order // 2))
        top = np.full_like(s, self.xi2[-1])
        if order == 0:
            return np.stack([s, top])
        if order == 1:
            return np.stack([np.ones_like(s), np.zeros_like(s)])
        return np.zeros((2, s.size))

    def div(self, F: np.ndarray) -> np.ndarray:
        G = self.grad(F)
        return G[0, 0] + G[1, 1]

    def curl2d(self, F: np.ndarray) -> np.ndarray:
        G = self.grad(F)
        return G[1, 0] - G[0, 1]

    # quadrature -----------------------------------------------------------
    def integrate(self, f: np.ndarray) -> float:
        return float(np.sum(self.weights * f))

    def l2(self, f: np.ndarray) -> float:
        """L2 norm; vector and matrix fields sum over components."""
        f = np.asarray(f, dtype=float)
        return float(np.sqrt(np.sum(self.weights * f * f)))

    def boundary_l2(self, f: np.ndarray) -> float:
        """L2 norm over the reference boundary, in the reference parameter."""
        return float(np.sqrt(np.sum(self.bweights * np.asarray(f) ** 2)))

    def is_boundary(self) -> np.ndarray:
        m = np.zeros(self.shape, dtype=bool)
        m[:, -1] = True
        return m

    def identity(self) -> np.ndarray:
        return self.X.copy()


# ---------------------------------------------------------------------------
# fields and serialization


@dataclasses.dataclass(frozen=True)
class Field:
    """A finite-valued sample array tied to a grid."""

    grid: Grid
    data: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        data = np.array(self.data, dtype=float)
        if data.shape[-2:] != self.grid.shape:
            raise ValueError(f"field shape {data.shape} does not match grid {self.grid.shape}")
        ncomp = int(np.prod(data.shape[:-2], dtype=int))
        if ncomp not in (1, 2, 4):
            raise ValueError("fields carry 1, 2 or 4 components")
        if not np.all(np.isfinite(data)):
            raise ValueError("field contains NaN or Inf")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def ncomp(self) -> int:
        return int(np.prod(self.data.shape[:-2], dtype=int))

    def to_text(self) -> str:
        g = self.grid
        head = (f"# kind={g.kind} n1={g.n1} n2={g.n2} h1={g.h1!r} h2={g.h2!r} "
                f"length1={g.length1!r} length2={g.length2!r} ncomp={self.ncomp} "
                f"shape={'x'.join(map(str, self.data.shape[:-2])) or '1'} t={self.t!r}")
        rows = self.data.reshape(self.ncomp, -1).T
        body = "\n".join(" ".join(repr(float(x)) for x in r) for r in rows)
        return head + "\n" + body + "\n"

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_text())

    @classmethod
    def from_text(cls, text: str) -> "Field":
        lines = text.strip().splitlines()
        meta = dict(tok.split("=", 1) for tok in lines[0].lstrip("# ").split())
        kind = meta["kind"]
        n1, n2 = int(meta["n1"]), int(meta["n2"])
        l1, l2 = float(meta["length1"]), float(meta["length2"])
        grid = {"disk": lambda: Grid.disk(n1, n2, l2),
                "strip": lambda: Grid.strip(n1, n2, l2, l1),
                "box": lambda: Grid.box(n1, n2, l1, l2)}[kind]()
        lead = tuple(int(x) for x in meta["shape"].split("x")) if meta["shape"] != "1" else ()
        vals = np.array([[float(x) for x in ln.split()] for ln in lines[1:]])
        data = vals.T.reshape(lead + (n1, n2))
        return cls(grid, data, float(meta["t"]))

    @classmethod
    def load(cls, path) -> "Field":
        with open(path) as fh:
            return cls.from_text(fh.read())


# ---------------------------------------------------------------------------
# matrix helpers


def det2(F: np.ndarray) -> np.ndarray:
    return F[0, 0] * F[1, 1] - F[0, 1] * F[1, 0]


def adj2(F: np.ndarray) -> np.ndarray:
    """Adjugate: ``adj(F) @ F = det(F) I``."""
    return np.stack([np.stack([F[1, 1], -F[0, 1]]), np.stack([-F[1, 0], F[0, 0]])])


def inv2(F: np.ndarray) -> np.ndarray:
    return adj2(F) / det2(F)


def matmul2(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    return np.einsum("ik...,kj...->ij...", A, B)


@dataclasses.dataclass
class PullbackCache:
    """Deformation quantities of ``eta`` and of the smoothed flow ``eta_k``.

    ``a = inv(grad eta)``, ``cof = adj(grad eta)``; ``a_k`` is the adjugate of
    ``grad eta_k`` so that ``a_k / J_k = inv(grad eta_k)``.
    """

    F: np.ndarray
    a: np.ndarray
    cof: np.ndarray
    J: np.ndarray
    F_k: np.ndarray
    a_k: np.ndarray
    Finv_k: np.ndarray
    J_k: np.ndarray
    g_k: np.ndarray
    sqrt_g_k: np.ndarray


def pullback_cache(grid: Grid, eta: np.ndarray, eta_k: Optional[np.ndarray] = None,
                   eps0: Optional[float] = None, check: bool = True) -> PullbackCache:
    """Build the cache; raises :class:`WindowBreach` outside the validity window."""
    eta = np.asarray(eta, dtype=float)
    eta_k = eta if eta_k is None else np.asarray(eta_k, dtype=float)
    F = grid.map_jacobian(eta)
    F_k = F if eta_k is eta else grid.map_jacobian(eta_k)
    J = det2(F)
    J_k = det2(F_k)
    if check:
        if not (np.all(np.isfinite(F)) and np.all(np.isfinite(F_k))):
            raise WindowBreach("non-finite deformation gradient")
        jmin, jmax = float(J_k.min()), float(J_k.max())
        if jmin < 0.5 or jmax > 1.5:
            raise WindowBreach(f"J_kappa left [1/2, 3/2]: min {jmin:.3g}, max {jmax:.3g}")
        if eps0 is not None:
            dev = float(np.max(np.abs(F - np.eye(2)[:, :, None, None])))
            if dev > eps0:
                raise WindowBreach(f"|grad eta - I|_inf = {dev:.3g} exceeds eps0 = {eps0:.3g}")
    if np.any(J == 0) or np.any(J_k == 0):
        raise WindowBreach("singular deformation gradient")
    cof = adj2(F)
    a = cof / J
    a_k = adj2(F_k)
    Finv_k = a_k / J_k
    tb = grid.boundary_reference(1) + grid.dline(eta_k[:, :, -1] - grid.X[:, :, -1])
    g_k = np.sum(tb * tb, axis=0)
    return PullbackCache(F, a, cof, J, F_k, a_k, Finv_k, J_k, g_k, np.sqrt(g_k))


def piola_residual(grid: Grid, cof: np.ndarray) -> np.ndarray:
    """``div`` of the columns ``cof[:, i]``; vanishes for exact cofactor fields."""
    return np.stack([grid.div(cof[:, i]) for i in range(2)])


# ---------------------------------------------------------------------------
# Sobolev norms


def _strip_spectrum(grid: Grid, f: np.ndarray):
    """Energy per (Fourier x cosine) mode, normalized so the sum is the trapezoid L2 norm squared."""
    n1, n2 = grid.shape
    F = sfft.fft(f, axis=-2)
    Y = sfft.dct(F.real, type=1, axis=-1) + 1j * sfft.dct(F.imag, type=1, axis=-1)
    G = np.full(n2, (n2 - 1) / 2.0)
    G[[0, -1]] = n2 - 1
    e = np.abs(Y) ** 2 / (4.0 * G)
    e = e * grid.h1 * grid.h2 / n1
    k1 = 2 * np.pi * sfft.fftfreq(n1, d=1.0 / n1) / grid.length1
    k2 = np.pi * np.arange(n2) / grid.length2
    k2sq = k1[:, None] ** 2 + k2[None, :] ** 2
    return e.reshape((-1,) + grid.shape).sum(axis=0), k2sq


def _integer_norm_sq(grid: Grid, f: np.ndarray, k: int) -> float:
    total = 0.0
    d = np.asarray(f, dtype=float)
    for _ in range(k + 1):
        total += float(np.sum(grid.weights * d * d))
        d = grid.grad(d)
    return total


def sobolev_norm(grid: Grid, f: np.ndarray, s: float) -> float:
    """Discrete ``H^s`` norm of a scalar, vector or matrix field, ``0 <= s <= 5``.

    Strip grids use the Fourier (x1) times cosine (x2) transform with weight
    ``(1 + |k|^2)^s``.  Other grids sum quadratures of all Cartesian derivative
    tensors up to integer order and interpolate log-convexly in between.
    """
    if not 0.0 <= s <= 5.0:
        raise ValueError("s must lie in [0, 5]")
    f = np.asarray(f, dtype=float)
    if not np.any(f):
        return 0.0
    if grid.kind == "strip":
        e, k2 = _strip_spectrum(grid, f)
        return float(np.sqrt(np.sum(e * (1.0 + k2) ** s)))
    lo, hi = int(np.floor(s)), int(np.ceil(s))
    nlo = np.sqrt(_integer_norm_sq(grid, f, lo))
    if hi == lo:
        return float(nlo)
    nhi = np.sqrt(_integer_norm_sq(grid, f, hi))
    th = s - lo
    return float(nlo ** (1 - th) * nhi ** th)


# ---------------------------------------------------------------------------
# interpolation


class OutsideHull(ValueError):
    """Interpolation targets outside the sampled region."""


def compose(grid: Grid, F: np.ndarray, targets: np.ndarray, margin: float = 1e-12) -> np.ndarray:
    """Sample ``F`` at physical points ``targets`` (shape ``(2, ...)``) by bicubic splines.

    Periodic axes are padded with wrapped copies; the disk grid is continued
    through the origin.  Points outside the grid hull raise :class:`OutsideHull`.
    """
    F = np.asarray(F, dtype=float)
    targets = np.asarray(targets, dtype=float)
    lead = F.shape[:-2]
    Ff = F.reshape((-1,) + grid.shape)
    tshape = targets.shape[1:]
    p1, p2 = targets[0].ravel(), targets[1].ravel()
    pad = 4
    n1 = grid.n1
    if grid.kind == "disk":
        r = np.hypot(p1, p2)
        s = np.mod(np.arctan2(p2, p1) / (2 * np.pi), 1.0)
        bad = r > grid.radius + margin
        c1, c2 = s, np.minimum(r, grid.radius)
    else:
        c1, c2 = p1.copy(), p2.copy()
        bad = (c2 < grid.xi2[0] - margin) | (c2 > grid.xi2[-1] + margin)
        if grid.periodic[0]:
            c1 = np.mod(c1, grid.length1)
        else:
            bad |= (c1 < grid.xi1[0] - margin) | (c1 > grid.xi1[-1] + margin)
            c1 = np.clip(c1, grid.xi1[0], grid.xi1[-1])
        c2 = np.clip(c2, grid.xi2[0], grid.xi2[-1])
    if np.any(bad):
        idx = np.flatnonzero(bad)
        pts = [(float(p1[i]), float(p2[i])) for i in idx[:10]]
        raise OutsideHull(f"{idx.size} target(s) outside the grid hull, e.g. {pts}")
    x1 = grid.xi1
    if grid.periodic[0]:
        x1 = np.concatenate([x1[-pad:] - grid.length1, x1, x1[:pad] + grid.length1])
    x2 = grid.xi2
    if grid.kind == "disk":
        x2 = np.concatenate([-x2[pad - 1::-1], x2])
    out = np.empty((Ff.shape[0], p1.size))
    for c in range(Ff.shape[0]):
        z = Ff[c]
        if grid.kind == "disk":
            mirror = np.roll(z[:, :pad], -n1 // 2, axis=0)[:, ::-1]
            z = np.concatenate([mirror, z], axis=1)
        if grid.periodic[0]:
            z = np.concatenate([z[-pad:], z, z[:pad]], axis=0)
        spl = RectBivariateSpline(x1, x2, z, kx=3, ky=3, s=0)
        out[c] = spl.ev(c1, c2)
    return out.reshape(lead + tshape)


def random_smooth_field(grid: Grid, rng: np.random.Generator, modes: int = 4,
                        ncomp: Optional[int] = None, decay: float = 2.0) -> np.ndarray:
    """Random band-limited field in Cartesian coordinates of the physical domain."""
    shape = () if ncomp is None else (ncomp,)
    X = grid.X
    if grid.kind == "strip":
        x, y = X[0] / grid.length1, X[1] / grid.length2
    elif grid.kind == "disk":
        x, y = (X[0] + grid.radius) / (2 * grid.radius), (X[1] + grid.radius) / (2 * grid.radius)
    else:
        x, y = X[0] / grid.length1, X[1] / grid.length2
    out = np.zeros(shape + grid.shape)
    for idx in np.ndindex(*shape) if shape else [()]:
        acc = np.zeros(grid.shape)
        for m in range(modes):
            for n in range(modes):
                amp = rng.standard_normal(2) / (1.0 + m * m + n * n) ** (decay / 2)
                if grid.kind == "strip":
                    acc += amp[0] * np.cos(2 * np.pi * m * x + 2 * np.pi * rng.random()) * np.cos(np.pi * n * y)
                else:
                    acc += amp[0] * np.cos(np.pi * m * x + 2 * np.pi * rng.random()) * np.cos(np.pi * n * y + 2 * np.pi * rng.random())
        out[idx] = acc
    return out


def norm_table(grid: Grid, f: np.ndarray, orders: Sequence[float]) -> dict:
    return {float(s): sobolev_norm(grid, f, s) for s in orders}
