"""Chart atlas, boundary metric, normals, curvature and boundary Laplacians.

Boundary curves are sampled as arrays of shape ``(2, n)`` over a periodic
parameter of period ``length``.  The parameter direction together with
``orient`` fixes the outward normal: ``n = orient * (t2, -t1) / |t|``.  On the
disk the curve runs counter-clockwise (``orient = +1``); on the strip the top
runs towards increasing ``x1`` with the fluid below (``orient = -1``).
"""

from __future__ import annotations

import dataclasses
from typing import Callable, List, Optional

import numpy as np

from .fields import Grid, line_derivative


class DegenerateCurve(ValueError):
    """The boundary parametrization has (numerically) vanishing speed."""


@dataclasses.dataclass(frozen=True)
class BoundaryLine:
    """Differentiation convention for a periodic boundary parameter.

    ``reference`` (``"circle"`` of ``radius`` or ``"flat"``) names the
    reference boundary curve.  :meth:`dpos` differentiates curves as the
    reference plus a periodic displacement, which is required on the strip
    where the curve itself is not periodic in the parameter.
    """

    length: float = 1.0
    spectral: bool = False
    orient: float = 1.0
    reference: Optional[str] = None
    radius: float = 1.0

    def d(self, f: np.ndarray, order: int = 1) -> np.ndarray:
        return line_derivative(f, self.length, self.spectral, order)

    def ref(self, n: int, order: int = 0) -> np.ndarray:
        s = np.arange(n) * self.length / n
        if self.reference == "circle":
            w = 2 * np.pi / self.length
            th = w * s
            base = [np.stack([np.cos(th), np.sin(th)]), np.stack([-np.sin(th), np.cos(th)])]
            return self.radius * w ** order * base[order % 2] * (-1) ** (order // 2)
        if self.reference == "flat":
            if order == 0:
                return np.stack([s, np.zeros(n)])
            return np.stack([np.full(n, 1.0 if order == 1 else 0.0), np.zeros(n)])
        raise ValueError("this boundary line has no reference curve")

    def dpos(self, eta_b: np.ndarray, order: int = 1) -> np.ndarray:
        """Derivative of a boundary curve (reference part exact)."""
        if self.reference is None:
            return self.d(eta_b, order)
        n = eta_b.shape[-1]
        return self.ref(n, order) + self.d(eta_b - self.ref(n), order)

    def matrix(self, n: int) -> np.ndarray:
        """Dense first-derivative matrix (skew-symmetric)."""
        return self.d(np.eye(n)).T

    @classmethod
    def of(cls, grid: Grid) -> "BoundaryLine":
        if grid.kind == "disk":
            return cls(grid.length1, False, grid.orient, "circle", grid.radius)
        return cls(grid.length1, grid.spectral1, grid.orient, "flat")


# ---------------------------------------------------------------------------
# atlas


@dataclasses.dataclass(frozen=True)
class DomainSpec:
    kind: str = "disk"
    radius: float = 1.0
    depth: float = 1.0
    length: float = 1.0
    charts: int = 8
    kappa0: float = 0.2
    chart_depth: float = 0.5

    def grid(self, n1: int, n2: int) -> Grid:
        if self.kind == "disk":
            return Grid.disk(n1, n2, self.radius)
        if self.kind == "strip":
            return Grid.strip(n1, n2, self.depth, self.length)
        raise ValueError(f"unknown domain kind {self.kind!r}")


@dataclasses.dataclass(frozen=True)
class Chart:
    """Chart on the reference square ``[0, 1]^2``; ``x2 = 0`` maps into the boundary.

    Disk charts are annular sectors aligned with the polar grid: local ``x1``
    runs along the angle (window ``width`` in units of a full turn, centred at
    ``center``) and ``x2`` runs inwards over ``depth``.  ``profile`` is the
    graph height over the straight chart bottom and is ``None`` for sectors.
    """

    kind: str
    index: int
    center: float
    width: float
    depth: float
    radius: float = 1.0
    profile: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def map(self, x1, x2) -> np.ndarray:
        x1, x2 = np.asarray(x1, float), np.asarray(x2, float)
        if self.kind == "interior":
            return np.stack([x1, x2])
        if self.kind == "strip":
            return np.stack([self.width * x1, self.depth * (1.0 - x2)])
        phi = 2 * np.pi * (self.center + (x1 - 0.5) * self.width)
        rr = self.radius - self.depth * x2
        return np.stack([rr * np.cos(phi), rr * np.sin(phi)])

    def jacobian(self, x1, x2) -> np.ndarray:
        x1, x2 = np.asarray(x1, float), np.asarray(x2, float)
        z, o = np.zeros_like(x1 + x2), np.ones_like(x1 + x2)
        if self.kind == "interior":
            return np.stack([np.stack([o, z]), np.stack([z, o])])
        if self.kind == "strip":
            return np.stack([np.stack([self.width * o, z]), np.stack([z, -self.depth * o])])
        phi = 2 * np.pi * (self.center + (x1 - 0.5) * self.width)
        rr = self.radius - self.depth * x2
        c, s = np.cos(phi), np.sin(phi)
        dphi = 2 * np.pi * self.width
        return np.stack([np.stack([-rr * s * dphi, -self.depth * c]),
                         np.stack([rr * c * dphi, -self.depth * s])])

    def local_x1(self, s: np.ndarray) -> np.ndarray:
        """Chart coordinate of the angle parameter ``s`` (wrapped to the nearest copy)."""
        ds = (np.asarray(s) - self.center + 0.5) % 1.0 - 0.5
        return 0.5 + ds / self.width


@dataclasses.dataclass
class ChartAtlas:
    """Boundary charts plus the identity interior chart, sampled on a grid.

    ``alpha[l]`` are the boundary partition functions, ``alpha_int`` the
    interior one; ``xi`` is one near the boundary and ``beta`` one away
    from it.  ``scale`` converts a chart-unit dilation to the first grid
    coordinate.
    """

    grid: Grid
    charts: List[Chart]
    alpha: np.ndarray
    sqrt_alpha: np.ndarray
    alpha_int: np.ndarray
    xi: np.ndarray
    beta: np.ndarray
    kappa0: float
    scale: float
    band: np.ndarray

    @property
    def K(self) -> int:
        return len(self.charts)

    def partition_sum(self) -> np.ndarray:
        return self.alpha.sum(axis=0) + self.alpha_int

    def support_margin(self) -> float:
        """Smallest lateral distance (chart units) between a support and its chart edge."""
        if self.grid.kind != "disk":
            return np.inf
        best = np.inf
        for l, ch in enumerate(self.charts):
            on = np.any(self.alpha[l] > 0, axis=1)
            x = ch.local_x1(self.grid.xi1[on])
            best = min(best, float(x.min()), float(1.0 - x.max()))
        return best


def _bump(t: np.ndarray) -> np.ndarray:
    out = np.zeros_like(t, dtype=float)
    m = np.abs(t) < 1.0
    out[m] = np.exp(-1.0 / (1.0 - t[m] ** 2))
    return out


def smoothstep(x: np.ndarray, a: float, b: float) -> np.ndarray:
    """C-infinity step: 0 for ``x <= a``, 1 for ``x >= b``."""
    t = np.clip((np.asarray(x, float) - a) / (b - a), 0.0, 1.0)
    f = lambda u: np.where(u > 0, np.exp(-1.0 / np.where(u > 0, u, 1.0)), 0.0)
    return f(t) / (f(t) + f(1.0 - t))


def build_atlas(spec: DomainSpec, grid: Grid) -> ChartAtlas:
    """Atlas sampled on ``grid``; rejects fewer than three disk charts."""
    if spec.kappa0 <= 0:
        raise ValueError("kappa0 must be positive")
    if spec.kappa0 >= 0.5:
        raise ValueError("kappa0 must be below 1/2")
    if grid.kind != spec.kind:
        raise ValueError("grid kind does not match the domain")
    if spec.kind == "strip":
        d = grid.length2
        x2 = grid.X[1]
        alpha = np.ones((1,) + grid.shape)
        xi = smoothstep(x2, 0.5 * d, 0.75 * d)
        beta = 1.0 - smoothstep(x2, 0.75 * d, 0.9 * d)
        ch = Chart("strip", 0, 0.0, grid.length1, d)
        return ChartAtlas(grid, [ch], alpha, alpha.copy(), np.zeros(grid.shape), xi, beta,
                          spec.kappa0, grid.length1, np.arange(grid.n2))
    K = int(spec.charts)
    if K < 3:
        raise ValueError("a disk needs at least three boundary charts")
    half = 1.0 / K
    width = 2 * half / (1.0 - 2.0 * spec.kappa0)
    if width >= 1.0:
        raise ValueError("chart window exceeds a full turn; raise the chart count or lower kappa0")
    R = grid.radius
    depth = spec.chart_depth * R
    s = grid.xi1
    psi = np.empty((K, grid.n1))
    charts = []
    for l in range(K):
        c = l / K
        ds = (s - c + 0.5) % 1.0 - 0.5
        psi[l] = _bump(ds / half)
        charts.append(Chart("boundary", l, c, width, depth, R))
    root = psi / np.sqrt(np.sum(psi ** 2, axis=0))
    r = grid.xi2
    zeta = smoothstep(r, R - depth, R - 0.4 * depth)
    sqrt_alpha = root[:, :, None] * zeta[None, None, :]
    alpha = sqrt_alpha ** 2
    alpha_int = 1.0 - alpha.sum(axis=0)
    rr = np.broadcast_to(r, grid.shape)
    xi = smoothstep(rr, R - 0.5 * depth, R - 0.3 * depth)
    beta = 1.0 - smoothstep(rr, R - 0.3 * depth, R - 0.1 * depth)
    band = np.flatnonzero(zeta > 0)
    return ChartAtlas(grid, charts, alpha, sqrt_alpha, alpha_int, xi, beta,
                      spec.kappa0, width, band)


# ---------------------------------------------------------------------------
# boundary geometry


@dataclasses.dataclass
class BoundaryGeometry:
    g: np.ndarray
    sqrt_g: np.ndarray
    n: np.ndarray
    tau: np.ndarray
    curv: np.ndarray
    H: np.ndarray

    def projection(self) -> np.ndarray:
        return normal_projection(self.n)


def normal_projection(n: np.ndarray) -> np.ndarray:
    """``n (x) n`` at every node, shape ``(2, 2, N)``."""
    return n[:, None, :] * n[None, :, :]


def induced_metric(eta_b: np.ndarray, line: BoundaryLine):
    """Return ``(g, sqrt_g)`` of a sampled closed or periodic curve."""
    t = line.dpos(eta_b)
    g = np.sum(t * t, axis=0)
    sg = np.sqrt(g)
    if np.any(sg < 1e-10) or not np.all(np.isfinite(sg)):
        raise DegenerateCurve("boundary parametrization is degenerate (sqrt g < 1e-10)")
    return g, sg


def boundary_geometry(eta_b: np.ndarray, line: BoundaryLine) -> BoundaryGeometry:
    g, sg = induced_metric(eta_b, line)
    t = line.dpos(eta_b)
    tau = t / sg
    n = line.orient * np.stack([tau[1], -tau[0]])
    tt = line.dpos(eta_b, 2)
    nn = np.sum(n * tt, axis=0)
    curv = n * (nn / sg)
    H = -nn / g
    return BoundaryGeometry(g, sg, n, tau, curv, H)


def curvature_vector(eta_b: np.ndarray, line: BoundaryLine) -> np.ndarray:
    """``sqrt(g) g^{11} (n (x) n) d^2 eta``; its pairing with ``-n`` is ``sqrt(g) H``."""
    return boundary_geometry(eta_b, line).curv


def laplace_beltrami0(f: np.ndarray, sqrt_g0: np.ndarray, sqrt_gk: np.ndarray,
                      line: BoundaryLine) -> np.ndarray:
    """Divergence-form boundary Laplacian with reference metric ``g0`` and volume ``g_k``."""
    return line.d(line.d(f) / sqrt_g0) / sqrt_gk


def laplace_beltrami0_matrix(sqrt_g0: np.ndarray, sqrt_gk: np.ndarray,
                             line: BoundaryLine) -> np.ndarray:
    D = line.matrix(sqrt_g0.size)
    return (D @ (D / sqrt_g0[:, None])) / sqrt_gk[:, None]


def height_curvature(h: np.ndarray, line: BoundaryLine, radius: Optional[float] = None,
                     eps: Optional[float] = None) -> np.ndarray:
    """Curvature of the graph of ``h`` over a circle of ``radius`` or over a flat line.

    The principal part is kept in divergence form; on the circle the
    remaining term depends on ``h`` and its first derivative only.
    """
    h = np.asarray(h, dtype=float)
    if eps is None:
        eps = 0.5 * radius if radius is not None else 0.5 * line.length
    if np.max(np.abs(h)) >= eps:
        raise ValueError(f"height exceeds the tubular half-width {eps}")
    if radius is None:
        hp = line.d(h)
        return -line.d(hp / np.sqrt(1.0 + hp * hp))
    scale = 2 * np.pi / line.length
    rho = radius + h
    rp = line.d(h) / scale
    W = np.sqrt(rho * rho + rp * rp)
    return -line.d(rp / (rho * W)) / scale + (rho * rho - rp * rp) / (rho * rho * W)
