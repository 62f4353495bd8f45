"""Horizontal convolution by layers and the smoothed velocity.

Convolution acts only along the first reference axis, independently on every
layer of the second axis, so restricting to a layer (in particular the
boundary row) commutes with it exactly.
"""

from __future__ import annotations

import functools
from typing import Optional, Tuple

import numpy as np
from scipy import fft as sfft
from scipy import integrate

from .fields import Grid
from .geometry import ChartAtlas


class SupportError(ValueError):
    """A field handed to a chart convolution reaches too close to the chart edge."""


def _bump_density(x):
    x = np.asarray(x, float)
    out = np.zeros_like(x)
    m = np.abs(x) < 1
    out[m] = np.exp(1.0 / (x[m] ** 2 - 1.0))
    return out


_BUMP_MASS = 2.0 * integrate.quad(lambda x: float(_bump_density(x)), 0.0, 1.0, epsabs=1e-16, epsrel=1e-13, limit=200)[0]


class Mollifier:
    """Even, nonnegative, unit-mass kernel on ``(-1, 1)``.

    ``profile`` is ``"bump"`` (``exp(1/(x^2-1))``) or ``"quartic"``
    (``(1 - x^2)^2``).  Discrete weights integrate the dilated kernel over each
    node cell, are symmetrized, then rescaled to unit sum.
    """

    def __init__(self, profile: str = "bump"):
        if profile not in ("bump", "quartic"):
            raise ValueError(f"unknown mollifier profile {profile!r}")
        self.profile = profile

    def density(self, x) -> np.ndarray:
        x = np.asarray(x, float)
        if self.profile == "bump":
            return _bump_density(x) / _BUMP_MASS
        return np.where(np.abs(x) < 1, 15.0 / 16.0 * (1 - x * x) ** 2, 0.0)

    def cdf(self, x: float) -> float:
        x = float(np.clip(x, -1.0, 1.0))
        if self.profile == "quartic":
            return 0.5 + 15.0 / 16.0 * (x - 2 * x ** 3 / 3 + x ** 5 / 5)
        v = integrate.quad(lambda y: float(_bump_density(y)), 0.0, abs(x), epsabs=1e-16, epsrel=1e-13, limit=200)[0]
        return 0.5 + np.sign(x) * v / _BUMP_MASS

    def weights(self, h: float, delta: float) -> Tuple[np.ndarray, np.ndarray]:
        return _weights(self.profile, float(h), float(delta))


@functools.lru_cache(maxsize=256)
def _weights(profile: str, h: float, delta: float):
    if delta <= 0:
        raise ValueError("dilation must be positive")
    mol = Mollifier(profile)
    M = int(np.ceil(delta / h - 0.5))
    offsets = np.arange(-M, M + 1)
    edges = (np.arange(-M, M + 2) - 0.5) * h / delta
    c = np.array([mol.cdf(e) for e in edges])
    w = np.maximum(np.diff(c), 0.0)  # end cells can round to -1e-17
    w = 0.5 * (w + w[::-1])
    w = w / w.sum()
    offsets.setflags(write=False)
    w.setflags(write=False)
    return offsets, w


def kernel_symbol(n: int, offsets: np.ndarray, w: np.ndarray) -> np.ndarray:
    """rfft symbol of the periodic convolution with weights ``w`` at ``offsets``."""
    if offsets.size > n:
        raise SupportError("kernel support exceeds the period")
    vec = np.zeros(n)
    np.add.at(vec, offsets % n, w)
    return sfft.rfft(vec).real


def convolve_periodic(f: np.ndarray, symbol: np.ndarray, axis: int = -2) -> np.ndarray:
    n = f.shape[axis]
    F = sfft.rfft(f, axis=axis)
    shape = [1] * F.ndim
    shape[axis] = symbol.size
    return sfft.irfft(F * symbol.reshape(shape), n=n, axis=axis)


def layer_operator(n: int, h: float, delta: float, mollifier: Optional[Mollifier] = None) -> np.ndarray:
    """Dense matrix of the periodic convolution on one layer of ``n`` nodes."""
    mol = mollifier or Mollifier()
    off, w = mol.weights(h, delta)
    P = np.zeros((n, n))
    idx = np.arange(n)
    for o, wk in zip(off, w):
        P[idx, (idx + o) % n] += wk
    return P


def _chart_window(grid: Grid, atlas: Optional[ChartAtlas], chart: Optional[int]):
    if grid.kind == "disk":
        if atlas is None or chart is None:
            raise ValueError("disk convolution needs an atlas and a chart index")
        return atlas.charts[chart], atlas.scale
    return None, grid.length1


def horizontal_convolve(grid: Grid, w: np.ndarray, delta: float,
                        mollifier: Optional[Mollifier] = None,
                        atlas: Optional[ChartAtlas] = None, chart: Optional[int] = None) -> np.ndarray:
    """Convolve every layer of ``w`` along the first axis with the kernel dilated by ``delta``.

    ``delta`` is in chart units.  On the strip the layers wrap periodically.
    On the disk the support of ``w`` must stay ``delta`` away from the lateral
    edges of the chart.
    """
    mol = mollifier or Mollifier()
    w = np.asarray(w, dtype=float)
    ch, scale = _chart_window(grid, atlas, chart)
    if ch is not None:
        on = np.any(np.abs(w.reshape((-1,) + grid.shape)) > 0, axis=(0, 2))
        if np.any(on):
            x = ch.local_x1(grid.xi1[on])
            if x.min() < delta or x.max() > 1.0 - delta:
                raise SupportError(f"support within {delta} of the lateral edge of chart {chart}")
    off, wt = mol.weights(grid.h1, delta * scale)
    return convolve_periodic(w, kernel_symbol(grid.n1, off, wt))


class Smoother:
    """Smoothed velocity ``v_k = sum_l sqrt(a_l) P P (sqrt(a_l) v) + a_int v``.

    ``P`` is the horizontal convolution in the coordinates of chart ``l``.
    """

    def __init__(self, atlas: ChartAtlas, kappa: float, mollifier: Optional[Mollifier] = None):
        if not (0.0 < kappa < atlas.kappa0 / 2):
            raise ValueError(f"kappa must lie in (0, {atlas.kappa0 / 2}) for this atlas")
        self.atlas = atlas
        self.kappa = float(kappa)
        self.mollifier = mollifier or Mollifier()
        g = atlas.grid
        off, wt = self.mollifier.weights(g.h1, kappa * atlas.scale)
        self.offsets, self.kweights = off, wt
        self.symbol = kernel_symbol(g.n1, off, wt)
        self.symbol2 = self.symbol ** 2
        self.band = atlas.band
        self._sa = atlas.sqrt_alpha[:, :, self.band]

    def charts(self, v: np.ndarray) -> np.ndarray:
        """Chart-local double convolutions ``P P (sqrt(a_l) v)``, zero off the chart band."""
        v = np.asarray(v, float)
        lead = v.shape[:-2]
        out = np.zeros((self.atlas.K,) + lead + self.atlas.grid.shape)
        vb = v[..., self.band]
        for l in range(self.atlas.K):
            out[l][..., self.band] = convolve_periodic(self._sa[l] * vb, self.symbol2)
        return out

    def apply(self, v: np.ndarray, chart_values: Optional[np.ndarray] = None) -> np.ndarray:
        v = np.asarray(v, float)
        cv = self.charts(v) if chart_values is None else chart_values
        out = self.atlas.alpha_int * v
        for l in range(self.atlas.K):
            out = out + self.atlas.sqrt_alpha[l] * cv[l]
        return out

    def both(self, v: np.ndarray):
        cv = self.charts(v)
        return self.apply(v, cv), cv

    def boundary_matrix(self) -> np.ndarray:
        """Matrix of the smoothing operator restricted to the boundary row."""
        g = self.atlas.grid
        n = g.n1
        P = layer_operator(n, g.h1, self.kappa * self.atlas.scale, self.mollifier)
        P2 = P @ P
        S = np.diag(self.atlas.alpha_int[:, -1])
        for l in range(self.atlas.K):
            a = self.atlas.sqrt_alpha[l][:, -1]
            S += a[:, None] * P2 * a[None, :]
        return S


def smooth_velocity(v: np.ndarray, kappa: float, atlas: ChartAtlas,
                    mollifier: Optional[Mollifier] = None) -> np.ndarray:
    return Smoother(atlas, kappa, mollifier).apply(v)


def layer_h_half(f: np.ndarray, length: float) -> float:
    """Discrete ``H^{1/2}`` norm of periodic samples along the last axis."""
    n = f.shape[-1]
    F = sfft.fft(f, axis=-1)
    k = 2 * np.pi * sfft.fftfreq(n, d=1.0 / n) / length
    return float(np.sqrt(np.sum(np.sqrt(1 + k * k) * np.abs(F) ** 2) * length / n ** 2))


def commutator(grid: Grid, f: np.ndarray, g: np.ndarray, kappa: float,
               mollifier: Optional[Mollifier] = None,
               atlas: Optional[ChartAtlas] = None, chart: Optional[int] = None):
    """``P[f g] - f P[g]`` with its L2 and boundary-row ``H^{1/2}`` norms."""
    c = (horizontal_convolve(grid, f * g, kappa, mollifier, atlas, chart)
         - f * horizontal_convolve(grid, g, kappa, mollifier, atlas, chart))
    norms = {"l2": grid.l2(c), "h_half": layer_h_half(c[..., -1], grid.length1)}
    return c, norms


def commutator_operator_norm(n: int, length: float, f_line: np.ndarray, delta: float,
                             mollifier: Optional[Mollifier] = None) -> float:
    """Largest singular value of ``g -> P[f g] - f P[g]`` on one periodic layer."""
    P = layer_operator(n, length / n, delta, mollifier)
    C = P * f_line[None, :] - f_line[:, None] * P
    return float(np.linalg.norm(C, 2))


def fit_slope(x, y) -> float:
    """Least-squares slope of ``log y`` against ``log x``."""
    return float(np.polyfit(np.log(np.asarray(x, float)), np.log(np.asarray(y, float)), 1)[0])
