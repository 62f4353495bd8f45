"""Independent linearisation of the capillary standing wave, done symbolically.

Potential ``phi = A(t) cosh(k y) cos(k x)`` in a layer of depth ``d`` with a
flat bottom at ``y = 0``; surface ``y = d + B(t) cos(k x)``.  Kinematic and
dynamic surface conditions linearised at ``y = d`` with the pressure jump
``sigma`` times the curvature give a linear 2x2 system in ``(A, B)``.
"""

import math

import pytest
import sympy as sp

from kappaflow.experiments import capillary_omega

x, y, t = sp.symbols("x y t", real=True)
k, d, sigma = sp.symbols("k d sigma", positive=True)

# frozen from the symbolic relation below (sigma = d = 1, k = 2 pi m)
FROZEN = {1: 15.749555021536331, 2: 44.5466239741119, 3: 81.83737387615001}


def linear_system():
    A, B = sp.Function("A")(t), sp.Function("B")(t)
    phi = A * sp.cosh(k * y) * sp.cos(k * x)
    zeta = B * sp.cos(k * x)
    assert sp.simplify(sp.diff(phi, x, 2) + sp.diff(phi, y, 2)) == 0
    assert sp.diff(phi, y).subs(y, 0) == 0
    # curvature of the graph, linearised: -zeta_xx; pressure sigma times it
    p_surface = -sigma * sp.diff(zeta, x, 2)
    kinematic = sp.Eq(sp.diff(zeta, t), sp.diff(phi, y).subs(y, d))
    bernoulli = sp.Eq(sp.diff(phi, t).subs(y, d) + p_surface, 0)
    # both conditions are multiples of cos(k x); compare coefficients at x = 0
    eqs = [(e.lhs - e.rhs).subs(x, 0) for e in (kinematic, bernoulli)]
    sol = sp.solve(eqs, [sp.diff(A, t), sp.diff(B, t)], dict=True)[0]
    rows = [sp.simplify(sol[sp.diff(v, t)]) for v in (A, B)]
    M = sp.Matrix([[sp.diff(r, v) for v in (A, B)] for r in rows])
    return M


def omega_squared():
    M = linear_system()
    ev = list(M.eigenvals())
    # eigenvalues are +- i omega
    return sp.simplify(-ev[0] ** 2)


def test_symbolic_relation():
    w2 = omega_squared()
    assert sp.simplify(w2 - sigma * k ** 3 * sp.tanh(k * d)) == 0


@pytest.mark.parametrize("m", [1, 2, 3])
def test_frozen_values_match_symbolic_and_library(m):
    w2 = omega_squared()
    val = float(sp.sqrt(w2.subs({k: 2 * sp.pi * m, d: 1, sigma: 1})).evalf(30))
    assert val == pytest.approx(FROZEN[m], rel=1e-14)
    assert capillary_omega(2 * math.pi * m, 1.0, 1.0) == pytest.approx(FROZEN[m], rel=1e-14)


def test_deep_and_shallow_limits():
    w2 = omega_squared()
    assert sp.limit(w2 / (sigma * k ** 3), d, sp.oo) == 1
    assert sp.limit(w2 / (sigma * k ** 4 * d), d, 0) == 1
