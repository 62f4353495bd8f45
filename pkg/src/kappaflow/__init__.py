"""Smoothed Lagrangian solver for free-boundary incompressible Euler flow with surface tension.

Modules: :mod:`geometry` (charts, boundary curves), :mod:`fields` (grids,
calculus, norms), :mod:`smoothing` (horizontal convolution by layers),
:mod:`pressure` (elliptic solves), :mod:`dynamics` (time stepping),
:mod:`diagnostics` (energies, identities, Hodge reconstruction) and
:mod:`cli`.
"""

__version__ = "0.1.0"
