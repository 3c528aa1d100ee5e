"""Stochastic Schrodinger equation on (0, 1): P1 finite elements in space,
trigonometric integrators in time, and a coupled-path Monte Carlo harness for
strong convergence rates."""

__version__ = "0.1.0"

from . import analysis, fem1d, noise, schemes, spectral  # noqa: F401
