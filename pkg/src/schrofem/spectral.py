"""Exact spectral calculus for the Dirichlet Laplacian on the unit interval.

Everything here is closed form: the eigenvalues are (j*pi)**2 with
L2-orthonormal eigenfunctions sqrt(2)*sin(j*pi*x), so fractional norms,
Hilbert-Schmidt sums and the unitary trigonometric group can all be evaluated
without any numerical eigensolve.  This module serves as the analytic oracle
against which the finite element discretization is validated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

__all__ = [
    "SpectralBasis",
    "SpectralPair",
    "eigenvalue",
    "eigenfunction_eval",
    "fractional_norm",
    "apply_trig_group",
    "combined_norm",
    "hs_norm",
    "holder_deviation",
]


@dataclass(frozen=True)
class SpectralBasis:
    """Truncated Dirichlet eigenbasis on (0, 1).

    ``lambdas[j] = ((j+1)*pi)**2`` for 0-based index j; strictly increasing.
    """

    num_modes: int
    lambdas: np.ndarray
    domain_length: float = 1.0

    @classmethod
    def unit_interval(cls, num_modes: int) -> "SpectralBasis":
        if num_modes < 1:
            raise ValueError(f"need at least one mode, got {num_modes}")
        j = np.arange(1, num_modes + 1, dtype=np.float64)
        lam = (j * np.pi) ** 2
        return cls(num_modes=num_modes, lambdas=lam)


class SpectralPair(NamedTuple):
    """Real/imaginary coefficient vectors sharing one basis."""

    re: np.ndarray
    im: np.ndarray


def eigenvalue(j: int) -> float:
    """Return the j-th Dirichlet eigenvalue (j*pi)**2, 1-based."""
    if j < 1:
        raise ValueError(f"mode index must be >= 1, got {j}")
    return (j * math.pi) ** 2


def eigenfunction_eval(j: int, x):
    """Evaluate the L2-normalized eigenfunction sqrt(2)*sin(j*pi*x) on [0, 1]."""
    if j < 1:
        raise ValueError(f"mode index must be >= 1, got {j}")
    xa = np.asarray(x, dtype=np.float64)
    if np.any(xa < 0.0) or np.any(xa > 1.0):
        raise ValueError("evaluation point outside [0, 1]")
    out = math.sqrt(2.0) * np.sin(j * np.pi * xa)
    return float(out) if np.isscalar(x) or xa.ndim == 0 else out


def fractional_norm(basis: SpectralBasis, coeffs: np.ndarray, gamma: float) -> float:
    """Truncated fractional Sobolev norm (sum_j lambda_j**gamma * v_j**2)**(1/2)."""
    c = np.asarray(coeffs, dtype=np.float64)
    if c.shape != (basis.num_modes,):
        raise ValueError(f"expected {basis.num_modes} coefficients, got shape {c.shape}")
    return math.sqrt(float(np.sum(basis.lambdas**gamma * c**2)))


def apply_trig_group(basis: SpectralBasis, state: SpectralPair, t: float) -> SpectralPair:
    """Apply the unitary group of the skew-adjoint pair operator for time t.

    Acts per mode as the rotation
    (re, im) -> (cos(t*lam)*re - sin(t*lam)*im, sin(t*lam)*re + cos(t*lam)*im).
    """
    ang = t * basis.lambdas
    c, s = np.cos(ang), np.sin(ang)
    re = c * state.re - s * state.im
    im = s * state.re + c * state.im
    return SpectralPair(re=re, im=im)


def combined_norm(state: SpectralPair) -> float:
    """sqrt(||re||^2 + ||im||^2) in coefficient (= L2) norm."""
    return math.sqrt(float(np.dot(state.re, state.re) + np.dot(state.im, state.im)))


def hs_norm(theta: float, s: float, num_modes: int) -> float:
    """Truncated Hilbert-Schmidt norm of A**(theta/2) Q**(1/2) with Q = A**(-s).

    Equals (sum_{j<=J} lambda_j**(theta-s))**(1/2); finite as J -> infinity
    iff theta < s - 1/2 on the unit interval.
    """
    if num_modes < 1:
        raise ValueError(f"need at least one mode, got {num_modes}")
    j = np.arange(num_modes, 0, -1, dtype=np.float64)  # ascending terms for s > theta
    terms = ((j * np.pi) ** 2) ** (theta - s)
    return math.sqrt(float(np.sum(terms)))


def holder_deviation(t: float, s: float, theta: float, kind: str, num_modes: int) -> float:
    """Truncated operator norm of (trig(t*A) - trig(s*A)) A**(-theta/2).

    Returns max over modes j <= J of |trig(t*lam_j) - trig(s*lam_j)| * lam_j**(-theta/2),
    with trig = sin or cos selected by ``kind``.  Scales like |t-s|**(theta/2).
    """
    if s > t:
        raise ValueError(f"need s <= t, got s={s}, t={t}")
    if kind not in ("sine", "cosine"):
        raise ValueError(f"kind must be 'sine' or 'cosine', got {kind!r}")
    lam = SpectralBasis.unit_interval(num_modes).lambdas
    trig = np.sin if kind == "sine" else np.cos
    dev = np.abs(trig(t * lam) - trig(s * lam)) * lam ** (-theta / 2.0)
    return float(np.max(dev))
