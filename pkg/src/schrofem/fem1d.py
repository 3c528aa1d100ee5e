"""P1 finite elements on a uniform mesh of (0, 1) with Dirichlet boundary.

The discrete Laplacian is never formed as M^{-1}S; it is carried implicitly
through the generalized eigendecomposition S v = lambda_h M v with columns
M-orthonormalized (scipy's ``eigh(S, M)`` symmetrizes with the Cholesky factor
of M), which makes trigonometric functions of the operator a per-mode rotation
in modal coordinates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np
from scipy.linalg import eigh, solveh_banded

__all__ = [
    "Mesh",
    "FemSystem",
    "FemPair",
    "assemble",
    "gauss_rule",
    "l2_project",
    "project_spectral",
    "quad_points",
    "interp_at_quad",
    "project_values_at_quad",
    "apply_discrete_trig",
    "to_modal",
    "from_modal",
    "m_norm",
    "pair_m_norm",
    "discrete_fractional_norm",
    "norm_relation_check",
]

def gauss_rule(order: int):
    """Gauss-Legendre nodes/weights mapped to the reference cell [0, 1]."""
    nodes, weights = np.polynomial.legendre.leggauss(order)
    return 0.5 * (nodes + 1.0), 0.5 * weights


_GAUSS_NODES, _GAUSS_WEIGHTS = gauss_rule(5)


@dataclass(frozen=True)
class Mesh:
    """Uniform mesh of (0, 1) with ``num_cells`` cells, h = 1/num_cells."""

    num_cells: int

    def __post_init__(self):
        if self.num_cells < 2:
            raise ValueError(f"need at least 2 cells, got {self.num_cells}")

    @property
    def h(self) -> float:
        return 1.0 / self.num_cells

    @property
    def num_interior(self) -> int:
        return self.num_cells - 1

    @property
    def interior_nodes(self) -> np.ndarray:
        return np.arange(1, self.num_cells, dtype=np.float64) * self.h


class FemPair(NamedTuple):
    """Real/imaginary interior nodal vectors on a shared mesh."""

    re: np.ndarray
    im: np.ndarray


@dataclass(eq=False)
class FemSystem:
    """Assembled mass/stiffness matrices and the modal machinery on one mesh.

    ``eig_vectors`` columns are M-orthonormal, ``eig_values`` ascending;
    ``modal_T = eig_vectors.T @ mass`` maps nodal vectors to modal coordinates.
    Immutable after assembly apart from the lazily built spectral projector
    cache (idempotent, safe to share across threads).
    """

    mesh: Mesh
    mass: np.ndarray
    stiffness: np.ndarray
    eig_values: np.ndarray
    eig_vectors: np.ndarray
    modal_T: np.ndarray
    _mass_banded: np.ndarray = field(repr=False)
    _projectors: dict = field(default_factory=dict, repr=False)

    def spectral_projector(self, num_modes: int) -> np.ndarray:
        """Matrix sending sine-mode coefficients to nodal values of their L2 projection.

        Loads use the exact antiderivative of sin(j*pi*x) against each hat
        function, so no quadrature error enters.
        """
        if num_modes not in self._projectors:
            h = self.mesh.h
            x = self.mesh.interior_nodes
            j = np.arange(1, num_modes + 1, dtype=np.float64)
            jpi = j * np.pi
            # integral of the unit hat at x_i against sqrt(2) sin(j pi x)
            coef = math.sqrt(2.0) * 2.0 * (1.0 - np.cos(jpi * h)) / (h * jpi**2)
            loads = coef[:, None] * np.sin(np.outer(jpi, x))  # (J, n)
            self._projectors[num_modes] = solveh_banded(self._mass_banded, loads.T)
        return self._projectors[num_modes]

    def spectral_quad_values(self, num_modes: int, order: int) -> np.ndarray:
        """Values of the num_modes sine modes at all quadrature points, (N, order, J)."""
        key = ("quad", num_modes, order)
        if key not in self._projectors:
            g, _ = gauss_rule(order)
            pts = quad_points(self.mesh, order)
            jpi = np.arange(1, num_modes + 1, dtype=np.float64) * np.pi
            self._projectors[key] = math.sqrt(2.0) * np.sin(pts[:, :, None] * jpi[None, None, :])
        return self._projectors[key]


def assemble(mesh: Mesh) -> FemSystem:
    """Assemble mass/stiffness and solve the generalized eigenproblem S v = lam M v."""
    n = mesh.num_interior
    h = mesh.h
    mass = np.diag(np.full(n, 4.0 * h / 6.0))
    mass += np.diag(np.full(n - 1, h / 6.0), 1) + np.diag(np.full(n - 1, h / 6.0), -1)
    stiff = np.diag(np.full(n, 2.0 / h))
    stiff += np.diag(np.full(n - 1, -1.0 / h), 1) + np.diag(np.full(n - 1, -1.0 / h), -1)
    eig_values, eig_vectors = eigh(stiff, mass)  # M-orthonormal columns
    banded = np.zeros((2, n))
    banded[0, 1:] = h / 6.0
    banded[1, :] = 4.0 * h / 6.0
    return FemSystem(
        mesh=mesh,
        mass=mass,
        stiffness=stiff,
        eig_values=eig_values,
        eig_vectors=eig_vectors,
        modal_T=eig_vectors.T @ mass,
        _mass_banded=banded,
    )


def l2_project(f: Callable, system: FemSystem) -> np.ndarray:
    """L2-project a callable onto the FEM space: solve M u = b, b_i = int f psi_i.

    Loads are computed cell by cell with 5-point Gauss quadrature; ``f`` must
    accept numpy arrays.
    """
    mesh = system.mesh
    h = mesh.h
    cells = np.arange(mesh.num_cells, dtype=np.float64)
    pts = (cells[:, None] + _GAUSS_NODES[None, :]) * h  # (N, 5)
    fx = np.asarray(f(pts), dtype=np.float64)
    if fx.shape != pts.shape:
        fx = np.broadcast_to(fx, pts.shape)
    if not np.all(np.isfinite(fx)):
        raise ValueError("non-finite value in projection quadrature")
    wvals = fx * (_GAUSS_WEIGHTS[None, :] * h)
    rising = wvals @ _GAUSS_NODES  # contribution to each cell's right node
    falling = wvals @ (1.0 - _GAUSS_NODES)  # contribution to each cell's left node
    b = np.zeros(mesh.num_interior)
    b += rising[:-1]  # cell i feeds interior node i+1  (i = 0..N-2)
    b += falling[1:]  # cell i feeds interior node i    (i = 1..N-1)
    return solveh_banded(system._mass_banded, b)


def project_spectral(coeffs: np.ndarray, system: FemSystem) -> np.ndarray:
    """L2 projection of a truncated sine expansion, via exact load integrals."""
    c = np.asarray(coeffs, dtype=np.float64)
    return system.spectral_projector(c.shape[0]) @ c


def quad_points(mesh: Mesh, order: int) -> np.ndarray:
    """Physical quadrature points cell by cell, shape (num_cells, order)."""
    g, _ = gauss_rule(order)
    cells = np.arange(mesh.num_cells, dtype=np.float64)
    return (cells[:, None] + g[None, :]) * mesh.h


def interp_at_quad(v: np.ndarray, mesh: Mesh, order: int) -> np.ndarray:
    """Evaluate the piecewise-linear interpolant of interior nodal values at quad points."""
    g, _ = gauss_rule(order)
    padded = np.concatenate(([0.0], v, [0.0]))  # homogeneous Dirichlet values
    left = padded[:-1][:, None]
    right = padded[1:][:, None]
    return left * (1.0 - g[None, :]) + right * g[None, :]


def project_values_at_quad(vals: np.ndarray, system: FemSystem, order: int) -> np.ndarray:
    """L2-project from pointwise values at the (num_cells, order) quadrature grid."""
    g, w = gauss_rule(order)
    wvals = vals * (w[None, :] * system.mesh.h)
    rising = wvals @ g
    falling = wvals @ (1.0 - g)
    b = rising[:-1] + falling[1:]
    return solveh_banded(system._mass_banded, b)


def to_modal(v: np.ndarray, system: FemSystem) -> np.ndarray:
    """Coordinates of a nodal vector in the M-orthonormal discrete eigenbasis."""
    return system.modal_T @ v


def from_modal(c: np.ndarray, system: FemSystem) -> np.ndarray:
    """Nodal vector with the given discrete-eigenbasis coordinates."""
    return system.eig_vectors @ c


def _rotate_modal(c_re, c_im, ang, flip_sign: bool = False):
    # flip_sign breaks orthogonality on purpose (fault-injection hook for
    # the diagnostics harness); production callers never set it.
    c, s = np.cos(ang), np.sin(ang)
    upper = s if flip_sign else -s
    return c * c_re + upper * c_im, s * c_re + c * c_im


def apply_discrete_trig(state: FemPair, t: float, system: FemSystem, *, _flip_sign: bool = False) -> FemPair:
    """Apply the discrete trigonometric group for time t.

    Transforms to modal coordinates, rotates each coordinate pair by
    t * lambda_{h,j}, transforms back; preserves the combined M-norm.
    """
    c_re = system.modal_T @ state.re
    c_im = system.modal_T @ state.im
    r_re, r_im = _rotate_modal(c_re, c_im, t * system.eig_values, flip_sign=_flip_sign)
    return FemPair(re=system.eig_vectors @ r_re, im=system.eig_vectors @ r_im)


def m_norm(v: np.ndarray, system: FemSystem) -> float:
    """Discrete L2 norm ||v||_M = sqrt(v^T M v)."""
    return math.sqrt(float(v @ (system.mass @ v)))


def pair_m_norm(pair: FemPair, system: FemSystem) -> float:
    """Combined discrete norm sqrt(||re||_M^2 + ||im||_M^2)."""
    return math.sqrt(
        float(pair.re @ (system.mass @ pair.re)) + float(pair.im @ (system.mass @ pair.im))
    )


def discrete_fractional_norm(v: np.ndarray, s: float, system: FemSystem) -> float:
    """Discrete fractional norm (sum_j lambda_{h,j}**s c_j**2)**(1/2), c = modal coords."""
    c = system.modal_T @ v
    return math.sqrt(float(np.sum(system.eig_values**s * c**2)))


def norm_relation_check(coeffs: np.ndarray, gamma: float, system: FemSystem) -> float:
    """Evaluate ||A_h^gamma P_h A^{-gamma} v||_M for a sine-coefficient vector v.

    The contract (uniform mesh, gamma in [-1/2, 1]) is that this does not
    exceed ||v|| beyond roundoff; callers assert <= 1 + 1e-6 on unit vectors.
    """
    if not -0.5 <= gamma <= 1.0:
        raise ValueError(f"gamma must lie in [-1/2, 1], got {gamma}")
    c = np.asarray(coeffs, dtype=np.float64)
    j = np.arange(1, c.shape[0] + 1, dtype=np.float64)
    scaled = c * ((j * np.pi) ** 2) ** (-gamma)
    w = project_spectral(scaled, system)
    return discrete_fractional_norm(w, 2.0 * gamma, system)
