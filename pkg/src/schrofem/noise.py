"""Sampling of the two Q-Wiener processes driving the equation.

Both processes use Q = A**(-s), realized by truncated Karhunen-Loeve
expansion: mode j carries an independent Brownian motion scaled by
lambda_j**(-s/2).  Gaussians come from a counter-based Philox stream keyed by
(seed, sample index, process id), one 64-bit word per draw through the inverse
normal CDF, so paths are bitwise reproducible for any evaluation order or
worker count.  Coarse increments are formed by pairwise summation of fine
ones, which makes time coarsening compose bitwise for dyadic factors.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from . import fem1d
from .fem1d import FemPair, FemSystem

__all__ = [
    "NoiseSpec",
    "WienerIncrement",
    "PathTable",
    "IsometryReport",
    "TraceReport",
    "philox_key",
    "standard_uniforms",
    "standard_normals",
    "sample_path",
    "zero_path",
    "coarsen",
    "block_sum",
    "increment_to_fem",
    "ito_isometry_check",
    "truncated_trace",
    "dump_path",
    "load_path",
]

_MASK64 = (1 << 64) - 1

# purpose tags keep the key spaces of the different consumers disjoint
PURPOSE_KL_PATH = 0
PURPOSE_MILD_TRIPLE = 1
PURPOSE_ISOMETRY = 2
PURPOSE_VALIDATION = 3


def philox_key(seed: int, sample_index: int, process: int, purpose: int) -> int:
    """128-bit Philox key packing (seed | purpose, process, sample_index)."""
    if sample_index < 0 or sample_index >= 1 << 48:
        raise ValueError(f"sample_index out of range: {sample_index}")
    hi = (purpose << 52) | (process << 48) | sample_index
    return (seed & _MASK64) | (hi << 64)


def standard_uniforms(shape, seed: int, sample_index: int, process: int, purpose: int) -> np.ndarray:
    """Deterministic uniforms in the open interval (0, 1) from the counter stream.

    Each value consumes exactly one 64-bit word (center-shifted 53-bit
    mantissa), so the draw at a given index never depends on evaluation order.
    """
    gen = np.random.Generator(np.random.Philox(key=philox_key(seed, sample_index, process, purpose)))
    raw = gen.integers(0, 1 << 64, size=shape, dtype=np.uint64, endpoint=False)
    return ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53


def standard_normals(shape, seed: int, sample_index: int, process: int, purpose: int) -> np.ndarray:
    """Deterministic standard normals via inverse CDF of the uniform counter stream."""
    return ndtri(standard_uniforms(shape, seed, sample_index, process, purpose))


@dataclass(frozen=True)
class NoiseSpec:
    """Covariance exponent s (Q = A**(-s)), truncation J, and driver sharing."""

    s: float
    num_modes: int
    correlated: bool = False

    def __post_init__(self):
        if self.num_modes < 1:
            raise ValueError(f"need at least one mode, got {self.num_modes}")

    def mode_variances(self) -> np.ndarray:
        """Per-mode variances gamma_j = lambda_j**(-s), nonincreasing for s >= 0."""
        j = np.arange(1, self.num_modes + 1, dtype=np.float64)
        return ((j * np.pi) ** 2) ** (-self.s)


@dataclass(frozen=True)
class WienerIncrement:
    """One step's mode coefficients for both processes; entries ~ N(0, dt*gamma_j)."""

    dw1: np.ndarray
    dw2: np.ndarray
    dt: float


@dataclass(frozen=True)
class PathTable:
    """All increments of one sampled path; rows are steps, columns modes."""

    dw1: np.ndarray
    dw2: np.ndarray
    dt: float
    seed: int
    sample_index: int

    @property
    def n_steps(self) -> int:
        return self.dw1.shape[0]

    @property
    def num_modes(self) -> int:
        return self.dw1.shape[1]

    def increment(self, n: int) -> WienerIncrement:
        return WienerIncrement(dw1=self.dw1[n], dw2=self.dw2[n], dt=self.dt)


def sample_path(spec: NoiseSpec, T: float, n_fine: int, seed: int, sample_index: int) -> PathTable:
    """Sample n_fine increments of both processes over [0, T].

    Identical (seed, sample_index) always reproduces the same table bitwise;
    distinct sample indices use disjoint counter streams and may be generated
    in parallel.
    """
    if T <= 0.0:
        raise ValueError(f"final time must be positive, got {T}")
    if n_fine < 1:
        raise ValueError(f"need at least one step, got {n_fine}")
    dt = T / n_fine
    std = np.sqrt(dt * spec.mode_variances())
    xi1 = standard_normals((n_fine, spec.num_modes), seed, sample_index, 1, PURPOSE_KL_PATH)
    if spec.correlated:
        xi2 = xi1
    else:
        xi2 = standard_normals((n_fine, spec.num_modes), seed, sample_index, 2, PURPOSE_KL_PATH)
    return PathTable(dw1=std * xi1, dw2=std * xi2, dt=dt, seed=seed, sample_index=sample_index)


def zero_path(num_modes: int, T: float, n_steps: int) -> PathTable:
    """Deterministic all-zero path (noise switched off)."""
    z = np.zeros((n_steps, num_modes))
    return PathTable(dw1=z, dw2=z.copy(), dt=T / n_steps, seed=0, sample_index=0)


def block_sum(a: np.ndarray, factor: int) -> np.ndarray:
    """Sum groups of ``factor`` consecutive rows.

    Pairwise halving over the dyadic part of the factor keeps the summation
    tree canonical, so block_sum(a, 4) == block_sum(block_sum(a, 2), 2)
    bitwise; any odd remainder is folded sequentially.
    """
    while factor % 2 == 0 and factor > 1:
        a = a[0::2] + a[1::2]
        factor //= 2
    if factor > 1:
        a = a.reshape(a.shape[0] // factor, factor, a.shape[1]).sum(axis=1)
    return a


def coarsen(path: PathTable, factor: int) -> PathTable:
    """Aggregate groups of ``factor`` consecutive increments into one.

    The coarse path is the same Brownian path seen at a coarser step; for
    dyadic factors coarsening composes bitwise.
    """
    if factor < 1 or path.n_steps % factor != 0:
        raise ValueError(f"factor {factor} does not divide {path.n_steps} steps")
    if factor == 1:
        return path
    return PathTable(
        dw1=block_sum(path.dw1, factor),
        dw2=block_sum(path.dw2, factor),
        dt=path.dt * factor,
        seed=path.seed,
        sample_index=path.sample_index,
    )


def increment_to_fem(inc: WienerIncrement, system: FemSystem) -> FemPair:
    """L2-project one increment of both processes into the FEM space."""
    proj = system.spectral_projector(inc.dw1.shape[0])
    return FemPair(re=proj @ inc.dw1, im=proj @ inc.dw2)


@dataclass(frozen=True)
class IsometryReport:
    mc_value: float
    analytic_value: float
    stderr: float
    z_score: float
    n_samples: int


def ito_isometry_check(
    spec: NoiseSpec,
    phi,
    T: float,
    n_samples: int,
    n_steps: int = 64,
    seed: int = 0,
) -> IsometryReport:
    """Monte Carlo check of the isometry E||int Phi dW||^2 = sum_j gamma_j int phi_j^2.

    ``phi(tau, lam)`` gives the diagonal weight of mode ``lam`` at time tau
    (vectorized in tau).  Each sample draws the per-step integrals
    int phi dbeta exactly, with variances from per-step Gauss quadrature, and
    the squared total is compared against the analytic value.
    """
    if n_samples < 1000:
        raise ValueError(f"need at least 1000 samples, got {n_samples}")
    gammas = spec.mode_variances()
    lambdas = (np.arange(1, spec.num_modes + 1, dtype=np.float64) * np.pi) ** 2
    nodes, weights = np.polynomial.legendre.leggauss(10)
    k = T / n_steps
    starts = np.arange(n_steps) * k
    tau = starts[:, None] + 0.5 * k * (nodes[None, :] + 1.0)  # (n_steps, 10)
    w = 0.5 * k * weights
    step_vars = np.empty((n_steps, spec.num_modes))
    for j in range(spec.num_modes):
        vals = np.asarray(phi(tau, lambdas[j]), dtype=np.float64)
        step_vars[:, j] = (vals**2) @ w
    total_var = gammas * step_vars.sum(axis=0)  # variance of int phi dW per mode
    analytic = float(np.sum(total_var))

    # sum of per-step Gaussians == one Gaussian per mode with the summed variance
    xi = standard_normals((n_samples, spec.num_modes), seed, 0, 1, PURPOSE_ISOMETRY)
    sq = (xi**2) @ total_var
    mc = float(np.mean(sq))
    stderr = float(np.std(sq, ddof=1) / math.sqrt(n_samples)) if n_samples > 1 else 0.0
    z = (mc - analytic) / stderr if stderr > 0.0 else 0.0
    return IsometryReport(mc_value=mc, analytic_value=analytic, stderr=stderr, z_score=z, n_samples=n_samples)


@dataclass(frozen=True)
class TraceReport:
    value: float
    tail_bound: float
    divergent: bool


def truncated_trace(spec: NoiseSpec) -> TraceReport:
    """Truncated trace of Q with a tail estimate; flags divergence for s <= 1/2."""
    gammas = spec.mode_variances()
    value = float(np.sum(gammas[::-1]))
    tail = float(gammas[-1] * spec.num_modes)
    return TraceReport(value=value, tail_bound=tail, divergent=spec.s <= 0.5)


def dump_path(path: PathTable, fileobj) -> None:
    """Write the binary debug layout [J:u32][n:u32][dt:f64][dw1 f64...][dw2 ...]."""
    fileobj.write(struct.pack("<IId", path.num_modes, path.n_steps, path.dt))
    fileobj.write(path.dw1.astype("<f8", copy=False).tobytes(order="C"))
    fileobj.write(path.dw2.astype("<f8", copy=False).tobytes(order="C"))


def load_path(fileobj) -> PathTable:
    """Read back a table written by :func:`dump_path` (seed metadata is not stored)."""
    num_modes, n_steps, dt = struct.unpack("<IId", fileobj.read(16))
    count = n_steps * num_modes
    dw1 = np.frombuffer(fileobj.read(8 * count), dtype="<f8").reshape(n_steps, num_modes)
    dw2 = np.frombuffer(fileobj.read(8 * count), dtype="<f8").reshape(n_steps, num_modes)
    return PathTable(dw1=dw1.copy(), dw2=dw2.copy(), dt=dt, seed=0, sample_index=0)
