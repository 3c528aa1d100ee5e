"""Coupled-path Monte Carlo strong-error estimation and rate regression.

Every comparison drives the approximate and the reference solution with the
same Brownian path: coarse time steps consume pairwise sums of the fine
increments, and all meshes consume the same spectral mode coefficients (they
differ only through the projection).  Mean-square errors are measured in the
mass-weighted discrete L2 norm at the final time, and the convergence rate is
the least-squares slope of log2(error) against log2(level).
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple

import numpy as np
from scipy.stats import t as student_t

from . import fem1d, noise, schemes
from .fem1d import FemPair
from .noise import NoiseSpec
from .schemes import ModelProblem, PROJECT_THEN_MULTIPLY

__all__ = [
    "GridResolution",
    "ExperimentConfig",
    "ConfigError",
    "StrongErrorResult",
    "RateFit",
    "ErrorRow",
    "ErrorTable",
    "strong_error",
    "rate_regression",
    "spatial_study",
    "temporal_study",
    "write_error_table_csv",
]

REFERENCE_NUMERIC = "numeric"
REFERENCE_EXACT_MILD = "exact-mild"


class ConfigError(ValueError):
    """Invalid experiment configuration, rejected before any compute."""


class GridResolution(NamedTuple):
    """One space-time resolution: number of mesh cells and time steps."""

    num_cells: int
    n_steps: int


def _dyadic_exponent(x: float) -> int:
    if x <= 0.0:
        raise ConfigError(f"level must be positive, got {x}")
    m = round(-math.log2(x))
    if m < 0 or 2.0**-m != x:
        raise ConfigError(f"level {x} is not a dyadic 2^-m")
    return m


@dataclass(frozen=True)
class ExperimentConfig:
    """Settings of one convergence study.

    ``vary`` selects the refined parameter ("h" or "k"); ``levels`` and
    ``ref_level`` are the dyadic values of that parameter and ``fixed_value``
    the other one.  The covariance exponent must satisfy s > theta + 1/2, the
    finiteness criterion of the Hilbert-Schmidt norm in one dimension.
    """

    theta: float
    s: float
    vary: str
    levels: tuple
    ref_level: float
    fixed_value: float
    n_samples: int
    seed: int
    num_modes: int
    T: float = 1.0
    problem: str = "semilinear"
    correlated_noise: bool = False
    operator_ordering: str = PROJECT_THEN_MULTIPLY
    reference: str = REFERENCE_NUMERIC
    threads: int = 1

    def validate(self) -> None:
        if not self.s > self.theta + 0.5:
            raise ConfigError(
                f"covariance exponent s={self.s} violates theta < s - 1/2 "
                f"(theta={self.theta}); the noise would not be admissible"
            )
        if self.vary not in ("h", "k"):
            raise ConfigError(f"vary must be 'h' or 'k', got {self.vary!r}")
        if self.problem not in ("linear", "semilinear"):
            raise ConfigError(f"problem must be linear or semilinear, got {self.problem!r}")
        if self.reference not in (REFERENCE_NUMERIC, REFERENCE_EXACT_MILD):
            raise ConfigError(f"unknown reference {self.reference!r}")
        if self.reference == REFERENCE_EXACT_MILD and (self.problem != "linear" or self.vary != "k"):
            raise ConfigError("exact-mild reference applies to the linear temporal study only")
        if self.n_samples < 1:
            raise ConfigError(f"n_samples must be positive, got {self.n_samples}")
        if self.num_modes < 1:
            raise ConfigError(f"J must be positive, got {self.num_modes}")
        if self.T <= 0.0:
            raise ConfigError(f"T must be positive, got {self.T}")
        if self.threads < 1:
            raise ConfigError(f"threads must be positive, got {self.threads}")
        if not self.levels:
            raise ConfigError("need at least one level")
        ref_m = _dyadic_exponent(self.ref_level)
        for lvl in self.levels:
            if _dyadic_exponent(lvl) >= ref_m:
                raise ConfigError(f"reference level {self.ref_level} must be strictly finer than level {lvl}")
        _dyadic_exponent(self.fixed_value)
        if self.vary == "h":
            if round(self.T / self.fixed_value) != self.T / self.fixed_value:
                raise ConfigError(f"fixed k={self.fixed_value} does not divide T={self.T}")
            if 1.0 / max(self.levels) < 2.0:
                raise ConfigError("coarsest mesh needs at least 2 cells")
        else:
            if 1.0 / self.fixed_value < 2.0:
                raise ConfigError("fixed mesh needs at least 2 cells")
            for lvl in self.levels + (self.ref_level,):
                if round(self.T / lvl) != self.T / lvl:
                    raise ConfigError(f"k={lvl} does not divide T={self.T}")

    def build_problem(self) -> ModelProblem:
        spec = NoiseSpec(s=self.s, num_modes=self.num_modes, correlated=self.correlated_noise)
        return schemes.benchmark_problem(
            spec,
            T=self.T,
            linear=self.problem == "linear",
            operator_ordering=self.operator_ordering,
        )


@dataclass(frozen=True)
class StrongErrorResult:
    """Root-mean-square errors of both components at the final time.

    ``stderr`` is the delta-method Monte Carlo standard error of the combined
    root-sum-square error; excluded samples blew up and were dropped (the run
    aborts if they exceed 1% of the total).
    """

    rms_re: float
    rms_im: float
    rms_combined: float
    stderr: float
    n_samples: int
    n_excluded: int


@lru_cache(maxsize=32)
def _system(num_cells: int):
    return fem1d.assemble(fem1d.Mesh(num_cells))


def _reduce_errors(e2_re, e2_im, excluded, n_samples) -> StrongErrorResult:
    n_excluded = int(np.sum(excluded))
    if n_excluded > 0.01 * n_samples:
        raise RuntimeError(f"{n_excluded}/{n_samples} samples blew up; run rejected")
    keep = ~excluded
    n_eff = int(np.sum(keep))
    mean_re = math.fsum(e2_re[keep]) / n_eff
    mean_im = math.fsum(e2_im[keep]) / n_eff
    comb = e2_re[keep] + e2_im[keep]
    mean_comb = math.fsum(comb) / n_eff
    rms_comb = math.sqrt(mean_comb)
    if n_eff > 1 and rms_comb > 0.0:
        var = math.fsum((comb - mean_comb) ** 2) / (n_eff - 1)
        stderr = math.sqrt(var / n_eff) / (2.0 * rms_comb)
    else:
        stderr = 0.0
    return StrongErrorResult(
        rms_re=math.sqrt(mean_re),
        rms_im=math.sqrt(mean_im),
        rms_combined=rms_comb,
        stderr=stderr,
        n_samples=n_samples,
        n_excluded=n_excluded,
    )


def _run_samples(fn, n_samples: int, threads: int):
    """Evaluate fn(i) for all samples; results land in arrays ordered by index,
    so the reduction is bitwise identical for any worker count."""
    e2_re = np.zeros(n_samples)
    e2_im = np.zeros(n_samples)
    excluded = np.zeros(n_samples, dtype=bool)

    def one(i):
        try:
            e2_re[i], e2_im[i] = fn(i)
        except schemes.BlowupError:
            excluded[i] = True

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(one, range(n_samples)))
    else:
        for i in range(n_samples):
            one(i)
    return e2_re, e2_im, excluded


def strong_error(
    problem: ModelProblem,
    coarse: GridResolution,
    reference: GridResolution,
    n_samples: int,
    seed: int,
    threads: int = 1,
) -> StrongErrorResult:
    """Coupled-path mean-square error of the coarse run against the fine reference.

    Both runs consume the same Brownian path (time-coarsened for the coarse
    run); the reference solution is restricted to the coarse mesh by nodal
    evaluation (meshes are nested) and differenced in the coarse M-norm at T.
    """
    if reference.num_cells % coarse.num_cells != 0 or reference.n_steps % coarse.n_steps != 0:
        raise ValueError(f"reference {reference} does not refine coarse {coarse}")
    sys_c = _system(coarse.num_cells)
    sys_r = _system(reference.num_cells)
    stride = reference.num_cells // coarse.num_cells
    factor = reference.n_steps // coarse.n_steps
    init_c = schemes.initial_state(problem, sys_c)
    init_r = schemes.initial_state(problem, sys_r)
    mass_c = sys_c.mass

    def one_sample(i):
        path = noise.sample_path(problem.noise, problem.T, reference.n_steps, seed, i)
        ref_final = schemes.run_trajectory(problem, sys_r, path, start=init_r).pair
        coarse_final = schemes.run_trajectory(problem, sys_c, noise.coarsen(path, factor), start=init_c).pair
        d_re = coarse_final.re - ref_final.re[stride - 1 :: stride]
        d_im = coarse_final.im - ref_final.im[stride - 1 :: stride]
        return float(d_re @ (mass_c @ d_re)), float(d_im @ (mass_c @ d_im))

    return _reduce_errors(*_run_samples(one_sample, n_samples, threads), n_samples)


def strong_error_exact_mild(
    problem: ModelProblem,
    num_cells: int,
    n_steps_coarse: int,
    n_steps_ref: int,
    n_samples: int,
    seed: int,
    threads: int = 1,
) -> StrongErrorResult:
    """Linear scheme at a coarse step against the exact coupled mild solution.

    The exact sample is drawn at the fine resolution; the scheme consumes the
    pairwise-summed increments of the very same driving path.
    """
    if problem.nonlinearity is not None:
        raise ValueError("exact mild reference requires the linear problem")
    if n_steps_ref % n_steps_coarse != 0:
        raise ValueError(f"reference steps {n_steps_ref} not a multiple of {n_steps_coarse}")
    system = _system(num_cells)
    factor = n_steps_ref // n_steps_coarse
    k = problem.T / n_steps_coarse
    init = schemes.initial_state(problem, system)
    mass = system.mass

    def one_sample(i):
        cs = schemes.exact_linear_mild(problem, system, n_steps_ref, seed, i)
        dw1 = noise.block_sum(cs.dw1_modal, factor)
        dw2 = noise.block_sum(cs.dw2_modal, factor)
        state = init
        for n in range(n_steps_coarse):
            w = FemPair(re=fem1d.from_modal(dw1[n], system), im=fem1d.from_modal(dw2[n], system))
            state = schemes.step_linear_additive_pair(state, w, k, system)
        d_re = state.pair.re - cs.final.re
        d_im = state.pair.im - cs.final.im
        return float(d_re @ (mass @ d_re)), float(d_im @ (mass @ d_im))

    return _reduce_errors(*_run_samples(one_sample, n_samples, threads), n_samples)


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    ci: float  # half-width of the 95% confidence interval


def rate_regression(levels, errors) -> RateFit:
    """Least-squares fit of log2(error) against log2(level) with a t-based CI."""
    x = np.log2(np.asarray(levels, dtype=np.float64))
    y = np.asarray(errors, dtype=np.float64)
    if x.shape[0] < 3:
        raise ValueError(f"need at least 3 levels to regress, got {x.shape[0]}")
    if np.any(y <= 0.0):
        raise ValueError("errors must be positive for a log-log fit")
    y = np.log2(y)
    xm, ym = x.mean(), y.mean()
    sxx = float(np.sum((x - xm) ** 2))
    slope = float(np.sum((x - xm) * (y - ym)) / sxx)
    intercept = ym - slope * xm
    resid = y - (slope * x + intercept)
    dof = x.shape[0] - 2
    s2 = float(np.sum(resid**2)) / dof
    ci = float(student_t.ppf(0.975, dof)) * math.sqrt(s2 / sxx)
    return RateFit(slope=slope, intercept=float(intercept), ci=ci)


@dataclass(frozen=True)
class ErrorRow:
    level: float
    rms_re: float
    rms_im: float
    stderr: float


@dataclass(frozen=True)
class ErrorTable:
    """Per-level errors plus fitted log-log slopes for both components and
    their root-sum-square."""

    rows: tuple
    n_samples: int
    vary: str
    fit_re: RateFit
    fit_im: RateFit
    fit_combined: RateFit
    n_excluded: int = 0

    @property
    def slope_re(self) -> float:
        return self.fit_re.slope

    @property
    def slope_im(self) -> float:
        return self.fit_im.slope

    @property
    def slope_combined(self) -> float:
        return self.fit_combined.slope


def _build_table(config: ExperimentConfig, results) -> ErrorTable:
    order = np.argsort([lvl for lvl, _ in results])
    rows = []
    combined = []
    excluded = 0
    for idx in order:
        lvl, res = results[idx]
        rows.append(ErrorRow(level=lvl, rms_re=res.rms_re, rms_im=res.rms_im, stderr=res.stderr))
        combined.append(res.rms_combined)
        excluded += res.n_excluded
    levels = [r.level for r in rows]
    return ErrorTable(
        rows=tuple(rows),
        n_samples=config.n_samples,
        vary=config.vary,
        fit_re=rate_regression(levels, [r.rms_re for r in rows]),
        fit_im=rate_regression(levels, [r.rms_im for r in rows]),
        fit_combined=rate_regression(levels, combined),
        n_excluded=excluded,
    )


def spatial_study(config: ExperimentConfig) -> ErrorTable:
    """Refine h against a fine-mesh reference at fixed k (expected slope ~ theta)."""
    config.validate()
    if config.vary != "h":
        raise ConfigError("spatial study requires vary='h'")
    problem = config.build_problem()
    n_steps = round(config.T / config.fixed_value)
    n_ref = round(1.0 / config.ref_level)
    results = []
    for lvl in config.levels:
        res = strong_error(
            problem,
            GridResolution(round(1.0 / lvl), n_steps),
            GridResolution(n_ref, n_steps),
            config.n_samples,
            config.seed,
            config.threads,
        )
        results.append((lvl, res))
    return _build_table(config, results)


def temporal_study(config: ExperimentConfig) -> ErrorTable:
    """Refine k against a fine-step reference at fixed h (expected slope
    ~ min(theta/2, 1/2); theta/2 for the linear problem)."""
    config.validate()
    if config.vary != "k":
        raise ConfigError("temporal study requires vary='k'")
    problem = config.build_problem()
    num_cells = round(1.0 / config.fixed_value)
    n_ref = round(config.T / config.ref_level)
    results = []
    for lvl in config.levels:
        n_lvl = round(config.T / lvl)
        if config.reference == REFERENCE_EXACT_MILD:
            res = strong_error_exact_mild(
                problem, num_cells, n_lvl, n_ref, config.n_samples, config.seed, config.threads
            )
        else:
            res = strong_error(
                problem,
                GridResolution(num_cells, n_lvl),
                GridResolution(num_cells, n_ref),
                config.n_samples,
                config.seed,
                config.threads,
            )
        results.append((lvl, res))
    return _build_table(config, results)


def write_error_table_csv(table: ErrorTable, path) -> None:
    """Emit the per-level errors as `level,rms_re,rms_im,stderr,n_samples` rows."""
    with open(path, "w", newline="") as fh:
        fh.write("level,rms_re,rms_im,stderr,n_samples\n")
        for row in table.rows:
            fh.write(
                f"{row.level:.17g},{row.rms_re:.17g},{row.rms_im:.17g},"
                f"{row.stderr:.17g},{table.n_samples}\n"
            )
