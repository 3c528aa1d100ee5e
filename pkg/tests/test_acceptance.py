"""Acceptance suite: one test per criterion, each printing a pass/fail line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
lines and timings.

Two entries fail by construction of the underlying problem rather than by
implementation defect (details in README, "Acceptance status"):

* criterion 7: the pinned desk ladder cannot exhibit the asymptotic spatial
  rate for the benchmark problem (coarse levels saturate through dispersive
  de-phasing of the mode-2 initial data; the drift sqrt(u^2+1) >= 1 cannot
  vanish on the boundary and leaves a slowly decaying floor at fine levels);
* criterion 9 for gamma > 0: discrete eigenvalues exceed continuous ones
  (Rayleigh-Ritz), so the operator relation holds with a constant slightly
  above 1, never within 1e-6 of it.

They are asserted exactly as stated rather than loosened.
"""

import math
import time

import numpy as np
import pytest

from schrofem import analysis, cli, fem1d, noise, schemes, spectral
from schrofem.analysis import ExperimentConfig, GridResolution
from schrofem.fem1d import Mesh
from schrofem.noise import NoiseSpec


def _report(criterion, passed, detail, elapsed):
    status = "PASS" if passed else "FAIL"
    print(f"[{status}] criterion {criterion:>2}: {detail} ({elapsed:.2f}s)")


def test_criterion_1_unitarity():
    t0 = time.perf_counter()
    system = fem1d.assemble(Mesh(64))
    spec = NoiseSpec(s=2.501, num_modes=100)
    k = 2.0**-6
    problem = schemes.benchmark_problem(spec, T=1000 * k, linear=True)
    states = schemes.run_trajectory(problem, system, noise.zero_path(100, problem.T, 1000), store_all=True)
    n0 = fem1d.pair_m_norm(states[0].pair, system)
    drift = max(abs(fem1d.pair_m_norm(s.pair, system) - n0) / n0 for s in states)
    elapsed = time.perf_counter() - t0
    ok = drift <= 1e-9 and elapsed < 1.0
    _report(1, ok, f"norm drift {drift:.2e} over 1000 steps", elapsed)
    assert drift <= 1e-9
    assert elapsed < 1.0


def test_criterion_2_discrete_eigenvalues():
    t0 = time.perf_counter()
    sizes = [8, 16, 32, 64, 128, 256]
    worst = 0.0
    gaps = []
    for n in sizes:
        system = fem1d.assemble(Mesh(n))
        h = 1.0 / n
        j = np.arange(1, n, dtype=np.float64)
        closed = 6.0 * (1.0 - np.cos(j * np.pi * h)) / (h**2 * (2.0 + np.cos(j * np.pi * h)))
        worst = max(worst, float(np.max(np.abs(system.eig_values - closed) / closed)))
        gaps.append(system.eig_values[0] - math.pi**2)
    fit = analysis.rate_regression([1.0 / n for n in sizes[:4]], gaps[:4])
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-8 and abs(fit.slope - 2.0) <= 0.1 and elapsed < 1.0
    _report(2, ok, f"closed-form mismatch {worst:.2e}, gap slope {fit.slope:.3f}", elapsed)
    assert worst <= 1e-8
    assert fit.slope == pytest.approx(2.0, abs=0.1)
    assert elapsed < 1.0


def test_criterion_3_hilbert_schmidt_sum():
    t0 = time.perf_counter()
    gap = abs(spectral.hs_norm(0.0, 2.0, 10_000) ** 2 - 1.0 / 90.0)
    elapsed = time.perf_counter() - t0
    ok = gap <= 1e-6 and elapsed < 0.1
    _report(3, ok, f"|hs(0,2,1e4)^2 - 1/90| = {gap:.2e}", elapsed)
    assert gap <= 1e-6
    assert elapsed < 0.1


def test_criterion_4_holder_operator_slopes():
    t0 = time.perf_counter()
    gaps = [2.0**-m for m in range(5, 13)]
    slopes = {}
    for theta in (0.5, 1.0, 2.0):
        for kind in ("sine", "cosine"):
            devs = [spectral.holder_deviation(g, 0.0, theta, kind, 1000) for g in gaps]
            slopes[(theta, kind)] = analysis.rate_regression(gaps, devs).slope
    elapsed = time.perf_counter() - t0
    ok = all(slopes[(th, kd)] >= th / 2 - 0.1 for th, kd in slopes) and elapsed < 1.0
    detail = " ".join(f"{kd[:3]}@{th:g}:{slopes[(th, kd)]:.2f}" for th, kd in slopes)
    _report(4, ok, detail, elapsed)
    for (theta, kind), slope in slopes.items():
        assert slope >= theta / 2 - 0.1, (theta, kind)
    assert elapsed < 1.0


def test_criterion_5_noise_statistics():
    t0 = time.perf_counter()
    spec = NoiseSpec(s=2.501, num_modes=100)
    n = 100_000
    k = 0.25
    modes = [0, 9, 99]
    draws = np.empty((n, len(modes)))
    for i in range(n):
        draws[i] = noise.sample_path(spec, k, 1, 123, i).dw1[0, modes]
    gammas = spec.mode_variances()
    zs = []
    for col, j in enumerate(modes):
        target = k * gammas[j]
        var = float(np.var(draws[:, col], ddof=1))
        zs.append((var - target) / (target * math.sqrt(2.0 / n)))

    report = noise.ito_isometry_check(
        NoiseSpec(s=2.501, num_modes=8),
        lambda tau, lam: np.cos(tau * lam),
        T=1.0,
        n_samples=n,
        seed=99,
    )
    elapsed = time.perf_counter() - t0
    ok = all(abs(z) <= 3.0 for z in zs) and abs(report.z_score) <= 3.0 and elapsed < 30.0
    detail = "variance z " + ",".join(f"{z:+.2f}" for z in zs) + f"; isometry z {report.z_score:+.2f}"
    _report(5, ok, detail, elapsed)
    for z in zs:
        assert abs(z) <= 3.0
    assert abs(report.z_score) <= 3.0
    assert elapsed < 30.0


def test_criterion_6_linear_temporal_rate():
    t0 = time.perf_counter()
    spec = NoiseSpec(s=3.0, num_modes=100)
    problem = schemes.benchmark_problem(spec, T=1.0, linear=True)
    levels = [2.0**-m for m in (2, 3, 4, 5)]
    errors = []
    for m in (2, 3, 4, 5):
        res = analysis.strong_error_exact_mild(problem, 64, 2**m, 2**9, 400, seed=20260810)
        errors.append(res.rms_combined)
    fit = analysis.rate_regression(levels, errors)
    elapsed = time.perf_counter() - t0
    ok = 0.8 <= fit.slope <= 1.2 and elapsed < 120.0
    _report(6, ok, f"scheme vs exact mild solution: slope {fit.slope:.3f} (±{fit.ci:.3f})", elapsed)
    assert 0.8 <= fit.slope <= 1.2
    assert elapsed < 120.0


def test_criterion_7_semilinear_spatial_rate():
    """Known-failing: the pinned ladder cannot show the asymptotic h-rate for
    this problem (see module docstring and README)."""
    t0 = time.perf_counter()
    cfg = ExperimentConfig(
        theta=2.0,
        s=2.501,
        vary="h",
        levels=(2.0**-2, 2.0**-3, 2.0**-4, 2.0**-5),
        ref_level=2.0**-8,
        fixed_value=2.0**-6,
        n_samples=200,
        seed=20260810,
        num_modes=100,
        T=1.0,
        problem="semilinear",
    )
    table = analysis.spatial_study(cfg)
    elapsed = time.perf_counter() - t0
    slope = table.slope_combined
    ok = 1.6 <= slope <= 2.4 and elapsed < 300.0
    _report(7, ok, f"spatial slope {slope:.3f} (re {table.slope_re:.3f}, im {table.slope_im:.3f})", elapsed)
    assert elapsed < 300.0
    assert 1.6 <= slope <= 2.4, (
        f"measured {slope:.3f}: coarse levels saturate by dispersive de-phasing "
        "of the mode-2 initial data and the non-vanishing boundary trace of the "
        "drift floors the fine levels; see README 'Acceptance status'"
    )


def test_criterion_8_semilinear_temporal_rate():
    t0 = time.perf_counter()
    cfg = ExperimentConfig(
        theta=0.5,
        s=1.001,
        vary="k",
        levels=(2.0**-2, 2.0**-3, 2.0**-4, 2.0**-5),
        ref_level=2.0**-9,
        fixed_value=2.0**-6,
        n_samples=400,
        seed=20260810,
        num_modes=100,
        T=1.0,
        problem="semilinear",
    )
    table = analysis.temporal_study(cfg)
    elapsed = time.perf_counter() - t0
    slope = table.slope_combined
    ok = 0.15 <= slope <= 0.40 and elapsed < 600.0
    _report(8, ok, f"temporal slope {slope:.3f} (re {table.slope_re:.3f}, im {table.slope_im:.3f})", elapsed)
    assert 0.15 <= slope <= 0.40
    assert elapsed < 600.0


@pytest.mark.parametrize("gamma", [-0.5, 0.0, 0.5, 1.0])
def test_criterion_9_operator_relation(gamma):
    """gamma > 0 is known-failing: lambda_h >= lambda (Rayleigh-Ritz) makes the
    relation hold with a constant above 1 + 1e-6 (see README)."""
    t0 = time.perf_counter()
    worst = 0.0
    for n in (16, 64):
        system = fem1d.assemble(Mesh(n))
        for j in range(1, 13):
            coeffs = np.zeros(12)
            coeffs[j - 1] = 1.0
            worst = max(worst, fem1d.norm_relation_check(coeffs, gamma, system))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1.0 + 1e-6 and elapsed < 1.0
    _report(9, ok, f"gamma={gamma:+.1f}: max value {worst:.9f}", elapsed)
    assert elapsed < 1.0
    assert worst <= 1.0 + 1e-6, (
        f"gamma={gamma}: measured {worst:.6f}; the discrete eigenvalues exceed "
        "the continuous ones, so the unit constant is not attainable for "
        "positive exponents; see README 'Acceptance status'"
    )


def test_criterion_10_cli_determinism(tmp_path):
    t0 = time.perf_counter()
    cfg = tmp_path / "study.cfg"
    cfg.write_text(
        "theta = 2\ns = 2.501\nlevels = 2^-2, 2^-3, 2^-4\nref_level = 2^-6\n"
        "fixed_k = 2^-4\nn_samples = 20\nseed = 31\nJ = 32\nT = 0.25\nproblem = semilinear\n"
    )
    outs = []
    for name, threads in (("a", "1"), ("b", "4")):
        out = tmp_path / name
        code = cli.main(
            ["spatial-rate", "--config", str(cfg), "--out", str(out), "--threads", threads]
        )
        assert code == 0
        outs.append((out / "spatial.csv").read_bytes())
    elapsed = time.perf_counter() - t0
    ok = outs[0] == outs[1]
    _report(10, ok, f"byte-identical CSVs across thread counts: {ok}", elapsed)
    assert outs[0] == outs[1]
