import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from schrofem import spectral
from schrofem.analysis import rate_regression
from schrofem.spectral import SpectralBasis, SpectralPair


def test_eigenvalues_closed_form():
    assert spectral.eigenvalue(1) == pytest.approx(math.pi**2, abs=1e-12)
    assert spectral.eigenvalue(2) == pytest.approx(4 * math.pi**2, abs=1e-11)
    assert spectral.eigenvalue(10) == pytest.approx(100 * math.pi**2, rel=1e-15)
    with pytest.raises(ValueError):
        spectral.eigenvalue(0)


def test_eigenfunctions():
    assert spectral.eigenfunction_eval(1, 0.5) == pytest.approx(math.sqrt(2.0), rel=1e-12)
    assert spectral.eigenfunction_eval(7, 0.0) == 0.0
    assert spectral.eigenfunction_eval(2, 0.25) == pytest.approx(math.sqrt(2.0), rel=1e-12)
    with pytest.raises(ValueError):
        spectral.eigenfunction_eval(1, 1.5)


def test_eigenfunction_l2_normalized():
    # trapezoid on a fine grid is accurate enough to confirm unit L2 norm
    x = np.linspace(0.0, 1.0, 20001)
    vals = spectral.eigenfunction_eval(3, x)
    assert np.trapezoid(vals**2, x) == pytest.approx(1.0, abs=1e-6)


def test_fractional_norm_examples():
    basis = SpectralBasis.unit_interval(1)
    assert spectral.fractional_norm(basis, np.array([1.0]), 0.0) == pytest.approx(1.0)
    assert spectral.fractional_norm(basis, np.array([1.0]), 2.0) == pytest.approx(math.pi**2)
    basis2 = SpectralBasis.unit_interval(2)
    # direct two-term summation oracle
    expected = math.sqrt(math.pi**-4 + (4 * math.pi**2) ** -2)
    assert spectral.fractional_norm(basis2, np.array([1.0, 1.0]), -2.0) == pytest.approx(expected, rel=1e-14)


def test_fractional_norm_gamma_zero_is_euclidean():
    basis = SpectralBasis.unit_interval(9)
    coeffs = np.linspace(-1.0, 2.0, 9)
    assert spectral.fractional_norm(basis, coeffs, 0.0) == pytest.approx(
        float(np.linalg.norm(coeffs)), rel=1e-14
    )


def test_trig_group_identity_and_single_mode():
    basis = SpectralBasis.unit_interval(3)
    state = SpectralPair(re=np.array([1.0, 0.5, -2.0]), im=np.array([0.0, 1.0, 0.25]))
    out = spectral.apply_trig_group(basis, state, 0.0)
    np.testing.assert_array_equal(out.re, state.re)
    np.testing.assert_array_equal(out.im, state.im)

    single = SpectralBasis.unit_interval(1)
    rotated = spectral.apply_trig_group(single, SpectralPair(np.array([1.0]), np.array([0.0])), 0.1)
    assert rotated.re[0] == pytest.approx(math.cos(0.1 * math.pi**2), rel=1e-14)
    assert rotated.im[0] == pytest.approx(math.sin(0.1 * math.pi**2), rel=1e-14)


@settings(max_examples=50, deadline=None)
@given(
    t=st.floats(-10.0, 10.0),
    r=st.floats(-10.0, 10.0),
    seed=st.integers(0, 2**31 - 1),
)
def test_trig_group_unitary_and_composes(t, r, seed):
    rng = np.random.default_rng(seed)
    basis = SpectralBasis.unit_interval(12)
    state = SpectralPair(re=rng.normal(size=12), im=rng.normal(size=12))
    norm0 = spectral.combined_norm(state)

    once = spectral.apply_trig_group(basis, state, t)
    assert abs(spectral.combined_norm(once) - norm0) <= 1e-12 * norm0

    composed = spectral.apply_trig_group(basis, once, r)
    direct = spectral.apply_trig_group(basis, state, t + r)
    scale = max(norm0, 1.0)
    assert np.max(np.abs(composed.re - direct.re)) <= 1e-10 * scale
    assert np.max(np.abs(composed.im - direct.im)) <= 1e-10 * scale


def test_hs_norm_flat_and_zeta():
    assert spectral.hs_norm(2.0, 2.0, 16) == pytest.approx(4.0, rel=1e-14)
    # independent oracle: compensated partial sum, ascending
    terms = [((j * math.pi) ** 2) ** -2.0 for j in range(10_000, 0, -1)]
    oracle = math.sqrt(math.fsum(terms))
    assert spectral.hs_norm(0.0, 2.0, 10_000) == pytest.approx(oracle, rel=1e-12)


def test_hs_norm_monotone_and_tail_decay():
    a = spectral.hs_norm(2.0, 2.501, 1_000)
    b = spectral.hs_norm(2.0, 2.501, 2_000)
    assert b > a  # nondecreasing in J, strictly here
    # for theta - s < -1/2 the squared increments decay like J^(2(theta-s)+1)
    theta, s = 0.0, 2.0
    inc1 = spectral.hs_norm(theta, s, 200) ** 2 - spectral.hs_norm(theta, s, 100) ** 2
    inc2 = spectral.hs_norm(theta, s, 400) ** 2 - spectral.hs_norm(theta, s, 200) ** 2
    observed = math.log2(inc1 / inc2)
    assert observed == pytest.approx(-(2 * (theta - s) + 1), abs=0.1)


def test_holder_deviation_basics():
    assert spectral.holder_deviation(0.4, 0.4, 1.0, "sine", 100) == 0.0
    assert spectral.holder_deviation(1.3, 0.2, 0.0, "cosine", 500) <= 2.0
    with pytest.raises(ValueError):
        spectral.holder_deviation(0.1, 0.2, 1.0, "sine", 10)
    with pytest.raises(ValueError):
        spectral.holder_deviation(0.2, 0.1, 1.0, "tangent", 10)


@pytest.mark.parametrize("kind", ["sine", "cosine"])
def test_holder_deviation_slope(kind):
    gaps = [2.0**-m for m in range(5, 13)]
    devs = [spectral.holder_deviation(g, 0.0, 1.0, kind, 1000) for g in gaps]
    fit = rate_regression(gaps, devs)
    assert fit.slope >= 0.4
