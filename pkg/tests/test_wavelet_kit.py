import math

import numpy as np
import pytest
from scipy.integrate import quad, trapezoid

from src.analysis.errors import ParameterError
from src.analysis.wavelet_kit import (
    AnalyzingWavelet,
    PiecewisePolynomial,
    _fourier_by_parts,
    _fourier_gauss,
    admissibility_constant,
    build_even_wavelet,
    build_reconstruction_wavelet,
    cross_correlation,
    fourier_transform,
    moment,
)

WAVELET_PARAMS = [(2, 1), (2, 3), (3, 2), (4, 3), (6, 5)]
HIGH_ORDER_PARAMS = [(8, 7), (10, 9), (4, 12), (2, 20), (10, 20)]


def hat() -> PiecewisePolynomial:
    return PiecewisePolynomial.from_monomials((-1.0, 0.0, 1.0), ((1.0, 1.0), (1.0, -1.0)), 0)


@pytest.mark.parametrize("nv,s", WAVELET_PARAMS + HIGH_ORDER_PARAMS)
def test_built_wavelet_is_certified(nv, s):
    psi = build_even_wavelet(nv, s)
    assert psi.shape.support == (-1.0, 1.0)
    assert psi.shape.l2_norm() == pytest.approx(1.0, rel=1e-12)
    for m in range(nv):
        assert abs(moment(psi, m)) < 1e-8
    x = np.linspace(0.0, 1.0, 101)
    np.testing.assert_allclose(psi(x), psi(-x), atol=1e-12)


@pytest.mark.parametrize("nv,s", WAVELET_PARAMS)
def test_built_wavelet_has_exact_smoothness(nv, s):
    psi = build_even_wavelet(nv, s)
    # derivatives up to order s are continuous at +-1, order s + 1 is not
    PiecewisePolynomial(psi.shape.breakpoints, psi.shape.segments, s)
    with pytest.raises(ParameterError, match="jumps"):
        PiecewisePolynomial(psi.shape.breakpoints, psi.shape.segments, s + 1)


def test_first_non_vanishing_moment():
    psi = build_even_wavelet(2, 3)
    assert abs(moment(psi, 2)) > 1e-4


def test_build_even_wavelet_rejects_bad_orders():
    with pytest.raises(ParameterError, match="num_vanishing"):
        build_even_wavelet(1, 2)
    with pytest.raises(ParameterError, match="smoothness"):
        build_even_wavelet(4, 2)


def test_analyzing_wavelet_rejects_non_vanishing_moment():
    bump = PiecewisePolynomial.from_monomials((-1.0, 1.0), ((1.0, 0.0, -2.0, 0.0, 1.0),), 1)
    with pytest.raises(ParameterError, match="moment 0"):
        AnalyzingWavelet(bump, 2, 1)


def test_analyzing_wavelet_rejects_wide_support():
    psi = build_even_wavelet(2, 3)
    wide = psi.shape.affine(0.0, 2.0)
    with pytest.raises(ParameterError, match="not inside"):
        AnalyzingWavelet(wide, 2, 3)


def test_wavelet_dict_round_trip():
    psi = build_even_wavelet(4, 3)
    assert AnalyzingWavelet.from_dict(psi.to_dict()) == psi


def test_piecewise_polynomial_validation():
    with pytest.raises(ParameterError, match="strictly increasing"):
        PiecewisePolynomial((0.0, 0.0, 1.0), ((1.0,), (1.0,)))
    with pytest.raises(ParameterError, match="segments"):
        PiecewisePolynomial((0.0, 1.0), ((1.0,), (1.0,)))
    with pytest.raises(ParameterError, match="jumps"):
        PiecewisePolynomial.from_monomials((-1.0, 0.0, 1.0), ((1.0, 1.0), (1.0, -1.0)), 1)


def test_piecewise_polynomial_evaluation_and_integrals():
    h = hat()
    np.testing.assert_allclose(h(np.array([-1.0, -0.5, 0.0, 0.25, 1.0, 3.0])), [0.0, 0.5, 1.0, 0.75, 0.0, 0.0])
    assert h.integral() == pytest.approx(1.0)
    assert h.moment(1) == pytest.approx(0.0, abs=1e-12)
    assert h.moment(2) == pytest.approx(1.0 / 6.0)
    assert h.l2_norm() == pytest.approx(math.sqrt(2.0 / 3.0))
    assert h.sup_norm() == pytest.approx(1.0)


def test_affine_matches_composition():
    psi = build_even_wavelet(2, 3)
    moved = psi.shape.affine(0.3, 0.7)
    x = np.linspace(-1.0, 1.5, 57)
    np.testing.assert_allclose(moved(x), psi((x - 0.3) / 0.7), atol=1e-10)


def test_fourier_branches_agree():
    psi = build_even_wavelet(2, 3)
    xi = np.array([5.0, 12.0, 20.0, 31.0, 40.0])
    np.testing.assert_allclose(_fourier_gauss(psi.shape, xi), _fourier_by_parts(psi.shape, xi), atol=1e-10)


def test_fourier_transform_of_even_wavelet():
    psi = build_even_wavelet(2, 3)
    xi = np.linspace(-100.0, 100.0, 41)
    values = fourier_transform(psi.shape, xi)
    assert np.max(np.abs(values.imag)) < 1e-10
    assert abs(fourier_transform(psi.shape, 0.0)[0]) < 1e-10


def test_fourier_transform_satisfies_plancherel():
    psi = build_even_wavelet(2, 3)
    xi = np.linspace(-200.0, 200.0, 40001)
    energy = trapezoid(np.abs(fourier_transform(psi.shape, xi)) ** 2, xi)
    assert energy == pytest.approx(2.0 * math.pi, rel=1e-4)


def test_admissibility_constant():
    psi = build_even_wavelet(2, 3)
    c = admissibility_constant(psi)
    assert c.c_psi > 0
    assert c.quadrature_error_estimate < 1e-4 * c.c_psi
    finer = admissibility_constant(psi, num_points=8193)
    assert finer.c_psi == pytest.approx(c.c_psi, rel=1e-6)


def test_cross_admissibility_with_unit_norm_partner():
    psi = build_even_wavelet(2, 3)
    phi = build_reconstruction_wavelet(psi)
    assert admissibility_constant(psi, phi).c_psi == pytest.approx(admissibility_constant(psi).c_psi, rel=1e-10)


def test_admissibility_constant_needs_odd_grid():
    with pytest.raises(ParameterError, match="odd"):
        admissibility_constant(build_even_wavelet(2, 3), num_points=100)


def test_reconstruction_wavelet_is_normalized():
    psi = build_even_wavelet(4, 3)
    phi = build_reconstruction_wavelet(psi)
    assert phi.shape.l2_norm() == pytest.approx(1.0, rel=1e-12)
    assert cross_correlation(psi, phi) == pytest.approx(1.0, rel=1e-12)


def test_cross_correlation_is_exact():
    psi = build_even_wavelet(2, 3)
    phi = build_reconstruction_wavelet(psi)
    expected, _ = quad(lambda u: phi((u - 0.3) / 1.5) * psi(u), -1.0, 1.0, epsabs=1e-13, limit=200)
    assert cross_correlation(psi, phi, 0.3, 1.5) == pytest.approx(float(expected), rel=1e-9, abs=1e-12)


def test_built_wavelet_has_closed_form():
    # num_vanishing=2, smoothness=3: (1 - x^2)^4 times the degree-2 Gegenbauer polynomial of order 9/2
    psi = build_even_wavelet(2, 3)
    x = np.linspace(-1.0, 1.0, 81)
    center = float(psi(np.array([0.0]))[0])
    np.testing.assert_allclose(psi(x), -center * (1.0 - x**2) ** 4 * (11.0 * x**2 - 1.0), atol=1e-12)


@pytest.mark.parametrize("nv,s", HIGH_ORDER_PARAMS)
def test_high_order_wavelet_moments_match_quadrature(nv, s):
    psi = build_even_wavelet(nv, s)
    for m in range(0, nv + 2, 2):
        expected, _ = quad(lambda u: u**m * psi(np.array([u]))[0], -1.0, 1.0, epsabs=1e-13, limit=200)
        assert moment(psi, m) == pytest.approx(float(expected), abs=1e-9)


def test_from_monomials_preserves_values():
    coeffs = (0.3, -1.2, 0.5, 2.0, -0.7)
    poly = PiecewisePolynomial.from_monomials((0.5, 2.0), (coeffs,), -1)
    x = np.linspace(0.6, 1.9, 14)
    np.testing.assert_allclose(poly(x), np.polynomial.polynomial.polyval(x, coeffs), rtol=1e-12)
    assert poly.integral() == pytest.approx(quad(lambda u: np.polynomial.polynomial.polyval(u, coeffs), 0.5, 2.0)[0])


def test_piecewise_polynomial_dict_bases():
    h = hat()
    assert PiecewisePolynomial.from_dict(h.to_dict()) == h
    data = {"breakpoints": [-1.0, 0.0, 1.0], "segments": [[1.0, 1.0], [1.0, -1.0]], "basis": "monomial"}
    assert PiecewisePolynomial.from_dict(data) == h
    with pytest.raises(ParameterError, match="basis"):
        PiecewisePolynomial.from_dict({**data, "basis": "chebyshev"})


def test_derivative_of_hat():
    slope = hat().derivative()
    assert slope.smoothness == -1
    np.testing.assert_allclose(slope(np.array([-0.5, 0.5])), [1.0, -1.0])


def test_admissibility_constant_is_invariant_under_sign_flip():
    psi = build_even_wavelet(2, 3)
    c = admissibility_constant(psi).c_psi
    assert admissibility_constant(psi.scaled(-1.0)).c_psi == pytest.approx(c, rel=1e-12)


@pytest.mark.parametrize("factor", [0.5, 3.0])
def test_admissibility_constant_scales_quadratically(factor):
    psi = build_even_wavelet(2, 3)
    c = admissibility_constant(psi).c_psi
    assert admissibility_constant(psi.scaled(factor)).c_psi == pytest.approx(factor**2 * c, rel=1e-10)


def test_cross_correlation_survives_small_perturbations():
    psi = build_even_wavelet(2, 3)
    phi = build_reconstruction_wavelet(psi)
    scan = [cross_correlation(psi, phi, eps, 1.0 + eps) for eps in np.linspace(-0.1, 0.1, 21)]
    assert len(scan) == 21
    assert min(scan) > 1e-6
    # Cauchy-Schwarz: the dilated copy has norm sqrt(1 + eps)
    assert max(scan) <= math.sqrt(1.1) + 1e-12
    assert scan[10] == pytest.approx(1.0, rel=1e-12)
