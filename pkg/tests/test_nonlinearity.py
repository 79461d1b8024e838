"""Burgers nonlinearity: frozen coefficients, quadrature oracle, identities."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from sburgers.fields import SpectralField
from sburgers.nonlinearity import (bilinear_conv, bilinear_fast, grid_intervals,
                                   nonlinearity_conv, nonlinearity_fast,
                                   sine_to_grid)

coeff_arrays = arrays(np.float64, st.integers(1, 24),
                      elements=st.floats(-5, 5, allow_nan=False))


def quad_gradient_square(x, m_out, pts=1 << 14):
    """Projection of grad(x^2) computed by plain trapezoidal quadrature."""
    z = np.linspace(0.0, 1.0, pts + 1)
    k = np.arange(1, x.dimension + 1)
    vals = math.sqrt(2.0) * np.sin(np.pi * np.outer(z, k)) @ x.coeffs
    dvals = (math.sqrt(2.0) * np.pi * k
             * np.cos(np.pi * np.outer(z, k))) @ x.coeffs
    grad_sq = 2.0 * vals * dvals
    kk = np.arange(1, m_out + 1)
    basis = math.sqrt(2.0) * np.sin(np.pi * np.outer(z, kk))
    return np.trapezoid(grad_sq[:, None] * basis, z, axis=0)


class TestFrozenValues:
    def test_square_of_first_mode(self):
        # grad(h_1^2) = sqrt(2) pi h_2
        out = nonlinearity_conv(SpectralField.basis(1), 4).coeffs
        np.testing.assert_allclose(out, [0.0, 4.442882938158366, 0.0, 0.0],
                                   rtol=1e-15, atol=1e-15)

    def test_cross_term_first_two_modes(self):
        # grad(h_1 h_2) = -(pi / sqrt(2)) h_1 + (3 pi / sqrt(2)) h_3
        out = bilinear_conv(SpectralField.basis(1, 2), SpectralField.basis(2), 4).coeffs
        np.testing.assert_allclose(
            out, [-2.221441469079183, 0.0, 6.664324407237548, 0.0],
            rtol=1e-15, atol=1e-15)

    def test_fast_reproduces_frozen_values(self):
        out = nonlinearity_fast(SpectralField.basis(1), 4).coeffs
        np.testing.assert_allclose(out, [0.0, 4.442882938158366, 0.0, 0.0],
                                   rtol=1e-13, atol=1e-13)


class TestQuadratureOracle:
    def test_matches_random_field(self):
        rng = np.random.default_rng(17)
        x = SpectralField(rng.standard_normal(5))
        expected = quad_gradient_square(x, 12)
        np.testing.assert_allclose(nonlinearity_conv(x, 12).coeffs, expected,
                                   rtol=1e-6, atol=1e-6)


class TestGridIntervals:
    def test_power_of_two_at_least_2m(self):
        assert grid_intervals(1) == 2
        assert grid_intervals(2) == 4
        assert grid_intervals(3) == 8
        assert grid_intervals(8) == 16
        assert grid_intervals(9) == 32
        for m in range(1, 200):
            n = grid_intervals(m)
            assert n >= 2 * m and n & (n - 1) == 0

    def test_sine_to_grid_rejects_overfull(self):
        with pytest.raises(ValueError):
            sine_to_grid(np.zeros((1, 8)), 8)

    def test_sine_to_grid_matches_direct_evaluation(self):
        rng = np.random.default_rng(2)
        a = rng.standard_normal((3, 6))
        n = 16
        z = np.arange(1, n) / n
        k = np.arange(1, 7)
        direct = math.sqrt(2.0) * np.sin(np.pi * np.outer(z, k)) @ a.T
        np.testing.assert_allclose(sine_to_grid(a, n), direct.T, atol=1e-13)


class TestIdentities:
    @given(coeff_arrays)
    @settings(max_examples=60, deadline=None)
    def test_fast_matches_conv(self, c):
        x = SpectralField(c)
        a = nonlinearity_conv(x, x.dimension).coeffs
        b = nonlinearity_fast(x, x.dimension).coeffs
        scale = max(1.0, float(np.sum(c**2)))
        np.testing.assert_allclose(a, b, atol=1e-11 * scale)

    @given(coeff_arrays)
    @settings(max_examples=60, deadline=None)
    def test_projected_square_is_orthogonal_to_field(self, c):
        x = SpectralField(c)
        val = abs(x.inner(nonlinearity_fast(x, x.dimension)))
        assert val <= 1e-11 * max(1.0, x.norm() ** 3)

    @given(coeff_arrays, coeff_arrays)
    @settings(max_examples=60, deadline=None)
    def test_antisymmetry_identity(self, c1, c2):
        m = max(c1.size, c2.size)
        x1, x2 = SpectralField(c1), SpectralField(c2)
        lhs = x1.inner(bilinear_fast(x1, x2, m))
        rhs = -0.5 * x2.inner(nonlinearity_fast(x1, m))
        scale = max(1.0, x1.norm() ** 2 * x2.norm())
        assert abs(lhs - rhs) <= 1e-11 * scale

    @given(coeff_arrays, coeff_arrays)
    @settings(max_examples=40, deadline=None)
    def test_bilinear_is_symmetric(self, c1, c2):
        m = max(c1.size, c2.size)
        x1, x2 = SpectralField(c1), SpectralField(c2)
        a = bilinear_conv(x1, x2, m).coeffs
        b = bilinear_conv(x2, x1, m).coeffs
        scale = max(1.0, x1.norm() * x2.norm())
        np.testing.assert_allclose(a, b, atol=1e-11 * scale)

    def test_polarization(self):
        # B(x1 + x2) = B(x1) + B(x2) + 2 B[x1, x2]
        rng = np.random.default_rng(4)
        x1 = SpectralField(rng.standard_normal(7))
        x2 = SpectralField(rng.standard_normal(7))
        lhs = nonlinearity_conv(x1 + x2, 14).coeffs
        rhs = (nonlinearity_conv(x1, 14) + nonlinearity_conv(x2, 14)
               + 2.0 * bilinear_conv(x1, x2, 14)).coeffs
        np.testing.assert_allclose(lhs, rhs, atol=1e-12)
