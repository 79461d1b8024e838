"""The Burgers nonlinearity B[x1, x2] = grad(x1 x2) in sine-mode space.

Two routes compute the same projected coefficients:

* an exact O(M^2) mode-space convolution built from the product identity
  sin(a) sin(b) = (cos(a-b) - cos(a+b)) / 2, used as the reference and
  test oracle;
* an O(M log M) pseudo-spectral route (sine transform to a physical grid,
  pointwise product, cosine transform, spectral differentiation).

The grid holds n >= 2M intervals with n a power of two, so the product of
two degree-M sine expansions (cosine bandwidth 2M) is represented exactly
and the transform route is dealiased by construction, not approximately.
"""

from __future__ import annotations

import numpy as np
from scipy.fft import dct, dst

from .fields import SpectralField

_SQRT2 = np.sqrt(2.0)


def grid_intervals(m):
    """Smallest power-of-two interval count n with n >= 2m (exact products)."""
    n = 2
    while n < 2 * m:
        n *= 2
    return n


def sine_to_grid(a, n):
    """Evaluate sine series (rows of a) at interior nodes j/n, j = 1..n-1."""
    a = np.atleast_2d(a)
    b, m = a.shape
    if m > n - 1:
        raise ValueError(f"grid of {n} intervals cannot hold {m} modes")
    padded = np.zeros((b, n - 1))
    padded[:, :m] = a * _SQRT2
    return 0.5 * dst(padded, type=1, axis=-1)


def grid_to_gradient_coeffs(w, n, m_out):
    """Sine coefficients of grad(w) for grid values w vanishing at endpoints.

    w holds interior values (rows) of a function with cosine bandwidth <= n;
    the cosine coefficients are recovered by an exact DCT-I and
    differentiated term by term.
    """
    w = np.atleast_2d(w)
    b = w.shape[0]
    full = np.zeros((b, n + 1))
    full[:, 1:n] = w
    y = dct(full, type=1, axis=-1)
    c = y / n
    c[:, n] *= 0.5
    top = min(m_out, n)
    m = np.arange(1, top + 1, dtype=np.float64)
    out = np.zeros((b, m_out))
    out[:, :top] = -(m * np.pi / _SQRT2) * c[:, 1 : top + 1]
    return out


def gradient_product_batch(a1, a2, m_out):
    """Batched P_{m_out} grad(x1 x2) via the pseudo-spectral route."""
    a1 = np.atleast_2d(a1)
    a2 = np.atleast_2d(a2)
    n = grid_intervals(max(a1.shape[1], a2.shape[1]))
    v1 = sine_to_grid(a1, n)
    v2 = v1 if a2 is a1 else sine_to_grid(a2, n)
    return grid_to_gradient_coeffs(v1 * v2, n, m_out)


def gradient_square_batch(a, m_out):
    """Batched P_{m_out} grad(x^2), the drift nonlinearity."""
    return gradient_product_batch(a, a, m_out)


def _product_cosine_coeffs(a, b):
    """Cosine coefficients c_1..c_{Ma+Mb} of the product of two sine series."""
    cross = np.correlate(a, b, mode="full")  # offsets -(Mb-1) .. (Ma-1)
    mb = b.size
    top = a.size + b.size
    c = np.zeros(top + 1)
    for m in range(1, top + 1):
        s = 0.0
        i = mb - 1 + m  # sum over k - l = m
        if i < cross.size:
            s += cross[i]
        j = mb - 1 - m  # sum over l - k = m
        if j >= 0:
            s += cross[j]
        c[m] = s
    conv = np.convolve(a, b)  # index i holds sum over k + l = i + 2
    c[2 : top + 1] -= conv[: top - 1]
    return c


def bilinear_conv(x1: SpectralField, x2: SpectralField, m_out: int) -> SpectralField:
    """Reference P_{m_out} B[x1, x2] by exact mode-space convolution."""
    c = _product_cosine_coeffs(x1.coeffs, x2.coeffs)
    out = np.zeros(m_out)
    top = min(m_out, c.size - 1)
    m = np.arange(1, top + 1, dtype=np.float64)
    out[:top] = -(m * np.pi / _SQRT2) * c[1 : top + 1]
    return SpectralField(out)


def nonlinearity_conv(x: SpectralField, m_out: int) -> SpectralField:
    """Reference P_{m_out} B(x) = P_{m_out} grad(x^2), cost O(M^2)."""
    return bilinear_conv(x, x, m_out)


def bilinear_fast(x1: SpectralField, x2: SpectralField, m_out: int) -> SpectralField:
    """Transform-route P_{m_out} B[x1, x2]; matches bilinear_conv to ~1e-12."""
    m = max(x1.dimension, x2.dimension)
    a1 = np.zeros((1, m))
    a1[0, : x1.dimension] = x1.coeffs
    a2 = np.zeros((1, m))
    a2[0, : x2.dimension] = x2.coeffs
    return SpectralField(gradient_product_batch(a1, a2, m_out)[0])


def nonlinearity_fast(x: SpectralField, m_out: int) -> SpectralField:
    """Transform-route P_{m_out} B(x), cost O(M log M)."""
    return SpectralField(gradient_square_batch(x.coeffs[None, :], m_out)[0])
