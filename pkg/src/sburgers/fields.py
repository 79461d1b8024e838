"""Sine eigenbasis of the Dirichlet Laplacian on (0, 1).

Fields are stored as coefficients of the orthonormal basis
h_k(z) = sqrt(2) sin(k pi z), so the L2 norm is the Euclidean norm of the
coefficient vector and fractional operator powers act diagonally with
symbol (pi k)^(2 alpha).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def mode_symbols(m, alpha=1.0):
    """Diagonal symbol (pi k)^(2 alpha) for modes k = 1..m."""
    k = np.arange(1, m + 1, dtype=np.float64)
    return (np.pi * k) ** (2.0 * alpha)


@dataclass(frozen=True)
class SpectralField:
    """A function in H_M given by its sine-basis coefficients a_1..a_M."""

    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=np.float64)
        if c.ndim != 1 or c.size < 1:
            raise ValueError("coeffs must be a nonempty 1-D array")
        if not np.all(np.isfinite(c)):
            raise ValueError("coeffs must be finite")
        object.__setattr__(self, "coeffs", c)

    @property
    def dimension(self):
        return self.coeffs.size

    @classmethod
    def basis(cls, k, m=None):
        """The k-th basis field h_k, embedded in dimension m (default k)."""
        m = k if m is None else m
        c = np.zeros(m)
        c[k - 1] = 1.0
        return cls(c)

    @classmethod
    def zero(cls, m):
        return cls(np.zeros(m))

    def __add__(self, other):
        a, b = _align(self.coeffs, other.coeffs)
        return SpectralField(a + b)

    def __sub__(self, other):
        a, b = _align(self.coeffs, other.coeffs)
        return SpectralField(a - b)

    def __mul__(self, scalar):
        return SpectralField(self.coeffs * float(scalar))

    __rmul__ = __mul__

    def inner(self, other):
        a, b = _align(self.coeffs, other.coeffs)
        return float(a @ b)

    def norm(self, alpha=0.0):
        return fractional_norm(self, alpha)


def _align(a, b):
    m = max(a.size, b.size)
    if a.size < m:
        a = np.concatenate([a, np.zeros(m - a.size)])
    if b.size < m:
        b = np.concatenate([b, np.zeros(m - b.size)])
    return a, b


def fractional_power(x: SpectralField, alpha: float) -> SpectralField:
    """Apply (-A)^alpha: multiply mode k by (pi k)^(2 alpha)."""
    if alpha == 0.0:
        return x
    return SpectralField(x.coeffs * mode_symbols(x.dimension, alpha))


def fractional_norm(x: SpectralField, alpha: float = 0.0) -> float:
    """The norm ||(-A)^alpha x||, computed spectrally via Parseval."""
    c = x.coeffs
    if alpha != 0.0:
        c = c * mode_symbols(x.dimension, alpha)
    return float(np.linalg.norm(c))


def semigroup_factors(m, t):
    """Modewise heat-semigroup multipliers exp(-(pi k)^2 t)."""
    return np.exp(-mode_symbols(m, 1.0) * t)


def semigroup(x: SpectralField, t: float) -> SpectralField:
    """Apply e^{tA}: multiply mode k by exp(-(pi k)^2 t)."""
    if t < 0:
        raise ValueError(f"semigroup time must be nonnegative, got {t}")
    if t == 0.0:
        return x
    return SpectralField(x.coeffs * semigroup_factors(x.dimension, t))


def project(x: SpectralField, n: int) -> SpectralField:
    """Orthogonal projection P_n: truncate the coefficient vector to n modes."""
    if n <= 0:
        raise ValueError(f"projection dimension must be positive, got {n}")
    if n >= x.dimension:
        return x
    return SpectralField(x.coeffs[:n])


def eval_on_grid(x: SpectralField, n: int) -> np.ndarray:
    """Values of x at the uniform nodes z_j = j/n, j = 0..n (endpoints zero)."""
    if n < 2:
        raise ValueError(f"grid must have n >= 2 intervals, got {n}")
    z = np.arange(n + 1) / n
    k = np.arange(1, x.dimension + 1)
    vals = np.sqrt(2.0) * np.sin(np.pi * np.outer(z, k)) @ x.coeffs
    vals[0] = 0.0
    vals[-1] = 0.0
    return vals


def grid_sup_norm(x: SpectralField, points_per_mode: int = 8) -> float:
    """L-infinity norm estimated on a grid of points_per_mode * M nodes."""
    return float(np.max(np.abs(eval_on_grid(x, points_per_mode * x.dimension))))
