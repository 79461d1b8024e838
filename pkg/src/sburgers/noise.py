"""Q-Wiener increments with trace-class covariance.

The covariance spectrum is q_k = c * k^(-rho) truncated at K modes.  The
eigenvectors e_k are either the sine basis itself or the sine basis mixed
by a fixed list of plane rotations, which exercises the case where the
covariance does not commute with the Laplacian.

Increment generation is counter-addressed (see rng): the underlying normal
vector for a (seed, sample, step) address has all K modes regardless of
the requested Galerkin dimension, so increments at different resolutions
are exact projections of one Brownian path.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fields import SpectralField
from .rng import NoiseStream, normal_matrix


@dataclass(frozen=True)
class CovarianceModel:
    """Spectrum q_k = c * k^(-rho), k <= K, with optional rotated eigenbasis.

    Rotations are (i, j, angle_degrees) triples mixing sine modes i and j;
    they are applied to the sine basis in list order.
    """

    rho: float = 2.0
    c: float = 1.0
    K: int = 256
    rotations: tuple = ()

    def __post_init__(self):
        if self.rho <= 1.0:
            raise ValueError(
                f"rho={self.rho} is not trace-class: need rho > 1 so that "
                "the eigenvalue tail sum converges"
            )
        if self.c < 0.0:
            raise ValueError(f"scale c must be nonnegative, got {self.c}")
        if self.K < 1:
            raise ValueError(f"truncation K must be positive, got {self.K}")
        for r in self.rotations:
            i, j, _ = r
            if not (1 <= i <= self.K and 1 <= j <= self.K and i != j):
                raise ValueError(f"rotation {r} does not address two distinct modes <= K")

    @property
    def eigenvalues(self):
        k = np.arange(1, self.K + 1, dtype=np.float64)
        return self.c * k ** (-self.rho)

    @property
    def is_diagonal(self):
        return len(self.rotations) == 0

    def eigenvector_matrix(self):
        """Columns are the eigenvectors e_k in sine coordinates."""
        r = np.eye(self.K)
        for i, j, deg in self.rotations:
            th = np.deg2rad(deg)
            ci, cj = r[i - 1].copy(), r[j - 1].copy()
            r[i - 1] = np.cos(th) * ci - np.sin(th) * cj
            r[j - 1] = np.sin(th) * ci + np.cos(th) * cj
        return r

    def check_orthogonal(self, tol=1e-12):
        r = self.eigenvector_matrix()
        err = float(np.max(np.abs(r.T @ r - np.eye(self.K))))
        if err > tol:
            raise AssertionError(f"eigenvector map deviates from orthogonal by {err}")
        return err


def trace(model: CovarianceModel) -> float:
    """Tr(Q) = sum of the truncated eigenvalues."""
    return float(np.sum(model.eigenvalues))


def operator_norm(model: CovarianceModel) -> float:
    """||Q|| = largest eigenvalue."""
    return float(np.max(model.eigenvalues)) if model.c > 0 else 0.0


def projected_trace(model: CovarianceModel, m: int) -> float:
    """Tr(P_m Q P_m) = sum_k q_k ||P_m e_k||^2."""
    q = model.eigenvalues
    if model.is_diagonal:
        return float(np.sum(q[: min(m, model.K)]))
    r = model.eigenvector_matrix()
    w = np.sum(r[: min(m, model.K), :] ** 2, axis=0)
    return float(q @ w)


def increment_matrix(model: CovarianceModel, dt, seed, samples, step, xi=None):
    """Sine-basis coefficients of P_K(Delta W) for a batch of samples.

    Returns an array of shape (len(samples), K).  Pass xi to inject a
    deterministic normal matrix instead of drawing from the stream.
    """
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if xi is None:
        xi = normal_matrix(seed, samples, step, model.K)
    amp = np.sqrt(model.eigenvalues * dt)
    scaled = xi * amp
    if model.is_diagonal:
        return scaled
    return scaled @ model.eigenvector_matrix().T


def sample_increment(model: CovarianceModel, dt, stream: NoiseStream, m: int,
                     xi=None) -> SpectralField:
    """P_m(Delta W) for one (seed, sample, step) address."""
    if xi is not None:
        xi = np.atleast_2d(xi)
    full = increment_matrix(model, dt, stream.seed, [stream.sample], stream.step, xi=xi)
    out = np.zeros(m)
    top = min(m, model.K)
    out[:top] = full[0, :top]
    return SpectralField(out)
