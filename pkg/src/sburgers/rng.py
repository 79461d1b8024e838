"""Counter-based Gaussian generation for reproducible parallel Monte Carlo.

Every draw is addressed by (seed, sample, step, block), so any worker can
produce any increment without shared state and the result never depends on
evaluation order or worker count.  The core is a vectorized Philox4x32-10
block cipher; uniforms are mapped to normals with the inverse CDF so the
number of counter blocks consumed per address is fixed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = np.uint64(0x9E3779B9)
_W1 = np.uint64(0xBB67AE85)
_MASK32 = np.uint64(0xFFFFFFFF)
_SHIFT32 = np.uint64(32)


def philox4x32(c0, c1, c2, c3, k0, k1, rounds=10):
    """Apply the Philox4x32 bijection to uint64-held 32-bit counter words.

    Inputs are arrays (or scalars) holding values < 2**32.  Returns the four
    output words as uint64 arrays with values < 2**32.
    """
    c0 = np.asarray(c0, dtype=np.uint64)
    c1 = np.asarray(c1, dtype=np.uint64)
    c2 = np.asarray(c2, dtype=np.uint64)
    c3 = np.asarray(c3, dtype=np.uint64)
    k0 = np.uint64(k0)
    k1 = np.uint64(k1)
    for _ in range(rounds):
        p0 = _M0 * c0
        p1 = _M1 * c2
        n0 = (p1 >> _SHIFT32) ^ c1 ^ k0
        n1 = p1 & _MASK32
        n2 = (p0 >> _SHIFT32) ^ c3 ^ k1
        n3 = p0 & _MASK32
        c0, c1, c2, c3 = n0, n1, n2, n3
        k0 = (k0 + _W0) & _MASK32
        k1 = (k1 + _W1) & _MASK32
    return c0, c1, c2, c3


def _uniforms(blocks0, blocks1):
    """Combine two 32-bit words into a 53-bit uniform in the open (0, 1)."""
    hi = (blocks0 >> np.uint64(5)).astype(np.float64)  # 27 bits
    lo = (blocks1 >> np.uint64(6)).astype(np.float64)  # 26 bits
    return (hi * 67108864.0 + lo + 0.5) * (2.0 ** -53)


def normal_matrix(seed, samples, step, count, tag=0):
    """Standard normals for a batch of samples at one time step.

    Parameters
    ----------
    seed : int
        64-bit master seed (key of the cipher).
    samples : array_like of int
        Sample indices; one row of output per entry.
    step : int
        Time-step index.
    count : int
        Normals per sample.
    tag : int
        Domain separator so independent sub-streams (e.g. initial data
        randomization) never collide with increment draws.

    Returns an array of shape (len(samples), count).
    """
    samples = np.asarray(samples, dtype=np.uint64)
    if samples.ndim == 0:
        samples = samples[None]
    nb = (count + 1) // 2
    b = samples.shape[0]
    c0 = np.tile(np.arange(nb, dtype=np.uint64), b)
    c1 = np.uint64(step & 0xFFFFFFFF)
    c2 = np.repeat(samples & _MASK32, nb)
    c3 = np.uint64(tag & 0xFFFFFFFF) ^ ((np.uint64(step) >> _SHIFT32) & _MASK32)
    k0 = np.uint64(seed) & _MASK32
    k1 = (np.uint64(seed) >> _SHIFT32) & _MASK32
    o0, o1, o2, o3 = philox4x32(c0, c1, c2, c3, k0, k1)
    u = np.empty((b * nb, 2))
    u[:, 0] = _uniforms(o0, o1)
    u[:, 1] = _uniforms(o2, o3)
    z = ndtri(u).reshape(b, 2 * nb)
    return np.ascontiguousarray(z[:, :count])


@dataclass(frozen=True)
class NoiseStream:
    """Address of one sample's Gaussian stream: (seed, sample, step)."""

    seed: int
    sample: int = 0
    step: int = 0

    def normals(self, count, tag=0):
        return normal_matrix(self.seed, [self.sample], self.step, count, tag=tag)[0]

    def at_step(self, step):
        return NoiseStream(self.seed, self.sample, step)

    def for_sample(self, sample):
        return NoiseStream(self.seed, sample, self.step)
