"""Numerical invariant battery: spectral identities, coupling, energy law.

Each check returns (name, passed, detail).  The battery backs the
`invariants` CLI subcommand and is reused by the test suite; tolerances
are fixed here, not configurable, so a green run always means the same
thing.
"""

from __future__ import annotations

import math

import numpy as np

from .fields import (SpectralField, eval_on_grid, fractional_norm, project,
                     semigroup)
from .integrator import evolve_batch
from .noise import CovarianceModel, increment_matrix, projected_trace, sample_increment
from .nonlinearity import bilinear_fast, nonlinearity_conv, nonlinearity_fast
from .rng import NoiseStream


def _random_fields(rng, count, m_choices=(4, 8, 16, 32, 64, 128)):
    for _ in range(count):
        m = int(rng.choice(m_choices))
        yield SpectralField(rng.standard_normal(m))


def check_parseval(rng, count=1000):
    worst = 0.0
    for x in _random_fields(rng, count):
        n2 = fractional_norm(x, 0.0) ** 2
        s2 = float(np.sum(x.coeffs**2))
        worst = max(worst, abs(n2 - s2) / s2)
    return ("parseval", worst <= 1e-14, f"max rel dev {worst:.2e} (tol 1e-14)")


def check_nonlinearity_orthogonal(rng, count=1000):
    worst = 0.0
    for x in _random_fields(rng, count):
        val = abs(x.inner(nonlinearity_fast(x, x.dimension)))
        worst = max(worst, val / fractional_norm(x) ** 3)
    return ("bilinear_orthogonality", worst <= 1e-12,
            f"max |<B(x),x>|/||x||^3 = {worst:.2e} (tol 1e-12)")


def check_antisymmetry(rng, count=500):
    worst = 0.0
    for _ in range(count):
        m = int(rng.choice((4, 16, 64)))
        x1 = SpectralField(rng.standard_normal(m))
        x2 = SpectralField(rng.standard_normal(m))
        lhs = x1.inner(bilinear_fast(x1, x2, m))
        rhs = -0.5 * x2.inner(nonlinearity_fast(x1, m))
        scale = fractional_norm(x1) ** 2 * fractional_norm(x2)
        worst = max(worst, abs(lhs - rhs) / scale)
    return ("bilinear_antisymmetry", worst <= 1e-12,
            f"max scaled dev {worst:.2e} (tol 1e-12)")


def check_fast_vs_conv(rng, count=200):
    worst = 0.0
    for x in _random_fields(rng, count):
        a = nonlinearity_conv(x, x.dimension).coeffs
        b = nonlinearity_fast(x, x.dimension).coeffs
        scale = max(1.0, fractional_norm(x) ** 2)
        worst = max(worst, float(np.max(np.abs(a - b))) / scale)
    return ("fast_matches_conv", worst <= 1e-12,
            f"max scaled coeff dev {worst:.2e} (tol 1e-12)")


def check_poincare(rng, count=500):
    worst = 0.0
    for x in _random_fields(rng, count):
        worst = max(worst, fractional_norm(x, 0.0)
                    / (math.sqrt(0.5) * fractional_norm(x, 0.5)))
    return ("poincare", worst <= 1.0 + 1e-12, f"max ratio {worst:.6f} (bound 1)")


def check_smoothing(rng, count=200):
    worst = 0.0
    for x in _random_fields(rng, count):
        t = float(rng.uniform(1e-4, 1.0))
        alpha = float(rng.uniform(0.05, 1.5))
        bound = math.exp(alpha * (math.log(alpha) - 1.0)) * t ** (-alpha)
        val = fractional_norm(semigroup(x, t), alpha) / fractional_norm(x, 0.0)
        worst = max(worst, val / bound)
    return ("semigroup_smoothing", worst <= 1.0 + 1e-12,
            f"max value/bound {worst:.6f}")


def check_semigroup_difference(rng, count=200):
    worst = 0.0
    for x in _random_fields(rng, count):
        t = float(rng.uniform(1e-4, 1.0))
        beta = float(rng.uniform(0.0, 1.0))
        diff = SpectralField(semigroup(x, t).coeffs - x.coeffs)
        val = fractional_norm(diff, -beta) / (t**beta * fractional_norm(x, 0.0))
        worst = max(worst, val)
    return ("semigroup_difference", worst <= 1.0 + 1e-12,
            f"max value/bound {worst:.6f}")


def check_inverse_inequality(rng, count=1000):
    worst = 0.0
    for x in _random_fields(rng, count):
        n = x.dimension
        beta = float(rng.uniform(0.01, 0.49))
        lhs = fractional_norm(x, 0.5)
        rhs = (math.pi * n) ** (2 * beta) * fractional_norm(x, 0.5 - beta)
        worst = max(worst, lhs / rhs)
    return ("inverse_inequality", worst <= 1.0 + 1e-12,
            f"max lhs/rhs {worst:.6f}")


def check_projection_tail(rng, count=1000):
    worst = 0.0
    for x in _random_fields(rng, count):
        m = x.dimension
        if m < 4:
            continue
        n = int(rng.integers(1, m // 2))
        alpha = float(rng.uniform(0.05, 1.0))
        pn = np.zeros(m)
        pn[:n] = x.coeffs[:n]
        tail = SpectralField(x.coeffs - pn)
        lhs = fractional_norm(tail, -alpha)
        rhs = (math.pi * n) ** (-2 * alpha) * fractional_norm(x, 0.0)
        worst = max(worst, lhs / rhs)
    return ("projection_tail", worst <= 1.0 + 1e-12, f"max lhs/rhs {worst:.6f}")


def check_gagliardo_nirenberg(rng, count=50):
    # the interpolation constant must stay uniformly bounded in the resolution
    consts = {}
    for m in (8, 32, 128):
        c = 0.0
        for _ in range(count):
            x = SpectralField(rng.standard_normal(m))
            grid = eval_on_grid(x, 16 * m)
            l4 = float(np.trapezoid(grid**4, dx=1.0 / (16 * m))) ** 0.25
            l2 = fractional_norm(x, 0.0)
            w12 = math.sqrt(l2**2 + fractional_norm(x, 0.5) ** 2)
            c = max(c, l4 / (l2**0.75 * w12**0.25))
        consts[m] = c
    bounded = max(consts.values()) <= 2.0
    return ("gagliardo_nirenberg", bounded,
            f"fitted constants {', '.join(f'M={m}: {c:.3f}' for m, c in consts.items())}"
            f" (uniform bound 2)")


def check_coupling(seed=2024):
    model = CovarianceModel(K=64)
    s = NoiseStream(seed=seed, sample=5, step=17)
    full = sample_increment(model, 0.01, s, 64)
    coarse = sample_increment(model, 0.01, s, 16)
    ok = np.array_equal(project(full, 16).coeffs, coarse.coeffs)
    return ("cross_resolution_coupling", ok, "P_16 of M=64 increment equals M=16 increment")


def check_reproducibility(seed=99):
    model = CovarianceModel(K=32)
    a = increment_matrix(model, 0.01, seed, [3, 1, 4], 7)
    b = increment_matrix(model, 0.01, seed, [4, 1, 3], 7)
    ok = (np.array_equal(a[0], b[2]) and np.array_equal(a[1], b[1])
          and np.array_equal(a[2], b[0]))
    return ("stream_reproducibility", ok,
            "draws depend only on (seed, sample, step), not batch order")


def check_rotation_orthogonality():
    model = CovarianceModel(K=16, rotations=((1, 2, 30.0), (3, 5, 30.0)))
    err = model.check_orthogonal()
    return ("rotation_orthogonality", err <= 1e-12, f"max dev {err:.2e} (tol 1e-12)")


def check_energy_identity(seed=7, m=32, samples=100, T=0.5):
    model = CovarianceModel(K=m)
    x0 = np.array([0.5, 0.25])
    rms = []
    for steps in (512, 1024):
        out = evolve_batch(x0, [m], model, seed, np.arange(samples), steps, T)
        xn = out["states"][m]
        res = (np.sum(xn**2, axis=1) + 2 * out["dissipation"][m]
               - float(np.sum(x0**2)) - 2 * out["stochastic"][m]
               - T * projected_trace(model, m))
        rms.append(float(np.sqrt(np.mean(res**2))))
    ratio = rms[0] / rms[1]
    return ("energy_identity", ratio >= 1.3,
            f"residual RMS {rms[0]:.4f} -> {rms[1]:.4f} on dt halving "
            f"(ratio {ratio:.2f}, need >= 1.3)")


ALL_CHECKS = [
    check_parseval,
    check_nonlinearity_orthogonal,
    check_antisymmetry,
    check_fast_vs_conv,
    check_poincare,
    check_smoothing,
    check_semigroup_difference,
    check_inverse_inequality,
    check_projection_tail,
    check_gagliardo_nirenberg,
]


def run_all(seed=12345):
    """Run the full battery; returns a list of (name, passed, detail)."""
    rng = np.random.default_rng(seed)
    results = [c(rng) for c in ALL_CHECKS]
    results.append(check_coupling())
    results.append(check_reproducibility())
    results.append(check_rotation_orthogonality())
    results.append(check_energy_identity())
    return results
