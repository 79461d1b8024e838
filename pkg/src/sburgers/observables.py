"""Test functionals, Monte Carlo derivative estimators, and moment statistics.

The expectation u(t, x) = E[phi(X^x(t))] and its directional derivatives
are estimated pathwise: the first derivative couples Dphi with the tangent
process, the second adds the Hessian pairing of two tangents and the
gradient pairing with the second variation, all along one common path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import spearmanr

from .fields import SpectralField, fractional_norm, mode_symbols
from .integrator import SchemeConfig, evolve_batch
from .noise import CovarianceModel, operator_norm, trace

_Z95 = 1.959963984540054


@dataclass(frozen=True)
class TestFunctional:
    """Bounded C^2 functional: cos<x, v> or exp(-||x||^2 / s^2)."""

    kind: str = "cosine"
    v: np.ndarray | None = None
    s: float = 1.0

    def __post_init__(self):
        if self.kind not in ("cosine", "gaussian-exp"):
            raise ValueError(f"unknown functional kind {self.kind!r}")
        if self.kind == "cosine":
            if self.v is None:
                raise ValueError("cosine functional needs a direction v")
            object.__setattr__(self, "v", np.asarray(self.v, dtype=np.float64))
        elif self.s <= 0:
            raise ValueError(f"length scale must be positive, got {self.s}")

    def _vpad(self, m):
        v = np.zeros(m)
        top = min(m, self.v.size)
        v[:top] = self.v[:top]
        return v

    def value_rows(self, x):
        """phi on rows of x, shape (B, M) -> (B,)."""
        if self.kind == "cosine":
            return np.cos(x @ self._vpad(x.shape[-1]))
        return np.exp(-np.sum(x**2, axis=-1) / self.s**2)

    def grad_dot_rows(self, x, h):
        """Dphi(x).(h) rowwise."""
        if self.kind == "cosine":
            v = self._vpad(x.shape[-1])
            return -np.sin(x @ v) * (h @ v)
        phi = self.value_rows(x)
        return -(2.0 / self.s**2) * phi * np.sum(x * h, axis=-1)

    def hess_dot_rows(self, x, g, h):
        """D^2 phi(x).(g, h) rowwise."""
        if self.kind == "cosine":
            v = self._vpad(x.shape[-1])
            return -np.cos(x @ v) * (g @ v) * (h @ v)
        phi = self.value_rows(x)
        xg = np.sum(x * g, axis=-1)
        xh = np.sum(x * h, axis=-1)
        gh = np.sum(g * h, axis=-1)
        return phi * ((4.0 / self.s**4) * xg * xh - (2.0 / self.s**2) * gh)


def phi_eval(f: TestFunctional, x: SpectralField) -> float:
    return float(f.value_rows(x.coeffs[None, :])[0])


def phi_grad(f: TestFunctional, x: SpectralField) -> SpectralField:
    m = x.dimension
    if f.kind == "cosine":
        v = f._vpad(m)
        return SpectralField(-np.sin(float(x.coeffs @ v)) * v)
    phi = phi_eval(f, x)
    return SpectralField(-(2.0 / f.s**2) * phi * x.coeffs)


def phi_hess_vec(f: TestFunctional, x: SpectralField, h: SpectralField) -> SpectralField:
    m = x.dimension
    hc = np.zeros(m)
    hc[: min(m, h.dimension)] = h.coeffs[:m]
    if f.kind == "cosine":
        v = f._vpad(m)
        return SpectralField(-np.cos(float(x.coeffs @ v)) * float(v @ hc) * v)
    phi = phi_eval(f, x)
    xh = float(x.coeffs @ hc)
    return SpectralField(phi * ((4.0 / f.s**4) * xh * x.coeffs - (2.0 / f.s**2) * hc))


@dataclass(frozen=True)
class BoundParameters:
    """Auxiliary exponents for the derivative-bound scan."""

    alpha: float = 0.75
    beta: float = 0.0
    delta: float = 0.05
    epsilon: float = 0.01

    def __post_init__(self):
        if not (0 <= self.alpha < 1 and 0 <= self.beta < 1):
            raise ValueError("alpha and beta must lie in [0, 1)")
        if self.alpha + self.beta >= 1:
            raise ValueError("need alpha + beta < 1")
        if self.delta <= 0 or self.epsilon <= 0:
            raise ValueError("delta and epsilon must be positive")


@dataclass
class MomentReport:
    """A Monte Carlo point estimate with a CLT confidence half-width."""

    name: str
    n: int
    estimate: float
    half_width: float
    confidence: float = 0.95
    flagged: bool = False

    @classmethod
    def from_samples(cls, name, values, flag_heavy_tail=False):
        values = np.asarray(values, dtype=np.float64)
        n = values.size
        est = float(np.mean(values)) if n else math.nan
        half = float(_Z95 * np.std(values, ddof=1) / np.sqrt(n)) if n > 1 else math.inf
        flagged = flag_heavy_tail and half > abs(est)
        return cls(name=name, n=n, estimate=est, half_width=half, flagged=flagged)


@dataclass(frozen=True)
class MCSettings:
    """How to run a Monte Carlo average: sample count, master seed, chunking."""

    samples: int
    seed: int
    chunk: int = 1000

    def chunks(self):
        lo = 0
        while lo < self.samples:
            hi = min(lo + self.chunk, self.samples)
            yield lo, hi
            lo = hi


def _terminal_run(x0, cfg, model, mc, directions=(), second_variation=False,
                  nonlinear=True):
    """Evolve all samples to T; returns terminal states, eta, zeta, failures."""
    xs, etas, zetas, fails = [], [], [], []
    for lo, hi in mc.chunks():
        out = evolve_batch(
            np.asarray(x0, dtype=np.float64), [cfg.M], model, mc.seed,
            np.arange(lo, hi), cfg.steps, cfg.T, scheme=cfg.scheme,
            nonlinear=nonlinear, directions=directions,
            second_variation=second_variation,
        )
        xs.append(out["states"][cfg.M])
        fails.append(out["failed"])
        if out["eta"] is not None:
            etas.append(out["eta"])
        if out["zeta"] is not None:
            zetas.append(out["zeta"])
    x = np.concatenate(xs)
    ok = ~np.concatenate(fails)
    eta = np.concatenate(etas, axis=1) if etas else None
    zeta = np.concatenate(zetas) if zetas else None
    return x, eta, zeta, ok


def weak_value(f: TestFunctional, x0, cfg: SchemeConfig, model: CovarianceModel,
               mc: MCSettings, nonlinear=True) -> MomentReport:
    """Monte Carlo estimate of E[phi(X^x0(T))]."""
    if cfg.T == 0:
        x = np.asarray(x0, dtype=np.float64)[None, :]
        return MomentReport("weak_value", mc.samples, float(f.value_rows(x)[0]), 0.0)
    x, _, _, ok = _terminal_run(x0, cfg, model, mc, nonlinear=nonlinear)
    rep = MomentReport.from_samples("weak_value", f.value_rows(x[ok]))
    rep.n = int(np.sum(ok))
    return rep


def du_estimate(f: TestFunctional, x0, h, cfg: SchemeConfig, model: CovarianceModel,
                mc: MCSettings, nonlinear=True) -> MomentReport:
    """Monte Carlo estimate of Du(T, x0).(h) = E[Dphi(X(T)).(eta^h(T))]."""
    h = np.asarray(h, dtype=np.float64)
    if not np.any(h):
        raise ValueError("direction h must be nonzero")
    if cfg.T == 0:
        x = np.asarray(x0, dtype=np.float64)[None, :]
        hp = np.zeros_like(x)
        hp[0, : min(h.size, x.shape[1])] = h[: x.shape[1]]
        return MomentReport("du", mc.samples, float(f.grad_dot_rows(x, hp)[0]), 0.0)
    x, eta, _, ok = _terminal_run(x0, cfg, model, mc, directions=[h],
                                  nonlinear=nonlinear)
    rep = MomentReport.from_samples("du", f.grad_dot_rows(x[ok], eta[0][ok]))
    rep.n = int(np.sum(ok))
    return rep


def d2u_estimate(f: TestFunctional, x0, g, h, cfg: SchemeConfig,
                 model: CovarianceModel, mc: MCSettings, nonlinear=True) -> MomentReport:
    """Monte Carlo estimate of D^2 u(T, x0).(g, h)."""
    g = np.asarray(g, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    if not (np.any(g) and np.any(h)):
        raise ValueError("directions g and h must be nonzero")
    if cfg.T == 0:
        x = np.asarray(x0, dtype=np.float64)[None, :]
        gp = np.zeros_like(x)
        gp[0, : min(g.size, x.shape[1])] = g[: x.shape[1]]
        hp = np.zeros_like(x)
        hp[0, : min(h.size, x.shape[1])] = h[: x.shape[1]]
        return MomentReport("d2u", mc.samples, float(f.hess_dot_rows(x, gp, hp)[0]), 0.0)
    x, eta, zeta, ok = _terminal_run(x0, cfg, model, mc, directions=[g, h],
                                     second_variation=True, nonlinear=nonlinear)
    vals = (f.hess_dot_rows(x[ok], eta[0][ok], eta[1][ok])
            + f.grad_dot_rows(x[ok], zeta[ok]))
    rep = MomentReport.from_samples("d2u", vals)
    rep.n = int(np.sum(ok))
    return rep


@dataclass
class ScanReport:
    """Normalized first-derivative ratios over a (t, mode) grid per alpha."""

    t_grid: np.ndarray
    modes: np.ndarray
    alphas: tuple
    du: np.ndarray            # (T, K) estimates
    du_half: np.ndarray       # (T, K) CI half-widths
    ratios: dict              # alpha -> (T, K)
    max_ratio: dict           # alpha -> float
    trend: dict               # alpha -> {"inv_t": (rho, p), "mode": (rho, p)}


def derivative_bound_scan(f: TestFunctional, x0, params: BoundParameters,
                          modes, cfg: SchemeConfig, model: CovarianceModel,
                          mc: MCSettings, alphas=(0.0, 0.5, 0.75),
                          t_divisors=(1, 2, 4, 8)) -> ScanReport:
    """Probe the first-derivative bound over t in {T/d} and directions h_k.

    For each (t, k) the normalized ratio is
        |Du(t, x0).(h_k)| / (t^-a * exp(eps ||x0||^2)
                             * (1 + ||(-A)^(1/4+delta) x0||^6) * (pi k)^-2a),
    so a ratio that stays flat (no growth as t decreases or k grows) is the
    empirical restatement of the derivative bound; the max over the scan
    stands in for the non-explicit constant.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    modes = np.asarray(modes, dtype=int)
    rec = max(t_divisors)
    if cfg.steps % rec:
        raise ValueError(f"steps={cfg.steps} must be divisible by {rec}")
    dirs = []
    for k in modes:
        h = np.zeros(cfg.M)
        h[k - 1] = 1.0
        dirs.append(h)
    sums = np.zeros((len(t_divisors), len(modes)))
    sq = np.zeros_like(sums)
    count = 0
    for lo, hi in mc.chunks():
        out = evolve_batch(
            x0, [cfg.M], model, mc.seed, np.arange(lo, hi), cfg.steps, cfg.T,
            scheme=cfg.scheme, directions=dirs, record_count=rec,
            record_levels=[cfg.M], record_eta=True,
        )
        ok = ~out["failed"]
        count += int(np.sum(ok))
        for it, d in enumerate(t_divisors):
            r = rec // d
            xs = out["mesh_states"][cfg.M][ok, r, :]
            for ik in range(len(modes)):
                vals = f.grad_dot_rows(xs, out["eta_mesh"][ik][ok, r, :])
                sums[it, ik] += np.sum(vals)
                sq[it, ik] += np.sum(vals**2)
    du = sums / count
    var = np.maximum(sq / count - du**2, 0.0) * count / max(count - 1, 1)
    half = _Z95 * np.sqrt(var / count)
    t_grid = cfg.T / np.asarray(t_divisors, dtype=np.float64)

    x0f = SpectralField(x0)
    psi = math.exp(params.epsilon * fractional_norm(x0f, 0.0) ** 2) * (
        1.0 + fractional_norm(x0f, 0.25 + params.delta) ** 6
    )
    ratios, max_ratio, trend = {}, {}, {}
    inv_t = np.repeat(1.0 / t_grid, len(modes))
    kflat = np.tile(modes.astype(float), len(t_grid))
    for a in alphas:
        denom = psi * np.outer(t_grid ** (-a), (np.pi * modes.astype(float)) ** (-2 * a))
        r = np.abs(du) / denom
        ratios[a] = r
        max_ratio[a] = float(np.max(r))
        rt = spearmanr(inv_t, r.ravel(), alternative="greater")
        rk = spearmanr(kflat, r.ravel(), alternative="greater")
        trend[a] = {"inv_t": (float(rt.statistic), float(rt.pvalue)),
                    "mode": (float(rk.statistic), float(rk.pvalue))}
    return ScanReport(t_grid=t_grid, modes=modes, alphas=tuple(alphas),
                      du=du, du_half=half, ratios=ratios, max_ratio=max_ratio,
                      trend=trend)


def moment_statistics(x0, m_list, model: CovarianceModel, steps, T, mc: MCSettings,
                      scheme="exponential-euler", p_powers=(4, 8), beta=None,
                      linf_p=4, holder_lambda=0.05, holder_gamma=0.15,
                      record_count=64):
    """Empirical moment and regularity statistics across Galerkin levels.

    Returns {M: {name: MomentReport}}.  All levels share one Brownian path
    per sample, so differences across M isolate the spatial truncation.
    The exponential-moment default beta = 0.2 / Tr(Q) sits safely inside
    the admissible range beta < 1 / (2 ||Q||).
    """
    x0 = np.asarray(x0, dtype=np.float64)
    if beta is None:
        beta = 0.2 / trace(model)
    if beta >= 0.5 / operator_norm(model):
        raise ValueError(f"beta={beta} violates beta < 1/(2||Q||)")
    m_list = list(m_list)
    acc = {m: {"sup_sq": [], "diss": [], "linf": [], "holder": []} for m in m_list}
    for lo, hi in mc.chunks():
        out = evolve_batch(x0, m_list, model, mc.seed, np.arange(lo, hi),
                           steps, T, scheme=scheme, record_count=record_count,
                           record_levels=m_list)
        ok = ~out["failed"]
        dtm = T / record_count
        for m in m_list:
            acc[m]["sup_sq"].append(out["sup_sq"][m][ok])
            acc[m]["diss"].append(out["dissipation"][m][ok])
            mesh = out["mesh_states"][m][ok]
            ngrid = 8 * m
            basis = np.sqrt(2.0) * np.sin(
                np.pi * np.outer(np.arange(ngrid + 1) / ngrid, np.arange(1, m + 1)))
            acc[m]["linf"].append(
                np.max(np.abs(np.einsum("brm,gm->brg", mesh, basis)), axis=(1, 2)))
            w = mesh * mode_symbols(m, holder_lambda)
            best = np.zeros(w.shape[0])
            for d in range(1, record_count + 1):
                diff = np.linalg.norm(w[:, d:, :] - w[:, :-d, :], axis=-1)
                q = np.max(diff, axis=-1) / (d * dtm) ** holder_gamma
                best = np.maximum(best, q)
            acc[m]["holder"].append(best)
    reports = {}
    for m in m_list:
        sup_sq = np.concatenate(acc[m]["sup_sq"])
        diss = np.concatenate(acc[m]["diss"])
        linf = np.concatenate(acc[m]["linf"])
        holder = np.concatenate(acc[m]["holder"])
        r = {}
        for p in p_powers:
            r[f"sup_l2_p{p}"] = MomentReport.from_samples(
                f"sup_l2_p{p}", sup_sq ** (p / 2.0))
        r["exp_moment"] = MomentReport.from_samples(
            "exp_moment", np.exp(beta * (sup_sq + diss)), flag_heavy_tail=True)
        r[f"sup_linf_p{linf_p}"] = MomentReport.from_samples(
            f"sup_linf_p{linf_p}", linf ** linf_p)
        r["holder_quotient"] = MomentReport.from_samples("holder_quotient", holder)
        reports[m] = r
    return reports
