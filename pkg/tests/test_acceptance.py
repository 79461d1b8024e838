"""End-to-end acceptance battery.

Each test covers one release criterion at its stated tolerance and emits a
single PASS/FAIL line.  The battery includes the full-scale convergence
studies, so a complete run takes on the order of an hour on one core.
"""

import dataclasses
import math

import numpy as np
import pytest

from sburgers.checks import check_energy_identity
from sburgers.configio import config_from_dict, emit, load_results
from sburgers.experiments import (StudyConfig, linear_case_study,
                                  strong_error_study, weak_error_study)
from sburgers.fields import SpectralField, fractional_norm, project
from sburgers.integrator import SchemeConfig, evolve_batch
from sburgers.noise import CovarianceModel
from sburgers.nonlinearity import (bilinear_fast, nonlinearity_conv,
                                   nonlinearity_fast)
from sburgers.observables import (BoundParameters, MCSettings, TestFunctional,
                                  derivative_bound_scan, moment_statistics)
from sburgers.runner import run_study

SEED = 0
Z95 = 1.959963984540054


def report(num, name, ok, detail):
    status = "PASS" if ok else "FAIL"
    print(f"acceptance {num} ({name}): {status} -- {detail}")
    assert ok, f"criterion {num} ({name}): {detail}"


def reference_config(**overrides):
    """The reference benchmark: x0 = 0.5 h_1 + 0.25 h_2, T = 0.5, q_k = k^-2,
    dt = T / 2^14, M in {8,...,64} against M_ref = 256."""
    kw = dict(seed=SEED, covariance=CovarianceModel(K=256))
    kw.update(overrides)
    return StudyConfig(**kw)


class TestCriterion1StrongRate:
    def test_strong_rate_slope(self):
        rate = strong_error_study(reference_config(samples=1000))
        detail = (f"fitted slope {rate.slope:.3f} (target [-1.2, -0.8]), "
                  f"ci {rate.slope_ci}, "
                  f"errors {[round(p['error'], 6) for p in rate.points]}")
        report(1, "strong rate", -1.2 <= rate.slope <= -0.8, detail)


class TestCriterion2WeakRate:
    def test_weak_rate_slope(self):
        rate = weak_error_study(reference_config(samples=10000))
        resolved = [p for p in rate.points if p["resolved"]]
        if rate.slope is None:
            report(2, "weak rate", False,
                   f"{rate.note}; points {rate.points}")
        detail = (f"fitted slope {rate.slope:.3f} (target <= -1.6) over "
                  f"{len(resolved)} resolved points, ci {rate.slope_ci}")
        report(2, "weak rate", rate.slope <= -1.6, detail)


class TestCriterion3LinearOracle:
    def test_linear_case_matches_closed_forms(self):
        # fine dt so the scheme's per-step variance deficit, O(lambda_k dt),
        # stays far below the Monte Carlo standard error on every checked mode
        cfg = reference_config(m_grid=(2, 4, 8), m_ref=32, steps=2 ** 15,
                               samples=1000, covariance=CovarianceModel(K=32))
        res = linear_case_study(cfg)
        bad_modes = [r for r in res["mode_variance"] if not r["within_3se"]]
        bad_tails = [r for r in res["tail_error_sq"] if not r["within_3se"]]
        detail = (f"{len(res['mode_variance'])} mode variances and "
                  f"{len(res['tail_error_sq'])} tail errors vs closed form; "
                  f"outside 3 SE: {bad_modes + bad_tails or 'none'}")
        report(3, "linear-case oracle", not bad_modes and not bad_tails, detail)


class TestCriterion4TangentConsistency:
    M, STEPS, T = 16, 1024, 0.5

    def _runs(self, eps, h):
        model = CovarianceModel(K=self.M)
        x0 = np.array([0.5, 0.25])
        kw = dict(model=model, seed=SEED, samples=np.arange(8),
                  steps=self.STEPS, T=self.T)
        base = evolve_batch(np.concatenate([x0, np.zeros(self.M - 2)]), [self.M],
                            directions=[h, h], second_variation=True, **kw)
        x0p = np.concatenate([x0, np.zeros(self.M - 2)]) + eps * h
        x0m = np.concatenate([x0, np.zeros(self.M - 2)]) - eps * h
        plus = evolve_batch(x0p, [self.M], **kw)
        minus = evolve_batch(x0m, [self.M], **kw)
        return base, plus, minus

    def test_first_variation(self):
        h = np.zeros(self.M)
        h[0] = 1.0
        eps = 1e-4
        base, plus, minus = self._runs(eps, h)
        fd = (plus["states"][self.M] - minus["states"][self.M]) / (2 * eps)
        eta = base["eta"][0]
        rel = float(np.linalg.norm(fd - eta) / np.linalg.norm(eta))
        report(4, "tangent consistency",
               rel <= 1e-3, f"first variation vs FD (eps=1e-4, M=16): "
                            f"relative error {rel:.3e} (tol 1e-3)")

    def test_second_variation(self):
        h = np.zeros(self.M)
        h[0] = 1.0
        eps = 1e-3
        base, plus, minus = self._runs(eps, h)
        fd = (plus["states"][self.M] - 2 * base["states"][self.M]
              + minus["states"][self.M]) / eps**2
        zeta = base["zeta"]
        rel = float(np.linalg.norm(fd - zeta) / np.linalg.norm(zeta))
        report(4, "tangent consistency",
               rel <= 5e-2, f"second variation vs FD (eps=1e-3): "
                            f"relative error {rel:.3e} (tol 5e-2)")


class TestCriterion5AlgebraicInvariants:
    N_FIELDS = 1000

    def _fields(self):
        rng = np.random.default_rng(20240)
        for _ in range(self.N_FIELDS):
            m = int(rng.choice((4, 8, 16, 32, 64)))
            yield SpectralField(rng.standard_normal(m)), rng

    def test_machine_precision_identities(self):
        worst = {"orth": 0.0, "antisym": 0.0, "fast": 0.0, "parseval": 0.0,
                 "tail": 0.0, "inverse": 0.0}
        for x, rng in self._fields():
            m = x.dimension
            y = SpectralField(rng.standard_normal(m))
            bx = nonlinearity_fast(x, m)
            worst["orth"] = max(worst["orth"],
                                abs(x.inner(bx)) / x.norm() ** 3)
            lhs = x.inner(bilinear_fast(x, y, m))
            rhs = -0.5 * y.inner(bx)
            worst["antisym"] = max(worst["antisym"],
                                   abs(lhs - rhs) / (x.norm() ** 2 * y.norm()))
            conv = nonlinearity_conv(x, m).coeffs
            worst["fast"] = max(worst["fast"],
                                float(np.max(np.abs(conv - bx.coeffs)))
                                / max(1.0, float(np.max(np.abs(conv)))))
            s2 = float(np.sum(x.coeffs**2))
            worst["parseval"] = max(worst["parseval"],
                                    abs(x.norm() ** 2 - s2) / s2)
            n = max(1, m // 4)
            tail = SpectralField(np.concatenate([np.zeros(n), x.coeffs[n:]]))
            worst["tail"] = max(worst["tail"],
                                fractional_norm(tail, -0.5)
                                / ((math.pi * n) ** -1 * x.norm()))
            worst["inverse"] = max(worst["inverse"],
                                   fractional_norm(x, 0.5)
                                   / ((math.pi * m) * x.norm()))
        ok = (worst["orth"] <= 1e-12 and worst["antisym"] <= 1e-12
              and worst["fast"] <= 1e-12 and worst["parseval"] <= 1e-14
              and worst["tail"] <= 1.0 + 1e-12 and worst["inverse"] <= 1.0 + 1e-12)
        detail = (f"{self.N_FIELDS} random fields: <B(x),x> {worst['orth']:.1e} "
                  f"(<=1e-12), antisymmetry {worst['antisym']:.1e} (<=1e-12), "
                  f"fast-vs-conv {worst['fast']:.1e} (<=1e-12), Parseval "
                  f"{worst['parseval']:.1e} (<=1e-14), tail/inverse bounds "
                  f"{worst['tail']:.3f}/{worst['inverse']:.3f} (<=1)")
        report(5, "algebraic invariants", ok, detail)


class TestCriterion6EnergyIdentity:
    def test_residual_shrinks_with_dt(self):
        name, ok, detail = check_energy_identity(seed=7, m=32, samples=100, T=0.5)
        report(6, "energy identity", ok, detail)


class TestCriterion7MomentUniformity:
    def test_moments_uniform_across_levels(self):
        model = CovarianceModel(K=64)
        mc = MCSettings(samples=1000, seed=SEED)
        reps = moment_statistics(np.array([0.5, 0.25]), [8, 16, 32, 64], model,
                                 2048, 0.5, mc)
        msgs, ok = [], True
        for stat in ("sup_l2_p4", "exp_moment"):
            rows = [(m, reps[m][stat].estimate, reps[m][stat].half_width / Z95)
                    for m in (8, 16, 32, 64)]
            worst = max(abs(a[1] - b[1]) / math.hypot(a[2], b[2])
                        for i, a in enumerate(rows) for b in rows[i + 1:])
            ok &= worst < 3.0
            msgs.append(f"{stat}: worst pairwise spread {worst:.2f} combined SE")
        report(7, "moment uniformity", ok, "; ".join(msgs) + " (need < 3)")


class TestCriterion8DerivativeBoundScan:
    def test_no_monotone_growth_trend(self):
        f = TestFunctional("cosine", v=np.array([1.0]))
        cfg = SchemeConfig(dt=0.5 / 4096, M=16, T=0.5)
        scan = derivative_bound_scan(f, np.array([0.5, 0.25]), BoundParameters(),
                                     (1, 2, 4, 8), cfg, CovarianceModel(K=16),
                                     MCSettings(samples=2000, seed=SEED))
        msgs, ok = [], True
        for a in scan.alphas:
            for axis in ("inv_t", "mode"):
                rho, p = scan.trend[a][axis]
                good = rho <= 0 or p >= 0.05
                ok &= good
                msgs.append(f"alpha={a} {axis}: rho={rho:+.2f} p={p:.3f}"
                            f"{'' if good else ' (growth)'}")
        report(8, "derivative-bound scan", ok, "; ".join(msgs))


class TestCriterion9Determinism:
    def test_rerun_from_manifest_is_bit_identical(self, tmp_path):
        cfg = StudyConfig(m_grid=(4, 8), m_ref=32, steps=256, samples=40,
                          seed=7, covariance=CovarianceModel(K=32), chunk=10)
        bundle = run_study("strong", cfg)
        emit(bundle, tmp_path)
        loaded = load_results(tmp_path / "results.json")

        # rebuild the study from the emitted config alone, with more workers
        kind, cfg2 = config_from_dict(loaded.config)
        cfg2 = dataclasses.replace(cfg2, threads=2)
        rerun = run_study(kind, cfg2)

        same = loaded.same_results(rerun)
        hashes = (bundle.manifest.config_hash == loaded.manifest.config_hash
                  == rerun.manifest.config_hash)
        report(9, "determinism", same and hashes,
               f"re-run from emitted config with threads=2: bit-identical="
               f"{same}, config hash stable={hashes}")
