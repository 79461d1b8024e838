"""Top-level study driver: runs a configured study and bundles the results."""

from __future__ import annotations

import re

import numpy as np

from .configio import ResultBundle, RunManifest, study_config_to_dict
from .experiments import (RateEstimate, StudyConfig, linear_case_study,
                          strong_error_study, weak_error_study)
from .fields import SpectralField
from .integrator import SchemeConfig, evolve
from .observables import (BoundParameters, MCSettings, derivative_bound_scan,
                          moment_statistics)
from .rng import NoiseStream


def _rate_dict(rate: RateEstimate):
    return {"slope": rate.slope, "intercept": rate.intercept,
            "slope_ci": list(rate.slope_ci) if rate.slope_ci else None,
            "residual": rate.residual, "note": rate.note}


def _count_failures(note):
    # study notes carry "..., N failures, ..."
    m = re.search(r"(\d+) failures", note)
    return int(m.group(1)) if m else 0


def _fd_consistency(cfg, m, eps1=1e-4, eps2=1e-3, n_samples=8):
    """Central-difference checks of the tangent and second variation.

    Returns relative errors of eta against (X(x+eps h) - X(x-eps h))/(2 eps)
    and of zeta against the corresponding second difference, on common noise.
    """
    from .integrator import evolve_batch

    h = np.zeros(m)
    h[0] = 1.0
    x0 = np.zeros(m)
    top = min(m, cfg.x0_array.size)
    x0[:top] = cfg.x0_array[:top]
    kw = dict(model=cfg.covariance, seed=cfg.seed,
              samples=np.arange(min(n_samples, cfg.samples)),
              steps=cfg.steps, T=cfg.T, scheme=cfg.scheme)
    base = evolve_batch(x0, [m], directions=[h, h], second_variation=True, **kw)
    out = {}
    for name, eps in (("first_variation", eps1), ("second_variation", eps2)):
        plus = evolve_batch(x0 + eps * h, [m], **kw)
        minus = evolve_batch(x0 - eps * h, [m], **kw)
        if name == "first_variation":
            fd = (plus["states"][m] - minus["states"][m]) / (2 * eps)
            ref = base["eta"][0]
        else:
            fd = (plus["states"][m] - 2 * base["states"][m]
                  + minus["states"][m]) / eps**2
            ref = base["zeta"]
        out[f"{name}_rel_error"] = float(
            np.linalg.norm(fd - ref) / np.linalg.norm(ref))
    return out


def run_study(kind: str, cfg: StudyConfig, sample_override=None) -> ResultBundle:
    """Run one study kind; deterministic given the config and master seed."""
    manifest = RunManifest.create(cfg, kind)
    bundle = ResultBundle(kind=kind, config=study_config_to_dict(cfg, kind),
                          manifest=manifest)
    if kind == "strong":
        rate = strong_error_study(cfg)
        bundle.tables["strong_error"] = rate.points
        bundle.rate = _rate_dict(rate)
        manifest.sample_counts[kind] = cfg.samples
        manifest.failure_counts[kind] = _count_failures(rate.note)
    elif kind == "weak":
        rate = weak_error_study(cfg)
        bundle.tables["weak_error"] = rate.points
        bundle.rate = _rate_dict(rate)
        manifest.sample_counts[kind] = cfg.samples
        manifest.failure_counts[kind] = _count_failures(rate.note)
    elif kind == "linear":
        res = linear_case_study(cfg)
        bundle.tables["mode_variance"] = res["mode_variance"]
        bundle.tables["tail_error_sq"] = res["tail_error_sq"]
        bundle.scalars["all_modes_within_3se"] = all(
            r["within_3se"] for r in res["mode_variance"])
        bundle.scalars["all_tails_within_3se"] = all(
            r["within_3se"] for r in res["tail_error_sq"])
        manifest.sample_counts[kind] = cfg.samples
        manifest.failure_counts[kind] = res["failures"]
    elif kind == "moments":
        mc = MCSettings(samples=cfg.samples, seed=cfg.seed, chunk=cfg.chunk)
        reports = moment_statistics(cfg.x0_array, list(cfg.m_grid),
                                    cfg.covariance, cfg.steps, cfg.T, mc,
                                    scheme=cfg.scheme)
        rows = []
        for m, stats in reports.items():
            for name, rep in stats.items():
                rows.append({"M": int(m), "statistic": name,
                             "estimate": rep.estimate,
                             "ci_lo": rep.estimate - rep.half_width,
                             "ci_hi": rep.estimate + rep.half_width,
                             "flagged": rep.flagged})
        bundle.tables["moments"] = rows
        manifest.sample_counts[kind] = cfg.samples
    elif kind == "derivative":
        m = max(cfg.m_grid)
        scfg = SchemeConfig(dt=cfg.dt, scheme=cfg.scheme, M=m, T=cfg.T)
        mc = MCSettings(samples=cfg.samples, seed=cfg.seed, chunk=cfg.chunk)
        modes = tuple(k for k in (1, 2, 4, 8) if k <= m)
        scan = derivative_bound_scan(cfg.functional, cfg.x0_array,
                                     BoundParameters(), modes, scfg,
                                     cfg.covariance, mc)
        rows = []
        for it, t in enumerate(scan.t_grid):
            for ik, k in enumerate(scan.modes):
                row = {"t": float(t), "mode": int(k),
                       "estimate": float(scan.du[it, ik]),
                       "half_width": float(scan.du_half[it, ik])}
                for a in scan.alphas:
                    row[f"ratio_alpha_{a}"] = float(scan.ratios[a][it, ik])
                rows.append(row)
        bundle.tables["derivative_scan"] = rows
        bundle.scalars["fd_consistency"] = _fd_consistency(cfg, m)
        bundle.scalars["max_ratio"] = {str(a): scan.max_ratio[a] for a in scan.alphas}
        bundle.scalars["trend"] = {
            str(a): {axis: {"rho": v[0], "p": v[1]}
                     for axis, v in scan.trend[a].items()}
            for a in scan.alphas}
        manifest.sample_counts[kind] = cfg.samples
    elif kind == "simulate":
        sample = 0 if sample_override is None else int(sample_override)
        scfg = SchemeConfig(dt=cfg.dt, scheme=cfg.scheme, M=max(cfg.m_grid), T=cfg.T)
        rec = evolve(SpectralField(cfg.x0_array), scfg, cfg.covariance,
                     NoiseStream(seed=cfg.seed, sample=sample),
                     frac_alphas=(0.25,), nonlinear=cfg.nonlinear)
        rows = []
        for i, t in enumerate(rec.times):
            rows.append({"t": float(t), "l2": float(rec.l2_norm[i]),
                         "grad": float(rec.grad_norm[i]),
                         "linf": float(rec.linf[i]),
                         "dissipation": float(rec.dissipation[i]),
                         "stochastic": float(rec.stochastic[i])})
        bundle.tables["trajectory"] = rows
        bundle.scalars["sup_l2"] = rec.sup_l2
        bundle.scalars["failed"] = rec.failed
        bundle.scalars["sample"] = sample
        manifest.sample_counts[kind] = 1
        manifest.failure_counts[kind] = int(rec.failed)
    else:
        raise ValueError(f"unknown study kind {kind!r}")
    return bundle
