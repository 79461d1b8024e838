"""Config parsing, run manifests, and machine-readable result emission.

Configs are single JSON documents (diffable, hash-stable after key
canonicalization).  Every emitted result embeds a RunManifest carrying the
config hash and master seed, which is sufficient to reproduce the bundle
bit for bit.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone

import numpy as np

from .experiments import StudyConfig
from .noise import CovarianceModel
from .observables import TestFunctional

ARTIFACT_VERSION = "0.1.0"

CONFIG_DEFAULTS = {
    "kind": "strong",
    "m_grid": [8, 16, 32, 64],
    "m_ref": 256,
    "T": 0.5,
    "steps": 16384,
    "samples": 1000,
    "covariance": {"rho": 2.0, "c": 1.0, "K": 256, "rotations": []},
    "x0": {"kind": "literal", "coeffs": [0.5, 0.25]},
    "functional": {"kind": "cosine", "direction": [1.0]},
    "scheme": "exponential-euler",
    "nonlinear": True,
    "chunk": 1000,
    "threads": 1,
}

STUDY_KINDS = ("simulate", "strong", "weak", "linear", "moments", "derivative")


class ConfigError(ValueError):
    """A config field is missing, has the wrong type, or breaks an invariant."""

    def __init__(self, key, message):
        self.key = key
        super().__init__(f"config key '{key}': {message}")


def _require(d, key, typ, path):
    if key not in d:
        raise ConfigError(f"{path}{key}", "missing required field")
    v = d[key]
    if typ is float and isinstance(v, int) and not isinstance(v, bool):
        v = float(v)
    if not isinstance(v, typ) or isinstance(v, bool) and typ is not bool:
        raise ConfigError(f"{path}{key}", f"expected {typ.__name__}, got {type(v).__name__}")
    return v


def _x0_coeffs(spec, path="x0."):
    kind = spec.get("kind", "literal")
    if kind == "literal":
        coeffs = _require(spec, "coeffs", list, path)
        return tuple(float(c) for c in coeffs)
    if kind == "power":
        # low-regularity preset: a_k = amplitude * k^(-exponent)
        amp = _require(spec, "amplitude", float, path)
        ex = _require(spec, "exponent", float, path)
        m = int(spec.get("modes", 64))
        k = np.arange(1, m + 1, dtype=np.float64)
        return tuple(amp * k ** (-ex))
    raise ConfigError(f"{path}kind", f"unknown initial-data kind {kind!r}")


def _functional(spec, path="functional."):
    kind = _require(spec, "kind", str, path)
    if kind == "cosine":
        v = _require(spec, "direction", list, path)
        return TestFunctional("cosine", v=np.asarray(v, dtype=np.float64))
    if kind == "gaussian-exp":
        s = _require(spec, "scale", float, path)
        return TestFunctional("gaussian-exp", s=s)
    raise ConfigError(f"{path}kind", f"unknown functional kind {kind!r}")


def _covariance(spec, path="covariance."):
    rho = _require(spec, "rho", float, path)
    if rho <= 1.0:
        raise ConfigError(f"{path}rho",
                          f"rho={rho} gives a non-summable eigenvalue tail; the "
                          "covariance must be trace class (sum of q_k finite), "
                          "which requires rho > 1")
    c = _require(spec, "c", float, path)
    K = _require(spec, "K", int, path)
    rotations = tuple(
        (int(r[0]), int(r[1]), float(r[2])) for r in spec.get("rotations", []))
    try:
        return CovarianceModel(rho=rho, c=c, K=K, rotations=rotations)
    except ValueError as e:
        raise ConfigError(path.rstrip("."), str(e)) from e


def config_from_dict(raw) -> tuple:
    """Validate a raw config mapping; returns (kind, StudyConfig)."""
    merged = json.loads(json.dumps(CONFIG_DEFAULTS))
    for k, v in raw.items():
        if k not in merged and k != "seed":
            raise ConfigError(k, "unknown field")
        merged[k] = v
    if "seed" not in raw:
        raise ConfigError("seed", "missing required field (wall-clock seeding "
                                  "is not allowed; runs must be reproducible)")
    kind = merged["kind"]
    if kind not in STUDY_KINDS:
        raise ConfigError("kind", f"must be one of {STUDY_KINDS}")
    m_grid = tuple(_require(merged, "m_grid", list, ""))
    prev = 0
    for m in m_grid:
        if not isinstance(m, int) or m <= prev or (m & (m - 1)):
            raise ConfigError("m_grid",
                              f"must be a strictly increasing list of powers of two, got {list(m_grid)}")
        prev = m
    m_ref = _require(merged, "m_ref", int, "")
    if m_ref < 4 * max(m_grid):
        raise ConfigError("m_ref", f"must be at least 4 * max(m_grid) = {4 * max(m_grid)}")
    cov = _covariance(_require(merged, "covariance", dict, ""))
    if m_ref > cov.K:
        raise ConfigError("covariance.K", f"noise truncation K={cov.K} must cover m_ref={m_ref}")
    try:
        cfg = StudyConfig(
            m_grid=m_grid,
            m_ref=m_ref,
            T=_require(merged, "T", float, ""),
            steps=_require(merged, "steps", int, ""),
            samples=_require(merged, "samples", int, ""),
            seed=int(_require(merged, "seed", int, "")),
            covariance=cov,
            x0=_x0_coeffs(_require(merged, "x0", dict, "")),
            functional=_functional(_require(merged, "functional", dict, "")),
            scheme=_require(merged, "scheme", str, ""),
            nonlinear=_require(merged, "nonlinear", bool, ""),
            chunk=_require(merged, "chunk", int, ""),
            threads=_require(merged, "threads", int, ""),
        )
    except ValueError as e:
        raise ConfigError("<study>", str(e)) from e
    return kind, cfg


def parse_config(path):
    """Load and validate a JSON study config file; returns (kind, StudyConfig)."""
    with open(path) as f:
        try:
            raw = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError("<file>", f"not valid JSON: {e}") from e
    if not isinstance(raw, dict):
        raise ConfigError("<file>", "top level must be a JSON object")
    return config_from_dict(raw)


def config_hash(raw_or_cfg) -> str:
    """SHA-256 of the canonical (sorted-key) JSON encoding."""
    if isinstance(raw_or_cfg, StudyConfig):
        raw_or_cfg = study_config_to_dict(raw_or_cfg)
    blob = json.dumps(raw_or_cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def study_config_to_dict(cfg: StudyConfig, kind="strong") -> dict:
    f = cfg.functional
    fun = ({"kind": "cosine", "direction": [float(x) for x in f.v]}
           if f.kind == "cosine" else {"kind": "gaussian-exp", "scale": f.s})
    return {
        "kind": kind,
        "m_grid": [int(m) for m in cfg.m_grid],
        "m_ref": int(cfg.m_ref),
        "T": cfg.T,
        "steps": int(cfg.steps),
        "samples": int(cfg.samples),
        "seed": int(cfg.seed),
        "covariance": {"rho": cfg.covariance.rho, "c": cfg.covariance.c,
                       "K": int(cfg.covariance.K),
                       "rotations": [list(r) for r in cfg.covariance.rotations]},
        "x0": {"kind": "literal", "coeffs": [float(c) for c in cfg.x0]},
        "functional": fun,
        "scheme": cfg.scheme,
        "nonlinear": cfg.nonlinear,
        "chunk": int(cfg.chunk),
        # threads is an execution knob, not part of the study identity:
        # results are bit-identical for any worker count
    }


@dataclass
class RunManifest:
    """Everything needed to reproduce a result bundle bit-exactly."""

    config_hash: str
    seed: int
    version: str = ARTIFACT_VERSION
    timestamp: str = ""
    sample_counts: dict = field(default_factory=dict)
    failure_counts: dict = field(default_factory=dict)

    @classmethod
    def create(cls, cfg: StudyConfig, kind):
        return cls(config_hash=config_hash(study_config_to_dict(cfg, kind)),
                   seed=int(cfg.seed),
                   timestamp=datetime.now(timezone.utc).isoformat())


@dataclass
class ResultBundle:
    """Study output: tables of rows, fitted rates, and scalar diagnostics."""

    kind: str
    config: dict
    manifest: RunManifest
    tables: dict = field(default_factory=dict)   # name -> list of row dicts
    rate: dict | None = None
    scalars: dict = field(default_factory=dict)

    def to_dict(self):
        return {"kind": self.kind, "config": self.config,
                "manifest": asdict(self.manifest), "tables": self.tables,
                "rate": self.rate, "scalars": self.scalars}

    @classmethod
    def from_dict(cls, d):
        return cls(kind=d["kind"], config=d["config"],
                   manifest=RunManifest(**d["manifest"]), tables=d["tables"],
                   rate=d["rate"], scalars=d["scalars"])

    def same_results(self, other) -> bool:
        """Bitwise equality of all numeric content (timestamp excluded)."""
        a, b = self.to_dict(), other.to_dict()
        a["manifest"]["timestamp"] = b["manifest"]["timestamp"] = ""
        return a == b


def _atomic_write(path, text):
    d = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".emit-")
    try:
        with os.fdopen(fd, "w") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(v):
    # repr gives the shortest string that round-trips the double exactly
    if isinstance(v, float):
        return repr(v)
    return str(v)


def emit(bundle: ResultBundle, outdir, formats=("json", "csv")):
    """Write results.json, per-table CSVs, and two-column .dat plot files.

    Numeric output uses shortest round-trip formatting, so re-parsing the
    files reproduces the doubles exactly.  Files are written atomically.
    """
    if not bundle.tables and bundle.rate is None and not bundle.scalars:
        raise ValueError("refusing to emit an empty result bundle")
    os.makedirs(outdir, exist_ok=True)
    written = []
    if "json" in formats:
        p = os.path.join(outdir, "results.json")
        _atomic_write(p, json.dumps(bundle.to_dict(), indent=2, sort_keys=True))
        written.append(p)
    if "csv" in formats:
        for name, rows in bundle.tables.items():
            if not rows:
                continue
            cols = list(rows[0].keys())
            lines = [",".join(cols)]
            for r in rows:
                lines.append(",".join(_fmt(r[c]) for c in cols))
            p = os.path.join(outdir, f"{name}.csv")
            _atomic_write(p, "\n".join(lines) + "\n")
            written.append(p)
            xcol = cols[0]
            ycol = "error" if "error" in cols else ("estimate" if "estimate" in cols else None)
            if ycol:
                dat = "\n".join(f"{_fmt(r[xcol])} {_fmt(r[ycol])}" for r in rows)
                p = os.path.join(outdir, f"{name}.dat")
                _atomic_write(p, dat + "\n")
                written.append(p)
    return written


def load_results(path) -> ResultBundle:
    with open(path) as f:
        return ResultBundle.from_dict(json.load(f))
