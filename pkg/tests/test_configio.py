"""Config validation, hashing, result bundles, and file emission."""

import json
import math
import os

import numpy as np
import pytest

from sburgers.configio import (CONFIG_DEFAULTS, ConfigError, ResultBundle,
                               RunManifest, config_from_dict, config_hash,
                               emit, load_results, parse_config,
                               study_config_to_dict)


def default_raw(**overrides):
    raw = json.loads(json.dumps(CONFIG_DEFAULTS))
    raw["seed"] = 42
    raw.update(overrides)
    return raw


class TestConfigParsing:
    def test_defaults_with_seed_parse(self):
        kind, cfg = config_from_dict(default_raw())
        assert kind == "strong"
        assert cfg.seed == 42
        assert cfg.m_grid == (8, 16, 32, 64)
        assert cfg.covariance.rho == 2.0

    def test_seed_is_mandatory(self):
        raw = json.loads(json.dumps(CONFIG_DEFAULTS))
        with pytest.raises(ConfigError, match="seed"):
            config_from_dict(raw)

    def test_unknown_field_rejected(self):
        with pytest.raises(ConfigError, match="unknown"):
            config_from_dict(default_raw(extra_knob=1))

    def test_non_trace_class_covariance_rejected(self):
        raw = default_raw()
        raw["covariance"]["rho"] = 0.9
        with pytest.raises(ConfigError, match="trace class"):
            config_from_dict(raw)

    def test_m_ref_coverage_checks(self):
        with pytest.raises(ConfigError, match="m_ref"):
            config_from_dict(default_raw(m_ref=64))
        raw = default_raw(m_ref=512)
        with pytest.raises(ConfigError, match="K"):
            config_from_dict(raw)

    def test_bad_kind(self):
        with pytest.raises(ConfigError, match="kind"):
            config_from_dict(default_raw(kind="magic"))

    def test_power_law_initial_data(self):
        raw = default_raw()
        raw["x0"] = {"kind": "power", "amplitude": 2.0, "exponent": 0.75,
                     "modes": 4}
        _, cfg = config_from_dict(raw)
        np.testing.assert_allclose(
            cfg.x0_array, 2.0 * np.arange(1, 5, dtype=float) ** -0.75, rtol=1e-15)

    def test_gaussian_functional(self):
        raw = default_raw()
        raw["functional"] = {"kind": "gaussian-exp", "scale": 2.0}
        _, cfg = config_from_dict(raw)
        assert cfg.functional.kind == "gaussian-exp"
        assert cfg.functional.s == 2.0

    def test_parse_config_file(self, tmp_path):
        p = tmp_path / "cfg.json"
        p.write_text(json.dumps(default_raw()))
        kind, cfg = parse_config(p)
        assert kind == "strong" and cfg.seed == 42

    def test_parse_rejects_invalid_json(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text("{not json")
        with pytest.raises(ConfigError, match="JSON"):
            parse_config(p)


class TestConfigHash:
    def test_key_order_invariant(self):
        a = {"x": 1, "y": [1, 2]}
        b = {"y": [1, 2], "x": 1}
        assert config_hash(a) == config_hash(b)

    def test_value_sensitivity(self):
        assert config_hash({"x": 1}) != config_hash({"x": 2})

    def test_round_trip_through_study_config(self):
        _, cfg = config_from_dict(default_raw())
        d = study_config_to_dict(cfg, "strong")
        _, cfg2 = config_from_dict(d)
        assert config_hash(study_config_to_dict(cfg2, "strong")) == config_hash(d)


class TestResultBundle:
    def make_bundle(self, ts="2024-01-01T00:00:00+00:00"):
        man = RunManifest(config_hash="abc", seed=1, timestamp=ts,
                          sample_counts={"strong": 10})
        return ResultBundle(kind="strong", config={"seed": 1}, manifest=man,
                            tables={"strong_error": [
                                {"M": 8, "error": 0.1 + 1e-17, "ci_lo": 0.0,
                                 "ci_hi": 0.2, "resolved": True}]},
                            rate={"slope": -1.5, "note": ""},
                            scalars={"x": 2.0})

    def test_dict_round_trip(self):
        b = self.make_bundle()
        b2 = ResultBundle.from_dict(json.loads(json.dumps(b.to_dict())))
        assert b.same_results(b2)
        assert b2.manifest.sample_counts == {"strong": 10}

    def test_same_results_ignores_timestamp_only(self):
        a = self.make_bundle()
        b = self.make_bundle(ts="2025-06-06T12:00:00+00:00")
        assert a.same_results(b)
        b.scalars["x"] = 2.0000000000000004
        assert not a.same_results(b)

    def test_emit_and_load_preserve_doubles(self, tmp_path):
        b = self.make_bundle()
        files = emit(b, tmp_path)
        names = {os.path.basename(f) for f in files}
        assert {"results.json", "strong_error.csv", "strong_error.dat"} <= names
        b2 = load_results(tmp_path / "results.json")
        assert b.same_results(b2)
        # csv numbers use shortest round-trip formatting
        csv = (tmp_path / "strong_error.csv").read_text().splitlines()
        assert csv[0] == "M,error,ci_lo,ci_hi,resolved"
        assert float(csv[1].split(",")[1]) == 0.1 + 1e-17

    def test_emit_refuses_empty_bundle(self, tmp_path):
        man = RunManifest(config_hash="abc", seed=1)
        empty = ResultBundle(kind="strong", config={}, manifest=man)
        with pytest.raises(ValueError, match="empty"):
            emit(empty, tmp_path)

    def test_manifest_create_hashes_config(self):
        _, cfg = config_from_dict(default_raw())
        man = RunManifest.create(cfg, "strong")
        assert man.config_hash == config_hash(study_config_to_dict(cfg, "strong"))
        assert man.seed == 42
        assert man.timestamp
