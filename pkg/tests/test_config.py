import json

import pytest
from hypothesis import given, strategies as st

from opttomo.config import (ConfigError, canonical_json, config_from_payload,
                            fingerprint, load_config, with_overrides)


def minimal_payload(**overrides):
    payload = {
        "kind": "rates",
        "n_cells": 32,
        "n_ordinates": 8,
        "epsilons": [0.4, 0.2, 0.1, 0.05],
    }
    payload.update(overrides)
    return payload


class TestSchema:
    def test_defaults_fill_in(self):
        cfg = config_from_payload(minimal_payload())
        assert cfg.geometry == "slab"
        assert cfg.noise_std == 0.05
        assert cfg.threads == 1
        assert cfg.data_model == "de"
        assert cfg.theta_true is None
        assert cfg.trace_specs == ({"kind": "linear", "axis": 0,
                                    "value": 1.0},)

    def test_unknown_field(self):
        with pytest.raises(ConfigError, match="epsilon_list: unknown"):
            config_from_payload(minimal_payload(epsilon_list=[0.4]))

    def test_missing_kind(self):
        payload = minimal_payload()
        del payload["kind"]
        with pytest.raises(ConfigError, match="kind: required"):
            config_from_payload(payload)

    def test_bad_kind(self):
        with pytest.raises(ConfigError, match="^kind:"):
            config_from_payload(minimal_payload(kind="simulate"))

    def test_epsilons_not_decreasing(self):
        with pytest.raises(ConfigError, match="strictly decreasing"):
            config_from_payload(
                minimal_payload(epsilons=[0.4, 0.4, 0.2, 0.1]))

    def test_epsilons_element_path(self):
        with pytest.raises(ConfigError, match=r"epsilons\[2\]"):
            config_from_payload(
                minimal_payload(epsilons=[0.4, 0.2, -0.1, 0.05]))

    def test_epsilons_must_be_list(self):
        with pytest.raises(ConfigError, match="must be a list"):
            config_from_payload(minimal_payload(epsilons=0.4))

    def test_odd_ordinate_count(self):
        with pytest.raises(ConfigError, match="n_ordinates"):
            config_from_payload(minimal_payload(n_ordinates=7))

    def test_detector_off_boundary(self):
        meas = {"detectors": [[0.5]]}
        with pytest.raises(ConfigError, match=r"measurement.detectors\[0\]"):
            config_from_payload(minimal_payload(measurement=meas))

    def test_detector_dimension(self):
        meas = {"detectors": [[0.0, 0.0]]}
        with pytest.raises(ConfigError, match="coordinate"):
            config_from_payload(minimal_payload(measurement=meas))

    def test_square_corner_detector(self):
        meas = {"detectors": [[0.0, 0.0]]}
        with pytest.raises(ConfigError, match="corner"):
            config_from_payload(minimal_payload(geometry="square",
                                                n_cells=8,
                                                measurement=meas))

    def test_square_edge_detector_ok(self):
        meas = {"detectors": [[0.5, 0.0]]}
        cfg = config_from_payload(minimal_payload(geometry="square",
                                                  n_cells=8,
                                                  measurement=meas))
        assert cfg.detector_positions == ((0.5, 0.0),)

    def test_bad_trace_kind(self):
        meas = {"traces": [{"kind": "sinusoid"}]}
        with pytest.raises(ConfigError,
                           match=r"measurement.traces\[0\].kind"):
            config_from_payload(minimal_payload(measurement=meas))

    def test_negative_noise(self):
        meas = {"noise_std": -0.1}
        with pytest.raises(ConfigError, match="measurement.noise_std"):
            config_from_payload(minimal_payload(measurement=meas))

    def test_bad_kl_direction(self):
        est = {"kl_direction": "both"}
        with pytest.raises(ConfigError, match="estimators.kl_direction"):
            config_from_payload(minimal_payload(estimators=est))

    def test_kinetic_data_needs_knudsen(self):
        with pytest.raises(ConfigError, match="data.knudsen"):
            config_from_payload(minimal_payload(data={"model": "rte"}))

    def test_theta_true_length(self):
        data = {"theta_true": [0.1, 0.2]}
        with pytest.raises(ConfigError, match="data.theta_true"):
            config_from_payload(minimal_payload(data=data))

    def test_prior_errors_prefixed(self):
        with pytest.raises(ConfigError, match="^prior:"):
            config_from_payload(minimal_payload(prior={"n_modes": 0}))

    def test_bad_pcn_beta(self):
        est = {"pcn_beta": 1.5}
        with pytest.raises(ConfigError, match="estimators.pcn_beta"):
            config_from_payload(minimal_payload(estimators=est))


class TestFingerprint:
    def test_execution_fields_excluded(self):
        a = config_from_payload(minimal_payload(threads=1, out_dir="x"))
        b = config_from_payload(minimal_payload(threads=4, out_dir="y"))
        assert fingerprint(a) == fingerprint(b)
        payload = json.loads(canonical_json(a))
        assert "threads" not in payload
        assert "out_dir" not in payload

    def test_seeds_included(self):
        a = config_from_payload(minimal_payload(seeds={"master": 1}))
        b = config_from_payload(minimal_payload(seeds={"master": 2}))
        assert fingerprint(a) != fingerprint(b)

    def test_roundtrip_preserves_fingerprint(self):
        cfg = config_from_payload(minimal_payload())
        again = config_from_payload(json.loads(canonical_json(cfg)))
        assert fingerprint(again) == fingerprint(cfg)

    def test_canonical_json_ends_with_newline(self):
        cfg = config_from_payload(minimal_payload())
        assert canonical_json(cfg).endswith("\n")

    @given(threads=st.integers(min_value=1, max_value=16),
           out_dir=st.text(min_size=1, max_size=20).filter(str.strip))
    def test_fingerprint_invariant_property(self, threads, out_dir):
        base = config_from_payload(minimal_payload())
        varied = config_from_payload(
            minimal_payload(threads=threads, out_dir=out_dir))
        assert fingerprint(varied) == fingerprint(base)


class TestOverridesAndIO:
    def test_overrides_applied(self):
        cfg = config_from_payload(minimal_payload())
        new = with_overrides(cfg, out_dir="elsewhere", master_seed=99,
                             threads=2)
        assert (new.out_dir, new.master_seed, new.threads) == \
            ("elsewhere", 99, 2)

    def test_no_overrides_is_identity(self):
        cfg = config_from_payload(minimal_payload())
        assert with_overrides(cfg) is cfg

    def test_bad_override_rejected(self):
        cfg = config_from_payload(minimal_payload())
        with pytest.raises(ConfigError, match="threads"):
            with_overrides(cfg, threads=0)

    def test_load_config(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(minimal_payload()))
        cfg = load_config(path)
        assert cfg.kind == "rates"
        assert cfg.epsilons == (0.4, 0.2, 0.1, 0.05)

    def test_load_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="cannot read"):
            load_config(tmp_path / "nope.json")

    def test_load_invalid_json(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{not json")
        with pytest.raises(ConfigError, match="not valid JSON"):
            load_config(path)

    def test_build_setup_resolves_detectors(self):
        from opttomo.grids import build_grid
        cfg = config_from_payload(minimal_payload())
        grid = build_grid(cfg.geometry, cfg.n_cells)
        setup = cfg.build_setup(grid)
        assert setup.n_detectors == 2
        assert setup.n_traces == 1
