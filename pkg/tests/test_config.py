"""Config parsing: strict keys, defaults, index mapping, overrides."""

from __future__ import annotations

import json

import pytest

from couplemc.config import ObservableSpec, load_config, parse_config
from couplemc.engine import ConfigurationError
from couplemc.observables import PairObservable, SiteObservable

MINIMAL = {
    "model": "ssep",
    "params": {"n": 5},
    "t_final": 100.0,
    "seed": 7,
    "observables": [{"kind": "site", "x": 0.5}],
}


def parse(**overrides):
    doc = {**MINIMAL, **overrides}
    return parse_config(json.dumps(doc))


class TestDefaults:
    def test_minimal_config_applies_all_defaults(self):
        cfg = parse()
        assert cfg.alpha == 1.0
        assert cfg.batches == 32
        assert cfg.burn_in_fraction == 0.1
        assert cfg.estimators == "both"
        assert cfg.replicas == 1
        assert cfg.use_mean_holding_times is False
        assert cfg.acf_spacing is None
        assert cfg.sweep is None
        assert cfg.output == "couplemc_out"
        # benchmark-default reservoir rates
        assert cfg.model_params == {"n": 5, "alpha": 2.0, "beta": 0.1,
                                    "delta": 0.3, "gamma": 1.0}

    def test_alpha_omitted_defaults_to_one(self):
        assert parse().alpha == 1.0

    def test_kmp_defaults(self):
        cfg = parse(model="kmp")
        assert cfg.model_params == {"n": 5, "t_left": 10.0, "t_right": 100.0}


class TestStrictness:
    def test_unknown_top_level_key(self):
        with pytest.raises(ConfigurationError, match="tfinal"):
            parse(tfinal=10)

    def test_unknown_params_key(self):
        with pytest.raises(ConfigurationError, match="rho"):
            parse(params={"n": 5, "rho": 0.5})

    def test_unknown_observable_key(self):
        with pytest.raises(ConfigurationError, match="site"):
            parse(observables=[{"kind": "site", "x": 0.5, "site": 3}])

    def test_malformed_json(self):
        with pytest.raises(ConfigurationError, match="malformed"):
            parse_config("{not json")

    def test_missing_required(self):
        doc = dict(MINIMAL)
        del doc["seed"]
        with pytest.raises(ConfigurationError, match="seed"):
            parse_config(json.dumps(doc))

    @pytest.mark.parametrize("key,value,hint", [
        ("t_final", 0, "t_final"),
        ("batches", 1, "batches"),
        ("seed", -1, "seed"),
        ("seed", 1.5, "seed"),
        ("estimators", "fast", "estimators"),
        ("replicas", 0, "replicas"),
        ("burn_in_fraction", 1.0, "burn_in"),
        ("acf_spacing", 0.0, "acf_spacing"),
        ("sweep", [], "sweep"),
        ("sweep", [0], "sweep"),
        ("model", "ising", "model"),
    ])
    def test_out_of_range_values(self, key, value, hint):
        with pytest.raises(ConfigurationError, match=hint):
            parse(**{key: value})

    def test_observable_position_out_of_range(self):
        with pytest.raises(ConfigurationError, match="x=0.0"):
            parse(observables=[{"kind": "site", "x": 0.0}])


class TestObservableSpec:
    def test_site_index_mapping(self):
        # 1-based floor(x * n) clamped to [1, n], reported 0-based
        spec = ObservableSpec("site", 0.5)
        assert spec.site_index(3) == 0      # floor(1.5) = 1 -> site 1
        assert spec.site_index(100) == 49   # site 50
        assert ObservableSpec("site", 0.001).site_index(10) == 0

    def test_pair_mapping_spec_example(self):
        spec = ObservableSpec("pair", 0.2, 0.9)
        obs = spec.resolve(50)
        assert obs == PairObservable(9, 44)  # 1-based sites 10 and 45

    def test_site_resolve(self):
        assert ObservableSpec("site", 0.5).resolve(100) == SiteObservable(49)

    def test_pair_collision_names_observable(self):
        spec = ObservableSpec("pair", 0.5, 0.55)
        with pytest.raises(ConfigurationError, match=r"pair\(0.5,0.55\)"):
            spec.resolve(10)

    def test_pair_collision_rejected_at_parse_time(self):
        with pytest.raises(ConfigurationError, match="pair"):
            parse(observables=[{"kind": "pair", "x": 0.5, "y": 0.55}],
                  params={"n": 10})

    def test_pair_requires_y(self):
        with pytest.raises(ConfigurationError, match="y"):
            parse(observables=[{"kind": "pair", "x": 0.5}])

    def test_site_rejects_y(self):
        with pytest.raises(ConfigurationError):
            ObservableSpec("site", 0.5, 0.7)

    def test_names(self):
        assert ObservableSpec("site", 0.5).name() == "site(0.5)"
        assert ObservableSpec("pair", 0.4, 0.7).name() == "pair(0.4,0.7)"


class TestSweepValidation:
    def test_sweep_points_checked_for_collisions(self):
        # fine at n=100 but colliding at n=4
        with pytest.raises(ConfigurationError, match="pair"):
            parse(observables=[{"kind": "pair", "x": 0.5, "y": 0.7}],
                  sweep=[100, 4])

    def test_valid_sweep(self):
        cfg = parse(sweep=[25, 50])
        assert cfg.sweep == (25, 50)
        assert cfg.site_counts() == (25, 50)


class TestLoadConfig(object):
    def test_overrides(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(MINIMAL))
        cfg = load_config(path, seed=99, t_final=55.0, output="elsewhere")
        assert cfg.seed == 99
        assert cfg.t_final == 55.0
        assert cfg.output == "elsewhere"

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigurationError, match="cannot read"):
            load_config(tmp_path / "absent.json")

    def test_echo_roundtrip(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(MINIMAL))
        cfg = load_config(path)
        echo = cfg.echo()
        cfg2 = parse_config(json.dumps(echo))
        assert cfg2 == cfg
