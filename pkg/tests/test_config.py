import json

import numpy as np
import pytest

from mvsde import ExperimentConfig
from mvsde.config import InitialLaw, config_hash, horizon_steps
from mvsde.errors import ConfigurationError
from mvsde.rng import StreamLineage

from conftest import make_config


def base_doc():
    return make_config().to_dict()


class TestValidation:
    def test_roundtrip(self):
        cfg = make_config(stopping_radius=2.0, params={"x": [1, 2]})
        assert ExperimentConfig.from_dict(cfg.to_dict()) == cfg

    @pytest.mark.parametrize("field", ["seed", "tolerances", "dt", "initial_law"])
    def test_required_fields(self, field):
        doc = base_doc()
        del doc[field]
        with pytest.raises(ConfigurationError) as err:
            ExperimentConfig.from_dict(doc)
        assert field in str(err.value)

    def test_error_carries_path(self):
        doc = base_doc()
        doc["initial_law"]["kind"] = "uniform"
        with pytest.raises(ConfigurationError) as err:
            ExperimentConfig.from_dict(doc)
        assert err.value.path == "initial_law/kind"

    def test_horizon_consistency(self):
        with pytest.raises(ConfigurationError) as err:
            make_config(steps=10, dt=0.1, horizon=1.1)
        assert err.value.path == "horizon"
        make_config(steps=3, dt=1 / 3, horizon=1.0)

    @pytest.mark.parametrize("changes", [{"N": 0}, {"steps": -1}, {"dt": 0.0},
                                         {"experiment": "nope"}, {"schema_version": 2},
                                         {"unknown": 1}, {"seed": -1}])
    def test_rejections(self, changes):
        doc = base_doc()
        doc.update(changes)
        with pytest.raises(ConfigurationError):
            ExperimentConfig.from_dict(doc)

    def test_dimension_of_initial_law(self):
        with pytest.raises(ConfigurationError):
            make_config(d=2, d1=2)

    def test_gaussian_needs_cov(self):
        with pytest.raises(ConfigurationError) as err:
            make_config(initial_law={"kind": "gaussian", "mean": [0.0]})
        assert err.value.path == "initial_law/cov"

    def test_load_bad_json(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text("{not json")
        with pytest.raises(ConfigurationError):
            ExperimentConfig.load(p)

    def test_replace(self):
        cfg = make_config()
        new = cfg.replace(seed=5, N=7)
        assert (new.seed, new.N, cfg.seed) == (5, 7, 1234)

    def test_tolerance_lookup(self):
        cfg = make_config()
        assert cfg.tolerance("se_mult") == 3.0
        with pytest.raises(ConfigurationError):
            cfg.tolerance("missing")

    def test_n_record(self):
        assert make_config(N=10).n_record == 10
        assert make_config(N=10, record=3).n_record == 3
        assert make_config(N=10, record=30).n_record == 10


class TestHash:
    def test_stable_and_sensitive(self):
        a, b = make_config(), make_config()
        assert config_hash(a) == config_hash(b)
        assert config_hash(a) != config_hash(make_config(seed=1))

    def test_ignores_output_dir(self):
        assert config_hash(make_config(output_dir="x")) == config_hash(make_config())


class TestInitialLaw:
    def test_point_moments(self):
        law = InitialLaw.point([3.0, 4.0])
        assert law.moment(2) == 25.0 and law.moment(4) == 625.0

    def test_gaussian_moments(self):
        law = InitialLaw.gaussian([1.0], [[2.0]])
        # E X^2 = 1 + 2; E X^4 = mu^4 + 6 mu^2 s^2 + 3 s^4 = 1 + 12 + 12
        assert law.moment(2) == pytest.approx(3.0)
        assert law.moment(4) == pytest.approx(25.0)
        assert isinstance(law.moment(4), float)

    def test_gaussian_sampling(self):
        law = InitialLaw.gaussian([1.0, -2.0], [[1.0, 0.3], [0.3, 0.5]])
        x = law.sample(StreamLineage(seed=3), 40_000)
        np.testing.assert_allclose(x.mean(axis=0), [1.0, -2.0], atol=0.03)
        np.testing.assert_allclose(np.cov(x.T), [[1.0, 0.3], [0.3, 0.5]], atol=0.03)

    def test_sampling_is_per_stream(self):
        law = InitialLaw.gaussian([0.0], [[1.0]])
        lin = StreamLineage(seed=3)
        np.testing.assert_array_equal(law.sample(lin, 10)[4:], law.sample(lin, 6, start=4))

    def test_non_psd_cov(self):
        with pytest.raises(ConfigurationError):
            make_config(initial_law={"kind": "gaussian", "mean": [0.0], "cov": [[-1.0]]})


def test_horizon_steps():
    assert horizon_steps(1.0, 0.001) == 1000
    with pytest.raises(ConfigurationError):
        horizon_steps(1.0, 0.3)


def test_shipped_configs_validate():
    from pathlib import Path
    paths = sorted((Path(__file__).parent.parent / "configs").glob("*.json"))
    assert paths
    for p in paths:
        json.loads(p.read_text())
        ExperimentConfig.load(p)
