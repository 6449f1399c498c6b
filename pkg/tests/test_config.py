"""测试用户设置与实验配置"""
import json

import pytest

from geoweak.config import Config, ExperimentConfig, load_experiment_config
from geoweak.errors import ConfigError


class TestConfig:
    """测试用户设置"""

    def test_defaults(self, tmp_path):
        config = Config(str(tmp_path / "config.json"))
        assert config.get_storage_type() == "sqlite"
        assert config.get("cluster.min_pts") == 3
        assert config.get("missing.key", "fallback") == "fallback"

    def test_set_persists(self, tmp_path):
        path = tmp_path / "config.json"
        Config(str(path)).set("cluster.eps_m", 500.0)

        reloaded = Config(str(path))
        assert reloaded.get("cluster.eps_m") == 500.0
        assert reloaded.get("cluster.min_pts") == 3

    def test_broken_file_falls_back_to_defaults(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text("{broken", encoding="utf-8")
        assert Config(str(path)).get("logging.level") == "INFO"


class TestExperimentConfig:
    """测试实验配置"""

    def test_defaults(self):
        cfg = ExperimentConfig()
        assert cfg.fractions == [0.01, 0.05, 0.10]
        assert cfg.iou_thresholds == [0.25, 0.5, 0.75]
        assert cfg.min_pts == 3

    def test_unknown_key(self, tmp_path):
        path = tmp_path / "exp.json"
        path.write_text(json.dumps({"fractoins": [0.1]}), encoding="utf-8")
        with pytest.raises(ConfigError):
            load_experiment_config(str(path))

    @pytest.mark.parametrize("values", [
        {"fractions": [0.1, 0.05]},
        {"fractions": [0.0]},
        {"fractions": []},
        {"iou_thresholds": [0.5, 1.5]},
        {"split_ratios": [0.5, 0.5, 0.5]},
        {"strategy": "random"},
        {"strategy": "predefined"},
        {"drop_rate": 2.0},
        {"synth_objects_min": 5, "synth_objects_max": 2},
    ])
    def test_invalid_values(self, values):
        with pytest.raises(ConfigError):
            load_experiment_config(None, **values)

    def test_overrides_skip_none(self, tmp_path):
        path = tmp_path / "exp.json"
        path.write_text(json.dumps({"seed": 3, "out_dir": "a"}), encoding="utf-8")
        cfg = load_experiment_config(str(path), seed=None, out_dir="b")
        assert cfg.seed == 3
        assert cfg.out_dir == "b"

    def test_not_json(self, tmp_path):
        path = tmp_path / "exp.json"
        path.write_text("[1, 2", encoding="utf-8")
        with pytest.raises(ConfigError):
            load_experiment_config(str(path))

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_experiment_config(str(tmp_path / "absent.json"))

    def test_hash(self):
        a = ExperimentConfig(seed=1, out_dir="x", workers=1)
        b = ExperimentConfig(seed=1, out_dir="y", workers=8)
        assert a.config_hash() == b.config_hash()
        assert len(a.config_hash()) == 64
        assert a.config_hash() != ExperimentConfig(seed=2).config_hash()
