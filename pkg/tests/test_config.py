"""
Tests for the key=value config format and TrainConfig validation.
"""
from pathlib import Path

import pytest

from src.autodiff import StoragePolicy
from src.models import Architecture
from src.tensor import Precision
from src.training import ConfigError, TrainConfig, dump_config, load_config, parse_config_text

SHIPPED_CONFIG = Path(__file__).parent.parent / "config" / "train.cfg"


class TestParsing:
    def test_nested_keys_and_comments(self):
        tree = parse_config_text(
            """
            # comment line
            steps=5          # trailing comment
            model.arch = baseline
            model.vae=true
            clip_grad_norm=none
            """
        )
        assert tree == {
            "steps": "5",
            "model": {"arch": "baseline", "vae": "true"},
            "clip_grad_norm": None,
        }

    def test_missing_equals(self):
        with pytest.raises(ConfigError, match=":2"):
            parse_config_text("steps=1\nnot a pair")

    def test_duplicate_key(self):
        with pytest.raises(ConfigError, match="duplicate"):
            parse_config_text("steps=1\nsteps=2")

    def test_nesting_under_scalar(self):
        with pytest.raises(ConfigError):
            parse_config_text("model=x\nmodel.arch=baseline")

    def test_empty_key(self):
        with pytest.raises(ConfigError):
            parse_config_text("=3")


class TestLoadConfig:
    def test_empty_file_gives_defaults(self, tmp_path):
        path = tmp_path / "empty.cfg"
        path.write_text("", encoding="utf-8")
        config = load_config(path)
        assert config == TrainConfig()
        assert config.storage_policy is StoragePolicy.INVERTIBLE
        assert config.loss.w_l2 == pytest.approx(0.1)

    def test_shipped_config(self):
        config = load_config(SHIPPED_CONFIG)
        assert config.steps == 2000
        assert config.model.levels == 3 and config.model.base_width == 8
        assert config.model.patch_size == config.sampler.patch_size == 16
        assert config.model.arch is Architecture.FULLY_INVRES
        assert config.model.num_classes == 3
        assert config.data.path is None

    def test_overrides_replace_lines(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("steps=10\nmodel.arch=baseline\n", encoding="utf-8")
        config = load_config(path, ["steps=3", "precision=f64"])
        assert config.steps == 3
        assert config.precision is Precision.F64
        assert config.model.arch is Architecture.BASELINE

    def test_unknown_key(self, tmp_path):
        path = tmp_path / "bad.cfg"
        path.write_text("model.depth=3\n", encoding="utf-8")
        with pytest.raises(ConfigError, match="depth"):
            load_config(path)

    def test_invalid_value(self, tmp_path):
        path = tmp_path / "bad.cfg"
        path.write_text("steps=0\n", encoding="utf-8")
        with pytest.raises(ConfigError):
            load_config(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError, match="absent.cfg"):
            load_config(tmp_path / "absent.cfg")

    def test_dump_reloads_equal(self, tmp_path):
        config = load_config(SHIPPED_CONFIG, ["clip_grad_norm=1.5", "model.vae=true", "data.preset=iseg"])
        path = tmp_path / "dumped.cfg"
        path.write_text(dump_config(config), encoding="utf-8")
        assert load_config(path) == config

    def test_dump_omits_shadowed_model_keys(self, tmp_path):
        config = TrainConfig(seed=7, precision="f64")
        text = dump_config(config)
        keys = {line.split("=", 1)[0] for line in text.splitlines()}
        assert "model.seed" not in keys and "model.precision" not in keys
        assert {"seed", "precision", "model.arch"} <= keys
        path = tmp_path / "dumped.cfg"
        path.write_text(text, encoding="utf-8")
        assert load_config(path).resolved_spec() == config.resolved_spec()


class TestConsistency:
    def test_patch_sizes_must_agree(self):
        with pytest.raises(ValueError, match="patch_size"):
            TrainConfig(model={"patch_size": 16, "levels": 2}, sampler={"patch_size": 32})

    def test_vae_only_requires_vae(self):
        with pytest.raises(ValueError, match="vae_only"):
            TrainConfig(vae_only=True)

    def test_resolved_spec_uses_run_settings(self):
        config = TrainConfig(seed=7, precision="f64")
        spec = config.resolved_spec()
        assert spec.seed == 7
        assert spec.precision is Precision.F64
        assert config.model.seed == 0
