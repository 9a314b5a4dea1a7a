"""
Tests for the training loop.
"""
from pathlib import Path

import pytest
import numpy as np

from src.data import write_dataset
from src.losses import total_loss
from src.tensor import ShapeError
from src.training import (
    DataConfig,
    TrainConfig,
    Trainer,
    load_adam_state,
    load_config,
    resolve_dataset,
    train,
)


def _config(**overrides):
    fields = dict(
        model=dict(in_channels=2, num_classes=3, levels=2, base_width=4, blocks_per_level=1, patch_size=16),
        sampler=dict(patch_size=16),
        data=dict(size=16, num_volumes=2, held_out_patches=0),
        steps=2,
        prefetch=False,
        log_every=1,
    )
    fields.update(overrides)
    return TrainConfig(**fields)


class TestTrainerSteps:
    def test_single_step(self, small_dataset, tmp_path):
        report = train(_config(steps=1), small_dataset, output_dir=tmp_path, show_progress=False)
        assert len(report.steps) == 1
        assert report.steps[0].step == 1
        assert report.memory is not None and report.memory.peak_stored_scalars > 0
        assert (tmp_path / "ckpt_1.ivparams").exists()
        assert load_adam_state(tmp_path / "ckpt_1.adam").step == 1

    def test_loss_is_weighted_sum(self, small_dataset):
        config = _config(loss=dict(w_ce=0.5, w_dice=2.0))
        report = train(config, small_dataset, show_progress=False)
        for record in report.steps:
            assert record.total == pytest.approx(total_loss(record.ce, record.dice, 0.0, 0.0, config.loss))
            assert record.l2 == 0.0 and record.kl == 0.0

    def test_deterministic(self, small_dataset):
        a = train(_config(steps=3), small_dataset, show_progress=False)
        b = train(_config(steps=3), small_dataset, show_progress=False)
        assert [r.total for r in a.steps] == [r.total for r in b.steps]

    def test_prefetch_does_not_change_trace(self, small_dataset):
        a = train(_config(steps=3, prefetch=True), small_dataset, show_progress=False)
        b = train(_config(steps=3, prefetch=False), small_dataset, show_progress=False)
        assert [r.total for r in a.steps] == [r.total for r in b.steps]

    @pytest.mark.parametrize("arch", ["baseline", "partially_invres", "fully_invres"])
    def test_storage_policy_does_not_change_trace(self, small_dataset, arch):
        model = dict(
            arch=arch, in_channels=2, num_classes=3, levels=2, base_width=4, blocks_per_level=1, patch_size=16,
            zero_init=False,
        )
        traces = {}
        for policy in ("store", "invertible", "checkpoint"):
            report = train(
                _config(model=model, precision="f64", storage_policy=policy), small_dataset, show_progress=False
            )
            traces[policy] = [r.total for r in report.steps]
        assert traces["invertible"] == pytest.approx(traces["store"], rel=1e-8)
        assert traces["checkpoint"] == pytest.approx(traces["store"], rel=1e-8)

    def test_periodic_checkpoints(self, small_dataset, tmp_path):
        report = train(_config(steps=4, checkpoint_every=2), small_dataset, output_dir=tmp_path, show_progress=False)
        names = [Path(p).name for p in report.checkpoints]
        assert names == ["ckpt_2.ivparams", "ckpt_4.ivparams"]
        assert not (tmp_path / "ckpt_2.adam").exists()

    def test_gradient_clipping_runs(self, small_dataset):
        report = train(_config(clip_grad_norm=1e-3), small_dataset, show_progress=False)
        assert all(np.isfinite(r.total) for r in report.steps)

    def test_held_out_metrics(self, small_dataset):
        config = _config(data=dict(size=16, held_out_patches=2))
        report = train(config, small_dataset[:2], held_out=small_dataset[2:], show_progress=False)
        metrics = report.final_metrics
        assert metrics is not None
        assert len(metrics.volumes) == 2
        assert [c.name for c in metrics.classes] == ["class_1", "class_2"]


class TestVAETraining:
    def _vae_config(self, **overrides):
        model = dict(
            in_channels=2, num_classes=3, levels=2, base_width=4, blocks_per_level=1, patch_size=16,
            vae=True, latent_dim=4, vae_width=2,
        )
        return _config(model=model, **overrides)

    def test_vae_terms_reported(self, small_dataset):
        config = self._vae_config()
        report = train(config, small_dataset, show_progress=False)
        for record in report.steps:
            assert record.l2 > 0.0
            assert record.total == pytest.approx(
                total_loss(record.ce, record.dice, record.l2, record.kl, config.loss)
            )

    def test_vae_only_freezes_trunk(self, small_dataset):
        trainer = Trainer(self._vae_config(vae_only=True), small_dataset)
        before = {name: p.data.copy() for name, p in trainer.model.parameters.items()}
        report = trainer.run(show_progress=False)
        vae_names = set(trainer.model.vae_parameter_names)
        changed = {name for name, p in trainer.model.parameters.items() if not np.array_equal(p.data, before[name])}
        assert changed and changed <= vae_names
        assert report.weights.w_ce == 0.0 and report.weights.w_dice == 0.0
        for record in report.steps:
            assert record.total == pytest.approx(0.1 * record.l2 + 0.1 * record.kl)

    def test_weighted_sum_with_all_terms(self, small_dataset):
        weights = dict(w_ce=0.7, w_dice=1.3, w_l2=0.4, w_kl=0.05)
        config = self._vae_config(steps=50, log_every=10, loss=weights)
        report = train(config, small_dataset, show_progress=False)
        assert len(report.steps) == 50
        for record in report.steps:
            assert record.l2 > 0.0 and record.kl >= 0.0
            expected = 0.7 * record.ce + 1.3 * record.dice + 0.4 * record.l2 + 0.05 * record.kl
            assert record.total == pytest.approx(expected, rel=1e-6)


class TestTrainerSetup:
    def test_empty_dataset(self):
        with pytest.raises(ValueError):
            Trainer(_config(), [])

    def test_channel_mismatch(self, small_dataset):
        model = dict(in_channels=3, num_classes=3, levels=2, base_width=4, blocks_per_level=1, patch_size=16)
        with pytest.raises(ShapeError):
            Trainer(_config(model=model), small_dataset)

    def test_class_mismatch(self, small_dataset):
        model = dict(in_channels=2, num_classes=4, levels=2, base_width=4, blocks_per_level=1, patch_size=16)
        with pytest.raises(ValueError, match="classes"):
            Trainer(_config(model=model), small_dataset)

    def test_resume(self, small_dataset, tmp_path):
        first = Trainer(_config(), small_dataset, output_dir=tmp_path)
        first.run(show_progress=False)
        resumed = Trainer(_config(resume_from=tmp_path / "ckpt_2.ivparams"), small_dataset)
        assert resumed.state.step == 2
        for name, param in resumed.model.parameters.items():
            assert np.array_equal(param.data, first.model.parameters[name].data)
        record = resumed.step(*next(resumed._batches()))
        assert record.step == 3


class TestResolveDataset:
    def test_synthetic_holds_out_last(self):
        train_set, held_out, names = resolve_dataset(DataConfig(size=16, num_volumes=3), 2, 3)
        assert len(train_set) == 2 and len(held_out) == 1
        assert held_out[0][0].id.endswith("002")
        assert names == ["background", "class_1", "class_2"]

    def test_single_volume_has_no_held_out(self):
        train_set, held_out, _ = resolve_dataset(DataConfig(size=16, num_volumes=1), 2, 3)
        assert len(train_set) == 1 and held_out == []

    def test_preset(self):
        train_set, _, names = resolve_dataset(DataConfig(size=16, num_volumes=2, preset="brats"), 4, 4)
        assert train_set[0][0].channels == 4
        assert names[1] == "necrosis"

    def test_dataset_directory(self, tmp_path, small_config):
        write_dataset(tmp_path / "ds", seed=1, num_volumes=4, config=small_config, show_progress=False)
        train_set, held_out, names = resolve_dataset(DataConfig(path=tmp_path / "ds"), 2, 3)
        assert len(train_set) == 3 and len(held_out) == 1
        assert names == small_config.names()


@pytest.mark.slow
class TestTrainingProgress:
    def test_loss_decreases(self, small_dataset):
        config = _config(steps=40, optimizer=dict(lr=1e-2), model=dict(
            in_channels=2, num_classes=3, levels=2, base_width=8, blocks_per_level=1, patch_size=16,
        ))
        report = train(config, small_dataset, show_progress=False)
        first = np.mean([r.total for r in report.steps[:5]])
        last = np.mean([r.total for r in report.steps[-5:]])
        assert last < first


# ============================================
# Acceptance runs (results/acceptance.md)
# ============================================

SHIPPED_CONFIG = Path(__file__).parent.parent / "config" / "train.cfg"
TIME_BUDGET_SECONDS = 30 * 60


def _shipped_run(*overrides):
    config = load_config(SHIPPED_CONFIG, list(overrides))
    train_set, held_out, names = resolve_dataset(config.data, config.model.in_channels, config.model.num_classes)
    return train(config, train_set, held_out, class_names=names, show_progress=False)


@pytest.mark.slow
class TestAcceptance:
    def test_segmentation_reaches_target_dice(self):
        invertible = _shipped_run("storage_policy=invertible")
        assert invertible.wall_time_seconds <= TIME_BUDGET_SECONDS
        assert invertible.final_metrics.mean_dice >= 0.80

        store = _shipped_run("storage_policy=store")
        assert store.final_metrics.mean_dice == pytest.approx(invertible.final_metrics.mean_dice, abs=0.02)

    def test_vae_only_reconstruction_improves_tenfold(self):
        report = _shipped_run("model.vae=true", "vae_only=true", "steps=500", "data.held_out_patches=0")
        first = np.mean([r.l2 for r in report.steps[:5]])
        last = np.mean([r.l2 for r in report.steps[-10:]])
        assert last <= first / 10
