"""
Training loop: sampled patches -> forward -> combined loss -> backward
under the configured storage regime -> Adam.
"""
import logging
import time
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

from ..autodiff import memory_report
from ..data import (
    LabelVolume,
    PatchPrefetcher,
    PatchSampler,
    SyntheticConfig,
    Volume,
    generate_synthetic,
    load_dataset,
    Split,
    sample_batch,
)
from ..losses import (
    LossWeights,
    cross_entropy_loss,
    dice_loss,
    kl_loss,
    l2_recon_loss,
    one_hot,
    total_loss,
)
from ..models import Model, build_model
from ..tensor import ShapeError, as_tensor
from ..utils import get_settings
from .config import DataConfig, TrainConfig
from .evaluation import evaluate_patches
from .optimizer import AdamState, adam_step, clip_by_global_norm, load_adam_state, save_adam_state
from .reports import StepRecord, TrainReport

logger = logging.getLogger(__name__)

Dataset = List[Tuple[Volume, LabelVolume]]


def resolve_dataset(
    data: DataConfig,
    in_channels: int,
    num_classes: int,
) -> Tuple[Dataset, Dataset, Optional[List[str]]]:
    """
    Training and held-out volumes for a config.

    With data.path the manifest's split is used. Otherwise synthetic volumes
    are generated and the last one is held out (when there are at least two).

    Returns:
        (train, held_out, class_names)
    """
    if data.path is not None:
        manifest, train_set = load_dataset(data.path, Split.TRAIN)
        _, held_out = load_dataset(data.path, Split.TEST)
        return train_set, held_out, manifest.class_names

    if data.preset:
        generator = SyntheticConfig.preset(data.preset, size=data.size)
    else:
        generator = SyntheticConfig(size=data.size, num_classes=num_classes, num_modalities=in_channels)
    volumes = generate_synthetic(data.seed, data.num_volumes, generator)
    if len(volumes) > 1:
        return volumes[:-1], volumes[-1:], generator.names()
    return volumes, [], generator.names()


class Trainer:
    """
    Runs a TrainConfig against an in-memory dataset.

    For a fixed config, dataset and precision the loss trace is
    deterministic.
    """

    def __init__(
        self,
        config: TrainConfig,
        dataset: Sequence[Tuple[Volume, LabelVolume]],
        held_out: Optional[Sequence[Tuple[Volume, LabelVolume]]] = None,
        output_dir: Optional[Path] = None,
        class_names: Optional[Sequence[str]] = None,
    ):
        if not dataset:
            raise ValueError("Training dataset is empty")
        self.config = config
        self.dataset = list(dataset)
        self.held_out = list(held_out or [])
        self.output_dir = Path(output_dir) if output_dir else config.output_dir
        self.class_names = list(class_names) if class_names else None

        self.spec = config.resolved_spec()
        self._check_dataset()
        self.model: Model = build_model(self.spec)
        self.state = AdamState()
        if config.resume_from is not None:
            self._resume(Path(config.resume_from))

        self.weights = config.loss
        if config.vae_only:
            self.weights = LossWeights(w_ce=0.0, w_dice=0.0, w_l2=config.loss.w_l2, w_kl=config.loss.w_kl)
        self.sampler = PatchSampler.from_config(config.sampler)
        self.checkpoints: List[str] = []

    def _check_dataset(self) -> None:
        for volume, labels in self.dataset + self.held_out:
            if volume.channels != self.spec.in_channels:
                raise ShapeError(
                    f"Volume '{volume.id}' has {volume.channels} channels, model expects {self.spec.in_channels}"
                )
            if labels.num_classes != self.spec.num_classes:
                raise ValueError(
                    f"Labels '{labels.id}' have {labels.num_classes} classes, model predicts {self.spec.num_classes}"
                )

    def _resume(self, path: Path) -> None:
        self.model.load(path)
        adam_path = path.with_suffix(".adam")
        if adam_path.exists():
            self.state = load_adam_state(adam_path)
        logger.info(f"Resumed from {path} at optimizer step {self.state.step}")

    # ============================================
    # One step
    # ============================================

    def step(self, images: np.ndarray, labels: np.ndarray) -> StepRecord:
        """Forward, loss, backward and update on one batch."""
        config, model, w = self.config, self.model, self.weights
        dtype = self.spec.precision.dtype
        image = as_tensor(images, self.spec.precision)
        target = one_hot(labels, self.spec.num_classes, dtype=dtype)

        out = model.forward(image, regime=config.storage_policy, training=True)
        ce = cross_entropy_loss(out.probs, target)
        dice = dice_loss(out.probs, target)
        grad_probs = None if config.vae_only else w.w_ce * ce.grad + w.w_dice * dice.grad

        l2_value = kl_value = 0.0
        grad_recon = grad_mu = grad_logvar = None
        if model.has_vae:
            voxels = image.shape[0] * int(np.prod(image.shape[2:]))
            l2 = l2_recon_loss(out.recon, image)
            kl = kl_loss(out.mu, out.logvar, voxels)
            l2_value, kl_value = l2.value, kl.value
            grad_recon = w.w_l2 * l2.grad
            grad_mu = w.w_kl * kl.grad[0]
            grad_logvar = w.w_kl * kl.grad[1]

        grads = model.backward(grad_probs, grad_recon, grad_mu, grad_logvar).params
        if config.vae_only:
            trainable = set(model.vae_parameter_names)
            grads = {name: g for name, g in grads.items() if name in trainable}
        if config.clip_grad_norm is not None:
            clip_by_global_norm(grads, config.clip_grad_norm)
        adam_step(model.parameters, grads, self.state, config.optimizer)

        return StepRecord(
            step=self.state.step,
            total=total_loss(ce.value, dice.value, l2_value, kl_value, w),
            ce=ce.value,
            dice=dice.value,
            l2=l2_value,
            kl=kl_value,
        )

    def save_checkpoint(self, with_optimizer: bool = False) -> Optional[Path]:
        if self.output_dir is None:
            return None
        path = self.output_dir / f"ckpt_{self.state.step}.ivparams"
        self.model.save(path)
        if with_optimizer:
            save_adam_state(self.state, path.with_suffix(".adam"))
        self.checkpoints.append(str(path))
        return path

    # ============================================
    # Loop
    # ============================================

    def _batches(self):
        config = self.config
        if config.prefetch:
            with PatchPrefetcher(self.dataset, self.sampler, config.batch_size, num_batches=config.steps) as prefetcher:
                yield from prefetcher
        else:
            for _ in range(config.steps):
                yield sample_batch(self.dataset, self.sampler, config.batch_size)

    def run(self, show_progress: Optional[bool] = None) -> TrainReport:
        config = self.config
        show = get_settings().show_progress if show_progress is None else show_progress
        report = TrainReport(
            model=self.model.name,
            policy=config.storage_policy,
            precision=self.spec.precision,
            weights=self.weights,
            vae_only=config.vae_only,
        )
        logger.info(
            f"Training {self.model.name} for {config.steps} steps "
            f"({config.storage_policy.value}, {self.spec.precision.value}, batch {config.batch_size})"
        )
        start = time.perf_counter()
        bar = tqdm(total=config.steps, desc="Training", disable=not show)
        try:
            for index, (images, labels) in enumerate(self._batches(), start=1):
                record = self.step(images, labels)
                report.steps.append(record)
                if index == 1:
                    report.memory = memory_report(self.model.tape)
                if index % config.log_every == 0 or index == config.steps:
                    logger.info(
                        f"Step {record.step}: loss {record.total:.5f} "
                        f"(ce {record.ce:.5f}, dice {record.dice:.5f}, l2 {record.l2:.5f}, kl {record.kl:.5f})"
                    )
                if config.checkpoint_every and index % config.checkpoint_every == 0 and index < config.steps:
                    self.save_checkpoint()
                bar.update(1)
                bar.set_postfix(loss=f"{record.total:.4f}")
        finally:
            bar.close()

        self.save_checkpoint(with_optimizer=True)
        report.checkpoints = list(self.checkpoints)
        if self.held_out and config.data.held_out_patches:
            report.final_metrics = evaluate_patches(
                self.model,
                self.held_out,
                config.data.held_out_patches,
                seed=config.seed + 1,
                class_names=self.class_names,
            )
        report.wall_time_seconds = time.perf_counter() - start
        logger.info(f"✅ Training finished in {report.wall_time_seconds:.1f}s, final loss {report.final_loss:.5f}")
        return report


def train(
    config: TrainConfig,
    dataset: Sequence[Tuple[Volume, LabelVolume]],
    held_out: Optional[Sequence[Tuple[Volume, LabelVolume]]] = None,
    output_dir: Optional[Path] = None,
    class_names: Optional[Sequence[str]] = None,
    show_progress: Optional[bool] = None,
) -> TrainReport:
    """
    Train a model described by config on dataset.

    Args:
        config: Validated TrainConfig
        dataset: Training volumes
        held_out: Volumes scored on sampled patches after training
        output_dir: Checkpoint directory (config.output_dir when omitted)
        class_names: Names used in the metrics report

    Returns:
        TrainReport with the loss trace, step-1 memory and final metrics
    """
    return Trainer(config, dataset, held_out, output_dir, class_names).run(show_progress)
