"""
3D U-Net builders.

All three families share one skeleton:

    stem conv -> [encoder level: blocks, down] x (levels - 1)
    -> bottleneck blocks
    -> [decoder level: up, concat(skip, up), blocks] x (levels - 1)
    -> 1x1x1 conv + softmax head

They differ in the blocks (plain residual vs. coupling) and in the
resampling (max pool / trilinear vs. split + invertible squeeze).
"""
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Union

import numpy as np

from ..autodiff import Gradients, Parameter, Section, StoragePolicy, Tape, Value
from ..layers import (
    ChannelConcat,
    ChannelSplit,
    Conv3d,
    CouplingBlock,
    Initializer,
    InvertibleDownsample,
    InvertibleUpsample,
    ResidualBlock,
    Sequential,
    Softmax,
    assign_parameters,
    load_parameters,
    make_down_transition,
    make_up_transition,
    save_parameters,
)
from ..tensor import ShapeError
from .spec import Architecture, ModelSpec

logger = logging.getLogger(__name__)


@dataclass
class ModelOutput:
    probs: np.ndarray
    recon: Optional[np.ndarray] = None
    mu: Optional[np.ndarray] = None
    logvar: Optional[np.ndarray] = None


class Model:
    """A built network: its tape, parameters and spec."""

    def __init__(self, spec: ModelSpec, tape: Tape, deepest: Value, deepest_channels: int):
        self.spec = spec
        self.tape = tape
        self.deepest = deepest
        self.deepest_channels = deepest_channels
        self.has_vae = False
        self.vae_parameter_names: List[str] = []

    @property
    def name(self) -> str:
        return self.tape.name

    @property
    def parameters(self) -> Dict[str, Parameter]:
        return self.tape.named_parameters()

    @property
    def parameter_count(self) -> int:
        return sum(p.size for p in self.tape.parameters)

    def _wrap(self, outputs: List[np.ndarray]) -> ModelOutput:
        if self.has_vae:
            return ModelOutput(*outputs)
        return ModelOutput(outputs[0])

    def _check_image(self, image: np.ndarray) -> None:
        if image.ndim != 5:
            raise ShapeError(f"Model input must be [N, C, D, H, W], got {tuple(image.shape)}")
        self.spec.check_input(image.shape[2:])
        if self.has_vae and any(s != self.spec.patch_size for s in image.shape[2:]):
            raise ShapeError(
                f"VAE branch is sized for {self.spec.patch_size}^3 patches, got {tuple(image.shape[2:])}"
            )

    def forward(
        self,
        image: np.ndarray,
        regime: StoragePolicy = StoragePolicy.INVERTIBLE,
        training: bool = True,
    ) -> ModelOutput:
        self._check_image(image)
        return self._wrap(self.tape.forward(image, regime=regime, training=training))

    def backward(
        self,
        grad_probs: Optional[np.ndarray],
        grad_recon: Optional[np.ndarray] = None,
        grad_mu: Optional[np.ndarray] = None,
        grad_logvar: Optional[np.ndarray] = None,
    ) -> Gradients:
        grads = [grad_probs]
        if self.has_vae:
            grads += [grad_recon, grad_mu, grad_logvar]
        return self.tape.backward(*grads)

    def predict(self, image: np.ndarray) -> np.ndarray:
        """Class probabilities in evaluation mode; records nothing."""
        if image.ndim != 5:
            raise ShapeError(f"Model input must be [N, C, D, H, W], got {tuple(image.shape)}")
        self.spec.check_input(image.shape[2:])
        return self.tape.evaluate(image, training=False)[0]

    def evaluate(self, image: np.ndarray) -> ModelOutput:
        """All outputs in evaluation mode (z = mu)."""
        self._check_image(image)
        return self._wrap(self.tape.evaluate(image, training=False))

    def save(self, path: Union[str, Path]) -> Path:
        return save_parameters(self.parameters, path)

    def load(self, path: Union[str, Path], strict: bool = True) -> int:
        count = assign_parameters(self.parameters, load_parameters(path), strict=strict)
        for node in self.tape.nodes:
            if isinstance(node.op, (InvertibleDownsample, InvertibleUpsample)):
                node.op.validate()
        logger.info(f"Loaded {count} parameters into {self.name} from {path}")
        return count

    def count_trunk_nodes(self, invertible: Optional[bool] = None) -> int:
        return self.tape.count_nodes(Section.TRUNK, invertible=invertible)


class _UNetBuilder:
    def __init__(self, spec: ModelSpec):
        self.spec = spec
        self.init = Initializer(spec.seed, spec.precision)
        self.widths = spec.widths()
        self.tape = Tape(spec.arch.value, spec.precision)
        self.coupling = spec.arch is not Architecture.BASELINE
        self.fully = spec.arch is Architecture.FULLY_INVRES

    def blocks(self, h: Value, channels: int, prefix: str) -> Value:
        for b in range(self.spec.blocks_per_level):
            name = f"{prefix}.block{b}"
            if self.coupling:
                op = CouplingBlock(name, channels, self.init, depth=self.spec.subnet_depth, zero_init=self.spec.zero_init)
            else:
                op = ResidualBlock(name, channels, self.init)
            h = self.tape.add(op, h, name=name)
        return h

    def concat(self, skip: Value, up: Value, at: int, name: str) -> Value:
        # The baseline keeps every activation, so its concatenations stay StoreOutput.
        return self.tape.add(ChannelConcat(at), skip, up, name=name, invertible=self.coupling)

    def build(self) -> Model:
        spec, tape, init, widths = self.spec, self.tape, self.init, self.widths
        levels = spec.levels

        image = tape.input("image", channels=spec.in_channels)
        h = tape.add(Conv3d("stem", spec.in_channels, widths[0], init), image, name="stem", section=Section.STEM)

        skips: List[Value] = []
        for level in range(levels - 1):
            width = widths[level]
            h = self.blocks(h, width, f"enc{level}")
            if self.fully:
                skip, down = tape.add(ChannelSplit(width // 2), h, name=f"enc{level}.split", num_outputs=2)
                h = tape.add(InvertibleDownsample(f"enc{level}.down", width // 2, init), down, name=f"enc{level}.down")
            else:
                skip = h
                h = tape.add(
                    make_down_transition(f"enc{level}.down", width, widths[level + 1], init),
                    h,
                    name=f"enc{level}.down",
                )
            skips.append(skip)

        h = self.blocks(h, widths[-1], "mid")
        deepest = h
        width_below = widths[-1]

        for level in reversed(range(levels - 1)):
            width = widths[level]
            if self.fully:
                up = tape.add(InvertibleUpsample(f"dec{level}.up", width // 2, init), h, name=f"dec{level}.up")
                h = self.concat(skips[level], up, width // 2, f"dec{level}.concat")
                width_below = width
            else:
                up = tape.add(
                    make_up_transition(f"dec{level}.up", width_below, width, init),
                    h,
                    name=f"dec{level}.up",
                )
                h = self.concat(skips[level], up, width, f"dec{level}.concat")
                width_below = 2 * width
            h = self.blocks(h, width_below, f"dec{level}")

        head = Sequential(
            [
                Conv3d("head.conv", width_below, spec.num_classes, init, kernel=1, zero_init=spec.zero_init),
                Softmax(),
            ],
            kind="head",
        )
        probs = tape.add(head, h, name="head", section=Section.HEAD)
        tape.output(probs)

        model = Model(spec, tape, deepest, widths[-1])
        if spec.vae:
            from .vae import attach_vae_branch
            attach_vae_branch(model, spec.latent_dim)
        logger.info(
            f"Built {spec.arch.value}: {len(tape.nodes)} nodes, {model.parameter_count:,} parameters, "
            f"widths {widths}"
        )
        return model


def build_baseline(spec: ModelSpec) -> Model:
    """Plain residual 3D U-Net; every node stores its activations."""
    return _UNetBuilder(spec.model_copy(update={"arch": Architecture.BASELINE})).build()


def build_partially_invres(spec: ModelSpec) -> Model:
    """Coupling blocks inside levels; pooling / interpolation break the chains."""
    return _UNetBuilder(spec.model_copy(update={"arch": Architecture.PARTIALLY_INVRES})).build()


def build_fully_invres(spec: ModelSpec) -> Model:
    """Entire trunk invertible: coupling blocks, channel split and invertible squeeze."""
    return _UNetBuilder(spec.model_copy(update={"arch": Architecture.FULLY_INVRES})).build()


BUILDERS = {
    Architecture.BASELINE: build_baseline,
    Architecture.PARTIALLY_INVRES: build_partially_invres,
    Architecture.FULLY_INVRES: build_fully_invres,
}


def build_model(spec: ModelSpec) -> Model:
    return BUILDERS[spec.arch](spec)
