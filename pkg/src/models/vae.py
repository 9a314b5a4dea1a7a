"""
VAE regularization branch.

From the deepest encoder feature: global average pool -> (mu, logvar)
linear heads -> reparameterized sample -> linear + reshape to a coarse grid
-> (levels - 1) x (trilinear x2, conv3, leaky relu) -> 1x1x1 conv back to
the input modalities. All nodes live in the VAE section and store their
activations.
"""
import logging
from typing import TYPE_CHECKING, Optional

from ..autodiff import Section
from ..layers import (
    Conv3d,
    GaussianSample,
    GlobalAvgPool,
    Initializer,
    LeakyReLU,
    Linear,
    Reshape,
    Sequential,
    TrilinearUpsample,
)

if TYPE_CHECKING:
    from .unet import Model

logger = logging.getLogger(__name__)


def attach_vae_branch(model: "Model", latent_dim: Optional[int] = None) -> "Model":
    """
    Add the reconstruction branch and its three outputs (recon, mu, logvar).

    Raises:
        ValueError: If the branch is already attached or latent_dim < 1
    """
    if model.has_vae:
        raise ValueError(f"{model.name} already has a VAE branch")
    spec = model.spec
    latent = latent_dim or spec.latent_dim
    if latent < 1:
        raise ValueError(f"latent_dim must be >= 1, got {latent}")

    tape = model.tape
    init = Initializer(spec.seed, spec.precision)
    width = spec.vae_width
    grid = spec.deepest_extent(spec.patch_size)
    section = dict(section=Section.VAE, checkpointable=False)

    before = {id(p) for p in tape.parameters}

    pooled = tape.add(GlobalAvgPool(), model.deepest, name="vae.pool", **section)
    mu = tape.add(Linear("vae.mu", model.deepest_channels, latent, init), pooled, name="vae.mu", **section)
    logvar = tape.add(
        Linear("vae.logvar", model.deepest_channels, latent, init, zero_init=True),
        pooled,
        name="vae.logvar",
        **section,
    )
    z = tape.add(GaussianSample(seed=spec.seed), mu, logvar, name="vae.sample", **section)
    h = tape.add(Linear("vae.project", latent, width * grid ** 3, init), z, name="vae.project", **section)
    h = tape.add(Reshape((width, grid, grid, grid)), h, name="vae.reshape", **section)
    for stage in range(spec.levels - 1):
        name = f"vae.up{stage}"
        stage_op = Sequential(
            [TrilinearUpsample(), Conv3d(f"{name}.conv", width, width, init), LeakyReLU()],
            kind="vae_up",
        )
        h = tape.add(stage_op, h, name=name, **section)
    recon = tape.add(Conv3d("vae.out", width, spec.in_channels, init, kernel=1), h, name="vae.out", **section)

    tape.output(recon, mu, logvar)
    model.has_vae = True
    model.vae_parameter_names = [p.name for p in tape.parameters if id(p) not in before]
    logger.info(f"Attached VAE branch to {model.name}: latent {latent}, decoder grid {grid}^3 x {width}")
    return model
