from .layers import (
    ClassEmbedding,
    Conv2d,
    Linear,
    SpadeNorm,
    SpadeResBlock,
    embed_class,
    instance_normalize,
    resize_nearest,
    spade_normalize,
    update_spectral,
)
from .module import Module, parameter
from .spectral import SpectralState, power_iterate, sigma_estimate, spectral_norm_apply

__all__ = [
    "ClassEmbedding",
    "Conv2d",
    "Linear",
    "Module",
    "SpadeNorm",
    "SpadeResBlock",
    "SpectralState",
    "embed_class",
    "instance_normalize",
    "parameter",
    "power_iterate",
    "resize_nearest",
    "sigma_estimate",
    "spade_normalize",
    "spectral_norm_apply",
    "update_spectral",
]
