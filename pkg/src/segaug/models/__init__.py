from .checkpoint import load_checkpoint, save_checkpoint
from .discriminator import MultiscaleDiscriminator, PatchDiscriminator, discriminator_forward
from .generator import Generator, generator_forward
from .segmentor import FrozenSegmentor, Segmentor, segmentor_features, segmentor_forward
from .specs import DiscriminatorSpec, GeneratorSpec, SegmentorSpec

__all__ = [
    "DiscriminatorSpec",
    "FrozenSegmentor",
    "Generator",
    "GeneratorSpec",
    "MultiscaleDiscriminator",
    "PatchDiscriminator",
    "Segmentor",
    "SegmentorSpec",
    "discriminator_forward",
    "generator_forward",
    "load_checkpoint",
    "save_checkpoint",
    "segmentor_features",
    "segmentor_forward",
]
