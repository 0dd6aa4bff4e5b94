"""Checkpoints: RGT1 container whose header carries the architecture specs."""

from __future__ import annotations

import numpy as np

from ..autodiff.serialize import FormatError, load_container, save_container
from .discriminator import MultiscaleDiscriminator
from .generator import Generator
from .segmentor import Segmentor
from .specs import DiscriminatorSpec, GeneratorSpec, SegmentorSpec

_BUILDERS = {
    "generator": (GeneratorSpec, Generator),
    "discriminator": (DiscriminatorSpec, MultiscaleDiscriminator),
    "segmentor": (SegmentorSpec, Segmentor),
}


def save_checkpoint(path, models: dict, extra: dict | None = None) -> None:
    header = {"format": "segaug-checkpoint-1", "models": ",".join(models)}
    entries = {}
    for name, model in models.items():
        header.update(model.spec.to_dict(prefix=f"{name}.spec."))
        entries.update(model.state_dict(prefix=f"{name}."))
    if extra:
        header.update({k: str(v) for k, v in extra.items()})
    save_container(path, header, entries)


def load_checkpoint(path) -> tuple[dict, dict]:
    """Return ({name: model}, header)."""
    header, entries = load_container(path)
    if header.get("format") != "segaug-checkpoint-1":
        raise FormatError(f"{path}: not a checkpoint")
    models = {}
    for name in filter(None, header.get("models", "").split(",")):
        if name not in _BUILDERS:
            raise FormatError(f"unknown model {name!r} in checkpoint")
        spec_cls, model_cls = _BUILDERS[name]
        spec = spec_cls.from_dict(header, prefix=f"{name}.spec.")
        dtype = entries[next(k for k in entries if k.startswith(name + "."))].dtype
        model = model_cls(spec, np.random.default_rng(0)).astype(dtype)
        model.load_state_dict(entries, prefix=f"{name}.")
        models[name] = model
    return models, header
