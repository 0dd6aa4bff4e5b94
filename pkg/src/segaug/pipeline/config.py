from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass, field

from ..data.shapesmed import ShapesMedConfig
from ..models.specs import DiscriminatorSpec, GeneratorSpec, SegmentorSpec


@dataclass
class TrainConfig:
    epochs_seg: int = 100
    epochs_gan: int = 80
    max_steps_gan: int = 0  # 0 = bounded by epochs only
    lr_g: float = 1e-4
    lr_d: float = 4e-4
    lr_seg: float = 1e-3
    beta1: float = 0.0
    beta2: float = 0.9
    batch_size: int = 4
    seed: int = 0
    third_player: bool = True
    lambda_fm: float = 10.0
    lambda_jaccard: float = 1.0
    generator: GeneratorSpec = field(default_factory=GeneratorSpec)
    discriminator: DiscriminatorSpec = field(default_factory=DiscriminatorSpec)
    segmentor: SegmentorSpec = field(default_factory=SegmentorSpec)

    def __post_init__(self):
        self.sync()

    def sync(self) -> "TrainConfig":
        """Propagate shared dimensions from the generator spec to the other players."""
        g = self.generator
        self.segmentor.n_modalities = g.n_modalities
        self.segmentor.n_labels = g.n_labels
        self.discriminator.label_channels = g.n_labels + 1
        self.discriminator.n_modalities = g.n_modalities
        self.discriminator.feat_channels = self.segmentor.feat_channels
        return self

    def validate(self) -> None:
        for name in ("epochs_seg", "epochs_gan", "batch_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name}: must be at least 1")
        if self.max_steps_gan < 0:
            raise ValueError("max_steps_gan: must be non-negative")
        for name in ("lr_g", "lr_d", "lr_seg"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name}: must be positive")
        for name in ("beta1", "beta2"):
            if not 0 <= getattr(self, name) < 1:
                raise ValueError(f"{name}: must lie in [0, 1)")
        for name in ("lambda_fm", "lambda_jaccard"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name}: must be non-negative")
        self.generator.validate()


@dataclass
class ExperimentConfig:
    train: TrainConfig = field(default_factory=TrainConfig)
    data: ShapesMedConfig = field(default_factory=ShapesMedConfig)
    n_folds: int = 3
    test_fraction: float = 0.1
    target_class: int = -1  # -1 = rarest class

    def to_dict(self) -> dict[str, str]:
        out = {}
        for f in dataclasses.fields(TrainConfig):
            if f.name in ("generator", "discriminator", "segmentor"):
                continue
            out[f.name] = _fmt(getattr(self.train, f.name))
        out.update(self.train.generator.to_dict("generator."))
        out.update(self.train.discriminator.to_dict("discriminator."))
        out.update(self.train.segmentor.to_dict("segmentor."))
        for f in dataclasses.fields(ShapesMedConfig):
            out[f.name if f.name != "seed" else "data_seed"] = _fmt(getattr(self.data, f.name))
        out["n_folds"] = str(self.n_folds)
        out["test_fraction"] = repr(float(self.test_fraction))
        out["target_class"] = str(self.target_class)
        return out

    def fingerprint(self) -> str:
        text = "\n".join(f"{k}={v}" for k, v in sorted(self.to_dict().items()))
        return hashlib.sha256(text.encode()).hexdigest()[:16]


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, tuple)):
        return ",".join(_fmt(x) for x in v)
    return str(v)
