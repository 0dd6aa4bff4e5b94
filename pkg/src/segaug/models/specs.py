"""Architecture hyperparameter records. Parameter shapes are a pure function of these."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field


def _is_pow2(x: int) -> bool:
    return x > 0 and x & (x - 1) == 0


class SpecMixin:
    def to_dict(self, prefix: str = "") -> dict[str, str]:
        out = {}
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if isinstance(v, (list, tuple)):
                v = ",".join(str(x) for x in v)
            elif isinstance(v, bool):
                v = "true" if v else "false"
            out[prefix + f.name] = str(v)
        return out

    @classmethod
    def from_dict(cls, d: dict[str, str], prefix: str = ""):
        kwargs = {}
        for f in dataclasses.fields(cls):
            key = prefix + f.name
            if key not in d:
                continue
            raw = str(d[key])
            default = f.default if f.default is not dataclasses.MISSING else f.default_factory()
            if isinstance(default, bool):
                kwargs[f.name] = raw.lower() in ("1", "true", "yes")
            elif isinstance(default, int):
                kwargs[f.name] = int(raw)
            elif isinstance(default, float):
                kwargs[f.name] = float(raw)
            elif isinstance(default, (list, tuple)):
                kwargs[f.name] = [int(x) for x in raw.split(",") if x.strip()]
            else:
                kwargs[f.name] = raw
        return cls(**kwargs)


@dataclass
class GeneratorSpec(SpecMixin):
    image_size: int = 64
    n_blocks: int = 5
    n_upsamples: int = 3
    n_modalities: int = 2
    n_labels: int = 2
    n_classes: int = 3
    base_channels: int = 128
    min_channels: int = 32
    spade_hidden: int = 64
    embed_dim: int = 64

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if not _is_pow2(self.image_size) or self.image_size < 32:
            raise ValueError(f"image_size must be a power of 2 >= 32, got {self.image_size}")
        if self.n_blocks != self.n_upsamples + 2:
            raise ValueError("n_blocks must equal n_upsamples + 2")
        if self.image_size % (2**self.n_upsamples):
            raise ValueError("image_size must be divisible by 2**n_upsamples")
        for name in ("n_modalities", "n_labels", "n_classes", "base_channels", "min_channels", "spade_hidden", "embed_dim"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")

    @property
    def base_resolution(self) -> int:
        return self.image_size // (2**self.n_upsamples)

    def channels(self, i: int) -> int:
        return max(self.min_channels, self.base_channels // (2**i))

    @classmethod
    def full_scale(cls, **kw) -> "GeneratorSpec":
        base = dict(image_size=256, n_blocks=7, n_upsamples=5, n_modalities=4, base_channels=1024, min_channels=64)
        base.update(kw)
        return cls(**base)


@dataclass
class DiscriminatorSpec(SpecMixin):
    n_scales: int = 2
    n_layers: int = 3
    base_channels: int = 64
    kernel: int = 4
    slope: float = 0.2
    label_channels: int = 3
    n_modalities: int = 2
    feat_channels: int = 3

    def __post_init__(self):
        if self.n_scales < 1 or self.n_layers < 2:
            raise ValueError("need at least one scale and two convolutions")

    @property
    def in_channels(self) -> int:
        return self.label_channels + self.n_modalities + self.feat_channels


@dataclass
class SegmentorSpec(SpecMixin):
    n_modalities: int = 2
    n_labels: int = 2
    stem_width: int = 16
    stage_widths: list = field(default_factory=lambda: [16, 32, 32, 64])
    stage_depths: list = field(default_factory=lambda: [1, 1, 1, 1])
    decoder_widths: list = field(default_factory=lambda: [64, 32, 32, 16, 16])
    feature_mode: str = "probs"

    def __post_init__(self):
        self.stage_widths = [int(x) for x in self.stage_widths]
        self.stage_depths = [int(x) for x in self.stage_depths]
        self.decoder_widths = [int(x) for x in self.decoder_widths]
        if len(self.stage_widths) != len(self.stage_depths):
            raise ValueError("stage_widths and stage_depths differ in length")
        if len(self.decoder_widths) != len(self.stage_depths) + 1:
            raise ValueError("need one decoder block per downsampling step")
        if any(d < 1 for d in self.stage_depths):
            raise ValueError("stage depths must be positive")
        if self.feature_mode not in ("probs", "decoder"):
            raise ValueError("feature_mode must be 'probs' or 'decoder'")

    @property
    def downsample_factor(self) -> int:
        return 2 ** (len(self.stage_depths) + 1)

    @property
    def feat_channels(self) -> int:
        return self.n_labels + 1 if self.feature_mode == "probs" else self.decoder_widths[-1]

    @classmethod
    def full_scale(cls, **kw) -> "SegmentorSpec":
        base = dict(
            n_modalities=4,
            stem_width=64,
            stage_widths=[64, 128, 256, 512],
            stage_depths=[3, 4, 6, 3],
            decoder_widths=[256, 128, 64, 32, 16],
        )
        base.update(kw)
        return cls(**base)
