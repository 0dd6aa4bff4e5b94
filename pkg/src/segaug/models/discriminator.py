from __future__ import annotations

import numpy as np

from ..autodiff import DimensionError, Tensor, ops
from ..nn import Conv2d, Module
from .specs import DiscriminatorSpec


class PatchDiscriminator(Module):
    """Stack of spectrally normalized 4x4 convs ending in a 1-channel patch map."""

    def __init__(self, spec: DiscriminatorSpec, rng: np.random.Generator):
        super().__init__()
        self.slope = spec.slope
        layers = []
        c_in, c = spec.in_channels, spec.base_channels
        for i in range(spec.n_layers - 1):
            layers.append(Conv2d(c_in, c, spec.kernel, rng, stride=2, padding=1, spectral=True))
            c_in, c = c, c * 2
        layers.append(Conv2d(c_in, 1, spec.kernel, rng, stride=1, padding=1, spectral=True))
        self.conv = layers

    def forward(self, x: Tensor) -> tuple[Tensor, list[Tensor]]:
        feats = []
        for layer in self.conv[:-1]:
            x = ops.leaky_relu(layer(x), self.slope)
            feats.append(x)
        return self.conv[-1](x), feats


class MultiscaleDiscriminator(Module):
    """Sub-discriminator k sees the conditioning stack average-pooled k times."""

    def __init__(self, spec: DiscriminatorSpec, rng: np.random.Generator):
        super().__init__()
        self.spec = spec
        self.scale = [PatchDiscriminator(spec, rng) for _ in range(spec.n_scales)]

    def forward(self, mask, image: Tensor, seg_feats: Tensor) -> tuple[list[Tensor], list[list[Tensor]]]:
        m = mask if isinstance(mask, Tensor) else Tensor(np.asarray(mask, dtype=image.dtype), dtype=image.dtype)
        if m.ndim == 3:
            m = ops.reshape(m, (1,) + m.shape)
        shapes = {m.shape[-2:], image.shape[-2:], seg_feats.shape[-2:]}
        if len(shapes) != 1 or len({m.shape[0], image.shape[0], seg_feats.shape[0]}) != 1:
            raise DimensionError(f"discriminator: inputs disagree: {m.shape}, {image.shape}, {seg_feats.shape}")
        x = ops.concat([m, image, seg_feats], axis=1)
        if x.shape[1] != self.spec.in_channels:
            raise DimensionError(f"discriminator: expected {self.spec.in_channels} input channels, got {x.shape[1]}")
        scores, feats = [], []
        for k, d in enumerate(self.scale):
            if k:
                x = ops.avg_pool2d(x, 2, 2)
            s, f = d(x)
            scores.append(s)
            feats.append(f)
        return scores, feats


def discriminator_forward(mask, image, seg_feats, spec: DiscriminatorSpec, params: MultiscaleDiscriminator):
    return params(mask, image, seg_feats)
