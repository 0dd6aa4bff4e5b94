from __future__ import annotations

import numpy as np

from ..autodiff import DimensionError, Tensor, ops
from ..nn import ClassEmbedding, Conv2d, Module, SpadeResBlock, resize_nearest
from .specs import GeneratorSpec


class Generator(Module):
    """Mask- and class-conditioned image generator built from SPADE residual blocks.

    The one-hot mask is resized to the base resolution and convolved to C0
    channels; the projected class embedding (C0 x base x base) is concatenated
    to it in front of the first block. Nearest upsampling follows every block
    except the first and the last.
    """

    def __init__(self, spec: GeneratorSpec, rng: np.random.Generator):
        super().__init__()
        self.spec = spec
        label_nc = spec.n_labels + 1
        c0 = spec.base_channels
        self.mask_conv = Conv2d(label_nc, c0, 3, rng, spectral=True)
        self.embed = ClassEmbedding(spec.n_classes, spec.embed_dim, c0, spec.base_resolution, rng)
        blocks = []
        c_prev = 2 * c0
        for i in range(spec.n_blocks):
            c_out = spec.channels(i)
            blocks.append(SpadeResBlock(c_prev, c_out, label_nc, spec.spade_hidden, rng))
            c_prev = c_out
        self.block = blocks
        self.out_conv = Conv2d(c_prev, spec.n_modalities, 3, rng, spectral=True)

    def forward(self, mask: np.ndarray, class_ids) -> Tensor:
        spec = self.spec
        mask = np.asarray(mask)
        if mask.ndim == 3:
            mask = mask[None]
        if mask.shape[1:] != (spec.n_labels + 1, spec.image_size, spec.image_size):
            raise DimensionError(
                f"generator: mask must be (N, {spec.n_labels + 1}, {spec.image_size}, {spec.image_size}), got {mask.shape}"
            )
        ids = np.atleast_1d(np.asarray(class_ids, dtype=np.int64))
        if ids.size == 1 and mask.shape[0] > 1:
            ids = np.repeat(ids, mask.shape[0])
        if ids.size != mask.shape[0]:
            raise DimensionError("generator: one class id per mask required")
        dtype = self.mask_conv.weight.dtype
        mask = mask.astype(dtype, copy=False)
        m0 = Tensor(resize_nearest(mask, spec.base_resolution), dtype=dtype)
        x = ops.concat([self.mask_conv(m0), self.embed(ids)], axis=1)
        last = spec.n_blocks - 1
        for i, blk in enumerate(self.block):
            x = blk(x, mask)
            if 0 < i < last:
                x = ops.upsample_nearest2x(x)
        return ops.tanh(self.out_conv(ops.leaky_relu(x, 0.2)))


def generator_forward(mask, class_id, spec: GeneratorSpec, params: Generator) -> Tensor:
    if params.spec != spec:
        raise ValueError("parameters were built for a different spec")
    return params(mask, class_id)
