from __future__ import annotations

import numpy as np

from ..autodiff import DimensionError, NumericError, Tensor, no_grad, ops
from ..nn import Conv2d, Module
from .specs import SegmentorSpec

_HE = np.sqrt(2.0)


class BasicBlock(Module):
    def __init__(self, c_in: int, c_out: int, stride: int, rng: np.random.Generator):
        super().__init__()
        self.conv1 = Conv2d(c_in, c_out, 3, rng, stride=stride, padding=1, gain=_HE)
        self.conv2 = Conv2d(c_out, c_out, 3, rng, padding=1, gain=0.5)
        self.down = Conv2d(c_in, c_out, 1, rng, stride=stride, padding=0, bias=False) if (stride != 1 or c_in != c_out) else None

    def forward(self, x: Tensor) -> Tensor:
        y = self.conv2(ops.relu(self.conv1(x)))
        s = x if self.down is None else self.down(x)
        return ops.relu(ops.add(y, s))


class Segmentor(Module):
    """U-Net with a residual encoder; every encoder stage halves the resolution."""

    def __init__(self, spec: SegmentorSpec, rng: np.random.Generator):
        super().__init__()
        self.spec = spec
        self.stem = Conv2d(spec.n_modalities, spec.stem_width, 3, rng, stride=2, padding=1, gain=_HE)
        stages = []
        c = spec.stem_width
        for width, depth in zip(spec.stage_widths, spec.stage_depths):
            blocks = [BasicBlock(c, width, 2, rng)] + [BasicBlock(width, width, 1, rng) for _ in range(depth - 1)]
            stages.append(_Stage(blocks))
            c = width
        self.stage = stages
        skip_widths = [spec.stem_width] + list(spec.stage_widths[:-1])
        dec = []
        for j, width in enumerate(spec.decoder_widths):
            skip_c = skip_widths[len(skip_widths) - 1 - j] if j < len(skip_widths) else 0
            dec.append(Conv2d(c + skip_c, width, 3, rng, padding=1, gain=_HE))
            c = width
        self.decoder = dec
        self.head = Conv2d(c, spec.n_labels + 1, 1, rng, padding=0)

    def _run(self, image: Tensor) -> tuple[Tensor, Tensor]:
        s = image.shape[-1]
        if image.ndim != 4 or image.shape[1] != self.spec.n_modalities:
            raise DimensionError(f"segmentor: expected (N, {self.spec.n_modalities}, S, S), got {image.shape}")
        if s % self.spec.downsample_factor or image.shape[-2] != s:
            raise DimensionError(f"segmentor: size {s} must be square and divisible by {self.spec.downsample_factor}")
        if not np.isfinite(image.data).all():
            raise NumericError("segmentor: non-finite input")
        x = ops.relu(self.stem(image))
        skips = [x]
        for st in self.stage:
            x = st(x)
            skips.append(x)
        skips.pop()
        for conv in self.decoder:
            x = ops.upsample_nearest2x(x)
            if skips:
                x = ops.concat([x, skips.pop()], axis=1)
            x = ops.relu(conv(x))
        return self.head(x), x

    def forward(self, image: Tensor) -> Tensor:
        return self._run(image)[0]

    def features(self, image: Tensor) -> Tensor:
        logits, dec = self._run(image)
        return ops.softmax(logits, axis=1) if self.spec.feature_mode == "probs" else dec

    def predict(self, image: np.ndarray, batch: int = 16) -> np.ndarray:
        """Argmax label maps for a (N, C, S, S) array."""
        out = []
        dtype = self.head.weight.dtype
        with no_grad():
            for i in range(0, len(image), batch):
                logits = self(Tensor(image[i : i + batch], dtype=dtype))
                out.append(logits.data.argmax(axis=1).astype(np.uint8))
        return np.concatenate(out)


class _Stage(Module):
    def __init__(self, blocks):
        super().__init__()
        self.block = blocks

    def forward(self, x):
        for b in self.block:
            x = b(x)
        return x


class FrozenSegmentor:
    """Read-only view of a trained segmentor: gradients reach the image only."""

    def __init__(self, segmentor: Segmentor):
        segmentor.requires_grad_(False)
        self.segmentor = segmentor
        self.spec = segmentor.spec
        self._checksum = segmentor.checksum()

    def features(self, image: Tensor) -> Tensor:
        return self.segmentor.features(image)

    def checksum(self) -> str:
        return self.segmentor.checksum()

    def assert_unchanged(self) -> None:
        if self.segmentor.checksum() != self._checksum:
            raise AssertionError("frozen segmentor parameters were modified")
        if any(p.grad is not None or p.requires_grad for p in self.segmentor.parameters()):
            raise AssertionError("frozen segmentor acquired gradient buffers")


def segmentor_forward(image: Tensor, spec: SegmentorSpec, params: Segmentor) -> Tensor:
    return params(image)


def segmentor_features(image: Tensor, frozen: FrozenSegmentor) -> Tensor:
    return frozen.features(image)
