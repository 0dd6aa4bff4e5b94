"""Layers: convolutions, SPADE normalization, SPADE residual block, class embedding."""

from __future__ import annotations

import numpy as np

from ..autodiff import DimensionError, DomainError, Tensor, ops
from .module import Module, parameter
from .spectral import SpectralState, power_iterate, spectral_norm_apply

NORM_EPS = 1e-5


class Conv2d(Module):
    def __init__(
        self,
        c_in: int,
        c_out: int,
        kernel: int,
        rng: np.random.Generator,
        stride: int = 1,
        padding: int | None = None,
        bias: bool = True,
        spectral: bool = False,
        gain: float = 1.0,
    ):
        super().__init__()
        self.stride = stride
        self.padding = kernel // 2 if padding is None else padding
        fan_in = c_in * kernel * kernel
        self.weight = parameter(rng.standard_normal((c_out, c_in, kernel, kernel)) * gain / np.sqrt(fan_in))
        self.bias = parameter(np.zeros(c_out)) if bias else None
        self.spectral = spectral
        if spectral:
            st = SpectralState.init(c_out, rng)
            power_iterate(self.weight.data.reshape(c_out, -1), st)
            self.buffers["sn_u"] = st.u
            self.buffers["sn_v"] = st.v

    def effective_weight(self) -> Tensor:
        if not self.spectral:
            return self.weight
        st = SpectralState(u=self.buffers["sn_u"], v=self.buffers["sn_v"])
        w, _ = spectral_norm_apply(self.weight, st, update=False)
        return w

    def update_spectral(self) -> None:
        if self.spectral:
            st = SpectralState(u=self.buffers["sn_u"], v=self.buffers["sn_v"])
            if power_iterate(self.weight.data.reshape(self.weight.shape[0], -1), st):
                self.buffers["sn_u"], self.buffers["sn_v"] = st.u, st.v

    def forward(self, x: Tensor) -> Tensor:
        return ops.conv2d(x, self.effective_weight(), self.bias, stride=self.stride, padding=self.padding)


def update_spectral(model: Module) -> None:
    """One power-iteration step for every spectrally normalized conv in ``model``."""
    for m in model.modules():
        if isinstance(m, Conv2d):
            m.update_spectral()


class Linear(Module):
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator):
        super().__init__()
        self.weight = parameter(rng.standard_normal((n_in, n_out)) / np.sqrt(n_in))
        self.bias = parameter(np.zeros(n_out))

    def forward(self, x: Tensor) -> Tensor:
        return ops.add(ops.matmul(x, self.weight), self.bias)


def resize_nearest(mask: np.ndarray | Tensor, size: int) -> np.ndarray:
    """Nearest-neighbour resize of an (N, C, H, W) map to size x size."""
    arr = mask.data if isinstance(mask, Tensor) else mask
    h, w = arr.shape[-2:]
    if (h, w) == (size, size):
        return arr
    ys = (np.arange(size) * h) // size
    xs = (np.arange(size) * w) // size
    return arr[..., ys[:, None], xs[None, :]]


def instance_normalize(h: Tensor, eps: float = NORM_EPS) -> Tensor:
    """(h - mu) / sigma per sample and channel; sigma clamped below at ``eps``."""
    mu = ops.mean(h, axis=(2, 3), keepdims=True)
    d = ops.sub(h, mu)
    var = ops.mean(ops.mul(d, d), axis=(2, 3), keepdims=True)
    floor = eps * eps
    var = ops.add(ops.relu(ops.sub(var, floor)), floor)
    return ops.mul(d, ops.exp(ops.scale(ops.log(var), -0.5)))


class SpadeNorm(Module):
    """Instance normalization modulated by mask-dependent scale and shift maps."""

    def __init__(self, channels: int, label_nc: int, hidden: int, rng: np.random.Generator, kernel: int = 3):
        super().__init__()
        self.channels = channels
        self.shared = Conv2d(label_nc, hidden, kernel, rng)
        self.gamma = Conv2d(hidden, channels, kernel, rng)
        self.beta = Conv2d(hidden, channels, kernel, rng)
        self.gamma.bias.data[:] = 1.0

    def modulation(self, mask: np.ndarray) -> tuple[Tensor, Tensor]:
        m = Tensor(mask, dtype=self.shared.weight.dtype)
        actv = ops.relu(self.shared(m))
        # gamma and beta share one im2col of the hidden map
        w = ops.concat([self.gamma.weight, self.beta.weight], axis=0)
        b = ops.concat([self.gamma.bias, self.beta.bias], axis=0)
        gb = ops.conv2d(actv, w, b, stride=1, padding=self.gamma.padding)
        c = self.channels
        return ops.narrow(gb, 1, 0, c), ops.narrow(gb, 1, c, 2 * c)

    def forward(self, h: Tensor, mask: np.ndarray) -> Tensor:
        if h.shape[1] != self.channels:
            raise DimensionError(f"spade: expected {self.channels} channels, got {h.shape[1]}")
        m = resize_nearest(mask, h.shape[-1])
        if m.shape[-2:] != h.shape[-2:] or m.shape[0] != h.shape[0]:
            raise DimensionError(f"spade: mask {m.shape} does not match features {h.shape}")
        gamma, beta = self.modulation(m)
        return ops.add(ops.mul(gamma, instance_normalize(h)), beta)


def spade_normalize(h: Tensor, mask: np.ndarray, params: SpadeNorm) -> Tensor:
    return params(h, mask)


class SpadeResBlock(Module):
    def __init__(self, c_in: int, c_out: int, label_nc: int, hidden: int, rng: np.random.Generator, slope: float = 0.2):
        super().__init__()
        self.c_in, self.c_out = c_in, c_out
        c_mid = min(c_in, c_out)
        self.slope = slope
        self.norm1 = SpadeNorm(c_in, label_nc, hidden, rng)
        self.conv1 = Conv2d(c_in, c_mid, 3, rng, spectral=True)
        self.norm2 = SpadeNorm(c_mid, label_nc, hidden, rng)
        self.conv2 = Conv2d(c_mid, c_out, 3, rng, spectral=True)
        if c_in != c_out:
            self.norm_skip = SpadeNorm(c_in, label_nc, hidden, rng)
            self.skip = Conv2d(c_in, c_out, 1, rng, bias=False, spectral=True)
        else:
            self.norm_skip = None
            self.skip = None

    def forward(self, x: Tensor, mask: np.ndarray) -> Tensor:
        if x.shape[1] != self.c_in:
            raise DimensionError(f"resblock: expected {self.c_in} input channels, got {x.shape[1]}")
        dx = self.conv1(ops.leaky_relu(self.norm1(x, mask), self.slope))
        dx = self.conv2(ops.leaky_relu(self.norm2(dx, mask), self.slope))
        xs = x if self.skip is None else self.skip(self.norm_skip(x, mask))
        return ops.add(xs, dx)


class ClassEmbedding(Module):
    """Lookup table followed by a projection reshaped to (C0, base, base)."""

    def __init__(self, n_classes: int, width: int, channels: int, base: int, rng: np.random.Generator):
        super().__init__()
        self.n_classes, self.channels, self.base = n_classes, channels, base
        self.table = parameter(rng.standard_normal((n_classes, width)))
        self.projection = Linear(width, channels * base * base, rng)

    def forward(self, class_ids) -> Tensor:
        ids = np.atleast_1d(np.asarray(class_ids, dtype=np.int64))
        if ids.size and (ids.min() < 0 or ids.max() >= self.n_classes):
            raise DomainError(f"class id out of range [0, {self.n_classes}): {ids.tolist()}")
        e = ops.embedding(self.table, ids)
        return ops.reshape(self.projection(e), (ids.size, self.channels, self.base, self.base))


def embed_class(class_id, emb: ClassEmbedding) -> Tensor:
    return emb(class_id)
