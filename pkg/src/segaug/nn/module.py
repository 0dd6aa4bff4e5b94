from __future__ import annotations

import hashlib
from typing import Iterator

import numpy as np

from ..autodiff import Tensor, get_default_dtype


def parameter(data: np.ndarray) -> Tensor:
    return Tensor(np.asarray(data, dtype=get_default_dtype()), requires_grad=True)


class Module:
    """Container of named parameters, buffers and child modules.

    Parameters are ``Tensor`` attributes, children are ``Module`` attributes or
    lists of modules. Buffers (non-trained state such as spectral-norm
    vectors) live in ``self.buffers``.
    """

    def __init__(self):
        self.buffers: dict[str, np.ndarray] = {}

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):  # pragma: no cover - abstract
        raise NotImplementedError

    def children(self) -> Iterator[tuple[str, "Module"]]:
        for name, value in vars(self).items():
            if isinstance(value, Module):
                yield name, value
            elif isinstance(value, list) and value and isinstance(value[0], Module):
                for i, m in enumerate(value):
                    yield f"{name}{i}", m

    def modules(self) -> Iterator["Module"]:
        yield self
        for _, child in self.children():
            yield from child.modules()

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for name, value in vars(self).items():
            if isinstance(value, Tensor):
                yield prefix + name, value
        for name, child in self.children():
            yield from child.named_parameters(f"{prefix}{name}.")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def named_buffers(self, prefix: str = "") -> Iterator[tuple[str, np.ndarray]]:
        for name, arr in self.buffers.items():
            yield prefix + name, arr
        for name, child in self.children():
            yield from child.named_buffers(f"{prefix}{name}.")

    def state_dict(self, prefix: str = "") -> dict[str, np.ndarray]:
        out = {n: p.data for n, p in self.named_parameters(prefix)}
        out.update({f"{n}@buffer": b for n, b in self.named_buffers(prefix)})
        return out

    def load_state_dict(self, state: dict[str, np.ndarray], prefix: str = "") -> None:
        params = dict(self.named_parameters(prefix))
        expected = set(params) | {f"{n}@buffer" for n, _ in self.named_buffers(prefix)}
        missing = expected - set(state)
        if missing:
            raise KeyError(f"missing entries: {sorted(missing)[:5]}")
        for n, p in params.items():
            arr = state[n]
            if arr.shape != p.shape:
                raise ValueError(f"{n}: shape {arr.shape} != {p.shape}")
            p.data = np.array(arr, dtype=p.dtype)
        for m_prefix, module in self._named_modules(prefix):
            for bname in module.buffers:
                module.buffers[bname] = np.array(state[f"{m_prefix}{bname}@buffer"], dtype=np.float64)

    def _named_modules(self, prefix: str = ""):
        yield prefix, self
        for name, child in self.children():
            yield from child._named_modules(f"{prefix}{name}.")

    def requires_grad_(self, flag: bool) -> "Module":
        for p in self.parameters():
            p.requires_grad = flag
            if not flag:
                p.grad = None
        return self

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def astype(self, dtype) -> "Module":
        for p in self.parameters():
            p.data = p.data.astype(dtype)
        return self

    def checksum(self) -> str:
        h = hashlib.sha256()
        for name, p in self.named_parameters():
            h.update(name.encode())
            h.update(np.ascontiguousarray(p.data).tobytes())
        return h.hexdigest()

    def l2_norm(self) -> float:
        return float(np.sqrt(sum(float(np.sum(p.data.astype(np.float64) ** 2)) for p in self.parameters())))
