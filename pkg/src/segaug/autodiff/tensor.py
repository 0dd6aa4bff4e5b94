"""Tensor type, gradient recording and the reverse pass."""

from __future__ import annotations

import contextlib
from typing import Callable, Iterator, Sequence

import numpy as np


class DimensionError(ValueError):
    """Shapes or extents do not satisfy an operation's precondition."""


class NumericError(ArithmeticError):
    """A non-finite value appeared where finite values are required."""


class GraphError(RuntimeError):
    """Backward was requested for a seed that is not on the recorded graph."""


class DomainError(ValueError):
    """An argument lies outside an operation's domain."""


_DEFAULT_DTYPE = np.float32
_GRAD_ENABLED = True


def set_default_dtype(dtype) -> None:
    """Select float32 (training) or float64 (verification) for new tensors."""
    global _DEFAULT_DTYPE
    dtype = np.dtype(dtype).type
    if dtype not in (np.float32, np.float64):
        raise ValueError(f"unsupported dtype {dtype}")
    _DEFAULT_DTYPE = dtype


def get_default_dtype():
    return _DEFAULT_DTYPE


@contextlib.contextmanager
def default_dtype(dtype) -> Iterator[None]:
    prev = _DEFAULT_DTYPE
    set_default_dtype(dtype)
    try:
        yield
    finally:
        set_default_dtype(prev)


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def grad_enabled() -> bool:
    return _GRAD_ENABLED


class Tensor:
    """Dense array with optional gradient tracking.

    ``op`` names the primitive that produced the tensor; its backward rule is
    looked up in :data:`segaug.autodiff.ops.BACKWARD` at reverse time.
    """

    __slots__ = ("data", "grad", "requires_grad", "parents", "op", "ctx", "name")

    def __init__(self, data, requires_grad: bool = False, dtype=None, name: str | None = None):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data, dtype=dtype or _DEFAULT_DTYPE)
        self.data: np.ndarray = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self.parents: tuple[Tensor, ...] = ()
        self.op: str | None = None
        self.ctx = None
        self.name = name

    # -- basic properties -------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def is_leaf(self) -> bool:
        return self.op is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data, dtype=self.data.dtype)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        rg = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{rg})"

    def __len__(self) -> int:
        return len(self.data)

    # -- operator sugar (defined in ops) -----------------------------------
    def __add__(self, other):
        from . import ops

        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from . import ops

        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops

        return ops.sub(other, self)

    def __mul__(self, other):
        from . import ops

        if isinstance(other, (int, float)):
            return ops.scale(self, float(other))
        return ops.mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        from . import ops

        return ops.scale(self, -1.0)

    def __matmul__(self, other):
        from . import ops

        return ops.matmul(self, other)

    def sum(self, axis=None, keepdims=False):
        from . import ops

        return ops.sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        from . import ops

        return ops.mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        from . import ops

        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)

    def backward(self, tape: "Tape | None" = None) -> None:
        backward(self, tape)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def record(data: np.ndarray, parents: Sequence[Tensor], op: str, ctx=None) -> Tensor:
    """Wrap a primitive's output, linking it into the graph when needed."""
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.name = None
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out.parents = tuple(parents)
        out.op = op
        out.ctx = ctx
    else:
        out.requires_grad = False
        out.parents = ()
        out.op = None
        out.ctx = None
    return out


class Tape:
    """Topologically ordered list of recorded nodes reachable from a seed."""

    def __init__(self, nodes: list[Tensor]):
        self.nodes = nodes
        self._ids = {id(n) for n in nodes}

    def __contains__(self, t: Tensor) -> bool:
        return id(t) in self._ids

    def __len__(self) -> int:
        return len(self.nodes)

    def __iter__(self):
        return iter(self.nodes)

    @classmethod
    def from_seed(cls, seed: Tensor) -> "Tape":
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(seed, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node.parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        return cls(order)


def backward(seed: Tensor, tape: Tape | None = None) -> None:
    """Accumulate d(seed)/d(leaf) into ``.grad`` of every reachable leaf."""
    from .ops import BACKWARD

    if seed.size != 1:
        raise GraphError("backward seed must be a scalar tensor")
    if not seed.requires_grad:
        raise GraphError("seed was not produced on a recorded graph (no input requires grad)")
    if tape is None:
        tape = Tape.from_seed(seed)
    elif seed not in tape:
        raise GraphError("seed is not on the given tape")

    grads: dict[int, np.ndarray] = {id(seed): np.ones_like(seed.data)}
    for node in reversed(tape.nodes):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.op is None:
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        rule: Callable = BACKWARD[node.op]
        in_grads = rule(node.ctx, g, node.parents)
        for p, pg in zip(node.parents, in_grads):
            if pg is None or not p.requires_grad:
                continue
            key = id(p)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg
