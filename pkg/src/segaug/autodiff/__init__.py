from . import ops
from .optim import Adam, AdamState, adam_step
from .tensor import (
    DimensionError,
    DomainError,
    GraphError,
    NumericError,
    Tape,
    Tensor,
    backward,
    default_dtype,
    get_default_dtype,
    grad_enabled,
    no_grad,
    set_default_dtype,
)

__all__ = [
    "Adam",
    "AdamState",
    "DimensionError",
    "DomainError",
    "GraphError",
    "NumericError",
    "Tape",
    "Tensor",
    "adam_step",
    "backward",
    "default_dtype",
    "get_default_dtype",
    "grad_enabled",
    "no_grad",
    "ops",
    "set_default_dtype",
]
