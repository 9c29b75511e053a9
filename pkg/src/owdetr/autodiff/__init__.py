"""Minimal deterministic reverse-mode autodiff engine (float64)."""

from .tensor import (
    Tape,
    Tensor,
    active_tape,
    backward,
    no_grad,
    reset_tape,
)
from . import ops
from .gradcheck import gradcheck, max_relative_error, numeric_gradient

__all__ = [
    "Tape",
    "Tensor",
    "active_tape",
    "backward",
    "gradcheck",
    "max_relative_error",
    "no_grad",
    "numeric_gradient",
    "ops",
    "reset_tape",
]
