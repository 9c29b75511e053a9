"""Central finite-difference gradient checking (h = 1e-5, float64)."""

from __future__ import annotations

import numpy as np

from .tensor import Tensor, backward, reset_tape


def numeric_gradient(fn, wrt: Tensor, h: float = 1e-5) -> np.ndarray:
    """Central-difference d fn() / d wrt, evaluated elementwise.

    ``fn`` must be a closure over ``wrt`` returning a scalar Tensor.
    """
    flat = wrt.data.reshape(-1)
    grad = np.zeros_like(flat)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        f_plus = fn().item()
        flat[i] = orig - h
        f_minus = fn().item()
        flat[i] = orig
        grad[i] = (f_plus - f_minus) / (2.0 * h)
    return grad.reshape(wrt.data.shape)


def max_relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> float:
    """Elementwise |a - n| / max(|a|, |n|, floor), reduced to the max.

    The floor keeps true-zero gradients from amplifying finite-difference
    noise into spurious relative error.
    """
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / denom))


def gradcheck(fn, params: list[Tensor], tol: float = 1e-4, h: float = 1e-5) -> float:
    """Compare analytic and numeric gradients of scalar fn over params.

    Returns the worst relative error seen; raises AssertionError above
    ``tol``. The tape is reset around every evaluation so repeated
    forwards stay independent.
    """
    for p in params:
        p.zero_grad()
    reset_tape()
    loss = fn()
    backward(loss)
    analytic = [None if p.grad is None else p.grad.copy() for p in params]

    worst = 0.0
    for p, a in zip(params, analytic):
        if a is None:
            a = np.zeros_like(p.data)

        def forward_only():
            reset_tape()
            return fn()

        n = numeric_gradient(forward_only, p, h=h)
        err = max_relative_error(a, n)
        worst = max(worst, err)
        if err > tol:
            raise AssertionError(
                f"gradcheck failed for param of shape {p.shape}: rel err {err:.3e} > {tol:.1e}"
            )
    reset_tape()
    return worst
