"""Differentiable kernels over the tape.

Forward math is plain numpy on float64; every kernel registers a
backward rule via ``record``. Gradients are verified against central
finite differences in the test suite, so backward rules here must stay
exact, not approximate.
"""

from __future__ import annotations

import numpy as np

from ..errors import ShapeError
from .tensor import (
    Tensor,
    as_tensor,
    broadcast_result_shape,
    record,
    reduce_to_shape,
)

# Strictly-inside-(0,1) bounds for sigmoid outputs: float64 saturation
# would otherwise return exactly 0.0 or 1.0 for |x| > ~37.
_SIGMOID_LO = np.nextafter(0.0, 1.0)
_SIGMOID_HI = np.nextafter(1.0, 0.0)


def constant(value) -> Tensor:
    return as_tensor(value)


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    broadcast_result_shape(a.shape, b.shape)
    out = a.data + b.data

    def backward(g):
        return reduce_to_shape(g, a.shape), reduce_to_shape(g, b.shape)

    return record([a, b], out, backward)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    broadcast_result_shape(a.shape, b.shape)
    out = a.data - b.data

    def backward(g):
        return reduce_to_shape(g, a.shape), reduce_to_shape(-g, b.shape)

    return record([a, b], out, backward)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    broadcast_result_shape(a.shape, b.shape)
    out = a.data * b.data

    def backward(g):
        return (
            reduce_to_shape(g * b.data, a.shape),
            reduce_to_shape(g * a.data, b.shape),
        )

    return record([a, b], out, backward)


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    broadcast_result_shape(a.shape, b.shape)
    out = a.data / b.data

    def backward(g):
        return (
            reduce_to_shape(g / b.data, a.shape),
            reduce_to_shape(-g * a.data / (b.data * b.data), b.shape),
        )

    return record([a, b], out, backward)


def neg(a) -> Tensor:
    a = as_tensor(a)
    return record([a], -a.data, lambda g: (-g,))


def scale(a, s: float) -> Tensor:
    a = as_tensor(a)
    s = float(s)
    return record([a], a.data * s, lambda g: (g * s,))


def power(a, exponent: float) -> Tensor:
    """Elementwise a**exponent for a constant real exponent (a > 0)."""
    a = as_tensor(a)
    exponent = float(exponent)
    out = a.data**exponent

    def backward(g):
        if exponent == 0.0:
            return (np.zeros_like(a.data),)
        return (g * exponent * a.data ** (exponent - 1.0),)

    return record([a], out, backward)


def abs_(a) -> Tensor:
    a = as_tensor(a)

    def backward(g):
        return (g * np.sign(a.data),)

    return record([a], np.abs(a.data), backward)


def clamp_min(a, lo: float) -> Tensor:
    a = as_tensor(a)
    lo = float(lo)
    out = np.maximum(a.data, lo)

    def backward(g):
        return (g * (a.data > lo),)

    return record([a], out, backward)


def minimum(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f"minimum needs equal shapes, got {a.shape} and {b.shape}")
    mask = a.data <= b.data

    def backward(g):
        return g * mask, g * ~mask

    return record([a, b], np.minimum(a.data, b.data), backward)


def maximum(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f"maximum needs equal shapes, got {a.shape} and {b.shape}")
    mask = a.data >= b.data

    def backward(g):
        return g * mask, g * ~mask

    return record([a, b], np.maximum(a.data, b.data), backward)


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return record([a], out, lambda g: (g * out,))


def log(a) -> Tensor:
    a = as_tensor(a)
    return record([a], np.log(a.data), lambda g: (g / a.data,))


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0.0
    return record([a], a.data * mask, lambda g: (g * mask,))


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    x = a.data
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    out = np.clip(out, _SIGMOID_LO, _SIGMOID_HI)

    def backward(g):
        return (g * out * (1.0 - out),)

    return record([a], out, backward)


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul expects 2-d operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner dimensions disagree: {a.shape} x {b.shape}")
    out = a.data @ b.data

    def backward(g):
        return g @ b.data.T, a.data.T @ g

    return record([a, b], out, backward)


def sum_(a, axis=None) -> Tensor:
    a = as_tensor(a)
    out = a.data.sum(axis=axis)

    def backward(g):
        if axis is None:
            return (np.full_like(a.data, float(g)),)
        return (np.broadcast_to(np.expand_dims(g, axis), a.shape).copy(),)

    return record([a], out, backward)


def mean(a, axis=None) -> Tensor:
    a = as_tensor(a)
    n = a.data.size if axis is None else a.shape[axis]
    return scale(sum_(a, axis=axis), 1.0 / n)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    out = a.data.reshape(shape)
    return record([a], out, lambda g: (g.reshape(a.shape),))


def transpose(a, axes=None) -> Tensor:
    a = as_tensor(a)
    out = a.data.transpose(axes)
    if axes is None:
        inv = None
    else:
        inv = tuple(np.argsort(axes))
    return record([a], out, lambda g: (g.transpose(inv),))


def concat(tensors, axis=0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, splits, axis=axis))

    return record(tensors, out, backward)


def narrow(a, axis: int, start: int, length: int) -> Tensor:
    """Contiguous slice [start, start+length) along one axis."""
    a = as_tensor(a)
    if start < 0 or start + length > a.shape[axis]:
        raise ShapeError(
            f"narrow [{start}:{start + length}) exceeds axis {axis} of shape {a.shape}"
        )
    index = [slice(None)] * a.ndim
    index[axis] = slice(start, start + length)
    index = tuple(index)
    out = a.data[index].copy()

    def backward(g):
        full = np.zeros_like(a.data)
        full[index] = g
        return (full,)

    return record([a], out, backward)


def gather_rows(a, indices) -> Tensor:
    """Select rows of a along axis 0 by integer index (duplicates allowed)."""
    a = as_tensor(a)
    idx = np.asarray(indices, dtype=np.intp)
    out = a.data[idx].copy()

    def backward(g):
        full = np.zeros_like(a.data)
        np.add.at(full, idx, g)
        return (full,)

    return record([a], out, backward)


def softmax(a) -> Tensor:
    """Softmax over the last axis, max-subtracted for stability."""
    a = as_tensor(a)
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        dot = (g * out).sum(axis=-1, keepdims=True)
        return (out * (g - dot),)

    return record([a], out, backward)


def layer_norm(a, gain, bias, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then apply elementwise affine."""
    a, gain, bias = as_tensor(a), as_tensor(gain), as_tensor(bias)
    d = a.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise ShapeError(f"layer_norm affine shapes {gain.shape}/{bias.shape} != ({d},)")
    mu = a.data.mean(axis=-1, keepdims=True)
    xc = a.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * gain.data + bias.data

    def backward(g):
        dxhat = g * gain.data
        dvar = (dxhat * xc).sum(axis=-1, keepdims=True) * (-0.5) * inv**3
        dmu = (-dxhat * inv).sum(axis=-1, keepdims=True) + dvar * (-2.0 / d) * xc.sum(
            axis=-1, keepdims=True
        )
        dx = dxhat * inv + dvar * (2.0 / d) * xc + dmu / d
        reduce_axes = tuple(range(a.ndim - 1))
        dgain = (g * xhat).sum(axis=reduce_axes)
        dbias = g.sum(axis=reduce_axes)
        return dx, dgain, dbias

    return record([a, gain, bias], out, backward)


def linear(x, weight, bias=None) -> Tensor:
    """x @ weight (+ bias). weight is (in, out); bias is (out,)."""
    y = matmul(x, weight)
    if bias is not None:
        y = add(y, bias)
    return y


def conv2d(x, w, bias=None, stride: int = 1, pad: int = 0) -> Tensor:
    """2-d cross-correlation of a single image.

    x: (C_in, H, W); w: (C_out, C_in, k, k); zero padding. Output
    spatial size is floor((H + 2*pad - k) / stride) + 1.
    """
    x, w = as_tensor(x), as_tensor(w)
    if x.ndim != 3 or w.ndim != 4:
        raise ShapeError(f"conv2d expects (C,H,W) and (O,C,k,k), got {x.shape}, {w.shape}")
    c_in, h, width = x.shape
    c_out, c_in_w, kh, kw = w.shape
    if kh != kw:
        raise ShapeError(f"conv2d kernel must be square, got {w.shape}")
    k = kh
    if c_in_w != c_in:
        raise ShapeError(f"conv2d channel mismatch: input {x.shape} vs kernel {w.shape}")
    if k > h + 2 * pad or k > width + 2 * pad:
        raise ShapeError(
            f"kernel {k}x{k} larger than padded input {h + 2 * pad}x{width + 2 * pad}"
        )
    h_out = (h + 2 * pad - k) // stride + 1
    w_out = (width + 2 * pad - k) // stride + 1

    xp = np.pad(x.data, ((0, 0), (pad, pad), (pad, pad))) if pad else x.data
    windows = np.lib.stride_tricks.sliding_window_view(xp, (k, k), axis=(1, 2))
    windows = windows[:, ::stride, ::stride]  # (C, h_out, w_out, k, k)
    cols = windows.transpose(1, 2, 0, 3, 4).reshape(h_out * w_out, c_in * k * k)
    w_flat = w.data.reshape(c_out, c_in * k * k)
    out = (cols @ w_flat.T).T.reshape(c_out, h_out, w_out)
    if bias is not None:
        bias = as_tensor(bias)
        if bias.shape != (c_out,):
            raise ShapeError(f"conv2d bias shape {bias.shape} != ({c_out},)")
        out = out + bias.data[:, None, None]

    def backward(g):
        g2 = g.reshape(c_out, h_out * w_out)
        grad_w = (g2 @ cols).reshape(c_out, c_in, k, k)
        grad_cols = g2.T @ w_flat  # (h_out*w_out, C*k*k)
        grad_cols = grad_cols.reshape(h_out, w_out, c_in, k, k).transpose(2, 0, 1, 3, 4)
        grad_xp = np.zeros((c_in, h + 2 * pad, width + 2 * pad))
        for ki in range(k):
            for kj in range(k):
                grad_xp[
                    :,
                    ki : ki + stride * h_out : stride,
                    kj : kj + stride * w_out : stride,
                ] += grad_cols[:, :, :, ki, kj]
        grad_x = grad_xp[:, pad : pad + h, pad : pad + width] if pad else grad_xp
        if bias is not None:
            return grad_x, grad_w, g.sum(axis=(1, 2))
        return grad_x, grad_w

    inputs = [x, w] if bias is None else [x, w, bias]
    return record(inputs, out, backward)


def bilinear_sample(feature, points) -> Tensor:
    """Sample a (C, H, W) map at continuous (x, y) grid coordinates.

    Cell centers sit at integer coordinates: value[c, i, j] lives at
    x = j, y = i. Each sample interpolates the four surrounding
    centers; corners outside [0, W) x [0, H) contribute zero, so the
    function is total. Differentiable in both the feature values and
    the point coordinates.
    """
    feature, points = as_tensor(feature), as_tensor(points)
    if feature.ndim != 3:
        raise ShapeError(f"bilinear_sample expects (C,H,W) feature, got {feature.shape}")
    if points.ndim != 2 or points.shape[1] != 2:
        raise ShapeError(f"bilinear_sample expects (P,2) points, got {points.shape}")
    c, h, w = feature.shape
    x = points.data[:, 0]
    y = points.data[:, 1]
    x0 = np.floor(x).astype(np.intp)
    y0 = np.floor(y).astype(np.intp)
    fx = x - x0
    fy = y - y0

    corners = []  # (yi, xi, weight, dW/dfx, dW/dfy)
    corners.append((y0, x0, (1 - fx) * (1 - fy), -(1 - fy), -(1 - fx)))
    corners.append((y0, x0 + 1, fx * (1 - fy), (1 - fy), -fx))
    corners.append((y0 + 1, x0, (1 - fx) * fy, -fy, (1 - fx)))
    corners.append((y0 + 1, x0 + 1, fx * fy, fy, fx))

    out = np.zeros((points.shape[0], c))
    cached = []
    for yi, xi, wgt, dwx, dwy in corners:
        valid = (xi >= 0) & (xi < w) & (yi >= 0) & (yi < h)
        xi_c = np.clip(xi, 0, w - 1)
        yi_c = np.clip(yi, 0, h - 1)
        vals = feature.data[:, yi_c, xi_c].T * valid[:, None]  # (P, C)
        out += wgt[:, None] * vals
        cached.append((yi_c, xi_c, valid, wgt, dwx, dwy, vals))

    def backward(g):
        grad_f = np.zeros_like(feature.data)
        grad_p = np.zeros_like(points.data)
        for yi_c, xi_c, valid, wgt, dwx, dwy, vals in cached:
            contrib = (g * (wgt * valid)[:, None]).T  # (C, P)
            np.add.at(grad_f, (slice(None), yi_c, xi_c), contrib)
            gv = (g * vals).sum(axis=1)  # (P,)
            grad_p[:, 0] += gv * dwx
            grad_p[:, 1] += gv * dwy
        return grad_f, grad_p

    return record([feature, points], out, backward)
