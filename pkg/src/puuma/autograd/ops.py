"""Differentiable operator set used by every network in the package.

Binary ops accept equal shapes, a single-element operand, or an operand
whose shape is a prefix of the other's followed by singleton dims
(``(C, 1, 1, 1)`` against ``(C, D, H, W)``). Anything else needs an
explicit reshape.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np
from scipy.special import expit

from .tensor import ShapeError, Tensor, as_tensor, make_node


def _check_broadcast(a: tuple, b: tuple, op: str) -> None:
    if a == b:
        return
    if int(np.prod(a)) == 1 and len(a) <= len(b):
        return
    if int(np.prod(b)) == 1 and len(b) <= len(a):
        return
    if len(a) == len(b):
        small, big = (a, b) if np.prod(a) < np.prod(b) else (b, a)
        k = 0
        while k < len(big) and small[k] == big[k]:
            k += 1
        if all(s == 1 for s in small[k:]):
            return
    raise ShapeError(f"{op}: incompatible shapes {a} and {b}")


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    if len(shape) < g.ndim:
        return np.asarray(g.sum(), dtype=g.dtype).reshape(shape)
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    return g.sum(axis=axes, keepdims=True).reshape(shape)


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a.shape, b.shape, "add")
    sa, sb = a.shape, b.shape
    return make_node(a.data + b.data, (a, b),
                     lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)), "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a.shape, b.shape, "sub")
    sa, sb = a.shape, b.shape
    return make_node(a.data - b.data, (a, b),
                     lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)), "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a.shape, b.shape, "mul")
    ad, bd = a.data, b.data

    def bw(g):
        return (_unbroadcast(g * bd, ad.shape) if a.requires_grad else None,
                _unbroadcast(g * ad, bd.shape) if b.requires_grad else None)

    return make_node(ad * bd, (a, b), bw, "mul")


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a.shape, b.shape, "div")
    ad, bd = a.data, b.data
    out = ad / bd

    def bw(g):
        return (_unbroadcast(g / bd, ad.shape) if a.requires_grad else None,
                _unbroadcast(-g * out / bd, bd.shape) if b.requires_grad else None)

    return make_node(out, (a, b), bw, "div")


def scale(x: Tensor, c: float) -> Tensor:
    c = float(c)
    return make_node(x.data * x.data.dtype.type(c), (x,), lambda g: (g * g.dtype.type(c),), "scale")


def square(x: Tensor) -> Tensor:
    xd = x.data
    return make_node(xd * xd, (x,), lambda g: (2 * g * xd,), "square")


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.data)
    return make_node(out, (x,), lambda g: (g * out,), "exp")


def log(x: Tensor) -> Tensor:
    xd = x.data
    return make_node(np.log(xd), (x,), lambda g: (g / xd,), "log")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    ad, bd = a.data, b.data
    return make_node(ad @ bd, (a, b), lambda g: (g @ bd.T, ad.T @ g), "matmul")


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Affine map ``x @ weight.T + bias`` over the last axis of a 1-D or 2-D input."""
    if x.ndim not in (1, 2) or weight.ndim != 2 or x.shape[-1] != weight.shape[1]:
        raise ShapeError(f"linear: input {x.shape} does not match weight {weight.shape}")
    if bias is not None and bias.shape != (weight.shape[0],):
        raise ShapeError(f"linear: bias {bias.shape} does not match weight {weight.shape}")
    xd, wd = x.data, weight.data
    out = xd @ wd.T
    if bias is not None:
        out = out + bias.data
    parents = (x, weight) if bias is None else (x, weight, bias)

    def bw(g):
        gx = g @ wd if x.requires_grad else None
        gw = (np.outer(g, xd) if xd.ndim == 1 else g.T @ xd) if weight.requires_grad else None
        if bias is None:
            return gx, gw
        gb = g if g.ndim == 1 else g.sum(axis=0)
        return gx, gw, gb

    return make_node(out, parents, bw, "linear")


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return make_node(np.where(mask, x.data, 0).astype(x.data.dtype), (x,), lambda g: (g * mask,), "relu")


def leaky_relu(x: Tensor, slope: float = 0.01) -> Tensor:
    xd = x.data
    factor = np.where(xd > 0, 1.0, slope).astype(xd.dtype)
    return make_node(xd * factor, (x,), lambda g: (g * factor,), "leaky_relu")


def sigmoid(x: Tensor) -> Tensor:
    out = expit(x.data)
    return make_node(out, (x,), lambda g: (g * out * (1 - out),), "sigmoid")


def silu(x: Tensor) -> Tensor:
    xd = x.data
    sig = expit(xd)
    return make_node(xd * sig, (x,), lambda g: (g * (sig * (1 + xd * (1 - sig))),), "silu")


def softplus(x: Tensor) -> Tensor:
    xd = x.data
    return make_node(np.logaddexp(xd.dtype.type(0), xd), (x,), lambda g: (g * expit(xd),), "softplus")


def softmax(x: Tensor) -> Tensor:
    """Softmax over the last axis."""
    if x.ndim == 0:
        raise ShapeError("softmax over an empty axis")
    z = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=-1, keepdims=True)
    return make_node(out, (x,), lambda g: (out * (g - (g * out).sum(axis=-1, keepdims=True)),), "softmax")


def log_softmax(x: Tensor) -> Tensor:
    if x.ndim == 0:
        raise ShapeError("log_softmax over an empty axis")
    z = x.data - x.data.max(axis=-1, keepdims=True)
    out = z - np.log(np.exp(z).sum(axis=-1, keepdims=True))
    probs = np.exp(out)
    return make_node(out, (x,), lambda g: (g - probs * g.sum(axis=-1, keepdims=True),), "log_softmax")


def instance_norm(x: Tensor, weight: Tensor | None = None, bias: Tensor | None = None,
                  eps: float = 1e-5) -> Tensor:
    """Normalize each channel of a ``(C, ...)`` tensor over its remaining axes."""
    if x.ndim < 2:
        raise ShapeError(f"instance_norm needs (C, ...) input, got {x.shape}")
    c = x.shape[0]
    flat = x.data.reshape(c, -1)
    mu = flat.mean(axis=1, keepdims=True)
    cen = flat - mu
    inv = 1.0 / np.sqrt((cen * cen).mean(axis=1, keepdims=True) + flat.dtype.type(eps))
    xhat = cen * inv
    w = weight.data.reshape(c, 1) if weight is not None else None
    out = xhat * w if w is not None else xhat
    if bias is not None:
        out = out + bias.data.reshape(c, 1)
    parents = [x]
    if weight is not None:
        parents.append(weight)
    if bias is not None:
        parents.append(bias)

    def bw(g):
        g2 = g.reshape(c, -1)
        gxhat = g2 * w if w is not None else g2
        gx = inv * (gxhat - gxhat.mean(axis=1, keepdims=True)
                    - xhat * (gxhat * xhat).mean(axis=1, keepdims=True))
        res = [gx.reshape(x.shape)]
        if weight is not None:
            res.append((g2 * xhat).sum(axis=1).reshape(weight.shape))
        if bias is not None:
            res.append(g2.sum(axis=1).reshape(bias.shape))
        return tuple(res)

    return make_node(out.reshape(x.shape), parents, bw, "instance_norm")


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    ref = tensors[0].shape
    ax = axis % len(ref) if ref else 0
    for t in tensors[1:]:
        if t.ndim != len(ref) or any(t.shape[i] != ref[i] for i in range(len(ref)) if i != ax):
            raise ShapeError(f"concat: incompatible shapes {ref} and {t.shape} on axis {axis}")
    out = np.concatenate([t.data for t in tensors], axis=ax)
    bounds = np.cumsum([t.shape[ax] for t in tensors])[:-1]

    def bw(g):
        return tuple(np.split(g, bounds, axis=ax))

    return make_node(out, tensors, bw, "concat")


def reshape(x: Tensor, shape) -> Tensor:
    shape = tuple(int(s) for s in shape)
    try:
        out = x.data.reshape(shape)
    except ValueError as exc:
        raise ShapeError(f"reshape: cannot view {x.shape} as {shape}") from exc
    src = x.shape
    return make_node(out, (x,), lambda g: (g.reshape(src),), "reshape")


def transpose(x: Tensor, axes=None) -> Tensor:
    axes = tuple(reversed(range(x.ndim))) if axes is None else tuple(axes)
    inv = tuple(np.argsort(axes))
    return make_node(np.ascontiguousarray(x.data.transpose(axes)), (x,),
                     lambda g: (np.ascontiguousarray(g.transpose(inv)),), "transpose")


def index(x: Tensor, idx) -> Tensor:
    """Basic (slice/int) indexing."""
    out = np.array(x.data[idx], copy=True)
    src_shape, dtype = x.shape, x.data.dtype

    def bw(g):
        full = np.zeros(src_shape, dtype=dtype)
        full[idx] = g
        return (full,)

    return make_node(out, (x,), bw, "index")


def sum(x: Tensor, axis=None) -> Tensor:  # noqa: A001
    src = x.shape
    out = np.asarray(x.data.sum(axis=axis), dtype=x.data.dtype)

    def bw(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, src).copy(),)

    return make_node(out, (x,), bw, "sum")


def mean(x: Tensor, axis=None) -> Tensor:
    n = x.size if axis is None else int(np.prod([x.shape[a] for a in np.atleast_1d(axis)]))
    return scale(sum(x, axis), 1.0 / n)
