"""Volumetric convolution and nearest-neighbour upsampling on ``(C, D, H, W)`` tensors.

The fast path lowers convolution to one matmul over an im2col buffer whose
rows are ordered (c_in, kd, kh, kw); each output value is therefore a single
BLAS dot product over that order. ``conv3d_reference`` is the nested-loop
definition that the fast path is tested against.
"""

from __future__ import annotations

import contextlib

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .tensor import ShapeError, Tensor, make_node

_REFERENCE = {"on": False}


@contextlib.contextmanager
def reference_kernels():
    """Route conv3d (and the selective scan) through the naive loop kernels."""
    prev = _REFERENCE["on"]
    _REFERENCE["on"] = True
    try:
        yield
    finally:
        _REFERENCE["on"] = prev


def reference_enabled() -> bool:
    return _REFERENCE["on"]


def conv_output_shape(spatial, k: int, stride: int, padding: int) -> tuple[int, ...]:
    out = tuple((n + 2 * padding - k) // stride + 1 for n in spatial)
    if any(n < 1 for n in out):
        raise ShapeError(f"conv3d: non-positive output extent {out} for input {tuple(spatial)}, "
                         f"kernel {k}, stride {stride}, padding {padding}")
    return out


def _validate(x_shape, w_shape, stride, padding):
    if len(x_shape) != 4 or len(w_shape) != 5:
        raise ShapeError(f"conv3d expects input (C,D,H,W) and kernel (Co,Ci,k,k,k), "
                         f"got {x_shape} and {w_shape}")
    k = w_shape[2]
    if w_shape[1] != x_shape[0] or w_shape[3] != k or w_shape[4] != k:
        raise ShapeError(f"conv3d: kernel {w_shape} does not match input {x_shape}")
    if k % 2 == 0:
        raise ShapeError(f"conv3d: kernel size must be odd, got {k}")
    if stride < 1 or padding < 0:
        raise ShapeError(f"conv3d: invalid stride {stride} or padding {padding}")
    return k, conv_output_shape(x_shape[1:], k, stride, padding)


def conv3d_reference(x: np.ndarray, w: np.ndarray, b: np.ndarray | None = None,
                     stride: int = 1, padding: int = 0) -> np.ndarray:
    """Cross-correlation by explicit loops; accumulates in (c_in, kd, kh, kw) order."""
    k, (od, oh, ow) = _validate(x.shape, w.shape, stride, padding)
    xp = np.pad(x, ((0, 0),) + ((padding, padding),) * 3)
    co, ci = w.shape[:2]
    out = np.zeros((co, od, oh, ow), dtype=x.dtype)
    for o in range(co):
        for z in range(od):
            for y in range(oh):
                for q in range(ow):
                    acc = x.dtype.type(0)
                    for c in range(ci):
                        for i in range(k):
                            for j in range(k):
                                for m in range(k):
                                    acc += w[o, c, i, j, m] * xp[c, z * stride + i, y * stride + j, q * stride + m]
                    out[o, z, y, q] = acc + (b[o] if b is not None else 0)
    return out


def _im2col(xp: np.ndarray, k: int, stride: int, out_shape) -> np.ndarray:
    win = sliding_window_view(xp, (k, k, k), axis=(1, 2, 3))[:, ::stride, ::stride, ::stride]
    win = win[:, :out_shape[0], :out_shape[1], :out_shape[2]]
    c = xp.shape[0]
    return win.transpose(0, 4, 5, 6, 1, 2, 3).reshape(c * k ** 3, -1)


def conv3d(x: Tensor, weight: Tensor, bias: Tensor | None = None, stride: int = 1,
           padding: int = 0) -> Tensor:
    k, out_sp = _validate(x.shape, weight.shape, stride, padding)
    co, ci = weight.shape[:2]
    p = padding
    xd, wd = x.data, weight.data
    xp = np.pad(xd, ((0, 0),) + ((p, p),) * 3) if p else xd
    w2 = wd.reshape(co, -1)
    if _REFERENCE["on"]:
        out = conv3d_reference(xd, wd, None if bias is None else bias.data, stride, p)
        cols = None
    else:
        cols = _im2col(xp, k, stride, out_sp)
        out = (w2 @ cols).reshape((co,) + out_sp)
        if bias is not None:
            out = out + bias.data.reshape(co, 1, 1, 1)
    parents = (x, weight) if bias is None else (x, weight, bias)

    def bw(g):
        g2 = g.reshape(co, -1)
        gw = gx = None
        if weight.requires_grad:
            c = cols if cols is not None else _im2col(xp, k, stride, out_sp)
            gw = (g2 @ c.T).reshape(wd.shape)
        if x.requires_grad:
            gcols = (w2.T @ g2).reshape((ci, k, k, k) + out_sp)
            gxp = np.zeros(xp.shape, dtype=xd.dtype)
            od, oh, ow = out_sp
            for i in range(k):
                for j in range(k):
                    for m in range(k):
                        gxp[:, i:i + stride * (od - 1) + 1:stride,
                            j:j + stride * (oh - 1) + 1:stride,
                            m:m + stride * (ow - 1) + 1:stride] += gcols[:, i, j, m]
            gx = gxp[:, p:p + xd.shape[1], p:p + xd.shape[2], p:p + xd.shape[3]] if p else gxp
            gx = np.ascontiguousarray(gx)
        if bias is None:
            return gx, gw
        return gx, gw, g2.sum(axis=1)

    return make_node(np.ascontiguousarray(out), parents, bw, "conv3d")


def upsample_nearest(x: Tensor, factor: int = 2) -> Tensor:
    """Repeat every voxel ``factor`` times along each spatial axis."""
    if x.ndim != 4:
        raise ShapeError(f"upsample_nearest expects (C,D,H,W), got {x.shape}")
    f = int(factor)
    out = x.data.repeat(f, axis=1).repeat(f, axis=2).repeat(f, axis=3)
    c, d, h, w = x.shape

    def bw(g):
        return (g.reshape(c, d, f, h, f, w, f).sum(axis=(2, 4, 6)),)

    return make_node(out, (x,), bw, "upsample_nearest")
