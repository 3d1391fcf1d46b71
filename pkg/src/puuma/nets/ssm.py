"""Diagonal selective state-space scan (S6-style) with zero-order-hold decay.

For an input sequence x[L, E] with input-dependent step sizes delta[L, E] and
projections B[L, N], C[L, N]:

    h_t = exp(delta_t * A) * h_{t-1} + (delta_t * x_t) B_t,   h_0 = 0
    y_t = h_t . C_t

where A[E, N] = -exp(a_log) is diagonal per channel.
"""

from __future__ import annotations

import numpy as np

from ..autograd import Tensor, ops
from ..autograd.conv import reference_enabled
from ..autograd.tensor import ShapeError, make_node
from .module import Module, he_normal, param, zeros

_BLOCK = 64


def _doubling_scan(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Inclusive scan of h_t = a_t h_{t-1} + b_t along axis 1 by recursive doubling.

    Returns (h, cumulative product of a) so blocks can be stitched together.
    """
    a = a.copy()
    h = b.copy()
    n = a.shape[1]
    k = 1
    while k < n:
        h[:, k:] = a[:, k:] * h[:, :-k] + h[:, k:]
        a[:, k:] = a[:, k:] * a[:, :-k]
        k *= 2
    return h, a


def linear_scan(a: np.ndarray, b: np.ndarray, block: int = _BLOCK) -> np.ndarray:
    """Solve h_t = a_t h_{t-1} + b_t (h_{-1} = 0) along axis 0.

    Fixed-size blocks are scanned in parallel, then block carries are resolved
    by the same routine on the (L / block)-long sequence of block summaries.
    Total work is O(L log block), i.e. linear in L.
    """
    if block < 2:
        raise ValueError("linear_scan block size must be >= 2")
    length = a.shape[0]
    if length <= block:
        return _doubling_scan(a[None], b[None])[0][0]
    nblk = -(-length // block)
    pad = nblk * block - length
    if pad:
        a = np.concatenate([a, np.ones((pad,) + a.shape[1:], a.dtype)])
        b = np.concatenate([b, np.zeros((pad,) + b.shape[1:], b.dtype)])
    tail = a.shape[1:]
    h_loc, a_loc = _doubling_scan(a.reshape((nblk, block) + tail), b.reshape((nblk, block) + tail))
    carry = linear_scan(a_loc[:, -1], h_loc[:, -1], block)
    prev = np.concatenate([np.zeros((1,) + tail, a.dtype), carry[:-1]])
    h = h_loc + a_loc * prev[:, None]
    return h.reshape((nblk * block,) + tail)[:length]


def selective_scan_reference(x, delta, A, B, C, force_zero_decay: bool = False) -> np.ndarray:
    """Step-by-step recurrence; the oracle for ``selective_scan``."""
    length, e = x.shape
    h = np.zeros((e, A.shape[1]), dtype=x.dtype)
    y = np.zeros_like(x)
    for t in range(length):
        decay = np.zeros_like(h) if force_zero_decay else np.exp(delta[t][:, None] * A)
        h = decay * h + (delta[t] * x[t])[:, None] * B[t][None, :]
        y[t] = h @ C[t]
    return y


def selective_scan(x: Tensor, delta: Tensor, A: Tensor, B: Tensor, C: Tensor,
                   force_zero_decay: bool = False) -> Tensor:
    """Differentiable selective scan; ``force_zero_decay`` pins exp(delta*A) to 0 (test hook)."""
    if x.ndim != 2 or x.shape[0] == 0:
        raise ShapeError(f"selective_scan needs a non-empty (L, E) sequence, got {x.shape}")
    length, e = x.shape
    n = A.shape[1]
    if delta.shape != x.shape or A.shape != (e, n) or B.shape != (length, n) or C.shape != (length, n):
        raise ShapeError(f"selective_scan: inconsistent shapes x{x.shape} delta{delta.shape} "
                         f"A{A.shape} B{B.shape} C{C.shape}")
    xd, dd, Ad, Bd, Cd = x.data, delta.data, A.data, B.data, C.data
    if reference_enabled():
        y = selective_scan_reference(xd, dd, Ad, Bd, Cd, force_zero_decay)
        return make_node(y, (x, delta, A, B, C), _scan_backward(xd, dd, Ad, Bd, Cd, force_zero_decay), "ssm_scan")
    dA = np.zeros((length, e, n), xd.dtype) if force_zero_decay else np.exp(dd[:, :, None] * Ad[None])
    dx = dd * xd
    u = dx[:, :, None] * Bd[:, None, :]
    h = linear_scan(dA, u)
    y = np.einsum("len,ln->le", h, Cd)
    return make_node(y, (x, delta, A, B, C),
                     _scan_backward(xd, dd, Ad, Bd, Cd, force_zero_decay, dA, h), "ssm_scan")


def _scan_backward(xd, dd, Ad, Bd, Cd, force_zero_decay, dA=None, h=None):
    def bw(g):
        nonlocal dA, h
        length, e = xd.shape
        n = Ad.shape[1]
        if dA is None:
            dA = np.zeros((length, e, n), xd.dtype) if force_zero_decay else np.exp(dd[:, :, None] * Ad[None])
            h = linear_scan(dA, (dd * xd)[:, :, None] * Bd[:, None, :])
        gC = np.einsum("le,len->ln", g, h)
        gh = g[:, :, None] * Cd[:, None, :]
        shifted = np.concatenate([dA[1:], np.zeros((1, e, n), dA.dtype)])
        lam = linear_scan(shifted[::-1], gh[::-1])[::-1]
        h_prev = np.concatenate([np.zeros((1, e, n), h.dtype), h[:-1]])
        if force_zero_decay:
            gz = np.zeros_like(lam)
        else:
            gz = lam * h_prev * dA
        lamB = np.einsum("len,ln->le", lam, Bd)
        gdelta = (gz * Ad[None]).sum(axis=2) + lamB * xd
        gA = (gz * dd[:, :, None]).sum(axis=0)
        gB = np.einsum("len,le->ln", lam, dd * xd)
        gx = lamB * dd
        return gx, gdelta, gA, gB, gC

    return bw


class SsmParams(Module):
    """Projections producing per-step (delta, B, C) plus the per-channel log-decay."""

    def __init__(self, rng: np.random.Generator, channels: int, state_dim: int):
        if state_dim < 1 or channels < 1:
            raise ValueError("state_dim and channels must be >= 1")
        self.channels = channels
        self.state_dim = state_dim
        self.w_delta = he_normal(rng, (channels, channels), channels)
        self.b_delta = zeros((channels,))
        self.w_b = he_normal(rng, (state_dim, channels), channels)
        self.w_c = he_normal(rng, (state_dim, channels), channels)
        self.a_log = param(np.log(np.tile(np.arange(1, state_dim + 1, dtype=np.float64), (channels, 1))))

    def decay_matrix(self) -> Tensor:
        return ops.scale(ops.exp(self.a_log), -1.0)


def ssm_scan(x: Tensor, params: SsmParams, force_zero_decay: bool = False) -> Tensor:
    """Selective scan of x[L, C] with (delta, B, C) projected from x itself."""
    if x.ndim != 2 or x.shape[1] != params.channels:
        raise ShapeError(f"ssm_scan: input {x.shape} does not match {params.channels} channels")
    delta = ops.softplus(ops.linear(x, params.w_delta, params.b_delta))
    B = ops.linear(x, params.w_b)
    C = ops.linear(x, params.w_c)
    return selective_scan(x, delta, params.decay_matrix(), B, C, force_zero_decay)
