from __future__ import annotations

from typing import Callable

import numpy as np

from .tensor import ShapeError, Tensor, backward, precision


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Max over coordinates of |a - n| / max(1e-8, |a| + |n|)."""
    a = np.asarray(analytic, dtype=np.float64).ravel()
    n = np.asarray(numeric, dtype=np.float64).ravel()
    if a.size == 0:
        return 0.0
    return float(np.max(np.abs(a - n) / np.maximum(1e-8, np.abs(a) + np.abs(n))))


def numeric_grad(fn: Callable[[Tensor], Tensor], point: np.ndarray, eps: float,
                 coords=None) -> np.ndarray:
    """Central differences of ``fn`` at ``point`` (only at ``coords`` if given)."""
    x = np.array(point, dtype=np.float64)
    flat = x.reshape(-1)
    idx = range(flat.size) if coords is None else coords
    out = np.zeros(len(idx) if coords is not None else flat.size)
    for j, i in enumerate(idx):
        orig = flat[i]
        flat[i] = orig + eps
        up = _scalar(fn(Tensor(x, dtype=np.float64)))
        flat[i] = orig - eps
        down = _scalar(fn(Tensor(x, dtype=np.float64)))
        flat[i] = orig
        out[j] = (up - down) / (2 * eps)
    return out if coords is not None else out.reshape(x.shape)


def _scalar(t: Tensor) -> float:
    if t.data.size != 1:
        raise ShapeError(f"grad_check needs a scalar-valued function, got shape {t.shape}")
    return float(t.data.reshape(-1)[0])


def grad_check(fn: Callable[[Tensor], Tensor], point, eps: float = 1e-3) -> float:
    """Compare reverse-mode gradients of ``fn`` at ``point`` against central differences.

    Both sides are evaluated in float64 so the comparison measures the
    backward rules rather than float32 cancellation in the difference quotient.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    data = point.data if isinstance(point, Tensor) else np.asarray(point)
    with precision(np.float64):
        x = Tensor(data, requires_grad=True, dtype=np.float64)
        out = fn(x)
        _scalar(out)
        grads = backward(out)
        analytic = grads.get(x, np.zeros_like(x.data))
        numeric = numeric_grad(fn, data, eps)
    return relative_error(analytic, numeric)


def parameter_grad_check(loss_fn: Callable[[], Tensor], params, n_coords: int = 40, eps: float = 1e-5,
                         seed: int = 0) -> float:
    """Check reverse-mode gradients of ``loss_fn()`` w.r.t. a random subset of parameter entries.

    ``params`` should already hold float64 data; coordinates are drawn
    uniformly over all entries and probed with central differences.
    """
    params = list(params)
    for p in params:
        p.data = np.ascontiguousarray(p.data)
        p.grad = None
    with precision(np.float64):
        backward(_as_root(loss_fn()))
        sizes = np.array([p.data.size for p in params])
        rng = np.random.default_rng(seed)
        flat_idx = rng.choice(int(sizes.sum()), size=min(n_coords, int(sizes.sum())), replace=False)
        owners = np.searchsorted(np.cumsum(sizes), flat_idx, side="right")
        offsets = flat_idx - np.concatenate([[0], np.cumsum(sizes)])[owners]
        analytic, numeric = [], []
        for o, k in zip(owners, offsets):
            p = params[o]
            grad = p.grad if p.grad is not None else np.zeros_like(p.data)
            analytic.append(grad.reshape(-1)[k])
            flat = p.data.reshape(-1)
            orig = flat[k]
            flat[k] = orig + eps
            up = _scalar(loss_fn())
            flat[k] = orig - eps
            down = _scalar(loss_fn())
            flat[k] = orig
            numeric.append((up - down) / (2 * eps))
    return relative_error(np.array(analytic), np.array(numeric))


def _as_root(t: Tensor) -> Tensor:
    _scalar(t)
    return t
