"""Mono-exponential T2* fitting of multi-echo magnitude signals."""

from __future__ import annotations

import numpy as np

T2STAR_MAX_MS = 300.0


def fit_t2star(signals, echo_times, clip_ms: float = T2STAR_MAX_MS):
    """Log-linear least-squares fit of ln S(TE) = ln S0 - TE / T2*.

    ``signals`` has echoes on the last axis. Returns ``(t2star_ms, flagged)``:
    voxels with any non-positive sample get T2* = 0 and ``flagged`` set;
    non-negative slopes (no decay) map to the clip value.
    """
    te = np.asarray(echo_times, dtype=np.float64)
    if te.ndim != 1 or te.size < 2:
        raise ValueError("at least two echo times are required")
    if np.any(np.diff(te) <= 0):
        raise ValueError("echo times must be strictly increasing")
    s = np.asarray(signals, dtype=np.float64)
    if s.shape[-1] != te.size:
        raise ValueError(f"signals have {s.shape[-1]} echoes but {te.size} echo times given")
    flagged = np.any(s <= 0, axis=-1)
    logs = np.log(np.where(s > 0, s, 1.0))
    tc = te - te.mean()
    slope = (logs * tc).sum(axis=-1) / (tc * tc).sum()
    with np.errstate(divide="ignore"):
        t2 = np.where(slope < 0, -1.0 / np.where(slope < 0, slope, -1.0), np.inf)
    t2 = np.clip(t2, 0.0, clip_ms)
    t2 = np.where(flagged, 0.0, t2)
    return t2, flagged


def decay_signals(s0, t2star_ms, echo_times) -> np.ndarray:
    """Noiseless mono-exponential signals with echoes on a new last axis."""
    te = np.asarray(echo_times, dtype=np.float64)
    s0 = np.asarray(s0, dtype=np.float64)[..., None]
    t2 = np.asarray(t2star_ms, dtype=np.float64)[..., None]
    return s0 * np.exp(-te / t2)
