"""Placental patch selection, sliding-window grids and volume resampling."""

from __future__ import annotations

import itertools

import numpy as np
from scipy import ndimage

OVERLAP = 0.33
MAX_REJECTS = 1000


class NoValidPatchError(ValueError):
    pass


def mask_counts(mask: np.ndarray, patch_shape) -> np.ndarray:
    """Placental voxel count of the patch at every origin (summed-area table)."""
    m = (np.asarray(mask) > 0).astype(np.int64)
    sat = np.pad(m, ((1, 0), (1, 0), (1, 0))).cumsum(0).cumsum(1).cumsum(2)
    d, h, w = patch_shape
    nd, nh, nw = (n - p + 1 for n, p in zip(m.shape, patch_shape))
    if min(nd, nh, nw) < 1:
        raise NoValidPatchError(f"patch {tuple(patch_shape)} larger than volume {m.shape}")
    a = lambda z, y, x: sat[z:z + nd, y:y + nh, x:x + nw]  # noqa: E731
    return (a(d, h, w) - a(0, h, w) - a(d, 0, w) - a(d, h, 0)
            + a(0, 0, w) + a(0, h, 0) + a(d, 0, 0) - a(0, 0, 0))


def passes_overlap(count: int, patch_voxels: int, strict: bool, threshold: float = OVERLAP) -> bool:
    # exact rational comparison: count / voxels vs threshold in hundredths
    lhs, rhs = int(count) * 100, round(threshold * 100) * int(patch_voxels)
    return lhs > rhs if strict else lhs >= rhs


def overlap_fraction(mask_patch: np.ndarray) -> float:
    return float((np.asarray(mask_patch) > 0).sum()) / mask_patch.size


def valid_origins(mask: np.ndarray, patch_shape, strict: bool = False,
                  threshold: float = OVERLAP) -> np.ndarray:
    """All origins (row-major order) whose patch meets the overlap bound."""
    counts = mask_counts(mask, patch_shape)
    voxels = int(np.prod(patch_shape))
    cut = round(threshold * 100) * voxels
    ok = counts * 100 > cut if strict else counts * 100 >= cut
    return np.argwhere(ok)


def extract(volume: np.ndarray, origin, patch_shape) -> np.ndarray:
    z, y, x = (int(v) for v in origin)
    d, h, w = patch_shape
    return volume[z:z + d, y:y + h, x:x + w]


def sample_patch(volume: np.ndarray, mask: np.ndarray, patch_shape, seed,
                 threshold: float = OVERLAP, max_rejects: int = MAX_REJECTS):
    """Uniformly sample a patch with placental overlap >= ``threshold``.

    Rejection sampling over all origins; after ``max_rejects`` failures the
    valid set is enumerated and sampled directly. Returns (patch, origin).
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    shape = np.asarray(volume.shape)
    span = shape - np.asarray(patch_shape) + 1
    if np.any(span < 1):
        raise NoValidPatchError(f"patch {tuple(patch_shape)} larger than volume {tuple(shape)}")
    voxels = int(np.prod(patch_shape))
    mask_bin = np.asarray(mask) > 0
    for _ in range(max_rejects):
        origin = tuple(int(rng.integers(n)) for n in span)
        if passes_overlap(extract(mask_bin, origin, patch_shape).sum(), voxels, strict=False, threshold=threshold):
            return extract(volume, origin, patch_shape), origin
    candidates = valid_origins(mask_bin, patch_shape, strict=False, threshold=threshold)
    if len(candidates) == 0:
        raise NoValidPatchError("no patch position reaches the placental overlap threshold")
    origin = tuple(int(v) for v in candidates[rng.integers(len(candidates))])
    return extract(volume, origin, patch_shape), origin


def axis_starts(n: int, p: int, stride: int) -> list[int]:
    if stride < 1:
        raise ValueError("stride must be >= 1")
    if p > n:
        raise NoValidPatchError(f"patch extent {p} exceeds volume extent {n}")
    starts = list(range(0, n - p + 1, stride))
    if starts[-1] != n - p:
        starts.append(n - p)
    return starts


def sliding_window_origins(volume_shape, patch_shape, stride) -> list[tuple[int, int, int]]:
    """Stride grid per axis plus the final edge-aligned origin, in row-major order."""
    strides = [stride] * 3 if np.isscalar(stride) else list(stride)
    axes = [axis_starts(n, p, s) for n, p, s in zip(volume_shape, patch_shape, strides)]
    return list(itertools.product(*axes))


def resize(volume: np.ndarray, shape, order: int = 1) -> np.ndarray:
    """Resample to ``shape`` with voxel-centre alignment (order 1 trilinear, 0 nearest)."""
    src = np.asarray(volume.shape, dtype=np.float64)
    if tuple(volume.shape) == tuple(shape):
        return np.array(volume, copy=True)
    coords = [(np.arange(n) + 0.5) * (s / n) - 0.5 for n, s in zip(shape, src)]
    grid = np.meshgrid(*coords, indexing="ij")
    out = ndimage.map_coordinates(np.asarray(volume, dtype=np.float64), grid, order=order, mode="nearest")
    return out.astype(volume.dtype)
