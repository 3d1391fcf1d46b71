"""Probabilistic spatial and intensity augmentation of (T2* volume, mask) pairs.

Spatial transforms resample the volume trilinearly and the mask by nearest
neighbour with the same coordinates; intensity transforms touch only the
volume. Results are clipped to [0, 300] ms.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .relaxometry import T2STAR_MAX_MS


@dataclass(frozen=True)
class AugmentConfig:
    p_affine: float = 0.3
    p_elastic: float = 0.3
    p_zoom: float = 0.3
    p_contrast: float = 0.3
    p_bias_field: float = 0.3
    p_noise: float = 0.3
    rotate_deg: float = 10.0
    translate_frac: float = 0.05
    elastic_alpha: float = 1.5
    elastic_sigma: float = 3.0
    zoom_range: tuple[float, float] = (0.9, 1.1)
    gamma_range: tuple[float, float] = (0.8, 1.25)
    bias_strength: float = 0.15
    noise_sigma: float = 5.0

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in dataclasses.asdict(self).items()}

    @classmethod
    def from_dict(cls, d: dict) -> "AugmentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown augmentation keys: {sorted(unknown)}")
        d = dict(d)
        for k in ("zoom_range", "gamma_range"):
            if k in d:
                d[k] = tuple(d[k])
        return cls(**d)

    @classmethod
    def disabled(cls) -> "AugmentConfig":
        return cls(p_affine=0.0, p_elastic=0.0, p_zoom=0.0, p_contrast=0.0, p_bias_field=0.0, p_noise=0.0)


def _resample(volume, mask, coords):
    vol = ndimage.map_coordinates(volume.astype(np.float64), coords, order=1, mode="nearest")
    msk = ndimage.map_coordinates(mask.astype(np.float64), coords, order=0, mode="constant", cval=0.0)
    return vol.astype(volume.dtype), (msk > 0.5).astype(mask.dtype)


def _centred_grid(shape):
    grid = np.stack(np.meshgrid(*[np.arange(n, dtype=np.float64) for n in shape], indexing="ij"))
    centre = (np.asarray(shape, dtype=np.float64) - 1) / 2
    return grid, centre


def affine(volume, mask, matrix, offset=(0.0, 0.0, 0.0)):
    """Sample output voxel x from input at centre + matrix @ (x - centre) + offset."""
    matrix = np.asarray(matrix, dtype=np.float64)
    offset = np.asarray(offset, dtype=np.float64)
    if np.array_equal(matrix, np.eye(3)) and not offset.any():
        return volume.copy(), mask.copy()
    if abs(np.linalg.det(matrix)) < 1e-6:
        raise ValueError("degenerate affine transform")
    grid, centre = _centred_grid(volume.shape)
    rel = grid - centre[:, None, None, None]
    coords = np.tensordot(matrix, rel, axes=1) + (centre + offset)[:, None, None, None]
    return _resample(volume, mask, coords)


def zoom(volume, mask, factor: float):
    """Magnify about the volume centre by ``factor`` keeping the array shape."""
    if not factor > 0:
        raise ValueError(f"zoom factor must be positive, got {factor}")
    return affine(volume, mask, np.eye(3) / factor)


def elastic(volume, mask, rng: np.random.Generator, alpha: float, sigma: float):
    grid, _ = _centred_grid(volume.shape)
    disp = np.stack([ndimage.gaussian_filter(rng.standard_normal(volume.shape), sigma) for _ in range(3)])
    disp *= alpha / (np.abs(disp).max() + 1e-12)
    return _resample(volume, mask, grid + disp)


def rotation_matrix(angles_rad) -> np.ndarray:
    a, b, c = angles_rad
    rx = np.array([[1, 0, 0], [0, np.cos(a), -np.sin(a)], [0, np.sin(a), np.cos(a)]])
    ry = np.array([[np.cos(b), 0, np.sin(b)], [0, 1, 0], [-np.sin(b), 0, np.cos(b)]])
    rz = np.array([[np.cos(c), -np.sin(c), 0], [np.sin(c), np.cos(c), 0], [0, 0, 1]])
    return rz @ ry @ rx


def contrast(volume, gamma: float):
    v = np.clip(volume.astype(np.float64), 0, T2STAR_MAX_MS) / T2STAR_MAX_MS
    return (T2STAR_MAX_MS * v ** gamma).astype(volume.dtype)


def bias_field(volume, rng: np.random.Generator, strength: float):
    """Multiply by exp of a random quadratic polynomial over normalized coordinates."""
    grid = np.stack(np.meshgrid(*[np.linspace(-1, 1, n) for n in volume.shape], indexing="ij"))
    terms = [grid[0], grid[1], grid[2], grid[0] ** 2, grid[1] ** 2, grid[2] ** 2,
             grid[0] * grid[1], grid[0] * grid[2], grid[1] * grid[2]]
    coef = rng.uniform(-strength, strength, len(terms))
    log_field = sum(c * t for c, t in zip(coef, terms))
    return (volume * np.exp(log_field)).astype(volume.dtype)


def gaussian_noise(volume, rng: np.random.Generator, sigma: float):
    return (volume + rng.normal(0.0, sigma, volume.shape)).astype(volume.dtype)


def augment(volume: np.ndarray, mask: np.ndarray, seed, config: AugmentConfig = AugmentConfig()):
    """Apply each of the six augmentations independently with its probability."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    vol, msk = volume, mask
    # one uniform per augmentation, drawn up front so the schedule is seed-stable
    draws = rng.random(6)
    if draws[0] < config.p_affine:
        angles = np.deg2rad(rng.uniform(-config.rotate_deg, config.rotate_deg, 3))
        shift = rng.uniform(-config.translate_frac, config.translate_frac, 3) * np.asarray(vol.shape)
        vol, msk = affine(vol, msk, rotation_matrix(angles), shift)
    if draws[1] < config.p_elastic:
        vol, msk = elastic(vol, msk, rng, config.elastic_alpha, config.elastic_sigma)
    if draws[2] < config.p_zoom:
        vol, msk = zoom(vol, msk, rng.uniform(*config.zoom_range))
    if draws[3] < config.p_contrast:
        vol = contrast(vol, rng.uniform(*config.gamma_range))
    if draws[4] < config.p_bias_field:
        vol = bias_field(vol, rng, config.bias_strength)
    if draws[5] < config.p_noise:
        vol = gaussian_noise(vol, rng, config.noise_sigma)
    if vol is volume:
        return volume.copy(), mask.copy()
    if msk is mask:
        msk = mask.copy()
    return np.clip(vol, 0.0, T2STAR_MAX_MS).astype(volume.dtype), msk
