"""Sliding-window inference over placental patches."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..autograd import no_grad
from ..data.categories import PretermCategory, categorize
from ..data.patches import (NoValidPatchError, OVERLAP, extract, mask_counts, passes_overlap, resize,
                            sliding_window_origins)


@dataclass
class Prediction:
    case_id: str
    ga_true_weeks: float
    ga_pred_weeks: float
    n_valid_patches: int = 1

    @property
    def category_true(self) -> PretermCategory:
        return categorize(self.ga_true_weeks)

    @property
    def category_pred(self) -> PretermCategory:
        # degenerate non-positive predictions still land in the earliest category
        return categorize(max(self.ga_pred_weeks, 1e-6))


def default_stride(patch_shape) -> tuple[int, ...]:
    return tuple(max(1, p // 2) for p in patch_shape)


def valid_window_origins(mask: np.ndarray, patch_shape, stride, threshold: float = OVERLAP):
    """Grid origins whose patch holds strictly more than ``threshold`` placenta."""
    counts = mask_counts(mask, patch_shape)
    voxels = int(np.prod(patch_shape))
    keep = []
    for origin in sliding_window_origins(mask.shape, patch_shape, stride):
        if passes_overlap(counts[origin], voxels, strict=True, threshold=threshold):
            keep.append(origin)
    return keep


def sliding_window_predict(model, case, stride=None, threshold: float = OVERLAP) -> Prediction:
    """Mean GA prediction over every (downsampled volume, valid patch) pair of a case."""
    cfg = model.config
    patch_shape = tuple(cfg.patch_shape)
    stride = default_stride(patch_shape) if stride is None else stride
    mask = np.asarray(case.placenta_mask) > 0
    origins = valid_window_origins(mask, patch_shape, stride, threshold)
    if not origins:
        raise NoValidPatchError(f"case {case.id}: no sliding-window patch has more than "
                                f"{threshold:.0%} placental tissue")
    volume = resize(np.asarray(case.t2star, dtype=np.float32), cfg.volume_shape, order=1)
    with no_grad():
        _, ga_g, cls_g = model.global_forward(volume)
        if model.variant != "puuma":
            value = float(ga_g.data.reshape(-1)[0])
            return Prediction(case.id, case.ga_birth_weeks, value, len(origins))
        total = 0.0
        for origin in origins:
            if not passes_overlap(extract(mask, origin, patch_shape).sum(), int(np.prod(patch_shape)),
                                  strict=True, threshold=threshold):
                raise AssertionError(f"patch at {origin} violates the inference overlap bound")
            patch = extract(case.t2star, origin, patch_shape)
            ga_l, cls_l = model.local_forward(np.ascontiguousarray(patch, dtype=np.float32))
            out = model.fuse(ga_g, cls_g, ga_l, cls_l, case.ga_scan_weeks)
            total += float(out.data.reshape(-1)[0])
    return Prediction(case.id, case.ga_birth_weeks, total / len(origins), len(origins))


def validation_mse(model, cases, stride=None) -> float:
    errs = [(sliding_window_predict(model, c, stride).ga_pred_weeks - c.ga_birth_weeks) ** 2
            for c in sorted(cases, key=lambda c: c.id)]
    return float(np.mean(errs))
