"""Multi-task objective: GA regression, placenta segmentation, preterm category."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from ..autograd import Tensor, ops
from ..nets.models import ModelOutput

DICE_SMOOTH = 1e-5


class NumericalError(FloatingPointError):
    pass


@dataclass(frozen=True)
class LossWeights:
    w_mse: float = 1.0
    w_dice: float = 1.0
    w_bce: float = 1.0
    w_cce: float = 0.5

    def __post_init__(self):
        vals = dataclasses.astuple(self)
        if not all(np.isfinite(vals)) or min(vals) < 0:
            raise ValueError(f"loss weights must be finite and non-negative: {vals}")
        if self.w_mse <= 0:
            raise ValueError("w_mse must be positive; regression is the main task")


def soft_dice_loss(logits: Tensor, mask: np.ndarray, smooth: float = DICE_SMOOTH) -> Tensor:
    p = ops.sigmoid(logits)
    g = Tensor(np.asarray(mask, dtype=p.data.dtype).reshape(p.shape))
    inter = ops.sum(ops.mul(p, g))
    denom = ops.add(ops.add(ops.sum(p), float(g.data.sum())), smooth)
    dice = ops.div(ops.add(ops.scale(inter, 2.0), smooth), denom)
    return ops.sub(1.0, dice)


def bce_with_logits(logits: Tensor, mask: np.ndarray) -> Tensor:
    """Mean of softplus(z) - y z, i.e. BCE(sigmoid(z), y) without forming log(p)."""
    y = Tensor(np.asarray(mask, dtype=logits.data.dtype).reshape(logits.shape))
    return ops.mean(ops.sub(ops.softplus(logits), ops.mul(y, logits)))


def cross_entropy(logits: Tensor, target: int) -> Tensor:
    return ops.scale(ops.index(ops.log_softmax(logits), slice(int(target), int(target) + 1)), -1.0)


def composite_loss(output: ModelOutput, ga_birth: float, category: int, mask, weights: LossWeights = LossWeights()):
    """Weighted sum of MSE, soft Dice, BCE and CCE (averaged over the branch heads).

    Returns (total tensor, dict of float parts).
    """
    terms = {}
    terms["mse"] = ops.sum(ops.square(ops.sub(output.ga_final, float(ga_birth))))
    if output.seg_logits is not None and mask is not None:
        terms["dice"] = soft_dice_loss(output.seg_logits, mask)
        terms["bce"] = bce_with_logits(output.seg_logits, mask)
    heads = [h for h in (output.class_logits_global, output.class_logits_local) if h is not None]
    cce = cross_entropy(heads[0], category)
    for h in heads[1:]:
        cce = ops.add(cce, cross_entropy(h, category))
    terms["cce"] = ops.scale(ops.sum(cce), 1.0 / len(heads))
    scale = {"mse": weights.w_mse, "dice": weights.w_dice, "bce": weights.w_bce, "cce": weights.w_cce}
    total = None
    parts = {}
    for name, t in terms.items():
        value = float(t.data.reshape(-1)[0])
        parts[name] = value
        if not np.isfinite(value):
            raise NumericalError(f"non-finite {name} loss ({value}); parts so far: {parts}")
        weighted = ops.scale(ops.reshape(t, ()), scale[name])
        total = weighted if total is None else ops.add(total, weighted)
    parts.setdefault("dice", 0.0)
    parts.setdefault("bce", 0.0)
    parts["total"] = float(total.data)
    return total, parts
