"""Batch-size-1 training with class-balanced sampling, checkpoint cadence and model selection."""

from __future__ import annotations

import csv
import dataclasses
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..autograd import backward
from ..data.augment import AugmentConfig, augment
from ..data.patches import NoValidPatchError, resize, sample_patch
from ..data.splits import BalancedSampler
from ..evaluation.inference import validation_mse
from ..nets.checkpoint import checkpoint_bytes, checkpoint_from_bytes
from ..nets.models import Model
from .loss import LossWeights, NumericalError, composite_loss
from .optim import Adam, cosine_lr

log = logging.getLogger(__name__)

HISTORY_COLUMNS = ["step", "lr", "total_loss", "mse", "dice", "bce", "cce", "val_mse"]


@dataclass(frozen=True)
class TrainConfig:
    total_steps: int = 100
    learning_rate: float = 1e-4
    min_learning_rate: float = 1e-6
    batch_size: int = 1
    fine_tune_start_step: int | None = None
    checkpoint_every: int = 50
    fine_tune_checkpoint_every: int = 5
    seed: int = 0
    loss_weights: LossWeights = LossWeights()
    augment: AugmentConfig = AugmentConfig()
    val_stride: tuple[int, int, int] | None = None
    validate: bool = True

    def __post_init__(self):
        if self.batch_size != 1:
            raise ValueError("batch_size must be 1")
        if self.total_steps < 1:
            raise ValueError("total_steps must be >= 1")
        if self.fine_tune_start > self.total_steps:
            raise ValueError("fine_tune_start_step must not exceed total_steps")

    @property
    def fine_tune_start(self) -> int:
        # final 20% of the run when unset
        if self.fine_tune_start_step is None:
            return int(round(0.8 * self.total_steps))
        return int(self.fine_tune_start_step)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["val_stride"] = list(self.val_stride) if self.val_stride else None
        d["augment"] = self.augment.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown train keys: {sorted(unknown)}")
        d = dict(d)
        if "loss_weights" in d:
            d["loss_weights"] = LossWeights(**d["loss_weights"])
        if "augment" in d:
            d["augment"] = AugmentConfig.from_dict(d["augment"])
        if d.get("val_stride") is not None:
            d["val_stride"] = tuple(d["val_stride"])
        return cls(**d)


def checkpoint_steps(total_steps: int, fine_tune_start: int, every: int = 50, fine_every: int = 5) -> list[int]:
    """Step 0, every ``every`` steps before fine-tuning, every ``fine_every`` from its start, and the last step."""
    steps = {0, total_steps}
    steps.update(s for s in range(every, fine_tune_start, every))
    steps.update(range(fine_tune_start, total_steps + 1, fine_every))
    return sorted(s for s in steps if 0 <= s <= total_steps)


@dataclass
class Checkpoint:
    step: int
    blob: bytes
    val_mse: float | None = None
    path: Path | None = None

    def load(self) -> Model:
        return checkpoint_from_bytes(self.blob)


@dataclass
class TrainResult:
    checkpoints: list[Checkpoint]
    history: list[dict]
    aborted: str | None = None
    final_loss: float = float("nan")


class TrainingAborted(RuntimeError):
    def __init__(self, message: str, result: TrainResult):
        super().__init__(message)
        self.result = result


def prepare_sample(case, model_cfg, rng: np.random.Generator, aug: AugmentConfig):
    """Augment at native resolution, then downsample the volume and cut one placental patch."""
    vol, mask = augment(case.t2star, case.placenta_mask, rng, aug)
    try:
        patch, _ = sample_patch(vol, mask, model_cfg.patch_shape, rng)
    except NoValidPatchError:
        # spatial augmentation pushed the placenta out of reach; fall back to the raw case
        vol, mask = case.t2star, case.placenta_mask
        patch, _ = sample_patch(vol, mask, model_cfg.patch_shape, rng)
    vol_ds = resize(np.asarray(vol, dtype=np.float32), model_cfg.volume_shape, order=1)
    mask_ds = resize(np.asarray(mask), model_cfg.volume_shape, order=0)
    return vol_ds, np.ascontiguousarray(patch, dtype=np.float32), mask_ds


def train_step(model: Model, opt: Adam, sample, case, weights: LossWeights, lr: float) -> dict:
    vol_ds, patch, mask_ds = sample
    model.zero_grad()
    out = model(vol_ds, patch, case.ga_scan_weeks)
    total, parts = composite_loss(out, case.ga_birth_weeks, int(case.category), mask_ds, weights)
    backward(total)
    opt.step(lr)
    return parts


def train(model: Model, train_cases, val_cases, config: TrainConfig, out_dir=None) -> TrainResult:
    """Run the configured number of steps; returns checkpoints (with validation MSE) and history."""
    if not train_cases:
        raise ValueError("empty training split")
    if config.validate and not val_cases:
        raise ValueError("empty validation split")
    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
    sampler = BalancedSampler([c.category for c in train_cases], seed=config.seed)
    opt = Adam(model.parameters())
    cadence = set(checkpoint_steps(config.total_steps, config.fine_tune_start,
                                   config.checkpoint_every, config.fine_tune_checkpoint_every))
    result = TrainResult(checkpoints=[], history=[])

    def save(step: int, row: dict) -> None:
        blob = checkpoint_bytes(model)
        ck = Checkpoint(step, blob)
        if config.validate:
            ck.val_mse = validation_mse(model, val_cases, config.val_stride)
            row["val_mse"] = ck.val_mse
        if out_dir is not None:
            ck.path = out_dir / f"ckpt_{step}.pumc"
            ck.path.write_bytes(blob)
        result.checkpoints.append(ck)

    row0 = {"step": 0, "lr": cosine_lr(0, config.total_steps, config.learning_rate, config.min_learning_rate)}
    save(0, row0)
    result.history.append(row0)
    for step in range(1, config.total_steps + 1):
        lr = cosine_lr(step - 1, config.total_steps, config.learning_rate, config.min_learning_rate)
        case = train_cases[sampler.draw()]
        rng = np.random.default_rng([config.seed, step])
        sample = prepare_sample(case, model.config, rng, config.augment)
        try:
            parts = train_step(model, opt, sample, case, config.loss_weights, lr)
        except NumericalError as exc:
            result.aborted = f"step {step}: {exc}"
            raise TrainingAborted(result.aborted, result) from exc
        if not all(np.isfinite(p.data).all() for p in model.parameters()):
            result.aborted = f"step {step}: non-finite parameters"
            raise TrainingAborted(result.aborted, result)
        row = {"step": step, "lr": lr, "total_loss": parts["total"], "mse": parts["mse"],
               "dice": parts["dice"], "bce": parts["bce"], "cce": parts["cce"]}
        result.final_loss = parts["total"]
        if step in cadence:
            save(step, row)
            log.info("step %d loss %.4f val_mse %s", step, parts["total"], row.get("val_mse"))
        result.history.append(row)
    return result


def select_best(checkpoints: list[Checkpoint], val_cases=None, stride=None) -> tuple[Checkpoint, Model]:
    """Checkpoint with the lowest validation MSE; ties go to the later step."""
    if not checkpoints:
        raise ValueError("no checkpoints to select from")
    best = None
    for ck in sorted(checkpoints, key=lambda c: c.step):
        if ck.val_mse is None:
            if val_cases is None:
                raise ValueError(f"checkpoint {ck.step} has no validation MSE and no validation set was given")
            ck.val_mse = validation_mse(ck.load(), val_cases, stride)
        if best is None or ck.val_mse <= best.val_mse:
            best = ck
    return best, best.load()


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_history(history: list[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HISTORY_COLUMNS)
        for row in history:
            w.writerow([_cell(row.get(k)) for k in HISTORY_COLUMNS])
