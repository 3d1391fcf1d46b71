"""Run configuration: one JSON file with dataset, model, train and eval sections."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .data.phantom import PAPER_IMBALANCE, PhantomSpec
from .nets.models import PRESETS, VARIANTS, ConfigError, ModelConfig
from .training.loop import TrainConfig

MIX_PRESETS = {"paper-imbalance": PAPER_IMBALANCE, "uniform": (1, 1, 1, 1)}
PREDICTORS = VARIANTS + ("cervical_lr",)

CONFIG_KEYS = """\
config keys (JSON; unknown keys are rejected, every seed is mandatory):
  dataset.root           dataset directory written by gen-data
  dataset.n_cases        number of synthetic cases
  dataset.mix            "paper-imbalance", "uniform" or four weights (EPT, VPT, LPT, Term)
  dataset.seed           master seed of the cohort and the split (required)
  dataset.ratios         split ratios, default [8, 1, 1]
  dataset.split_method   "largest_remainder" (default) or "floor"
  dataset.phantom        phantom generator fields (volume_shape, echo_times, noise_sigma, ...)
  model.variant          puuma | umamba_global | unet
  model.preset           desk | paper
  model.seed             weight initialization seed (required)
  model.overrides        ModelConfig fields replacing preset values
  train.out_dir          directory receiving <variant>/ckpt_<step>.pumc, best.pumc, history.csv
  train.seed             sampling/augmentation seed (required)
  train.<field>          any TrainConfig field: total_steps, learning_rate, min_learning_rate,
                         fine_tune_start_step, checkpoint_every, fine_tune_checkpoint_every,
                         loss_weights{w_mse,w_dice,w_bce,w_cce}, augment{...}, val_stride, validate
  eval.out_dir           directory receiving metrics.csv, predictions_<model>.csv, scatter_<model>.svg
  eval.stride            sliding-window stride (int or [d, h, w]); default half the patch
  eval.models            predictors to evaluate, subset of puuma, umamba_global, unet, cervical_lr
"""


def _reject_unknown(section: str, d: dict, allowed) -> None:
    unknown = set(d) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown keys in {section}: {sorted(unknown)}")


def _require_seed(section: str, d: dict) -> int:
    if "seed" not in d:
        raise ConfigError(f"{section}.seed is required")
    seed = d["seed"]
    if not isinstance(seed, int) or seed < 0:
        raise ConfigError(f"{section}.seed must be a non-negative integer")
    return seed


@dataclass
class DatasetSection:
    root: str
    n_cases: int
    seed: int
    mix: tuple = PAPER_IMBALANCE
    ratios: tuple = (8, 1, 1)
    split_method: str = "largest_remainder"
    phantom: PhantomSpec = field(default_factory=PhantomSpec)


@dataclass
class ModelSection:
    variant: str
    preset: str
    seed: int
    overrides: dict = field(default_factory=dict)

    def model_config(self, variant: str | None = None) -> ModelConfig:
        base = PRESETS[self.preset](variant or self.variant)
        cfg = dataclasses.replace(base, **self.overrides) if self.overrides else base
        return cfg.with_variant(variant or self.variant)


@dataclass
class EvalSection:
    out_dir: str = "report"
    stride: object = None
    models: tuple = PREDICTORS


@dataclass
class RunConfig:
    dataset: DatasetSection
    model: ModelSection
    train: TrainConfig
    train_out_dir: str
    eval: EvalSection
    source: dict

    def canonical(self) -> str:
        return json.dumps(self.source, sort_keys=True, separators=(",", ":"))

    def checksum(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()


def parse_config(raw: dict) -> RunConfig:
    _reject_unknown("config", raw, ("dataset", "model", "train", "eval"))
    ds = dict(raw.get("dataset", {}))
    _reject_unknown("dataset", ds, ("root", "n_cases", "mix", "seed", "ratios", "split_method", "phantom"))
    mix = ds.get("mix", "paper-imbalance")
    if isinstance(mix, str):
        if mix not in MIX_PRESETS:
            raise ConfigError(f"unknown mix preset {mix!r}")
        mix = MIX_PRESETS[mix]
    if ds.get("split_method", "largest_remainder") not in ("largest_remainder", "floor"):
        raise ConfigError("dataset.split_method must be largest_remainder or floor")
    try:
        phantom = PhantomSpec.from_dict(ds.get("phantom", {}))
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    dataset = DatasetSection(root=ds.get("root", "data"), n_cases=int(ds.get("n_cases", 40)),
                             seed=_require_seed("dataset", ds), mix=tuple(mix),
                             ratios=tuple(ds.get("ratios", (8, 1, 1))),
                             split_method=ds.get("split_method", "largest_remainder"), phantom=phantom)

    md = dict(raw.get("model", {}))
    _reject_unknown("model", md, ("variant", "preset", "seed", "overrides"))
    model = ModelSection(variant=md.get("variant", "puuma"), preset=md.get("preset", "desk"),
                         seed=_require_seed("model", md), overrides=dict(md.get("overrides", {})))
    if model.variant not in VARIANTS:
        raise ConfigError(f"model.variant must be one of {VARIANTS}")
    if model.preset not in PRESETS:
        raise ConfigError(f"model.preset must be one of {sorted(PRESETS)}")
    known = {f.name for f in dataclasses.fields(ModelConfig)}
    _reject_unknown("model.overrides", model.overrides, known - {"variant"})

    td = dict(raw.get("train", {}))
    _require_seed("train", td)
    out_dir = td.pop("out_dir", "runs")
    try:
        train = TrainConfig.from_dict(td)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"train: {exc}") from exc

    ed = dict(raw.get("eval", {}))
    _reject_unknown("eval", ed, ("out_dir", "stride", "models"))
    models = tuple(ed.get("models", PREDICTORS))
    bad = [m for m in models if m not in PREDICTORS]
    if bad:
        raise ConfigError(f"eval.models contains unknown predictors {bad}")
    ev = EvalSection(out_dir=ed.get("out_dir", "report"), stride=ed.get("stride"), models=models)
    return RunConfig(dataset, model, train, out_dir, ev, raw)


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return parse_config(raw)
