"""PUUMA dual-branch network and its single-branch comparators."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

import numpy as np

from ..autograd import Tensor, ops
from .blocks import Conv3d, DecoderStage, EncoderStage, PredictionHead
from .module import Linear, Module

VARIANTS = ("puuma", "umamba_global", "unet")
CLASS_NAMES = ("EPT", "VPT", "LPT", "Term")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    variant: str = "puuma"
    local_depth: int = 3
    global_depth: int = 4
    local_latent_dim: int = 32
    global_latent_dim: int = 64
    fcl_dim: tuple[int, int] = (64, 16)
    base_channels: int = 4
    max_channels: int = 32
    state_dim: int = 4
    volume_shape: tuple[int, int, int] = (32, 32, 16)
    patch_shape: tuple[int, int, int] = (8, 8, 8)
    num_classes: int = 4
    ga_prior: float = 35.0
    input_scale: float = 0.01

    def __post_init__(self):
        for name in ("fcl_dim", "volume_shape", "patch_shape"):
            object.__setattr__(self, name, tuple(int(v) for v in getattr(self, name)))

    def with_variant(self, variant: str) -> "ModelConfig":
        return dataclasses.replace(self, variant=variant)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**d)

    def canonical(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))


def paper_preset(variant: str = "puuma") -> ModelConfig:
    """Table-1 scale: depths 3/6, latent lengths 4096/5120, FC 5120x16."""
    return ModelConfig(variant=variant, local_depth=3, global_depth=6, local_latent_dim=4096,
                       global_latent_dim=5120, fcl_dim=(5120, 16), base_channels=16, max_channels=128,
                       state_dim=16, volume_shape=(128, 128, 64), patch_shape=(16, 16, 16))


def desk_preset(variant: str = "puuma") -> ModelConfig:
    return ModelConfig(variant=variant)


PRESETS = {"paper": paper_preset, "desk": desk_preset}


def stage_widths(cfg: ModelConfig, depth: int) -> list[int]:
    return [min(cfg.base_channels * 2 ** i, cfg.max_channels) for i in range(depth)]


def bottleneck_shape(shape, depth: int) -> tuple[int, ...]:
    return tuple(n // 2 ** depth for n in shape)


def validate_config(cfg: ModelConfig) -> None:
    if cfg.variant not in VARIANTS:
        raise ConfigError(f"unknown variant {cfg.variant!r}; expected one of {VARIANTS}")
    if cfg.num_classes != 4:
        raise ConfigError("num_classes must be 4 (EPT, VPT, LPT, Term)")
    if cfg.fcl_dim[0] != cfg.global_latent_dim:
        raise ConfigError(f"fcl_dim {cfg.fcl_dim} must start with global_latent_dim {cfg.global_latent_dim}")
    if cfg.base_channels < 1 or cfg.max_channels < cfg.base_channels or cfg.state_dim < 1:
        raise ConfigError("invalid channel or state widths")
    branches = [("volume_shape", cfg.volume_shape, cfg.global_depth, cfg.global_latent_dim)]
    if cfg.variant == "puuma":
        if cfg.local_depth >= cfg.global_depth:
            raise ConfigError("local_depth must be smaller than global_depth")
        branches.append(("patch_shape", cfg.patch_shape, cfg.local_depth, cfg.local_latent_dim))
    for name, shape, depth, latent in branches:
        if depth < 1:
            raise ConfigError(f"depth for {name} must be >= 1")
        if len(shape) != 3 or any(n % 2 ** depth for n in shape):
            raise ConfigError(f"depth {depth} too large for {name} {shape}: extents must be "
                              f"divisible by {2 ** depth}")
        voxels = int(np.prod(bottleneck_shape(shape, depth)))
        if latent % voxels:
            raise ConfigError(f"latent dim {latent} not divisible by bottleneck voxel count {voxels}")


class Encoder(Module):
    def __init__(self, rng, cfg: ModelConfig, depth: int, use_ssm: bool, spatial, latent_dim: int):
        widths = stage_widths(cfg, depth)
        ins = [1] + widths[:-1]
        state = cfg.state_dim if use_ssm else None
        self.stages = [EncoderStage(rng, i, o, state) for i, o in zip(ins, widths)]
        voxels = int(np.prod(bottleneck_shape(spatial, depth)))
        self.latent_proj = Conv3d(rng, widths[-1], latent_dim // voxels, k=1)
        self.widths = widths

    def __call__(self, x: Tensor):
        skips = []
        for stage in self.stages:
            skip, x = stage(x)
            skips.append(skip)
        latent = ops.reshape(self.latent_proj(x), (-1,))
        return latent, x, skips


@dataclass
class ModelOutput:
    seg_logits: Tensor | None
    ga_global: Tensor
    class_logits_global: Tensor
    ga_local: Tensor | None = None
    class_logits_local: Tensor | None = None
    ga_final: Tensor = field(default=None)


class Model(Module):
    def __init__(self, cfg: ModelConfig, seed: int):
        validate_config(cfg)
        self.config = cfg
        rng = np.random.default_rng(seed)
        use_ssm = cfg.variant != "unet"
        self.global_encoder = Encoder(rng, cfg, cfg.global_depth, use_ssm, cfg.volume_shape, cfg.global_latent_dim)
        widths = self.global_encoder.widths
        self.global_head = PredictionHead(rng, cfg.global_latent_dim, cfg.fcl_dim[1], cfg.num_classes, cfg.ga_prior)
        outs = list(reversed(widths))
        ins = [widths[-1]] + outs[:-1]
        self.decoder = [DecoderStage(rng, i, o) for i, o in zip(ins, outs)]
        self.seg_out = Conv3d(rng, widths[0], 1, k=1)
        if cfg.variant == "puuma":
            self.local_encoder = Encoder(rng, cfg, cfg.local_depth, True, cfg.patch_shape, cfg.local_latent_dim)
            self.local_head = PredictionHead(rng, cfg.local_latent_dim, cfg.fcl_dim[1], cfg.num_classes, cfg.ga_prior)
            self.fusion = Linear(rng, 2 * (1 + cfg.num_classes) + 1, 1)
            # start as the mean of the two branch regressions
            w = np.zeros_like(self.fusion.weight.data)
            w[0, 0] = w[0, 1 + cfg.num_classes] = 0.5
            self.fusion.weight.data = w
        else:
            self.local_encoder = self.local_head = self.fusion = None

    @property
    def variant(self) -> str:
        return self.config.variant

    def _input(self, arr, shape, what: str) -> Tensor:
        t = arr if isinstance(arr, Tensor) else Tensor(arr)
        if t.ndim == 3:
            t = ops.reshape(t, (1,) + t.shape)
        if t.shape != (1,) + tuple(shape):
            raise ConfigError(f"{what} shape {t.shape} does not match configured {(1,) + tuple(shape)}")
        return ops.scale(t, self.config.input_scale)

    def global_forward(self, volume):
        x = self._input(volume, self.config.volume_shape, "volume")
        latent, x, skips = self.global_encoder(x)
        ga, logits = self.global_head(latent)
        for stage, skip in zip(self.decoder, reversed(skips)):
            x = stage(x, skip)
        seg = self.seg_out(x)
        return seg, ga, logits

    def local_forward(self, patch):
        if self.local_encoder is None:
            raise ConfigError(f"variant {self.variant} has no local branch")
        x = self._input(patch, self.config.patch_shape, "patch")
        latent, _, _ = self.local_encoder(x)
        return self.local_head(latent)

    def fuse(self, ga_global, logits_global, ga_local, logits_local, ga_scan) -> Tensor:
        return fuse(self.fusion, ga_global, ops.softmax(logits_global), ga_local,
                    ops.softmax(logits_local), ga_scan)

    def forward(self, volume, patch=None, ga_scan: float | None = None) -> ModelOutput:
        seg, ga_g, cls_g = self.global_forward(volume)
        out = ModelOutput(seg_logits=seg, ga_global=ga_g, class_logits_global=cls_g, ga_final=ga_g)
        if self.variant == "puuma":
            if patch is None or ga_scan is None:
                raise ConfigError("puuma forward needs a patch and ga_scan")
            out.ga_local, out.class_logits_local = self.local_forward(patch)
            out.ga_final = self.fuse(ga_g, cls_g, out.ga_local, out.class_logits_local, ga_scan)
        return out

    __call__ = forward

    def latent_lengths(self) -> dict[str, int]:
        """Flattened bottleneck lengths implied by the built layers."""
        cfg = self.config
        res = {"global": self.global_encoder.latent_proj.weight.shape[0]
               * int(np.prod(bottleneck_shape(cfg.volume_shape, cfg.global_depth)))}
        if self.local_encoder is not None:
            res["local"] = (self.local_encoder.latent_proj.weight.shape[0]
                            * int(np.prod(bottleneck_shape(cfg.patch_shape, cfg.local_depth))))
        return res

    def ssm_modules(self) -> list:
        from .ssm import SsmParams
        return [m for m in self.modules() if isinstance(m, SsmParams)]


def fuse(fusion: Linear, ga_global, probs_global, ga_local, probs_local, ga_scan) -> Tensor:
    """One fully connected layer over [ga_g, p_g(4), ga_l, p_l(4), ga_scan]."""
    scan = ga_scan if isinstance(ga_scan, Tensor) else Tensor(np.array([ga_scan]))
    parts = [ops.reshape(t, (-1,)) for t in (ga_global, probs_global, ga_local, probs_local, scan)]
    return ops.linear(ops.concat(parts, axis=0), fusion.weight, fusion.bias)


def build_model(config: ModelConfig, seed: int) -> Model:
    return Model(config, seed)
