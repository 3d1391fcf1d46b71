from __future__ import annotations

import numpy as np

from ..autograd import Tensor, conv3d, ops
from .module import Linear, Module, he_normal, param, zeros
from .ssm import SsmParams, ssm_scan


class Conv3d(Module):
    def __init__(self, rng: np.random.Generator, c_in: int, c_out: int, k: int = 3, stride: int = 1):
        self.weight = he_normal(rng, (c_out, c_in, k, k, k), c_in * k ** 3)
        self.bias = zeros((c_out,))
        self.stride = stride
        self.padding = (k - 1) // 2

    def __call__(self, x: Tensor) -> Tensor:
        return conv3d(x, self.weight, self.bias, self.stride, self.padding)


class ConvNormAct(Module):
    """3x3x3 conv -> affine instance norm -> leaky ReLU."""

    def __init__(self, rng: np.random.Generator, c_in: int, c_out: int):
        self.conv = Conv3d(rng, c_in, c_out)
        self.norm_weight = param(np.ones(c_out))
        self.norm_bias = zeros((c_out,))

    def __call__(self, x: Tensor) -> Tensor:
        y = ops.instance_norm(self.conv(x), self.norm_weight, self.norm_bias, eps=1e-5)
        return ops.leaky_relu(y, 0.01)


class MambaBlock(Module):
    """Gated selective-scan mixer over the flattened voxels of a ``(C, D, H, W)`` map.

    Voxels are read in row-major order (W fastest). The out-projection starts
    at zero so a freshly built block is the identity.
    """

    def __init__(self, rng: np.random.Generator, channels: int, state_dim: int):
        self.in_x = Linear(rng, channels, channels, bias=False)
        self.in_z = Linear(rng, channels, channels, bias=False)
        self.ssm = SsmParams(rng, channels, state_dim)
        self.out_proj = zeros((channels, channels))

    def __call__(self, features: Tensor, force_zero_decay: bool = False) -> Tensor:
        c = features.shape[0]
        seq = ops.transpose(ops.reshape(features, (c, -1)))
        x = ops.silu(self.in_x(seq))
        gate = ops.silu(self.in_z(seq))
        y = ops.mul(ssm_scan(x, self.ssm, force_zero_decay), gate)
        mixed = ops.add(seq, ops.linear(y, self.out_proj))
        return ops.reshape(ops.transpose(mixed), features.shape)


class EncoderStage(Module):
    def __init__(self, rng: np.random.Generator, c_in: int, c_out: int, state_dim: int | None):
        self.block = ConvNormAct(rng, c_in, c_out)
        self.mamba = MambaBlock(rng, c_out, state_dim) if state_dim else None
        self.down = Conv3d(rng, c_out, c_out, k=3, stride=2)

    def __call__(self, x: Tensor) -> tuple[Tensor, Tensor]:
        skip = self.block(x)
        if self.mamba is not None:
            skip = self.mamba(skip)
        return skip, self.down(skip)


class DecoderStage(Module):
    """Nearest x2 upsample -> conv, concat skip, conv-norm-act."""

    def __init__(self, rng: np.random.Generator, c_in: int, c_out: int):
        self.up = Conv3d(rng, c_in, c_out)
        self.fuse = ConvNormAct(rng, 2 * c_out, c_out)

    def __call__(self, x: Tensor, skip: Tensor) -> Tensor:
        from ..autograd import upsample_nearest
        up = self.up(upsample_nearest(x, 2))
        return self.fuse(ops.concat([up, skip], axis=0))


class PredictionHead(Module):
    """Flattened latent -> hidden -> (1 regression value, 4 class logits)."""

    def __init__(self, rng: np.random.Generator, latent: int, hidden: int, n_classes: int, ga_prior: float):
        self.fc1 = Linear(rng, latent, hidden)
        self.fc2 = Linear(rng, hidden, 1 + n_classes)
        self.fc2.bias.data[0] = ga_prior

    def __call__(self, latent: Tensor) -> tuple[Tensor, Tensor]:
        out = self.fc2(ops.leaky_relu(self.fc1(latent), 0.01))
        return ops.index(out, slice(0, 1)), ops.index(out, slice(1, None))
