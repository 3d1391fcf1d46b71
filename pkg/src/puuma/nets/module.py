"""Minimal parameter container.

Parameters and submodules are discovered by walking instance attributes in
assignment order, which fixes the declaration order used by checkpoints.
"""

from __future__ import annotations

from typing import Iterator

import numpy as np

from ..autograd import Tensor


class Module:
    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for name, value in vars(self).items():
            full = f"{prefix}{name}"
            if isinstance(value, Tensor) and value.requires_grad:
                yield full, value
            elif isinstance(value, Module):
                yield from value.named_parameters(full + ".")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{full}.{i}.")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def modules(self) -> Iterator["Module"]:
        yield self
        for value in vars(self).values():
            if isinstance(value, Module):
                yield from value.modules()
            elif isinstance(value, (list, tuple)):
                for item in value:
                    if isinstance(item, Module):
                        yield from item.modules()

    def num_parameters(self) -> int:
        return int(sum(p.size for p in self.parameters()))

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def astype(self, dtype) -> "Module":
        for p in self.parameters():
            p.data = p.data.astype(dtype)
        return self


def param(arr) -> Tensor:
    return Tensor(np.asarray(arr, dtype=np.float32), requires_grad=True, dtype=np.float32)


def he_normal(rng: np.random.Generator, shape, fan_in: int) -> Tensor:
    return param(rng.standard_normal(shape) * np.sqrt(2.0 / fan_in))


def zeros(shape) -> Tensor:
    return param(np.zeros(shape))


class Linear(Module):
    def __init__(self, rng: np.random.Generator, n_in: int, n_out: int, bias: bool = True):
        self.weight = he_normal(rng, (n_out, n_in), n_in)
        self.bias = zeros((n_out,)) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        from ..autograd import ops
        return ops.linear(x, self.weight, self.bias)
