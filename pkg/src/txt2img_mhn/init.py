"""Seeded parameter initialisers.  Every caller passes its own Generator."""

from __future__ import annotations

import numpy as np

from .tensor import Tensor


def uniform_weight(rng: np.random.Generator, shape, fan_in: int | None = None) -> Tensor:
    """U(-1/sqrt(fan_in), 1/sqrt(fan_in)); fan_in defaults to the last axis."""
    fan_in = shape[-1] if fan_in is None else fan_in
    bound = 1.0 / np.sqrt(fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape).astype(np.float32), requires_grad=True)


def conv_weight(rng: np.random.Generator, shape, fan_in: int | None = None) -> Tensor:
    if fan_in is None:
        fan_in = int(np.prod(shape[1:]))
    return uniform_weight(rng, shape, fan_in)


def normal_table(rng: np.random.Generator, shape, std: float = 0.02) -> Tensor:
    return Tensor((rng.standard_normal(shape) * std).astype(np.float32), requires_grad=True)
