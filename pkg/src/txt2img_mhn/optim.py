"""Adam with bias correction and the per-epoch exponential learning-rate decay."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .tensor import DimensionError, Tensor

__all__ = ["AdamState", "adam_step", "Adam", "clip_by_global_norm", "exponential_lr"]


@dataclass
class AdamState:
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)
    step: int = 0


def adam_step(
    params: Sequence[np.ndarray],
    grads: Sequence[np.ndarray | None],
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> tuple[list[np.ndarray], AdamState]:
    """One Adam update.  Returns new parameter arrays and the advanced state.

    A ``None`` gradient is treated as zero.  Inputs are not modified.
    """
    if len(params) != len(grads):
        raise DimensionError(f"{len(params)} params but {len(grads)} grads")
    if not state.m:
        state = AdamState([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params], state.step)
    if len(state.m) != len(params):
        raise DimensionError("optimizer state does not match the parameter list")
    step = state.step + 1
    c1 = 1.0 - beta1**step
    c2 = 1.0 - beta2**step
    new_p, new_m, new_v = [], [], []
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if g is None:
            g = np.zeros_like(p)
        if g.shape != p.shape or m.shape != p.shape:
            raise DimensionError(f"adam_step: param {p.shape}, grad {g.shape}, state {m.shape}")
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * (g * g)
        update = (lr / c1) * m / (np.sqrt(v / c2) + eps)
        new_p.append((p - update).astype(p.dtype))
        new_m.append(m.astype(p.dtype))
        new_v.append(v.astype(p.dtype))
    return new_p, AdamState(new_m, new_v, step)


def clip_by_global_norm(grads: Sequence[np.ndarray | None], max_norm: float) -> list[np.ndarray | None]:
    """Rescale all gradients together so their joint L2 norm is at most ``max_norm``."""
    total = float(np.sqrt(sum(float((g.astype(np.float64) ** 2).sum()) for g in grads if g is not None)))
    if total <= max_norm or total == 0.0:
        return list(grads)
    factor = max_norm / total
    return [None if g is None else (g * factor).astype(g.dtype) for g in grads]


def exponential_lr(base_lr: float, decay: float, epoch: int) -> float:
    """Learning rate after ``epoch`` whole epochs of multiplicative decay."""
    return base_lr * decay**epoch


class Adam:
    """Stateful wrapper that updates a list of :class:`Tensor` parameters in place."""

    def __init__(
        self,
        params: Sequence[Tensor],
        lr: float = 1e-3,
        betas=(0.9, 0.999),
        eps: float = 1e-8,
        clip_norm: float | None = None,
    ):
        self.params = list(params)
        self.lr = lr
        self.betas = betas
        self.eps = eps
        self.clip_norm = clip_norm
        self.state = AdamState()

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        arrays = [p.data for p in self.params]
        grads = [p.grad for p in self.params]
        if self.clip_norm is not None:
            grads = clip_by_global_norm(grads, self.clip_norm)
        new, self.state = adam_step(arrays, grads, self.state, self.lr, *self.betas, self.eps)
        for p, a in zip(self.params, new):
            p.data = a
