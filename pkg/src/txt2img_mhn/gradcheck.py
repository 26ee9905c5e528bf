"""Central finite-difference oracle for checking tape gradients.

Everything here runs in float64 on copies of the inputs; it shares nothing with
the backward closures except the forward functions being differentiated.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor, backward

__all__ = ["numerical_grad", "analytic_grads", "relative_error", "check_gradients"]


def numerical_grad(f: Callable[[], float], x: np.ndarray, eps: float = 1e-3) -> np.ndarray:
    """d f / d x by central differences; ``x`` is perturbed in place and restored."""
    grad = np.zeros_like(x, dtype=np.float64)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        fp = f()
        flat[i] = orig - eps
        fm = f()
        flat[i] = orig
        gflat[i] = (fp - fm) / (2 * eps)
    return grad


def analytic_grads(loss_fn: Callable[[Sequence[Tensor]], Tensor], arrays: Sequence[np.ndarray]) -> list[np.ndarray]:
    leaves = [Tensor(a, requires_grad=True) for a in arrays]
    loss = loss_fn(leaves)
    backward(loss)
    return [np.zeros_like(a) if t.grad is None else t.grad for a, t in zip(arrays, leaves)]


def relative_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-6) -> float:
    """max |a - b| / max(max|a|, max|b|, floor): a scale-aware whole-array error."""
    scale = max(np.abs(a).max(initial=0.0), np.abs(b).max(initial=0.0), floor)
    return float(np.abs(a - b).max(initial=0.0) / scale)


def check_gradients(
    loss_fn: Callable[[Sequence[Tensor]], Tensor],
    arrays: Sequence[np.ndarray],
    eps: float = 1e-3,
) -> list[float]:
    """Relative error between backprop and finite differences for each input array."""
    arrays = [np.array(a, dtype=np.float64) for a in arrays]
    analytic = analytic_grads(loss_fn, arrays)

    def f() -> float:
        return float(loss_fn([Tensor(a) for a in arrays]).data)

    return [relative_error(g, numerical_grad(f, a, eps)) for g, a in zip(analytic, arrays)]
