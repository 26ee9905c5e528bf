"""Inception Score and Fréchet distance over a pluggable feature extractor."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol

import numpy as np

__all__ = [
    "Extractor",
    "GaussianStats",
    "inception_score",
    "gaussian_stats",
    "matrix_sqrt_product",
    "fid",
    "write_metrics_report",
]

KL_FLOOR = 1e-12


class Extractor(Protocol):
    """Anything that maps an image batch to class posteriors and pooled features."""

    def class_probs(self, images: np.ndarray) -> np.ndarray: ...

    def features(self, images: np.ndarray) -> np.ndarray: ...


@dataclass
class GaussianStats:
    mean: np.ndarray
    cov: np.ndarray

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


def inception_score(probs, splits: int = 10) -> tuple[float, float]:
    """exp(mean KL(p(l|x) || p(l))) per split; returns mean and std over splits.

    The marginal p(l) is the average conditional within each split.  Logs are
    taken of ``max(p, 1e-12)`` so empty classes do not produce -inf.
    """
    p = np.asarray(probs, dtype=np.float64)
    if p.ndim != 2:
        raise ValueError(f"expected (N, C) probabilities, got shape {p.shape}")
    if splits < 1 or len(p) < splits:
        raise ValueError(f"need at least {splits} probability vectors, got {len(p)}")
    if np.any(p < 0) or not np.allclose(p.sum(axis=1), 1.0, atol=1e-5):
        raise ValueError("rows must be probability vectors")
    scores = []
    for part in np.array_split(p, splits):
        marginal = part.mean(axis=0, keepdims=True)
        kl = (part * (np.log(np.maximum(part, KL_FLOOR)) - np.log(np.maximum(marginal, KL_FLOOR)))).sum(axis=1)
        scores.append(np.exp(kl.mean()))
    return float(np.mean(scores)), float(np.std(scores))


def gaussian_stats(features) -> GaussianStats:
    f = np.asarray(features, dtype=np.float64)
    if f.ndim != 2 or len(f) < 2:
        raise ValueError("gaussian_stats needs at least two feature vectors")
    mu = f.mean(axis=0)
    cov = np.cov(f, rowvar=False, ddof=1).reshape(f.shape[1], f.shape[1])
    return GaussianStats(mu, (cov + cov.T) / 2)


def _psd_eig(a: np.ndarray, name: str) -> tuple[np.ndarray, np.ndarray]:
    w, v = np.linalg.eigh((a + a.T) / 2)
    scale = max(float(np.abs(w).max(initial=0.0)), 1.0)
    if w.min(initial=0.0) < -1e-6 * scale:
        raise ValueError(f"{name} is not positive semidefinite (eigenvalue {w.min():.3g})")
    return np.clip(w, 0.0, None), v


def matrix_sqrt_product(a, b) -> np.ndarray:
    """A matrix S with S @ S = A @ B for symmetric PSD ``a`` and ``b``.

    A @ B is similar to the symmetric matrix M = A^1/2 B A^1/2, so
    S = A^1/2 M^1/2 A^-1/2.  A singular ``a`` uses its pseudo-inverse root,
    which still leaves trace(S) = trace(M^1/2) exact.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"matrix_sqrt_product: shapes {a.shape} and {b.shape}")
    wa, va = _psd_eig(a, "A")
    _psd_eig(b, "B")
    root = np.sqrt(wa)
    a_half = (va * root) @ va.T
    tol = root.max(initial=0.0) * a.shape[0] * np.finfo(np.float64).eps
    inv_root = np.where(root > tol, 1.0 / np.where(root > tol, root, 1.0), 0.0)
    a_neg_half = (va * inv_root) @ va.T
    wm, vm = _psd_eig(a_half @ b @ a_half, "A^1/2 B A^1/2")
    m_half = (vm * np.sqrt(wm)) @ vm.T
    return a_half @ m_half @ a_neg_half


def _trace_sqrt_product(a: np.ndarray, b: np.ndarray) -> float:
    wa, va = _psd_eig(a, "A")
    a_half = (va * np.sqrt(wa)) @ va.T
    wm, _ = _psd_eig(a_half @ b @ a_half, "A^1/2 B A^1/2")
    return float(np.sqrt(wm).sum())


def fid(real: GaussianStats, gen: GaussianStats) -> float:
    """||mu_r - mu_g||^2 + Tr(S_r + S_g - 2 (S_r S_g)^1/2)."""
    if real.mean.shape != gen.mean.shape or real.cov.shape != gen.cov.shape:
        raise ValueError(f"feature dimensions differ: {real.mean.shape} vs {gen.mean.shape}")
    diff = real.mean - gen.mean
    value = float(diff @ diff + np.trace(real.cov) + np.trace(gen.cov) - 2 * _trace_sqrt_product(real.cov, gen.cov))
    if value < -1e-6:
        warnings.warn(f"negative Fréchet distance {value:.3g} clamped to 0", RuntimeWarning)
    return max(value, 0.0)


def write_metrics_report(path, is_mean: float, is_std: float, fid_value: float, n_real: int, n_gen: int, header: str = "") -> None:
    lines = [header.rstrip("\n")] if header else []
    lines += [
        f"is_mean={is_mean:.6f}",
        f"is_std={is_std:.6f}",
        f"fid={fid_value:.6f}",
        f"n_real={n_real}",
        f"n_gen={n_gen}",
    ]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
