"""Glue between the tokenizers, the generator and the zero-shot evaluation."""

from __future__ import annotations

from typing import Callable

import numpy as np

from .generator import Generator, JointSequence
from .text import BpeVocab, encode_text
from .vq import ImageTokens, VqModel

__all__ = ["encode_captions", "tokenize_images", "build_pairs", "generate_tokens", "make_synthesizer"]


def encode_captions(vocab: BpeVocab, captions: list[str], n: int) -> np.ndarray:
    return np.stack([encode_text(vocab, c, n) for c in captions]) if captions else np.zeros((0, n), np.int64)


def tokenize_images(vq: VqModel, images: np.ndarray, batch: int = 64) -> np.ndarray:
    """(N, m) codeword ids for an image array, processed in chunks."""
    parts = [vq.tokenize(images[i : i + batch]).ids for i in range(0, len(images), batch)]
    return np.concatenate(parts, axis=0)


def build_pairs(image_tokens: np.ndarray, image_index: np.ndarray, captions: list[str], vocab: BpeVocab, n: int) -> JointSequence:
    """One training sequence per caption, paired with its image's tokens."""
    return JointSequence(encode_captions(vocab, captions, n), image_tokens[image_index])


def generate_tokens(
    generator: Generator,
    text_ids: np.ndarray,
    mode: str = "greedy",
    temperature: float = 1.0,
    top_k: int | None = 64,
    rng: np.random.Generator | None = None,
    batch: int = 64,
) -> np.ndarray:
    out = [generator.generate(text_ids[i : i + batch], mode, temperature, top_k, rng) for i in range(0, len(text_ids), batch)]
    return np.concatenate(out, axis=0) if out else np.zeros((0, generator.config.m), np.int64)


def make_synthesizer(
    generator: Generator,
    vq: VqModel,
    vocab: BpeVocab,
    mode: str = "greedy",
    temperature: float = 1.0,
    top_k: int | None = 64,
    rng: np.random.Generator | None = None,
) -> Callable[[list[str]], np.ndarray]:
    """captions -> (N, 3, H, W) images via token generation and the VQ decoder."""
    grid = (vq.config.grid, vq.config.grid)

    def synthesize(captions: list[str]) -> np.ndarray:
        ids = generate_tokens(generator, encode_captions(vocab, captions, generator.config.n), mode, temperature, top_k, rng)
        return vq.detokenize(ImageTokens(ids, grid))

    return synthesize
