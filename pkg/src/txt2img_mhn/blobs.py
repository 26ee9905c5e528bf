"""Synthetic "colour-blob world": labelled images of flat shapes with templated captions.

Each image is a single filled shape (square, circle or triangle) in the class
colour on a neutral ground.  The class is the blob colour, so the caption's
colour word is the only label-bearing keyword.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "COLORS",
    "GROUNDS",
    "SHAPES",
    "PALETTE",
    "BlobWorld",
    "make_blob_world",
    "render_blob",
    "keyword_table",
    "palette_tokenize",
    "toy_pairs",
]

COLORS = {
    "red": (0.85, 0.12, 0.10),
    "green": (0.10, 0.70, 0.20),
    "blue": (0.12, 0.25, 0.90),
    "yellow": (0.95, 0.85, 0.10),
    "purple": (0.55, 0.15, 0.70),
    "orange": (0.95, 0.50, 0.05),
}
GROUNDS = {"white": (0.95, 0.95, 0.95), "gray": (0.55, 0.55, 0.55)}
SHAPES = ("square", "circle", "triangle")
_SIZES = {"small": 0.22, "big": 0.36}

_TEMPLATES = (
    "a {color} {shape} on {ground} ground",
    "there is a {size} {color} {shape} on the {ground} ground",
    "a {size} {shape} colored {color} lies on a {ground} background",
    "one {color} {shape} in the middle of {ground} ground",
    "the image shows a {color} {shape}",
)


@dataclass
class BlobWorld:
    images: np.ndarray  # (N, 3, H, W) float32 in [0, 1]
    captions: list[list[str]]  # five per image
    labels: np.ndarray  # (N,) int64
    class_names: list[str]


def keyword_table(class_names) -> dict[str, list[str]]:
    return {name: [name] for name in class_names}


def render_blob(color, shape: str, ground, radius: float, center, size: int) -> np.ndarray:
    """Rasterise one shape; ``radius`` and ``center`` are fractions of the image side."""
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    cy, cx = center[0] * size, center[1] * size
    r = radius * size
    dy, dx = yy + 0.5 - cy, xx + 0.5 - cx
    if shape == "square":
        mask = (np.abs(dy) <= r) & (np.abs(dx) <= r)
    elif shape == "circle":
        mask = dy * dy + dx * dx <= r * r
    elif shape == "triangle":
        mask = (dy <= r) & (dy >= -r) & (np.abs(dx) <= (dy + r) / 2)
    else:
        raise ValueError(f"unknown shape {shape!r}")
    img = np.empty((3, size, size), dtype=np.float32)
    for c in range(3):
        img[c] = np.where(mask, color[c], ground[c])
    return img


def make_blob_world(
    n_per_class: int,
    class_names=("red", "green", "blue"),
    image_size: int = 32,
    rng: np.random.Generator | None = None,
    captions_per_image: int = 5,
) -> BlobWorld:
    """Balanced data set with ``n_per_class`` images of every class, in class-interleaved order."""
    rng = rng if rng is not None else np.random.default_rng(0)
    class_names = list(class_names)
    unknown = [c for c in class_names if c not in COLORS]
    if unknown:
        raise ValueError(f"no colour defined for classes {unknown}")
    grounds = list(GROUNDS)
    images, captions, labels = [], [], []
    for _ in range(n_per_class):
        for label, name in enumerate(class_names):
            shape = SHAPES[rng.integers(len(SHAPES))]
            ground = grounds[rng.integers(len(grounds))]
            size_word = list(_SIZES)[rng.integers(len(_SIZES))]
            radius = _SIZES[size_word]
            margin = radius + 0.05
            center = rng.uniform(margin, 1 - margin, size=2)
            images.append(render_blob(COLORS[name], shape, GROUNDS[ground], radius, center, image_size))
            fields = dict(color=name, shape=shape, ground=ground, size=size_word)
            picks = rng.permutation(len(_TEMPLATES))[:captions_per_image]
            captions.append([_TEMPLATES[i].format(**fields) for i in sorted(picks)])
            labels.append(label)
    return BlobWorld(np.stack(images), captions, np.array(labels, dtype=np.int64), class_names)


PALETTE = np.array(list(COLORS.values()) + list(GROUNDS.values()), dtype=np.float32)
_CORNERS = {"top left": (0.25, 0.25), "top right": (0.25, 0.75), "bottom left": (0.75, 0.25), "bottom right": (0.75, 0.75)}


def palette_tokenize(images: np.ndarray, grid: int) -> np.ndarray:
    """(N, grid*grid) ids of the palette colour nearest to each cell's mean colour.

    A fixed, training-free stand-in for the VQ tokenizer on blob images: the
    eight palette entries are the six blob colours followed by the two grounds.
    """
    images = np.asarray(images, dtype=np.float32)
    n, c, h, w = images.shape
    if h % grid or w % grid:
        raise ValueError(f"image size {h}x{w} not divisible by grid {grid}")
    cells = images.reshape(n, c, grid, h // grid, grid, w // grid).mean(axis=(3, 5))
    cells = cells.transpose(0, 2, 3, 1).reshape(n, grid * grid, 1, c)
    return ((cells - PALETTE) ** 2).sum(-1).argmin(-1).astype(np.int64)


def toy_pairs(n_pairs: int = 8, image_size: int = 16) -> tuple[np.ndarray, list[str]]:
    """Distinct small captioned scenes: one blob per image in a named corner.

    Pairs enumerate colour x shape x corner combinations in a fixed order so the
    set is identical on every call.
    """
    combos = [(c, s, p) for p in _CORNERS for c in ("red", "green", "blue") for s in SHAPES]
    if not 1 <= n_pairs <= len(combos):
        raise ValueError(f"n_pairs must lie in [1, {len(combos)}]")
    # stride through the combinations so consecutive pairs differ in every attribute
    picks = [combos[(i * 7) % len(combos)] for i in range(n_pairs)]
    images = [render_blob(COLORS[c], s, GROUNDS["white"], 0.24, _CORNERS[p], image_size) for c, s, p in picks]
    captions = [f"a {c} {s} in the {p} corner" for c, s, p in picks]
    return np.stack(images), captions
