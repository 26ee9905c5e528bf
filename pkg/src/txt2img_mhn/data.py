"""Dataset manifests and image ingestion.

A manifest is UTF-8 text with one record per line, tab separated::

    split <TAB> class_name <TAB> image_path <TAB> caption 1|caption 2|...

``split`` is ``train`` or ``test``; relative image paths resolve against the
manifest's directory.  Blank lines and lines starting with ``#`` are ignored.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .blobs import BlobWorld

__all__ = [
    "ManifestError",
    "ImageDecodeError",
    "Record",
    "Dataset",
    "parse_manifest",
    "ingest",
    "load_image",
    "save_png",
    "write_manifest",
    "write_blob_world",
]

SPLITS = ("train", "test")


class ManifestError(ValueError):
    pass


class ImageDecodeError(OSError):
    def __init__(self, index: int, path: Path, reason: str):
        super().__init__(f"record {index}: cannot decode {path}: {reason}")
        self.index = index
        self.path = path


@dataclass(frozen=True)
class Record:
    split: str
    class_name: str
    image_path: Path
    captions: tuple[str, ...]


@dataclass
class Dataset:
    records: list[Record]
    images: np.ndarray  # (N, 3, H, W) float32 in [0, 1]
    class_names: list[str]

    def __len__(self) -> int:
        return len(self.records)

    def labels(self) -> np.ndarray:
        index = {c: i for i, c in enumerate(self.class_names)}
        return np.array([index[r.class_name] for r in self.records], dtype=np.int64)

    def split(self, name: str) -> Dataset:
        if name not in SPLITS:
            raise ValueError(f"unknown split {name!r}")
        keep = [i for i, r in enumerate(self.records) if r.split == name]
        return Dataset([self.records[i] for i in keep], self.images[keep], self.class_names)

    def pairs(self) -> tuple[np.ndarray, list[str]]:
        """(image index, caption) for every caption of every record."""
        idx, caps = [], []
        for i, r in enumerate(self.records):
            for c in r.captions:
                idx.append(i)
                caps.append(c)
        return np.array(idx, dtype=np.int64), caps


def parse_manifest(path) -> list[Record]:
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"manifest not found: {p}")
    records = []
    for lineno, line in enumerate(p.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) != 4:
            raise ManifestError(f"{p}:{lineno}: expected 4 tab-separated fields, got {len(fields)}")
        split, cls, img, caps = fields
        if split not in SPLITS:
            raise ManifestError(f"{p}:{lineno}: split must be train or test, got {split!r}")
        if not cls:
            raise ManifestError(f"{p}:{lineno}: empty class name")
        captions = tuple(c.strip() for c in caps.split("|") if c.strip())
        if not captions:
            raise ManifestError(f"{p}:{lineno}: record has no captions")
        img_path = Path(img)
        if not img_path.is_absolute():
            img_path = p.parent / img_path
        records.append(Record(split, cls, img_path, captions))
    return records


def load_image(path, size: int, index: int = 0) -> np.ndarray:
    """Decode, convert to RGB, bilinearly resize to ``size``x``size`` and scale to [0, 1]."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"record {index}: image not found: {path}")
    try:
        with Image.open(path) as im:
            im = im.convert("RGB")
            if im.size != (size, size):
                im = im.resize((size, size), Image.Resampling.BILINEAR)
            arr = np.asarray(im, dtype=np.float32) / 255.0
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        raise ImageDecodeError(index, path, str(exc)) from exc
    return np.ascontiguousarray(arr.transpose(2, 0, 1))


def ingest(manifest_path, image_size: int) -> Dataset:
    records = parse_manifest(manifest_path)
    if not records:
        raise ManifestError(f"{manifest_path}: no records")
    images = np.stack([load_image(r.image_path, image_size, i) for i, r in enumerate(records)])
    class_names = sorted({r.class_name for r in records})
    return Dataset(records, images, class_names)


def save_png(image: np.ndarray, path) -> None:
    """Write a (3, H, W) array in [0, 1] as an 8-bit PNG."""
    arr = np.clip(np.rint(np.asarray(image).transpose(1, 2, 0) * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(arr, mode="RGB").save(path, format="PNG")


def write_manifest(path, records: list[Record]) -> None:
    base = Path(path).parent
    lines = []
    for r in records:
        if any("|" in c or "\t" in c or "\n" in c for c in r.captions):
            raise ManifestError("captions may not contain '|', tabs or newlines")
        img = r.image_path
        try:
            img = img.relative_to(base)
        except ValueError:
            pass
        lines.append("\t".join([r.split, r.class_name, img.as_posix(), "|".join(r.captions)]))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_blob_world(out_dir, train: BlobWorld, test: BlobWorld) -> Path:
    """Save both splits as PNGs plus ``manifest.tsv``; returns the manifest path."""
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    records = []
    for split, world in (("train", train), ("test", test)):
        for i, (img, caps, lab) in enumerate(zip(world.images, world.captions, world.labels)):
            rel = Path("images") / f"{split}_{i:05d}.png"
            save_png(img, out / rel)
            records.append(Record(split, world.class_names[lab], out / rel, tuple(caps)))
    manifest = out / "manifest.tsv"
    write_manifest(manifest, records)
    return manifest
