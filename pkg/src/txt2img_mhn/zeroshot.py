"""Zero-shot evaluation: train on generated images, score on real held-out images.

A generator is judged by how well a classifier trained *only* on its outputs
(labelled through the prompt captions) recognises real test images.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import tensor as T
from .conv import add_channel_bias, conv2d
from .init import conv_weight, uniform_weight
from .optim import Adam
from .tensor import Tensor
from .text import normalize

__all__ = [
    "ProvenanceError",
    "LabeledImageSet",
    "ClassifierConfig",
    "Classifier",
    "label_from_caption",
    "train_classifier",
    "overall_accuracy",
    "per_class_accuracy",
    "ZeroShotReport",
    "zeroshot_pipeline",
    "write_oa_report",
]


class ProvenanceError(RuntimeError):
    """A held-out image was about to be used for training."""


@dataclass
class LabeledImageSet:
    images: np.ndarray  # (N, 3, H, W)
    labels: np.ndarray  # (N,)
    class_names: list[str]
    provenance: str = "real-train"
    ids: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float32)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if len(self.images) != len(self.labels):
            raise ValueError(f"{len(self.images)} images but {len(self.labels)} labels")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= len(self.class_names)):
            raise ValueError("label outside the class list")
        if not self.ids:
            self.ids = [f"{self.provenance}:{i}" for i in range(len(self.labels))]
        if len(self.ids) != len(self.labels):
            raise ValueError("one id per image required")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def n_classes(self) -> int:
        return len(self.class_names)


def label_from_caption(caption: str, keywords: dict[str, Sequence[str]] | Sequence[str]) -> int | None:
    """Class index named by the caption, or ``None`` when zero or several classes match.

    ``keywords`` maps each class name to its keyword phrases (a plain list of
    class names is its own keyword table).  Overlapping matches resolve to the
    longest phrase, so "dense residential" is not also read as "residential".
    """
    if not isinstance(keywords, dict):
        keywords = {name: [name] for name in keywords}
    names = list(keywords)
    text = normalize(caption)
    spans = []
    for idx, name in enumerate(names):
        for phrase in keywords[name]:
            phrase = normalize(phrase)
            for mt in re.finditer(r"(?<![a-z0-9])" + re.escape(phrase) + r"(?![a-z0-9])", text):
                spans.append((mt.start(), mt.end(), idx))
    spans.sort(key=lambda s: (-(s[1] - s[0]), s[0]))
    kept: list[tuple[int, int, int]] = []
    for s in spans:
        if all(s[1] <= k[0] or s[0] >= k[1] for k in kept):
            kept.append(s)
    classes = {s[2] for s in kept}
    return classes.pop() if len(classes) == 1 else None


@dataclass
class ClassifierConfig:
    widths: tuple[int, ...] = (16, 32, 64)
    lr: float = 3e-3
    epochs: int = 60
    batch_size: int = 32

    def __post_init__(self):
        self.widths = tuple(int(w) for w in self.widths)
        if len(self.widths) < 1 or min(self.widths) < 1:
            raise ValueError("classifier needs at least one conv block")


class Classifier:
    """Strided 3x3 conv blocks, global average pooling and a linear head.

    Also serves as the feature/probability extractor for the IS and FID metrics.
    """

    def __init__(self, config: ClassifierConfig, n_classes: int, params: dict[str, Tensor]):
        self.config = config
        self.n_classes = n_classes
        self.params = params
        if params["head.w"].shape[1] != n_classes:
            raise ValueError("head width must equal the class count")

    @classmethod
    def init(cls, config: ClassifierConfig, n_classes: int, rng: np.random.Generator) -> Classifier:
        p: dict[str, Tensor] = {}
        cin = 3
        for i, w in enumerate(config.widths):
            p[f"cls.conv{i}.w"] = conv_weight(rng, (w, cin, 3, 3))
            p[f"cls.conv{i}.b"] = Tensor(np.zeros(w, np.float32), requires_grad=True)
            cin = w
        p["head.w"] = uniform_weight(rng, (cin, n_classes), fan_in=cin)
        p["head.b"] = Tensor(np.zeros(n_classes, np.float32), requires_grad=True)
        return cls(config, n_classes, p)

    def parameters(self) -> list[Tensor]:
        return list(self.params.values())

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: v.data for k, v in self.params.items()}

    @classmethod
    def from_state_dict(cls, config: ClassifierConfig, arrays: dict[str, np.ndarray]) -> Classifier:
        n_classes = arrays["head.w"].shape[1]
        template = cls.init(config, n_classes, np.random.default_rng(0))
        if set(arrays) != set(template.params):
            raise ValueError("not a classifier checkpoint for this config")
        return cls(config, n_classes, {k: Tensor(np.asarray(v, np.float32), requires_grad=True) for k, v in arrays.items()})

    def pooled(self, images) -> Tensor:
        h = T.as_tensor(images)
        for i in range(len(self.config.widths)):
            h = T.relu(add_channel_bias(conv2d(h, self.params[f"cls.conv{i}.w"], stride=2, pad=1), self.params[f"cls.conv{i}.b"]))
        return T.mean(h, axis=(2, 3))

    def logits(self, images) -> Tensor:
        return T.matmul(self.pooled(images), self.params["head.w"]) + self.params["head.b"]

    def features(self, images: np.ndarray) -> np.ndarray:
        return np.concatenate([self.pooled(b).data for b in _batches(images)]).astype(np.float64)

    def class_probs(self, images: np.ndarray) -> np.ndarray:
        out = np.concatenate([T.softmax(self.logits(b), axis=-1).data for b in _batches(images)])
        return out.astype(np.float64)

    def predict(self, images: np.ndarray) -> np.ndarray:
        return np.concatenate([self.logits(b).data.argmax(axis=-1) for b in _batches(images)])


def _batches(images: np.ndarray, size: int = 64):
    images = np.asarray(images, dtype=np.float32)
    for i in range(0, len(images), size):
        yield images[i : i + size]


def _check_disjoint(train: LabeledImageSet, held_out: LabeledImageSet | None) -> None:
    if held_out is None:
        return
    if train.provenance == held_out.provenance:
        raise ProvenanceError(f"training set shares provenance {train.provenance!r} with the held-out set")
    overlap = set(train.ids) & set(held_out.ids)
    if overlap:
        raise ProvenanceError(f"{len(overlap)} held-out images found in the training set, e.g. {sorted(overlap)[0]}")


def train_classifier(
    train: LabeledImageSet,
    config: ClassifierConfig,
    rng: np.random.Generator,
    held_out: LabeledImageSet | None = None,
) -> tuple[Classifier, list[float]]:
    """Mean cross-entropy training with Adam; returns the model and per-epoch losses."""
    if len(np.unique(train.labels)) < 2:
        raise ValueError("train_classifier needs at least two classes present")
    _check_disjoint(train, held_out)
    model = Classifier.init(config, train.n_classes, rng)
    opt = Adam(model.parameters(), lr=config.lr)
    n = len(train)
    bs = min(config.batch_size, n)
    history = []
    for _ in range(config.epochs):
        order = rng.permutation(n)
        losses = []
        for start in range(0, n, bs):
            idx = order[start : start + bs]
            opt.zero_grad()
            loss = T.scale(T.cross_entropy(model.logits(train.images[idx]), train.labels[idx]), 1.0 / len(idx))
            T.backward(loss)
            opt.step()
            losses.append(float(loss.data))
        history.append(float(np.mean(losses)))
    return model, history


def overall_accuracy(predict, test: LabeledImageSet) -> float:
    """Fraction of test images whose predicted class equals the label.

    ``predict`` is a :class:`Classifier` or any callable images -> class ids.
    """
    if len(test) == 0:
        raise ValueError("overall_accuracy: empty test set")
    fn = predict.predict if isinstance(predict, Classifier) else predict
    pred = np.asarray(fn(test.images))
    return float((pred == test.labels).sum() / len(test))


def per_class_accuracy(pred: np.ndarray, test: LabeledImageSet) -> dict[str, float]:
    out = {}
    for c, name in enumerate(test.class_names):
        sel = test.labels == c
        if sel.any():
            out[name] = float((pred[sel] == c).mean())
    return out


@dataclass
class ZeroShotReport:
    oa: float
    per_class: dict[str, float]
    skipped: int
    n_train_generated: int
    n_test_real: int
    classifier: Classifier | None = None


def zeroshot_pipeline(
    synthesize: Callable[[list[str]], np.ndarray],
    captions: list[str],
    keywords: dict[str, Sequence[str]] | Sequence[str],
    real_test: LabeledImageSet,
    config: ClassifierConfig,
    rng: np.random.Generator,
) -> ZeroShotReport:
    """Label captions, synthesise one image each, train on them, score on ``real_test``.

    ``synthesize`` maps a list of captions to an (N, 3, H, W) image array; for a
    trained model it is generator sampling followed by the VQ decoder (see
    :func:`txt2img_mhn.pipeline.make_synthesizer`).
    """
    labels = [label_from_caption(c, keywords) for c in captions]
    keep = [i for i, lab in enumerate(labels) if lab is not None]
    skipped = len(captions) - len(keep)
    kept_captions = [captions[i] for i in keep]
    images = np.asarray(synthesize(kept_captions), dtype=np.float32) if kept_captions else np.zeros((0, 3, 1, 1))
    train = LabeledImageSet(
        images,
        np.array([labels[i] for i in keep], dtype=np.int64),
        real_test.class_names,
        provenance="generated",
        ids=[f"generated:{i}" for i in keep],
    )
    model, _ = train_classifier(train, config, rng, held_out=real_test)
    pred = model.predict(real_test.images)
    oa = float((pred == real_test.labels).mean())
    return ZeroShotReport(oa, per_class_accuracy(pred, real_test), skipped, len(train), len(real_test), model)


def write_oa_report(path, report: ZeroShotReport, header: str = "") -> None:
    lines = [header.rstrip("\n")] if header else []
    lines.append(f"oa={report.oa:.6f}")
    lines += [f"per_class.{name}={acc:.6f}" for name, acc in report.per_class.items()]
    lines += [f"skipped={report.skipped}", f"n_train_generated={report.n_train_generated}", f"n_test_real={report.n_test_real}"]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_report(path) -> dict[str, str]:
    """Parse a flat ``key=value`` report, skipping ``#`` header lines."""
    out = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line and not line.startswith("#"):
            key, _, value = line.partition("=")
            out[key] = value
    return out

