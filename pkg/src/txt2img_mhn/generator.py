"""Prototype-learning transformer over joint text/image token sequences.

Layout of one model input (length ``n + m``)::

    position   0    1 .. n     n+1 .. n+m-1
    token      t0   t1 .. tn   i1  .. i(m-1)

``t0 = 0`` is the start token, so row ``n + j - 1`` of the output predicts image
token ``i_j`` and the final image token is never an input.  Text rows attend to
each other freely; an image row attends to all text rows and to image rows at or
before it.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .init import normal_table, uniform_weight
from .optim import Adam, exponential_lr
from .tensor import DimensionError, Tensor

logger = logging.getLogger(__name__)

__all__ = [
    "MhnConfig",
    "FULL_SCALE_MHN",
    "JointSequence",
    "Generator",
    "causal_mask",
    "hopfield_layer",
    "self_attention",
    "sequence_loss",
    "train_mhn",
    "inspect_prototypes",
]


@dataclass
class MhnConfig:
    text_vocab: int = 2048
    n: int = 8
    m: int = 16
    k: int = 32
    d_emb: int = 64
    n_blocks: int = 2
    n_pro: int = 32
    residual: bool = True
    separate_value: bool = False
    lr: float = 4.5e-3
    lr_decay: float = 0.999
    epochs: int = 2000
    batch_size: int = 224
    max_steps: int | None = None
    clip_norm: float | None = None

    def __post_init__(self):
        for name in ("text_vocab", "n", "m", "k", "d_emb", "n_blocks", "n_pro", "batch_size", "epochs"):
            if getattr(self, name) < 1:
                raise ValueError(f"MhnConfig.{name} must be positive")
        if self.k < 2:
            raise ValueError("need at least two image codewords")

    @property
    def seq_len(self) -> int:
        return self.n + self.m

    @property
    def beta(self) -> float:
        return 1.0 / math.sqrt(self.d_emb)


# Published full-size generator settings; reachable by passing them to MhnConfig.
FULL_SCALE_MHN = dict(n=40, m=1024, k=2048, d_emb=512, n_blocks=10, n_pro=1000, lr=4.5e-3, lr_decay=0.999, epochs=2000, batch_size=224)


@dataclass
class JointSequence:
    """Ground-truth text tokens ``t1..tn`` and image tokens ``i1..im`` (batched on axis 0)."""

    text: np.ndarray  # (B, n)
    image: np.ndarray  # (B, m)

    def __post_init__(self):
        self.text = np.atleast_2d(np.asarray(self.text, dtype=np.int64))
        self.image = np.atleast_2d(np.asarray(self.image, dtype=np.int64))
        if self.text.shape[0] != self.image.shape[0]:
            raise ValueError("text and image batches differ in length")

    def __len__(self) -> int:
        return self.text.shape[0]

    @property
    def n(self) -> int:
        return self.text.shape[1]

    @property
    def m(self) -> int:
        return self.image.shape[1]

    def model_input(self) -> np.ndarray:
        """(B, n+m) ids: start token, text, then all image tokens but the last."""
        start = np.zeros((len(self), 1), dtype=np.int64)
        return np.concatenate([start, self.text, self.image[:, :-1]], axis=1)

    def __getitem__(self, idx) -> JointSequence:
        return JointSequence(self.text[idx], self.image[idx])


def causal_mask(length: int, last_text: int) -> np.ndarray:
    """Boolean (L, L) array, True where attention is *blocked*.

    Row ``i`` may see column ``j`` iff ``j <= max(i, last_text)``, where
    ``last_text`` is the index of the final text row (``n`` once the start token
    is prepended).
    """
    i = np.arange(length)[:, None]
    j = np.arange(length)[None, :]
    return j > np.maximum(i, last_text)


def hopfield_layer(x: Tensor, w_lookup: Tensor, w_content: Tensor, beta: float) -> Tensor:
    """Row-wise prototype retrieval: ``softmax(beta * x @ w_lookup.T) @ w_content``."""
    if x.shape[-1] != w_lookup.shape[-1] or w_lookup.shape[0] != w_content.shape[0]:
        raise DimensionError(
            f"hopfield_layer: X {x.shape}, W_lookup {w_lookup.shape}, W_content {w_content.shape}"
        )
    if beta <= 0:
        raise ValueError("beta must be positive")
    assoc = T.softmax(T.scale(T.matmul(x, w_lookup.T), beta), axis=-1)
    return T.matmul(assoc, w_content)


def self_attention(
    x: Tensor,
    w_q: Tensor,
    w_k: Tensor,
    beta: float,
    mask: np.ndarray | None = None,
    w_v: Tensor | None = None,
) -> Tensor:
    """``softmax(beta * X W_Q W_K^T X^T) X W_K``.

    The key projection doubles as the value projection unless ``w_v`` is given.
    ``mask`` marks blocked (query, key) pairs.
    """
    d = x.shape[-1]
    if w_q.shape != (d, d) or w_k.shape != (d, d):
        raise DimensionError(f"self_attention: X {x.shape}, W_Q {w_q.shape}, W_K {w_k.shape}")
    q = T.matmul(x, w_q)
    kx = T.matmul(x, w_k)
    scores = T.scale(T.matmul(q, T.transpose(kx)), beta)
    if mask is not None:
        scores = T.masked_fill(scores, mask, -np.inf)
    attn = T.softmax(scores, axis=-1)
    values = kx if w_v is None else T.matmul(x, w_v)
    return T.matmul(attn, values)


def sequence_loss(logits: Tensor, seq: JointSequence) -> Tensor:
    """Cross-entropy over the image positions, summed per sequence and averaged over the batch."""
    n, m = seq.n, seq.m
    image_logits = logits[:, n : n + m]
    return T.scale(T.cross_entropy(image_logits, seq.image), 1.0 / len(seq))


class Generator:
    def __init__(self, config: MhnConfig, params: dict[str, Tensor]):
        self.config = config
        self.params = params
        self._validate()

    @classmethod
    def init(cls, config: MhnConfig, rng: np.random.Generator) -> Generator:
        c = config
        p: dict[str, Tensor] = {
            "txtemb": normal_table(rng, (c.text_vocab, c.d_emb)),
            "imgemb": normal_table(rng, (c.k, c.d_emb)),
            "posemb": normal_table(rng, (c.seq_len, c.d_emb)),
        }
        for b in range(c.n_blocks):
            p[f"block{b}.wl"] = uniform_weight(rng, (c.n_pro, c.d_emb))
            p[f"block{b}.wc"] = uniform_weight(rng, (c.n_pro, c.d_emb), fan_in=c.n_pro)
            p[f"block{b}.wq"] = uniform_weight(rng, (c.d_emb, c.d_emb))
            p[f"block{b}.wk"] = uniform_weight(rng, (c.d_emb, c.d_emb))
            if c.separate_value:
                p[f"block{b}.wv"] = uniform_weight(rng, (c.d_emb, c.d_emb))
        p["final.wl"] = uniform_weight(rng, (c.n_pro, c.d_emb))
        p["final.wc"] = uniform_weight(rng, (c.n_pro, c.k), fan_in=c.n_pro)
        return cls(config, p)

    def _validate(self) -> None:
        c = self.config
        expected = {
            "txtemb": (c.text_vocab, c.d_emb),
            "imgemb": (c.k, c.d_emb),
            "posemb": (c.seq_len, c.d_emb),
            "final.wl": (c.n_pro, c.d_emb),
            "final.wc": (c.n_pro, c.k),
        }
        for b in range(c.n_blocks):
            expected[f"block{b}.wl"] = (c.n_pro, c.d_emb)
            expected[f"block{b}.wc"] = (c.n_pro, c.d_emb)
            expected[f"block{b}.wq"] = (c.d_emb, c.d_emb)
            expected[f"block{b}.wk"] = (c.d_emb, c.d_emb)
            if c.separate_value:
                expected[f"block{b}.wv"] = (c.d_emb, c.d_emb)
        if set(expected) != set(self.params):
            missing = sorted(set(expected) - set(self.params))
            extra = sorted(set(self.params) - set(expected))
            raise ValueError(f"generator parameter set mismatch: missing {missing}, extra {extra}")
        for name, shape in expected.items():
            if self.params[name].shape != shape:
                raise DimensionError(f"{name}: shape {self.params[name].shape}, expected {shape}")

    @property
    def beta(self) -> float:
        return self.config.beta

    def parameters(self) -> list[Tensor]:
        return list(self.params.values())

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: v.data for k, v in self.params.items()}

    @classmethod
    def from_state_dict(cls, config: MhnConfig, arrays: dict[str, np.ndarray]) -> Generator:
        params = {k: Tensor(np.asarray(v, dtype=np.float32), requires_grad=True) for k, v in arrays.items()}
        return cls(config, params)

    def astype(self, dtype) -> Generator:
        """Copy with every parameter cast (the gradient oracles run in float64)."""
        return Generator(self.config, {k: Tensor(v.data.astype(dtype), requires_grad=True) for k, v in self.params.items()})

    # -- forward -----------------------------------------------------------
    def embed(self, ids: np.ndarray, n_text: int | None = None) -> Tensor:
        """Token plus positional embeddings for (B, L) model-input ids.

        The first ``n_text`` positions (default ``n + 1``: start token and text)
        index the text table, the rest the image table.
        """
        ids = np.atleast_2d(np.asarray(ids, dtype=np.int64))
        c = self.config
        n_text = c.n + 1 if n_text is None else n_text
        length = ids.shape[1]
        if length > c.seq_len:
            raise ValueError(f"sequence of {length} exceeds positional table of {c.seq_len}")
        text_ids, image_ids = ids[:, :n_text], ids[:, n_text:]
        parts = [T.take_rows(self.params["txtemb"], text_ids)]
        if image_ids.shape[1]:
            parts.append(T.take_rows(self.params["imgemb"], image_ids))
        tok = T.concat(parts, axis=1) if len(parts) > 1 else parts[0]
        return tok + self.params["posemb"][:length]

    def hidden(self, x: Tensor) -> Tensor:
        """Run the prototype blocks on an embedded (B, L, d_emb) batch."""
        c = self.config
        p = self.params
        mask = causal_mask(x.shape[1], c.n)
        for b in range(c.n_blocks):
            wv = p.get(f"block{b}.wv")
            if c.residual:
                x = x + hopfield_layer(T.layer_norm(x), p[f"block{b}.wl"], p[f"block{b}.wc"], self.beta)
                x = x + self_attention(T.layer_norm(x), p[f"block{b}.wq"], p[f"block{b}.wk"], self.beta, mask, wv)
            else:
                x = hopfield_layer(x, p[f"block{b}.wl"], p[f"block{b}.wc"], self.beta)
                x = self_attention(x, p[f"block{b}.wq"], p[f"block{b}.wk"], self.beta, mask, wv)
        return T.layer_norm(x) if c.residual else x

    def forward_embedded(self, x: Tensor) -> Tensor:
        h = self.hidden(x)
        return hopfield_layer(h, self.params["final.wl"], self.params["final.wc"], self.beta)

    def forward_ids(self, ids: np.ndarray) -> Tensor:
        return self.forward_embedded(self.embed(ids))

    def forward_logits(self, seq: JointSequence) -> Tensor:
        """(B, n+m, k) logits under teacher forcing."""
        self._check_sequence(seq)
        return self.forward_ids(seq.model_input())

    def prototype_weights(self, seq: JointSequence) -> np.ndarray:
        """Final-layer association weights (B, n+m, n_pro) for inspection."""
        h = self.hidden(self.embed(seq.model_input()))
        return T.softmax(T.scale(T.matmul(h, self.params["final.wl"].T), self.beta), axis=-1).data

    def _check_sequence(self, seq: JointSequence) -> None:
        c = self.config
        if seq.n != c.n or seq.m != c.m:
            raise ValueError(f"sequence has n={seq.n}, m={seq.m}; model expects n={c.n}, m={c.m}")
        if seq.text.size and (seq.text.min() < 0 or seq.text.max() >= c.text_vocab):
            raise IndexError(f"text id outside [0, {c.text_vocab})")
        if seq.image.size and (seq.image.min() < 0 or seq.image.max() >= c.k):
            raise IndexError(f"image id outside [0, {c.k})")

    # -- decoding ----------------------------------------------------------
    def generate(
        self,
        text,
        mode: str = "greedy",
        temperature: float = 1.0,
        top_k: int | None = 64,
        rng: np.random.Generator | None = None,
    ) -> np.ndarray:
        """Autoregressively emit ``m`` image tokens for each row of ``text`` (B, n).

        ``mode="greedy"`` takes the argmax at each step; ``mode="sample"`` draws
        from the temperature-scaled top-``k`` distribution using ``rng``.
        """
        c = self.config
        text = np.atleast_2d(np.asarray(text, dtype=np.int64))
        if text.shape[1] != c.n:
            raise ValueError(f"text must have n={c.n} tokens, got {text.shape[1]}")
        if mode not in ("greedy", "sample"):
            raise ValueError(f"unknown decode mode {mode!r}")
        if mode == "sample":
            if rng is None:
                raise ValueError("sample mode needs an rng")
            if temperature <= 0:
                raise ValueError("temperature must be positive")
        b = text.shape[0]
        ids = np.concatenate([np.zeros((b, 1), np.int64), text], axis=1)
        out = np.zeros((b, c.m), dtype=np.int64)
        for j in range(c.m):
            logits = self.forward_ids(ids).data[:, -1, :].astype(np.float64)
            if mode == "greedy":
                tok = logits.argmax(axis=-1)
            else:
                tok = _sample(logits, temperature, top_k, rng)
            out[:, j] = tok
            if j < c.m - 1:
                ids = np.concatenate([ids, tok[:, None]], axis=1)
        return out


def _sample(logits: np.ndarray, temperature: float, top_k: int | None, rng: np.random.Generator) -> np.ndarray:
    z = logits / temperature
    if top_k is not None and top_k < z.shape[-1]:
        kth = np.sort(z, axis=-1)[:, -top_k][:, None]
        z = np.where(z < kth, -np.inf, z)
    z = z - z.max(axis=-1, keepdims=True)
    p = np.exp(z)
    p /= p.sum(axis=-1, keepdims=True)
    return np.array([rng.choice(p.shape[-1], p=row) for row in p], dtype=np.int64)


@dataclass
class MhnHistory:
    step_loss: list[float] = field(default_factory=list)
    epoch_loss: list[float] = field(default_factory=list)


def train_step(model: Generator, opt: Adam, batch: JointSequence) -> float:
    if len(batch) == 0:
        raise ValueError("train_step: empty batch")
    opt.zero_grad()
    loss = sequence_loss(model.forward_logits(batch), batch)
    T.backward(loss)
    opt.step()
    return float(loss.data)


def train_mhn(
    data: JointSequence,
    config: MhnConfig,
    rng: np.random.Generator,
    model: Generator | None = None,
) -> tuple[Generator, MhnHistory]:
    """Teacher-forced training with Adam and per-epoch exponential decay."""
    if len(data) == 0:
        raise ValueError("train_mhn: no training sequences")
    model = model or Generator.init(config, rng)
    opt = Adam(model.parameters(), lr=config.lr, clip_norm=config.clip_norm)
    n = len(data)
    bs = min(config.batch_size, n)
    total = math.ceil(n / bs) * config.epochs
    if config.max_steps is not None:
        total = min(total, config.max_steps)
    hist = MhnHistory()
    step = epoch = 0
    while step < total:
        opt.lr = exponential_lr(config.lr, config.lr_decay, epoch)
        order = rng.permutation(n)
        losses = []
        for start in range(0, n, bs):
            if step >= total:
                break
            losses.append(train_step(model, opt, data[order[start : start + bs]]))
            hist.step_loss.append(losses[-1])
            step += 1
        hist.epoch_loss.append(float(np.mean(losses)))
        epoch += 1
    return model, hist


def inspect_prototypes(w_content, top: int) -> list[list[tuple[int, float]]]:
    """Top-weighted codeword ids of each prototype row, descending, ties to the lower id."""
    w = np.asarray(w_content.data if isinstance(w_content, Tensor) else w_content, dtype=np.float64)
    k = w.shape[1]
    if not 1 <= top <= k:
        raise ValueError(f"top must lie in [1, {k}], got {top}")
    order = np.argsort(-w, axis=1, kind="stable")[:, :top]
    return [[(int(j), float(w[r, j])) for j in row] for r, row in enumerate(order)]
