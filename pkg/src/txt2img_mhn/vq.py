"""Convolutional image tokenizer: k-way logits per cell, argmax codes, codebook decoder.

The encoder halves resolution ``log2(f)`` times and ends in a 1x1 conv to ``k``
channels; a cell's token is the argmax over those channels.  Training cannot
differentiate through that argmax, so it feeds the decoder a Gumbel-softmax
mixture of codewords whose temperature is annealed towards a near one-hot
sample.  The only objective is the per-pixel reconstruction error.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .conv import add_channel_bias, conv2d, conv_transpose2d
from .init import conv_weight, normal_table
from .optim import Adam, exponential_lr
from .tensor import DimensionError, Tensor

logger = logging.getLogger(__name__)

__all__ = [
    "VqConfig",
    "FULL_SCALE_VQ",
    "ImageTokens",
    "VqModel",
    "quantize",
    "lookup_embedding",
    "recon_loss",
    "gumbel_temperature",
    "train_vqvae",
]


@dataclass
class VqConfig:
    image_size: int = 32
    downsample: int = 8
    k: int = 32
    d: int = 16
    widths: tuple[int, ...] = (64, 128, 256)
    lr: float = 1e-3
    lr_decay: float = 0.996
    epochs: int = 1000
    batch_size: int = 256
    tau_start: float = 1.0
    tau_end: float = 0.0625
    max_steps: int | None = None

    def __post_init__(self):
        self.widths = tuple(int(w) for w in self.widths)
        stages = int(round(math.log2(self.downsample))) if self.downsample > 0 else -1
        if stages < 1 or 2**stages != self.downsample:
            raise ValueError(f"downsample factor must be a power of two >= 2, got {self.downsample}")
        if len(self.widths) != stages:
            raise ValueError(f"{stages} stride-2 stages need {stages} widths, got {self.widths}")
        if self.image_size % self.downsample:
            raise ValueError(f"image_size {self.image_size} not divisible by {self.downsample}")
        if self.k < 2 or self.d < 1:
            raise ValueError("need k >= 2 codewords of dimension d >= 1")
        if not 0 < self.tau_end <= self.tau_start:
            raise ValueError("temperature schedule must satisfy 0 < tau_end <= tau_start")

    @property
    def grid(self) -> int:
        return self.image_size // self.downsample

    @property
    def tokens_per_image(self) -> int:
        return self.grid * self.grid


# Values reported for the full-size tokenizer; reachable by passing them to VqConfig.
FULL_SCALE_VQ = dict(image_size=256, downsample=8, k=2048, d=512, lr=1e-3, lr_decay=0.996, epochs=1000, batch_size=256)


@dataclass
class ImageTokens:
    """Row-major flattened codeword ids for a batch, with the grid shape kept alongside."""

    ids: np.ndarray  # (B, m) int64
    grid: tuple[int, int]

    def __post_init__(self):
        self.ids = np.asarray(self.ids, dtype=np.int64)
        if self.ids.ndim == 1:
            self.ids = self.ids[None]
        if self.ids.shape[1] != self.grid[0] * self.grid[1]:
            raise ValueError(f"{self.ids.shape[1]} tokens do not fill a {self.grid} grid")

    @property
    def m(self) -> int:
        return self.ids.shape[1]

    def __len__(self) -> int:
        return self.ids.shape[0]


def quantize(logits) -> ImageTokens:
    """Per-cell argmax over the channel axis of (B, k, h, w) logits.

    ``np.argmax`` returns the first maximum, so ties go to the lowest index.
    """
    data = logits.data if isinstance(logits, Tensor) else np.asarray(logits)
    if data.ndim == 3:
        data = data[None]
    b, _, h, w = data.shape
    ids = data.argmax(axis=1).reshape(b, h * w)
    return ImageTokens(ids, (h, w))


def lookup_embedding(codebook, tokens: ImageTokens) -> Tensor:
    """(B, d, h, w) grid whose cells are copies of the addressed codewords."""
    cb = codebook if isinstance(codebook, Tensor) else Tensor(codebook)
    k = cb.shape[0]
    if tokens.ids.size and (tokens.ids.min() < 0 or tokens.ids.max() >= k):
        raise IndexError(f"token id outside [0, {k})")
    h, w = tokens.grid
    rows = T.take_rows(cb, tokens.ids.reshape(-1, h, w))  # (B, h, w, d)
    return rows.transpose((0, 3, 1, 2))


def recon_loss(recon: Tensor, target) -> Tensor:
    """Squared error summed over channels, averaged over pixels (and over the batch)."""
    target = T.as_tensor(target, dtype=recon.dtype)
    if recon.shape != target.shape:
        raise DimensionError(f"recon_loss: shape mismatch {recon.shape} vs {target.shape}")
    diff = recon - target
    sq = T.sum(diff * diff, axis=-3)
    return T.mean(sq)


def gumbel_temperature(step: int, total: int, start: float, end: float) -> float:
    """Geometric interpolation from ``start`` at step 0 to ``end`` at the last step."""
    if total <= 1:
        return end
    frac = min(max(step / (total - 1), 0.0), 1.0)
    return start * (end / start) ** frac


class VqModel:
    """Encoder, decoder and codebook parameters plus the forward passes."""

    def __init__(self, config: VqConfig, params: dict[str, Tensor]):
        self.config = config
        self.params = params
        self._check()

    @classmethod
    def init(cls, config: VqConfig, rng: np.random.Generator) -> VqModel:
        params: dict[str, Tensor] = {}
        cin = 3
        for i, w in enumerate(config.widths):
            params[f"enc.conv{i}.w"] = conv_weight(rng, (w, cin, 4, 4))
            params[f"enc.conv{i}.b"] = Tensor(np.zeros(w, np.float32))
            cin = w
        params["enc.out.w"] = conv_weight(rng, (config.k, cin, 1, 1))
        params["enc.out.b"] = Tensor(np.zeros(config.k, np.float32))

        top = config.widths[-1]
        params["dec.in.w"] = conv_weight(rng, (top, config.d, 1, 1))
        params["dec.in.b"] = Tensor(np.zeros(top, np.float32))
        chans = list(reversed(config.widths)) + [3]
        for i in range(len(config.widths)):
            # transposed-conv weights are (C_in, C_out, kh, kw); fan-in is C_in * kh * kw / stride**2
            params[f"dec.up{i}.w"] = conv_weight(rng, (chans[i], chans[i + 1], 4, 4), fan_in=chans[i] * 4)
            params[f"dec.up{i}.b"] = Tensor(np.zeros(chans[i + 1], np.float32))
        params["codebook"] = normal_table(rng, (config.k, config.d))
        for p in params.values():
            p.requires_grad = True
        return cls(config, params)

    def _check(self) -> None:
        cfg = self.config
        if self.params["codebook"].shape != (cfg.k, cfg.d):
            raise DimensionError(f"codebook shape {self.params['codebook'].shape} != ({cfg.k}, {cfg.d})")
        if self.params["enc.out.w"].shape[0] != cfg.k:
            raise DimensionError("encoder must emit one logit channel per codeword")
        if self.params["dec.in.w"].shape[1] != cfg.d:
            raise DimensionError("decoder input channels must equal codeword dimension")

    @property
    def codebook(self) -> Tensor:
        return self.params["codebook"]

    def parameters(self) -> list[Tensor]:
        return list(self.params.values())

    def encode_logits(self, x) -> Tensor:
        x = T.as_tensor(x)
        f = self.config.downsample
        if x.ndim != 4 or x.shape[1] != 3:
            raise ValueError(f"expected a (B, 3, H, W) batch, got {x.shape}")
        if x.shape[2] % f or x.shape[3] % f:
            raise ValueError(f"image size {x.shape[2:]} not divisible by downsample factor {f}")
        p = self.params
        h = x
        for i in range(len(self.config.widths)):
            h = T.relu(add_channel_bias(conv2d(h, p[f"enc.conv{i}.w"], stride=2, pad=1), p[f"enc.conv{i}.b"]))
        return add_channel_bias(conv2d(h, p["enc.out.w"]), p["enc.out.b"])

    def decode(self, emb) -> Tensor:
        emb = T.as_tensor(emb)
        if emb.ndim != 4 or emb.shape[1] != self.config.d:
            raise DimensionError(f"decoder expects (B, {self.config.d}, h, w), got {emb.shape}")
        p = self.params
        h = T.relu(add_channel_bias(conv2d(emb, p["dec.in.w"]), p["dec.in.b"]))
        n = len(self.config.widths)
        for i in range(n):
            h = add_channel_bias(conv_transpose2d(h, p[f"dec.up{i}.w"], stride=2, pad=1), p[f"dec.up{i}.b"])
            h = T.relu(h) if i < n - 1 else T.sigmoid(h)
        return h

    def soft_embedding(self, logits: Tensor, tau: float, rng: np.random.Generator | None) -> Tensor:
        """Gumbel-softmax mixture of codewords; ``rng=None`` drops the noise."""
        z = logits
        if rng is not None:
            u = rng.random(logits.shape)
            g = -np.log(-np.log(u + 1e-20) + 1e-20)
            z = z + Tensor(g.astype(logits.dtype))
        weights = T.softmax(T.scale(z, 1.0 / tau), axis=1)  # (B, k, h, w)
        mix = T.matmul(weights.transpose((0, 2, 3, 1)), self.codebook)  # (B, h, w, d)
        return mix.transpose((0, 3, 1, 2))

    def tokenize(self, x) -> ImageTokens:
        return quantize(self.encode_logits(x))

    def detokenize(self, tokens: ImageTokens) -> np.ndarray:
        return self.decode(lookup_embedding(self.codebook, tokens)).data

    def reconstruct(self, x) -> np.ndarray:
        return self.detokenize(self.tokenize(x))

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: v.data for k, v in self.params.items()}

    @classmethod
    def from_state_dict(cls, config: VqConfig, arrays: dict[str, np.ndarray]) -> VqModel:
        template = cls.init(config, np.random.default_rng(0))
        missing = set(template.params) - set(arrays)
        extra = set(arrays) - set(template.params)
        if missing or extra:
            raise ValueError(f"not a VQ checkpoint for this config: missing {sorted(missing)}, extra {sorted(extra)}")
        params = {}
        for name, t in template.params.items():
            a = np.asarray(arrays[name], dtype=np.float32)
            if a.shape != t.shape:
                raise DimensionError(f"{name}: checkpoint shape {a.shape}, config expects {t.shape}")
            params[name] = Tensor(a, requires_grad=True)
        return cls(config, params)


@dataclass
class VqHistory:
    step_loss: list[float] = field(default_factory=list)
    epoch_loss: list[float] = field(default_factory=list)


def train_vqvae(
    images: np.ndarray,
    config: VqConfig,
    rng: np.random.Generator,
    model: VqModel | None = None,
) -> tuple[VqModel, VqHistory]:
    """Fit the tokenizer to ``images`` (N, 3, H, W) in [0, 1].

    Runs ``config.epochs`` epochs (or stops at ``config.max_steps`` updates).
    The learning rate decays by ``config.lr_decay`` after every epoch.
    """
    images = np.asarray(images, dtype=np.float32)
    if images.ndim != 4 or len(images) == 0:
        raise ValueError("train_vqvae needs a non-empty (N, 3, H, W) image array")
    model = model or VqModel.init(config, rng)
    opt = Adam(model.parameters(), lr=config.lr)
    n = len(images)
    bs = min(config.batch_size, n)
    steps_per_epoch = math.ceil(n / bs)
    total = steps_per_epoch * config.epochs
    if config.max_steps is not None:
        total = min(total, config.max_steps)
    hist = VqHistory()
    step = 0
    epoch = 0
    while step < total:
        opt.lr = exponential_lr(config.lr, config.lr_decay, epoch)
        order = rng.permutation(n)
        losses = []
        for start in range(0, n, bs):
            if step >= total:
                break
            x = images[order[start : start + bs]]
            tau = gumbel_temperature(step, total, config.tau_start, config.tau_end)
            opt.zero_grad()
            logits = model.encode_logits(x)
            recon = model.decode(model.soft_embedding(logits, tau, rng))
            loss = recon_loss(recon, x)
            T.backward(loss)
            opt.step()
            losses.append(float(loss.data))
            hist.step_loss.append(losses[-1])
            step += 1
        hist.epoch_loss.append(float(np.mean(losses)))
        if epoch % 50 == 0:
            logger.debug("vq epoch %d loss %.5f tau %.4f", epoch, hist.epoch_loss[-1], tau)
        epoch += 1
    return model, hist
