"""Run configuration: one JSON document covering every stage, validated on load."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .generator import MhnConfig
from .vq import VqConfig
from .zeroshot import ClassifierConfig

__all__ = ["ConfigError", "DataConfig", "TextConfig", "DecodeConfig", "EvalConfig", "RunConfig", "load_config", "config_hash"]


class ConfigError(ValueError):
    pass


@dataclass
class DataConfig:
    manifest: str = ""
    image_size: int = 32


@dataclass
class TextConfig:
    vocab_size: int = 2048


@dataclass
class DecodeConfig:
    mode: str = "greedy"
    temperature: float = 1.0
    top_k: int | None = 64

    def __post_init__(self):
        if self.mode not in ("greedy", "sample"):
            raise ValueError(f"decode mode must be greedy or sample, got {self.mode!r}")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        if self.top_k is not None and self.top_k < 1:
            raise ValueError("top_k must be positive")


@dataclass
class EvalConfig:
    n_generated: int = 64
    is_splits: int = 10

    def __post_init__(self):
        if self.n_generated < 1 or self.is_splits < 1:
            raise ValueError("n_generated and is_splits must be positive")


@dataclass
class RunConfig:
    data: DataConfig = field(default_factory=DataConfig)
    text: TextConfig = field(default_factory=TextConfig)
    vq: VqConfig = field(default_factory=VqConfig)
    mhn: MhnConfig = field(default_factory=MhnConfig)
    classifier: ClassifierConfig = field(default_factory=ClassifierConfig)
    decode: DecodeConfig = field(default_factory=DecodeConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    seed: int = 0

    def __post_init__(self):
        if self.vq.image_size != self.data.image_size:
            raise ConfigError(f"vq.image_size {self.vq.image_size} differs from data.image_size {self.data.image_size}")
        if self.mhn.k != self.vq.k:
            raise ConfigError(f"mhn.k {self.mhn.k} must equal the codebook size vq.k {self.vq.k}")
        if self.mhn.m != self.vq.tokens_per_image:
            raise ConfigError(f"mhn.m {self.mhn.m} must equal the token grid size {self.vq.tokens_per_image}")
        if self.mhn.text_vocab < self.text.vocab_size:
            raise ConfigError(f"mhn.text_vocab {self.mhn.text_vocab} smaller than text.vocab_size {self.text.vocab_size}")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, raw: dict) -> RunConfig:
        sections = {"data": DataConfig, "text": TextConfig, "vq": VqConfig, "mhn": MhnConfig, "classifier": ClassifierConfig, "decode": DecodeConfig, "eval": EvalConfig}
        unknown = set(raw) - set(sections) - {"seed"}
        if unknown:
            raise ConfigError(f"unknown config sections {sorted(unknown)}")
        kwargs = {}
        for name, kind in sections.items():
            body = raw.get(name, {})
            if not isinstance(body, dict):
                raise ConfigError(f"section {name!r} must be an object")
            allowed = {f.name for f in dataclasses.fields(kind)}
            bad = set(body) - allowed
            if bad:
                raise ConfigError(f"unknown keys in {name}: {sorted(bad)}")
            try:
                kwargs[name] = kind(**body)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"{name}: {exc}") from exc
        try:
            return cls(**kwargs, seed=int(raw.get("seed", 0)))
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc


def load_config(path) -> RunConfig:
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"config not found: {p}")
    try:
        raw = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p}: invalid JSON ({exc})") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{p}: top level must be an object")
    return RunConfig.from_dict(raw)


def config_hash(config: RunConfig) -> str:
    """SHA-256 over the canonical JSON form (first 16 hex digits)."""
    canon = json.dumps(config.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:16]
