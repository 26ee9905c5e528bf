"""Command line entry point: ``python -m txt2img_mhn <subcommand> ...``.

Every stage reads and writes one output directory (``--out``).  Default file
names inside it chain the stages together::

    bpe-train      -> vocab.txt
    train-vqvae    -> vq.thn, vq_loss.txt
    train-mhn      -> mhn.thn, mhn_loss.txt
    generate       -> generated/NNNN.png, generated/prompts.tsv
    evaluate       -> metrics.txt
    zeroshot       -> oa_report.txt
    inspect-prototypes -> prototypes.txt

Exit status: 0 success, 1 validation error, 2 I/O or format error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .checkpoint import CheckpointFormatError, load_checkpoint, save_checkpoint
from .config import ConfigError, RunConfig, config_hash, load_config
from .data import Dataset, ManifestError, ingest, save_png
from .generator import Generator, inspect_prototypes, train_mhn
from .metrics import fid, gaussian_stats, inception_score, write_metrics_report
from .pipeline import build_pairs, encode_captions, generate_tokens, make_synthesizer, tokenize_images
from .text import bpe_train, load_vocab, save_vocab
from .vq import ImageTokens, VqModel, train_vqvae
from .zeroshot import LabeledImageSet, train_classifier, write_oa_report, zeroshot_pipeline

logger = logging.getLogger("txt2img_mhn")

EXIT_OK, EXIT_INVALID, EXIT_IO = 0, 1, 2

# stream ids mixed into the seed so stages draw independent random numbers
_STREAMS = {"vq": 1, "mhn": 2, "generate": 3, "evaluate": 4, "zeroshot": 5}


class MissingStageError(FileNotFoundError):
    """A prerequisite artefact is absent; the message names the stage to run."""


@dataclass
class Context:
    config: RunConfig
    seed: int
    out: Path
    command: str
    config_dir: Path

    def rng(self, stream: str) -> np.random.Generator:
        return np.random.default_rng([self.seed, _STREAMS[stream]])

    def header(self) -> str:
        return f"# txt2img_mhn command={self.command} config_hash={config_hash(self.config)} seed={self.seed}"

    def manifest(self) -> Path:
        if not self.config.data.manifest:
            raise ConfigError("config data.manifest is empty")
        p = Path(self.config.data.manifest)
        return p if p.is_absolute() else self.config_dir / p

    def write_run_header(self) -> None:
        (self.out / f"run_{self.command}.txt").write_text(self.header() + "\n", encoding="utf-8")


def _need(path: Path, stage: str, what: str) -> Path:
    if not path.is_file():
        raise MissingStageError(f"{what} not found at {path}; run `python -m txt2img_mhn {stage}` first")
    return path


def _dataset(ctx: Context) -> Dataset:
    return ingest(ctx.manifest(), ctx.config.data.image_size)


def _load_vq(ctx: Context, path: str | None) -> VqModel:
    p = _need(Path(path) if path else ctx.out / "vq.thn", "train-vqvae", "VQ checkpoint")
    return VqModel.from_state_dict(ctx.config.vq, load_checkpoint(p))


def _load_generator(ctx: Context, path: str | None) -> Generator:
    p = _need(Path(path) if path else ctx.out / "mhn.thn", "train-mhn", "generator checkpoint")
    return Generator.from_state_dict(ctx.config.mhn, load_checkpoint(p))


def _load_vocab(ctx: Context, path: str | None):
    return load_vocab(_need(Path(path) if path else ctx.out / "vocab.txt", "bpe-train", "vocabulary"))


def _write_history(path: Path, header: str, losses: list[float]) -> None:
    path.write_text(header + "\n" + "".join(f"{i}\t{v:.6f}\n" for i, v in enumerate(losses)), encoding="utf-8")


# -- subcommands ------------------------------------------------------------


def cmd_bpe_train(ctx: Context, args) -> None:
    ds = _dataset(ctx).split("train")
    _, captions = ds.pairs()
    vocab = bpe_train(captions, ctx.config.text.vocab_size)
    save_vocab(vocab, ctx.out / "vocab.txt")
    logger.info("vocabulary of %d ids, %d merges", vocab.size, len(vocab.merges))


def cmd_train_vqvae(ctx: Context, args) -> None:
    ds = _dataset(ctx).split("train")
    model, hist = train_vqvae(ds.images, ctx.config.vq, ctx.rng("vq"))
    save_checkpoint(ctx.out / "vq.thn", model.state_dict())
    _write_history(ctx.out / "vq_loss.txt", ctx.header(), hist.step_loss)
    logger.info("vq final loss %.5f", hist.step_loss[-1])


def cmd_train_mhn(ctx: Context, args) -> None:
    vocab = _load_vocab(ctx, args.vocab)
    vq = _load_vq(ctx, args.vq_checkpoint)
    if vocab.size > ctx.config.mhn.text_vocab:
        raise ConfigError(f"vocabulary has {vocab.size} ids but mhn.text_vocab is {ctx.config.mhn.text_vocab}")
    ds = _dataset(ctx).split("train")
    index, captions = ds.pairs()
    data = build_pairs(tokenize_images(vq, ds.images), index, captions, vocab, ctx.config.mhn.n)
    model, hist = train_mhn(data, ctx.config.mhn, ctx.rng("mhn"))
    save_checkpoint(ctx.out / "mhn.thn", model.state_dict())
    _write_history(ctx.out / "mhn_loss.txt", ctx.header(), hist.step_loss)
    logger.info("mhn final loss %.5f", hist.step_loss[-1])


def _decode_opts(ctx: Context, args) -> tuple[str, float, int | None]:
    d = ctx.config.decode
    mode = args.mode or d.mode
    temperature = d.temperature if args.temperature is None else args.temperature
    top_k = d.top_k if args.top_k is None else args.top_k
    if temperature <= 0:
        raise ConfigError("--temperature must be positive")
    if top_k is not None and top_k < 1:
        raise ConfigError("--top-k must be positive")
    return mode, temperature, top_k


def _prompts(ctx: Context, args) -> list[str]:
    if args.prompt:
        return list(args.prompt)
    if args.prompts:
        p = Path(args.prompts)
        if not p.is_file():
            raise FileNotFoundError(f"prompt file not found: {p}")
        lines = [ln.strip() for ln in p.read_text(encoding="utf-8").splitlines()]
        return [ln for ln in lines if ln]
    _, captions = _dataset(ctx).split("test").pairs()
    return captions[: ctx.config.eval.n_generated]


def cmd_generate(ctx: Context, args) -> None:
    vocab = _load_vocab(ctx, args.vocab)
    gen = _load_generator(ctx, args.checkpoint)
    vq = _load_vq(ctx, args.vq_checkpoint)
    mode, temperature, top_k = _decode_opts(ctx, args)
    prompts = _prompts(ctx, args)
    if not prompts:
        raise ConfigError("no prompts to generate from")
    ids = generate_tokens(gen, encode_captions(vocab, prompts, gen.config.n), mode, temperature, top_k, ctx.rng("generate"))
    images = vq.detokenize(ImageTokens(ids, (vq.config.grid, vq.config.grid)))
    out = ctx.out / "generated"
    out.mkdir(parents=True, exist_ok=True)
    lines = [ctx.header() + f" mode={mode} temperature={temperature} top_k={top_k}"]
    for i, (img, prompt) in enumerate(zip(images, prompts)):
        name = f"{i:04d}.png"
        save_png(img, out / name)
        lines.append(f"{name}\t{prompt}")
    (out / "prompts.tsv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    np.savetxt(out / "tokens.txt", ids, fmt="%d", header=ctx.header()[2:])
    logger.info("wrote %d images to %s", len(images), out)


def _real_sets(ctx: Context) -> tuple[Dataset, LabeledImageSet, LabeledImageSet]:
    ds = _dataset(ctx)
    train, test = ds.split("train"), ds.split("test")
    if len(test) == 0:
        raise ConfigError("manifest has no test split")
    real_train = LabeledImageSet(train.images, train.labels(), ds.class_names, "real-train", [str(r.image_path) for r in train.records])
    real_test = LabeledImageSet(test.images, test.labels(), ds.class_names, "real-test", [str(r.image_path) for r in test.records])
    return test, real_train, real_test


def cmd_evaluate(ctx: Context, args) -> None:
    vq = _load_vq(ctx, args.vq_checkpoint)
    gen = _load_generator(ctx, args.checkpoint)
    vocab = _load_vocab(ctx, args.vocab)
    test, real_train, real_test = _real_sets(ctx)
    rng = ctx.rng("evaluate")
    # the extractor is a classifier fitted on real training images only
    extractor, _ = train_classifier(real_train, ctx.config.classifier, rng, held_out=real_test)
    mode, temperature, top_k = _decode_opts(ctx, args)
    _, captions = test.pairs()
    captions = captions[: ctx.config.eval.n_generated]
    fake = make_synthesizer(gen, vq, vocab, mode, temperature, top_k, rng)(captions)
    is_mean, is_std = inception_score(extractor.class_probs(fake), ctx.config.eval.is_splits)
    score = fid(gaussian_stats(extractor.features(real_test.images)), gaussian_stats(extractor.features(fake)))
    write_metrics_report(ctx.out / "metrics.txt", is_mean, is_std, score, len(real_test), len(fake), ctx.header())
    logger.info("IS %.4f +- %.4f, FID %.4f", is_mean, is_std, score)


def cmd_zeroshot(ctx: Context, args) -> None:
    vq = _load_vq(ctx, args.vq_checkpoint)
    gen = _load_generator(ctx, args.checkpoint)
    vocab = _load_vocab(ctx, args.vocab)
    _, _, real_test = _real_sets(ctx)
    keywords = {c: [c] for c in real_test.class_names}
    # prompts come from the training split; one caption per image, cycling through caption slots
    train = _dataset(ctx).split("train")
    prompts = []
    for slot in range(max(len(r.captions) for r in train.records)):
        prompts += [r.captions[slot] for r in train.records if slot < len(r.captions)]
    prompts = prompts[: ctx.config.eval.n_generated]
    mode, temperature, top_k = _decode_opts(ctx, args)
    rng = ctx.rng("zeroshot")
    report = zeroshot_pipeline(make_synthesizer(gen, vq, vocab, mode, temperature, top_k, rng), prompts, keywords, real_test, ctx.config.classifier, rng)
    write_oa_report(ctx.out / "oa_report.txt", report, ctx.header())
    logger.info("zero-shot OA %.4f (%d prompts skipped)", report.oa, report.skipped)


def cmd_inspect_prototypes(ctx: Context, args) -> None:
    gen = _load_generator(ctx, args.checkpoint)
    rows = inspect_prototypes(gen.params["final.wc"], args.top)
    lines = [ctx.header()]
    for r, row in enumerate(rows):
        lines.append(f"prototype {r}: " + " ".join(f"{j}:{w:.4f}" for j, w in row))
    (ctx.out / "prototypes.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")


COMMANDS = {
    "bpe-train": cmd_bpe_train,
    "train-vqvae": cmd_train_vqvae,
    "train-mhn": cmd_train_mhn,
    "generate": cmd_generate,
    "evaluate": cmd_evaluate,
    "zeroshot": cmd_zeroshot,
    "inspect-prototypes": cmd_inspect_prototypes,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="txt2img_mhn", description="Prototype-based text-to-image generation on a desk budget.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="run configuration (JSON)")
        p.add_argument("--seed", type=int, default=None, help="overrides the config seed (u64)")
        p.add_argument("--out", required=True, help="working directory shared by all stages")
        p.add_argument("-v", "--verbose", action="store_true")
        if name in ("train-mhn", "generate", "evaluate", "zeroshot"):
            p.add_argument("--vq-checkpoint", default=None, help="default: <out>/vq.thn")
            p.add_argument("--vocab", default=None, help="default: <out>/vocab.txt")
        if name in ("generate", "evaluate", "zeroshot", "inspect-prototypes"):
            p.add_argument("--checkpoint", default=None, help="generator checkpoint, default: <out>/mhn.thn")
        if name in ("generate", "evaluate", "zeroshot"):
            p.add_argument("--mode", choices=("greedy", "sample"), default=None)
            p.add_argument("--temperature", type=float, default=None)
            p.add_argument("--top-k", type=int, default=None)
        if name == "generate":
            p.add_argument("--prompt", action="append", help="prompt text, repeatable")
            p.add_argument("--prompts", default=None, help="file with one prompt per line")
        if name == "inspect-prototypes":
            p.add_argument("--top", type=int, default=5)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        config = load_config(args.config)
        seed = config.seed if args.seed is None else args.seed
        if not 0 <= seed < 2**64:
            raise ConfigError("--seed must be an unsigned 64-bit integer")
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        ctx = Context(config, seed, out, args.command, Path(args.config).resolve().parent)
        COMMANDS[args.command](ctx, args)
        ctx.write_run_header()
    except (CheckpointFormatError, ManifestError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ConfigError, ValueError, IndexError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK

