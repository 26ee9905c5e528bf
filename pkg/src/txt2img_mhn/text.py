"""Word-level byte-pair encoding for captions.

Normalisation rule (applied by :func:`normalize` before training and encoding):
lowercase, drop every character that is not a letter, digit, comma or period,
then collapse runs of whitespace to a single space.

Words are split on whitespace and each one becomes a symbol sequence of its
characters followed by the end-of-word marker ``</w>``; merges never cross word
boundaries.  Id 0 is padding (and the start token), id 1 is UNK, base symbols
follow in sorted order, then one id per merge product in merge order.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "PAD_ID",
    "UNK_ID",
    "END_OF_WORD",
    "BpeVocab",
    "normalize",
    "bpe_train",
    "encode_text",
    "decode_text",
    "save_vocab",
    "load_vocab",
]

PAD_ID = 0
UNK_ID = 1
END_OF_WORD = "</w>"
UNK_SYMBOL = "<unk>"
_HEADER = "bpe-v1"

_DROP = re.compile(r"[^0-9a-z,.\s]")
_SPACE = re.compile(r"\s+")


def normalize(text: str) -> str:
    text = _DROP.sub("", text.lower())
    return _SPACE.sub(" ", text).strip()


@dataclass
class BpeVocab:
    merges: list[tuple[str, str]]
    alphabet: list[str]
    token_to_id: dict[str, int] = field(default_factory=dict)
    id_to_token: dict[int, str] = field(default_factory=dict)

    def __post_init__(self):
        if not self.token_to_id:
            self._assign_ids()
        self._ranks = {pair: r for r, pair in enumerate(self.merges)}
        self._cache: dict[str, tuple[str, ...]] = {}

    def _assign_ids(self) -> None:
        symbols = [UNK_SYMBOL, *self.alphabet]
        for a, b in self.merges:
            symbols.append(a + b)
        for sym in symbols:
            if sym not in self.token_to_id:
                self.token_to_id[sym] = len(self.token_to_id) + 1
        self.id_to_token = {i: s for s, i in self.token_to_id.items()}

    @property
    def size(self) -> int:
        """Number of ids including the pad id."""
        return len(self.token_to_id) + 1

    def segment(self, word: str) -> tuple[str, ...]:
        """Apply the merge list to one normalised word."""
        if word in self._cache:
            return self._cache[word]
        known = set(self.alphabet)
        syms = [c if c in known else UNK_SYMBOL for c in word] + [END_OF_WORD]
        while len(syms) > 1:
            best = None
            for i in range(len(syms) - 1):
                r = self._ranks.get((syms[i], syms[i + 1]))
                if r is not None and (best is None or r < best[0]):
                    best = (r, i)
            if best is None:
                break
            i = best[1]
            syms[i : i + 2] = [syms[i] + syms[i + 1]]
        out = tuple(syms)
        self._cache[word] = out
        return out


def _merge_word(word: tuple[str, ...], pair: tuple[str, str]) -> tuple[str, ...]:
    out = []
    i = 0
    while i < len(word):
        if i < len(word) - 1 and word[i] == pair[0] and word[i + 1] == pair[1]:
            out.append(word[i] + word[i + 1])
            i += 2
        else:
            out.append(word[i])
            i += 1
    return tuple(out)


def bpe_train(corpus: list[str], vocab_size: int) -> BpeVocab:
    """Learn merges until the vocabulary (pad and UNK included) reaches ``vocab_size``.

    Each round merges the most frequent adjacent pair; equal counts go to the
    lexicographically smallest pair.
    """
    if not corpus:
        raise ValueError("bpe_train: empty corpus")
    words = Counter(w for line in corpus for w in normalize(line).split())
    if not words:
        raise ValueError("bpe_train: corpus has no words after normalisation")
    alphabet = sorted({c for w in words for c in w} | {END_OF_WORD})
    if vocab_size < len(alphabet) + 2:
        raise ValueError(f"vocab_size {vocab_size} below base alphabet {len(alphabet)} + pad + unk")

    seqs = {tuple(w) + (END_OF_WORD,): n for w, n in words.items()}
    merges: list[tuple[str, str]] = []
    symbols = {UNK_SYMBOL, *alphabet}
    while len(symbols) + 1 < vocab_size:
        pairs: Counter = Counter()
        for seq, n in seqs.items():
            for a, b in zip(seq, seq[1:]):
                pairs[(a, b)] += n
        if not pairs:
            break
        top = max(pairs.values())
        pair = min(p for p, c in pairs.items() if c == top)
        merges.append(pair)
        symbols.add(pair[0] + pair[1])
        seqs = {_merge_word(s, pair): n for s, n in seqs.items()}
    return BpeVocab(merges=merges, alphabet=alphabet)


def encode_text(vocab: BpeVocab, text: str, n: int = 40) -> np.ndarray:
    """Token ids for ``text``, truncated or zero-padded to exactly ``n``."""
    ids: list[int] = []
    for word in normalize(text).split():
        ids.extend(vocab.token_to_id[s] for s in vocab.segment(word))
        if len(ids) >= n:
            break
    ids = ids[:n]
    return np.array(ids + [PAD_ID] * (n - len(ids)), dtype=np.int64)


def decode_text(vocab: BpeVocab, ids) -> str:
    parts = []
    for i in np.asarray(ids, dtype=np.int64).reshape(-1):
        i = int(i)
        if i == PAD_ID:
            continue
        if i not in vocab.id_to_token:
            raise IndexError(f"unknown token id {i}")
        parts.append(vocab.id_to_token[i])
    return _SPACE.sub(" ", "".join(parts).replace(END_OF_WORD, " ")).strip()


def save_vocab(vocab: BpeVocab, path) -> None:
    lines = [f"{_HEADER} {vocab.size}", "alphabet " + " ".join(vocab.alphabet)]
    lines += [f"{a} {b}" for a, b in vocab.merges]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_vocab(path) -> BpeVocab:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or not lines[0].startswith(_HEADER + " "):
        raise ValueError(f"{path}: missing '{_HEADER} <vocab_size>' header")
    size = int(lines[0].split()[1])
    if len(lines) < 2 or not lines[1].startswith("alphabet "):
        raise ValueError(f"{path}: missing alphabet line")
    alphabet = lines[1].split()[1:]
    merges = []
    for lineno, line in enumerate(lines[2:], start=3):
        parts = line.split()
        if len(parts) != 2:
            raise ValueError(f"{path}:{lineno}: expected two symbols, got {line!r}")
        merges.append((parts[0], parts[1]))
    vocab = BpeVocab(merges=merges, alphabet=alphabet)
    if vocab.size != size:
        raise ValueError(f"{path}: header declares {size} ids, merges produce {vocab.size}")
    return vocab
