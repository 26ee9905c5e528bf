"""Overfit the generator on eight captioned toy scenes and look at its prototypes.

Images are tokenized with the fixed 8-colour palette (a 2x2 grid of cell
colours), so every codeword has a readable meaning.  After training, each
prompt is regenerated greedily and the prototypes that the final layer
actually selects are listed with their strongest codewords.

    python demos/prototype_inspection.py
"""

import numpy as np

from txt2img_mhn.blobs import COLORS, GROUNDS, palette_tokenize, toy_pairs
from txt2img_mhn.generator import JointSequence, MhnConfig, inspect_prototypes, train_mhn
from txt2img_mhn.pipeline import encode_captions
from txt2img_mhn.text import bpe_train

PALETTE_NAMES = list(COLORS) + [f"{g} ground" for g in GROUNDS]


def main() -> None:
    images, captions = toy_pairs(8)
    vocab = bpe_train(captions, 128)
    seq = JointSequence(encode_captions(vocab, captions, 8), palette_tokenize(images, 2))
    cfg = MhnConfig(text_vocab=vocab.size, n=8, m=4, k=8, d_emb=16, n_pro=64, batch_size=8, epochs=3000, lr=1e-2, lr_decay=1.0, clip_norm=1.0)
    model, hist = train_mhn(seq, cfg, np.random.default_rng(0))
    print(f"loss {hist.step_loss[0]:.3f} -> {hist.step_loss[-1]:.4f} after {len(hist.step_loss)} steps\n")

    for caption, target, got in zip(captions, seq.image, model.generate(seq.text)):
        cells = ", ".join(PALETTE_NAMES[t] for t in got)
        print(f"{caption:42s} [{cells}] {'ok' if np.array_equal(target, got) else 'MISMATCH'}")

    assoc = model.prototype_weights(seq)[:, seq.n :, :]
    active = sorted(set(assoc.argmax(-1).ravel().tolist()))
    print(f"\n{len(active)} of {cfg.n_pro} prototypes win at least one image position:")
    rows = inspect_prototypes(model.params["final.wc"], 2)
    for r in active:
        print(f"  prototype {r:2d}: " + ", ".join(f"{PALETTE_NAMES[j]} ({w:+.2f})" for j, w in rows[r]))


if __name__ == "__main__":
    main()
