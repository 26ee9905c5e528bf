"""Text-to-image generation with modern-Hopfield prototype layers, on numpy.

The pieces, bottom up: a small reverse-mode autodiff engine (``tensor``,
``conv``, ``optim``), a BPE text tokenizer, a VQ image tokenizer, the
prototype-based autoregressive generator, IS/FID metrics and the zero-shot
classification protocol.  ``python -m txt2img_mhn`` runs the stages from the
command line.
"""

from .blobs import keyword_table, make_blob_world, palette_tokenize, toy_pairs
from .checkpoint import CheckpointFormatError, load_checkpoint, save_checkpoint
from .config import RunConfig, config_hash, load_config
from .data import ingest
from .generator import Generator, JointSequence, MhnConfig, causal_mask, hopfield_layer, inspect_prototypes, train_mhn
from .metrics import fid, gaussian_stats, inception_score, matrix_sqrt_product
from .tensor import Tensor, backward
from .text import BpeVocab, bpe_train, decode_text, encode_text
from .vq import ImageTokens, VqConfig, VqModel, quantize, train_vqvae
from .zeroshot import ClassifierConfig, LabeledImageSet, label_from_caption, train_classifier, zeroshot_pipeline

__version__ = "0.1.0"

__all__ = [
    "BpeVocab",
    "CheckpointFormatError",
    "ClassifierConfig",
    "Generator",
    "ImageTokens",
    "JointSequence",
    "LabeledImageSet",
    "MhnConfig",
    "RunConfig",
    "Tensor",
    "VqConfig",
    "VqModel",
    "backward",
    "bpe_train",
    "causal_mask",
    "config_hash",
    "decode_text",
    "encode_text",
    "fid",
    "gaussian_stats",
    "hopfield_layer",
    "inception_score",
    "ingest",
    "inspect_prototypes",
    "keyword_table",
    "label_from_caption",
    "load_checkpoint",
    "load_config",
    "make_blob_world",
    "matrix_sqrt_product",
    "palette_tokenize",
    "quantize",
    "save_checkpoint",
    "toy_pairs",
    "train_classifier",
    "train_mhn",
    "train_vqvae",
    "zeroshot_pipeline",
]
