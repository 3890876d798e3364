"""Grapheme-based CTC speech recognition toolkit.

Desk-scale, numpy-only implementation of a full CTC pipeline: feature
frontend, CTC and segmented-CTC training criteria, character n-gram
language model, prefix beam search decoding, tiny trainable acoustic
models with hand-derived gradients, and WER/CER scoring.
"""

from .alphabet import Alphabet, AlphabetError, build_alphabet, load_alphabet, save_alphabet
from .ctc import (
    CtcError,
    CtcResult,
    InfeasibleError,
    LogProbLattice,
    collapse,
    ctc_loss,
    ctc_loss_from_logits,
    forced_alignment,
    greedy_decode,
)
from .frontend import FeatureConfig, FeatureMatrix, featurize

__version__ = "0.1.0"
