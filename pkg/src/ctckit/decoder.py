"""CTC prefix beam search with an optional character n-gram language model.

Hypotheses are label prefixes scored by
    Q = log P(prefix | x) + alpha * log P_lm(prefix) + beta * wordcount,
where the acoustic term is the posterior summed over all frame paths that
collapse to the prefix, maintained as separate blank / non-blank ending
probabilities so paths merge exactly.  All scores are natural logs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ctc import LogProbLattice
from .lm import BOS, LN10, NGramLM

NEG_INF = -np.inf
BEAM_PRESETS = (100, 2000)


class DecoderError(ValueError):
    pass


@dataclass(frozen=True)
class DecoderConfig:
    alpha: float = 0.8  # language model weight
    beta: float = 1.0  # word insertion bonus
    beam_width: int = 100
    lm: NGramLM | None = None

    def __post_init__(self):
        if self.beam_width < 1:
            raise DecoderError("beam_width must be >= 1")
        if not (np.isfinite(self.alpha) and np.isfinite(self.beta)):
            raise DecoderError("alpha and beta must be finite")


@dataclass
class Hypothesis:
    """A ranked decoding result."""

    text: str
    q: float
    acoustic: float
    lm_logprob: float  # natural log, unweighted
    word_count: int


def word_count(text: str) -> int:
    """Completed space-delimited words plus a trailing unfinished word."""
    return len(text.split())


def rescore_q(text, acoustic_logprob, lm, alpha, beta) -> float:
    """The decoding objective for a finished transcript.

    The LM term scores the characters left to right after a start-of-sentence
    marker (no end-of-sentence term), matching what the beam accumulates.
    """
    lm_term = 0.0
    if lm is not None:
        lm_term = LN10 * lm.sequence_logprob(text, bos=True, eos=False)
    return acoustic_logprob + alpha * lm_term + beta * word_count(text)


def _check_lm_covers_alphabet(lattice: LogProbLattice, lm: NGramLM) -> None:
    missing = [
        s
        for i, s in enumerate(lattice.alphabet.symbols)
        if i != lattice.alphabet.blank_index and s not in lm.vocab
    ]
    if missing:
        raise DecoderError(f"alphabet symbols missing from LM vocabulary: {missing}")


def beam_search(lattice: LogProbLattice, cfg: DecoderConfig) -> list[Hypothesis]:
    """Prefix beam search over the lattice; returns hypotheses ranked by Q.

    Per frame every surviving prefix extends by blank, by a repeat of its
    last symbol, and by each new symbol; duplicate prefixes merge by
    log-sum-exp.  The beam prunes on the running Q (word bonus included);
    equal scores break ties by lexicographic prefix order.
    """
    alphabet = lattice.alphabet
    blank = alphabet.blank_index
    space = alphabet.space_index
    if cfg.lm is not None:
        _check_lm_covers_alphabet(lattice, cfg.lm)
    if lattice.num_frames == 0:
        return [Hypothesis("", 0.0, 0.0, 0.0, 0)]

    lm_raw: dict[tuple, float] = {(): 0.0}  # natural-log LM score of the prefix
    words: dict[tuple, int] = {(): 0}  # completed words

    def lm_increment(prefix: tuple, sym_id: int) -> float:
        if cfg.lm is None:
            return 0.0
        history = [BOS] + [alphabet.symbols[i] for i in prefix]
        return LN10 * cfg.lm.score(history, alphabet.symbols[sym_id])

    def running_q(prefix: tuple, acoustic: float) -> float:
        return acoustic + cfg.alpha * lm_raw[prefix] + cfg.beta * words[prefix]

    beams: dict[tuple, list[float]] = {(): [0.0, NEG_INF]}  # prefix -> [p_blank, p_nonblank]
    for row in lattice.log_probs:
        nxt: dict[tuple, list[float]] = {}

        def bump(prefix, slot, value):
            if value == NEG_INF:  # never materialize impossible prefixes
                return
            cell = nxt.setdefault(prefix, [NEG_INF, NEG_INF])
            cell[slot] = np.logaddexp(cell[slot], value)

        for prefix, (p_b, p_nb) in beams.items():
            total = np.logaddexp(p_b, p_nb)
            bump(prefix, 0, total + row[blank])
            last = prefix[-1] if prefix else None
            if last is not None:
                bump(prefix, 1, p_nb + row[last])
            for c in range(len(alphabet)):
                if c == blank:
                    continue
                extended = prefix + (c,)
                if extended not in lm_raw:
                    lm_raw[extended] = lm_raw[prefix] + lm_increment(prefix, c)
                    completes = c == space and last is not None and last != space
                    words[extended] = words[prefix] + (1 if completes else 0)
                mass = p_b if c == last else total
                bump(extended, 1, mass + row[c])

        if len(nxt) > cfg.beam_width:
            ranked = sorted(
                nxt.items(),
                key=lambda kv: (-running_q(kv[0], np.logaddexp(*kv[1])), kv[0]),
            )
            nxt = dict(ranked[: cfg.beam_width])
        beams = nxt

    results = []
    for prefix, (p_b, p_nb) in beams.items():
        acoustic = float(np.logaddexp(p_b, p_nb))
        trailing = 1 if prefix and prefix[-1] != space else 0
        n_words = words[prefix] + trailing
        q = acoustic + cfg.alpha * lm_raw[prefix] + cfg.beta * n_words
        results.append(
            Hypothesis(
                text=alphabet.decode(prefix),
                q=q,
                acoustic=acoustic,
                lm_logprob=lm_raw[prefix],
                word_count=n_words,
            )
        )
    results.sort(key=lambda h: (-h.q, h.text))
    return results
