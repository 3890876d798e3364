"""Backoff character n-gram language model with ARPA serialization.

Probabilities are Witten-Bell smoothed and stored in log10 (the ARPA
convention); every stored value is quantized to six decimal places at build
time so that an ARPA save/load round trip is exact.  Sentence boundaries use
the usual <s> / </s> markers; the literal space character is escaped as
<space> in ARPA files because tokens there are whitespace-delimited.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

BOS = "<s>"
EOS = "</s>"
SPACE_TOKEN = "<space>"
OOV_LOG10 = -99.0
LN10 = math.log(10.0)


class LmError(ValueError):
    pass


class ArpaFormatError(LmError):
    def __init__(self, message, line_no=None):
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)
        self.line_no = line_no


def _q(x: float) -> float:
    return round(x, 6)


@dataclass
class NGramLM:
    """Backoff n-gram model over single-character symbols.

    ``probs[k]`` maps k-gram tuples to log10 conditional probabilities;
    ``backoffs[k]`` maps k-gram histories to log10 backoff weights.  ``counts``
    holds the raw pre-smoothing n-gram counts when the model was trained here
    (ARPA-loaded models have none).
    """

    order: int
    probs: list[dict]
    backoffs: list[dict]
    vocab: set[str]
    counts: list[dict] | None = field(default=None, repr=False)

    def score(self, history, symbol: str) -> float:
        """log10 P(symbol | history) via the longest matching history suffix.

        Unknown symbols score the OOV floor (-99) instead of failing.
        """
        if symbol not in self.vocab:
            return OOV_LOG10
        h = tuple(history)
        if len(h) > self.order - 1:
            h = h[len(h) - (self.order - 1):]
        acc = 0.0
        while True:
            gram = h + (symbol,)
            p = self.probs[len(gram)].get(gram)
            if p is not None:
                return acc + p
            if not h:
                return acc + self.probs[1][(symbol,)]
            bow = self.backoffs[len(h)].get(h)
            if bow is not None:
                acc += bow
            h = h[1:]

    def sequence_logprob(self, symbols, bos: bool = True, eos: bool = True) -> float:
        """Total log10 score of a symbol sequence with boundary handling."""
        history = [BOS] if bos else []
        total = 0.0
        for sym in symbols:
            total += self.score(history, sym)
            history.append(sym)
        if eos:
            total += self.score(history, EOS)
        return total


def train_ngram(corpus, order: int = 3, extra_vocab=None) -> NGramLM:
    """Train a Witten-Bell smoothed backoff model from character sequences.

    ``corpus`` is an iterable of strings (or symbol lists); each sequence is
    padded with <s> and </s>.  ``extra_vocab`` widens the unigram support to
    symbols that may be absent from the corpus.
    """
    corpus = [list(seq) for seq in corpus]
    if not corpus:
        raise LmError("training corpus is empty")
    if order < 1:
        raise LmError("order must be >= 1")

    counts: list[dict] = [dict() for _ in range(order + 1)]
    for seq in corpus:
        tokens = [BOS] + seq + [EOS]
        for k in range(1, order + 1):
            for i in range(len(tokens) - k + 1):
                gram = tuple(tokens[i : i + k])
                counts[k][gram] = counts[k].get(gram, 0) + 1

    vocab = {w for (w,) in counts[1] if w != BOS}
    if extra_vocab:
        vocab |= set(extra_vocab)
    vocab.add(EOS)

    probs: list[dict] = [dict() for _ in range(order + 1)]
    backoffs: list[dict] = [dict() for _ in range(order)]

    # unigrams: Witten-Bell against the uniform distribution over the vocab
    uni_counts = {w: c for (w,), c in counts[1].items() if w != BOS}
    total = sum(uni_counts.values())
    n_types = len(uni_counts)
    uniform = 1.0 / len(vocab)
    for w in sorted(vocab):
        p = (uni_counts.get(w, 0) + n_types * uniform) / (total + n_types)
        probs[1][(w,)] = _q(math.log10(p))
    probs[1][(BOS,)] = OOV_LOG10  # history-only token, never predicted

    def lower_prob(history, symbol):
        # backoff evaluation restricted to the orders built so far
        h = tuple(history)
        acc = 0.0
        while True:
            p = probs[len(h) + 1].get(h + (symbol,))
            if p is not None:
                return 10.0 ** (acc + p)
            if not h:
                return 10.0 ** (acc + probs[1][(symbol,)])
            bow = backoffs[len(h)].get(h)
            if bow is not None:
                acc += bow
            h = h[1:]

    for k in range(2, order + 1):
        by_history: dict = {}
        for gram, c in counts[k].items():
            by_history.setdefault(gram[:-1], []).append((gram[-1], c))
        for h in sorted(by_history):
            conts = by_history[h]
            c_h = sum(c for _, c in conts)
            t_h = len(conts)
            backoffs[k - 1][h] = _q(math.log10(t_h / (c_h + t_h)))
            for w, c in conts:
                p = (c + t_h * lower_prob(h[1:], w)) / (c_h + t_h)
                probs[k][h + (w,)] = _q(math.log10(p))

    return NGramLM(order=order, probs=probs, backoffs=backoffs, vocab=vocab,
                   counts=counts)


def _escape(token: str) -> str:
    return SPACE_TOKEN if token == " " else token


def _unescape(token: str) -> str:
    return " " if token == SPACE_TOKEN else token


def save_arpa(lm: NGramLM, path) -> None:
    """Write the model in the standard ARPA text format."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\\data\\\n")
        for k in range(1, lm.order + 1):
            fh.write(f"ngram {k}={len(lm.probs[k])}\n")
        for k in range(1, lm.order + 1):
            fh.write(f"\n\\{k}-grams:\n")
            for gram in sorted(lm.probs[k]):
                logp = lm.probs[k][gram]
                text = " ".join(_escape(t) for t in gram)
                if k < lm.order and gram in lm.backoffs[k]:
                    fh.write(f"{logp:.6f}\t{text}\t{lm.backoffs[k][gram]:.6f}\n")
                else:
                    fh.write(f"{logp:.6f}\t{text}\n")
        fh.write("\n\\end\\\n")


def load_arpa(path) -> NGramLM:
    """Parse an ARPA file; malformed input is reported with its line number."""
    declared: dict[int, int] = {}
    probs: list[dict] = []
    backoffs: list[dict] = []
    section = None  # current k while inside \k-grams:
    seen_data = False

    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()

    def fail(msg, i):
        raise ArpaFormatError(msg, line_no=i + 1)

    ended = False
    for i, line in enumerate(lines):
        line = line.strip()
        if not line:
            continue
        if line == "\\data\\":
            seen_data = True
            continue
        if line == "\\end\\":
            ended = True
            break
        if not seen_data:
            fail("expected \\data\\ header first", i)
        if line.startswith("ngram "):
            try:
                k_str, n_str = line[len("ngram "):].split("=")
                declared[int(k_str)] = int(n_str)
            except ValueError:
                fail(f"malformed count line {line!r}", i)
            continue
        if line.startswith("\\") and line.endswith("-grams:"):
            try:
                k = int(line[1:-len("-grams:")])
            except ValueError:
                fail(f"malformed section header {line!r}", i)
            if k not in declared:
                fail(f"section \\{k}-grams: was not declared in \\data\\", i)
            section = k
            while len(probs) < k + 1:
                probs.append({})
                backoffs.append({})
            continue
        if section is None:
            fail(f"unexpected line {line!r} outside any section", i)
        parts = line.split("\t")
        if len(parts) not in (2, 3):
            fail(f"expected 2 or 3 tab-separated fields, got {len(parts)}", i)
        try:
            logp = float(parts[0])
        except ValueError:
            fail(f"bad log-probability {parts[0]!r}", i)
        tokens = tuple(_unescape(t) for t in parts[1].split(" "))
        if len(tokens) != section:
            fail(f"expected a {section}-gram, got {len(tokens)} tokens", i)
        probs[section][tokens] = _q(logp)
        if len(parts) == 3:
            try:
                backoffs[section][tokens] = _q(float(parts[2]))
            except ValueError:
                fail(f"bad backoff weight {parts[2]!r}", i)

    if not seen_data:
        raise ArpaFormatError("missing \\data\\ header")
    if not ended:
        raise ArpaFormatError("missing \\end\\ terminator")
    if not declared:
        raise ArpaFormatError("\\data\\ section declared no n-gram orders")
    order = max(declared)
    while len(probs) < order + 1:
        probs.append({})
        backoffs.append({})
    for k, n in declared.items():
        if len(probs[k]) != n:
            raise ArpaFormatError(
                f"\\data\\ declares {n} {k}-grams but {len(probs[k])} were read"
            )
    vocab = {w for (w,) in probs[1] if w != BOS}
    vocab.add(EOS)
    return NGramLM(order=order, probs=probs, backoffs=backoffs[:order], vocab=vocab)
