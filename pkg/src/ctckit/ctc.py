"""CTC loss, gradient, forced alignment, and greedy decoding.

The loss is the negative log of the summed probability of every frame-level
path that collapses (merge repeats, then drop blanks) to the target sequence.
All dynamic programming runs in natural-log space with float64 accumulation.
Gradients are exact and taken with respect to the per-frame log-probabilities;
``ctc_loss_from_logits`` composes with a row-wise log-softmax for the usual
gradient with respect to unnormalized scores.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .alphabet import Alphabet, BLANK_MARKER

NEG_INF = -np.inf
ROW_NORM_TOL = 1e-6


class CtcError(ValueError):
    pass


class InfeasibleError(CtcError):
    """Target sequence cannot fit in the available frames."""


@dataclass
class LogProbLattice:
    """T x V per-frame log-probabilities; every row log-sum-exps to zero."""

    log_probs: np.ndarray
    alphabet: Alphabet

    def __post_init__(self):
        lp = np.asarray(self.log_probs, dtype=np.float64)
        if lp.ndim != 2:
            raise CtcError("lattice must be a T x V matrix")
        if lp.shape[1] != len(self.alphabet):
            raise CtcError(
                f"lattice width {lp.shape[1]} != alphabet size {len(self.alphabet)}"
            )
        if lp.shape[0] > 0:
            _check_rows_normalized(lp, ROW_NORM_TOL)
        self.log_probs = lp

    @property
    def num_frames(self) -> int:
        return self.log_probs.shape[0]

    @classmethod
    def from_logits(cls, scores: np.ndarray, alphabet: Alphabet) -> "LogProbLattice":
        return cls(log_softmax(scores), alphabet)


@dataclass
class CtcResult:
    loss: float
    grad: np.ndarray  # d loss / d log_probs, T x V
    diagnostics: dict = field(default_factory=dict)


def log_softmax(scores: np.ndarray) -> np.ndarray:
    scores = np.asarray(scores, dtype=np.float64)
    shifted = scores - scores.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def _check_rows_normalized(log_probs: np.ndarray, tol: float) -> None:
    row_mass = np.logaddexp.reduce(log_probs, axis=1)
    bad = np.abs(row_mass) > tol
    if np.any(bad):
        t = int(np.argmax(bad))
        raise CtcError(
            f"lattice row {t} is not normalized (log mass {row_mass[t]:+.3e})"
        )
    if np.any(log_probs > tol):
        raise CtcError("lattice entries must be log-probabilities (<= 0)")


def extended_targets(targets, blank: int) -> np.ndarray:
    """Blank-interleaved target sequence of length 2L+1."""
    ext = np.full(2 * len(targets) + 1, blank, dtype=np.int64)
    ext[1::2] = targets
    return ext


def min_frames(targets) -> int:
    """Shortest path length that can emit ``targets``: L + adjacent repeats."""
    targets = list(targets)
    repeats = sum(1 for a, b in zip(targets, targets[1:]) if a == b)
    return len(targets) + repeats


def _validate_targets(lattice: LogProbLattice, targets) -> np.ndarray:
    targets = np.asarray(list(targets), dtype=np.int64)
    blank = lattice.alphabet.blank_index
    if targets.size and (targets.min() < 0 or targets.max() >= len(lattice.alphabet)):
        raise CtcError("target id out of range")
    if np.any(targets == blank):
        raise CtcError("targets must not contain the blank id")
    need = min_frames(targets)
    if lattice.num_frames < need:
        raise InfeasibleError(
            f"{lattice.num_frames} frames cannot emit {len(targets)} labels "
            f"(need >= {need})"
        )
    return targets


def _skip_allowed(ext: np.ndarray, blank: int) -> np.ndarray:
    """skip[s]: transition s-2 -> s is legal (s odd, new label differs)."""
    s_len = len(ext)
    skip = np.zeros(s_len, dtype=bool)
    if s_len > 2:
        skip[2:] = (ext[2:] != blank) & (ext[2:] != ext[:-2])
    return skip


def ctc_loss(lattice: LogProbLattice, targets) -> CtcResult:
    """Forward-backward CTC loss and its exact gradient w.r.t. log-probs."""
    targets = _validate_targets(lattice, targets)
    lp = lattice.log_probs
    _check_rows_normalized(lp, 1e-4)
    t_len, vocab = lp.shape
    blank = lattice.alphabet.blank_index
    if t_len == 0:
        return CtcResult(loss=0.0, grad=np.zeros((0, vocab)))

    ext = extended_targets(targets, blank)
    s_len = len(ext)
    skip = _skip_allowed(ext, blank)
    emit = lp[:, ext]  # T x S

    alpha = np.full((t_len, s_len), NEG_INF)
    alpha[0, 0] = emit[0, 0]
    if s_len > 1:
        alpha[0, 1] = emit[0, 1]
    for t in range(1, t_len):
        prev = alpha[t - 1]
        acc = prev.copy()
        acc[1:] = np.logaddexp(acc[1:], prev[:-1])
        acc[2:] = np.where(skip[2:], np.logaddexp(acc[2:], prev[:-2]), acc[2:])
        alpha[t] = acc + emit[t]

    tail = alpha[-1, -1] if s_len == 1 else np.logaddexp(alpha[-1, -1], alpha[-1, -2])
    log_p = float(tail)
    if not np.isfinite(log_p):
        raise InfeasibleError("no feasible alignment has nonzero probability")

    beta = np.full((t_len, s_len), NEG_INF)
    beta[-1, -1] = 0.0
    if s_len > 1:
        beta[-1, -2] = 0.0
    for t in range(t_len - 2, -1, -1):
        nxt = beta[t + 1] + emit[t + 1]
        acc = nxt.copy()
        acc[:-1] = np.logaddexp(acc[:-1], nxt[1:])
        acc[:-2] = np.where(skip[2:], np.logaddexp(acc[:-2], nxt[2:]), acc[:-2])
        beta[t] = acc

    # state occupancy -> gradient w.r.t. log p (free variables)
    gamma = alpha + beta
    occ = np.full((t_len, vocab), NEG_INF)
    np.logaddexp.at(occ, (np.arange(t_len)[:, None], ext[None, :]), gamma)
    grad = -np.exp(occ - log_p)
    return CtcResult(loss=-log_p, grad=grad)


def ctc_loss_from_logits(scores: np.ndarray, alphabet: Alphabet, targets) -> CtcResult:
    """CTC loss on unnormalized scores: log-softmax composed with the loss.

    The returned gradient is with respect to the raw scores.
    """
    lp = log_softmax(scores)
    res = ctc_loss(LogProbLattice(lp, alphabet), targets)
    row_sum = res.grad.sum(axis=1, keepdims=True)
    grad_scores = res.grad - np.exp(lp) * row_sum
    return CtcResult(loss=res.loss, grad=grad_scores, diagnostics=res.diagnostics)


def forced_alignment(lattice: LogProbLattice, targets) -> tuple[list[int], list[int]]:
    """Viterbi best path through the CTC lattice.

    Returns (per-frame label ids, per-frame extended-target indices); the
    labels collapse exactly to ``targets``.  Ties prefer staying in the same
    extended state, then the lower extended index.
    """
    targets = _validate_targets(lattice, targets)
    lp = lattice.log_probs
    t_len = lp.shape[0]
    blank = lattice.alphabet.blank_index
    if t_len == 0:
        return [], []

    ext = extended_targets(targets, blank)
    s_len = len(ext)
    skip = _skip_allowed(ext, blank)
    emit = lp[:, ext]

    score = np.full((t_len, s_len), NEG_INF)
    back = np.zeros((t_len, s_len), dtype=np.int64)
    score[0, 0] = emit[0, 0]
    back[0, 0] = 0
    if s_len > 1:
        score[0, 1] = emit[0, 1]
        back[0, 1] = 1
    for t in range(1, t_len):
        prev = score[t - 1]
        for s in range(s_len):
            # tie order: stay, then lower predecessor index
            cand = [s]
            if skip[s]:
                cand.append(s - 2)
            if s >= 1:
                cand.append(s - 1)
            best = max(cand, key=lambda c: prev[c])
            score[t, s] = prev[best] + emit[t, s]
            back[t, s] = best

    if s_len == 1:
        state = 0
    else:
        state = s_len - 2 if score[-1, s_len - 2] >= score[-1, s_len - 1] else s_len - 1
    if not np.isfinite(score[-1, state]):
        raise InfeasibleError("no feasible alignment has nonzero probability")

    states = np.empty(t_len, dtype=np.int64)
    states[-1] = state
    for t in range(t_len - 1, 0, -1):
        states[t - 1] = back[t, states[t]]
    return [int(ext[s]) for s in states], [int(s) for s in states]


def path_log_prob(lattice: LogProbLattice, frame_labels) -> float:
    """Log-probability of one frame-level path (product of per-frame probs)."""
    labels = np.asarray(list(frame_labels), dtype=np.int64)
    if len(labels) != lattice.num_frames:
        raise CtcError("path length must equal the number of frames")
    return float(lattice.log_probs[np.arange(len(labels)), labels].sum())


def collapse(frame_labels, blank: int) -> list[int]:
    """CTC collapse: merge adjacent duplicates, then remove blanks."""
    out = []
    prev = None
    for lab in frame_labels:
        lab = int(lab)
        if lab != prev:
            if lab != blank:
                out.append(lab)
            prev = lab
    return out


def greedy_decode(lattice: LogProbLattice) -> str:
    """Per-frame argmax, collapsed and rendered as text."""
    if lattice.num_frames == 0:
        return ""
    best = np.argmax(lattice.log_probs, axis=1)
    ids = collapse(best, lattice.alphabet.blank_index)
    return lattice.alphabet.decode(ids)


def dump_alignment(lattice: LogProbLattice, labels, ext_indices) -> str:
    """Debug dump, one line per frame: frame<TAB>extended_index<TAB>symbol."""
    lines = []
    blank = lattice.alphabet.blank_index
    for t, (lab, s) in enumerate(zip(labels, ext_indices)):
        sym = BLANK_MARKER if lab == blank else lattice.alphabet.symbols[lab]
        lines.append(f"{t}\t{s}\t{sym}")
    return "\n".join(lines) + ("\n" if lines else "")
