"""Segmented CTC training criterion.

When greedy decoding agrees frame-for-frame with the forced alignment over a
long enough space-flanked word, the utterance is cut into five pieces (left
context, left space, the word, right space, right context) and the loss is
the sum of five independent CTC losses, one per piece.  With no qualifying
word the criterion falls back to plain CTC on the whole utterance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ctc import CtcResult, LogProbLattice, ctc_loss, forced_alignment, min_frames


class SegmentationError(RuntimeError):
    """An emitted segmentation violated its invariants (upstream bug)."""


@dataclass(frozen=True)
class SegCtcConfig:
    min_word_len: int = 4  # characters; qualifying words are >= this long
    warmup_epochs: int = 1  # plain CTC before segmentation engages
    enabled: bool = True

    def __post_init__(self):
        if self.min_word_len < 1:
            raise ValueError("min_word_len must be >= 1")


@dataclass(frozen=True)
class WordCandidate:
    """A qualifying word: target-position span plus aligned frame span."""

    char_start: int  # first word character, index into targets
    char_end: int  # one past the last word character
    frame_start: int  # first frame aligned to the left flanking space
    frame_end: int  # one past the last frame aligned to the right space

    @property
    def length(self) -> int:
        return self.char_end - self.char_start


@dataclass
class Segmentation:
    """Five frame intervals partitioning [0, T) with matching target slices."""

    intervals: list[tuple[int, int]]
    slices: list[list[int]]

    def validate(self, targets, total_frames: int, space: int) -> None:
        ivs, sls = self.intervals, self.slices
        if len(ivs) != 5 or len(sls) != 5:
            raise SegmentationError("expected exactly 5 segments")
        if ivs[0][0] != 0 or ivs[-1][1] != total_frames:
            raise SegmentationError("intervals do not span [0, T)")
        for (_, hi), (lo, _) in zip(ivs, ivs[1:]):
            if hi != lo:
                raise SegmentationError("intervals are not contiguous")
        if any(lo > hi for lo, hi in ivs):
            raise SegmentationError("interval with negative length")
        concat = [t for sl in sls for t in sl]
        if concat != list(targets):
            raise SegmentationError("slices do not concatenate to the targets")
        if sls[1] != [space] or sls[3] != [space]:
            raise SegmentationError("space segments must hold exactly one space")
        for (lo, hi), sl in zip(ivs, sls):
            if sl and hi - lo < min_frames(sl):
                raise SegmentationError(
                    f"segment [{lo},{hi}) too short for {len(sl)} labels"
                )


def _char_frames(ext_indices, char_pos: int) -> np.ndarray:
    """Frames the forced alignment assigns to target character ``char_pos``."""
    ext_indices = np.asarray(ext_indices)
    frames = np.nonzero(ext_indices == 2 * char_pos + 1)[0]
    if frames.size == 0:
        raise SegmentationError(
            f"character {char_pos} received no aligned frame"
        )
    return frames


def _space_flanked_words(targets, space: int):
    """(start, end) spans of maximal non-space runs with spaces on both sides."""
    words = []
    n = len(targets)
    i = 0
    while i < n:
        if targets[i] == space:
            i += 1
            continue
        j = i
        while j < n and targets[j] != space:
            j += 1
        if i > 0 and j < n:  # boundary words never qualify
            words.append((i, j))
        i = j
    return words


def find_agreed_word(
    lattice: LogProbLattice, targets, alignment, cfg: SegCtcConfig
) -> WordCandidate | None:
    """Longest space-flanked word whose greedy argmax matches the alignment.

    ``alignment`` is the (labels, ext_indices) pair from forced_alignment on
    the same lattice and targets.  The agreement check runs per frame over
    the span from the first left-space frame to the last right-space frame,
    blanks included.  Returns None when no word qualifies.
    """
    targets = list(targets)
    space = lattice.alphabet.space_index
    if space is None:
        return None
    labels, ext_indices = alignment
    argmax = np.argmax(lattice.log_probs, axis=1)
    candidates = [
        (start, end)
        for start, end in _space_flanked_words(targets, space)
        if end - start >= cfg.min_word_len
    ]
    candidates.sort(key=lambda se: (-(se[1] - se[0]), se[0]))
    for start, end in candidates:
        a = int(_char_frames(ext_indices, start - 1)[0])
        d = int(_char_frames(ext_indices, end)[-1]) + 1
        if np.array_equal(argmax[a:d], np.asarray(labels[a:d])):
            return WordCandidate(start, end, a, d)
    return None


def segment_utterance(
    candidate: WordCandidate, alignment, targets, total_frames: int, space: int
) -> Segmentation:
    """Cut the utterance into the five segments induced by a qualifying word.

    Frame cuts sit at the first left-space frame, the first word frame, one
    past the last word frame, and one past the last right-space frame, so
    blank-aligned frames stay inside whichever piece contains them.
    """
    targets = list(targets)
    _, ext_indices = alignment
    i, j = candidate.char_start, candidate.char_end
    a, d = candidate.frame_start, candidate.frame_end
    b = int(_char_frames(ext_indices, i)[0])
    c = int(_char_frames(ext_indices, j - 1)[-1]) + 1
    seg = Segmentation(
        intervals=[(0, a), (a, b), (b, c), (c, d), (d, total_frames)],
        slices=[
            targets[: i - 1],
            targets[i - 1 : i],
            targets[i:j],
            targets[j : j + 1],
            targets[j + 1 :],
        ],
    )
    seg.validate(targets, total_frames, space)
    return seg


def seg_ctc_loss(
    lattice: LogProbLattice, targets, cfg: SegCtcConfig, epoch: int = 0
) -> CtcResult:
    """Segmented CTC loss; identical to plain CTC when nothing qualifies.

    The result's diagnostics carry ``segmented`` and, when a word was found,
    its character length under ``word_len``.
    """
    targets = list(targets)
    if not cfg.enabled or epoch < cfg.warmup_epochs:
        res = ctc_loss(lattice, targets)
        res.diagnostics["segmented"] = False
        return res

    alignment = forced_alignment(lattice, targets)
    candidate = find_agreed_word(lattice, targets, alignment, cfg)
    if candidate is None:
        res = ctc_loss(lattice, targets)
        res.diagnostics["segmented"] = False
        return res

    space = lattice.alphabet.space_index
    seg = segment_utterance(candidate, alignment, targets, lattice.num_frames, space)
    total = 0.0
    grad = np.zeros_like(lattice.log_probs)
    for (lo, hi), piece in zip(seg.intervals, seg.slices):
        if hi == lo and not piece:
            continue
        part = ctc_loss(LogProbLattice(lattice.log_probs[lo:hi], lattice.alphabet), piece)
        total += part.loss
        grad[lo:hi] = part.grad
    return CtcResult(
        loss=total,
        grad=grad,
        diagnostics={"segmented": True, "word_len": candidate.length,
                     "segmentation": seg},
    )
