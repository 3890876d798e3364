import numpy as np
import pytest

from ctckit.alphabet import build_alphabet
from ctckit.ctc import LogProbLattice, ctc_loss, forced_alignment, log_softmax, min_frames
from ctckit.segctc import (
    SegCtcConfig,
    find_agreed_word,
    seg_ctc_loss,
    segment_utterance,
)
from conftest import peaked_lattice, random_alignment_path, random_lattice

CFG = SegCtcConfig(min_word_len=4, warmup_epochs=0, enabled=True)


def word_alphabet(letters="abcdörtxy"):
    return build_alphabet(["<blank>"] + sorted(set(letters)) + [" "])


def aligned_case(rng, alphabet, text, slack=6):
    """Peaked lattice tracing a random valid alignment of ``text``."""
    targets = alphabet.encode(text)
    t_frames = min_frames(targets) + slack
    labels, states = random_alignment_path(rng, targets, alphabet.blank_index, t_frames)
    lat = peaked_lattice(labels, alphabet)
    return targets, lat, (labels, states)


def test_no_space_flanked_word_returns_none(rng):
    a = word_alphabet()
    for text in ["abba", "ab ba", " dör x"]:  # too short or touching a boundary
        targets, lat, align = aligned_case(rng, a, text)
        assert find_agreed_word(lat, targets, align, CFG) is None


def test_alphabet_without_space_returns_none(rng):
    a = build_alphabet(["<blank>", "a", "b"])
    lat = random_lattice(rng, 6, a)
    targets = [1, 2]
    align = forced_alignment(lat, targets)
    assert find_agreed_word(lat, targets, align, CFG) is None


def test_hand_built_word_is_found(rng):
    a = word_alphabet()
    targets, lat, align = aligned_case(rng, a, " dört ")
    # the peaked lattice's argmax traces the alignment exactly
    recomputed = forced_alignment(lat, targets)
    assert recomputed == align
    cand = find_agreed_word(lat, targets, recomputed, CFG)
    assert cand is not None
    assert (cand.char_start, cand.char_end) == (1, 5)
    labels, states = recomputed
    assert cand.frame_start == states.index(1)  # ext index of the left space
    assert cand.frame_end == len(states) - states[::-1].index(11)


def test_single_frame_disagreement_rejects_word():
    a = word_alphabet()
    targets = a.encode(" dört ")
    # minimal-length path: the alignment is forced, one frame per character
    lat = peaked_lattice(targets, a)
    align = forced_alignment(lat, targets)
    assert find_agreed_word(lat, targets, align, CFG) is not None

    probs = np.exp(lat.log_probs).copy()
    ch = targets[2]  # swap frame 2's peak from its character onto blank
    probs[2, [0, ch]] = probs[2, [ch, 0]]
    flipped = LogProbLattice(np.log(probs), a)
    align2 = forced_alignment(flipped, targets)
    assert align2[0] == list(targets)  # still the only feasible path
    assert find_agreed_word(flipped, targets, align2, CFG) is None


def test_longest_word_wins_earliest_on_ties(rng):
    a = word_alphabet()
    targets, lat, align = aligned_case(rng, a, "x dört abcd y", slack=8)
    cand = find_agreed_word(lat, targets, align, CFG)
    assert a.decode(targets[cand.char_start:cand.char_end]) == "dört"


def test_segment_slices_and_intervals(rng):
    a = word_alphabet()
    targets, lat, align = aligned_case(rng, a, "x dört y")
    cand = find_agreed_word(lat, targets, align, CFG)
    seg = segment_utterance(cand, align, targets, lat.num_frames, a.space_index)
    texts = [a.decode(s) for s in seg.slices]
    assert texts == ["x", " ", "dört", " ", "y"]
    assert seg.intervals[0][0] == 0 and seg.intervals[-1][1] == lat.num_frames
    for (_, hi), (lo, _) in zip(seg.intervals, seg.intervals[1:]):
        assert hi == lo
    # every character receives at least one frame, so "x" gets >= 1
    lo, hi = seg.intervals[0]
    assert hi - lo >= 1


def test_fallback_is_bitwise_plain_ctc(rng):
    a = word_alphabet()
    targets, lat, _ = aligned_case(rng, a, "ab ba")  # nothing qualifies
    res = seg_ctc_loss(lat, targets, CFG, epoch=3)
    ref = ctc_loss(lat, targets)
    assert res.loss == ref.loss
    assert np.array_equal(res.grad, ref.grad)
    assert res.diagnostics["segmented"] is False


def test_disabled_and_warmup_fall_back(rng):
    a = word_alphabet()
    targets, lat, _ = aligned_case(rng, a, "x dört y")
    ref = ctc_loss(lat, targets)
    off = seg_ctc_loss(lat, targets, SegCtcConfig(4, 0, enabled=False), epoch=5)
    warm = seg_ctc_loss(lat, targets, SegCtcConfig(4, warmup_epochs=2), epoch=1)
    huge = seg_ctc_loss(lat, targets, SegCtcConfig(10**9, 0), epoch=5)
    for res in (off, warm, huge):
        assert res.loss == ref.loss and np.array_equal(res.grad, ref.grad)


def test_loss_is_sum_of_five_independent_parts(rng):
    a = word_alphabet()
    targets, lat, align = aligned_case(rng, a, "x dört y")
    cand = find_agreed_word(lat, targets, align, CFG)
    seg = segment_utterance(cand, align, targets, lat.num_frames, a.space_index)
    res = seg_ctc_loss(lat, targets, CFG, epoch=1)
    assert res.diagnostics["segmented"] is True
    parts = []
    for (lo, hi), piece in zip(seg.intervals, seg.slices):
        if hi == lo and not piece:
            continue
        sub = LogProbLattice(lat.log_probs[lo:hi], a)
        parts.append(ctc_loss(sub, piece))
    assert res.loss == pytest.approx(sum(p.loss for p in parts), abs=1e-12)
    assert res.loss != pytest.approx(ctc_loss(lat, targets).loss, abs=1e-6)


def test_composite_gradient_matches_finite_differences(rng):
    a = word_alphabet("dört")
    targets, lat, _ = aligned_case(rng, a, " dört ", slack=3)
    z0 = lat.log_probs.copy()

    def loss_of(z):
        lp = log_softmax(z)
        return seg_ctc_loss(LogProbLattice(lp, a), targets, CFG, epoch=1).loss

    res = seg_ctc_loss(lat, targets, CFG, epoch=1)
    assert res.diagnostics["segmented"] is True
    g = res.grad
    grad_z = g - np.exp(z0) * g.sum(axis=1, keepdims=True)

    h = 1e-5
    fd = np.zeros_like(z0)
    for t in range(z0.shape[0]):
        for k in range(z0.shape[1]):
            up, down = z0.copy(), z0.copy()
            up[t, k] += h
            down[t, k] -= h
            fd[t, k] = (loss_of(up) - loss_of(down)) / (2 * h)
    rel = np.abs(fd - grad_z) / np.maximum(np.maximum(np.abs(fd), np.abs(grad_z)), 1e-8)
    assert rel.max() <= 1e-4


def random_sentence(rng):
    n_words = int(rng.integers(1, 5))
    words = [
        "".join(rng.choice(list("abc"), size=int(rng.integers(1, 7))))
        for _ in range(n_words)
    ]
    return " ".join(words)


def test_partition_and_concat_invariants_randomized(rng):
    a = build_alphabet(["<blank>", "a", "b", "c", " "])
    segmented = 0
    for _ in range(150):
        text = random_sentence(rng)
        targets, lat, align = aligned_case(rng, a, text, slack=int(rng.integers(0, 9)))
        res = seg_ctc_loss(lat, targets, CFG, epoch=1)
        if not res.diagnostics["segmented"]:
            continue
        segmented += 1
        seg = res.diagnostics["segmentation"]
        assert [t for sl in seg.slices for t in sl] == list(targets)
        assert seg.intervals[0][0] == 0
        assert seg.intervals[-1][1] == lat.num_frames
        for (_, hi), (lo, _) in zip(seg.intervals, seg.intervals[1:]):
            assert hi == lo
        for (lo, hi), sl in zip(seg.intervals, seg.slices):
            if sl:
                assert hi - lo >= min_frames(sl)
    assert segmented >= 20  # the generator must actually exercise segmentation


def test_determinism(rng):
    a = word_alphabet()
    targets, lat, align = aligned_case(rng, a, "x dört y")
    r1 = seg_ctc_loss(lat, targets, CFG, epoch=1)
    r2 = seg_ctc_loss(lat, targets, CFG, epoch=1)
    assert r1.loss == r2.loss
    assert np.array_equal(r1.grad, r2.grad)
