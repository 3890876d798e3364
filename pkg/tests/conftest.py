import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from ctckit.alphabet import build_alphabet
from ctckit.ctc import LogProbLattice, extended_targets, _skip_allowed

TURKISH_LETTERS = list("abcçdefgğhıijklmnoöprsştuüvyz")


def tiny_alphabet(n_labels, with_space=False):
    """Alphabet with ``n_labels`` letters after the blank (a, b, c, ...)."""
    syms = ["<blank>"] + [chr(ord("a") + i) for i in range(n_labels)]
    if with_space:
        syms.append(" ")
    return build_alphabet(syms)


def random_lattice(rng, n_frames, alphabet, peak=None):
    """Row-normalized random lattice; ``peak`` concentrates mass uniformly."""
    scores = rng.standard_normal((n_frames, len(alphabet)))
    if peak is not None:
        scores = scores * peak
    return LogProbLattice.from_logits(scores, alphabet)


def peaked_lattice(path_labels, alphabet, p_peak=0.9):
    """Lattice whose per-frame argmax follows ``path_labels`` exactly."""
    v = len(alphabet)
    t = len(path_labels)
    probs = np.full((t, v), (1.0 - p_peak) / (v - 1))
    probs[np.arange(t), path_labels] = p_peak
    return LogProbLattice(np.log(probs), alphabet)


def random_alignment_path(rng, targets, blank, n_frames):
    """Uniform-ish random monotone path through the extended-target lattice.

    Returns (frame_labels, ext_state_indices), one entry per frame; the
    labels collapse exactly to ``targets``.
    """
    ext = extended_targets(targets, blank)
    s_len = len(ext)
    skip = _skip_allowed(ext, blank)

    # minimal frames still needed after standing on state s
    need = np.zeros(s_len, dtype=int)
    for s in range(s_len - 3, -1, -1):
        nxt = [need[s + 1]]
        if s + 2 < s_len and skip[s + 2]:
            nxt.append(need[s + 2])
        need[s] = 1 + min(nxt)

    starts = [s for s in (0, 1) if s < s_len and need[s] <= n_frames - 1]
    assert starts, "n_frames below the minimal path length"
    state = int(rng.choice(starts))
    states = [state]
    for k in range(1, n_frames):
        remaining = n_frames - 1 - k
        succ = [state, state + 1] if state + 1 < s_len else [state]
        if state + 2 < s_len and skip[state + 2]:
            succ.append(state + 2)
        succ = [s for s in succ if need[s] <= remaining]
        state = int(rng.choice(succ))
        states.append(state)
    return [int(ext[s]) for s in states], states


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
