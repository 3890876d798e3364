"""Audio frontend: STFT power spectra, log-mel filterbanks, deltas,
per-utterance mean/variance normalization, and speed/volume perturbation.

Everything is deterministic: the same samples and config always produce
bit-identical features.
"""

from __future__ import annotations

import hashlib
import json
import struct
import wave
from dataclasses import dataclass, asdict

import numpy as np

LOG_FLOOR = 1e-10
PCM_MAX = 32767.0

FEATURE_MAGIC = b"FTRM"


class FrontendError(ValueError):
    pass


@dataclass(frozen=True)
class FeatureConfig:
    sample_rate: int = 8000
    window_ms: float = 25.0
    shift_ms: float = 10.0
    n_mels: int = 40
    feature_kind: str = "fbank"  # fbank | spectrogram
    normalization: str = "cmn"  # none | cmn | cmvn
    add_deltas: bool = True
    delta_context: int = 2

    def __post_init__(self):
        if not self.window_ms >= self.shift_ms > 0:
            raise FrontendError("require window_ms >= shift_ms > 0")
        if self.n_mels < 1:
            raise FrontendError("n_mels must be >= 1")
        if self.feature_kind not in ("fbank", "spectrogram"):
            raise FrontendError(f"unknown feature_kind {self.feature_kind!r}")
        if self.normalization not in ("none", "cmn", "cmvn"):
            raise FrontendError(f"unknown normalization {self.normalization!r}")

    @property
    def window_samples(self) -> int:
        return int(round(self.sample_rate * self.window_ms / 1000.0))

    @property
    def shift_samples(self) -> int:
        return int(round(self.sample_rate * self.shift_ms / 1000.0))

    def fingerprint(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class FeatureMatrix:
    data: np.ndarray  # T x F, float32
    frame_shift_ms: float
    config_fingerprint: str = ""

    @property
    def num_frames(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]


def hann_window(n: int) -> np.ndarray:
    # periodic Hann, the usual analysis-window convention
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def num_frames(n_samples: int, window: int, shift: int) -> int:
    if n_samples < window:
        raise FrontendError(
            f"signal of {n_samples} samples is shorter than one {window}-sample window"
        )
    return 1 + (n_samples - window) // shift


def stft_power(samples: np.ndarray, cfg: FeatureConfig) -> np.ndarray:
    """Power spectrogram, shape T x (fft/2 + 1).

    Frames are Hann-windowed with no padding, so T = 1 + (N - W) // S;
    FFT size is the next power of two >= the window length.
    """
    samples = np.asarray(samples, dtype=np.float64)
    w, s = cfg.window_samples, cfg.shift_samples
    t = num_frames(len(samples), w, s)
    n_fft = 1 << (w - 1).bit_length()
    win = hann_window(w)
    frames = np.lib.stride_tricks.sliding_window_view(samples, w)[::s][:t]
    spec = np.fft.rfft(frames * win, n=n_fft, axis=1)
    return (spec.real**2 + spec.imag**2).astype(np.float64)


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(n_mels: int, n_fft: int, sample_rate: int) -> np.ndarray:
    """Triangular mel filters on FFT bin centers, shape n_mels x (n_fft/2 + 1)."""
    n_bins = n_fft // 2 + 1
    fft_freqs = np.arange(n_bins) * sample_rate / n_fft
    mel_pts = np.linspace(0.0, hz_to_mel(sample_rate / 2.0), n_mels + 2)
    hz_pts = mel_to_hz(mel_pts)
    fb = np.zeros((n_mels, n_bins))
    for m in range(n_mels):
        lo, ctr, hi = hz_pts[m], hz_pts[m + 1], hz_pts[m + 2]
        up = (fft_freqs - lo) / (ctr - lo)
        down = (hi - fft_freqs) / (hi - ctr)
        fb[m] = np.maximum(0.0, np.minimum(up, down))
    return fb


def fbank(power: np.ndarray, cfg: FeatureConfig) -> np.ndarray:
    """Log-mel energies from a power spectrogram (natural log, floored)."""
    if np.any(power < 0):
        raise FrontendError("power spectrogram must be nonnegative")
    n_fft = 2 * (power.shape[1] - 1)
    fb = mel_filterbank(cfg.n_mels, n_fft, cfg.sample_rate)
    return np.log(np.maximum(power @ fb.T, LOG_FLOOR))


def add_deltas(feat: np.ndarray, context: int = 2) -> np.ndarray:
    """Append regression deltas and delta-deltas: F columns in, 3F out.

    d_t = sum_n n * (c_{t+n} - c_{t-n}) / (2 * sum_n n^2), edges replicated.
    """
    feat = np.asarray(feat, dtype=np.float64)
    denom = 2.0 * sum(n * n for n in range(1, context + 1))

    def delta(x):
        padded = np.concatenate(
            [np.repeat(x[:1], context, axis=0), x, np.repeat(x[-1:], context, axis=0)]
        )
        d = np.zeros_like(x)
        for n in range(1, context + 1):
            d += n * (padded[context + n : context + n + len(x)]
                      - padded[context - n : context - n + len(x)])
        return d / denom

    d1 = delta(feat)
    d2 = delta(d1)
    return np.concatenate([feat, d1, d2], axis=1)


def normalize(feat: np.ndarray, mode: str) -> np.ndarray:
    """Per-utterance mean (cmn) or mean+variance (cmvn) normalization."""
    feat = np.asarray(feat, dtype=np.float64)
    if mode == "none":
        return feat
    out = feat - feat.mean(axis=0, keepdims=True)
    if mode == "cmvn":
        out = out / np.maximum(feat.std(axis=0, keepdims=True), 1e-8)
    elif mode != "cmn":
        raise FrontendError(f"unknown normalization {mode!r}")
    return out


def featurize(samples: np.ndarray, cfg: FeatureConfig) -> FeatureMatrix:
    """Full pipeline: STFT -> fbank/log-spectrogram -> normalization -> deltas."""
    power = stft_power(samples, cfg)
    if cfg.feature_kind == "fbank":
        feat = fbank(power, cfg)
    else:
        feat = np.log(np.maximum(power, LOG_FLOOR))
    feat = normalize(feat, cfg.normalization)
    if cfg.add_deltas:
        feat = add_deltas(feat, cfg.delta_context)
    return FeatureMatrix(
        data=feat.astype(np.float32),
        frame_shift_ms=cfg.shift_ms,
        config_fingerprint=cfg.fingerprint(),
    )


def speed_perturb(samples: np.ndarray, factor: float) -> np.ndarray:
    """Resample by ``factor`` with linear interpolation.

    Duration and pitch both change; output length is round(N / factor).
    """
    if not 0.8 <= factor <= 1.25:
        raise FrontendError(f"speed factor {factor} outside [0.8, 1.25]")
    samples = np.asarray(samples, dtype=np.float64)
    n_out = int(round(len(samples) / factor))
    pos = np.minimum(np.arange(n_out) * factor, len(samples) - 1)
    return np.interp(pos, np.arange(len(samples)), samples)


def volume_perturb(samples: np.ndarray, gain_db: float) -> np.ndarray:
    """Scale by 10^(gain/20), clipping to the 16-bit PCM range."""
    if not -10.0 <= gain_db <= 10.0:
        raise FrontendError(f"gain {gain_db} dB outside [-10, +10]")
    scaled = np.asarray(samples, dtype=np.float64) * (10.0 ** (gain_db / 20.0))
    return np.clip(scaled, -PCM_MAX - 1, PCM_MAX)


def read_wav(path, expect_rate: int | None = None) -> tuple[np.ndarray, int]:
    """Read mono 16-bit PCM WAV; returns (float64 samples, sample_rate)."""
    with wave.open(str(path), "rb") as wf:
        if wf.getnchannels() != 1:
            raise FrontendError(f"{path}: expected mono audio")
        if wf.getsampwidth() != 2:
            raise FrontendError(f"{path}: expected 16-bit PCM")
        rate = wf.getframerate()
        raw = wf.readframes(wf.getnframes())
    if expect_rate is not None and rate != expect_rate:
        raise FrontendError(f"{path}: sample rate {rate} != configured {expect_rate}")
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64)
    return samples, rate


def write_wav(path, samples: np.ndarray, sample_rate: int) -> None:
    pcm = np.clip(np.asarray(samples), -PCM_MAX - 1, PCM_MAX).astype("<i2")
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(sample_rate)
        wf.writeframes(pcm.tobytes())


def save_features(fm: FeatureMatrix, path) -> None:
    """Binary feature dump: 'FTRM', u32 T, u32 F, f32 shift_ms, f32 data (LE)."""
    t, f = fm.data.shape
    with open(path, "wb") as fh:
        fh.write(FEATURE_MAGIC)
        fh.write(struct.pack("<IIf", t, f, fm.frame_shift_ms))
        fh.write(fm.data.astype("<f4").tobytes())


def load_features(path) -> FeatureMatrix:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != FEATURE_MAGIC:
            raise FrontendError(f"{path}: bad feature-file magic {magic!r}")
        t, f, shift = struct.unpack("<IIf", fh.read(12))
        data = np.frombuffer(fh.read(4 * t * f), dtype="<f4").reshape(t, f)
    return FeatureMatrix(data=data.copy(), frame_shift_ms=shift)
