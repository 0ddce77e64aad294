"""Audio I/O, framing, short-time energy and MFCC extraction."""
from __future__ import annotations

import logging
import struct
import wave
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.fft import dct

logger = logging.getLogger(__name__)

LOG_FLOOR = 1e-10
FEATURE_MAGIC = b"AUDF"
FEATURE_FORMAT_VERSION = 1


class AudioFormatError(ValueError):
    """Malformed or unreadable WAV container."""


class UnsupportedFormatError(AudioFormatError):
    """Valid WAV, but not 16-bit PCM mono."""


class EmptyInputError(ValueError):
    """Input too short to hold a single analysis frame."""


@dataclass
class AudioBuffer:
    samples: np.ndarray
    sample_rate: int
    utterance_id: str = ""

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise ValueError("AudioBuffer holds mono samples only")
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("audio samples must be finite")

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate

    def slice(self, start: float, end: float) -> "AudioBuffer":
        a = int(round(start * self.sample_rate))
        b = int(round(end * self.sample_rate))
        return AudioBuffer(self.samples[a:b], self.sample_rate, self.utterance_id)


@dataclass
class FrameConfig:
    frame_len: float = 25.0  # ms
    hop: float = 10.0  # ms
    pre_emphasis: float = 0.97
    window: str = "hamming"

    def __post_init__(self):
        if not 0 < self.hop <= self.frame_len:
            raise ValueError("FrameConfig needs 0 < hop <= frame_len")
        if not 0 <= self.pre_emphasis < 1:
            raise ValueError("pre_emphasis must lie in [0, 1)")
        if self.window not in ("rectangular", "hamming"):
            raise ValueError(f"unknown window {self.window!r}")

    def frame_samples(self, sample_rate: int) -> int:
        return int(round(self.frame_len * sample_rate / 1000.0))

    def hop_samples(self, sample_rate: int) -> int:
        return int(round(self.hop * sample_rate / 1000.0))

    def window_array(self, n: int) -> np.ndarray:
        if self.window == "hamming":
            return np.hamming(n)
        return np.ones(n)


@dataclass
class FeatureSequence:
    frames: np.ndarray
    frame_times: np.ndarray
    kind: str = "mfcc"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        if self.frames.ndim == 1:
            self.frames = self.frames[:, None]
        self.frame_times = np.asarray(self.frame_times, dtype=np.float64)
        if len(self.frames) < 1:
            raise EmptyInputError("FeatureSequence needs at least one frame")
        if len(self.frame_times) != len(self.frames):
            raise ValueError("one timestamp per frame required")
        if len(self.frame_times) > 1 and np.any(np.diff(self.frame_times) <= 0):
            raise ValueError("frame_times must be strictly increasing")
        if self.kind == "energy" and self.frames.shape[1] != 1:
            raise ValueError("energy features are one-dimensional")

    def __len__(self):
        return len(self.frames)

    @property
    def dim(self) -> int:
        return self.frames.shape[1]

    def select(self, start: float, end: float) -> "FeatureSequence":
        """Frames whose centre lies in ``[start, end)``; never empty."""
        idx = np.flatnonzero((self.frame_times >= start) & (self.frame_times < end))
        if len(idx) == 0:
            centre = 0.5 * (start + end)
            idx = np.array([int(np.argmin(np.abs(self.frame_times - centre)))])
        return FeatureSequence(
            self.frames[idx[0]: idx[-1] + 1],
            self.frame_times[idx[0]: idx[-1] + 1],
            self.kind,
            dict(self.meta),
        )


# ---------------------------------------------------------------------------
# WAV I/O
# ---------------------------------------------------------------------------

def load_wav(path, downmix: bool = False, utterance_id: str | None = None) -> AudioBuffer:
    """Read a 16-bit PCM WAV file, scaling samples by 1/32768.

    Stereo files are rejected unless ``downmix`` is set, in which case the
    channels are averaged.
    """
    path = Path(path)
    try:
        with wave.open(str(path), "rb") as w:
            n_channels = w.getnchannels()
            width = w.getsampwidth()
            rate = w.getframerate()
            comp = w.getcomptype()
            raw = w.readframes(w.getnframes())
    except wave.Error as exc:
        if "unknown format" in str(exc):
            raise UnsupportedFormatError(f"{path}: {exc}") from exc
        raise AudioFormatError(f"{path}: {exc}") from exc
    except EOFError as exc:
        raise AudioFormatError(f"{path}: truncated header") from exc
    if comp != "NONE":
        raise UnsupportedFormatError(f"{path}: compressed WAV ({comp})")
    if width != 2:
        raise UnsupportedFormatError(f"{path}: {8 * width}-bit samples, need 16-bit PCM")
    pcm = np.frombuffer(raw, dtype="<i2")
    if n_channels != 1:
        if not downmix:
            raise UnsupportedFormatError(f"{path}: {n_channels} channels, need mono")
        pcm = pcm[: len(pcm) // n_channels * n_channels].reshape(-1, n_channels)
        samples = pcm.astype(np.float64).mean(axis=1) / 32768.0
    else:
        samples = pcm.astype(np.float64) / 32768.0
    uid = path.stem if utterance_id is None else utterance_id
    return AudioBuffer(samples, rate, uid)


def to_pcm16(samples: np.ndarray) -> np.ndarray:
    scaled = np.round(np.asarray(samples, dtype=np.float64) * 32768.0)
    return np.clip(scaled, -32768, 32767).astype("<i2")


def write_wav(path, audio: AudioBuffer) -> None:
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(audio.sample_rate)
        w.writeframes(to_pcm16(audio.samples).tobytes())


# ---------------------------------------------------------------------------
# Framing and features
# ---------------------------------------------------------------------------

def frame_signal(x: np.ndarray, frame: int, hop: int) -> np.ndarray:
    """Stack frames ``x[m*hop : m*hop+frame]`` row-wise (no padding)."""
    if len(x) < frame:
        raise EmptyInputError(f"signal of {len(x)} samples is shorter than one frame ({frame})")
    n_frames = (len(x) - frame) // hop + 1
    return np.lib.stride_tricks.sliding_window_view(x, frame)[::hop][:n_frames]


def frame_times(n_frames: int, frame: int, hop: int, sample_rate: int) -> np.ndarray:
    """Centre time of each frame in seconds."""
    return (np.arange(n_frames) * hop + frame / 2.0) / sample_rate


def short_time_energy(audio: AudioBuffer, cfg: FrameConfig) -> FeatureSequence:
    """Per-frame energy ``sum((w[n] * x[m*hop + n])**2)``; no pre-emphasis."""
    sr = audio.sample_rate
    frame, hop = cfg.frame_samples(sr), cfg.hop_samples(sr)
    frames = frame_signal(audio.samples, frame, hop)
    win = cfg.window_array(frame)
    energy = np.sum((frames * win) ** 2, axis=1)
    return FeatureSequence(
        energy[:, None], frame_times(len(energy), frame, hop, sr), kind="energy"
    )


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_band_edges(n_mels: int, sample_rate: int, fmin: float = 0.0, fmax: float | None = None):
    """Lower edge, centre and upper edge (Hz) of each triangular mel band."""
    fmax = sample_rate / 2.0 if fmax is None else fmax
    pts = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2))
    return pts[:-2], pts[1:-1], pts[2:]


def mel_filterbank(n_mels: int, n_fft: int, sample_rate: int, fmin: float = 0.0, fmax=None):
    """Triangular filters evaluated at the rfft bin frequencies, shape (n_mels, n_fft//2+1)."""
    if n_mels < 1:
        raise ValueError("n_mels must be at least 1")
    lo, mid, hi = mel_band_edges(n_mels, sample_rate, fmin, fmax)
    freqs = np.fft.rfftfreq(n_fft, 1.0 / sample_rate)
    up = (freqs[None, :] - lo[:, None]) / (mid - lo)[:, None]
    down = (hi[:, None] - freqs[None, :]) / (hi - mid)[:, None]
    return np.maximum(0.0, np.minimum(up, down))


def _n_fft(frame: int) -> int:
    return 1 << max(0, int(np.ceil(np.log2(frame))))


def log_mel_spectrum(audio: AudioBuffer, cfg: FrameConfig, n_mels: int) -> np.ndarray:
    """Log mel filterbank outputs (T x n_mels) computed from the DFT magnitude."""
    if n_mels < 1:
        raise ValueError("n_mels must be at least 1")
    sr = audio.sample_rate
    frame, hop = cfg.frame_samples(sr), cfg.hop_samples(sr)
    x = audio.samples
    if cfg.pre_emphasis > 0:
        x = np.concatenate([x[:1], x[1:] - cfg.pre_emphasis * x[:-1]])
    frames = frame_signal(x, frame, hop) * cfg.window_array(frame)
    n_fft = _n_fft(frame)
    mag = np.abs(np.fft.rfft(frames, n=n_fft, axis=1))
    fbank = mel_filterbank(n_mels, n_fft, sr)
    return np.log(np.maximum(mag @ fbank.T, LOG_FLOOR))


def mfcc(
    audio: AudioBuffer,
    cfg: FrameConfig,
    n_mels: int = 26,
    n_ceps: int = 13,
    cms: bool = False,
) -> FeatureSequence:
    """Mel-frequency cepstral coefficients, DCT-II (orthonormal) of the log mel spectrum."""
    if n_mels < 1 or n_ceps < 1:
        raise ValueError("n_mels and n_ceps must be positive")
    if n_ceps > n_mels:
        raise ValueError(f"n_ceps ({n_ceps}) exceeds n_mels ({n_mels})")
    logmel = log_mel_spectrum(audio, cfg, n_mels)
    ceps = dct(logmel, type=2, axis=1, norm="ortho")[:, :n_ceps]
    if cms:
        ceps = ceps - ceps.mean(axis=0)
    sr = audio.sample_rate
    times = frame_times(len(ceps), cfg.frame_samples(sr), cfg.hop_samples(sr), sr)
    return FeatureSequence(ceps, times, kind="mfcc")


def deltas(frames: np.ndarray, width: int = 2) -> np.ndarray:
    """Regression-based time derivative over +/- ``width`` frames, edges repeated."""
    T = len(frames)
    padded = np.concatenate([np.repeat(frames[:1], width, 0), frames, np.repeat(frames[-1:], width, 0)])
    num = np.zeros_like(frames)
    for k in range(1, width + 1):
        num += k * (padded[width + k: width + k + T] - padded[width - k: width - k + T])
    return num / (2 * sum(k * k for k in range(1, width + 1)))


def aud_features(audio: AudioBuffer, cfg: FrameConfig | None = None, n_mels: int = 26,
                 n_ceps: int = 13, use_deltas: bool = True, cms: bool = False) -> FeatureSequence:
    """Default unit-discovery features: MFCC plus first and second deltas."""
    cfg = cfg or FrameConfig()
    base = mfcc(audio, cfg, n_mels, n_ceps, cms=cms)
    if not use_deltas:
        return base
    d1 = deltas(base.frames)
    d2 = deltas(d1)
    return FeatureSequence(np.hstack([base.frames, d1, d2]), base.frame_times, "mfcc")


# ---------------------------------------------------------------------------
# Binary matrix dump
# ---------------------------------------------------------------------------

def write_matrix(path, matrix: np.ndarray) -> None:
    """Write a 2-D array as: b"AUDF", u32 rows, u32 cols, u32 version, float32 LE row-major."""
    m = np.asarray(matrix, dtype="<f4")
    if m.ndim != 2:
        raise ValueError("matrix must be 2-D")
    with open(path, "wb") as fh:
        fh.write(FEATURE_MAGIC + struct.pack("<III", m.shape[0], m.shape[1], FEATURE_FORMAT_VERSION))
        fh.write(np.ascontiguousarray(m).tobytes())


def read_matrix(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < 16 or data[:4] != FEATURE_MAGIC:
        raise AudioFormatError(f"{path}: not an AUDF matrix file")
    rows, cols, _version = struct.unpack("<III", data[4:16])
    body = data[16:]
    if len(body) != 4 * rows * cols:
        raise AudioFormatError(f"{path}: payload size does not match {rows}x{cols}")
    return np.frombuffer(body, dtype="<f4").reshape(rows, cols).astype(np.float64)
