"""Syllable-like segmentation from group-delay processed short-time energy.

The inverted energy contour is treated as a magnitude spectrum. Its
causal, windowed inverse transform is a minimum-phase-like sequence whose
group delay peaks sharply where the inverted energy peaks, i.e. at energy
valleys, which are taken as syllable boundaries.
"""
from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .features import AudioBuffer, FeatureSequence, FrameConfig, short_time_energy

logger = logging.getLogger(__name__)


class DegenerateInputError(ValueError):
    pass


@dataclass
class GroupDelayConfig:
    wsf: int = 10
    inverse_energy_floor: float = 1e-3
    min_segment_dur: float = 100.0  # ms
    silence_energy_percentile: float = 5.0
    gamma: float = 0.1
    delta: float = 1e-12
    prominence: float = 0.1

    def __post_init__(self):
        if self.wsf < 1:
            raise ValueError("wsf must be >= 1")
        if self.min_segment_dur <= 0:
            raise ValueError("min_segment_dur must be positive")
        if self.inverse_energy_floor <= 0:
            raise ValueError("inverse_energy_floor must be positive")
        if not 0 < self.gamma <= 1:
            raise ValueError("gamma must lie in (0, 1]")


@dataclass
class Segment:
    utterance_id: str
    start: float
    end: float
    kind: str = "syllable"

    @property
    def duration(self) -> float:
        return self.end - self.start


def inverse_energy(energy: np.ndarray, cfg: GroupDelayConfig) -> np.ndarray:
    e = np.asarray(energy, dtype=np.float64)
    return (e + cfg.inverse_energy_floor * e.max()) ** (-cfg.gamma)


def causal_sequence(magnitude: np.ndarray, wsf: int) -> np.ndarray:
    """Even-extend ``magnitude`` to 2M points, invert, keep ``n < ceil(M/wsf)``."""
    M = len(magnitude)
    ext = np.concatenate([magnitude, magnitude[-1:], magnitude[-1:0:-1]])
    c = np.fft.ifft(ext).real
    keep = max(1, int(np.ceil(M / wsf)))
    x = np.zeros(2 * M)
    x[:keep] = c[:keep]
    return x


def group_delay(x: np.ndarray, delta: float = 1e-12) -> np.ndarray:
    """Group delay of ``x`` at its DFT bins via the ``n*x[n]`` identity."""
    X = np.fft.fft(x)
    Y = np.fft.fft(np.arange(len(x)) * x)
    return (X.real * Y.real + X.imag * Y.imag) / (X.real**2 + X.imag**2 + delta)


def min_phase_group_delay(contour, cfg: GroupDelayConfig | None = None) -> np.ndarray:
    """Group delay (one value per frame) of the minimum-phase signal derived from
    the inverted energy contour. Peaks mark energy valleys."""
    cfg = cfg or GroupDelayConfig()
    e = contour.frames[:, 0] if isinstance(contour, FeatureSequence) else np.asarray(contour, float)
    M = len(e)
    if M < 4:
        raise DegenerateInputError(f"contour of {M} frames is too short (need >= 4)")
    if np.any(e < 0) or not np.all(np.isfinite(e)):
        raise DegenerateInputError("energy contour must be finite and non-negative")
    if e.max() <= 0:
        raise DegenerateInputError("all-zero energy contour")
    x = causal_sequence(inverse_energy(e, cfg), cfg.wsf)
    return group_delay(x, cfg.delta)[:M]


def pick_peaks(tau: np.ndarray, half_width: int, prominence: float = 0.1) -> list[int]:
    """Interior maxima above ``mean + prominence*std`` that dominate +/- half_width frames.

    Within a window the earliest maximum wins, so plateaus yield one peak.
    """
    M = len(tau)
    if M < 3 or np.ptp(tau) < 1e-8:
        return []
    thr = tau.mean() + prominence * tau.std()
    out = []
    for i in range(1, M - 1):
        if tau[i] <= thr:
            continue
        lo, hi = max(0, i - half_width), min(M, i + half_width + 1)
        if tau[i] >= tau[lo:hi].max() and (i == lo or tau[i] > tau[lo:i].max()):
            out.append(i)
    return out


def segment_syllables(audio: AudioBuffer, fcfg: FrameConfig | None = None,
                      gcfg: GroupDelayConfig | None = None) -> list[Segment]:
    """Partition ``audio`` into syllable-like and silence segments."""
    fcfg = fcfg or FrameConfig()
    gcfg = gcfg or GroupDelayConfig()
    uid = audio.utterance_id
    dur = audio.duration
    ste = short_time_energy(audio, fcfg)
    e = ste.frames[:, 0]
    times = ste.frame_times
    if e.max() <= 0:
        return [Segment(uid, 0.0, dur, "silence")]
    if len(e) < 4:
        return [Segment(uid, 0.0, dur, "syllable")]

    tau = min_phase_group_delay(e, gcfg)
    half = max(1, int(round(gcfg.min_segment_dur / 2.0 / fcfg.hop)))
    peaks = pick_peaks(tau, half, gcfg.prominence)
    edges = [0.0] + [float(times[m]) for m in peaks] + [dur]
    thr = np.percentile(e, gcfg.silence_energy_percentile)

    def kind_of(a, b):
        sel = (times >= a) & (times < b)
        if not np.any(sel):
            sel = np.abs(times - 0.5 * (a + b)) == np.abs(times - 0.5 * (a + b)).min()
        return "silence" if e[sel].mean() < thr else "syllable"

    bounds = [[a, b] for a, b in zip(edges[:-1], edges[1:])]
    kinds = [kind_of(a, b) for a, b in bounds]
    min_dur = gcfg.min_segment_dur / 1000.0
    while len(bounds) > 1:
        short = [i for i, (b, k) in enumerate(zip(bounds, kinds))
                 if k == "syllable" and b[1] - b[0] < min_dur]
        if not short:
            break
        i = short[0]
        j = i - 1 if i > 0 else 1  # neighbour across the lower boundary
        lo, hi = min(i, j), max(i, j)
        bounds[lo:hi + 1] = [[bounds[lo][0], bounds[hi][1]]]
        kinds[lo:hi + 1] = [kind_of(*bounds[lo])]
    return [Segment(uid, a, b, k) for (a, b), k in zip(bounds, kinds)]


# ---------------------------------------------------------------------------
# Segment files
# ---------------------------------------------------------------------------

def write_segments(path, segments: list[Segment]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in segments:
            fh.write(f"{s.start!r}\t{s.end!r}\t{s.kind}\n")


def read_segments(path, utterance_id: str | None = None) -> list[Segment]:
    path = Path(path)
    uid = path.stem if utterance_id is None else utterance_id
    out = []
    for line in path.read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        start, end, kind = line.split("\t")
        out.append(Segment(uid, float(start), float(end), kind))
    return out


def summary_report(all_segments: dict[str, list[Segment]], bin_ms: int = 50) -> str:
    """Plain-text corpus summary: counts and a syllable duration histogram."""
    syl = [s for segs in all_segments.values() for s in segs if s.kind == "syllable"]
    sil = [s for segs in all_segments.values() for s in segs if s.kind == "silence"]
    lines = [
        f"utterances\t{len(all_segments)}",
        f"syllable_segments\t{len(syl)}",
        f"silence_segments\t{len(sil)}",
    ]
    if syl:
        d = np.array([s.duration for s in syl]) * 1000.0
        lines.append(f"syllable_duration_ms_mean\t{d.mean():.1f}")
        lines.append(f"syllable_duration_ms_median\t{np.median(d):.1f}")
        lines.append("histogram_ms")
        hist = Counter(int(v // bin_ms) for v in d)
        for b in sorted(hist):
            lines.append(f"{b * bin_ms}-{(b + 1) * bin_ms}\t{hist[b]}")
    return "\n".join(lines) + "\n"
