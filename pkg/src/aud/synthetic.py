"""Synthetic speech-like corpora with known syllable structure.

Each syllable family is a three-part sound (onset, nucleus, offset) built
from family-specific tones under a rise/steady/fall envelope, so the
ground truth for segmentation, clustering and unit structure is known.

    python -m aud.synthetic OUT_DIR [--utterances 60] [--seed 0]

writes WAV files plus a ``manifest.tsv`` and ``truth.tsv``.
"""
from __future__ import annotations

import argparse
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .features import AudioBuffer, write_wav

SAMPLE_RATE = 16000

# (onset Hz, nucleus Hz pair, offset Hz) per family
FAMILIES = [
    ((300.0,), (700.0, 1100.0), (450.0,)),
    ((2200.0,), (1500.0, 2600.0), (1800.0,)),
    ((3800.0, 4400.0), (500.0, 2900.0), (3300.0,)),
]


@dataclass
class SyllableTruth:
    utterance_id: str
    start: float
    end: float
    family: int


def _tones(freqs, n, sr, rng, jitter):
    t = np.arange(n) / sr
    out = np.zeros(n)
    for f in freqs:
        f = f * (1.0 + jitter * rng.uniform(-1, 1))
        out += np.sin(2 * np.pi * f * t + rng.uniform(0, 2 * np.pi))
    return out / len(freqs)


def syllable(family: int, rng: np.random.Generator, sr: int = SAMPLE_RATE,
             jitter: float = 0.05, duration: float = 0.21) -> np.ndarray:
    onset, nucleus, offset = FAMILIES[family]
    dur = duration * (1.0 + jitter * rng.uniform(-1, 1))
    n = int(dur * sr)
    n1, n3 = int(0.3 * n), int(0.3 * n)
    n2 = n - n1 - n3
    parts = [
        _tones(onset, n1, sr, rng, jitter) * np.linspace(0.05, 1.0, n1),
        _tones(nucleus, n2, sr, rng, jitter),
        _tones(offset, n3, sr, rng, jitter) * np.linspace(1.0, 0.05, n3),
    ]
    amp = 0.3 * (1.0 + jitter * rng.uniform(-1, 1))
    return amp * np.concatenate(parts)


def utterance(families: list[int], rng: np.random.Generator, sr: int = SAMPLE_RATE,
              jitter: float = 0.05, gap: float = 0.1, noise: float = 1e-3):
    """Concatenate syllables with silent gaps; returns samples and (start, end, family)."""
    pieces = [np.zeros(int(0.5 * gap * sr))]
    spans = []
    pos = len(pieces[0])
    for i, fam in enumerate(families):
        s = syllable(fam, rng, sr, jitter)
        spans.append((pos / sr, (pos + len(s)) / sr, fam))
        pieces.append(s)
        pos += len(s)
        g = int(gap * (1.0 + jitter * rng.uniform(-1, 1)) * sr)
        g = g if i < len(families) - 1 else int(0.5 * gap * sr)
        pieces.append(np.zeros(g))
        pos += g
    x = np.concatenate(pieces)
    x += noise * rng.standard_normal(len(x))
    return x, spans


def make_corpus(n_utterances: int = 60, seed: int = 0, syllables=(3, 5), jitter: float = 0.05,
                n_families: int = 3):
    """In-memory corpus: list of AudioBuffer and list of SyllableTruth."""
    rng = np.random.default_rng(seed)
    audio, truth = [], []
    for u in range(n_utterances):
        uid = f"utt{u:03d}"
        k = int(rng.integers(syllables[0], syllables[1] + 1))
        fams = [int(f) for f in rng.integers(0, n_families, size=k)]
        x, spans = utterance(fams, rng, jitter=jitter)
        audio.append(AudioBuffer(x, SAMPLE_RATE, uid))
        truth.extend(SyllableTruth(uid, a, b, f) for a, b, f in spans)
    return audio, truth


def write_corpus(out_dir, n_utterances: int = 60, seed: int = 0, speakers: int = 4) -> Path:
    """Write WAVs, ``manifest.tsv`` and ``truth.tsv``; returns the manifest path."""
    out = Path(out_dir)
    (out / "wav").mkdir(parents=True, exist_ok=True)
    audio, truth = make_corpus(n_utterances, seed)
    lines = []
    for i, a in enumerate(audio):
        p = out / "wav" / f"{a.utterance_id}.wav"
        write_wav(p, a)
        lines.append(f"{a.utterance_id}\twav/{p.name}\tspk{i % speakers}\t")
    manifest = out / "manifest.tsv"
    manifest.write_text("\n".join(lines) + "\n", encoding="utf-8")
    with open(out / "truth.tsv", "w", encoding="utf-8") as fh:
        for t in truth:
            fh.write(f"{t.utterance_id}\t{t.start!r}\t{t.end!r}\t{t.family}\n")
    return manifest


def main(argv=None):
    ap = argparse.ArgumentParser(description="write a synthetic syllable corpus")
    ap.add_argument("out_dir")
    ap.add_argument("--utterances", type=int, default=60)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    print(write_corpus(args.out_dir, args.utterances, args.seed))


if __name__ == "__main__":
    main()
