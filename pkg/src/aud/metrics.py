"""Evaluation of discrete encodings and intermediate results."""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np

from .cluster import UNASSIGNED


@dataclass
class BitrateReport:
    n_symbols: int
    total_duration: float
    entropy_bits: float
    bitrate: float
    unigram_distribution: dict

    def to_dict(self) -> dict:
        return {
            "n_symbols": self.n_symbols,
            "total_duration": self.total_duration,
            "entropy_bits": self.entropy_bits,
            "bitrate": self.bitrate,
            "unigram_distribution": dict(sorted(self.unigram_distribution.items())),
        }

    def text(self) -> str:
        return (
            f"symbols\t{self.n_symbols}\n"
            f"types\t{len(self.unigram_distribution)}\n"
            f"duration_s\t{self.total_duration:.3f}\n"
            f"entropy_bits\t{self.entropy_bits:.6f}\n"
            f"bitrate_bps\t{self.bitrate:.4f}\n"
        )


def _symbols(t):
    return t.symbols if hasattr(t, "symbols") else list(t)


def bitrate(transcriptions, total_duration: float, exclude: tuple = ()) -> BitrateReport:
    """Symbol rate times unigram entropy (bits per second).

    ``exclude`` lists symbols (e.g. ``("SIL",)``) to drop before counting.
    """
    if total_duration <= 0:
        raise ValueError("total_duration must be positive")
    counts = Counter(s for t in transcriptions for s in _symbols(t) if s not in exclude)
    n = sum(counts.values())
    if n == 0:
        raise ValueError("no symbols to evaluate")
    probs = {s: c / n for s, c in counts.items()}
    p = np.array(list(probs.values()))
    entropy = float(max(0.0, -np.sum(p * np.log2(p))))
    return BitrateReport(n, float(total_duration), entropy, n / total_duration * entropy, probs)


def segment_boundaries(segments) -> np.ndarray:
    """Sorted unique start/end times of a segment list (plain times pass through)."""
    if all(isinstance(s, (int, float, np.floating)) for s in segments):
        return np.unique(np.asarray(segments, dtype=np.float64))
    pts = sorted({s.start for s in segments} | {s.end for s in segments})
    return np.array(pts, dtype=np.float64)


def match_boundaries(hypothesis, reference, tolerance: float = 30.0) -> tuple[int, int, int]:
    """Greedy one-to-one boundary matching: (hits, n_hypothesis, n_reference).

    Boundaries are the segment start/end times (or the given times
    themselves); ``tolerance`` is in ms. Candidate pairs are matched
    closest-first (ties by time).
    """
    hyp = segment_boundaries(hypothesis) if len(hypothesis) else np.zeros(0)
    ref = segment_boundaries(reference) if len(reference) else np.zeros(0)
    tol = tolerance / 1000.0 + 1e-9
    pairs = sorted(
        (abs(h - r), i, j)
        for i, h in enumerate(hyp)
        for j, r in enumerate(ref)
        if abs(h - r) <= tol
    )
    used_h, used_r = set(), set()
    hits = 0
    for _, i, j in pairs:
        if i in used_h or j in used_r:
            continue
        used_h.add(i)
        used_r.add(j)
        hits += 1
    return hits, len(hyp), len(ref)


def prf(hits: int, n_hyp: int, n_ref: int):
    precision = hits / n_hyp if n_hyp else (1.0 if n_ref == 0 else 0.0)
    recall = hits / n_ref if n_ref else (1.0 if n_hyp == 0 else 0.0)
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return precision, recall, f1


def boundary_metrics(hypothesis, reference, tolerance: float = 30.0):
    """Boundary precision, recall and F1 under :func:`match_boundaries`."""
    return prf(*match_boundaries(hypothesis, reference, tolerance))


def cluster_purity(assignment, truth_labels) -> float:
    """Fraction of assigned segments that carry their cluster's majority class."""
    labels = np.asarray(assignment.labels if hasattr(assignment, "labels") else assignment)
    truth = list(truth_labels)
    if len(truth) != len(labels):
        raise ValueError("one truth label per segment required")
    assigned = np.flatnonzero(labels != UNASSIGNED)
    if len(assigned) == 0:
        raise ValueError("no assigned segments")
    total = 0
    for c in np.unique(labels[assigned]):
        members = np.flatnonzero(labels == c)
        total += Counter(truth[i] for i in members).most_common(1)[0][1]
    return total / len(assigned)


def label_stability(t1, t2) -> float:
    """Fraction of frames whose unit label is identical in two aligned transcriptions."""
    if len(t1) != len(t2):
        raise ValueError("transcription sets differ in size")
    same = total = 0
    for a, b in zip(t1, t2):
        if a.utterance_id != b.utterance_id:
            raise ValueError(f"utterance mismatch: {a.utterance_id} vs {b.utterance_id}")
        la, lb = a.frame_labels(), b.frame_labels()
        if len(la) != len(lb):
            raise ValueError(f"{a.utterance_id}: frame counts differ ({len(la)} vs {len(lb)})")
        total += len(la)
        same += sum(x == y for x, y in zip(la, lb))
    if total == 0:
        raise ValueError("no frames to compare")
    return same / total
