"""GMM-UBM gender identification.

A universal background model is trained by EM on pooled male and female
frames; male and female models are mean-only MAP adaptations of it. A file
is labelled by the sign of its average per-frame log-likelihood ratio and a
speaker by majority vote over its files.
"""
from __future__ import annotations

import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .gaussian import m_step, mixture_loglik, posteriors

logger = logging.getLogger(__name__)

GMM_SCHEMA = "aud.gender_models"
GMM_VERSION = 1
DEFAULT_SEED = 20200
MALE, FEMALE = "male", "female"


@dataclass
class GaussianMixture:
    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    log_likelihood_trace: list = field(default_factory=list, repr=False)

    @property
    def n_components(self) -> int:
        return len(self.weights)

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def frame_loglik(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.dim:
            raise ValueError(f"feature dim {X.shape[1]} does not match model dim {self.dim}")
        return mixture_loglik(X, self.weights, self.means, self.variances)

    def to_dict(self) -> dict:
        return {"weights": self.weights.tolist(), "means": self.means.tolist(),
                "variances": self.variances.tolist()}

    @classmethod
    def from_dict(cls, d) -> "GaussianMixture":
        return cls(np.asarray(d["weights"], float), np.asarray(d["means"], float),
                   np.asarray(d["variances"], float))


def kmeans_pp(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding: indices of ``k`` well-spread frames."""
    n = len(X)
    centers = [int(rng.integers(n))]
    d2 = np.sum((X - X[centers[0]]) ** 2, axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            nxt = int(rng.integers(n))
        else:
            nxt = int(rng.choice(n, p=d2 / total))
        centers.append(nxt)
        d2 = np.minimum(d2, np.sum((X - X[nxt]) ** 2, axis=1))
    return np.array(centers)


def _reseed_empty(weights, means, variances, counts, min_count):
    """Move empty components next to the component with the largest variance."""
    for k in np.flatnonzero(counts <= min_count):
        donor = int(np.argmax(variances.sum(axis=1) * (counts > min_count)))
        d = int(np.argmax(variances[donor]))
        step = np.zeros(means.shape[1])
        step[d] = np.sqrt(variances[donor, d])
        logger.info("re-seeding empty component %d from component %d", k, donor)
        means[k] = means[donor] + step
        means[donor] = means[donor] - step
        variances[k] = variances[donor]
        weights[k] = weights[donor] = weights[donor] / 2.0
    return weights / weights.sum(), means, variances


def em_fit(features, n_components: int = 64, iters: int = 20, seed: int = DEFAULT_SEED,
           variance_floor: float = 1e-3, tol: float = 0.0) -> GaussianMixture:
    """Diagonal GMM by EM from a k-means++ start.

    ``variance_floor`` is relative to the per-dimension data variance. The
    per-iteration log-likelihood (before each M-step, summed over frames) is
    kept in ``log_likelihood_trace``; iteration stops early once its gain
    falls to ``tol`` or below (``tol=0`` runs all ``iters``).
    """
    X = np.atleast_2d(np.asarray(features, dtype=np.float64))
    T, D = X.shape
    if T < 10 * n_components:
        raise ValueError(f"{T} frames are too few for {n_components} components (need 10 per component)")
    floor = np.maximum(variance_floor * X.var(axis=0), 1e-10)
    rng = np.random.default_rng(seed)

    centers = X[kmeans_pp(X, n_components, rng)]
    d2 = ((X[:, None, :] - centers[None]) ** 2).sum(-1) if T * n_components * D < 5e7 else None
    if d2 is None:
        d2 = np.stack([((X - c) ** 2).sum(1) for c in centers], axis=1)
    hard = np.zeros((T, n_components))
    hard[np.arange(T), np.argmin(d2, axis=1)] = 1.0
    weights, means, variances, counts = m_step(
        X, hard, centers, np.tile(X.var(axis=0), (n_components, 1)), floor
    )
    if np.any(counts <= 0):
        weights, means, variances = _reseed_empty(weights, means, variances, counts, 0.0)
    weights = np.maximum(weights, 1e-12)
    weights /= weights.sum()

    trace = []
    for _ in range(iters):
        resp, ll = posteriors(X, weights, means, variances)
        trace.append(float(ll.sum()))
        if tol > 0 and len(trace) > 1 and trace[-1] - trace[-2] <= tol:
            break
        weights, means, variances, counts = m_step(X, resp, means, variances, floor)
        if np.any(counts < 1e-8):
            weights, means, variances = _reseed_empty(weights, means, variances, counts, 1e-8)
    gmm = GaussianMixture(weights, means, variances)
    gmm.log_likelihood_trace = trace + [float(gmm.frame_loglik(X).sum())]
    return gmm


def map_adapt(ubm: GaussianMixture, features, relevance: float = 16.0) -> GaussianMixture:
    """Mean-only MAP: ``mu' = (n_c * xbar_c + r * mu_c) / (n_c + r)``."""
    X = np.atleast_2d(np.asarray(features, dtype=np.float64))
    if X.shape[1] != ubm.dim:
        raise ValueError(f"feature dim {X.shape[1]} does not match UBM dim {ubm.dim}")
    resp, _ = posteriors(X, ubm.weights, ubm.means, ubm.variances)
    n = resp.sum(axis=0)
    sx = resp.T @ X
    xbar = np.where(n[:, None] > 0, sx / np.maximum(n, 1e-300)[:, None], ubm.means)
    means = (n[:, None] * xbar + relevance * ubm.means) / (n[:, None] + relevance)
    return GaussianMixture(ubm.weights.copy(), means, ubm.variances.copy())


@dataclass
class GenderModelSet:
    ubm: GaussianMixture
    male: GaussianMixture
    female: GaussianMixture
    relevance_factor: float = 16.0
    feature_config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "schema": GMM_SCHEMA,
            "version": GMM_VERSION,
            "relevance_factor": self.relevance_factor,
            "feature_config": self.feature_config,
            "ubm": self.ubm.to_dict(),
            "male": self.male.to_dict(),
            "female": self.female.to_dict(),
        }

    @classmethod
    def from_dict(cls, d) -> "GenderModelSet":
        if d.get("schema") != GMM_SCHEMA or d.get("version") != GMM_VERSION:
            raise ValueError("not a gender model document of a supported version")
        return cls(GaussianMixture.from_dict(d["ubm"]), GaussianMixture.from_dict(d["male"]),
                   GaussianMixture.from_dict(d["female"]), float(d["relevance_factor"]),
                   dict(d.get("feature_config", {})))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "GenderModelSet":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def train_gender_models(male_frames, female_frames, n_components: int = 64,
                        relevance: float = 16.0, iters: int = 20,
                        seed: int = DEFAULT_SEED) -> GenderModelSet:
    """UBM on pooled frames, then MAP-adapted male and female models."""
    male_frames = np.atleast_2d(male_frames)
    female_frames = np.atleast_2d(female_frames)
    ubm = em_fit(np.vstack([male_frames, female_frames]), n_components, iters, seed)
    return GenderModelSet(ubm, map_adapt(ubm, male_frames, relevance),
                          map_adapt(ubm, female_frames, relevance), relevance)


@dataclass
class GenderDecision:
    file_id: str
    llr: float
    label: str


def classify_file(models: GenderModelSet, features, file_id: str = "") -> GenderDecision:
    """Average per-frame log-likelihood ratio, male minus female.

    ``llr > 0`` means male; a tie (``llr == 0``) is labelled female.
    """
    X = np.atleast_2d(np.asarray(features, dtype=np.float64))
    if len(X) == 0:
        raise ValueError("cannot classify an empty file")
    llr = float(np.mean(models.male.frame_loglik(X) - models.female.frame_loglik(X)))
    return GenderDecision(file_id, llr, MALE if llr > 0 else FEMALE)


def vote_speaker(decisions: list[GenderDecision]) -> str:
    """Majority label; a tied vote goes to the file with the largest |llr|."""
    if not decisions:
        raise ValueError("no decisions to vote on")
    votes = Counter(d.label for d in decisions)
    if votes[MALE] != votes[FEMALE]:
        return MALE if votes[MALE] > votes[FEMALE] else FEMALE
    # order-independent: largest |llr|, then the label itself
    strongest = max(decisions, key=lambda d: (abs(d.llr), d.label))
    return strongest.label


def vote_groups(decisions: list[GenderDecision], groups: dict[str, str]) -> dict[str, str]:
    """Apply :func:`vote_speaker` per group (``groups`` maps file id to group)."""
    by_group: dict[str, list[GenderDecision]] = {}
    for d in decisions:
        by_group.setdefault(groups[d.file_id], []).append(d)
    return {g: vote_speaker(ds) for g, ds in sorted(by_group.items())}
