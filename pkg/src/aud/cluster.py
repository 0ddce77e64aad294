"""Pairwise DTW between syllable segments and mutual-KNN graph clustering."""
from __future__ import annotations

import logging
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from . import kernels
from .features import FeatureSequence

logger = logging.getLogger(__name__)

UNASSIGNED = -1


class InfeasibleBandError(ValueError):
    pass


@dataclass
class DtwConfig:
    local_distance: str = "euclidean"
    step_pattern: str = "symmetric1"
    band_ratio: float = 1.0
    length_normalize: bool = True

    def __post_init__(self):
        if not 0 < self.band_ratio <= 1:
            raise ValueError("band_ratio must lie in (0, 1]")
        if self.local_distance not in ("euclidean", "cosine"):
            raise ValueError(f"unknown local distance {self.local_distance!r}")
        if self.step_pattern not in ("symmetric1", "symmetric2"):
            raise ValueError(f"unknown step pattern {self.step_pattern!r}")


@dataclass
class SimilarityMatrix:
    values: np.ndarray
    segment_ids: list
    distances: np.ndarray | None = None
    sigma: float = 1.0

    @property
    def n(self) -> int:
        return len(self.segment_ids)


@dataclass
class ClusterAssignment:
    labels: np.ndarray
    k_neighbors: int
    n_clusters: int
    segment_ids: list = field(default_factory=list)

    def members(self, cluster: int) -> np.ndarray:
        return np.flatnonzero(self.labels == cluster)


def _frames(x) -> np.ndarray:
    return x.frames if isinstance(x, FeatureSequence) else np.atleast_2d(np.asarray(x, float))


def local_cost(a: np.ndarray, b: np.ndarray, metric: str = "euclidean") -> np.ndarray:
    if metric == "euclidean":
        return np.sqrt(((a[:, None, :] - b[None, :, :]) ** 2).sum(axis=-1))
    na = np.linalg.norm(a, axis=1)
    nb = np.linalg.norm(b, axis=1)
    denom = np.maximum(na[:, None] * nb[None, :], 1e-300)
    return np.clip(1.0 - (a @ b.T) / denom, 0.0, 2.0)


def dtw_distance(a, b, cfg: DtwConfig | None = None) -> float:
    """Minimal accumulated local distance over monotonic alignments of ``a`` and ``b``.

    With ``length_normalize`` the cost is divided by the number of cells on
    the optimal path.
    """
    cfg = cfg or DtwConfig()
    fa, fb = _frames(a), _frames(b)
    if len(fa) == 0 or len(fb) == 0:
        raise ValueError("DTW needs non-empty sequences")
    if fa.shape[1] != fb.shape[1]:
        raise ValueError(f"dimension mismatch: {fa.shape[1]} vs {fb.shape[1]}")
    n, m = len(fa), len(fb)
    band = int(np.floor(cfg.band_ratio * max(n, m)))
    if band < abs(n - m):
        raise InfeasibleBandError(
            f"band of {band} frames cannot align lengths {n} and {m}"
        )
    cost = local_cost(fa, fb, cfg.local_distance)
    step = 2 if cfg.step_pattern == "symmetric2" else 1
    total, plen = kernels.dtw_accumulate(cost, step, band)
    if not np.isfinite(total):
        raise InfeasibleBandError("no admissible warping path")
    total = float(total)
    return total / plen if cfg.length_normalize else total


def pairwise_dtw(items, cfg: DtwConfig | None = None, n_jobs: int = 1) -> np.ndarray:
    """Symmetric matrix of DTW distances, one evaluation per unordered pair."""
    cfg = cfg or DtwConfig()
    feats = [_frames(x) for x in items]
    n = len(feats)
    dist = np.zeros((n, n))

    def row(i):
        return [dtw_distance(feats[i], feats[j], cfg) for j in range(i + 1, n)]

    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            rows = list(pool.map(row, range(n)))
    else:
        rows = [row(i) for i in range(n)]
    for i, r in enumerate(rows):
        dist[i, i + 1:] = r
        dist[i + 1:, i] = r
    return dist


def similarity_from_distances(dist: np.ndarray, segment_ids=None) -> SimilarityMatrix:
    n = len(dist)
    iu = np.triu_indices(n, 1)
    sigma = float(np.median(dist[iu])) if n > 1 else 1.0
    if sigma <= 0:
        sigma = 1.0
    values = np.exp(-dist / sigma)
    ids = list(segment_ids) if segment_ids is not None else list(range(n))
    return SimilarityMatrix(values, ids, dist, sigma)


def build_similarity_matrix(segments, cfg: DtwConfig | None = None, n_jobs: int = 1,
                            segment_ids=None) -> SimilarityMatrix:
    """``exp(-dtw/sigma)`` over all pairs, sigma the median pairwise distance.

    ``segments`` holds feature sequences, or ``(segment, features)`` pairs.
    """
    if len(segments) < 2:
        raise ValueError("need at least two segments to build a similarity matrix")
    feats = [s[1] if isinstance(s, tuple) else s for s in segments]
    if segment_ids is None and isinstance(segments[0], tuple):
        segment_ids = [_segment_key(s[0]) for s in segments]
    return similarity_from_distances(pairwise_dtw(feats, cfg, n_jobs), segment_ids)


def _segment_key(seg) -> str:
    return f"{seg.utterance_id}_{seg.start:.3f}_{seg.end:.3f}"


def neighbour_order(values: np.ndarray) -> np.ndarray:
    """Per row, other indices by decreasing similarity; ties go to the lower index."""
    n = len(values)
    order = np.empty((n, n - 1), dtype=np.int64)
    for i in range(n):
        others = np.delete(np.arange(n), i)
        # lexsort: last key is primary
        order[i] = others[np.lexsort((others, -values[i, others]))]
    return order


def _components(order: np.ndarray, k: int, min_cluster_size: int):
    n = len(order)
    rows = np.repeat(np.arange(n), k)
    cols = order[:, :k].ravel()
    knn = coo_matrix((np.ones(len(rows), dtype=bool), (rows, cols)), shape=(n, n)).tocsr()
    mutual = knn.multiply(knn.T)
    _, comp = connected_components(mutual, directed=False)
    sizes = np.bincount(comp)
    labels = np.full(n, UNASSIGNED, dtype=np.int64)
    next_id = 0
    seen = {}
    # number clusters by their smallest member index
    for i in range(n):
        c = comp[i]
        if c in seen:
            labels[i] = seen[c]
            continue
        if sizes[c] >= min_cluster_size:
            seen[c] = next_id
            labels[i] = next_id
            next_id += 1
        else:
            seen[c] = UNASSIGNED
    return labels, next_id


def knn_graph_cluster(sim: SimilarityMatrix, k: int, min_cluster_size: int = 10,
                      order: np.ndarray | None = None) -> ClusterAssignment:
    """Connected components of the mutual k-nearest-neighbour graph.

    Components smaller than ``min_cluster_size`` are left UNASSIGNED.
    """
    n = sim.n
    if not 1 <= k < n:
        raise ValueError(f"k must satisfy 1 <= k < n (k={k}, n={n})")
    if order is None:
        order = neighbour_order(sim.values)
    labels, n_clusters = _components(order, k, min_cluster_size)
    return ClusterAssignment(labels, k, n_clusters, list(sim.segment_ids))


def select_k(sim: SimilarityMatrix, target: tuple[int, int] = (30, 36),
             min_cluster_size: int = 10, k_max: int = 200) -> ClusterAssignment:
    """Choose k for :func:`knn_graph_cluster` by scanning ``1..k_max``.

    If some k yields a cluster count inside ``target``, the one assigning
    the most segments wins (smaller k on ties). Otherwise the non-zero
    count that persists over the most values of k is used, again with the
    best-covering k; counts of one are skipped there unless nothing else
    occurs. The scan is exhaustive because the count of clusters
    above ``min_cluster_size`` is not monotone in k.
    """
    n = sim.n
    order = neighbour_order(sim.values)
    lo, hi = target
    runs = []
    for k in range(1, min(n - 1, k_max) + 1):
        labels, count = _components(order, k, min_cluster_size)
        runs.append((k, count, int(np.sum(labels != UNASSIGNED)), labels))
    hits = [r for r in runs if lo <= r[1] <= hi]
    if not hits:
        # a single cluster partitions nothing, so it only counts as a last resort
        persistence = (Counter(r[1] for r in runs if r[1] > 1)
                       or Counter(r[1] for r in runs if r[1] > 0))
        if persistence:
            best_count = min(persistence, key=lambda c: (-persistence[c], -c))
            hits = [r for r in runs if r[1] == best_count]
            logger.info("no k reaches %d-%d clusters; using persistent count %d",
                        lo, hi, best_count)
        else:
            hits = runs
    k, count, _, labels = min(hits, key=lambda r: (-r[2], r[0]))
    logger.info("selected k=%d giving %d clusters", k, count)
    return ClusterAssignment(labels, k, count, list(sim.segment_ids))


def write_clusters(path, assignment: ClusterAssignment) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for sid, lab in zip(assignment.segment_ids, assignment.labels):
            fh.write(f"{sid}\t{int(lab)}\n")


def read_clusters(path) -> tuple[list[str], np.ndarray]:
    ids, labels = [], []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                sid, lab = line.rstrip("\n").split("\t")
                ids.append(sid)
                labels.append(int(lab))
    return ids, np.array(labels, dtype=np.int64)
