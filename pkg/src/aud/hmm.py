"""Acoustic-unit HMMs: initialisation, Viterbi alignment, Viterbi training,
transcription and two-stage self-training.

Each discovered syllable cluster contributes three units (rising transient,
steady state, falling transient); a one-state ``SIL`` unit models silence.
Units are left-to-right with self-loops and no skips. A state's transition
row is ``[self, next]`` where ``next`` out of the last state is the unit's
exit probability. The exit out of the final state of a decoded sequence is
not scored.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .features import FeatureSequence
from .metrics import label_stability
from .gaussian import m_step, mixture_log_components, split_components
from scipy.special import logsumexp

logger = logging.getLogger(__name__)

SIL = "SIL"
INVENTORY_SCHEMA = "aud.inventory"
INVENTORY_VERSION = 1
TRANSITION_FLOOR = 1e-3
STATES_PER_UNIT = 3


class InfeasibleAlignmentError(ValueError):
    pass


@dataclass
class AcousticUnitHMM:
    symbol: str
    self_loop: np.ndarray  # (S,)
    weights: np.ndarray  # (S, C)
    means: np.ndarray  # (S, C, D)
    variances: np.ndarray  # (S, C, D)

    @property
    def n_states(self) -> int:
        return len(self.self_loop)

    @property
    def n_mixtures(self) -> int:
        return self.weights.shape[1]

    @property
    def transitions(self) -> np.ndarray:
        """S x (S+1) matrix; column S is the exit."""
        S = self.n_states
        A = np.zeros((S, S + 1))
        A[np.arange(S), np.arange(S)] = self.self_loop
        A[np.arange(S), np.arange(S) + 1] = 1.0 - self.self_loop
        return A

    def log_transitions(self):
        with np.errstate(divide="ignore"):
            return np.log(self.self_loop), np.log1p(-self.self_loop)

    def state_loglik(self, X: np.ndarray) -> np.ndarray:
        """Emission log-likelihood of every frame in every state, (T, S)."""
        out = np.empty((len(X), self.n_states))
        for s in range(self.n_states):
            lc = mixture_log_components(X, self.weights[s], self.means[s], self.variances[s])
            out[:, s] = logsumexp(lc, axis=1)
        return out

    def copy(self) -> "AcousticUnitHMM":
        return AcousticUnitHMM(self.symbol, self.self_loop.copy(), self.weights.copy(),
                               self.means.copy(), self.variances.copy())

    def to_dict(self) -> dict:
        return {
            "symbol": self.symbol,
            "n_states": self.n_states,
            "transitions": self.transitions.tolist(),
            "weights": self.weights.tolist(),
            "means": self.means.tolist(),
            "variances": self.variances.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AcousticUnitHMM":
        A = np.asarray(d["transitions"], dtype=np.float64)
        S = int(d["n_states"])
        return cls(d["symbol"], A[np.arange(S), np.arange(S)].copy(),
                   np.asarray(d["weights"], float), np.asarray(d["means"], float),
                   np.asarray(d["variances"], float))


@dataclass
class AUInventory:
    units: list[AcousticUnitHMM]
    cluster_map: dict[int, tuple[str, str, str]]
    feature_dim: int
    variance_floor: np.ndarray

    def __post_init__(self):
        symbols = [u.symbol for u in self.units]
        if len(set(symbols)) != len(symbols):
            raise ValueError("duplicate unit symbols")
        self._index = {s: i for i, s in enumerate(symbols)}
        self._offsets = np.cumsum([0] + [u.n_states for u in self.units])

    def __len__(self):
        return len(self.units)

    @property
    def symbols(self) -> list[str]:
        return [u.symbol for u in self.units]

    def unit(self, symbol: str) -> AcousticUnitHMM:
        return self.units[self._index[symbol]]

    def index(self, symbol: str) -> int:
        return self._index[symbol]

    def __contains__(self, symbol) -> bool:
        return symbol in self._index

    def state_loglik(self, X: np.ndarray) -> np.ndarray:
        """Emission log-likelihoods for all states of all units, (T, total states)."""
        return np.hstack([u.state_loglik(X) for u in self.units])

    def columns(self, symbol: str) -> np.ndarray:
        i = self._index[symbol]
        return np.arange(self._offsets[i], self._offsets[i + 1])

    def copy(self) -> "AUInventory":
        return AUInventory([u.copy() for u in self.units], dict(self.cluster_map),
                           self.feature_dim, self.variance_floor.copy())

    # -- serialisation ----------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "schema": INVENTORY_SCHEMA,
            "version": INVENTORY_VERSION,
            "topology": {"states_per_unit": STATES_PER_UNIT, "silence_states": 1,
                         "left_to_right": True, "skips": False},
            "feature_dim": self.feature_dim,
            "variance_floor": self.variance_floor.tolist(),
            "cluster_map": {str(k): list(v) for k, v in sorted(self.cluster_map.items())},
            "units": [u.to_dict() for u in self.units],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AUInventory":
        if d.get("schema") != INVENTORY_SCHEMA:
            raise ValueError("not an acoustic-unit inventory document")
        if d.get("version") != INVENTORY_VERSION:
            raise ValueError(f"unsupported inventory version {d.get('version')}")
        return cls([AcousticUnitHMM.from_dict(u) for u in d["units"]],
                   {int(k): tuple(v) for k, v in d["cluster_map"].items()},
                   int(d["feature_dim"]), np.asarray(d["variance_floor"], float))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "AUInventory":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass
class Transcription:
    utterance_id: str
    symbols: list[str]
    alignments: list[tuple[int, int]] | None = None  # [start, end) frames
    log_likelihood: float = 0.0
    cluster: int | None = None
    warning: bool = False

    def frame_labels(self) -> list[str]:
        if self.alignments is None:
            raise ValueError(f"{self.utterance_id}: transcription has no alignments")
        out = []
        for sym, (a, b) in zip(self.symbols, self.alignments):
            out.extend([sym] * (b - a))
        return out


@dataclass
class SelfTrainConfig:
    max_iters: int = 10
    label_change_tol: float = 0.01
    mixture_schedule: list[int] = field(default_factory=lambda: [1, 1, 2, 2, 4, 4, 8])
    variance_floor: float = 1e-3  # relative to the global per-dimension variance
    insertion_penalty: float = 0.0

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not 0 <= self.label_change_tol < 1:
            raise ValueError("label_change_tol must lie in [0, 1)")

    def mixtures_at(self, iteration: int) -> int:
        sched = self.mixture_schedule or [1]
        return int(sched[min(iteration, len(sched) - 1)])


@dataclass
class ConvergenceReport:
    stage: str
    iterations: list[dict] = field(default_factory=list)
    converged: bool = False
    oscillating: bool = False
    n_passes: int = 0
    final_stability: float = 0.0

    def to_dict(self) -> dict:
        return {
            "stage": self.stage,
            "converged": self.converged,
            "oscillating": self.oscillating,
            "n_passes": self.n_passes,
            "final_stability": self.final_stability,
            "iterations": self.iterations,
        }


def _frames(x) -> np.ndarray:
    return x.frames if isinstance(x, FeatureSequence) else np.atleast_2d(np.asarray(x, float))


# ---------------------------------------------------------------------------
# Initialisation
# ---------------------------------------------------------------------------

def global_variance_floor(frames: np.ndarray, scale: float = 1e-3) -> np.ndarray:
    return np.maximum(scale * frames.var(axis=0), 1e-8)


def _flat_unit(symbol, pooled, n_states, floor, self_loop, offset_scale):
    mean = pooled.mean(axis=0)
    var = pooled.var(axis=0)
    if np.any(var < floor):
        logger.warning("%s: %d low-variance dimensions floored", symbol, int(np.sum(var < floor)))
    var = np.maximum(var, floor)
    sd = np.sqrt(pooled.var(axis=0))
    offsets = (np.arange(n_states) - (n_states - 1) / 2.0)[:, None] * offset_scale * sd
    D = pooled.shape[1]
    return AcousticUnitHMM(
        symbol,
        np.full(n_states, self_loop),
        np.ones((n_states, 1)),
        (mean + offsets).reshape(n_states, 1, D),
        np.tile(var, (n_states, 1)).reshape(n_states, 1, D),
    )


def cluster_symbols(n_clusters: int) -> dict[int, tuple[str, str, str]]:
    width = max(2, len(str(max(0, n_clusters - 1))))
    return {c: tuple(f"C{c:0{width}d}_{p}" for p in "RSF") for c in range(n_clusters)}


def init_inventory(assignment, features, silence_frames=None, variance_floor_scale: float = 1e-3,
                   offset_scale: float = 0.1, unit_self_loop: float = 0.6,
                   silence_self_loop: float = 0.9) -> AUInventory:
    """Flat-start inventory from a cluster assignment.

    ``features[i]`` belongs to the segment labelled ``assignment.labels[i]``.
    Each member is cut into uniform thirds; the pooled first/middle/last
    thirds of a cluster initialise its rise/steady/fall units. ``SIL`` is
    initialised from ``silence_frames`` (or, if none are given, from the 5%
    of member frames with the lowest first coefficient).
    """
    labels = np.asarray(assignment.labels)
    feats = [_frames(f) for f in features]
    if len(feats) != len(labels):
        raise ValueError("one feature sequence per assigned segment required")
    used = [feats[i] for i in np.flatnonzero(labels >= 0)]
    if not used:
        raise ValueError("no assigned segments to initialise from")
    D = used[0].shape[1]
    sil = None if silence_frames is None else np.atleast_2d(np.asarray(silence_frames, float))
    if sil is not None and len(sil) == 0:
        sil = None
    pool_all = np.vstack(used + ([sil] if sil is not None else []))
    floor = global_variance_floor(pool_all, variance_floor_scale)

    cmap = cluster_symbols(assignment.n_clusters)
    units = []
    for c in range(assignment.n_clusters):
        members = [feats[i] for i in np.flatnonzero(labels == c)]
        if not members:
            raise ValueError(f"cluster {c} is empty")
        thirds = [[], [], []]
        for m in members:
            for part, idx in zip(thirds, np.array_split(np.arange(len(m)), 3)):
                if len(idx):
                    part.append(m[idx])
        for sym, part in zip(cmap[c], thirds):
            pooled = np.vstack(part) if part else np.vstack(members)
            units.append(_flat_unit(sym, pooled, STATES_PER_UNIT, floor, unit_self_loop, offset_scale))
    if sil is None:
        c0 = pool_all[:, 0]
        sil = pool_all[c0 <= np.percentile(c0, 5)]
    units.append(_flat_unit(SIL, sil, 1, floor, silence_self_loop, 0.0))
    return AUInventory(units, cmap, D, floor)


# ---------------------------------------------------------------------------
# Alignment
# ---------------------------------------------------------------------------

def _chain_arrays(units: list[AcousticUnitHMM]):
    ls, ln = zip(*(u.log_transitions() for u in units))
    return np.concatenate(ls), np.concatenate(ln)


def viterbi_align(hmm_chain, features, logb=None):
    """Best state path of ``features`` through the concatenated units.

    Returns ``(path, log_likelihood)``; ``path[t]`` indexes the states of the
    concatenated chain.
    """
    units = [hmm_chain] if isinstance(hmm_chain, AcousticUnitHMM) else list(hmm_chain)
    if not units:
        raise ValueError("empty HMM chain")
    X = _frames(features)
    n_states = sum(u.n_states for u in units)
    if len(X) < n_states:
        raise InfeasibleAlignmentError(f"{len(X)} frames cannot traverse {n_states} states")
    if logb is None:
        logb = np.hstack([u.state_loglik(X) for u in units])
    log_self, log_next = _chain_arrays(units)
    score, path = kernels.viterbi_chain(np.ascontiguousarray(logb), log_self, log_next)
    if not np.isfinite(score):
        raise InfeasibleAlignmentError("no admissible path through the chain")
    return path, float(score)


def path_to_segments(path: np.ndarray, unit_of_state: np.ndarray, first_states: set):
    """Split a state path into (unit index, start, end) runs.

    A new run starts on every entry into a unit's first state from another
    state. Repeats of one-state units are merged.
    """
    runs = []
    start = 0
    for t in range(1, len(path) + 1):
        if t == len(path) or (path[t] != path[t - 1] and path[t] in first_states):
            runs.append((int(unit_of_state[path[start]]), start, t))
            start = t
    return runs


def _chain_logb(inventory: AUInventory, symbols, full_logb):
    return np.hstack([full_logb[:, inventory.columns(s)] for s in symbols])


# ---------------------------------------------------------------------------
# Transcription
# ---------------------------------------------------------------------------

def _decode_chain(inventory, symbols, X, full_logb):
    units = [inventory.unit(s) for s in symbols]
    path, ll = viterbi_align(units, X, _chain_logb(inventory, symbols, full_logb))
    offsets = np.cumsum([0] + [u.n_states for u in units])
    unit_of_state = np.repeat(np.arange(len(units)), [u.n_states for u in units])
    runs = path_to_segments(path, unit_of_state, set(offsets[:-1].tolist()))
    # in a forced chain every unit is visited exactly once
    return ll, [(a, b) for _, a, b in runs]


def transcribe(inventory: AUInventory, features, grammar: str = "free_loop",
               utterance_id: str = "", insertion_penalty: float = 0.0) -> Transcription:
    """Decode ``features`` into AU symbols.

    ``cluster_triplet`` forces one rise/steady/fall triplet and picks the
    best cluster (lowest id on ties); ``free_loop`` lets any unit follow any
    unit with an unnormalised uniform prior (``insertion_penalty`` added per
    unit entry).
    """
    X = _frames(features)
    if len(X) == 0:
        raise ValueError("cannot transcribe an empty feature sequence")
    if isinstance(features, FeatureSequence) and not utterance_id:
        utterance_id = features.meta.get("utterance_id", "")
    full_logb = inventory.state_loglik(X)
    if grammar == "cluster_triplet":
        best = None
        for c in sorted(inventory.cluster_map):
            syms = list(inventory.cluster_map[c])
            if len(X) < sum(inventory.unit(s).n_states for s in syms):
                continue
            ll, al = _decode_chain(inventory, syms, X, full_logb)
            if best is None or ll > best[0]:
                best = (ll, al, syms, c)
        if best is None:
            return _best_single_unit(inventory, X, full_logb, utterance_id)
        ll, al, syms, c = best
        return Transcription(utterance_id, syms, al, ll, cluster=c)
    if grammar == "free_loop":
        units = inventory.units
        log_self, log_next = _chain_arrays(units)
        offsets = inventory._offsets
        first = offsets[:-1].astype(np.int64)
        last = (offsets[1:] - 1).astype(np.int64)
        score, path = kernels.viterbi_network(
            np.ascontiguousarray(full_logb), log_self, log_next, first, last, float(insertion_penalty)
        )
        if not np.isfinite(score):
            return _best_single_unit(inventory, X, full_logb, utterance_id)
        unit_of_state = np.repeat(np.arange(len(units)), [u.n_states for u in units])
        runs = path_to_segments(path, unit_of_state, set(first.tolist()))
        return Transcription(utterance_id, [units[u].symbol for u, _, _ in runs],
                             [(a, b) for _, a, b in runs], float(score))
    raise ValueError(f"unknown grammar {grammar!r}")


def _best_single_unit(inventory, X, full_logb, utterance_id):
    logger.warning("%s: %d frames too short for the grammar, using best single unit",
                   utterance_id or "<utt>", len(X))
    best = None
    for u in inventory.units:
        if len(X) < u.n_states:
            continue
        _, ll = viterbi_align(u, X, full_logb[:, inventory.columns(u.symbol)])
        if best is None or ll > best[1]:
            best = (u.symbol, ll)
    if best is None:
        raise InfeasibleAlignmentError(f"{len(X)} frames fit no unit")
    return Transcription(utterance_id, [best[0]], [(0, len(X))], best[1], warning=True)


# ---------------------------------------------------------------------------
# Viterbi training
# ---------------------------------------------------------------------------

def total_log_likelihood(inventory: AUInventory, dataset) -> float:
    total = 0.0
    for feats, symbols in dataset:
        X = _frames(feats)
        _, ll = viterbi_align([inventory.unit(s) for s in symbols], X)
        total += ll
    return total


def train_iteration(inventory: AUInventory, dataset, n_mixtures: int | None = None,
                    return_stats: bool = False):
    """One Viterbi-training pass over ``dataset`` of ``(features, symbols)`` pairs.

    Frames are hard-aligned to states; each state's mixture gets one EM
    update on its frames, self-loops are re-estimated from the path counts.
    If ``n_mixtures`` exceeds the current mixture count, components are
    split afterwards. States that receive no frames keep their parameters.
    """
    offsets = inventory._offsets
    n_total = int(offsets[-1])
    xs, gs = [], []
    self_counts = np.zeros(n_total)
    next_counts = np.zeros(n_total)
    total_ll = 0.0
    for feats, symbols in dataset:
        missing = [s for s in symbols if s not in inventory]
        if missing:
            raise KeyError(f"symbols not in inventory: {missing}")
        X = _frames(feats)
        path, ll = viterbi_align([inventory.unit(s) for s in symbols], X)
        total_ll += ll
        # chain state -> inventory-wide state index
        glob = np.concatenate([inventory.columns(s) for s in symbols])[path]
        stay = path[1:] == path[:-1]
        np.add.at(self_counts, glob[:-1][stay], 1)
        np.add.at(next_counts, glob[:-1][~stay], 1)
        xs.append(X)
        gs.append(glob)
    X_all = np.vstack(xs) if xs else np.zeros((0, inventory.feature_dim))
    g_all = np.concatenate(gs) if gs else np.zeros(0, dtype=np.int64)

    new_units = []
    floor = inventory.variance_floor
    for ui, old in enumerate(inventory.units):
        u = old.copy()
        for s in range(u.n_states):
            g = offsets[ui] + s
            F = X_all[g_all == g]
            if len(F) == 0:
                logger.debug("%s state %d received no frames; keeping parameters", u.symbol, s)
                continue
            lc = mixture_log_components(F, u.weights[s], u.means[s], u.variances[s])
            resp = np.exp(lc - logsumexp(lc, axis=1, keepdims=True))
            w, m, v, _ = m_step(F, resp, u.means[s], u.variances[s], floor)
            w = np.maximum(w, 1e-8)
            u.weights[s] = w / w.sum()
            u.means[s] = m
            u.variances[s] = v
            n_tot = self_counts[g] + next_counts[g]
            if n_tot > 0:
                p = self_counts[g] / n_tot
                u.self_loop[s] = min(max(p, TRANSITION_FLOOR), 1.0 - TRANSITION_FLOOR)
        new_units.append(u)
    new_inv = AUInventory(new_units, dict(inventory.cluster_map), inventory.feature_dim,
                          inventory.variance_floor.copy())
    stats = {"log_likelihood_before": total_ll, "n_frames": len(X_all)}
    if return_stats:
        stats["log_likelihood_after"] = total_log_likelihood(new_inv, dataset)
    if n_mixtures is not None:
        new_inv = split_to(new_inv, n_mixtures)
    return (new_inv, stats) if return_stats else new_inv


def split_unit(u: AcousticUnitHMM) -> AcousticUnitHMM:
    S, C, D = u.means.shape
    w = np.empty((S, 2 * C))
    m = np.empty((S, 2 * C, D))
    v = np.empty((S, 2 * C, D))
    for s in range(S):
        w[s], m[s], v[s] = split_components(u.weights[s], u.means[s], u.variances[s])
    return AcousticUnitHMM(u.symbol, u.self_loop.copy(), w, m, v)


def split_to(inventory: AUInventory, n_mixtures: int) -> AUInventory:
    """Split every unit's mixtures (doubling) until each has at least ``n_mixtures``."""
    units = []
    for u in inventory.units:
        while u.n_mixtures < n_mixtures:
            u = split_unit(u)
        units.append(u)
    return AUInventory(units, dict(inventory.cluster_map), inventory.feature_dim,
                       inventory.variance_floor.copy())


# ---------------------------------------------------------------------------
# Self-training
# ---------------------------------------------------------------------------

def _label_change(prev: list[Transcription], cur: list[Transcription]) -> float:
    return 1.0 - label_stability(prev, cur)


def self_train(inventory: AUInventory, corpus, stage: str = "stage1_syllables",
               cfg: SelfTrainConfig | None = None):
    """Alternate transcription and Viterbi training until labels settle.

    ``corpus`` is a list of ``(utterance_id, features)``. Stage 1 decodes
    syllables with the cluster-triplet grammar, stage 2 decodes continuous
    speech with the free loop. Stops when the fraction of frames whose label
    changed drops below ``label_change_tol``, after ``max_iters`` training
    passes, or when the change fraction fails to decrease three times in a
    row.

    Returns the final inventory, the transcriptions it produces, and a
    :class:`ConvergenceReport`.
    """
    cfg = cfg or SelfTrainConfig()
    if stage == "stage1_syllables":
        grammar = "cluster_triplet"
    elif stage == "stage2_continuous":
        grammar = "free_loop"
    else:
        raise ValueError(f"unknown stage {stage!r}")
    report = ConvergenceReport(stage)
    inv = inventory
    prev = None
    prev_change = None
    non_decreasing = 0

    def decode(model):
        return [transcribe(model, f, grammar, uid, cfg.insertion_penalty) for uid, f in corpus]

    trans = decode(inv)
    for it in range(cfg.max_iters):
        if prev is not None:
            change = _label_change(prev, trans)
            report.iterations[-1]["label_change"] = change
            if change < cfg.label_change_tol:
                report.converged = True
                break
            if prev_change is not None and change >= prev_change:
                non_decreasing += 1
                if non_decreasing >= 3:
                    report.oscillating = True
                    logger.warning("%s: label change not decreasing, stopping", stage)
                    break
            else:
                non_decreasing = 0
            prev_change = change
        dataset = [(f, t.symbols) for (_, f), t in zip(corpus, trans)]
        inv, stats = train_iteration(inv, dataset, cfg.mixtures_at(it + 1), return_stats=True)
        report.n_passes += 1
        report.iterations.append({
            "iteration": it + 1,
            "log_likelihood_before": stats["log_likelihood_before"],
            "log_likelihood_after": stats["log_likelihood_after"],
            "n_frames": stats["n_frames"],
            "n_mixtures": inv.units[0].n_mixtures,
            "label_change": None,
        })
        prev = trans
        trans = decode(inv)
    else:
        change = _label_change(prev, trans)
        report.iterations[-1]["label_change"] = change
        report.converged = change < cfg.label_change_tol
    last = report.iterations[-1]["label_change"] if report.iterations else 0.0
    report.final_stability = 1.0 - (last if last is not None else 0.0)
    return inv, trans, report


# ---------------------------------------------------------------------------
# Transcription files
# ---------------------------------------------------------------------------

def write_transcription(path, t: Transcription) -> None:
    Path(path).write_text(" ".join(t.symbols) + "\n", encoding="utf-8")


def read_transcription(path, utterance_id: str | None = None) -> Transcription:
    path = Path(path)
    syms = path.read_text(encoding="utf-8").split()
    return Transcription(path.stem if utterance_id is None else utterance_id, syms)


def write_alignment(path, t: Transcription) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for sym, (a, b) in zip(t.symbols, t.alignments or []):
            fh.write(f"{sym}\t{a}\t{b}\n")


def read_alignment(path, utterance_id: str | None = None) -> Transcription:
    path = Path(path)
    syms, al = [], []
    for line in path.read_text(encoding="utf-8").splitlines():
        if line.strip():
            s, a, b = line.split("\t")
            syms.append(s)
            al.append((int(a), int(b)))
    return Transcription(path.stem if utterance_id is None else utterance_id, syms, al)
