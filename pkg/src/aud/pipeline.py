"""Corpus manifests and end-to-end orchestration.

A run directory holds one sub-directory per stage::

    01_segment/    segments/<utt>.tsv, durations.tsv, summary.txt
    02_cluster/    segments.tsv, clusters.tsv
    03_init/       inventory.json
    04_stage1/     inventory.json, report.json
    05_stage2/     inventory.json, report.json
    06_transcribe/ transcriptions/<utt>.txt, alignments/<utt>.tsv
    07_eval/       bitrate.json, report.txt

Each completed stage writes ``done.json`` with a hash of its inputs and
the checksum of every output. On a rerun a stage is skipped when both
still match, so deleting a stage directory re-executes that stage only
(and anything whose inputs it changed).
"""
from __future__ import annotations

import hashlib
import json
import logging
import os
import shutil
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .cluster import build_similarity_matrix, knn_graph_cluster, select_k, write_clusters, read_clusters
from .cluster import ClusterAssignment
from .config import PipelineConfig, dump_config, section_dict
from .features import AudioBuffer, FeatureSequence, aud_features, load_wav, mfcc, write_matrix
from .gmm import FEMALE, MALE
from .hmm import (AUInventory, Transcription, init_inventory, read_alignment, self_train,
                  transcribe, write_alignment, write_transcription)
from .metrics import bitrate
from .segment import Segment, read_segments, segment_syllables, summary_report, write_segments

logger = logging.getLogger(__name__)

STAGES = ["01_segment", "02_cluster", "03_init", "04_stage1", "05_stage2", "06_transcribe", "07_eval"]
DONE_FILE = "done.json"
LOCK_FILE = "run.lock"


class ManifestError(ValueError):
    pass


class StageError(RuntimeError):
    """A pipeline failure tagged with the stage that raised it."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


# ---------------------------------------------------------------------------
# Manifest
# ---------------------------------------------------------------------------

@dataclass
class ManifestEntry:
    utterance_id: str
    path: Path
    speaker: str = ""
    group: str = ""


@dataclass
class CorpusManifest:
    """Utterance list; relative paths are resolved against ``root``."""

    entries: list[ManifestEntry]
    root: Path = field(default_factory=Path.cwd)

    def __post_init__(self):
        ids = [e.utterance_id for e in self.entries]
        dup = sorted({i for i in ids if ids.count(i) > 1})
        if dup:
            raise ManifestError(f"duplicate utterance ids: {', '.join(dup)}")
        bad = [i for i in ids if not i or any(c in i for c in "/\\\t ") or i.startswith(".")]
        if bad:
            raise ManifestError(f"utterance ids unusable as file names: {', '.join(bad)}")

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    @property
    def ids(self) -> list[str]:
        return [e.utterance_id for e in self.entries]

    def resolve(self, entry: ManifestEntry) -> Path:
        return entry.path if entry.path.is_absolute() else self.root / entry.path

    def check_paths(self) -> None:
        missing = [e.utterance_id for e in self.entries if not self.resolve(e).is_file()]
        if missing:
            raise ManifestError(f"audio not found for: {', '.join(missing)}")

    def subset(self, ids) -> "CorpusManifest":
        keep = set(ids)
        return CorpusManifest([e for e in self.entries if e.utterance_id in keep], self.root)

    @classmethod
    def load(cls, path, check: bool = True) -> "CorpusManifest":
        """Read ``utt_id<TAB>path<TAB>speaker<TAB>group`` lines (``#`` starts a comment)."""
        path = Path(path)
        entries = []
        for n, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            cols = line.split("\t")
            if len(cols) < 2:
                raise ManifestError(f"{path}:{n}: expected at least utt_id and path")
            cols += [""] * (4 - len(cols))
            entries.append(ManifestEntry(cols[0].strip(), Path(cols[1].strip()),
                                         cols[2].strip(), cols[3].strip()))
        manifest = cls(entries, path.parent.resolve())
        if check:
            manifest.check_paths()
        return manifest

    def write(self, path) -> None:
        path = Path(path)
        base = path.parent.resolve()
        with open(path, "w", encoding="utf-8") as fh:
            for e in self.entries:
                p = self.resolve(e).resolve()
                try:
                    p = p.relative_to(base)
                except ValueError:
                    pass
                fh.write(f"{e.utterance_id}\t{p.as_posix()}\t{e.speaker}\t{e.group}\n")


def partition_by_gender(manifest: CorpusManifest, decisions):
    """Split a manifest into (male, female) manifests.

    ``decisions`` maps utterance id to ``"male"``/``"female"`` or is a list
    of :class:`GenderDecision`.
    """
    if not isinstance(decisions, dict):
        decisions = {d.file_id: d.label for d in decisions}
    missing = [u for u in manifest.ids if u not in decisions]
    if missing:
        raise ManifestError(f"no gender decision for: {', '.join(missing)}")
    bad = sorted({v for v in decisions.values() if v not in (MALE, FEMALE)})
    if bad:
        raise ManifestError(f"unknown gender labels: {', '.join(bad)}")
    male = [u for u in manifest.ids if decisions[u] == MALE]
    female = [u for u in manifest.ids if decisions[u] == FEMALE]
    return manifest.subset(male), manifest.subset(female)


# ---------------------------------------------------------------------------
# Corpus access
# ---------------------------------------------------------------------------

class Corpus:
    """Lazy audio and feature access for a manifest; nothing is cached on disk."""

    def __init__(self, manifest: CorpusManifest, cfg: PipelineConfig):
        self.manifest = manifest
        self.cfg = cfg
        self._audio: dict[str, AudioBuffer] = {}
        self._feats: dict[str, FeatureSequence] = {}

    def audio(self, uid: str) -> AudioBuffer:
        if uid not in self._audio:
            entry = self.manifest.entries[self.manifest.ids.index(uid)]
            self._audio[uid] = load_wav(self.manifest.resolve(entry), self.cfg.features.downmix, uid)
        return self._audio[uid]

    def features(self, uid: str) -> FeatureSequence:
        if uid not in self._feats:
            f = self.cfg.features
            seq = aud_features(self.audio(uid), f.frame_config(), f.n_mels, f.n_ceps, f.deltas, f.cms)
            seq.meta["utterance_id"] = uid
            self._feats[uid] = seq
        return self._feats[uid]


# ---------------------------------------------------------------------------
# Checksums and stage bookkeeping
# ---------------------------------------------------------------------------

def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _hash_obj(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True, default=str).encode()).hexdigest()


def _outputs_of(stage_dir: Path) -> dict[str, str]:
    out = {}
    for p in sorted(stage_dir.rglob("*")):
        if p.is_file() and p.name not in (DONE_FILE, "log.txt"):
            out[p.relative_to(stage_dir).as_posix()] = file_sha256(p)
    return out


def stage_complete(stage_dir: Path, inputs_hash: str) -> bool:
    done = stage_dir / DONE_FILE
    if not done.is_file():
        return False
    try:
        record = json.loads(done.read_text(encoding="utf-8"))
    except json.JSONDecodeError:
        return False
    if record.get("inputs") != inputs_hash:
        return False
    outputs = record.get("outputs", {})
    for rel, digest in outputs.items():
        p = stage_dir / rel
        if not p.is_file() or file_sha256(p) != digest:
            return False
    return True


def _stage_digest(stage_dir: Path) -> str:
    record = json.loads((stage_dir / DONE_FILE).read_text(encoding="utf-8"))
    return _hash_obj(record["outputs"])


class _StageLog:
    """Route package log records into ``<stage>/log.txt`` while a stage runs."""

    def __init__(self, path: Path):
        self.handler = logging.FileHandler(path, encoding="utf-8")
        self.handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
        self.logger = logging.getLogger("aud")

    def __enter__(self):
        self.old_level = self.logger.level
        if self.logger.getEffectiveLevel() > logging.INFO:
            self.logger.setLevel(logging.INFO)
        self.logger.addHandler(self.handler)
        return self

    def __exit__(self, *exc):
        self.logger.removeHandler(self.handler)
        self.logger.setLevel(self.old_level)
        self.handler.close()


class RunLock:
    """Exclusive lock on a run directory (``run.lock`` created with O_EXCL)."""

    def __init__(self, run_dir: Path):
        self.path = Path(run_dir) / LOCK_FILE

    def __enter__(self):
        try:
            fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise StageError("run", f"{self.path} exists; another run owns this directory "
                                    "(remove the lock if that run died)") from None
        with os.fdopen(fd, "w") as fh:
            fh.write(f"{os.getpid()}\n")
        return self

    def __exit__(self, *exc):
        self.path.unlink(missing_ok=True)


# ---------------------------------------------------------------------------
# Stage bodies
# ---------------------------------------------------------------------------

def segment_id(uid: str, index: int) -> str:
    return f"{uid}:{index:03d}"


def _read_segment_index(path: Path) -> list[tuple[str, Segment]]:
    out = []
    for line in path.read_text(encoding="utf-8").splitlines():
        if line.strip():
            sid, uid, a, b, kind = line.split("\t")
            out.append((sid, Segment(uid, float(a), float(b), kind)))
    return out


def _load_all_segments(seg_dir: Path, ids) -> dict[str, list[Segment]]:
    return {uid: read_segments(seg_dir / "segments" / f"{uid}.tsv", uid) for uid in ids}


def stage_segment(out: Path, corpus: Corpus, cfg: PipelineConfig) -> None:
    (out / "segments").mkdir(parents=True, exist_ok=True)
    fcfg = cfg.features.frame_config()
    all_segs = {}
    rates = set()
    with open(out / "durations.tsv", "w", encoding="utf-8") as dur:
        for uid in corpus.manifest.ids:
            audio = corpus.audio(uid)
            rates.add(audio.sample_rate)
            segs = segment_syllables(audio, fcfg, cfg.segmenter)
            write_segments(out / "segments" / f"{uid}.tsv", segs)
            dur.write(f"{uid}\t{audio.duration!r}\n")
            all_segs[uid] = segs
    if len(rates) > 1:
        raise ValueError(f"mixed sample rates in corpus: {sorted(rates)}")
    (out / "summary.txt").write_text(summary_report(all_segs), encoding="utf-8")


def _syllables(segs_by_utt):
    for uid, segs in segs_by_utt.items():
        for i, s in enumerate(segs):
            if s.kind == "syllable":
                yield segment_id(uid, i), s


def stage_cluster(out: Path, corpus: Corpus, cfg: PipelineConfig, seg_dir: Path) -> None:
    segs = _load_all_segments(seg_dir, corpus.manifest.ids)
    items = list(_syllables(segs))
    if len(items) < 2:
        raise ValueError(f"only {len(items)} syllable segments; need at least 2")
    with open(out / "segments.tsv", "w", encoding="utf-8") as fh:
        for sid, s in items:
            fh.write(f"{sid}\t{s.utterance_id}\t{s.start!r}\t{s.end!r}\t{s.kind}\n")
    feats = [corpus.features(s.utterance_id).select(s.start, s.end) for _, s in items]
    cc = cfg.clustering
    sim = build_similarity_matrix(feats, cfg.dtw, cc.n_jobs, [sid for sid, _ in items])
    if cc.dump_similarity:
        write_matrix(out / "similarity.audf", sim.values)
    if cc.k > 0:
        asg = knn_graph_cluster(sim, min(cc.k, sim.n - 1), cc.min_cluster_size)
    else:
        asg = select_k(sim, (cc.target_min, cc.target_max), cc.min_cluster_size, cc.k_max)
    if asg.n_clusters == 0:
        raise ValueError(f"no cluster reaches min_cluster_size={cc.min_cluster_size}")
    write_clusters(out / "clusters.tsv", asg)
    info = {"k": asg.k_neighbors, "n_clusters": asg.n_clusters, "sigma": sim.sigma,
            "n_segments": sim.n, "n_unassigned": int(np.sum(asg.labels < 0))}
    (out / "clustering.json").write_text(json.dumps(info, indent=1, sort_keys=True) + "\n",
                                         encoding="utf-8")
    logger.info("clustering: %s", info)


def _segment_features(corpus: Corpus, items):
    return [corpus.features(s.utterance_id).select(s.start, s.end) for _, s in items]


def stage_init(out: Path, corpus: Corpus, cfg: PipelineConfig, seg_dir: Path, cl_dir: Path) -> None:
    items = _read_segment_index(cl_dir / "segments.tsv")
    ids, labels = read_clusters(cl_dir / "clusters.tsv")
    if ids != [sid for sid, _ in items]:
        raise ValueError("clusters.tsv does not match segments.tsv")
    n_clusters = int(labels.max()) + 1 if np.any(labels >= 0) else 0
    asg = ClusterAssignment(labels, 0, n_clusters, ids)
    sil = []
    for uid, segs in _load_all_segments(seg_dir, corpus.manifest.ids).items():
        for s in segs:
            if s.kind == "silence":
                sil.append(corpus.features(uid).select(s.start, s.end).frames)
    ic = cfg.init
    inv = init_inventory(asg, _segment_features(corpus, items), np.vstack(sil) if sil else None,
                         ic.variance_floor, ic.offset_scale, ic.unit_self_loop, ic.silence_self_loop)
    inv.save(out / "inventory.json")


def _write_report(path: Path, report) -> None:
    path.write_text(json.dumps(report.to_dict(), indent=1, sort_keys=True) + "\n", encoding="utf-8")


def stage_selftrain1(out: Path, corpus: Corpus, cfg: PipelineConfig, cl_dir: Path, inventory: Path):
    items = _read_segment_index(cl_dir / "segments.tsv")
    train = list(zip([sid for sid, _ in items], _segment_features(corpus, items)))
    inv = AUInventory.load(inventory)
    inv, _, report = self_train(inv, train, "stage1_syllables", cfg.stage1)
    inv.save(out / "inventory.json")
    _write_report(out / "report.json", report)


def stage_selftrain2(out: Path, corpus: Corpus, cfg: PipelineConfig, inventory: Path):
    train = [(uid, corpus.features(uid)) for uid in corpus.manifest.ids]
    inv = AUInventory.load(inventory)
    inv, _, report = self_train(inv, train, "stage2_continuous", cfg.stage2)
    inv.save(out / "inventory.json")
    _write_report(out / "report.json", report)


def stage_transcribe(out: Path, corpus: Corpus, cfg: PipelineConfig, inventory: Path,
                     grammar: str = "free_loop"):
    (out / "transcriptions").mkdir(parents=True, exist_ok=True)
    (out / "alignments").mkdir(exist_ok=True)
    inv = AUInventory.load(inventory)
    for uid in corpus.manifest.ids:
        t = transcribe(inv, corpus.features(uid), grammar, uid, cfg.stage2.insertion_penalty)
        write_transcription(out / "transcriptions" / f"{uid}.txt", t)
        write_alignment(out / "alignments" / f"{uid}.tsv", t)


def read_durations(path: Path) -> dict[str, float]:
    out = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            uid, d = line.split("\t")
            out[uid] = float(d)
    return out


def stage_eval(out: Path, corpus: Corpus, cfg: PipelineConfig, seg_dir: Path, tr_dir: Path,
                s1_dir: Path, s2_dir: Path):
    durations = read_durations(seg_dir / "durations.tsv")
    trans = [read_alignment(tr_dir / "alignments" / f"{uid}.tsv", uid) for uid in corpus.manifest.ids]
    exclude = ("SIL",) if cfg.eval.exclude_silence else ()
    rep = bitrate(trans, sum(durations.values()), exclude)
    (out / "bitrate.json").write_text(json.dumps(rep.to_dict(), indent=1, sort_keys=True) + "\n",
                                      encoding="utf-8")
    lines = [rep.text().rstrip("\n")]
    for d in (s1_dir, s2_dir):
        r = json.loads((d / "report.json").read_text(encoding="utf-8"))
        lines.append(f"{r['stage']}\tpasses={r['n_passes']}\tconverged={r['converged']}"
                     f"\tstability={r['final_stability']:.4f}")
    (out / "report.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# Driver
# ---------------------------------------------------------------------------

@dataclass
class RunResult:
    run_dir: Path
    executed: list[str]
    skipped: list[str]

    @property
    def bitrate(self) -> dict:
        return json.loads((self.run_dir / "07_eval" / "bitrate.json").read_text(encoding="utf-8"))


def _audio_digest(manifest: CorpusManifest) -> str:
    rows = [(e.utterance_id, file_sha256(manifest.resolve(e))) for e in manifest.entries]
    return _hash_obj(rows)


def run_pipeline(manifest: CorpusManifest, cfg: PipelineConfig, run_dir,
                 stop_after: str | None = None) -> RunResult:
    """Run all stages into ``run_dir``, skipping stages whose artifacts are current."""
    if len(manifest) < 2:
        raise StageError("run", "the manifest needs at least 2 utterances")
    if stop_after is not None and stop_after not in STAGES:
        raise StageError("run", f"unknown stage {stop_after!r}")
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    executed, skipped = [], []
    with RunLock(run_dir):
        try:
            manifest.check_paths()
        except ManifestError as exc:
            raise StageError("run", str(exc)) from exc
        (run_dir / "config.ini").write_text(dump_config(cfg), encoding="utf-8")
        manifest.write(run_dir / "manifest.tsv")
        corpus = Corpus(manifest, cfg)
        d = {name: run_dir / name for name in STAGES}

        def cfg_of(*sections):
            return {s: section_dict(getattr(cfg, s)) for s in sections}

        plan = [
            ("01_segment", cfg_of("features", "segmenter"), [],
             lambda out: stage_segment(out, corpus, cfg)),
            ("02_cluster", cfg_of("features", "dtw", "clustering"), ["01_segment"],
             lambda out: stage_cluster(out, corpus, cfg, d["01_segment"])),
            ("03_init", cfg_of("features", "init"), ["01_segment", "02_cluster"],
             lambda out: stage_init(out, corpus, cfg, d["01_segment"], d["02_cluster"])),
            ("04_stage1", cfg_of("features", "stage1"), ["01_segment", "02_cluster", "03_init"],
             lambda out: stage_selftrain1(out, corpus, cfg, d["02_cluster"],
                                          d["03_init"] / "inventory.json")),
            ("05_stage2", cfg_of("features", "stage2"), ["01_segment", "04_stage1"],
             lambda out: stage_selftrain2(out, corpus, cfg, d["04_stage1"] / "inventory.json")),
            ("06_transcribe", cfg_of("features", "stage2"), ["01_segment", "05_stage2"],
             lambda out: stage_transcribe(out, corpus, cfg, d["05_stage2"] / "inventory.json")),
            ("07_eval", cfg_of("eval"), ["01_segment", "04_stage1", "05_stage2", "06_transcribe"],
             lambda out: stage_eval(out, corpus, cfg, d["01_segment"], d["06_transcribe"],
                                     d["04_stage1"], d["05_stage2"])),
        ]
        audio_digest = None
        for name, conf, deps, body in plan:
            if name == "01_segment":
                audio_digest = _audio_digest(manifest)
            inputs = _hash_obj({
                "stage": name,
                "toolkit": __version__,
                "config": conf,
                "audio": audio_digest,
                "upstream": {dep: _stage_digest(d[dep]) for dep in deps},
            })
            out = d[name]
            if stage_complete(out, inputs):
                logger.info("%s: up to date, skipped", name)
                skipped.append(name)
            else:
                if out.exists():
                    shutil.rmtree(out)
                out.mkdir()
                logger.info("%s: running", name)
                with _StageLog(out / "log.txt"):
                    try:
                        body(out)
                    except StageError:
                        raise
                    except Exception as exc:
                        logger.error("%s failed: %s", name, exc)
                        raise StageError(name, f"{type(exc).__name__}: {exc}") from exc
                record = {"stage": name, "inputs": inputs, "outputs": _outputs_of(out)}
                (out / DONE_FILE).write_text(json.dumps(record, indent=1, sort_keys=True) + "\n",
                                             encoding="utf-8")
                executed.append(name)
            if name == stop_after:
                break
    return RunResult(run_dir, executed, skipped)


# ---------------------------------------------------------------------------
# Exemplar resynthesis
# ---------------------------------------------------------------------------

def build_exemplar_store(corpus: Corpus, transcriptions: list[Transcription],
                         max_candidates: int = 200) -> dict[str, AudioBuffer]:
    """Medoid audio snippet per symbol from aligned transcriptions.

    Each occurrence is summarised by its mean feature vector; the medoid is
    the occurrence with the smallest summed Euclidean distance to the
    others (first ``max_candidates`` occurrences in corpus order).
    """
    hop = corpus.cfg.features.hop / 1000.0
    occ: dict[str, list[tuple[str, int, int]]] = {}
    for t in transcriptions:
        if t.alignments is None:
            raise ValueError(f"{t.utterance_id}: alignments needed to build exemplars")
        for sym, (a, b) in zip(t.symbols, t.alignments):
            occ.setdefault(sym, []).append((t.utterance_id, a, b))
    store = {}
    for sym in sorted(occ):
        cands = occ[sym][:max_candidates]
        means = np.array([corpus.features(u).frames[a:b].mean(axis=0) for u, a, b in cands])
        dist = np.sqrt(((means[:, None, :] - means[None]) ** 2).sum(-1)).sum(axis=1)
        u, a, b = cands[int(np.argmin(dist))]
        store[sym] = corpus.audio(u).slice(a * hop, b * hop)
    return store


def resynthesize_exemplar(transcription, inventory: AUInventory | None,
                          store: dict[str, AudioBuffer], crossfade_ms: float = 5.0,
                          sample_rate: int | None = None) -> AudioBuffer:
    """Concatenate stored exemplars with a linear crossfade between neighbours.

    The output length is the summed exemplar length minus one crossfade per
    junction (shorter at a junction if an exemplar is shorter than the fade).
    """
    symbols = transcription.symbols if hasattr(transcription, "symbols") else list(transcription)
    uid = getattr(transcription, "utterance_id", "")
    if inventory is not None:
        unknown = sorted({s for s in symbols if s not in inventory})
        if unknown:
            raise KeyError(f"symbols not in inventory: {', '.join(unknown)}")
    missing = sorted({s for s in symbols if s not in store})
    if missing:
        raise KeyError(f"no exemplar stored for: {', '.join(missing)}")
    if not symbols:
        sr = sample_rate or next((b.sample_rate for b in store.values()), 16000)
        return AudioBuffer(np.zeros(0), sr, uid)
    rates = {store[s].sample_rate for s in symbols}
    if len(rates) > 1:
        raise ValueError(f"exemplars have mixed sample rates: {sorted(rates)}")
    sr = rates.pop()
    fade = int(round(crossfade_ms * sr / 1000.0))
    out = store[symbols[0]].samples.copy()
    for s in symbols[1:]:
        nxt = store[s].samples
        c = min(fade, len(out), len(nxt))
        if c > 0:
            ramp = np.linspace(0.0, 1.0, c)
            out[-c:] = out[-c:] * (1.0 - ramp) + nxt[:c] * ramp
        out = np.concatenate([out, nxt[c:]])
    return AudioBuffer(out, sr, uid)


def gender_features(audio: AudioBuffer, gcfg) -> np.ndarray:
    """Long-window cepstra used by the gender models (no deltas)."""
    return mfcc(audio, gcfg.frame_config(), gcfg.n_mels, gcfg.n_ceps).frames


def load_run_transcriptions(run_dir, ids) -> list[Transcription]:
    al = Path(run_dir) / "06_transcribe" / "alignments"
    return [read_alignment(al / f"{uid}.tsv", uid) for uid in ids]


def speaker_groups(manifest: CorpusManifest) -> dict[str, str]:
    """File id to speaker (falls back to the file id when no speaker is given)."""
    return {e.utterance_id: e.speaker or e.utterance_id for e in manifest}


__all__ = [
    "CorpusManifest", "ManifestEntry", "ManifestError", "StageError", "Corpus", "RunResult",
    "run_pipeline", "partition_by_gender", "build_exemplar_store", "resynthesize_exemplar",
    "load_run_transcriptions", "speaker_groups", "STAGES",
]
