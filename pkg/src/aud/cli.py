"""Command-line entry point: ``aud <verb> ...``.

Verbs mirror the pipeline stages (segment, cluster, init, selftrain,
transcribe) plus ``gender``, ``eval``, ``run``, ``resynth`` and ``config``.
Errors are reported as ``aud: [stage] message`` with exit status 1.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .cluster import read_clusters
from .config import PipelineConfig, dump_config, load_config
from .features import FEATURE_FORMAT_VERSION, write_wav
from .gmm import GMM_SCHEMA, GMM_VERSION, GenderModelSet, classify_file, train_gender_models, vote_groups
from .hmm import INVENTORY_SCHEMA, INVENTORY_VERSION, AUInventory, read_alignment, read_transcription
from .metrics import bitrate, cluster_purity, label_stability, match_boundaries, prf
from .pipeline import (STAGES, Corpus, CorpusManifest, StageError, build_exemplar_store,
                       gender_features, load_run_transcriptions, partition_by_gender,
                       resynthesize_exemplar, run_pipeline, speaker_groups, stage_cluster,
                       stage_init, stage_segment, stage_selftrain1, stage_selftrain2,
                       stage_transcribe)
from .segment import read_segments


def _version_text() -> str:
    return (f"aud {__version__}\n"
            f"{INVENTORY_SCHEMA} v{INVENTORY_VERSION}\n"
            f"{GMM_SCHEMA} v{GMM_VERSION}\n"
            f"AUDF matrix v{FEATURE_FORMAT_VERSION}")


def _config(args) -> PipelineConfig:
    return load_config(args.config) if getattr(args, "config", None) else PipelineConfig()


def _corpus(args, cfg) -> Corpus:
    return Corpus(CorpusManifest.load(args.manifest), cfg)


def _out_dir(path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _emit(args, result: dict, text: str) -> None:
    print(json.dumps(result, indent=1, sort_keys=True) if getattr(args, "json", False) else text)


# ---------------------------------------------------------------------------
# Verbs
# ---------------------------------------------------------------------------

def cmd_segment(args):
    cfg = _config(args)
    out = _out_dir(args.out)
    stage_segment(out, _corpus(args, cfg), cfg)
    print((out / "summary.txt").read_text(encoding="utf-8"), end="")


def cmd_cluster(args):
    cfg = _config(args)
    if args.k is not None:
        cfg.clustering.k = args.k
    if args.dump_similarity:
        cfg.clustering.dump_similarity = True
    stage_cluster(_out_dir(args.out), _corpus(args, cfg), cfg, Path(args.segments))


def cmd_init(args):
    cfg = _config(args)
    out = _out_dir(args.out)
    stage_init(out, _corpus(args, cfg), cfg, Path(args.segments), Path(args.clusters))
    print(out / "inventory.json")


def cmd_selftrain(args):
    cfg = _config(args)
    out = _out_dir(args.out)
    corpus = _corpus(args, cfg)
    if args.stage == 1:
        if not args.clusters:
            raise StageError("selftrain", "--clusters is required for stage 1")
        stage_selftrain1(out, corpus, cfg, Path(args.clusters), Path(args.inventory))
    else:
        stage_selftrain2(out, corpus, cfg, Path(args.inventory))
    report = json.loads((out / "report.json").read_text(encoding="utf-8"))
    print(f"{report['stage']}: passes={report['n_passes']} converged={report['converged']} "
          f"stability={report['final_stability']:.4f}")


def cmd_transcribe(args):
    cfg = _config(args)
    stage_transcribe(_out_dir(args.out), _corpus(args, cfg), cfg, Path(args.inventory), args.grammar)


def cmd_gender_train(args):
    cfg = _config(args)
    corpus = _corpus(args, cfg)
    g = cfg.gender
    frames = {"male": [], "female": []}
    for e in corpus.manifest:
        if e.group not in frames:
            raise StageError("gender", f"{e.utterance_id}: group must be male or female, got {e.group!r}")
        frames[e.group].append(gender_features(corpus.audio(e.utterance_id), g))
    if not frames["male"] or not frames["female"]:
        raise StageError("gender", "training needs both male and female files")
    models = train_gender_models(np.vstack(frames["male"]), np.vstack(frames["female"]),
                                 g.n_components, g.relevance, g.em_iters, cfg.run.seed)
    models.feature_config = {k: getattr(g, k) for k in ("frame_len", "hop", "pre_emphasis",
                                                        "n_mels", "n_ceps")}
    models.save(args.out)
    print(args.out)


def cmd_gender_classify(args):
    cfg = _config(args)
    corpus = _corpus(args, cfg)
    models = GenderModelSet.load(args.models)
    decisions = [classify_file(models, gender_features(corpus.audio(u), cfg.gender), u)
                 for u in corpus.manifest.ids]
    groups = speaker_groups(corpus.manifest)
    votes = vote_groups(decisions, groups)
    labels = {d.file_id: d.label for d in decisions}
    if args.vote:
        labels = {u: votes[groups[u]] for u in labels}
    n_files = {}
    for g in groups.values():
        n_files[g] = n_files.get(g, 0) + 1
    lines = [f"{d.file_id}\t{d.llr!r}\t{d.label}" for d in decisions]
    lines += ["", "# speaker\tvote\tfiles"]
    lines += [f"{spk}\t{label}\t{n_files[spk]}" for spk, label in votes.items()]
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        print(text, end="")
    if args.partition:
        out = _out_dir(args.partition)
        male, female = partition_by_gender(corpus.manifest, labels)
        male.write(out / "manifest_male.tsv")
        female.write(out / "manifest_female.tsv")


def _read_dir(path: Path, reader, suffix: str) -> dict:
    files = sorted(p for p in Path(path).iterdir() if p.suffix == suffix)
    if not files:
        raise StageError("eval", f"no *{suffix} files in {path}")
    return {p.stem: reader(p) for p in files}


def cmd_eval(args):
    if args.metric == "bitrate":
        trans = _read_dir(args.transcriptions, read_transcription, ".txt")
        if args.duration is not None:
            total = args.duration
        elif args.manifest:
            corpus = Corpus(CorpusManifest.load(args.manifest), PipelineConfig())
            total = sum(corpus.audio(u).duration for u in trans)
        else:
            raise StageError("eval", "bitrate needs --duration or --manifest")
        rep = bitrate(list(trans.values()), total, tuple(args.exclude))
        _emit(args, rep.to_dict(), rep.text().rstrip("\n"))
    elif args.metric == "boundaries":
        hyp = _read_dir(args.hyp, read_segments, ".tsv")
        ref = _read_dir(args.ref, read_segments, ".tsv")
        common = sorted(set(hyp) & set(ref))
        if not common:
            raise StageError("eval", "hypothesis and reference share no utterances")
        # pool matches over utterances
        hits = nh = nr = 0
        for u in common:
            h, a, b = match_boundaries(hyp[u], ref[u], args.tolerance)
            hits, nh, nr = hits + h, nh + a, nr + b
        precision, recall, f1 = prf(hits, nh, nr)
        res = {"precision": precision, "recall": recall, "f1": f1, "utterances": len(common)}
        _emit(args, res, f"precision\t{precision:.4f}\nrecall\t{recall:.4f}\nf1\t{f1:.4f}")
    elif args.metric == "purity":
        ids, labels = read_clusters(args.clusters)
        truth = {}
        for line in Path(args.truth).read_text(encoding="utf-8").splitlines():
            if line.strip():
                sid, lab = line.split("\t")[:2]
                truth[sid] = lab
        missing = [s for s in ids if s not in truth]
        if missing:
            raise StageError("eval", f"no truth label for {len(missing)} segments, e.g. {missing[0]}")
        purity = cluster_purity(labels, [truth[s] for s in ids])
        _emit(args, {"purity": purity}, f"purity\t{purity:.4f}")
    elif args.metric == "stability":
        a = _read_dir(args.a, read_alignment, ".tsv")
        b = _read_dir(args.b, read_alignment, ".tsv")
        if set(a) != set(b):
            raise StageError("eval", "alignment directories cover different utterances")
        keys = sorted(a)
        stab = label_stability([a[k] for k in keys], [b[k] for k in keys])
        _emit(args, {"stability": stab}, f"stability\t{stab:.4f}")


def cmd_run(args):
    cfg = _config(args)
    if args.seed is not None:
        cfg.run.seed = args.seed
    res = run_pipeline(CorpusManifest.load(args.manifest), cfg, args.out, args.stop_after)
    for s in res.executed:
        print(f"{s}\tran")
    for s in res.skipped:
        print(f"{s}\tskipped")
    if (res.run_dir / "07_eval" / "report.txt").is_file():
        print((res.run_dir / "07_eval" / "report.txt").read_text(encoding="utf-8"), end="")


def cmd_resynth(args):
    run = Path(args.run)
    manifest = CorpusManifest.load(run / "manifest.tsv")
    cfg = load_config(run / "config.ini")
    corpus = Corpus(manifest, cfg)
    inv = AUInventory.load(run / "05_stage2" / "inventory.json")
    store = build_exemplar_store(corpus, load_run_transcriptions(run, manifest.ids))
    if args.transcription:
        trans = read_transcription(args.transcription)
    elif args.utt:
        if args.utt not in manifest.ids:
            raise StageError("resynth", f"unknown utterance {args.utt!r}")
        trans = read_transcription(run / "06_transcribe" / "transcriptions" / f"{args.utt}.txt")
    else:
        raise StageError("resynth", "give --utt or --transcription")
    audio = resynthesize_exemplar(trans, inv, store, cfg.run.crossfade_ms)
    write_wav(args.out, audio)
    print(f"{args.out}\t{audio.duration:.3f}s")


def cmd_config(args):
    print(dump_config(_config(args)), end="")


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="aud", description="acoustic unit discovery toolkit",
                                 formatter_class=argparse.RawTextHelpFormatter)
    ap.add_argument("--version", action="version", version=_version_text())
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="verb", required=True)

    def verb(name, func, help_, manifest=True):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", help="INI configuration file")
        if manifest:
            p.add_argument("--manifest", required=True, help="corpus manifest (TSV)")
        p.set_defaults(func=func)
        return p

    p = verb("segment", cmd_segment, "syllable-like segmentation")
    p.add_argument("--out", required=True)

    p = verb("cluster", cmd_cluster, "DTW similarity and mutual-KNN clustering")
    p.add_argument("--segments", required=True, help="output directory of `aud segment`")
    p.add_argument("--out", required=True)
    p.add_argument("--k", type=int, help="fixed neighbourhood size (default: automatic)")
    p.add_argument("--dump-similarity", action="store_true")

    p = verb("init", cmd_init, "flat-start unit inventory from clusters")
    p.add_argument("--segments", required=True)
    p.add_argument("--clusters", required=True, help="output directory of `aud cluster`")
    p.add_argument("--out", required=True)

    p = verb("selftrain", cmd_selftrain, "self-training (1: syllables, 2: continuous)")
    p.add_argument("--stage", type=int, choices=(1, 2), required=True)
    p.add_argument("--inventory", required=True)
    p.add_argument("--clusters", help="output directory of `aud cluster` (stage 1)")
    p.add_argument("--out", required=True)

    p = verb("transcribe", cmd_transcribe, "decode utterances into unit symbols")
    p.add_argument("--inventory", required=True)
    p.add_argument("--grammar", choices=("free_loop", "cluster_triplet"), default="free_loop")
    p.add_argument("--out", required=True)

    g = sub.add_parser("gender", help="GMM-UBM gender identification")
    gsub = g.add_subparsers(dest="action", required=True)
    p = gsub.add_parser("train", help="train UBM and adapted models (group column = gender)")
    p.add_argument("--config")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="model JSON file")
    p.set_defaults(func=cmd_gender_train)
    p = gsub.add_parser("classify", help="label files by likelihood ratio")
    p.add_argument("--config")
    p.add_argument("--manifest", required=True)
    p.add_argument("--models", required=True)
    p.add_argument("--vote", action="store_true", help="partition by the speaker vote instead of file labels")
    p.add_argument("--out", help="decisions TSV (default stdout)")
    p.add_argument("--partition", help="write manifest_male.tsv / manifest_female.tsv here")
    p.set_defaults(func=cmd_gender_classify)

    e = sub.add_parser("eval", help="evaluation metrics")
    esub = e.add_subparsers(dest="metric", required=True)
    p = esub.add_parser("bitrate")
    p.add_argument("--transcriptions", required=True)
    p.add_argument("--duration", type=float, help="total seconds (else read from --manifest)")
    p.add_argument("--manifest")
    p.add_argument("--exclude", nargs="*", default=[])
    p = esub.add_parser("boundaries")
    p.add_argument("--hyp", required=True)
    p.add_argument("--ref", required=True)
    p.add_argument("--tolerance", type=float, default=30.0, help="ms")
    p = esub.add_parser("purity")
    p.add_argument("--clusters", required=True, help="clusters.tsv")
    p.add_argument("--truth", required=True, help="TSV of segment id and class")
    p = esub.add_parser("stability")
    p.add_argument("--a", required=True, help="alignment directory")
    p.add_argument("--b", required=True, help="alignment directory")
    for p in esub.choices.values():
        p.add_argument("--json", action="store_true")
    e.set_defaults(func=cmd_eval)

    p = verb("run", cmd_run, "run every stage (resumable)")
    p.add_argument("--out", required=True, help="run directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--stop-after", choices=STAGES)

    p = verb("resynth", cmd_resynth, "exemplar resynthesis of a transcription", manifest=False)
    p.add_argument("--run", required=True, help="completed run directory")
    p.add_argument("--utt", help="utterance id to resynthesise")
    p.add_argument("--transcription", help="transcription file to resynthesise")
    p.add_argument("--out", required=True, help="output WAV")

    verb("config", cmd_config, "print the effective configuration", manifest=False)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except StageError as exc:
        print(f"aud: {exc}", file=sys.stderr)
        return 1
    except (ValueError, KeyError, OSError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"aud: [{args.verb}] {type(exc).__name__}: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
