import os
import shutil

import numpy as np
import pytest

from aud.config import PipelineConfig
from aud.pipeline import CorpusManifest, run_pipeline
from aud.synthetic import write_corpus

ACCEPTANCE = pytest.StashKey[dict]()


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")
    config.stash[ACCEPTANCE] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    num, title = marker.args
    results = item.config.stash[ACCEPTANCE]
    entry = results.setdefault((num, item.name), {"title": title, "ok": True, "detail": ""})
    if rep.failed or (rep.when == "call" and rep.skipped):
        entry["ok"] = False
    detail = [v for k, v in item.user_properties if k == "detail"]
    if detail:
        entry["detail"] = "; ".join(str(d) for d in detail)


def pytest_terminal_summary(terminalreporter, config):
    results = config.stash.get(ACCEPTANCE, {})
    if not results:
        return
    by_num: dict[int, list] = {}
    for (num, _), entry in results.items():
        by_num.setdefault(num, []).append(entry)
    terminalreporter.section("acceptance criteria")
    for num in sorted(by_num):
        entries = by_num[num]
        ok = all(e["ok"] for e in entries)
        detail = " | ".join(e["detail"] for e in entries if e["detail"])
        line = f"criterion {num:2d} {'PASS' if ok else 'FAIL'}  {entries[0]['title']}"
        terminalreporter.write_line(line + (f"  [{detail}]" if detail else ""))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def corpus_manifest(tmp_path_factory):
    """The 60-utterance, three-family synthetic corpus written to disk."""
    root = tmp_path_factory.mktemp("corpus")
    return write_corpus(root, n_utterances=60, seed=0)


@pytest.fixture(scope="session")
def completed_run(tmp_path_factory, corpus_manifest):
    """One full pipeline run over the synthetic corpus (shared, treat as read-only)."""
    run_dir = tmp_path_factory.mktemp("run") / "run"
    result = run_pipeline(CorpusManifest.load(corpus_manifest), PipelineConfig(), run_dir)
    return result


@pytest.fixture
def run_copy(tmp_path, completed_run):
    dst = tmp_path / "run"
    shutil.copytree(completed_run.run_dir, dst)
    lock = dst / "run.lock"
    if lock.exists():
        os.remove(lock)
    return dst
