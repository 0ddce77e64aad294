import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from aud.cluster import ClusterAssignment
from aud.features import FeatureSequence
from aud.hmm import (
    SIL, TRANSITION_FLOOR, AcousticUnitHMM, AUInventory, InfeasibleAlignmentError,
    SelfTrainConfig, Transcription, cluster_symbols, init_inventory, read_alignment, read_transcription, self_train, split_unit,
    train_iteration, transcribe, viterbi_align, write_alignment, write_transcription,
)

from oracles import brute_viterbi


def unit(symbol, means, var=1.0, self_loop=0.6):
    """Single-Gaussian unit with one state per row of ``means``."""
    means = np.atleast_2d(np.asarray(means, float))
    S, D = means.shape
    return AcousticUnitHMM(symbol, np.full(S, self_loop), np.ones((S, 1)),
                           means.reshape(S, 1, D), np.full((S, 1, D), var))


def planted_inventory(n_clusters=6, D=2, spacing=10.0, var=1.0):
    """Clusters on a line, states spaced within each cluster, SIL far away."""
    cmap = cluster_symbols(n_clusters)
    units = []
    for c in range(n_clusters):
        for p, sym in enumerate(cmap[c]):
            mu = np.zeros(D)
            mu[0] = c * spacing * 3 + p * spacing
            mu[1] = c
            units.append(unit(sym, np.tile(mu, (3, 1)) + np.arange(3)[:, None] * 3.0, var))
    units.append(unit(SIL, np.full((1, D), -50.0), var, self_loop=0.9))
    return AUInventory(units, cmap, D, np.full(D, 1e-3))


def sample_units(inv, symbols, frames_per_state, rng):
    out = []
    for s in symbols:
        u = inv.unit(s)
        for st_ in range(u.n_states):
            mu, var = u.means[st_, 0], u.variances[st_, 0]
            out.append(mu + np.sqrt(var) * rng.standard_normal((frames_per_state, len(mu))))
    return np.vstack(out)


def path_loglik(units, X, path):
    logb = np.hstack([u.state_loglik(X) for u in units])
    ls = np.concatenate([np.log(u.self_loop) for u in units])
    ln = np.concatenate([np.log1p(-u.self_loop) for u in units])
    total = logb[0, path[0]]
    for t in range(1, len(path)):
        total += (ls if path[t] == path[t - 1] else ln)[path[t - 1]] + logb[t, path[t]]
    return total


# ---------------------------------------------------------------------------
# Alignment
# ---------------------------------------------------------------------------

def test_one_state_closed_form(rng):
    X = rng.normal(size=(7, 3))
    mu, var = np.array([0.1, -0.2, 0.3]), np.array([0.5, 1.0, 2.0])
    u = AcousticUnitHMM("A", np.array([0.7]), np.ones((1, 1)), mu.reshape(1, 1, 3),
                        var.reshape(1, 1, 3))
    path, ll = viterbi_align(u, X)
    ref = sum(-0.5 * math.log(2 * math.pi * var[d]) - 0.5 * (X[t, d] - mu[d]) ** 2 / var[d]
              for t in range(7) for d in range(3))
    ref += 6 * math.log(0.7)
    assert path.tolist() == [0] * 7
    assert abs(ll - ref) < 1e-9


def test_two_unit_boundary(rng):
    a, b = unit("A", [[0.0]], 0.1), unit("B", [[10.0]], 0.1)
    X = np.concatenate([rng.normal(0, 0.1, 5), rng.normal(10, 0.1, 5)])[:, None]
    path, _ = viterbi_align([a, b], X)
    assert path.tolist() == [0] * 5 + [1] * 5


def test_too_short_chain_is_infeasible():
    with pytest.raises(InfeasibleAlignmentError):
        viterbi_align([unit("A", np.zeros((3, 1))), unit("B", np.zeros((3, 1)))], np.zeros((5, 1)))
    with pytest.raises(ValueError):
        viterbi_align([], np.zeros((5, 1)))


@pytest.mark.parametrize("quantized", [False, True])
def test_align_matches_exhaustive_oracle(rng, quantized):
    for _ in range(100):
        N = int(rng.integers(1, 5))
        T = int(rng.integers(N, 9))
        if quantized:
            logb = -rng.integers(0, 3, size=(T, N)) * 0.5
            p = np.full(N, 0.5)
        else:
            logb = rng.normal(size=(T, N))
            p = rng.uniform(0.1, 0.9, N)
        units = [AcousticUnitHMM("A", p, np.ones((N, 1)), np.zeros((N, 1, 1)), np.ones((N, 1, 1)))]
        path, ll = viterbi_align(units, np.zeros((T, 1)), logb)
        ref, ref_path = brute_viterbi(logb.tolist(), np.log(p).tolist(), np.log1p(-p).tolist())
        assert ll == ref
        assert path.tolist() == ref_path


def test_tie_break_prefers_earlier_transition():
    logb = np.zeros((4, 2))
    u = AcousticUnitHMM("A", np.array([0.5, 0.5]), np.ones((2, 1)), np.zeros((2, 1, 1)),
                        np.ones((2, 1, 1)))
    path, _ = viterbi_align(u, np.zeros((4, 1)), logb)
    assert path.tolist() == [0, 1, 1, 1]


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31))
def test_viterbi_dominates_random_paths(seed):
    r = np.random.default_rng(seed)
    units = [unit("A", r.normal(size=(3, 2))), unit("B", r.normal(size=(3, 2)))]
    T = int(r.integers(6, 15))
    X = r.normal(size=(T, 2))
    _, best = viterbi_align(units, X)
    for _ in range(20):
        # choose 5 advance times among T-1 gaps
        adv = np.sort(r.choice(np.arange(1, T), 5, replace=False))
        path = np.searchsorted(adv, np.arange(T), side="right")
        assert best >= path_loglik(units, X, path) - 1e-9


# ---------------------------------------------------------------------------
# Initialisation
# ---------------------------------------------------------------------------

def test_constant_cluster_gives_mean_and_floor(rng):
    v = np.array([1.5, -2.0, 0.25])
    feats = [np.tile(v, (int(rng.integers(6, 12)), 1)) for _ in range(4)]
    feats += [rng.normal(size=(9, 3)) for _ in range(4)]
    asg = ClusterAssignment(np.array([0, 0, 0, 0, 1, 1, 1, 1]), 2, 2)
    inv = init_inventory(asg, feats)
    for sym in inv.cluster_map[0]:
        u = inv.unit(sym)
        np.testing.assert_array_equal(u.means[:, 0], np.tile(v, (3, 1)))
        np.testing.assert_array_equal(u.variances[:, 0], np.tile(inv.variance_floor, (3, 1)))


def test_disjoint_clusters_separate_steady_means(rng):
    feats = [rng.uniform(0, 1, (12, 2)) for _ in range(5)] + [rng.uniform(5, 6, (12, 2)) for _ in range(5)]
    asg = ClusterAssignment(np.array([0] * 5 + [1] * 5), 2, 2)
    inv = init_inventory(asg, feats)
    m0 = inv.unit(inv.cluster_map[0][1]).means[1, 0]
    m1 = inv.unit(inv.cluster_map[1][1]).means[1, 0]
    # pooled within-cluster spread, as stored in the steady-state variances
    sd0 = np.sqrt(inv.unit(inv.cluster_map[0][1]).variances[1, 0])
    sd1 = np.sqrt(inv.unit(inv.cluster_map[1][1]).variances[1, 0])
    pooled_sd = np.sqrt((sd0 ** 2 + sd1 ** 2) / 2)
    assert np.all(np.abs(m1 - m0) > 3 * pooled_sd)


def test_thirty_three_clusters_give_one_hundred_units(rng):
    feats = [rng.normal(size=(9, 2)) for _ in range(66)]
    asg = ClusterAssignment(np.repeat(np.arange(33), 2), 1, 33)
    inv = init_inventory(asg, feats, silence_frames=rng.normal(size=(20, 2)))
    assert len(inv) == 100 and inv.symbols[-1] == SIL
    assert len(set(inv.symbols)) == 100
    assert inv.cluster_map[7] == ("C07_R", "C07_S", "C07_F")


def test_init_errors(rng):
    feats = [rng.normal(size=(9, 2)) for _ in range(3)]
    with pytest.raises(ValueError):
        init_inventory(ClusterAssignment(np.array([0, 0, 2]), 1, 3), feats)  # cluster 1 empty
    with pytest.raises(ValueError):
        init_inventory(ClusterAssignment(np.array([-1, -1, -1]), 1, 0), feats)
    with pytest.raises(ValueError):
        init_inventory(ClusterAssignment(np.array([0, 0]), 1, 1), feats)


def test_state_offsets_are_deterministic(rng):
    feats = [rng.normal(size=(12, 2)) for _ in range(4)]
    asg = ClusterAssignment(np.zeros(4, int), 1, 1)
    a, b = init_inventory(asg, feats), init_inventory(asg, feats)
    assert a.to_dict() == b.to_dict()
    u = a.unit("C00_S")
    assert np.all(u.means[0, 0] < u.means[1, 0]) and np.all(u.means[1, 0] < u.means[2, 0])


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

def _stochastic_ok(inv):
    for u in inv.units:
        np.testing.assert_allclose(u.transitions.sum(axis=1), 1.0, atol=1e-9)
        np.testing.assert_allclose(u.weights.sum(axis=1), 1.0, atol=1e-9)
        assert np.all(u.variances >= inv.variance_floor - 1e-15)


def test_single_state_closed_form(rng):
    X = rng.normal([1.0, -3.0], [0.5, 2.0], size=(40, 2))
    inv = AUInventory([unit("A", [[0.0, 0.0]], 1.0, 0.5)], {}, 2, np.full(2, 1e-3))
    out = train_iteration(inv, [(X, ["A"])])
    u = out.unit("A")
    np.testing.assert_allclose(u.means[0, 0], X.mean(axis=0), rtol=0, atol=1e-9)
    np.testing.assert_allclose(u.variances[0, 0], X.var(axis=0), rtol=0, atol=1e-9)
    # the exit from the final frame is unscored, so every counted move is a stay
    assert u.self_loop[0] == 1.0 - TRANSITION_FLOOR


def test_variance_floor_applies():
    X = np.zeros((10, 2))
    inv = AUInventory([unit("A", [[1.0, 1.0]])], {}, 2, np.array([0.01, 0.02]))
    u = train_iteration(inv, [(X, ["A"])]).unit("A")
    assert u.variances[0, 0].tolist() == [0.01, 0.02]


def test_training_does_not_lower_aligned_likelihood(rng):
    inv = planted_inventory(3)
    data = []
    for _ in range(10):
        c = int(rng.integers(3))
        syms = list(inv.cluster_map[c])
        data.append((sample_units(inv, syms, int(rng.integers(2, 6)), rng), syms))
    for n_mix in (1, 2, 4):
        new, stats = train_iteration(inv, data, return_stats=True)
        assert stats["log_likelihood_after"] >= stats["log_likelihood_before"] - 1e-6
        _stochastic_ok(new)
        inv = train_iteration(new, data, n_mix)


def test_unvisited_state_keeps_parameters(rng):
    inv = planted_inventory(2)
    syms = list(inv.cluster_map[0])
    data = [(sample_units(inv, syms, 4, rng), syms)]
    out = train_iteration(inv, data)
    for sym in inv.cluster_map[1]:
        assert out.unit(sym).to_dict() == inv.unit(sym).to_dict()
    assert all(np.all(np.isfinite(u.means)) for u in out.units)


def test_unknown_symbol_in_dataset():
    inv = planted_inventory(1)
    with pytest.raises(KeyError):
        train_iteration(inv, [(np.zeros((9, 2)), ["nope"])])


def test_split_doubles_mixtures(rng):
    u = unit("A", rng.normal(size=(3, 2)), 0.25)
    s = split_unit(split_unit(u))
    assert s.n_mixtures == 4
    np.testing.assert_allclose(s.weights, 0.25, atol=1e-15)
    np.testing.assert_allclose(s.weights.sum(axis=1), 1.0, atol=1e-9)
    once = split_unit(u)
    np.testing.assert_allclose(once.means[:, 0] - u.means[:, 0], 0.2 * 0.5)
    np.testing.assert_allclose(once.means[:, 1] - u.means[:, 0], -0.2 * 0.5)


# ---------------------------------------------------------------------------
# Transcription
# ---------------------------------------------------------------------------

def test_triplet_decode_is_self_consistent(rng):
    inv = planted_inventory(8)
    X = sample_units(inv, inv.cluster_map[5], 5, rng)
    t = transcribe(inv, X, "cluster_triplet", "u")
    assert t.cluster == 5 and t.symbols == list(inv.cluster_map[5])
    assert t.alignments[0][0] == 0 and t.alignments[-1][1] == len(X)


def test_silence_only_decodes_to_sil(rng):
    inv = planted_inventory(3)
    X = -50.0 + rng.normal(size=(30, 2))
    assert transcribe(inv, X, "free_loop").symbols == [SIL]


def test_free_loop_at_least_triplet(rng):
    inv = planted_inventory(4)
    for _ in range(10):
        X = rng.normal(scale=20.0, size=(int(rng.integers(9, 30)), 2))
        free = transcribe(inv, X, "free_loop")
        trip = transcribe(inv, X, "cluster_triplet")
        assert free.log_likelihood >= trip.log_likelihood - 1e-9


def test_free_loop_alignments_cover_utterance(rng):
    inv = planted_inventory(4)
    syms = list(inv.cluster_map[2]) + [SIL] + list(inv.cluster_map[0])
    X = sample_units(inv, syms, 4, rng)
    t = transcribe(inv, X, "free_loop")
    assert t.symbols == syms
    edges = [e for a in t.alignments for e in a]
    assert edges[0] == 0 and edges[-1] == len(X)
    assert all(edges[i] == edges[i + 1] for i in range(1, len(edges) - 1, 2))
    assert all(s in inv for s in t.symbols)


def test_short_input_falls_back_to_single_unit(rng):
    inv = planted_inventory(2)
    t = transcribe(inv, np.full((2, 2), -50.0), "cluster_triplet")
    assert t.warning and t.symbols == [SIL]


def test_decoding_is_deterministic(rng):
    inv = planted_inventory(4)
    X = rng.normal(scale=20.0, size=(40, 2))
    assert transcribe(inv, X) == transcribe(inv, X)


def test_transcribe_errors(rng):
    inv = planted_inventory(1)
    with pytest.raises(ValueError):
        transcribe(inv, np.zeros((0, 2)))
    with pytest.raises(ValueError):
        transcribe(inv, np.zeros((9, 2)), "bigram")


def test_utterance_id_from_feature_meta():
    inv = planted_inventory(1)
    f = FeatureSequence(np.full((4, 2), -50.0), np.arange(4) * 0.01 + 0.0125,
                        meta={"utterance_id": "spk1_003"})
    assert transcribe(inv, f).utterance_id == "spk1_003"


# ---------------------------------------------------------------------------
# Self-training
# ---------------------------------------------------------------------------

def _generated_corpus(inv, rng, n=12):
    corpus = []
    for i in range(n):
        syms = list(inv.cluster_map[i % len(inv.cluster_map)])
        corpus.append((f"s{i:02d}", sample_units(inv, syms, int(rng.integers(3, 7)), rng)))
    return corpus


def test_self_train_fixed_point(rng):
    inv = planted_inventory(3)
    corpus = _generated_corpus(inv, rng)
    _, trans, rep = self_train(inv, corpus, "stage1_syllables", SelfTrainConfig())
    assert rep.converged and rep.n_passes <= 2
    assert rep.iterations[-1]["label_change"] == 0.0
    assert [t.cluster for t in trans] == [i % 3 for i in range(len(corpus))]


def test_self_train_single_pass(rng):
    inv = planted_inventory(3)
    corpus = _generated_corpus(inv, rng)
    _, _, rep = self_train(inv, corpus, "stage2_continuous", SelfTrainConfig(max_iters=1))
    assert rep.n_passes == 1 and len(rep.iterations) == 1


def test_self_train_likelihood_non_decreasing_per_pass(rng):
    inv = planted_inventory(3, var=4.0)
    corpus = _generated_corpus(inv, rng, 15)
    _, _, rep = self_train(inv, corpus, "stage2_continuous",
                           SelfTrainConfig(max_iters=4, label_change_tol=0.0))
    for it in rep.iterations:
        assert it["log_likelihood_after"] >= it["log_likelihood_before"] - 1e-6


def test_self_train_config_validation():
    with pytest.raises(ValueError):
        SelfTrainConfig(max_iters=0)
    with pytest.raises(ValueError):
        SelfTrainConfig(label_change_tol=1.0)
    assert SelfTrainConfig().mixtures_at(100) == 8
    with pytest.raises(ValueError):
        self_train(planted_inventory(1), [], "stage3")


# ---------------------------------------------------------------------------
# Serialisation
# ---------------------------------------------------------------------------

def test_inventory_json_round_trip(tmp_path, rng):
    inv = planted_inventory(2)
    inv.units[0].means += rng.normal(size=inv.units[0].means.shape) * 1e-7
    p = tmp_path / "inv.json"
    inv.save(p)
    back = AUInventory.load(p)
    assert back.to_dict() == inv.to_dict()
    for a, b in zip(inv.units, back.units):
        assert a.means.tobytes() == b.means.tobytes()
        assert a.self_loop.tobytes() == b.self_loop.tobytes()
    doc = p.read_text()
    p.write_text(doc.replace('"version": 1', '"version": 99'))
    with pytest.raises(ValueError):
        AUInventory.load(p)


def test_inventory_rejects_duplicate_symbols():
    with pytest.raises(ValueError):
        AUInventory([unit("A", [[0.0]]), unit("A", [[1.0]])], {}, 1, np.ones(1))


def test_transcription_files_round_trip(tmp_path):
    t = Transcription("utt1", ["C00_R", "C00_S", SIL, "C03_F"], [(0, 4), (4, 9), (9, 12), (12, 20)])
    write_transcription(tmp_path / "utt1.txt", t)
    assert (tmp_path / "utt1.txt").read_text() == "C00_R C00_S SIL C03_F\n"
    assert read_transcription(tmp_path / "utt1.txt").symbols == t.symbols
    write_alignment(tmp_path / "utt1.tsv", t)
    back = read_alignment(tmp_path / "utt1.tsv")
    assert back.symbols == t.symbols and back.alignments == t.alignments
    assert back.frame_labels()[8:10] == ["C00_S", SIL]
