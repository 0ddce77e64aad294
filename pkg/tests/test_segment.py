import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from aud.features import AudioBuffer, FrameConfig, short_time_energy
from aud.metrics import boundary_metrics
from aud.segment import (
    DegenerateInputError, GroupDelayConfig, Segment, causal_sequence, group_delay,
    inverse_energy, min_phase_group_delay, pick_peaks, read_segments, segment_syllables, summary_report,
    write_segments,
)

SR = 16000


def test_unit_exponent_is_plain_reciprocal(rng):
    E = rng.uniform(0.0, 2.0, 50)
    cfg = GroupDelayConfig(gamma=1.0)
    ref = [1.0 / (e + cfg.inverse_energy_floor * E.max()) for e in E]
    np.testing.assert_allclose(inverse_energy(E, cfg), ref, rtol=1e-15)


def bursts(layout, rng=None, noise=True, amp=0.3):
    """Concatenate ('b', seconds) bursts and ('s', seconds) silences."""
    parts = []
    for kind, dur in layout:
        n = int(round(dur * SR))
        if kind == "s":
            parts.append(np.zeros(n))
        elif noise:
            parts.append(amp * rng.standard_normal(n))
        else:
            parts.append(amp * np.sin(2 * np.pi * 220.0 * np.arange(n) / SR))
    return np.concatenate(parts)


def five_bursts(rng):
    layout = [("s", 0.05)]
    for i in range(5):
        layout += [("b", 0.15), ("s", 0.1 if i < 4 else 0.05)]
    return bursts(layout, rng), layout


def burst_spans(layout):
    spans, t = [], 0.0
    for kind, d in layout:
        if kind == "b":
            spans.append((t, t + d))
        t += d
    return spans


# ---------------------------------------------------------------------------
# Group delay
# ---------------------------------------------------------------------------

def _dense_group_delay(x, omegas, h=1e-6):
    """-d(phase)/d(omega) by central differences of the directly summed DTFT."""
    n = np.arange(len(x))

    def phase(w):
        return np.angle(np.exp(-1j * np.outer(w, n)) @ x)

    d = phase(omegas + h) - phase(omegas - h)
    d = (d + np.pi) % (2 * np.pi) - np.pi
    return -d / (2 * h)


def test_group_delay_matches_numeric_phase_derivative(rng):
    E = 1.0 + rng.uniform(0, 1, 48)
    x = causal_sequence((E + 1e-3 * E.max()) ** -0.1, 4)
    tau = group_delay(x)
    omegas = 2 * np.pi * np.arange(len(x)) / len(x)
    ref = _dense_group_delay(x, omegas)
    np.testing.assert_allclose(tau, ref, atol=1e-5 * np.abs(ref).max() + 1e-6)


def test_constant_contour_has_zero_group_delay():
    tau = min_phase_group_delay(np.full(64, 3.0))
    assert np.abs(tau).max() < 1e-6


@pytest.mark.parametrize("m0", [20, 37, 55])
def test_single_valley_peak_location(m0):
    M = 80
    m = np.arange(M)
    E = 1.0 - 0.9 * np.exp(-0.5 * ((m - m0) / 3.0) ** 2)
    tau = min_phase_group_delay(E, GroupDelayConfig(wsf=4))
    assert abs(int(np.argmax(tau)) - m0) <= 1


def test_two_valleys_resolved_at_small_wsf():
    M = 160
    m = np.arange(M)
    m1, m2 = 70, 70 + M // 8
    E = 1.0 - 0.9 * (np.exp(-0.5 * ((m - m1) / 3.0) ** 2) + np.exp(-0.5 * ((m - m2) / 3.0) ** 2))
    tau = min_phase_group_delay(E, GroupDelayConfig(wsf=2))
    peaks = pick_peaks(tau, half_width=5)
    assert len(peaks) == 2
    assert abs(peaks[0] - m1) <= 2 and abs(peaks[1] - m2) <= 2


def test_group_delay_input_errors():
    with pytest.raises(DegenerateInputError):
        min_phase_group_delay(np.zeros(10))
    with pytest.raises(DegenerateInputError):
        min_phase_group_delay(np.ones(3))
    with pytest.raises(DegenerateInputError):
        min_phase_group_delay(np.array([1.0, -1.0, 1.0, 1.0]))


def test_config_validation():
    with pytest.raises(ValueError):
        GroupDelayConfig(wsf=0)
    with pytest.raises(ValueError):
        GroupDelayConfig(min_segment_dur=0)


def test_pick_peaks_plateau_yields_one():
    tau = np.array([0, 0, 5, 5, 0, 0, 0.0])
    assert pick_peaks(tau, 2) == [2]
    assert pick_peaks(np.zeros(10), 2) == []


@pytest.mark.xfail(strict=True, reason="rectangular causal truncation is not variation "
                                       "diminishing; see the decisions ledger")
@settings(max_examples=60, deadline=None, derandomize=True)
@given(st.lists(st.floats(0.0, 1.0), min_size=30, max_size=120))
def test_peak_count_non_increasing_in_wsf(values):
    E = np.asarray(values) + 1e-3
    counts = [len(pick_peaks(min_phase_group_delay(E, GroupDelayConfig(wsf=w)), 5))
              for w in range(1, 25)]
    assert all(b <= a for a, b in zip(counts, counts[1:]))


def test_peak_count_trend_with_wsf(rng):
    # the weaker statement that does hold: heavy smoothing never finds more
    # peaks than no smoothing
    for _ in range(50):
        E = rng.uniform(0, 1, int(rng.integers(30, 150))) + 1e-3
        fine = len(pick_peaks(min_phase_group_delay(E, GroupDelayConfig(wsf=1)), 1))
        coarse = len(pick_peaks(min_phase_group_delay(E, GroupDelayConfig(wsf=30)), 1))
        assert coarse <= fine


# ---------------------------------------------------------------------------
# Segmentation
# ---------------------------------------------------------------------------

def test_five_bursts_give_five_syllables(rng):
    x, layout = five_bursts(rng)
    segs = segment_syllables(AudioBuffer(x, SR, "u"))
    syl = [s for s in segs if s.kind == "syllable"]
    assert len(syl) == 5
    for (a, b), s in zip(burst_spans(layout), syl):
        overlap = max(0.0, min(b, s.end) - max(a, s.start))
        assert overlap >= 0.8 * (b - a)


def test_pure_silence_is_one_silence_segment():
    segs = segment_syllables(AudioBuffer(np.zeros(8000), SR, "z"))
    assert segs == [Segment("z", 0.0, 0.5, "silence")]


def test_constant_burst_is_one_syllable():
    x = 0.3 * np.sin(2 * np.pi * 220.0 * np.arange(SR // 2) / SR)
    segs = segment_syllables(AudioBuffer(x, SR, "c"))
    assert [s.kind for s in segs] == ["syllable"]


def _smoothed_valleys(E, wsf, half):
    """Baseline: valleys of the energy contour smoothed at the same time scale."""
    M = len(E)
    ext = np.concatenate([E, E[-1:], E[-1:0:-1]])
    c = np.fft.ifft(ext).real
    L = int(np.ceil(M / wsf))
    w = np.zeros(2 * M)
    w[:L] = 1.0
    w[2 * M - L + 1:] = 1.0
    liftered = np.fft.fft(c * w).real[:M]
    W = 2 * wsf
    k = np.ones(W) / W
    moving = np.convolve(np.pad(E, (W // 2, W - 1 - W // 2), mode="edge"), k, "valid")
    return pick_peaks(-liftered, half), pick_peaks(-moving, half)


def resolution_fixture():
    # two long tone bursts around a short one, separated by 50 ms gaps
    layout = [("s", 0.1), ("b", 0.2), ("s", 0.05), ("b", 0.08), ("s", 0.05), ("b", 0.2), ("s", 0.1)]
    # each boundary must fall between the centres of the bursts it separates
    return bursts(layout, noise=False), [(0.2, 0.39), (0.39, 0.58)]


def test_resolution_regression_fixture():
    x, between = resolution_fixture()
    fcfg, gcfg = FrameConfig(), GroupDelayConfig()
    E = short_time_energy(AudioBuffer(x, SR), fcfg).frames[:, 0]
    half = int(round(gcfg.min_segment_dur / 2 / fcfg.hop))
    gd = pick_peaks(min_phase_group_delay(E, gcfg), half, gcfg.prominence)
    lift, moving = _smoothed_valleys(E, gcfg.wsf, half)
    assert len(lift) == 1 and len(moving) == 1
    assert len(gd) == 2
    times = short_time_energy(AudioBuffer(x, SR), fcfg).frame_times
    for p, (lo, hi) in zip(gd, between):
        assert lo < times[p] < hi


def _check_partition(segs, dur):
    assert segs[0].start == 0.0 and segs[-1].end == dur
    for a, b in zip(segs, segs[1:]):
        assert a.end == b.start
    assert all(s.start < s.end for s in segs)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.tuples(st.sampled_from("bs"), st.floats(0.03, 0.3)), min_size=1, max_size=6),
       st.integers(0, 2**31))
def test_segments_partition_utterance(layout, seed):
    x = bursts(layout, np.random.default_rng(seed))
    if len(x) < 400:
        x = np.concatenate([x, np.zeros(400)])
    a = AudioBuffer(x, SR, "p")
    segs = segment_syllables(a)
    _check_partition(segs, a.duration)


@settings(max_examples=20, deadline=None)
@given(st.floats(0.05, 3.0), st.integers(0, 2**31))
def test_amplitude_invariance(c, seed):
    x, _ = five_bursts(np.random.default_rng(seed))
    base = segment_syllables(AudioBuffer(x, SR))
    scaled = segment_syllables(AudioBuffer(c * x, SR))
    assert [(s.start, s.end) for s in base] == [(s.start, s.end) for s in scaled]


def test_min_duration_merge(rng):
    # a 40 ms blip between two long bursts must not stand alone
    layout = [("b", 0.25), ("s", 0.03), ("b", 0.04), ("s", 0.03), ("b", 0.25)]
    segs = segment_syllables(AudioBuffer(bursts(layout, rng), SR, "m"))
    assert all(s.duration >= 0.1 for s in segs if s.kind == "syllable")


def test_five_burst_boundary_f1(rng):
    x, layout = five_bursts(rng)
    segs = segment_syllables(AudioBuffer(x, SR, "u"))
    spans = burst_spans(layout)
    ref = [0.0] + [(b + a2) / 2 for (_, b), (a2, _) in zip(spans, spans[1:])] + [len(x) / SR]
    assert boundary_metrics(segs, ref, 30.0)[2] == 1.0


def test_segment_file_round_trip(tmp_path):
    segs = [Segment("u", 0.0, 0.1234567891, "silence"), Segment("u", 0.1234567891, 1.5)]
    p = tmp_path / "u.tsv"
    write_segments(p, segs)
    assert read_segments(p) == segs
    assert p.read_text().splitlines()[0].split("\t")[2] == "silence"


def test_summary_report():
    segs = {"u": [Segment("u", 0, 0.12), Segment("u", 0.12, 0.2, "silence")]}
    text = summary_report(segs)
    assert "syllable_segments\t1" in text and "silence_segments\t1" in text
    assert "100-150\t1" in text
