import json

import numpy as np
import pytest

from staygo.events import (
    EventTrace,
    SplitMix64,
    StateSequence,
    TraceDimensionError,
    TraceFormatError,
    build_sequence,
    check_trace_matches,
    format_trace,
    load_trace,
    parse_trace,
    ring_index,
    ring_of_cell,
    sample_trace,
    save_trace,
)
from staygo.geometry import GridSpec, Waypoint

GRID = GridSpec()


def test_splitmix64_reference_outputs():
    rng = SplitMix64(0)
    assert [rng.next_u64() for _ in range(3)] == [
        0xE220A8397B1DCDAF,
        0x6E789E6AA1B965F4,
        0x06C45D188009454F,
    ]
    u = SplitMix64(0).random()
    assert u == (0xE220A8397B1DCDAF >> 11) / 2.0**53


def test_rings():
    assert ring_index(Waypoint(1, 200, 200), GRID) == 0
    assert ring_index(Waypoint(1, 0, 0), GRID) == 4
    assert ring_index(Waypoint(1, 250, 200), GRID) == 1
    with pytest.raises(ValueError):
        ring_index(Waypoint(1, 10, 0), GRID)
    assert sorted({ring_of_cell(r, c, GRID) for r in range(9) for c in range(9)}) == [0, 1, 2, 3, 4]


@pytest.mark.parametrize("pattern", ["A", "B"])
@pytest.mark.parametrize("rate", ["fast", "slow"])
def test_sequence_invariants(pattern, rate):
    seq = build_sequence(pattern, rate)
    p = seq.probs
    assert p.shape[1] == 81
    assert np.allclose(p[0], 0.2) and np.allclose(p[-1], 0.2)
    assert np.all((p >= 0) & (p <= 1))
    # equal probability within a ring
    for ring in range(5):
        cols = p[:, seq.rings == ring]
        assert np.allclose(cols, cols[:, :1])
    step = 0.1 if rate == "fast" else 0.05
    diffs = np.abs(np.diff(p, axis=0))
    ok = np.isclose(diffs, 0) | np.isclose(diffs, step) | (pattern == "B") & np.isclose(diffs, 0.6)
    assert ok.all()


def test_sequence_lengths():
    assert build_sequence("A", "fast").n_states == 41
    assert build_sequence("A", "slow").n_states == 81
    assert build_sequence("B", "fast").n_states == 61
    assert build_sequence("B", "slow").n_states == 101


def test_pattern_a_reaches_high_state_each_cycle():
    seq = build_sequence("A", "fast", cycles=2)
    highs = [m for m in range(seq.n_states) if np.allclose(seq.probs[m], 0.8)]
    assert highs and min(highs) < 20 < max(highs)


def test_pattern_a_wavefront_directions():
    p = build_sequence("A", "fast").probs
    rings = build_sequence("A", "fast").rings
    center, edge = p[:, rings == 0][:, 0], p[:, rings == 4][:, 0]
    rise_c = np.argmax(center > 0.2)
    rise_e = np.argmax(edge > 0.2)
    assert rise_c < rise_e
    top = np.argmax(np.isclose(p, 0.8).all(axis=1))
    fall_c = top + np.argmax(center[top:] < 0.8)
    fall_e = top + np.argmax(edge[top:] < 0.8)
    assert fall_e < fall_c


def test_pattern_b_abrupt_center_then_gradual_outward_fall():
    seq = build_sequence("B", "fast")
    center = seq.probs[:, seq.rings == 0][:, 0]
    edge = seq.probs[:, seq.rings == 4][:, 0]
    jumps = np.flatnonzero(np.isclose(np.diff(center), 0.6))
    assert len(jumps) == 4  # one per cycle
    top = np.argmax(np.isclose(seq.probs, 0.8).all(axis=1))
    assert top + np.argmax(center[top:] < 0.8) < top + np.argmax(edge[top:] < 0.8)


def test_slow_rate_inserts_midpoints():
    fast = build_sequence("A", "fast", cycles=1)
    slow = build_sequence("A", "slow", cycles=1)
    assert slow.n_states > fast.n_states
    levels = np.round(slow.probs, 4)
    assert 0.25 in levels
    # fast states appear in order in the slow sequence
    pos = 0
    for row in fast.probs:
        while not np.allclose(slow.probs[pos], row):
            pos += 1
        pos += 1
    b_slow = build_sequence("B", "slow", cycles=1)
    centre = b_slow.probs[:, b_slow.rings == 0][:, 0]
    assert np.isclose(np.diff(centre), 0.6).sum() == 1


def _constant_seq(value, states=3):
    base = build_sequence("A", "fast", cycles=1)
    return StateSequence(np.full((states, 81), value), "A", "fast", 1, GRID, base.rings)


def test_sampling_extremes_and_frequency():
    assert not sample_trace(_constant_seq(0.0), 5).events.any()
    assert sample_trace(_constant_seq(1.0), 5).events.all()
    half = sample_trace(_constant_seq(0.5, states=124), 11).events
    assert half.size >= 10_000
    assert abs(half.mean() - 0.5) <= 0.02


def test_sampling_is_deterministic(tmp_path):
    seq = build_sequence("B", "slow")
    a, b = sample_trace(seq, 42), sample_trace(seq, 42)
    assert a == b and a.checksum() == b.checksum()
    assert sample_trace(seq, 43) != a
    save_trace(a, tmp_path / "a.txt")
    save_trace(b, tmp_path / "b.txt")
    assert (tmp_path / "a.txt").read_bytes() == (tmp_path / "b.txt").read_bytes()


def test_round_trip(tmp_path):
    seq = build_sequence("A", "slow")
    t = sample_trace(seq, 2**64 - 1)
    save_trace(t, tmp_path / "t.txt")
    back = load_trace(tmp_path / "t.txt", seq)
    assert back == t
    assert back.events.dtype == bool


def test_truncated_file_reports_offset():
    data = format_trace(sample_trace(build_sequence("A", "fast"), 1)).encode()
    cut = data[:-7]
    with pytest.raises(TraceFormatError) as err:
        parse_trace(cut)
    assert err.value.offset == len(cut)
    assert "offset" in str(err.value)


def test_missing_row_is_dimension_error():
    text = format_trace(sample_trace(build_sequence("B", "slow"), 1))
    lines = text.splitlines(keepends=True)
    assert "states 101\n" in lines
    with pytest.raises(TraceDimensionError, match="found 100 rows"):
        parse_trace("".join(lines[:-1]).encode())


def test_bad_character_offset():
    data = bytearray(format_trace(sample_trace(build_sequence("A", "fast"), 1)).encode())
    body = data.index(b"---\n") + 4
    data[body + 5] = ord("x")
    with pytest.raises(TraceFormatError) as err:
        parse_trace(bytes(data))
    assert err.value.offset == body + 5


@pytest.mark.parametrize(
    "mutate",
    [
        lambda s: s.replace("staygo-trace 1", "staygo-trace 9"),
        lambda s: s.replace("seed ", "sead "),
        lambda s: s.replace("points 81", "points eighty"),
        lambda s: s.replace("---", "--"),
    ],
)
def test_header_corruption_rejected(mutate):
    text = format_trace(sample_trace(build_sequence("A", "fast"), 3))
    with pytest.raises(TraceFormatError):
        parse_trace(mutate(text).encode())


def test_trace_sequence_mismatch():
    t = sample_trace(build_sequence("A", "fast"), 1)
    with pytest.raises(TraceDimensionError):
        check_trace_matches(t, build_sequence("A", "slow"))
    shifted = build_sequence("A", "fast", grid=GridSpec(origin_x=10.0))
    assert shifted.probs.shape == t.events.shape
    with pytest.raises(ValueError, match="sequence"):
        check_trace_matches(t, shifted)


def test_sequence_json(tmp_path):
    seq = build_sequence("A", "fast")
    seq.to_json(tmp_path / "s.json")
    d = json.loads((tmp_path / "s.json").read_text())
    assert len(d["states"]) == 41 and d["pattern"] == "A"
    assert len(seq.sequence_id) == 16
