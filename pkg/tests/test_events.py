import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lsmsim.events import (
    EventStream,
    NMNIST_SIZE,
    bin_events,
    center_crop,
    decode_nmnist,
    encode_nmnist,
    inject_input_noise,
    rate_encode,
    raster_to_events,
    read_events_bin,
    read_events_jsonl,
    threshold_encode,
    validate_spikes,
    write_events_bin,
    write_events_jsonl,
)


def test_bin_two_events_land_in_separate_rows():
    s = EventStream.from_events([(0, 2, 1), (5, 2, 1)], num_channels=4, duration=10)
    x = bin_events(s, 2)
    expected = np.zeros((2, 4), dtype=np.uint8)
    expected[:, 2] = 1
    np.testing.assert_array_equal(x, expected)


def test_bin_empty_stream_is_zero():
    s = EventStream.from_events([], num_channels=3, duration=7)
    np.testing.assert_array_equal(bin_events(s, 4), np.zeros((4, 3)))


def test_bin_zero_duration_raises():
    s = EventStream.from_events([], num_channels=3, duration=0)
    with pytest.raises(ValueError, match="zero-duration"):
        bin_events(s, 4)


def test_bin_polarity_split_places_off_events_in_upper_half():
    s = EventStream.from_events([(0, 1, 1), (3, 1, -1)], num_channels=3, duration=4)
    x = bin_events(s, 2, merge_polarity=False)
    assert x.shape == (2, 6)
    assert x[0, 1] == 1 and x[1, 4] == 1 and x.sum() == 2


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(1, 12), st.integers(1, 6), st.integers(0, 40))
def test_bin_popcount_matches_cell_collisions(seed, T, U, k):
    rng = np.random.default_rng(seed)
    duration = int(rng.integers(1, 500))
    t = np.sort(rng.integers(0, duration + 1, size=k))
    c = rng.integers(0, U, size=k)
    s = EventStream(t, c, np.ones(k, dtype=np.int8), U, duration)
    x = bin_events(s, T)
    # brute force: the set of distinct (bin, channel) cells
    cells = set()
    for ti, ci in zip(t, c):
        cells.add((min(ti * T // duration, T - 1), ci))
    assert int(x.sum()) == len(cells) <= k
    assert (x.sum() == k) == (len(cells) == k)


def test_event_stream_validation():
    with pytest.raises(ValueError):
        EventStream(np.array([3, 1]), np.array([0, 0]), np.array([1, 1]), 2, 5)
    with pytest.raises(ValueError):
        EventStream(np.array([0]), np.array([2]), np.array([1]), 2, 5)
    with pytest.raises(ValueError):
        EventStream(np.array([0]), np.array([0]), np.array([0]), 2, 5)
    with pytest.raises(ValueError):
        EventStream(np.array([9]), np.array([0]), np.array([1]), 2, 5)


def test_rate_encode_extremes():
    x = rate_encode(np.array([0.0, 1.0]), T=49, seed=0)
    assert x[:, 0].sum() == 0
    assert x[:, 1].sum() == 49


def test_rate_encode_half_rate_monte_carlo():
    x = rate_encode(np.array([0.5]), T=10000, seed=3)
    assert abs(x.mean() - 0.5) <= 0.02


def test_rate_encode_rejects_out_of_range():
    with pytest.raises(ValueError):
        rate_encode(np.array([1.2]), 5, 0)


def test_threshold_encode_constant_signal_is_empty():
    assert len(threshold_encode(np.full(20, 0.7), 0.1)) == 0


def test_threshold_encode_ramp_of_three_deltas():
    s = threshold_encode(np.array([0.0, 1.0, 2.0, 3.0]), 1.0)
    np.testing.assert_array_equal(s.p, [1, 1, 1])


def _delta_reference(x, delta):
    ref, out = x[0], []
    for k in range(1, len(x)):
        while x[k] - ref >= delta:
            ref += delta
            out.append((k, 1))
        while ref - x[k] >= delta:
            ref -= delta
            out.append((k, -1))
    return out


def test_threshold_encode_sine_period_is_balanced():
    # quarter-turn offset so the signal starts and ends at the same extreme
    n = 400
    x = np.cos(2 * np.pi * np.arange(n + 1) / n)
    s = threshold_encode(x, 0.05)
    assert np.sum(s.p == 1) == np.sum(s.p == -1) > 0
    ref = _delta_reference(x, 0.05)
    np.testing.assert_array_equal(s.t, [k for k, _ in ref])
    np.testing.assert_array_equal(s.p, [p for _, p in ref])


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=1, max_size=60), st.floats(0.05, 2.0))
def test_threshold_encode_matches_scalar_reference(values, delta):
    x = np.array(values)
    s = threshold_encode(x, delta)
    ref = _delta_reference(x, delta)
    assert list(zip(s.t.tolist(), s.p.tolist())) == ref


def test_center_crop_offsets():
    H = W = 34
    grid = np.arange(H * W).reshape(1, H * W)
    out = center_crop(grid, H, W, 16, 16).reshape(16, 16)
    rows, cols = np.divmod(out, W)
    np.testing.assert_array_equal(np.unique(rows), np.arange(9, 25))
    np.testing.assert_array_equal(np.unique(cols), np.arange(9, 25))


def test_center_crop_identity_and_hot_pixel():
    x = (np.random.default_rng(0).random((3, 34 * 34)) < 0.2).astype(np.uint8)
    np.testing.assert_array_equal(center_crop(x, 34, 34, 34, 34), x)
    hot = np.zeros((1, 34 * 34), dtype=np.uint8)
    hot[0, 9 * 34 + 9] = 1
    out = center_crop(hot, 34, 34, 16, 16)
    assert out[0, 0] == 1 and out.sum() == 1


def test_input_noise_extremes_and_rate():
    x = (np.random.default_rng(0).random((100, 1000)) < 0.3).astype(np.uint8)
    np.testing.assert_array_equal(inject_input_noise(x, 0.0, 1), x)
    np.testing.assert_array_equal(inject_input_noise(x, 1.0, 1), 1 - x)
    flipped = np.mean(inject_input_noise(x, 0.1, 2) != x)
    assert abs(flipped - 0.1) <= 0.01


def test_validate_spikes_rejects_bad_values():
    with pytest.raises(ValueError):
        validate_spikes(np.array([[0, 2]]))
    with pytest.raises(ValueError):
        validate_spikes(np.zeros(4))


def _random_stream(seed, n=50, U=10, duration=1000):
    rng = np.random.default_rng(seed)
    t = np.sort(rng.integers(0, duration, size=n))
    return EventStream(t, rng.integers(0, U, size=n), rng.choice([-1, 1], size=n), U, duration)


def _same(a, b):
    np.testing.assert_array_equal(a.t, b.t)
    np.testing.assert_array_equal(a.c, b.c)
    np.testing.assert_array_equal(a.p, b.p)
    assert (a.num_channels, a.duration) == (b.num_channels, b.duration)


def test_jsonl_and_binary_round_trip(tmp_path):
    s = _random_stream(0)
    write_events_jsonl(s, tmp_path / "e.jsonl")
    _same(s, read_events_jsonl(tmp_path / "e.jsonl"))
    write_events_bin(s, tmp_path / "e.bin")
    _same(s, read_events_bin(tmp_path / "e.bin"))


def test_binary_rejects_bad_magic_and_truncation(tmp_path):
    s = _random_stream(1)
    p = tmp_path / "e.bin"
    write_events_bin(s, p)
    raw = p.read_bytes()
    (tmp_path / "bad.bin").write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(ValueError, match="magic"):
        read_events_bin(tmp_path / "bad.bin")
    (tmp_path / "short.bin").write_bytes(raw[:-3])
    with pytest.raises(ValueError):
        read_events_bin(tmp_path / "short.bin")


def test_nmnist_round_trip():
    s = _random_stream(2, n=200, U=NMNIST_SIZE * NMNIST_SIZE, duration=300000)
    s = EventStream(s.t, s.c, s.p, s.num_channels, int(s.t[-1]) + 1)
    back = decode_nmnist(encode_nmnist(s))
    _same(s, back)


def test_nmnist_record_layout():
    # x=3, y=5, ON, t=0x012345
    raw = bytes([3, 5, 0x80 | 0x01, 0x23, 0x45])
    s = decode_nmnist(raw)
    assert s.t[0] == 0x012345 and s.c[0] == 5 * 34 + 3 and s.p[0] == 1
    with pytest.raises(ValueError):
        decode_nmnist(raw[:4])


def test_raster_to_events_round_trips_through_binning():
    r = (np.random.default_rng(5).random((12, 6)) < 0.3).astype(np.uint8)
    np.testing.assert_array_equal(bin_events(raster_to_events(r), 12), r)
