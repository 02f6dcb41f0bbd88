import numpy as np
import pytest

from canids.can_log import frames_to_bits
from canids.dataset import BadFraction, Dataset, build_windows, split_chronological

from conftest import make_frames, random_frames


@pytest.mark.parametrize("n, expected", [(0, 0), (5, 0), (10, 0), (11, 1), (15, 5), (100, 90)])
def test_window_count(n, expected):
    assert build_windows(random_frames(n)).N == expected


def test_eleven_frames_label_is_eleventh():
    frames = random_frames(11, seed=3)
    ds = build_windows(frames)
    assert np.array_equal(ds.Y[0], frames[10].bits())
    assert np.array_equal(ds.X[0], frames_to_bits(frames[:10]))
    assert ds[0].target_timestamp == frames[10].timestamp


def test_window_structure():
    frames = random_frames(60, seed=5)
    bits = frames_to_bits(frames)
    ds = build_windows(frames)
    for i, ex in enumerate(ds):
        assert ex.x.shape == (10, 64)
        assert np.array_equal(ex.x, bits[i:i + 10])
        assert np.array_equal(ex.x[9], bits[i + 9])
    assert np.array_equal(ds.Y, bits[10:])


def test_injected_flag_follows_label_frame():
    flags = [False] * 12 + [True] + [False] * 3
    frames = make_frames([bytes([k]) for k in range(16)], injected=flags)
    ds = build_windows(frames)
    assert ds.injected.tolist() == flags[10:]


def test_rejects_mixed_aids():
    frames = random_frames(12) + random_frames(1, aid=0x100)
    with pytest.raises(ValueError):
        build_windows(frames)


def test_custom_window():
    assert build_windows(random_frames(20), window=4).X.shape == (16, 4, 64)


@pytest.mark.parametrize("n, frac, sizes", [(100, 0.9, (90, 10)), (100, 1.0, (100, 0)), (5, 0.5, (2, 3))])
def test_split(n, frac, sizes):
    ds = build_windows(random_frames(n + 10))
    tr, ho = split_chronological(ds, frac)
    assert (tr.N, ho.N) == sizes
    assert np.array_equal(np.concatenate([tr.Y, ho.Y]), ds.Y)


@pytest.mark.parametrize("frac", [0.0, -0.1, 1.01, float("nan")])
def test_split_bad_fraction(frac):
    with pytest.raises(BadFraction):
        split_chronological(build_windows(random_frames(20)), frac)


def test_empty_dataset_shapes():
    ds = build_windows([])
    assert isinstance(ds, Dataset) and ds.N == 0 and ds.X.shape == (0, 10, 64)
