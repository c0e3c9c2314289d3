import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from wildface.errors import EmptyStatsError, ImageTooSmallError
from wildface.image_quality import (
    FEATURES,
    QualityRecord,
    blurriness,
    dataset_stats,
    linear_brightness,
    load_image,
    luminosity,
    quality_record,
    resolution,
    save_png,
    stats_to_csv,
    stats_to_json,
)


def solid(h, w, rgb):
    img = np.zeros((h, w, 3), dtype=np.uint8)
    img[:] = rgb
    return img


def checkerboard(n=4):
    img = np.zeros((n, n, 3), dtype=np.uint8)
    for y in range(n):
        for x in range(n):
            if (x + y) % 2:
                img[y, x] = 255
    return img


def brute_laplacian_variance(img):
    """Direct double loop over the valid region with the 3x3 kernel."""
    kernel = [[0, 1, 0], [1, -4, 1], [0, 1, 0]]
    h, w, _ = img.shape
    gray = [[(299 * int(img[y, x, 0]) + 587 * int(img[y, x, 1]) + 114 * int(img[y, x, 2])) / 1000
             for x in range(w)] for y in range(h)]
    resp = []
    for y in range(1, h - 1):
        for x in range(1, w - 1):
            resp.append(sum(kernel[j][i] * gray[y - 1 + j][x - 1 + i] for j in range(3) for i in range(3)))
    mean = sum(resp) / len(resp)
    return sum((r - mean) ** 2 for r in resp) / len(resp)


@pytest.mark.parametrize("w,h,expected", [(192, 256, 49152), (1, 1, 1), (80, 160, 12800)])
def test_resolution(w, h, expected):
    assert resolution(solid(h, w, 0)) == expected


def test_luminosity_fixtures():
    assert luminosity(solid(4, 4, (255, 255, 255))) == 1.0
    assert luminosity(solid(4, 4, (0, 0, 0))) == 0.0
    assert luminosity(solid(4, 4, (255, 0, 0))) == pytest.approx(math.sqrt(0.299), abs=1e-12)
    assert math.sqrt(0.299) == pytest.approx(0.54681, abs=1e-5)


def test_linear_brightness_strategy():
    img = solid(2, 2, (255, 0, 0))
    assert luminosity(img, brightness=linear_brightness) == pytest.approx(0.299)


def test_blurriness_fixtures():
    assert blurriness(solid(5, 5, (17, 80, 200))) == 0.0
    board = checkerboard()
    assert brute_laplacian_variance(board) == 1020.0 ** 2
    assert blurriness(board) == 1_040_400.0
    with pytest.raises(ImageTooSmallError):
        blurriness(solid(5, 2, 0))


@settings(max_examples=50, deadline=None)
@given(arrays(np.uint8, st.tuples(st.integers(3, 8), st.integers(3, 8), st.just(3))))
def test_blurriness_matches_brute_force(img):
    assert blurriness(img) == pytest.approx(brute_laplacian_variance(img), rel=1e-9, abs=1e-9)


images = arrays(np.uint8, st.tuples(st.integers(3, 10), st.integers(3, 10), st.just(3)))


@settings(max_examples=100, deadline=None)
@given(images, st.randoms(use_true_random=False))
def test_luminosity_permutation_invariant(img, rnd):
    flat = img.reshape(-1, 3).copy()
    order = list(range(len(flat)))
    rnd.shuffle(order)
    shuffled = flat[order].reshape(img.shape)
    assert luminosity(shuffled) == pytest.approx(luminosity(img), rel=1e-12)


@settings(max_examples=100, deadline=None)
@given(images, st.integers(0, 2))
def test_luminosity_monotone(img, channel):
    brighter = img.copy()
    brighter[..., channel] = np.minimum(brighter[..., channel].astype(int) + 10, 255)
    assert luminosity(brighter) >= luminosity(img)


@settings(max_examples=100, deadline=None)
@given(images, st.integers(0, 255))
def test_blurriness_shift_and_mirror(img, c):
    img = (img // 2).astype(np.uint8)
    shift = min(c, 127)
    shifted = (img.astype(int) + shift).astype(np.uint8)
    assert blurriness(shifted) == pytest.approx(blurriness(img), rel=1e-9, abs=1e-6)
    assert blurriness(img[:, ::-1]) == pytest.approx(blurriness(img), rel=1e-12, abs=1e-9)


def rec(i, value):
    return QualityRecord(f"r{i}", int(value), float(value), float(value))


class TestDatasetStats:
    def test_single_record(self):
        stats = dataset_stats({"A": [rec(0, 5)]})
        for f in FEATURES:
            assert stats["A"][f].mean == 0.0 and stats["A"][f].std == 0.0

    def test_two_groups(self):
        stats = dataset_stats({"A": [rec(0, 2), rec(1, 4)], "B": [rec(2, 6)]})
        # pooled range [2, 6]: A -> {0, 0.5}, B -> {1}
        assert stats["A"]["luminosity"].mean == 0.25
        assert stats["A"]["luminosity"].std == 0.25
        assert stats["B"]["luminosity"].mean == 1.0
        assert stats["A"]["resolution"].pooled_min == 2 and stats["A"]["resolution"].pooled_max == 6

    def test_identical_values(self):
        stats = dataset_stats({"A": [rec(0, 3), rec(1, 3)], "B": [rec(2, 3)]})
        for s in stats.values():
            for f in FEATURES:
                assert (s[f].mean, s[f].std) == (0.0, 0.0)

    def test_empty(self):
        with pytest.raises(EmptyStatsError):
            dataset_stats({})
        with pytest.raises(EmptyStatsError):
            dataset_stats({"A": []})
        with pytest.raises(EmptyStatsError, match="B"):
            dataset_stats({"A": [rec(0, 1)], "B": []})

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.lists(st.floats(0, 1e6), min_size=1, max_size=20), min_size=1, max_size=4))
    def test_normalized_range_and_order(self, groups):
        recs = {f"g{i}": [rec(j, v) for j, v in enumerate(vals)] for i, vals in enumerate(groups)}
        stats = dataset_stats(recs)
        raw_means = {k: np.mean(v) for k, v in zip(recs, groups)}
        for s in stats.values():
            assert 0.0 <= s["luminosity"].mean <= 1.0
            assert s["luminosity"].std >= 0.0
        names = list(recs)
        for a in names:
            for b in names:
                if raw_means[a] < raw_means[b] - 1e-6 * max(1.0, abs(raw_means[b])):
                    assert stats[a]["luminosity"].mean <= stats[b]["luminosity"].mean

    def test_outputs(self):
        stats = dataset_stats({"A": [rec(0, 2), rec(1, 4)], "B": [rec(2, 6)]})
        csv_text = stats_to_csv(stats)
        assert csv_text.splitlines()[0] == "dataset,feature,mean,std"
        assert "A,luminosity,0.250000,0.250000" in csv_text
        assert '"dataset": "B"' in stats_to_json(stats)


def test_png_round_trip(tmp_path):
    img = np.random.default_rng(0).integers(0, 256, size=(7, 5, 3), dtype=np.uint8)
    save_png(tmp_path / "a.png", img)
    assert np.array_equal(load_image(tmp_path / "a.png"), img)
    r = quality_record("a", img)
    assert r.resolution == 35
