import numpy as np
import pytest

from lobwatch.windows import (
    DegenerateBook,
    EmptyClass,
    LABEL_IGNORE,
    TooShort,
    WindowSample,
    build_windows,
    class_filter,
    fit_qty_scale,
    normalize,
    normalize_many,
)


def stream(total=30, depth=30):
    frames = np.zeros((total, depth, 2, 2), dtype=np.int64)
    frames[:, 0, 0, 1] = 100  # best bid price
    frames[:, 0, 1, 1] = 102  # best ask price
    frames[:, 0, :, 0] = 5
    labels = np.zeros(total, dtype=np.int64)
    timestamps = np.arange(total, dtype=np.int64) * 1_000_000
    return frames, labels, timestamps


class TestBuildWindows:
    def test_exact_fit_single_window(self):
        frames, labels, ts = stream(10)
        wins = build_windows(frames, labels, ts, n=10, stride=1)
        assert len(wins) == 1
        assert wins[0].t_end == ts[-1]

    def test_stride_arithmetic(self):
        frames, labels, ts = stream(19)
        wins = build_windows(frames, labels, ts, n=10, stride=5)
        assert [w.meta["offset"] for w in wins] == [0, 5]

    @pytest.mark.parametrize("total,n,stride", [(30, 10, 1), (57, 10, 5), (100, 7, 3)])
    def test_count_matches_enumeration_oracle(self, total, n, stride):
        frames, labels, ts = stream(total)
        wins = build_windows(frames, labels, ts, n=n, stride=stride)
        oracle = len([i for i in range(0, total, stride) if i + n <= total])
        assert len(wins) == oracle == (total - n) // stride + 1

    def test_too_short(self):
        frames, labels, ts = stream(5)
        with pytest.raises(TooShort):
            build_windows(frames, labels, ts, n=10, stride=1)

    def test_no_cross_stream_windows(self):
        a = stream(15)
        b = stream(15)
        wins = build_windows(*a, n=10, stride=1, instrument_id=0)
        wins += build_windows(*b, n=10, stride=1, instrument_id=1)
        assert all(w.meta["offset"] + 10 <= 15 for w in wins)


class TestNormalize:
    def test_zero_levels_stay_zero(self):
        frames, _, _ = stream(10)
        out = normalize(frames[:10], qty_scale=5.0)
        assert (out[:, 1:, :, 1] == 0).all()  # empty price rows untouched
        assert (out[:, 1:, :, 0] == 0).all()

    def test_price_at_mid_is_zero(self):
        frames, _, _ = stream(10)
        frames = frames.copy()
        frames[0, 1, 0, 1] = 101  # second bid level at the mid price
        frames[0, 1, 0, 0] = 2
        out = normalize(frames[:10], qty_scale=5.0)
        assert out[0, 1, 0, 1] == 0.0  # (101 - 101) / 50

    def test_qty_at_q95_maps_to_one(self):
        frames, labels, ts = stream(10)
        frames = frames.copy()
        frames[:, 0, :, 0] = 777
        wins = build_windows(frames, labels, ts, n=10, stride=1)
        scale = fit_qty_scale(wins)
        assert scale == pytest.approx(np.log1p(777))
        out = normalize(frames, qty_scale=scale)
        assert out[0, 0, 0, 0] == pytest.approx(1.0)

    def test_degenerate_book_raises(self):
        frames, _, _ = stream(10)
        frames = frames.copy()
        frames[0, 0, 1, :] = 0  # empty ask side in frame 0
        with pytest.raises(DegenerateBook):
            normalize(frames, qty_scale=5.0)

    def test_normalize_many_skips_and_counts(self):
        frames, labels, ts = stream(25)
        wins = build_windows(frames, labels, ts, n=10, stride=5)
        bad = np.zeros_like(np.asarray(wins[0].frames))
        wins.append(WindowSample(bad, np.zeros(10, dtype=np.int64), 0, 99, {}))
        x, y, kept, skipped = normalize_many(wins, qty_scale=5.0)
        assert skipped == 1
        assert x.shape == (len(wins) - 1, 10, 120)
        assert all(np.isfinite(x).ravel())

    def test_idempotent_on_zero_and_deterministic(self):
        frames, _, _ = stream(10)
        a = normalize(frames, 5.0)
        b = normalize(frames, 5.0)
        assert np.array_equal(a, b)


def labeled_windows(final_labels):
    frames, _, ts = stream(10)
    out = []
    for i, lab in enumerate(final_labels):
        labels = np.zeros(10, dtype=np.int64)
        labels[-1] = lab
        if lab:
            labels[-3:] = lab
        out.append(WindowSample(frames.copy(), labels, 0, int(ts[-1]) + i, {}))
    return out


class TestClassFilter:
    def test_two_class_filter_and_remap(self):
        wins = labeled_windows([0] * 100 + [1] * 10 + [2] * 10)
        kept = class_filter(wins, c=2)
        assert len(kept) == 20
        finals = {int(np.asarray(w.labels)[-1]) for w in kept}
        assert finals == {0, 1}  # remapped {1,2} -> {0,1}
        inner = np.asarray(kept[0].labels)
        assert inner[0] == LABEL_IGNORE  # neutral positions masked

    def test_three_class_neutral_cap(self):
        wins = labeled_windows([0] * 100 + [1] * 10 + [2] * 10)
        kept = class_filter(wins, c=3, seed=0)
        finals = np.array([int(np.asarray(w.labels)[-1]) for w in kept])
        assert (finals == 1).sum() == 10 and (finals == 2).sum() == 10
        assert (finals == 0).sum() <= 60

    def test_three_class_keeps_all_when_under_cap(self):
        wins = labeled_windows([0] * 10 + [1] * 5 + [2] * 5)
        assert len(class_filter(wins, c=3)) == 20

    def test_empty_class_raises(self):
        wins = labeled_windows([0] * 50)
        with pytest.raises(EmptyClass):
            class_filter(wins, c=2)
        with pytest.raises(EmptyClass):
            class_filter(wins, c=3)

    def test_two_class_needs_both_sides(self):
        wins = labeled_windows([0] * 10 + [1] * 5)
        with pytest.raises(EmptyClass):
            class_filter(wins, c=2)

    def test_seeded_downsampling_deterministic(self):
        wins = labeled_windows([0] * 100 + [1] * 5 + [2] * 5)
        a = [w.t_end for w in class_filter(wins, c=3, seed=42)]
        b = [w.t_end for w in class_filter(wins, c=3, seed=42)]
        assert a == b
