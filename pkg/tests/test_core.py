import numpy as np
import pytest
from hypothesis import given, strategies as st

from eeg_bilstm.core import (
    EventMarker,
    FilterSpec,
    Recording,
    Segment,
    bandpass,
    baseline_correct,
    detect_bad_channels,
    downsample,
    drop_channels,
    filter as filt,
    lowpass,
    read_recording_csv,
    rereference_common_average,
    segment,
    write_recording_csv,
)
from eeg_bilstm.errors import (
    DataError,
    InvalidCutoff,
    NonIntegerFactor,
    WindowOutOfRange,
    WindowTooLong,
)

from .conftest import steady_amplitude


def sine_rec(freq, rate, seconds, amp=1.0, channels=1):
    t = np.arange(int(seconds * rate)) / rate
    return Recording(np.tile(amp * np.sin(2 * np.pi * freq * t), (channels, 1)), rate)


class TestRecording:
    def test_invariants(self):
        with pytest.raises(DataError):
            Recording(np.zeros((2, 10)), 0)
        with pytest.raises(DataError):
            Recording(np.zeros((2, 10)), 100, ["A", "A"])
        with pytest.raises(DataError):
            Recording(np.zeros((2, 10)), 100, ["A"])
        with pytest.raises(DataError):
            Recording(np.zeros((2, 10)), 100, markers=[EventMarker(10, "x")])
        with pytest.raises(DataError):
            EventMarker(-1, "x")

    def test_labels_indexed(self):
        rec = Recording(np.zeros((3, 4)), 10, ["FP1", "FP2", "CZ"])
        assert [(l.name, l.index) for l in rec.labels] == [("FP1", 0), ("FP2", 1), ("CZ", 2)]


class TestDownsample:
    def test_length_factor_5(self):
        rec = Recording(np.random.default_rng(0).normal(size=(2, 10_000)), 1000)
        out = downsample(rec, 200)
        assert out.rate == 200 and out.n_times == 2000

    def test_floor_length(self):
        out = downsample(Recording(np.ones((1, 1003)), 1000), 200)
        assert out.n_times == 200

    def test_constant_passes(self):
        out = downsample(Recording(np.full((1, 5000), 3.0), 1000), 200)
        np.testing.assert_allclose(out.samples, 3.0, atol=1e-6)

    def test_sine_matches_analytic_resampling(self):
        rate, target = 512, 128
        rec = sine_rec(5.0, rate, 10)
        out = downsample(rec, target)
        # oracle: evaluate the sine directly on the decimated grid
        t_new = np.arange(out.n_times) / target
        expected = np.sin(2 * np.pi * 5.0 * t_new)
        mid = slice(out.n_times // 4, 3 * out.n_times // 4)
        amp_ratio = steady_amplitude(out.samples[0]) / steady_amplitude(expected)
        assert abs(amp_ratio - 1) < 0.02
        np.testing.assert_allclose(out.samples[0, mid], expected[mid], atol=0.02)

    def test_non_integer_factor(self):
        with pytest.raises(NonIntegerFactor):
            downsample(Recording(np.ones((1, 100)), 1000), 300)

    def test_markers_rescaled(self):
        rec = Recording(np.ones((1, 1000)), 1000, markers=[EventMarker(505, "s")])
        assert downsample(rec, 200).markers[0].sample_index == 101

    @given(st.integers(50, 3000), st.sampled_from([1, 2, 4]), st.sampled_from([1, 2, 5]))
    def test_lengths_compose(self, n, f1, f2):
        rate = 1000.0
        rec = Recording(np.zeros((1, n)), rate)
        once = downsample(rec, rate / (f1 * f2))
        twice = downsample(downsample(rec, rate / f1), rate / (f1 * f2))
        assert once.n_times == n // (f1 * f2)
        assert twice.n_times == (n // f1) // f2 == once.n_times


class TestBadChannels:
    def test_iid_noise_none(self, rng):
        rec = Recording(rng.normal(size=(8, 5000)), 100)
        assert detect_bad_channels(rec, 5.0) == []

    def test_scaled_channel(self, rng):
        x = rng.normal(size=(8, 5000))
        x[3] *= 10
        rec = Recording(x, 100)
        var = x.var(axis=1, ddof=1)
        assert var[3] / np.median(var) > 5  # oracle: direct variance ratio ~100
        assert [lab.index for lab in detect_bad_channels(rec, 5.0)] == [3]

    def test_flat_channel(self, rng):
        x = rng.normal(size=(4, 500))
        x[1] = 0
        before = x.copy()
        bad = detect_bad_channels(Recording(x, 100), 5.0, flat_eps=1e-12)
        assert [lab.index for lab in bad] == [1]
        np.testing.assert_array_equal(x, before)

    def test_needs_two_channels(self):
        with pytest.raises(DataError):
            detect_bad_channels(Recording(np.zeros((1, 10)), 10))

    def test_drop(self):
        rec = Recording(np.arange(12.0).reshape(3, 4), 10, ["A", "B", "C"])
        out = drop_channels(rec, ["B"])
        assert out.channel_names == ["A", "C"]
        np.testing.assert_array_equal(out.samples, rec.samples[[0, 2]])


class TestCommonAverage:
    def test_two_channels(self):
        out = rereference_common_average(Recording([[1, 1, 1], [3, 3, 3]], 10))
        np.testing.assert_array_equal(out.samples, [[-1, -1, -1], [1, 1, 1]])

    def test_zero_mean_unchanged(self, rng):
        x = rng.normal(size=(5, 100))
        x -= x.mean(axis=0)
        out = rereference_common_average(Recording(x, 10))
        np.testing.assert_allclose(out.samples, x, atol=1e-12)

    def test_random_column_means(self, rng):
        out = rereference_common_average(Recording(rng.normal(size=(8, 1000)) * 50, 10))
        assert np.abs(out.samples.mean(axis=0)).max() < 1e-9

    @given(st.floats(-3, 3), st.floats(-3, 3))
    def test_linear_and_idempotent(self, a, b):
        r = np.random.default_rng(1)
        x, y = r.normal(size=(2, 4, 50))
        car = lambda z: rereference_common_average(Recording(z, 10)).samples
        np.testing.assert_allclose(car(a * x + b * y), a * car(x) + b * car(y), atol=1e-9)
        np.testing.assert_allclose(car(car(x)), car(x), atol=1e-12)


class TestFilter:
    def test_passband_tone(self):
        out = filt(sine_rec(10, 200, 10), bandpass(0.5, 50))
        amp = steady_amplitude(out.samples[0])
        assert abs(20 * np.log10(amp)) <= 3

    def test_stopband_tone(self):
        out = filt(sine_rec(60, 200, 10), bandpass(0.5, 50))
        assert steady_amplitude(out.samples[0]) <= 0.1

    def test_dc_removed(self):
        out = filt(Recording(np.full((1, 4000), 5.0), 200), bandpass(0.5, 50))
        assert steady_amplitude(out.samples[0]) < 0.05

    @pytest.mark.parametrize("lo,hi,rate", [(0.5, 50, 200), (4, 8, 128), (8, 12, 256)])
    def test_response_contract(self, lo, hi, rate):
        # geometric centre passes within 3 dB; 2x upper and 0.5x lower are >= 20 dB down
        spec = bandpass(lo, hi)
        def gain(f):
            rec = sine_rec(f, rate, 200 / lo if lo < 1 else 30)
            return steady_amplitude(filt(rec, spec).samples[0])
        assert abs(20 * np.log10(gain(np.sqrt(lo * hi)))) <= 3
        if 2 * hi < rate / 2:
            assert 20 * np.log10(gain(2 * hi)) <= -20
        assert 20 * np.log10(gain(0.5 * lo)) <= -20

    def test_lowpass(self):
        spec = lowpass(8.0)
        assert steady_amplitude(filt(sine_rec(2, 200, 10), spec).samples[0]) > 0.98
        assert steady_amplitude(filt(sine_rec(30, 200, 10), spec).samples[0]) < 0.01

    def test_zero_phase_symmetric_pulse(self):
        x = np.zeros(8001)
        x[3980:4021] = np.hanning(41)
        out = filt(Recording(x[None], 200), bandpass(0.5, 50)).samples[0]
        assert abs(int(np.argmax(out)) - 4000) <= 1
        np.testing.assert_allclose(out[3900:4101], out[3900:4101][::-1], atol=1e-6)

    @given(st.floats(-5, 5), st.floats(-5, 5))
    def test_linearity(self, a, b):
        r = np.random.default_rng(7)
        x, y = r.normal(size=(2, 2, 600))
        f = lambda z: filt(Recording(z, 200), bandpass(0.5, 50)).samples
        lhs, rhs = f(a * x + b * y), a * f(x) + b * f(y)
        assert np.abs(lhs - rhs).max() <= 1e-6 * max(1.0, np.abs(rhs).max())

    @pytest.mark.parametrize("spec", [
        FilterSpec("bandpass", 0, 50), FilterSpec("bandpass", 30, 20),
        FilterSpec("bandpass", 0.5, 100), FilterSpec("lowpass", None, 120),
        FilterSpec("bandpass", 0.5, 50, order=3), FilterSpec("notch", 1, 2),
    ])
    def test_invalid(self, spec):
        with pytest.raises(InvalidCutoff):
            filt(Recording(np.zeros((1, 100)), 200), spec)


class TestSegment:
    @pytest.mark.parametrize("rate,expected", [(200, 200), (128, 128)])
    def test_one_second_windows(self, rate, expected):
        segs = segment(Recording(np.zeros((2, 60 * rate)), rate), 1.0, label=1, recording_id="r")
        assert len(segs) == 60
        assert all(s.n_times == expected and s.class_label == 1 for s in segs)
        assert segs[3].origin == ("r", 3 * expected)

    def test_partial_discarded(self):
        rec = Recording(np.arange(150.0)[None], 100)
        segs = segment(rec, 1.0)
        assert len(segs) == 1
        np.testing.assert_array_equal(segs[0].samples[0], np.arange(100.0))

    def test_too_long(self):
        with pytest.raises(WindowTooLong):
            segment(Recording(np.zeros((1, 50)), 100), 1.0)

    @given(st.integers(10, 2000), st.floats(0.05, 2.0))
    def test_sample_count_preserved(self, n, w):
        rec = Recording(np.zeros((1, n)), 100)
        width = int(round(w * 100))
        if n < width:
            return
        segs = segment(rec, w)
        covered = sum(s.n_times for s in segs)
        assert 0 <= n - covered < width


class TestBaseline:
    def test_constant(self):
        out = baseline_correct(Segment(np.full((2, 50), 2.0), 100), (0.1, 0.2))
        np.testing.assert_array_equal(out.samples, 0)

    def test_first_half(self):
        out = baseline_correct(Segment([[1, 1, 2, 2]], 4), (0.0, 0.5))
        np.testing.assert_array_equal(out.samples, [[0, 0, 1, 1]])

    def test_random(self, rng):
        seg = Segment(rng.normal(size=(4, 300)) + 7, 1000)
        out = baseline_correct(seg, (0.05, 0.1))
        assert np.abs(out.samples[:, 50:100].mean(axis=1)).max() < 1e-9

    def test_out_of_range(self):
        with pytest.raises(WindowOutOfRange):
            baseline_correct(Segment(np.zeros((1, 10)), 100), (0.05, 0.2))


def test_csv_roundtrip(tmp_path, rng):
    rec = Recording(rng.normal(size=(3, 40)), 128.0, ["FP1", "FP2", "CZ"],
                    [EventMarker(5, "beat"), EventMarker(30, "stim")])
    write_recording_csv(rec, tmp_path / "r.csv", tmp_path / "r.markers")
    first = (tmp_path / "r.csv").read_text().splitlines()[0]
    assert first == "time,FP1,FP2,CZ"
    back = read_recording_csv(tmp_path / "r.csv", 128.0, tmp_path / "r.markers")
    np.testing.assert_array_equal(back.samples, rec.samples)
    assert back.markers == rec.markers and back.channel_names == rec.channel_names
