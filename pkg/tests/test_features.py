import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from sklearn.base import clone

from eeg_bilstm.core import Segment, apply_filter, bandpass
from eeg_bilstm.errors import DataError, DegenerateSignal, InvalidCutoff, NoPeak, ParseError
from eeg_bilstm.features import (
    DEFAULT_BANDS,
    BandDefinition,
    DifferentialEntropy,
    FeatureSequence,
    band_decompose,
    de_sequence,
    detect_p300,
    differential_entropy,
    extract_de_features,
    parse_bands,
    read_feature_sequence,
    write_feature_sequence,
)
from eeg_bilstm.synth import generate_erp_epoch

HALF_LN_2PIE = 0.5 * math.log(2 * math.pi * math.e)
BAND = {b.name: i for i, b in enumerate(DEFAULT_BANDS)}


def unit_variance(n, seed=0):
    x = np.random.default_rng(seed).normal(size=n)
    x -= x.mean()
    return x / x.std(ddof=1)


class TestDifferentialEntropy:
    def test_unit_variance(self):
        assert abs(differential_entropy(unit_variance(1000)) - 1.41894) < 1e-5
        assert abs(differential_entropy(unit_variance(1000)) - HALF_LN_2PIE) < 1e-9

    def test_zero_at_inverse_2pie(self):
        x = unit_variance(500) * math.sqrt(1 / (2 * math.pi * math.e))
        assert abs(differential_entropy(x)) < 1e-9

    def test_gaussian_draws(self):
        x = np.random.default_rng(2024).normal(0, 2, size=100_000)
        # oracle: sample variance by explicit sums, then the closed form
        m = sum(x) / len(x)
        var = sum((v - m) ** 2 for v in x) / (len(x) - 1)
        oracle = 0.5 * math.log(2 * math.pi * math.e * var)
        de = differential_entropy(x)
        assert abs(de - oracle) < 1e-9
        assert abs(de - 2.11209) / 2.11209 < 0.01

    def test_degenerate(self):
        with pytest.raises(DegenerateSignal):
            differential_entropy(np.zeros(10))
        with pytest.raises(DataError):
            differential_entropy([1.0])

    def test_axis(self, rng):
        x = rng.normal(size=(3, 4, 50))
        de = differential_entropy(x, axis=-1)
        assert de.shape == (3, 4)
        assert de[1, 2] == pytest.approx(differential_entropy(x[1, 2]), abs=1e-12)

    @given(st.floats(-1e3, 1e3), st.floats(0.01, 100))
    def test_shift_and_scale(self, c, k):
        x = unit_variance(200, seed=3) * 1.7
        base = differential_entropy(x)
        assert abs(differential_entropy(x + c) - base) < 1e-9
        assert abs(differential_entropy(k * x) - (base + math.log(k))) < 1e-9

    @given(st.floats(1e-6, 1e6), st.floats(1e-6, 1e6))
    def test_monotone(self, v1, v2):
        x = unit_variance(64, seed=5)
        d1, d2 = differential_entropy(x * math.sqrt(v1)), differential_entropy(x * math.sqrt(v2))
        assert (d1 < d2) == (v1 < v2) or math.isclose(v1, v2, rel_tol=1e-12)


class TestBands:
    def test_table_values(self):
        assert [(b.name, b.low_hz, b.high_hz) for b in DEFAULT_BANDS] == [
            ("delta", 0.1, 3.0), ("theta", 4.0, 7.0), ("alpha", 8.0, 12.0),
            ("beta", 12.5, 28.0), ("gamma", 29.0, 50.0)]
        for a, b in zip(DEFAULT_BANDS, DEFAULT_BANDS[1:]):
            assert a.high_hz < b.low_hz

    def test_parse(self):
        assert parse_bands("a:1-4, b:4.5-8") == (BandDefinition("a", 1, 4), BandDefinition("b", 4.5, 8))
        with pytest.raises(InvalidCutoff):
            parse_bands("a:4-1")
        with pytest.raises(InvalidCutoff):
            parse_bands("nonsense")

    def test_sine_lands_in_alpha(self):
        rate = 128
        t = np.arange(4 * rate) / rate
        seg = Segment(np.sin(2 * np.pi * 10 * t), rate)
        total = seg.samples.var()
        power = [b.samples.var() / total for b in band_decompose(seg)]
        assert power[BAND["alpha"]] >= 0.70
        assert power[BAND["delta"]] < 0.05 and power[BAND["gamma"]] < 0.05

    def test_zero_signal(self):
        outs = band_decompose(Segment(np.zeros((2, 128)), 128))
        assert len(outs) == 5 and all(np.all(o.samples == 0) for o in outs)
        assert all(o.samples.shape == (2, 128) for o in outs)

    def test_white_noise_power_accounting(self, rng):
        seg = Segment(rng.normal(size=(4, 128 * 20)), 128)
        total = seg.samples.var(axis=1)
        parts = sum(b.samples.var(axis=1) for b in band_decompose(seg))
        assert np.all(parts <= total)

    def test_gamma_clipped_at_low_rate(self, rng):
        # 0.45 * 100 Hz = 45 Hz < 50 Hz upper edge
        outs = band_decompose(Segment(rng.normal(size=(1, 400)), 100))
        assert len(outs) == 5
        with pytest.raises(InvalidCutoff):
            band_decompose(Segment(rng.normal(size=(1, 400)), 60))


class TestExtract:
    def test_alpha_entry_matches_eq(self, rng):
        seg = Segment(rng.normal(size=(3, 512)), 128)
        fs = extract_de_features([seg])
        # oracle: filter independently, measure variance, apply the closed form
        alpha = apply_filter(seg.samples, bandpass(8.0, 12.0), 128)
        var = alpha.var(axis=1, ddof=1)
        assert 0.05 < var.mean() < 0.5
        np.testing.assert_allclose(fs.values[0, :, BAND["alpha"]],
                                   0.5 * np.log(2 * np.pi * np.e * var), atol=1e-12)

    def test_identical_segments(self, rng):
        seg = Segment(rng.normal(size=(2, 128)), 128)
        fs = extract_de_features([seg, seg])
        np.testing.assert_array_equal(fs.values[0], fs.values[1])
        assert fs.values.shape == (2, 2, 5)

    def test_scale_adds_ln_k(self, rng):
        x = rng.normal(size=(2, 128))
        a = extract_de_features([Segment(x, 128)]).values
        b = extract_de_features([Segment(2 * x, 128)]).values
        np.testing.assert_allclose(b - a, math.log(2), atol=1e-9)

    def test_degenerate_coordinates(self, rng):
        x = rng.normal(size=(3, 128))
        x[1] = 0
        with pytest.raises(DegenerateSignal) as info:
            extract_de_features([Segment(rng.normal(size=(3, 128)), 128), Segment(x, 128)])
        assert info.value.segment == 1 and info.value.channel == 1

    def test_shape_mismatch(self, rng):
        with pytest.raises(DataError):
            extract_de_features([Segment(rng.normal(size=(2, 128)), 128),
                                 Segment(rng.normal(size=(2, 64)), 128)])

    def test_sequence_single_step_matches(self, rng):
        seg = Segment(rng.normal(size=(3, 128)), 128)
        np.testing.assert_allclose(de_sequence(seg, steps=1).values,
                                   extract_de_features([seg]).values, atol=1e-12)

    def test_sequence_shape_finite(self, rng):
        fs = de_sequence(Segment(rng.normal(size=(8, 128)), 128), steps=4)
        assert fs.values.shape == (4, 8, 5) and fs.flat().shape == (4, 40)
        assert np.all(np.isfinite(fs.values))

    def test_transformer(self, rng):
        X = rng.normal(size=(5, 3, 128))
        tr = DifferentialEntropy(rate=128, steps=2)
        out = clone(tr).fit_transform(X)
        assert out.shape == (5, 2, 15)
        np.testing.assert_allclose(out[2], de_sequence(Segment(X[2], 128), steps=2).flat())
        assert tr.get_params()["steps"] == 2

    def test_file_roundtrip(self, tmp_path, rng):
        fs = FeatureSequence(rng.normal(size=(3, 2, 5)), 4.0, None, ("FP1", "FP2"),
                             tuple(b.name for b in DEFAULT_BANDS))
        write_feature_sequence(fs, tmp_path / "f.csv")
        lines = (tmp_path / "f.csv").read_text().splitlines()
        assert lines[0] == "t,channel,band,de" and len(lines) == 31
        back = read_feature_sequence(tmp_path / "f.csv", 4.0)
        np.testing.assert_array_equal(back.values, fs.values)
        assert back.channels == fs.channels and back.bands == fs.bands

    def test_file_corrupt(self, tmp_path):
        (tmp_path / "f.csv").write_text("t,channel,band,de\n0,A,alpha,zzz\n")
        with pytest.raises(ParseError):
            read_feature_sequence(tmp_path / "f.csv")


class TestP300:
    @pytest.mark.parametrize("latency", [300.0, 350.0])
    def test_recovers_bump(self, latency):
        ep = generate_erp_epoch(500, 100, 600, latency, 10.0, 0.5, seed=3)
        (comp,) = detect_p300(ep.segment, ep.stimulus_index)
        assert abs(comp.latency_ms - latency) <= 10
        assert abs(comp.amplitude - 10.0) <= 1

    def test_flat_no_peak(self):
        with pytest.raises(NoPeak):
            detect_p300(Segment(np.zeros((1, 400)), 500), 50)

    def test_noise_only_no_peak(self):
        ep = generate_erp_epoch(500, 100, 600, 300, 0.0, 1.0, seed=9)
        with pytest.raises(NoPeak):
            detect_p300(ep.segment, ep.stimulus_index, lowpass_hz=None, threshold_sd=10)

    @given(st.floats(-500, 500))
    def test_offset_invariant(self, c):
        ep = generate_erp_epoch(250, 100, 600, 320, 8.0, 0.4, seed=1)
        a = detect_p300(ep.segment, ep.stimulus_index)[0]
        b = detect_p300(Segment(ep.segment.samples + c, 250), ep.stimulus_index)[0]
        assert a.latency_ms == b.latency_ms
        assert b.amplitude == pytest.approx(a.amplitude, abs=1e-6)

    def test_per_channel(self):
        ep = generate_erp_epoch(500, 100, 600, 300, 10.0, 0.2, seed=2, channels=3)
        comps = detect_p300(ep.segment, ep.stimulus_index)
        assert [c.channel.index for c in comps] == [0, 1, 2]

    def test_window_must_fit(self):
        with pytest.raises(DataError):
            detect_p300(Segment(np.zeros((1, 100)), 500), 50)
