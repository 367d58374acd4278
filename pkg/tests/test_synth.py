import numpy as np
import pytest
from scipy.signal import welch

from eeg_bilstm.core import Segment, bandpass, filter as filter_rec, rereference_common_average, segment
from eeg_bilstm.errors import InvalidConfig, ParseError
from eeg_bilstm.features import DEFAULT_BANDS, band_decompose, extract_de_features
from eeg_bilstm.synth import (
    ClassProfile,
    SynthConfig,
    default_profiles,
    generate_erp_epoch,
    generate_recording,
    make_dataset,
    read_labels,
    write_labels,
)

NAMES = [b.name for b in DEFAULT_BANDS]


def only(band, floor=0.0, **kw):
    profiles = (ClassProfile(0, {band: 1.0}), ClassProfile(1, {"theta": 1.0}))
    return SynthConfig(profiles=profiles, noise_floor=floor, **kw)


class TestRecording:
    def test_alpha_only_power(self):
        rec = generate_recording(only("alpha", segments_per_class=20), 0)
        seg = Segment(rec.samples, rec.rate)
        total = np.sum(rec.samples ** 2)
        alpha = band_decompose(seg)[NAMES.index("alpha")].samples
        assert np.sum(alpha ** 2) / total >= 0.80

    def test_deterministic(self):
        cfg = SynthConfig(segments_per_class=10, seed=3)
        a, b = generate_recording(cfg, 2), generate_recording(cfg, 2)
        assert a.samples.tobytes() == b.samples.tobytes()
        c = generate_recording(SynthConfig(segments_per_class=10, seed=4), 2)
        assert not np.array_equal(a.samples, c.samples)

    def test_floor_only_flat(self):
        profiles = (ClassProfile(0, {}), ClassProfile(1, {"alpha": 1.0}))
        cfg = SynthConfig(profiles=profiles, noise_floor=1.0, segments_per_class=60)
        rec = generate_recording(cfg, 0)
        f, pxx = welch(rec.samples, fs=rec.rate, nperseg=128)
        mean = pxx.mean(axis=0)[2:-2]
        assert mean.max() / mean.min() < 1.5

    def test_shape_and_markers(self):
        cfg = SynthConfig(segments_per_class=7)
        rec = generate_recording(cfg, 1)
        assert rec.samples.shape == (8, 7 * 128)
        assert [m.sample_index for m in rec.markers] == list(range(0, 7 * 128, 128))
        assert rec.markers[0].label == "neutral"

    def test_survives_preprocessing(self):
        rec = generate_recording(SynthConfig(segments_per_class=6), 0)
        rec = rereference_common_average(filter_rec(rec, bandpass(0.5, 50)))
        segs = segment(rec, 1.0, 0)
        assert np.all(np.isfinite(extract_de_features(segs).values))

    @pytest.mark.parametrize("bad", [
        dict(profiles=(ClassProfile(0, {"alpha": 1}),)),
        dict(profiles=(ClassProfile(0, {"alpha": 1}), ClassProfile(0, {"beta": 1}))),
        dict(rate=90.0),
        dict(profiles=(ClassProfile(0, {"mu": 1}), ClassProfile(1, {"beta": 1}))),
        dict(profiles=(ClassProfile(0, {}), ClassProfile(1, {"beta": 1})), noise_floor=0.0),
    ])
    def test_invalid(self, bad):
        with pytest.raises(InvalidConfig):
            generate_recording(SynthConfig(**bad), 1)

    def test_negative_gain(self):
        with pytest.raises(InvalidConfig):
            ClassProfile(0, {"alpha": -1})

    def test_unknown_class(self):
        with pytest.raises(InvalidConfig):
            generate_recording(SynthConfig(segments_per_class=5), 9)


class TestDataset:
    def test_split_sizes_balance(self):
        ds = make_dataset(SynthConfig())
        assert len(ds.train_segments) == 480 and len(ds.val_segments) == 120
        for labels, n in ((ds.train_labels, 160), (ds.val_labels, 40)):
            counts = np.bincount(labels)
            assert np.all(np.abs(counts - n) <= 1)
        assert not set(ds.train_index) & set(ds.val_index)

    def test_split_deterministic(self):
        cfg = SynthConfig(segments_per_class=20, seed=5)
        a, b = make_dataset(cfg), make_dataset(cfg)
        np.testing.assert_array_equal(a.train_index, b.train_index)
        assert a.val_segments[3].samples.tobytes() == b.val_segments[3].samples.tobytes()

    def test_too_few(self):
        with pytest.raises(InvalidConfig):
            make_dataset(SynthConfig(segments_per_class=4))

    def test_separability(self):
        cfg = SynthConfig(segments_per_class=40, seed=1)
        ds = make_dataset(cfg)
        segs = ds.train_segments + ds.val_segments
        labels = np.r_[ds.train_labels, ds.val_labels]
        de = extract_de_features(segs).values.mean(axis=1)  # (n, bands)
        dominant = {0: "gamma", 1: "alpha", 2: "theta"}
        for cls, band in dominant.items():
            b = NAMES.index(band)
            own = de[labels == cls, b].mean()
            for other in set(dominant) - {cls}:
                assert own - de[labels == other, b].mean() >= 0.2

    def test_default_profiles(self):
        p = default_profiles()
        assert [x.label for x in p] == ["vigorous", "neutral", "passive"]
        assert p[0].band_gains["gamma"] == 4 and p[0].band_gains["alpha"] == 1


class TestErp:
    def test_noiseless_peak(self):
        ep = generate_erp_epoch(500, 100, 600, 300, 10.0, 0.0)
        x = ep.segment.samples[0]
        assert int(np.argmax(x)) == ep.stimulus_index + 150
        assert x.max() == 10.0

    def test_amplitude_zero_is_noise(self):
        ep = generate_erp_epoch(500, 100, 600, 300, 0.0, 1.0, seed=4)
        x = ep.segment.samples[0]
        assert abs(x.mean()) < 0.15 and 0.9 < x.std() < 1.1

    def test_invalid(self):
        with pytest.raises(InvalidConfig):
            generate_erp_epoch(500, 100, 600, 700, 10, 0)
        with pytest.raises(InvalidConfig):
            generate_erp_epoch(500, 100, 600, 0, 10, 0)


class TestLabelsFile:
    def test_roundtrip(self, tmp_path):
        write_labels([2, 0, 1], tmp_path / "l.csv")
        np.testing.assert_array_equal(read_labels(tmp_path / "l.csv"), [2, 0, 1])

    def test_bad(self, tmp_path):
        (tmp_path / "l.csv").write_text("segment_index,class_id\n0,1\n2,1\n")
        with pytest.raises(ParseError):
            read_labels(tmp_path / "l.csv")
