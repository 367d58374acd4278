"""Differential-entropy band features and P300 peak extraction."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from ._io import atomic_open, fmt_float
from .core import ChannelLabel, Segment, apply_filter, bandpass, lowpass
from .errors import DataError, DegenerateSignal, InvalidCutoff, NoPeak, ParseError

__all__ = [
    "BandDefinition",
    "DEFAULT_BANDS",
    "VARIANCE_FLOOR",
    "FeatureSequence",
    "ErpComponent",
    "differential_entropy",
    "band_decompose",
    "extract_de_features",
    "de_sequence",
    "detect_p300",
    "DifferentialEntropy",
    "read_feature_sequence",
    "write_feature_sequence",
    "parse_bands",
]

VARIANCE_FLOOR = 1e-12
_LOG_2PI_E = math.log(2.0 * math.pi * math.e)


@dataclass(frozen=True)
class BandDefinition:
    name: str
    low_hz: float
    high_hz: float

    def __post_init__(self):
        if not (0 < self.low_hz < self.high_hz):
            raise InvalidCutoff(f"band {self.name!r} needs 0 < low < high, got "
                                f"({self.low_hz}, {self.high_hz})")


DEFAULT_BANDS = (
    BandDefinition("delta", 0.1, 3.0),
    BandDefinition("theta", 4.0, 7.0),
    BandDefinition("alpha", 8.0, 12.0),
    BandDefinition("beta", 12.5, 28.0),
    BandDefinition("gamma", 29.0, 50.0),
)


def parse_bands(text):
    """Parse ``"delta:0.1-3,theta:4-7,..."`` into band definitions."""
    bands = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        try:
            name, edges = item.split(":")
            lo, hi = edges.split("-")
            bands.append(BandDefinition(name.strip(), float(lo), float(hi)))
        except ValueError:
            raise InvalidCutoff(f"cannot parse band {item!r}; expected name:low-high") from None
    if not bands:
        raise InvalidCutoff("empty band list")
    return tuple(bands)


@dataclass(frozen=True)
class FeatureSequence:
    """DE values shaped (time steps, channels, bands), in nats."""

    values: np.ndarray
    rate: float
    class_label: Optional[int] = None
    channels: tuple = ()
    bands: tuple = ()

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 3:
            raise DataError(f"feature values must be 3-D, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise DataError("feature values must be finite")
        object.__setattr__(self, "values", v)

    @property
    def n_steps(self):
        return self.values.shape[0]

    def flat(self):
        """(time steps, channels * bands), channel-major."""
        return self.values.reshape(self.values.shape[0], -1)


@dataclass(frozen=True)
class ErpComponent:
    latency_ms: float
    amplitude: float
    channel: ChannelLabel


def differential_entropy(samples, axis=-1, floor=VARIANCE_FLOOR):
    """Gaussian differential entropy ``0.5 * ln(2*pi*e*var)`` in nats.

    ``var`` is the unbiased sample variance along ``axis``. Returns a float
    for 1-D input and an array otherwise.
    """
    x = np.asarray(samples, dtype=np.float64)
    if x.shape[axis] < 2:
        raise DataError("differential entropy needs at least 2 samples")
    var = x.var(axis=axis, ddof=1)
    if np.any(~(var > floor)):
        raise DegenerateSignal(f"sample variance at or below floor {floor:g}")
    de = 0.5 * (_LOG_2PI_E + np.log(var))
    return float(de) if np.ndim(de) == 0 else de


def _clip_band(band, rate):
    hi = min(band.high_hz, 0.45 * rate)
    if not band.low_hz < hi:
        raise InvalidCutoff(f"band {band.name!r} lies above 0.45 x rate ({rate:g} Hz)")
    return hi


def band_decompose(seg: Segment, bands=DEFAULT_BANDS, order: int = 4) -> list:
    """One zero-phase band-passed copy of ``seg`` per band."""
    out = []
    for band in bands:
        hi = _clip_band(band, seg.rate)
        y = apply_filter(seg.samples, bandpass(band.low_hz, hi, order), seg.rate)
        out.append(replace(seg, samples=y))
    return out


def _band_stack(samples, rate, bands, order):
    # (bands, channels, time)
    return np.stack([
        apply_filter(samples, bandpass(b.low_hz, _clip_band(b, rate), order), rate)
        for b in bands
    ])


def _de_or_raise(x, where):
    try:
        return differential_entropy(x, axis=-1)
    except DegenerateSignal:
        var = x.var(axis=-1, ddof=1)
        idx = np.argwhere(~(var > VARIANCE_FLOOR))[0]
        coords = dict(zip(("segment", "band", "channel"), where + tuple(int(i) for i in idx)))
        raise DegenerateSignal(
            "degenerate signal (variance <= %g) at %s" % (
                VARIANCE_FLOOR, ", ".join(f"{k}={v}" for k, v in coords.items())),
            **coords,
        ) from None


def extract_de_features(segments: Sequence[Segment], bands=DEFAULT_BANDS,
                        order: int = 4) -> FeatureSequence:
    """DE of each band-passed channel of each segment, one time step per segment."""
    if not segments:
        raise DataError("no segments")
    shape, rate = segments[0].samples.shape, segments[0].rate
    rows = []
    for t, seg in enumerate(segments):
        if seg.samples.shape != shape or seg.rate != rate:
            raise DataError(f"segment {t} has shape/rate {seg.samples.shape}/{seg.rate}, "
                            f"expected {shape}/{rate}")
        stack = _band_stack(seg.samples, rate, bands, order)
        rows.append(_de_or_raise(stack, (t,)).T)
    return FeatureSequence(
        np.stack(rows),
        rate=rate / shape[1],
        class_label=segments[0].class_label,
        channels=tuple(lab.name for lab in segments[0].labels),
        bands=tuple(b.name for b in bands),
    )


def de_sequence(seg: Segment, bands=DEFAULT_BANDS, steps: int = 4,
                order: int = 4) -> FeatureSequence:
    """Band-decompose a whole segment, then take DE over ``steps`` equal sub-windows.

    With ``steps=1`` this equals ``extract_de_features([seg])``.
    """
    width = seg.n_times // steps
    if steps < 1 or width < 2:
        raise DataError(f"cannot split {seg.n_times} samples into {steps} sub-windows")
    stack = _band_stack(seg.samples, seg.rate, bands, order)
    stack = stack[..., : steps * width].reshape(stack.shape[0], stack.shape[1], steps, width)
    # -> (steps, bands, channels, width)
    de = _de_or_raise(stack.transpose(2, 0, 1, 3), ())
    return FeatureSequence(
        de.transpose(0, 2, 1),
        rate=seg.rate / width,
        class_label=seg.class_label,
        channels=tuple(lab.name for lab in seg.labels),
        bands=tuple(b.name for b in bands),
    )


def detect_p300(epoch: Segment, stimulus_index: int, window_ms=(250.0, 400.0),
                baseline_ms: float = 50.0, lowpass_hz: Optional[float] = 20.0,
                threshold_sd: float = 2.0) -> list:
    """Largest positive deflection in the post-stimulus window, per channel.

    Amplitudes are measured against the mean of the ``baseline_ms`` before
    the stimulus, and must exceed ``threshold_sd`` times that window's
    standard deviation. The epoch is smoothed with a zero-phase low-pass
    first (``lowpass_hz=None`` disables it).
    """
    rate = epoch.rate
    lo = stimulus_index + int(math.ceil(window_ms[0] * rate / 1000.0 - 1e-9))
    hi = stimulus_index + int(math.floor(window_ms[1] * rate / 1000.0 + 1e-9))
    b0 = stimulus_index - int(round(baseline_ms * rate / 1000.0))
    if b0 < 0 or hi >= epoch.n_times or lo > hi or stimulus_index - b0 < 2:
        raise DataError(
            f"search window {window_ms} ms / baseline {baseline_ms} ms does not fit the epoch")
    x = epoch.samples
    if lowpass_hz is not None and lowpass_hz < rate / 2:
        x = apply_filter(x, lowpass(lowpass_hz), rate)
    comps = []
    for ch, lab in enumerate(epoch.labels):
        base = x[ch, b0:stimulus_index]
        mu, sd = base.mean(), base.std(ddof=1)
        win = x[ch, lo:hi + 1] - mu
        k = int(np.argmax(win))
        amp = float(win[k])
        if not (amp > 0 and amp > threshold_sd * sd):
            raise NoPeak(f"no P300 peak above {threshold_sd:g} SD on channel {lab.name}",
                         channel=lab)
        comps.append(ErpComponent((lo + k - stimulus_index) * 1000.0 / rate, amp, lab))
    return comps


class DifferentialEntropy(TransformerMixin, BaseEstimator):
    """Map raw segments ``(n, channels, samples)`` to DE sequences
    ``(n, steps, channels * bands)``.

    Stateless; ``fit`` only records the input shape.
    """

    def __init__(self, rate=128.0, bands=DEFAULT_BANDS, steps=4, order=4):
        self.rate = rate
        self.bands = bands
        self.steps = steps
        self.order = order

    def fit(self, X, y=None):
        X = _check_segments(X)
        self.n_channels_in_ = X.shape[1]
        self.n_features_out_ = X.shape[1] * len(self.bands)
        return self

    def transform(self, X):
        X = _check_segments(X)
        return np.stack([
            de_sequence(Segment(x, self.rate), self.bands, self.steps, self.order).flat()
            for x in X
        ])


def _check_segments(X):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 3:
        raise DataError(f"expected (n_segments, channels, samples), got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise DataError("segments contain non-finite values")
    return X


# -- file format -------------------------------------------------------------

def write_feature_sequence(fs: FeatureSequence, path):
    T, C, B = fs.values.shape
    chans = fs.channels or tuple(f"CH{c + 1}" for c in range(C))
    bands = fs.bands or tuple(f"B{b + 1}" for b in range(B))
    with atomic_open(path) as fh:
        fh.write("t,channel,band,de\n")
        for t in range(T):
            for c in range(C):
                for b in range(B):
                    fh.write(f"{t},{chans[c]},{bands[b]},{fmt_float(fs.values[t, c, b])}\n")


def read_feature_sequence(path, rate=1.0, class_label=None) -> FeatureSequence:
    steps, chans, bands, entries = [], [], [], {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["t", "channel", "band", "de"]:
            raise ParseError(f"{path}: header must be 't,channel,band,de'")
        for lineno, row in enumerate(reader, 2):
            if not row:
                continue
            if len(row) != 4:
                raise ParseError(f"{path}:{lineno}: expected 4 fields")
            try:
                t, de = int(row[0]), float(row[3])
            except ValueError:
                raise ParseError(f"{path}:{lineno}: bad numeric field") from None
            for seen, key in ((steps, t), (chans, row[1]), (bands, row[2])):
                if key not in seen:
                    seen.append(key)
            entries[(t, row[1], row[2])] = de
    if not entries:
        raise ParseError(f"{path}: no feature rows")
    values = np.full((len(steps), len(chans), len(bands)), np.nan)
    for (t, c, b), v in entries.items():
        values[steps.index(t), chans.index(c), bands.index(b)] = v
    if not np.all(np.isfinite(values)):
        raise ParseError(f"{path}: missing or non-finite entries")
    return FeatureSequence(values, rate, class_label, tuple(chans), tuple(bands))
