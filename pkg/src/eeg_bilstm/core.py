"""EEG recording types and the preprocessing chain.

The chain mirrors a conventional offline workflow: decimate, drop bad
channels, re-reference to the common average, band-pass, cut into fixed
windows. All operations are pure; they return new objects and never mutate
their inputs.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
from scipy import signal as sps

from ._io import atomic_open, fmt_float
from .errors import (
    DataError,
    InvalidCutoff,
    NonIntegerFactor,
    ParseError,
    WindowOutOfRange,
    WindowTooLong,
)

__all__ = [
    "ChannelLabel",
    "EventMarker",
    "Recording",
    "Segment",
    "FilterSpec",
    "downsample",
    "detect_bad_channels",
    "drop_channels",
    "rereference_common_average",
    "filter",
    "segment",
    "baseline_correct",
    "read_recording_csv",
    "write_recording_csv",
    "read_markers",
    "write_markers",
]


@dataclass(frozen=True)
class ChannelLabel:
    name: str
    index: int


@dataclass(frozen=True)
class EventMarker:
    sample_index: int
    label: str

    def __post_init__(self):
        if self.sample_index < 0:
            raise DataError(f"marker sample_index must be >= 0, got {self.sample_index}")


def _as_labels(labels, n):
    if labels is None:
        return tuple(ChannelLabel(f"CH{i + 1}", i) for i in range(n))
    out = []
    for i, lab in enumerate(labels):
        name = lab.name if isinstance(lab, ChannelLabel) else str(lab)
        out.append(ChannelLabel(name, i))
    return tuple(out)


@dataclass(frozen=True)
class Recording:
    """Multi-channel signal, ``samples`` shaped (channels, time), in microvolts."""

    samples: np.ndarray
    rate: float
    labels: tuple = None
    markers: tuple = ()

    def __post_init__(self):
        x = np.asarray(self.samples, dtype=np.float64)
        if x.ndim != 2:
            raise DataError(f"samples must be 2-D (channels, time), got shape {x.shape}")
        if not self.rate > 0:
            raise DataError(f"rate must be positive, got {self.rate}")
        labels = _as_labels(self.labels, x.shape[0])
        if len(labels) != x.shape[0]:
            raise DataError(f"{len(labels)} labels for {x.shape[0]} channels")
        names = [lab.name for lab in labels]
        if len(set(names)) != len(names):
            raise DataError("channel names must be unique")
        markers = tuple(self.markers)
        for m in markers:
            if m.sample_index >= x.shape[1]:
                raise DataError(
                    f"marker {m.label!r} at sample {m.sample_index} beyond length {x.shape[1]}"
                )
        object.__setattr__(self, "samples", x)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "markers", markers)

    @property
    def n_channels(self):
        return self.samples.shape[0]

    @property
    def n_times(self):
        return self.samples.shape[1]

    @property
    def channel_names(self):
        return [lab.name for lab in self.labels]

    def with_samples(self, samples, **changes):
        return replace(self, samples=samples, **changes)


@dataclass(frozen=True)
class Segment:
    """Fixed-length window cut from a recording (or a stimulus-locked epoch)."""

    samples: np.ndarray
    rate: float
    class_label: Optional[int] = None
    origin: tuple = ("", 0)
    labels: tuple = None

    def __post_init__(self):
        x = np.asarray(self.samples, dtype=np.float64)
        if x.ndim == 1:
            x = x[np.newaxis, :]
        if x.ndim != 2:
            raise DataError(f"segment samples must be 2-D, got shape {x.shape}")
        if not self.rate > 0:
            raise DataError(f"rate must be positive, got {self.rate}")
        object.__setattr__(self, "samples", x)
        object.__setattr__(self, "labels", _as_labels(self.labels, x.shape[0]))

    @property
    def n_channels(self):
        return self.samples.shape[0]

    @property
    def n_times(self):
        return self.samples.shape[1]


@dataclass(frozen=True)
class FilterSpec:
    """Butterworth filter description.

    ``order`` is the prototype order per transition edge, so a band-pass
    spec of order 4 yields an 8th-order realisation.  For ``kind="lowpass"``
    the cutoff is ``high_hz`` and ``low_hz`` is ignored.
    """

    kind: str
    low_hz: Optional[float] = None
    high_hz: Optional[float] = None
    order: int = 4

    def validate(self, rate):
        nyq = rate / 2.0
        if self.kind not in ("lowpass", "bandpass"):
            raise InvalidCutoff(f"unknown filter kind {self.kind!r}")
        if not isinstance(self.order, (int, np.integer)) or self.order <= 0 or self.order % 2:
            raise InvalidCutoff(f"order must be a positive even integer, got {self.order!r}")
        if self.kind == "bandpass":
            lo, hi = self.low_hz, self.high_hz
            if lo is None or hi is None or not (0 < lo < hi < nyq):
                raise InvalidCutoff(
                    f"band-pass needs 0 < low < high < {nyq:g} Hz, got ({lo}, {hi})"
                )
        else:
            if self.high_hz is None or not (0 < self.high_hz < nyq):
                raise InvalidCutoff(
                    f"low-pass needs 0 < cutoff < {nyq:g} Hz, got {self.high_hz}"
                )

    @property
    def realised_order(self):
        return 2 * self.order if self.kind == "bandpass" else self.order

    def sos(self, rate):
        self.validate(rate)
        if self.kind == "bandpass":
            wn, btype = [self.low_hz, self.high_hz], "bandpass"
        else:
            wn, btype = self.high_hz, "lowpass"
        return sps.butter(self.order, wn, btype=btype, fs=rate, output="sos")


def bandpass(low_hz, high_hz, order=4):
    return FilterSpec("bandpass", low_hz, high_hz, order)


def lowpass(cutoff_hz, order=4):
    return FilterSpec("lowpass", None, cutoff_hz, order)


def apply_filter(x, spec, rate):
    """Zero-phase filter along the last axis of an array."""
    x = np.asarray(x, dtype=np.float64)
    sos = spec.sos(rate)
    n = x.shape[-1]
    padlen = min(3 * spec.realised_order, max(n - 1, 0))
    if n == 0:
        return x.copy()
    return sps.sosfiltfilt(sos, x, axis=-1, padtype="even", padlen=padlen)


def filter(rec: Recording, spec: FilterSpec) -> Recording:  # noqa: A001
    """Zero-phase (forward-backward) Butterworth filtering of every channel."""
    return rec.with_samples(apply_filter(rec.samples, spec, rec.rate))


def downsample(rec: Recording, target_rate: float, order: int = 8) -> Recording:
    """Anti-alias low-pass at 0.45 x ``target_rate`` then keep every n-th sample."""
    ratio = rec.rate / target_rate
    factor = int(round(ratio))
    if factor < 1 or abs(ratio - factor) > 1e-9 * max(ratio, 1.0):
        raise NonIntegerFactor(f"rate {rec.rate:g} is not an integer multiple of {target_rate:g}")
    if factor == 1:
        return rec.with_samples(rec.samples.copy())
    smoothed = apply_filter(rec.samples, lowpass(0.45 * target_rate, order), rec.rate)
    n_out = rec.n_times // factor
    out = smoothed[:, : n_out * factor : factor]
    markers = tuple(
        EventMarker(m.sample_index // factor, m.label)
        for m in rec.markers
        if m.sample_index // factor < n_out
    )
    return rec.with_samples(np.ascontiguousarray(out), rate=float(target_rate), markers=markers)


def detect_bad_channels(rec: Recording, var_factor: float = 5.0, flat_eps: float = 1e-12):
    """Flag channels that are much noisier than the median channel, or flat."""
    if rec.n_channels < 2:
        raise DataError("bad-channel detection needs at least 2 channels")
    var = rec.samples.var(axis=1, ddof=1) if rec.n_times > 1 else np.zeros(rec.n_channels)
    med = np.median(var)
    bad = (var > var_factor * med) | (var < flat_eps)
    return [lab for lab, b in zip(rec.labels, bad) if b]


def drop_channels(rec: Recording, names: Sequence[str]) -> Recording:
    drop = set(names)
    keep = [i for i, lab in enumerate(rec.labels) if lab.name not in drop]
    return rec.with_samples(
        rec.samples[keep].copy(), labels=[rec.labels[i].name for i in keep]
    )


def rereference_common_average(rec: Recording) -> Recording:
    if rec.n_channels < 2:
        raise DataError("common-average reference needs at least 2 channels")
    x = rec.samples
    return rec.with_samples(x - x.mean(axis=0, keepdims=True))


def segment(rec: Recording, window_s: float, label: Optional[int] = None,
            recording_id: str = "") -> list:
    """Cut consecutive non-overlapping windows; a trailing partial window is dropped."""
    width = int(round(window_s * rec.rate))
    if width < 1:
        raise WindowTooLong(f"window of {window_s} s is shorter than one sample at {rec.rate} Hz")
    n = rec.n_times // width
    if n == 0:
        raise WindowTooLong(
            f"no full {window_s} s window fits in {rec.n_times / rec.rate:g} s of data"
        )
    names = rec.channel_names
    return [
        Segment(
            rec.samples[:, k * width:(k + 1) * width].copy(),
            rec.rate,
            class_label=label,
            origin=(recording_id, k * width),
            labels=names,
        )
        for k in range(n)
    ]


def baseline_correct(epoch: Segment, baseline) -> Segment:
    """Subtract, per channel, the mean over ``baseline=(start_s, end_s)``.

    Times are measured from the first sample of the epoch.
    """
    start_s, end_s = baseline
    i0 = int(round(start_s * epoch.rate))
    i1 = int(round(end_s * epoch.rate))
    if not (0 <= i0 < i1 <= epoch.n_times):
        raise WindowOutOfRange(
            f"baseline ({start_s}, {end_s}) s outside epoch of {epoch.n_times / epoch.rate:g} s"
        )
    x = epoch.samples
    return replace(epoch, samples=x - x[:, i0:i1].mean(axis=1, keepdims=True))


# -- file formats ------------------------------------------------------------

def read_markers(path) -> list:
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), 1):
            if not row or not "".join(row).strip():
                continue
            if len(row) < 2:
                raise ParseError(f"{path}:{lineno}: expected '<sample_index>,<label>'")
            try:
                idx = int(row[0])
            except ValueError:
                raise ParseError(f"{path}:{lineno}: bad sample index {row[0]!r}") from None
            out.append(EventMarker(idx, ",".join(row[1:]).strip()))
    return out


def write_markers(markers, path):
    with atomic_open(path) as fh:
        for m in markers:
            fh.write(f"{m.sample_index},{m.label}\n")


def read_recording_csv(path, rate: float, markers_path=None) -> Recording:
    """Read ``time,<label1>,...`` CSV; the sampling rate is supplied by the caller."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty file") from None
        if not header or header[0].strip().lower() != "time" or len(header) < 2:
            raise ParseError(f"{path}: header must be 'time,<label1>,...'")
        names = [h.strip() for h in header[1:]]
        rows = []
        for lineno, row in enumerate(reader, 2):
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                rows.append([float(v) for v in row[1:]])
            except ValueError:
                raise ParseError(f"{path}:{lineno}: non-numeric amplitude") from None
    samples = np.array(rows, dtype=np.float64).reshape(-1, len(names)).T
    if not np.all(np.isfinite(samples)):
        raise ParseError(f"{path}: non-finite amplitude")
    markers = read_markers(markers_path) if markers_path is not None else ()
    return Recording(samples, float(rate), names, markers)


def write_recording_csv(rec: Recording, path, markers_path=None):
    with atomic_open(path) as fh:
        fh.write(",".join(["time"] + rec.channel_names) + "\n")
        for t in range(rec.n_times):
            vals = [fmt_float(t / rec.rate)] + [fmt_float(v) for v in rec.samples[:, t]]
            fh.write(",".join(vals) + "\n")
    if markers_path is not None:
        write_markers(rec.markers, markers_path)
