"""Seeded synthetic EEG with class-dependent band power, and ERP epochs.

Each class profile scales band-limited noise per frequency band; band
limiting uses the same zero-phase filters as the analysis side, so
"alpha" means the same thing to the generator and to the features.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from ._io import atomic_open
from ._validation import stratified_split
from .core import EventMarker, Recording, Segment, apply_filter, bandpass, segment
from .errors import InvalidConfig, ParseError
from .features import DEFAULT_BANDS

__all__ = [
    "ClassProfile",
    "SynthConfig",
    "SynthDataset",
    "ErpEpoch",
    "default_profiles",
    "generate_recording",
    "generate_segments",
    "make_dataset",
    "generate_erp_epoch",
    "write_labels",
    "read_labels",
]

# stream tags mixed into the user seed
_RECORDING, _SPLIT, _ERP = 0x5EC, 0x5B1, 0xE7


@dataclass(frozen=True)
class ClassProfile:
    class_id: int
    band_gains: dict
    label: str = ""

    def __post_init__(self):
        gains = dict(self.band_gains)
        if any(g < 0 for g in gains.values()):
            raise InvalidConfig(f"profile {self.class_id}: band gains must be >= 0")
        object.__setattr__(self, "band_gains", gains)


def default_profiles(ratio=4.0):
    """Vigorous / neutral / passive, dominated by gamma / alpha / theta."""
    base = {b.name: 1.0 for b in DEFAULT_BANDS}
    return (
        ClassProfile(0, {**base, "gamma": ratio}, "vigorous"),
        ClassProfile(1, {**base, "alpha": ratio}, "neutral"),
        ClassProfile(2, {**base, "theta": ratio}, "passive"),
    )


@dataclass(frozen=True)
class SynthConfig:
    profiles: tuple = field(default_factory=default_profiles)
    channels: int = 8
    rate: float = 128.0
    segments_per_class: int = 200
    window_s: float = 1.0
    noise_floor: float = 0.1
    amplitude_uv: float = 10.0
    seed: int = 0
    bands: tuple = DEFAULT_BANDS
    split: float = 0.8
    filter_order: int = 4

    def validate(self):
        if len(self.profiles) < 2:
            raise InvalidConfig("need at least 2 class profiles")
        ids = [p.class_id for p in self.profiles]
        if len(set(ids)) != len(ids):
            raise InvalidConfig("duplicate class ids")
        if self.channels < 1 or self.segments_per_class < 1 or self.window_s <= 0:
            raise InvalidConfig("channels, segments_per_class and window_s must be positive")
        if self.noise_floor < 0 or self.amplitude_uv <= 0:
            raise InvalidConfig("noise_floor must be >= 0 and amplitude_uv > 0")
        names = {b.name for b in self.bands}
        top = 0.0
        for p in self.profiles:
            unknown = set(p.band_gains) - names
            if unknown:
                raise InvalidConfig(f"profile {p.class_id}: unknown bands {sorted(unknown)}")
            if not any(g > 0 for g in p.band_gains.values()) and self.noise_floor == 0:
                raise InvalidConfig(f"profile {p.class_id} has no power at all")
            for b in self.bands:
                if p.band_gains.get(b.name, 0.0) > 0:
                    top = max(top, b.high_hz)
        if not self.rate > 2 * top:
            raise InvalidConfig(f"rate {self.rate:g} Hz must exceed twice the top band edge {top:g} Hz")
        if not 0 < self.split < 1:
            raise InvalidConfig("split must be in (0, 1)")
        return self

    def profile(self, class_id):
        for p in self.profiles:
            if p.class_id == class_id:
                return p
        raise InvalidConfig(f"no profile for class {class_id}")

    @property
    def window_samples(self):
        return int(round(self.window_s * self.rate))


def _rng(seed, *tags):
    return np.random.default_rng(np.random.SeedSequence([int(seed), *tags]))


def generate_recording(cfg: SynthConfig, class_id: int, n_segments: Optional[int] = None) -> Recording:
    """Sum of unit-variance band-limited noises scaled by sqrt(gain), plus white floor.

    The recording holds ``n_segments`` windows (default
    ``cfg.segments_per_class``) and one marker at each window start.
    """
    cfg.validate()
    prof = cfg.profile(class_id)
    n_seg = cfg.segments_per_class if n_segments is None else n_segments
    width = cfg.window_samples
    n = n_seg * width
    rng = _rng(cfg.seed, _RECORDING, class_id)
    x = np.zeros((cfg.channels, n))
    for band in cfg.bands:
        gain = prof.band_gains.get(band.name, 0.0)
        noise = rng.standard_normal((cfg.channels, n))
        if gain <= 0:
            continue
        hi = min(band.high_hz, 0.45 * cfg.rate)
        y = apply_filter(noise, bandpass(band.low_hz, hi, cfg.filter_order), cfg.rate)
        y /= y.std(axis=1, keepdims=True)
        x += np.sqrt(gain) * y
    x += cfg.noise_floor * rng.standard_normal((cfg.channels, n))
    markers = [EventMarker(k * width, prof.label or f"class{class_id}") for k in range(n_seg)]
    names = [f"CH{c + 1}" for c in range(cfg.channels)]
    return Recording(cfg.amplitude_uv * x, float(cfg.rate), names, markers)


def generate_segments(cfg: SynthConfig):
    """All windows of all classes, in class order, each tagged with its class."""
    out = []
    for p in cfg.validate().profiles:
        rec = generate_recording(cfg, p.class_id)
        out.extend(segment(rec, cfg.window_s, p.class_id, recording_id=f"class{p.class_id}"))
    return out


class SynthDataset(NamedTuple):
    train_segments: list
    train_labels: np.ndarray
    val_segments: list
    val_labels: np.ndarray
    train_index: np.ndarray
    val_index: np.ndarray


def make_dataset(cfg: SynthConfig) -> SynthDataset:
    """Balanced labelled windows with a seeded stratified train/validation split."""
    cfg.validate()
    if cfg.segments_per_class < 5:
        raise InvalidConfig("need at least 5 segments per class")
    segs = generate_segments(cfg)
    labels = np.array([s.class_label for s in segs])
    tr, va = stratified_split(labels, cfg.split, _rng(cfg.seed, _SPLIT))
    return SynthDataset([segs[i] for i in tr], labels[tr], [segs[i] for i in va], labels[va],
                        tr, va)


@dataclass(frozen=True)
class ErpEpoch:
    segment: Segment
    stimulus_index: int
    peak_latency_ms: float
    amplitude: float
    noise_sd: float
    width_ms: float


def generate_erp_epoch(rate, pre_ms, post_ms, peak_latency_ms, amplitude, noise_sd,
                       seed=0, channels=1, width_ms=20.0) -> ErpEpoch:
    """Gaussian bump (SD ``width_ms``) at ``peak_latency_ms`` after the stimulus, plus white noise."""
    if not 0 < peak_latency_ms < post_ms:
        raise InvalidConfig("peak latency must lie inside (0, post_ms)")
    if rate <= 0 or pre_ms < 0 or noise_sd < 0 or channels < 1:
        raise InvalidConfig("invalid ERP epoch parameters")
    stim = int(round(pre_ms * rate / 1000.0))
    n = stim + int(round(post_ms * rate / 1000.0)) + 1
    t_ms = (np.arange(n) - stim) * 1000.0 / rate
    bump = amplitude * np.exp(-0.5 * ((t_ms - peak_latency_ms) / width_ms) ** 2)
    x = np.tile(bump, (channels, 1))
    if noise_sd > 0:
        x = x + noise_sd * _rng(seed, _ERP).standard_normal(x.shape)
    seg = Segment(x, float(rate), origin=("erp", 0))
    return ErpEpoch(seg, stim, float(peak_latency_ms), float(amplitude), float(noise_sd),
                    float(width_ms))


def write_labels(labels, path):
    with atomic_open(path) as fh:
        fh.write("segment_index,class_id\n")
        for i, c in enumerate(labels):
            fh.write(f"{i},{int(c)}\n")


def read_labels(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["segment_index", "class_id"]:
        raise ParseError(f"{path}: header must be 'segment_index,class_id'")
    try:
        pairs = sorted((int(a), int(b)) for a, b in (r for r in rows[1:] if r))
    except ValueError:
        raise ParseError(f"{path}: non-integer entry") from None
    if [i for i, _ in pairs] != list(range(len(pairs))):
        raise ParseError(f"{path}: segment indices must be 0..n-1")
    return np.array([c for _, c in pairs], dtype=np.int64)
