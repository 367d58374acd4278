"""Electrode montage geometry and channel adjacency.

Channels are placed on a sphere, linked to their K angularly-nearest
neighbours, and left/right homologous pairs get an extra unit of weight.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from ._io import atomic_open, fmt_float
from .core import ChannelLabel
from .errors import DataError, DuplicateLabel, KTooLarge, OffSphere, ParseError, UnknownLabel

__all__ = [
    "ElectrodePosition",
    "MontageLayout",
    "AdjacencyMatrix",
    "GLOBAL_PAIRS",
    "SEED_62_CHANNELS",
    "spherical_distance",
    "distance_matrix",
    "default_k",
    "knn_adjacency",
    "apply_global_pairs",
    "build_adjacency",
    "standard_62_layout",
    "load_layout",
    "write_adjacency",
    "read_adjacency",
]

SPHERE_TOL = 1e-4

# Homologous left/right pairs used to seed inter-hemispheric connectivity.
GLOBAL_PAIRS = (
    ("FP1", "FP2"), ("AF3", "AF4"), ("F5", "F6"), ("FC5", "FC6"), ("C5", "C6"),
    ("CP5", "CP6"), ("P5", "P6"), ("PO5", "PO6"), ("O1", "O2"),
)

SEED_62_CHANNELS = (
    "FP1", "FPZ", "FP2", "AF3", "AF4",
    "F7", "F5", "F3", "F1", "FZ", "F2", "F4", "F6", "F8",
    "FT7", "FC5", "FC3", "FC1", "FCZ", "FC2", "FC4", "FC6", "FT8",
    "T7", "C5", "C3", "C1", "CZ", "C2", "C4", "C6", "T8",
    "TP7", "CP5", "CP3", "CP1", "CPZ", "CP2", "CP4", "CP6", "TP8",
    "P7", "P5", "P3", "P1", "PZ", "P2", "P4", "P6", "P8",
    "PO7", "PO5", "PO3", "POZ", "PO4", "PO6", "PO8",
    "CB1", "O1", "OZ", "O2", "CB2",
)


@dataclass(frozen=True)
class ElectrodePosition:
    label: ChannelLabel
    x: float
    y: float
    z: float

    @property
    def xyz(self):
        return np.array([self.x, self.y, self.z])

    def check_on_sphere(self, r=1.0, tol=SPHERE_TOL):
        rr = math.sqrt(self.x ** 2 + self.y ** 2 + self.z ** 2)
        if abs(rr - r) > tol:
            raise OffSphere(f"electrode {self.label.name} at radius {rr:.6g}, expected {r:g}")


@dataclass(frozen=True)
class MontageLayout:
    positions: tuple
    r: float = 1.0

    def __post_init__(self):
        pos = tuple(self.positions)
        if len(pos) < 2:
            raise DataError("a montage needs at least 2 electrodes")
        names = [p.label.name for p in pos]
        seen = set()
        for name in names:
            if name in seen:
                raise DuplicateLabel(f"duplicate electrode label {name!r}")
            seen.add(name)
        for p in pos:
            p.check_on_sphere(self.r)
        object.__setattr__(self, "positions", pos)

    def __len__(self):
        return len(self.positions)

    @property
    def names(self):
        return [p.label.name for p in self.positions]

    @property
    def coords(self):
        return np.array([[p.x, p.y, p.z] for p in self.positions])

    def index(self, name):
        key = name.upper()
        for i, p in enumerate(self.positions):
            if p.label.name.upper() == key:
                return i
        raise UnknownLabel(f"electrode {name!r} not in layout")

    @classmethod
    def from_coords(cls, names, coords, r=1.0):
        coords = np.asarray(coords, dtype=np.float64)
        return cls(tuple(
            ElectrodePosition(ChannelLabel(n, i), *map(float, c))
            for i, (n, c) in enumerate(zip(names, coords))
        ), r)


@dataclass(frozen=True)
class AdjacencyMatrix:
    weights: np.ndarray
    labels: tuple = ()

    @property
    def n(self):
        return self.weights.shape[0]


def spherical_distance(i: ElectrodePosition, j: ElectrodePosition, r: float = 1.0) -> float:
    """Central angle between two electrodes on a sphere of radius ``r``."""
    i.check_on_sphere(r)
    j.check_on_sphere(r)
    cos = (i.x * j.x + i.y * j.y + i.z * j.z) / (r * r)
    return math.acos(min(1.0, max(-1.0, cos)))


def distance_matrix(layout: MontageLayout) -> np.ndarray:
    xyz = layout.coords
    cos = np.clip(xyz @ xyz.T / layout.r ** 2, -1.0, 1.0)
    d = np.arccos(cos)
    np.fill_diagonal(d, 0.0)
    return d


def default_k(n: int) -> int:
    """About 20% of the other channels: ``max(1, round(0.2 n))``, half to even."""
    if n < 2:
        raise DataError("need at least 2 channels")
    return max(1, round(0.2 * n))


def knn_adjacency(layout: MontageLayout, k: int) -> AdjacencyMatrix:
    """Binary adjacency: i~j if either is among the other's ``k`` nearest.

    Distances are quantised to 1e-9 rad before ranking and ties go to the
    lower channel index, so the result is stable under rigid rotations.
    """
    n = len(layout)
    if not 1 <= k < n:
        raise KTooLarge(f"K={k} must satisfy 1 <= K < n={n}")
    d = np.round(distance_matrix(layout), 9)
    idx = np.arange(n)
    a = np.zeros((n, n))
    for i in range(n):
        others = idx[idx != i]
        order = np.lexsort((others, d[i, others]))
        a[i, others[order[:k]]] = 1.0
    a = np.maximum(a, a.T)
    np.fill_diagonal(a, 0.0)
    return AdjacencyMatrix(a, tuple(layout.names))


def apply_global_pairs(adj: AdjacencyMatrix, layout: MontageLayout,
                       pairs=GLOBAL_PAIRS) -> AdjacencyMatrix:
    """Add 1 to both ``a[i, j]`` and ``a[j, i]`` for each listed label pair."""
    w = adj.weights.copy()
    for a, b in pairs:
        i, j = layout.index(a), layout.index(b)
        if i == j:
            raise DataError(f"pair ({a}, {b}) refers to a single electrode")
        w[i, j] += 1.0
        w[j, i] += 1.0
    return AdjacencyMatrix(w, adj.labels)


def build_adjacency(layout: MontageLayout, k=None, pairs=GLOBAL_PAIRS) -> AdjacencyMatrix:
    k = default_k(len(layout)) if k is None else k
    adj = knn_adjacency(layout, k)
    if pairs:
        adj = apply_global_pairs(adj, layout, pairs)
    return adj


# -- montage construction --------------------------------------------------
#
# Idealised spherical 10-10 placement: x to the right, y to the nasion,
# z to the vertex. Ring electrodes (Fp1 ... O1) sit on the equator at 18
# degree steps; midline electrodes at 18 degree steps from Cz; the rest are
# spread evenly along the great circle joining a row's ring electrode to
# its midline electrode.

def _ring(azimuth_deg, elevation_deg=0.0):
    a, e = math.radians(azimuth_deg), math.radians(elevation_deg)
    return np.array([-math.sin(a) * math.cos(e), math.cos(a) * math.cos(e), math.sin(e)])


def _midline(polar_deg):
    # positive = anterior of Cz
    p = math.radians(polar_deg)
    return np.array([0.0, math.sin(p), math.cos(p)])


def _slerp(p, q, t):
    omega = math.acos(float(np.clip(p @ q, -1.0, 1.0)))
    if omega < 1e-12:
        return p.copy()
    return (math.sin((1 - t) * omega) * p + math.sin(t * omega) * q) / math.sin(omega)


def _left_hemisphere():
    pos = {
        "FP1": _ring(18), "AF7": _ring(36), "F7": _ring(54), "FT7": _ring(72),
        "T7": _ring(90), "TP7": _ring(108), "P7": _ring(126), "PO7": _ring(144),
        "O1": _ring(162), "CB1": _ring(162, -18),
    }
    mid = {"AF": _midline(54), "F": _midline(36), "FC": _midline(18), "C": _midline(0),
           "CP": _midline(-18), "P": _midline(-36), "PO": _midline(-54)}
    ring_of = {"AF": "AF7", "F": "F7", "FC": "FT7", "C": "T7", "CP": "TP7",
               "P": "P7", "PO": "PO7"}
    for row, edge in ring_of.items():
        for num, t in ((5, 0.25), (3, 0.5), (1, 0.75)):
            pos[f"{row}{num}"] = _slerp(pos[edge], mid[row], t)
    return pos


def _standard_positions():
    left = _left_hemisphere()
    pos = dict(left)
    for name, v in left.items():
        stem = name.rstrip("0123456789")
        num = int(name[len(stem):])
        pos[f"{stem}{num + 1}"] = v * np.array([-1.0, 1.0, 1.0])
    pos.update({"FPZ": _ring(0), "AFZ": _midline(54), "FZ": _midline(36), "FCZ": _midline(18),
                "CZ": _midline(0), "CPZ": _midline(-18), "PZ": _midline(-36),
                "POZ": _midline(-54), "OZ": _ring(180)})
    return pos


def standard_62_layout() -> MontageLayout:
    """The 62-channel extended 10-20 cap layout on the unit sphere."""
    pos = _standard_positions()
    return MontageLayout.from_coords(SEED_62_CHANNELS, [pos[n] for n in SEED_62_CHANNELS])


def load_layout(source, r: float = 1.0) -> MontageLayout:
    """Read ``label,x,y,z`` rows from a path or an iterable of lines."""
    if isinstance(source, (str, bytes)) or hasattr(source, "__fspath__"):
        with open(source, newline="", encoding="utf-8") as fh:
            return _parse_layout(fh, str(source), r)
    return _parse_layout(source, "<layout>", r)


def _parse_layout(lines, name, r):
    names, coords = [], []
    for lineno, row in enumerate(csv.reader(lines), 1):
        if not row or not "".join(row).strip() or row[0].lstrip().startswith("#"):
            continue
        if len(row) != 4:
            raise ParseError(f"{name}:{lineno}: expected 'label,x,y,z'")
        try:
            xyz = [float(v) for v in row[1:]]
        except ValueError:
            if lineno == 1:  # header row
                continue
            raise ParseError(f"{name}:{lineno}: non-numeric coordinate") from None
        names.append(row[0].strip())
        coords.append(xyz)
    if not names:
        raise ParseError(f"{name}: no electrodes")
    return MontageLayout.from_coords(names, coords, r)


def write_adjacency(adj: AdjacencyMatrix, path):
    labels = adj.labels or tuple(f"CH{i + 1}" for i in range(adj.n))
    with atomic_open(path) as fh:
        fh.write(",".join(labels) + "\n")
        for row in adj.weights:
            fh.write(",".join(fmt_float(v) for v in row) + "\n")


def read_adjacency(path) -> AdjacencyMatrix:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ParseError(f"{path}: empty file")
    labels = tuple(rows[0])
    try:
        w = np.array([[float(v) for v in row] for row in rows[1:] if row])
    except ValueError:
        raise ParseError(f"{path}: non-numeric weight") from None
    if w.shape != (len(labels), len(labels)):
        raise ParseError(f"{path}: expected {len(labels)}x{len(labels)} weights, got {w.shape}")
    return AdjacencyMatrix(w, labels)
