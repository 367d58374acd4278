"""Binary checkpoint format.

Layout (all integers unsigned 32-bit little-endian, all values float64 LE)::

    b"NLSTM1"
    len(arch) arch-bytes
    repeated: len(name) name-bytes rank dim_0 .. dim_{rank-1} values
    seed (uint64)

Tensors run until exactly 8 bytes remain.
"""

import struct

import numpy as np

from .._io import atomic_open
from ..errors import ParseError
from .model import ModelParams, parse_arch

MAGIC = b"NLSTM1"


def dumps(model: ModelParams) -> bytes:
    parts = [MAGIC]
    arch = model.arch.encode("utf-8")
    parts += [struct.pack("<I", len(arch)), arch]
    for name, arr in model.tensors.items():
        arr = np.ascontiguousarray(arr, dtype="<f8")
        key = name.encode("utf-8")
        parts += [struct.pack("<I", len(key)), key, struct.pack("<I", arr.ndim)]
        parts += [struct.pack(f"<{arr.ndim}I", *arr.shape), arr.tobytes()]
    parts.append(struct.pack("<Q", int(model.seed) & 0xFFFFFFFFFFFFFFFF))
    return b"".join(parts)


def loads(data: bytes) -> ModelParams:
    if not data.startswith(MAGIC):
        raise ParseError("not a checkpoint (bad magic)")
    pos = len(MAGIC)

    def take(n):
        nonlocal pos
        if pos + n > len(data) - 8:
            raise ParseError("truncated checkpoint")
        out = data[pos:pos + n]
        pos += n
        return out

    (n,) = struct.unpack("<I", take(4))
    arch = take(n).decode("utf-8")
    parse_arch(arch)
    tensors = {}
    while pos < len(data) - 8:
        (n,) = struct.unpack("<I", take(4))
        name = take(n).decode("utf-8")
        (rank,) = struct.unpack("<I", take(4))
        dims = struct.unpack(f"<{rank}I", take(4 * rank))
        count = int(np.prod(dims, dtype=np.int64))
        tensors[name] = np.frombuffer(take(8 * count), dtype="<f8").astype(np.float64).reshape(dims)
    if pos != len(data) - 8:
        raise ParseError("trailing bytes in checkpoint")
    (seed,) = struct.unpack("<Q", data[pos:])
    return ModelParams(arch, tensors, seed)


def save_checkpoint(model: ModelParams, path):
    with atomic_open(path, "wb") as fh:
        fh.write(dumps(model))


def load_checkpoint(path) -> ModelParams:
    with open(path, "rb") as fh:
        return loads(fh.read())
