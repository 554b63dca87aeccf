"""Binary tensor records: a JSON header line ``{"shape": [...]}`` then little-endian float64 data."""

from __future__ import annotations

import json
from typing import BinaryIO

import numpy as np

_DTYPE = np.dtype("<f8")


class CorruptTensorError(ValueError):
    pass


def write_tensor(fh: BinaryIO, array) -> None:
    arr = np.array(array, dtype=_DTYPE, order="C")
    fh.write(json.dumps({"shape": list(arr.shape)}).encode() + b"\n")
    fh.write(arr.tobytes(order="C"))


def read_tensor(fh: BinaryIO, label: str = "tensor") -> np.ndarray:
    line = fh.readline()
    if not line.endswith(b"\n"):
        raise CorruptTensorError(f"{label}: missing header line")
    try:
        header = json.loads(line)
        shape = tuple(int(s) for s in header["shape"])
    except (ValueError, KeyError, TypeError) as err:
        raise CorruptTensorError(f"{label}: malformed header {line[:80]!r}") from err
    if any(s < 0 for s in shape):
        raise CorruptTensorError(f"{label}: negative dimension in {shape}")
    count = int(np.prod(shape, dtype=np.int64))
    raw = fh.read(count * _DTYPE.itemsize)
    if len(raw) != count * _DTYPE.itemsize:
        raise CorruptTensorError(f"{label}: expected {count} values, file truncated")
    return np.frombuffer(raw, dtype=_DTYPE).reshape(shape).astype(np.float64)
