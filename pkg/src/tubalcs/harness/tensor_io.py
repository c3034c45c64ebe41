"""Raw binary tensor files.

Layout: the 4-byte magic ``TNS3``, then ``n1, n2, n3`` as little-endian
``uint32``, then ``n1*n2*n3`` little-endian float64 values, column-major
within each frontal slice and frontal slices in order.
"""

import struct

import numpy as np

from ..algebra import as_tensor3

MAGIC = b"TNS3"
_HEADER = struct.Struct("<4sIII")


def write_tensor(path, x):
    x = as_tensor3(x)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, *x.shape))
        fh.write(x.astype("<f8").tobytes(order="F"))


def read_tensor(path):
    with open(path, "rb") as fh:
        header = fh.read(_HEADER.size)
        if len(header) != _HEADER.size:
            raise ValueError(f"{path}: truncated header")
        magic, n1, n2, n3 = _HEADER.unpack(header)
        if magic != MAGIC:
            raise ValueError(f"{path}: bad magic {magic!r}")
        payload = fh.read()
    count = n1 * n2 * n3
    if len(payload) != 8 * count:
        raise ValueError(f"{path}: expected {count} values, found {len(payload) // 8}")
    data = np.frombuffer(payload, dtype="<f8").astype(np.float64)
    return as_tensor3(data.reshape((n1, n2, n3), order="F"))
