"""Flat binary tensor container.

Layout: magic ``DDCF1`` followed by one record per tensor::

    u64 name_length | name (UTF-8) | u64 rank | u64 dims[rank] | f64 data[prod(dims)]

All integers and floats are little-endian; data is row-major.
"""

from collections import OrderedDict
from pathlib import Path

import numpy as np

from app.errors import CheckpointError

MAGIC = b'DDCF1'
_U64 = np.dtype('<u8')
_F64 = np.dtype('<f8')


def dumps(tensors):
    chunks = [MAGIC]
    for name, array in tensors.items():
        array = np.ascontiguousarray(array, dtype=np.float64)
        encoded = name.encode('utf-8')
        chunks.append(np.array([len(encoded)], dtype=_U64).tobytes())
        chunks.append(encoded)
        chunks.append(np.array([array.ndim, *array.shape], dtype=_U64).tobytes())
        chunks.append(array.astype(_F64).tobytes())
    return b''.join(chunks)


def loads(blob):
    if not blob.startswith(MAGIC):
        raise CheckpointError('not a tensor container: bad magic header')
    tensors = OrderedDict()
    view = memoryview(blob)
    pos = len(MAGIC)

    def take(count, dtype):
        nonlocal pos
        size = count * dtype.itemsize
        if pos + size > len(blob):
            raise CheckpointError('truncated tensor container')
        out = np.frombuffer(view[pos:pos + size], dtype=dtype)
        pos += size
        return out

    while pos < len(blob):
        (name_len,) = take(1, _U64)
        name = bytes(take(int(name_len), np.dtype('u1'))).decode('utf-8')
        (rank,) = take(1, _U64)
        dims = tuple(int(d) for d in take(int(rank), _U64))
        data = take(int(np.prod(dims, dtype=np.int64)), _F64)
        tensors[name] = data.astype(np.float64).reshape(dims)
    return tensors


def save(path, tensors):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(dumps(tensors))


def load(path):
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f'tensor container not found: {path}')
    return loads(path.read_bytes())
