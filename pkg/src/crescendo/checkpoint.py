"""Single-file checkpoint format.

Layout (all integers little-endian):

    magic      8 bytes  b"CRSCKPT1"
    config     u32 byte length + UTF-8 config echo
    count      u32 number of parameters
    per parameter:
        name       u16 length + UTF-8
        dtype      u8   4 = little-endian float32, 8 = little-endian float64
        trainable  u8
        ndim       u8
        extents    u32 per dimension
        payload    raw little-endian floats

Round-trips are bit-exact: loading returns arrays whose bytes equal the
saved ones.
"""

import struct

import numpy as np

from .arch import ParameterStore
from .errors import FormatError

MAGIC = b"CRSCKPT1"
_DTYPES = {4: np.dtype("<f4"), 8: np.dtype("<f8")}


def save_checkpoint(path, store, config_text=""):
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        config = config_text.encode()
        fh.write(struct.pack("<I", len(config)))
        fh.write(config)
        fh.write(struct.pack("<I", len(store)))
        for name, arr in store.items():
            encoded = name.encode()
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            code = arr.dtype.itemsize
            if code not in _DTYPES:
                raise FormatError(f"cannot serialize dtype {arr.dtype} of {name!r}")
            fh.write(struct.pack("<BBB", code, int(store.trainable(name)), arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(np.ascontiguousarray(arr, dtype=_DTYPES[code]).tobytes())


def _read(fh, n, what):
    data = fh.read(n)
    if len(data) != n:
        raise FormatError(f"checkpoint truncated while reading {what}")
    return data


def load_checkpoint(path):
    """Returns (ParameterStore, config echo text)."""
    with open(path, "rb") as fh:
        if _read(fh, len(MAGIC), "magic") != MAGIC:
            raise FormatError(f"{path} is not a checkpoint (bad magic)")
        (config_len,) = struct.unpack("<I", _read(fh, 4, "config length"))
        config_text = _read(fh, config_len, "config echo").decode()
        (count,) = struct.unpack("<I", _read(fh, 4, "parameter count"))
        store = ParameterStore()
        for _ in range(count):
            (name_len,) = struct.unpack("<H", _read(fh, 2, "name length"))
            name = _read(fh, name_len, "name").decode()
            code, trainable, ndim = struct.unpack("<BBB", _read(fh, 3, "header"))
            if code not in _DTYPES:
                raise FormatError(f"unknown dtype code {code} for {name!r}")
            shape = struct.unpack(f"<{ndim}I", _read(fh, 4 * ndim, "extents"))
            dtype = _DTYPES[code]
            n_bytes = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
            payload = _read(fh, n_bytes, f"payload of {name!r}")
            arr = np.frombuffer(payload, dtype=dtype).reshape(shape).copy()
            store.add(name, arr, trainable=bool(trainable))
        return store, config_text
