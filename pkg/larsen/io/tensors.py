"""Binary tensor files

Layout: ``b"AHSF"``, number of dimensions (u32), each dimension (u32), then the float32
samples in row-major order. Integers and samples are little-endian.
"""

import struct
from pathlib import Path
from typing import Union

import numpy as np

from larsen.errors import DataError

MAGIC = b"AHSF"
TENSOR_DTYPE = np.dtype("<f4")
_U32 = struct.Struct("<I")


def encode_tensor(array: np.ndarray) -> bytes:
    array = np.asarray(array)
    if np.iscomplexobj(array):
        raise DataError("complex tensors must be split into real and imaginary parts")
    header = MAGIC + _U32.pack(array.ndim) + b"".join(_U32.pack(d) for d in array.shape)
    return header + np.ascontiguousarray(array, dtype=TENSOR_DTYPE).tobytes()


def decode_tensor(data: bytes) -> np.ndarray:
    if data[:4] != MAGIC:
        raise DataError(f"not a tensor file (magic {data[:4]!r})")
    offset = 4
    (ndim,) = _U32.unpack_from(data, offset)
    offset += _U32.size
    shape = struct.unpack_from(f"<{ndim}I", data, offset)
    offset += ndim * _U32.size
    expected = int(np.prod(shape, dtype=np.int64)) * TENSOR_DTYPE.itemsize
    if len(data) - offset != expected:
        raise DataError(f"tensor payload of {len(data) - offset} bytes, expected {expected}")
    return np.frombuffer(data, dtype=TENSOR_DTYPE, offset=offset).reshape(shape)


def write_tensor(path: Union[str, Path], array: np.ndarray) -> Path:
    path = Path(path)
    path.write_bytes(encode_tensor(array))
    return path


def read_tensor(path: Union[str, Path]) -> np.ndarray:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"{path} does not exist")
    return decode_tensor(path.read_bytes())
