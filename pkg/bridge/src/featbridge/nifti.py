"""Minimal NIfTI-1 volume I/O.

Reads the subset this pipeline needs: single-file .nii / .nii.gz, scalar
dtypes, either endianness, with scl_slope/scl_inter applied. The writer
exists mainly so tests can build fixture volumes without extra dependencies.
"""

from __future__ import annotations

import gzip
import struct
from pathlib import Path

import numpy as np

HEADER_SIZE = 348

_DTYPES = {
    2: np.uint8,
    4: np.int16,
    8: np.int32,
    16: np.float32,
    64: np.float64,
    256: np.int8,
    512: np.uint16,
    768: np.uint32,
}
_CODES = {np.dtype(v): k for k, v in _DTYPES.items()}


class NiftiError(ValueError):
    pass


def _open(path: Path):
    if str(path).endswith(".gz"):
        return gzip.open(path, "rb")
    return open(path, "rb")


def load(path: str | Path) -> tuple[np.ndarray, tuple[float, ...]]:
    """Return (data, voxel sizes). Data axes follow the file's dim order."""
    path = Path(path)
    with _open(path) as fh:
        raw = fh.read()
    if len(raw) < HEADER_SIZE:
        raise NiftiError(f"{path}: file shorter than a NIfTI-1 header")
    magic = raw[344:348]
    if magic[:3] not in (b"n+1", b"ni1"):
        raise NiftiError(f"{path}: bad magic {magic!r}")
    order = "<"
    ndim = struct.unpack_from("<h", raw, 40)[0]
    if not 1 <= ndim <= 7:
        order = ">"
        ndim = struct.unpack_from(">h", raw, 40)[0]
        if not 1 <= ndim <= 7:
            raise NiftiError(f"{path}: implausible dim[0]")
    dim = struct.unpack_from(f"{order}8h", raw, 40)
    shape = tuple(int(d) for d in dim[1 : ndim + 1])
    datatype = struct.unpack_from(f"{order}h", raw, 70)[0]
    if datatype not in _DTYPES:
        raise NiftiError(f"{path}: unsupported datatype code {datatype}")
    pixdim = struct.unpack_from(f"{order}8f", raw, 76)
    vox_offset = int(struct.unpack_from(f"{order}f", raw, 108)[0])
    slope = struct.unpack_from(f"{order}f", raw, 112)[0]
    inter = struct.unpack_from(f"{order}f", raw, 116)[0]
    dtype = np.dtype(_DTYPES[datatype]).newbyteorder(order)
    count = int(np.prod(shape))
    data = np.frombuffer(raw, dtype=dtype, count=count, offset=vox_offset)
    if data.size != count:
        raise NiftiError(f"{path}: truncated voxel payload")
    data = data.reshape(shape, order="F").astype(np.float64)
    if slope not in (0.0, 1.0) or inter != 0.0:
        data = data * (slope if slope != 0.0 else 1.0) + inter
    zooms = tuple(float(abs(p)) for p in pixdim[1 : ndim + 1])
    return data, zooms


def save(path: str | Path, data: np.ndarray, zooms=None) -> None:
    """Write a single-file NIfTI-1 volume (little-endian)."""
    path = Path(path)
    data = np.asarray(data)
    if data.dtype not in _CODES:
        data = data.astype(np.float32)
    ndim = data.ndim
    if not 1 <= ndim <= 7:
        raise NiftiError(f"cannot write {ndim}-d volume")
    zooms = tuple(zooms) if zooms is not None else (1.0,) * ndim
    header = bytearray(HEADER_SIZE)
    struct.pack_into("<i", header, 0, HEADER_SIZE)
    dim = [ndim] + list(data.shape) + [1] * (7 - ndim)
    struct.pack_into("<8h", header, 40, *dim)
    struct.pack_into("<h", header, 70, _CODES[data.dtype])
    struct.pack_into("<h", header, 72, data.dtype.itemsize * 8)
    pixdim = [1.0] + list(zooms) + [1.0] * (7 - len(zooms))
    struct.pack_into("<8f", header, 76, *pixdim)
    struct.pack_into("<f", header, 108, 352.0)   # vox_offset
    struct.pack_into("<f", header, 112, 1.0)     # scl_slope
    struct.pack_into("<f", header, 116, 0.0)     # scl_inter
    header[344:348] = b"n+1\x00"
    payload = header + b"\x00" * 4 + data.tobytes(order="F")
    if str(path).endswith(".gz"):
        with gzip.open(path, "wb") as fh:
            fh.write(bytes(payload))
    else:
        path.write_bytes(bytes(payload))
