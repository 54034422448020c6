"""Minimal NPY v1.0 tensor I/O: float32, little-endian, C order.

This is the interchange format between the registration toolkit and any
external feature exporter. Only the exact subset below is accepted:
magic ``\\x93NUMPY``, version (1, 0), header dict with ``descr: '<f4'``,
``fortran_order: False`` and a shape of rank 1-4. Files written by
``numpy.save`` for such arrays parse identically.
"""

from __future__ import annotations

import ast
import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"\x93NUMPY"
_SUPPORTED_DESCR = "<f4"
_MAX_RANK = 4


class TensorFormatError(ValueError):
    """Malformed NPY container (bad magic, version or header)."""


class UnsupportedDtypeError(TensorFormatError):
    """Well-formed NPY file whose dtype is not little-endian float32."""


class TruncatedPayloadError(TensorFormatError):
    """Header promises more payload bytes than the file contains."""


def _build_header(shape: tuple[int, ...]) -> bytes:
    # Mirrors numpy's own formatting so round-trips through np.save/np.load
    # stay byte-identical.
    dict_str = "{'descr': '<f4', 'fortran_order': False, 'shape': %s, }" % (
        str(shape) if len(shape) != 1 else "(%d,)" % shape[0]
    )
    header = dict_str.encode("latin1")
    # magic(6) + version(2) + hlen(2) + header + '\n' padded to 64 bytes
    total = 10 + len(header) + 1
    pad = (-total) % 64
    header += b" " * pad + b"\n"
    return MAGIC + bytes((1, 0)) + struct.pack("<H", len(header)) + header


def save_tensor(array: np.ndarray, path: str | Path) -> None:
    """Write ``array`` as a float32 little-endian C-order NPY v1.0 file."""
    arr = np.asarray(array)
    if arr.ndim < 1 or arr.ndim > _MAX_RANK:
        raise TensorFormatError(f"rank {arr.ndim} not supported (must be 1-{_MAX_RANK})")
    if any(s == 0 for s in arr.shape):
        raise TensorFormatError(f"zero-length dimension in shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("array contains non-finite values")
    payload = np.ascontiguousarray(arr, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(_build_header(payload.shape))
        fh.write(payload.tobytes())


def load_tensor(path: str | Path) -> np.ndarray:
    """Read a float32 NPY v1.0 file, validating the header strictly."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 10 or raw[:6] != MAGIC:
        raise TensorFormatError(f"{path}: not an NPY file (bad magic)")
    major, minor = raw[6], raw[7]
    if (major, minor) != (1, 0):
        raise TensorFormatError(f"{path}: unsupported NPY version {(major, minor)}")
    (hlen,) = struct.unpack("<H", raw[8:10])
    if len(raw) < 10 + hlen:
        raise TensorFormatError(f"{path}: truncated header")
    try:
        header = ast.literal_eval(raw[10 : 10 + hlen].decode("latin1"))
    except (SyntaxError, ValueError) as exc:
        raise TensorFormatError(f"{path}: unparsable header") from exc
    if not isinstance(header, dict) or set(header) != {"descr", "fortran_order", "shape"}:
        raise TensorFormatError(f"{path}: unexpected header keys")
    if header["descr"] != _SUPPORTED_DESCR:
        raise UnsupportedDtypeError(
            f"{path}: dtype {header['descr']!r} unsupported (only '<f4')"
        )
    if header["fortran_order"] is not False:
        raise TensorFormatError(f"{path}: fortran_order must be False")
    shape = header["shape"]
    if (
        not isinstance(shape, tuple)
        or not 1 <= len(shape) <= _MAX_RANK
        or any(not isinstance(s, int) or s < 1 for s in shape)
    ):
        raise TensorFormatError(f"{path}: bad shape {shape!r}")
    n = int(np.prod(shape))
    payload = raw[10 + hlen :]
    if len(payload) < 4 * n:
        raise TruncatedPayloadError(
            f"{path}: payload holds {len(payload)} bytes, header promises {4 * n}"
        )
    return np.frombuffer(payload[: 4 * n], dtype="<f4").reshape(shape).copy()


def save_sidecar(path: str | Path, **meta) -> None:
    """Write the optional JSON sidecar next to a tensor file."""
    Path(str(path) + ".json").write_text(json.dumps(meta, indent=2))


def load_sidecar(path: str | Path) -> dict | None:
    side = Path(str(path) + ".json")
    if not side.exists():
        return None
    return json.loads(side.read_text())
