"""Binary and text serialization.

Two on-disk layouts are provided:

* single-tensor ``TNSR`` files: magic ``b"TNSR"``, u32 version (=1), u32
  order, u32 dim, then ``dim**order`` little-endian float64 coefficients;
* ``TNSC`` containers holding named sections of rectangular float64 arrays
  (head weights, feature maps, episodes), since not every stored matrix is
  cubic.

Both round-trip bit-exactly.  Parse failures raise ``FileFormatError``
carrying the byte offset of the first offending byte.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import FileFormatError, InvalidArgumentError
from .tensor import DenseTensor

TNSR_MAGIC = b"TNSR"
TNSC_MAGIC = b"TNSC"
VERSION = 1

_U32 = struct.Struct("<I")


def write_tensor(path, t: DenseTensor) -> None:
    """Serialize one cubic tensor to ``path`` in the TNSR layout."""
    blob = bytearray()
    blob += TNSR_MAGIC
    blob += _U32.pack(VERSION)
    blob += _U32.pack(t.order)
    blob += _U32.pack(t.dim)
    blob += np.ascontiguousarray(t.data, dtype="<f8").tobytes()
    Path(path).write_bytes(bytes(blob))


def read_tensor(path) -> DenseTensor:
    """Parse a TNSR file back into a tensor, bit-exactly."""
    raw = Path(path).read_bytes()
    if len(raw) < 16:
        raise FileFormatError("truncated TNSR header", len(raw))
    if raw[:4] != TNSR_MAGIC:
        raise FileFormatError("bad magic, expected b'TNSR'", 0)
    version = _U32.unpack_from(raw, 4)[0]
    if version != VERSION:
        raise FileFormatError(f"unsupported TNSR version {version}", 4)
    order = _U32.unpack_from(raw, 8)[0]
    if order < 1:
        raise FileFormatError(f"invalid order {order}", 8)
    dim = _U32.unpack_from(raw, 12)[0]
    if dim < 1:
        raise FileFormatError(f"invalid dim {dim}", 12)
    count = dim**order
    expected = 16 + 8 * count
    if len(raw) < expected:
        raise FileFormatError(
            f"payload truncated: expected {8 * count} bytes of coefficients",
            len(raw),
        )
    if len(raw) > expected:
        raise FileFormatError("trailing bytes after payload", expected)
    data = np.frombuffer(raw, dtype="<f8", count=count, offset=16)
    return DenseTensor(order, dim, data)


def write_container(path, sections: dict[str, np.ndarray]) -> None:
    """Serialize named float64 arrays to ``path`` in the TNSC layout."""
    blob = bytearray()
    blob += TNSC_MAGIC
    blob += _U32.pack(VERSION)
    blob += _U32.pack(len(sections))
    for name, arr in sections.items():
        arr = np.ascontiguousarray(arr, dtype="<f8")
        if arr.ndim < 1:
            arr = arr.reshape(1)
        encoded = name.encode("utf-8")
        blob += _U32.pack(len(encoded))
        blob += encoded
        blob += _U32.pack(arr.ndim)
        for extent in arr.shape:
            blob += _U32.pack(extent)
        blob += arr.tobytes()
    Path(path).write_bytes(bytes(blob))


def read_container(path) -> dict[str, np.ndarray]:
    """Parse a TNSC container, preserving section order."""
    raw = Path(path).read_bytes()
    if len(raw) < 12:
        raise FileFormatError("truncated TNSC header", len(raw))
    if raw[:4] != TNSC_MAGIC:
        raise FileFormatError("bad magic, expected b'TNSC'", 0)
    version = _U32.unpack_from(raw, 4)[0]
    if version != VERSION:
        raise FileFormatError(f"unsupported TNSC version {version}", 4)
    n_sections = _U32.unpack_from(raw, 8)[0]
    off = 12
    sections: dict[str, np.ndarray] = {}
    for _ in range(n_sections):
        if off + 4 > len(raw):
            raise FileFormatError("truncated section name length", off)
        name_len = _U32.unpack_from(raw, off)[0]
        off += 4
        if off + name_len > len(raw):
            raise FileFormatError("truncated section name", off)
        name = raw[off : off + name_len].decode("utf-8")
        off += name_len
        if off + 4 > len(raw):
            raise FileFormatError("truncated section rank", off)
        ndim = _U32.unpack_from(raw, off)[0]
        off += 4
        if ndim < 1 or ndim > 8:
            raise FileFormatError(f"implausible section rank {ndim}", off - 4)
        shape = []
        for _ in range(ndim):
            if off + 4 > len(raw):
                raise FileFormatError("truncated section shape", off)
            shape.append(_U32.unpack_from(raw, off)[0])
            off += 4
        count = int(np.prod(shape))
        nbytes = 8 * count
        if off + nbytes > len(raw):
            raise FileFormatError(
                f"section '{name}' payload truncated ({nbytes} bytes expected)",
                off,
            )
        arr = np.frombuffer(raw, dtype="<f8", count=count, offset=off)
        sections[name] = arr.reshape(shape).copy()
        off += nbytes
    if off != len(raw):
        raise FileFormatError("trailing bytes after last section", off)
    return sections


def read_feature_csv(path) -> np.ndarray:
    """Read a feature matrix from CSV: one column vector per line.

    Returns a ``d x N`` array whose n-th column is the n-th line.
    """
    columns = []
    for line_no, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        try:
            columns.append([float(cell) for cell in line.split(",")])
        except ValueError as exc:
            raise InvalidArgumentError(f"bad CSV value on line {line_no}: {exc}")
    if not columns:
        raise InvalidArgumentError("CSV contains no feature columns")
    widths = {len(c) for c in columns}
    if len(widths) != 1:
        raise InvalidArgumentError(f"inconsistent CSV column lengths: {sorted(widths)}")
    return np.asarray(columns, dtype=np.float64).T
