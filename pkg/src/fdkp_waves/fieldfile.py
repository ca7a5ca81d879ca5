"""Binary field dumps in the FDKPFLD1 layout.

Layout (all little-endian):

    offset  size  content
    0       8     magic b"FDKPFLD1"
    8       4     u32 version (= 1)
    12      8     u64 nx
    20      8     u64 ny
    28      8     f64 lx
    36      8     f64 ly
    44      8*nx*ny  f64 samples, x index varying fastest
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .grid_spectral import Field, Grid2D

MAGIC = b"FDKPFLD1"
VERSION = 1
_HEADER = struct.Struct("<8sIQQdd")
HEADER_SIZE = _HEADER.size  # 44


class FieldFormatError(ValueError):
    """File does not follow the FDKPFLD1 layout."""


@dataclass(frozen=True)
class FieldHeader:
    version: int
    nx: int
    ny: int
    lx: float
    ly: float

    def grid(self) -> Grid2D:
        return Grid2D(self.nx, self.ny, self.lx, self.ly)


def encode(values: np.ndarray, lx: float, ly: float) -> bytes:
    values = np.asarray(values, dtype="<f8")
    nx, ny = values.shape
    head = _HEADER.pack(MAGIC, VERSION, nx, ny, float(lx), float(ly))
    return head + values.tobytes(order="F")


def write_field(path: str | Path, f: Field) -> Path:
    path = Path(path)
    path.write_bytes(encode(f.values, f.grid.lx, f.grid.ly))
    return path


def write_array(path: str | Path, values: np.ndarray, lx: float, ly: float) -> Path:
    """Dump an arbitrary real lattice array, e.g. a symbol table entry."""
    path = Path(path)
    path.write_bytes(encode(values, lx, ly))
    return path


def parse_header(blob: bytes) -> FieldHeader:
    if len(blob) < HEADER_SIZE:
        raise FieldFormatError(f"file too short for header ({len(blob)} < {HEADER_SIZE} bytes)")
    magic, version, nx, ny, lx, ly = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise FieldFormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise FieldFormatError(f"unsupported version {version}")
    if nx == 0 or ny == 0:
        raise FieldFormatError(f"empty lattice {nx}x{ny}")
    if not (np.isfinite(lx) and np.isfinite(ly) and lx > 0 and ly > 0):
        raise FieldFormatError(f"invalid box lengths {lx}, {ly}")
    expected = HEADER_SIZE + 8 * nx * ny
    if len(blob) != expected:
        raise FieldFormatError(f"payload size {len(blob)} bytes, expected {expected}")
    return FieldHeader(version, nx, ny, lx, ly)


def check_file(path: str | Path) -> FieldHeader:
    """Validate header and payload length; raises :class:`FieldFormatError`."""
    return parse_header(Path(path).read_bytes())


def read_array(path: str | Path) -> tuple[FieldHeader, np.ndarray]:
    blob = Path(path).read_bytes()
    head = parse_header(blob)
    vals = np.frombuffer(blob, dtype="<f8", offset=HEADER_SIZE).reshape((head.nx, head.ny), order="F")
    return head, vals.astype(np.float64)


def read_field(path: str | Path) -> Field:
    head, vals = read_array(path)
    return Field(head.grid(), vals)
