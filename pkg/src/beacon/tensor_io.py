"""Bit-exact file formats for tensors and packed quantized layers.

Tensor files (magic "BCN1"): u8 dtype tag (0 = float32), u8 ndim, then ndim
u64 extents and the row-major float32 payload.  Total length is exactly
4 + 1 + 1 + 8*ndim + 4*prod(dims).

Quantized files (magic "BCNQ"): u8 version (1), u8 bit width, u32 reserved
(zero), u64 n_rows, u64 n_cols, then one block per column: i32 zero point,
f64 scale, ceil(n_rows*bits/8) bytes of codes.  Codes are the per-row offsets
k = q - z in 0..2**bits-1, packed little-endian within bytes (row 0 sits in
the lowest bits of byte 0).  Everything multi-byte is little-endian.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import (
    BadMagic,
    CodeOutOfRange,
    DimensionMismatch,
    NonFiniteData,
    TrailingData,
    TruncatedFile,
    UnsupportedBits,
    UnsupportedDtype,
    UnsupportedVersion,
)
from .grid import MAX_BITS

TENSOR_MAGIC = b"BCN1"
QUANT_MAGIC = b"BCNQ"
QUANT_VERSION = 1

_DTYPE_F32 = 0


def tensor_file_size(dims) -> int:
    size = 1
    for d in dims:
        size *= int(d)
    return 4 + 1 + 1 + 8 * len(dims) + 4 * size


def quantized_file_size(n_rows: int, n_cols: int, bits: int) -> int:
    return 26 + n_cols * (4 + 8 + (n_rows * bits + 7) // 8)


def write_tensor(path, arr) -> None:
    """Write a float32 tensor; the payload round-trips bit for bit."""
    a = np.ascontiguousarray(arr, dtype="<f4")
    if a.ndim > 255:
        raise DimensionMismatch("too many dimensions for the format")
    if a.size == 0:
        raise DimensionMismatch("empty tensors are not representable")
    if not np.isfinite(a).all():
        raise NonFiniteData("tensor contains NaN or Inf")
    with open(path, "wb") as fh:
        fh.write(TENSOR_MAGIC)
        fh.write(bytes([_DTYPE_F32, a.ndim]))
        fh.write(np.asarray(a.shape, dtype="<u8").tobytes())
        fh.write(a.tobytes(order="C"))


def read_tensor(path) -> np.ndarray:
    """Read a tensor written by write_tensor.  Returns a float32 array."""
    with open(path, "rb") as fh:
        buf = fh.read()
    if len(buf) < 4 or buf[:4] != TENSOR_MAGIC:
        raise BadMagic(f"not a tensor file: {path}")
    if len(buf) < 6:
        raise TruncatedFile(f"header cut short in {path}")
    dtype_tag, ndim = buf[4], buf[5]
    if dtype_tag != _DTYPE_F32:
        raise UnsupportedDtype(f"unknown dtype tag {dtype_tag}")
    if len(buf) < 6 + 8 * ndim:
        raise TruncatedFile(f"dims cut short in {path}")
    dims = np.frombuffer(buf, dtype="<u8", count=ndim, offset=6)
    if ndim and dims.min() == 0:
        raise DimensionMismatch(f"zero extent in dims {tuple(int(d) for d in dims)}")
    expected = tensor_file_size(dims)
    if len(buf) < expected:
        raise TruncatedFile(f"payload cut short in {path} ({len(buf)} < {expected} bytes)")
    if len(buf) > expected:
        raise TrailingData(f"{len(buf) - expected} trailing bytes in {path}")
    data = np.frombuffer(buf, dtype="<f4", offset=6 + 8 * ndim)
    if not np.isfinite(data).all():
        raise NonFiniteData(f"tensor payload contains NaN or Inf in {path}")
    return data.reshape(tuple(int(d) for d in dims)).astype(np.float32)


def pack_codes(k, bits: int) -> bytes:
    """Pack code offsets (values in 0..2**bits-1) little-endian within bytes."""
    k = np.asarray(k, dtype=np.uint8)
    bitmat = (k[:, None] >> np.arange(bits, dtype=np.uint8)) & 1
    return np.packbits(bitmat.ravel(), bitorder="little").tobytes()


def unpack_codes(buf, n: int, bits: int) -> np.ndarray:
    """Inverse of pack_codes; returns a uint8 array of length n."""
    bits_flat = np.unpackbits(np.frombuffer(buf, dtype=np.uint8), bitorder="little", count=n * bits)
    weights = (1 << np.arange(bits, dtype=np.uint16))
    return (bits_flat.reshape(n, bits).astype(np.uint16) * weights).sum(axis=1).astype(np.uint8)


@dataclass
class QuantizedMatrixFile:
    """On-disk image of a quantized layer.

    codes stores the per-row offsets k = q - z with shape (n_rows, n_cols);
    column j dequantizes to scales[j] * (codes[:, j] + zero_points[j]).
    """

    bits: int
    n_rows: int
    n_cols: int
    zero_points: np.ndarray
    scales: np.ndarray
    codes: np.ndarray

    def __eq__(self, other) -> bool:
        if not isinstance(other, QuantizedMatrixFile):
            return NotImplemented
        return (
            self.bits == other.bits
            and self.n_rows == other.n_rows
            and self.n_cols == other.n_cols
            and np.array_equal(self.zero_points, other.zero_points)
            and np.array_equal(self.scales, other.scales)
            and np.array_equal(self.codes, other.codes)
        )

    def dequantize(self, col: int) -> np.ndarray:
        z = int(self.zero_points[col])
        return float(self.scales[col]) * (self.codes[:, col].astype(np.float64) + z)

    def validate(self) -> None:
        if not 1 <= self.bits <= MAX_BITS:
            raise UnsupportedBits(f"bits must be in 1..{MAX_BITS}, got {self.bits}")
        if self.n_rows < 1 or self.n_cols < 1:
            raise DimensionMismatch("matrix extents must be positive")
        if self.codes.shape != (self.n_rows, self.n_cols):
            raise DimensionMismatch(
                f"codes shape {self.codes.shape} does not match {self.n_rows}x{self.n_cols}"
            )
        if self.zero_points.shape != (self.n_cols,) or self.scales.shape != (self.n_cols,):
            raise DimensionMismatch("need one zero point and one scale per column")
        if not np.isfinite(self.scales).all():
            raise NonFiniteData("scales contain NaN or Inf")
        if np.any(self.codes.astype(np.int64) > (1 << self.bits) - 1) or np.any(
            self.codes.astype(np.int64) < 0
        ):
            raise CodeOutOfRange(f"codes exceed 0..{(1 << self.bits) - 1}")
        zp = self.zero_points.astype(np.int64)
        if zp.min() < -(1 << 31) or zp.max() > (1 << 31) - 1:
            raise CodeOutOfRange("zero point outside the i32 range")


def write_quantized(path, qmf: QuantizedMatrixFile) -> None:
    qmf.validate()
    with open(path, "wb") as fh:
        fh.write(QUANT_MAGIC)
        fh.write(bytes([QUANT_VERSION, qmf.bits]))
        fh.write(struct.pack("<I", 0))
        fh.write(struct.pack("<QQ", qmf.n_rows, qmf.n_cols))
        for j in range(qmf.n_cols):
            fh.write(struct.pack("<i", int(qmf.zero_points[j])))
            fh.write(struct.pack("<d", float(qmf.scales[j])))
            fh.write(pack_codes(qmf.codes[:, j], qmf.bits))


def read_quantized(path) -> QuantizedMatrixFile:
    with open(path, "rb") as fh:
        buf = fh.read()
    if len(buf) < 4 or buf[:4] != QUANT_MAGIC:
        raise BadMagic(f"not a quantized-matrix file: {path}")
    if len(buf) < 26:
        raise TruncatedFile(f"header cut short in {path}")
    version, bits = buf[4], buf[5]
    if version != QUANT_VERSION:
        raise UnsupportedVersion(f"unknown version {version}")
    if not 1 <= bits <= MAX_BITS:
        raise UnsupportedBits(f"bits must be in 1..{MAX_BITS}, got {bits}")
    n_rows, n_cols = struct.unpack_from("<QQ", buf, 10)
    if n_rows < 1 or n_cols < 1:
        raise DimensionMismatch("matrix extents must be positive")
    expected = quantized_file_size(n_rows, n_cols, bits)
    if len(buf) < expected:
        raise TruncatedFile(f"payload cut short in {path} ({len(buf)} < {expected} bytes)")
    if len(buf) > expected:
        raise TrailingData(f"{len(buf) - expected} trailing bytes in {path}")
    packed_len = (n_rows * bits + 7) // 8
    zero_points = np.empty(n_cols, dtype=np.int32)
    scales = np.empty(n_cols, dtype=np.float64)
    codes = np.empty((n_rows, n_cols), dtype=np.uint8)
    off = 26
    for j in range(n_cols):
        zero_points[j] = struct.unpack_from("<i", buf, off)[0]
        scales[j] = struct.unpack_from("<d", buf, off + 4)[0]
        codes[:, j] = unpack_codes(buf[off + 12 : off + 12 + packed_len], n_rows, bits)
        off += 12 + packed_len
    qmf = QuantizedMatrixFile(
        bits=int(bits),
        n_rows=int(n_rows),
        n_cols=int(n_cols),
        zero_points=zero_points,
        scales=scales,
        codes=codes,
    )
    qmf.validate()
    return qmf
