"""Integer code grids and the round-to-nearest baseline quantizer.

A channel w is quantized onto the unscaled alphabet A = {z, z+1, ..., z+n-1},
where n is the number of levels (2**bits for standard grids) and the offset z
places the scaled grid over the channel's own range:

    z = round(min(w) / (max(w) - min(w)) * (n - 1))

Rounding is half-to-even throughout.  A constant channel has no usable range;
it takes a degenerate path (z = 0, all-ones codes) that still reconstructs it
exactly once a scale is fitted.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyInput, NonFiniteData, NonPositiveScale, UnsupportedBits

MAX_BITS = 8
MAX_LEVELS = 1 << MAX_BITS


def _resolve_levels(bits: int | None, levels: int | None) -> int:
    if (bits is None) == (levels is None):
        raise ValueError("specify exactly one of bits / levels")
    if levels is None:
        if not 1 <= bits <= MAX_BITS:
            raise UnsupportedBits(f"bits must be in 1..{MAX_BITS}, got {bits}")
        return 1 << bits
    if not 2 <= levels <= MAX_LEVELS:
        raise UnsupportedBits(f"levels must be in 2..{MAX_LEVELS}, got {levels}")
    return int(levels)


def _check_channel(w) -> np.ndarray:
    w = np.asarray(w, dtype=np.float64)
    if w.ndim != 1 or w.size == 0:
        raise EmptyInput("channel must be a non-empty 1-D vector")
    if not np.isfinite(w).all():
        raise NonFiniteData("channel contains NaN or Inf")
    return w


def zero_point(w, bits: int | None = None, *, levels: int | None = None) -> int:
    """Grid offset for a channel, 0 when the range collapses."""
    n = _resolve_levels(bits, levels)
    w = _check_channel(w)
    lo, hi = float(w.min()), float(w.max())
    if hi == lo:
        return 0
    return int(np.rint(lo / (hi - lo) * (n - 1)))


@dataclass(frozen=True)
class IntegerGrid:
    """Unscaled alphabet {zero_point + k : k = 0 .. levels-1}."""

    levels: int
    zero_point: int

    def __post_init__(self):
        if not 2 <= self.levels <= MAX_LEVELS:
            raise UnsupportedBits(f"levels must be in 2..{MAX_LEVELS}, got {self.levels}")

    @property
    def bits(self) -> int:
        """Smallest bit width that can store codes 0 .. levels-1."""
        return max(1, int(self.levels - 1).bit_length())

    @property
    def lo(self) -> int:
        return self.zero_point

    @property
    def hi(self) -> int:
        return self.zero_point + self.levels - 1

    def values(self) -> np.ndarray:
        return np.arange(self.lo, self.hi + 1, dtype=np.int64)

    def nearest(self, x: float) -> int:
        """Grid value closest to x (ties round half-to-even)."""
        k = int(np.clip(np.rint(float(x) - self.zero_point), 0, self.levels - 1))
        return k + self.zero_point

    @classmethod
    def from_bits(cls, bits: int, zero_point: int) -> "IntegerGrid":
        return cls(_resolve_levels(bits, None), zero_point)

    @classmethod
    def for_channel(cls, w, bits: int | None = None, levels: int | None = None) -> "IntegerGrid":
        n = _resolve_levels(bits, levels)
        return cls(n, zero_point(w, levels=n))


@dataclass(frozen=True)
class RTNConfig:
    """Round-to-nearest settings.

    alpha and beta shrink/stretch the grid endpoints relative to the channel
    max and min; alpha = beta = 1 is the plain min-max grid.  levels, when
    set, overrides the 2**bits alphabet size.
    """

    bits: int = 4
    alpha: float = 1.0
    beta: float = 1.0
    levels: int | None = None

    def __post_init__(self):
        if not 1 <= self.bits <= MAX_BITS:
            raise UnsupportedBits(f"bits must be in 1..{MAX_BITS}, got {self.bits}")
        if self.levels is not None and not 2 <= self.levels <= MAX_LEVELS:
            raise UnsupportedBits(f"levels must be in 2..{MAX_LEVELS}, got {self.levels}")
        for name in ("alpha", "beta"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be positive and finite, got {v}")

    @property
    def n_levels(self) -> int:
        return self.levels if self.levels is not None else 1 << self.bits


def rtn_quantize(w, cfg: RTNConfig = RTNConfig()) -> tuple[np.ndarray, float, int]:
    """Round-to-nearest codes on the min-max grid.

    Returns (q, c, z): integer codes q in {z .. z+n-1}, scale c and offset z,
    with the reconstructed channel being c * q.  A constant channel takes the
    degenerate path z = 0, q = all ones, c = mean(w), which reproduces it
    exactly.  Adversarial alpha/beta that drive the scale to zero or below
    raise NonPositiveScale.
    """
    w = _check_channel(w)
    n = cfg.n_levels
    lo, hi = float(w.min()), float(w.max())
    if hi == lo:
        return np.ones(w.size, dtype=np.int64), float(w.mean()), 0
    z = zero_point(w, levels=n)
    c = (cfg.alpha * hi - cfg.beta * lo) / (n - 1)
    if c <= 0.0:
        raise NonPositiveScale(f"grid scale is {c!r}; check alpha/beta against the channel range")
    q = np.clip(np.rint(w / c - z), 0, n - 1).astype(np.int64) + z
    return q, float(c), z


def requantize(w, c: float, z: int, bits: int | None = None, *, levels: int | None = None):
    """Round-to-nearest codes for an externally supplied scale and offset.

    Same operator as rtn_quantize but with (c, z) given instead of derived
    from the channel range; this is how a refit scale gets plugged back into
    a plain grid quantizer.
    """
    n = _resolve_levels(bits, levels)
    w = _check_channel(w)
    if not (np.isfinite(c) and c > 0.0):
        raise NonPositiveScale(f"scale must be positive and finite, got {c!r}")
    return np.clip(np.rint(w / c - z), 0, n - 1).astype(np.int64) + z


def dequantize(q, c: float) -> np.ndarray:
    """Reconstructed channel c * q (float64)."""
    return c * np.asarray(q, dtype=np.float64)
