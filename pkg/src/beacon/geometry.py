"""Linear-algebra kernel: thin QR, cosine alignment, closed-form scales.

All arithmetic here is float64 regardless of the on-disk precision; the
coordinate search upstream compares nearly equal cosines and needs the
headroom.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import (
    DimensionMismatch,
    InvariantViolation,
    NonFiniteData,
    RankDeficientWarning,
    ShortCalibration,
    ZeroQuantizedOutput,
    ZeroVector,
)

# |R_ii| at or below this fraction of the largest diagonal entry counts as
# numerically rank deficient.
RANK_TOL = 1e-12


def thin_qr(x) -> tuple[np.ndarray, np.ndarray]:
    """Thin Householder QR with the sign convention diag(r) >= 0.

    Returns (u, r) with u of shape (m, n) having orthonormal columns and r of
    shape (n, n) upper triangular, such that x == u @ r.  Requires m >= n.
    A numerically rank deficient input emits RankDeficientWarning but still
    factors.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise DimensionMismatch(f"expected a matrix, got ndim={x.ndim}")
    m, n = x.shape
    if n == 0:
        raise DimensionMismatch("matrix has no columns")
    if m < n:
        raise ShortCalibration(f"need at least as many rows as columns, got {m}x{n}")
    if not np.isfinite(x).all():
        raise NonFiniteData("matrix contains NaN or Inf")
    u, r = np.linalg.qr(x, mode="reduced")
    s = np.where(np.diagonal(r) < 0.0, -1.0, 1.0)
    u = u * s
    r = r * s[:, None]
    d = np.abs(np.diagonal(r))
    if np.any(d <= RANK_TOL * d.max()):
        warnings.warn(
            "calibration matrix is numerically rank deficient",
            RankDeficientWarning,
            stacklevel=2,
        )
    return u, r


def cosine(a, v) -> float:
    """Cosine of the angle between a and v, clamped to [-1, 1]."""
    a = np.asarray(a, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    na = float(np.linalg.norm(a))
    nv = float(np.linalg.norm(v))
    if na == 0.0 or nv == 0.0:
        raise ZeroVector("cosine undefined for a zero-norm vector")
    return float(np.clip((a @ v) / (na * nv), -1.0, 1.0))


def optimal_scale(y, v) -> float:
    """The scale c minimizing ||y - c*v||^2, namely <y, v> / ||v||^2."""
    y = np.asarray(y, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    nv2 = float(v @ v)
    if nv2 == 0.0:
        raise ZeroQuantizedOutput("cannot fit a scale against a zero output")
    return float(y @ v) / nv2


def residual_identity(y, v, c: float) -> float:
    """Squared residual ||y - c*v||^2, cross-checked against the projection
    identity ||y||^2 * (1 - cos^2) that holds when c is the optimal scale.

    The check is relative to ||y||^2; disagreement beyond 1e-6 raises
    InvariantViolation.
    """
    y = np.asarray(y, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    diff = y - c * v
    r2 = float(diff @ diff)
    ny2 = float(y @ y)
    if ny2 == 0.0:
        return r2
    cs = cosine(y, v) if float(v @ v) > 0.0 else 0.0
    ref = ny2 * (1.0 - cs * cs)
    if abs(r2 - ref) > 1e-6 * ny2:
        raise InvariantViolation(
            f"residual {r2:.17g} disagrees with ||y||^2 * (1 - cos^2) = {ref:.17g}"
        )
    return r2


@dataclass(frozen=True)
class ReducedPair:
    """Short stand-ins for the tall calibration matrices.

    l replaces the target-side matrix and l_tilde the quantized-side one.
    Cosines, inner products and norms between a target output l @ w and a
    quantized output l_tilde @ q match the ones computed on the original
    matrices to round-off, so fitted scales, argmax decisions and reported
    alignments all carry over.  Without a second calibration matrix both
    equal the square triangular factor of x; with one they are taller
    (min(m, 2n) rows), projected onto a basis spanning both inputs.
    col_norms caches the column norms of l_tilde.  permutation records the
    column order (original indices) the pair was built in; entries of w and
    q are expected in that order.
    """

    l: np.ndarray
    l_tilde: np.ndarray
    col_norms: np.ndarray
    permutation: np.ndarray

    @property
    def n(self) -> int:
        return self.l.shape[1]


def reduce_inputs(x, x_tilde=None, permutation=None) -> ReducedPair:
    """Collapse m-by-n calibration inputs to an m-independent ReducedPair.

    Without x_tilde: x = u r and l = l_tilde = r.  With it, both matrices
    are rotated by one shared orthonormal basis u spanning the columns of
    [x | x_tilde]: l = u.T @ x and l_tilde = u.T @ x_tilde.  The shared
    basis is what keeps the mixed cosine cos(l w, l_tilde q) equal to its
    raw-matrix value; a basis of x_tilde alone would silently project the
    target output and inflate every cosine.  The optional column permutation
    is applied to both inputs before factoring and recorded on the pair.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise DimensionMismatch(f"expected a matrix, got ndim={x.ndim}")
    n = x.shape[1]
    if permutation is None:
        perm = np.arange(n)
    else:
        perm = np.asarray(permutation, dtype=np.int64)
        if perm.shape != (n,) or not np.array_equal(np.sort(perm), np.arange(n)):
            raise DimensionMismatch("permutation must reorder 0..n-1")
        x = x[:, perm]
    if x_tilde is None:
        _, r = thin_qr(x)
        l = l_tilde = r
    else:
        xt = np.asarray(x_tilde, dtype=np.float64)
        if xt.shape != (x.shape[0], n):
            raise DimensionMismatch(
                f"calibration shapes disagree: {x.shape} vs {xt.shape}"
            )
        xt = xt[:, perm] if permutation is not None else xt
        if x.shape[0] < n:
            raise ShortCalibration(
                f"need at least as many rows as columns, got {x.shape[0]}x{n}"
            )
        if not np.isfinite(x).all() or not np.isfinite(xt).all():
            raise NonFiniteData("matrix contains NaN or Inf")
        # The stack may have fewer rows than columns (n <= m < 2n) and is
        # rank deficient whenever the two inputs span the same space, so it
        # bypasses thin_qr; deficiency of x_tilde itself is still worth the
        # warning and is read off the triangular factor of l_tilde.
        u, _ = np.linalg.qr(np.hstack([x, xt]), mode="reduced")
        l = u.T @ x
        l_tilde = u.T @ xt
        d = np.abs(np.diagonal(np.linalg.qr(l_tilde, mode="r")))
        if np.any(d <= RANK_TOL * d.max()):
            warnings.warn(
                "calibration matrix is numerically rank deficient",
                RankDeficientWarning,
                stacklevel=2,
            )
    return ReducedPair(l, l_tilde, np.linalg.norm(l_tilde, axis=0), perm)
