"""Per-channel weight quantization by cosine alignment on an unscaled grid.

Each channel w gets its own integer alphabet A = {z .. z+n-1} derived from
its range.  Codes are chosen to maximize the cosine between the calibrated
output of the original channel and the output of the integer code vector:
a greedy first assignment walks the coordinates once, then cyclic coordinate
ascent refines them for up to max_loops sweeps.  The per-channel scale never
enters the search; it is recovered afterwards in closed form from the final
codes (see geometry.optimal_scale).

The search runs on the QR-reduced matrices (geometry.reduce_inputs), which
leaves every cosine unchanged while shrinking the inner products from the
calibration row count down to at most 2n.  Each coordinate visit rebuilds
the rest-output with one reduced product; scoring all candidate codes then
costs O(n + levels).

Two heuristics from the same playbook are exposed through BeaconConfig:
column ordering (visit coordinates in increasing column-norm order for the
greedy pass and decreasing order for refinement) and an optional second
calibration matrix for the quantized side, which lets the codes compensate
quantization error that earlier layers already introduced.
"""

from __future__ import annotations

import concurrent.futures
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, NonFiniteData, UnsupportedBits
from .geometry import ReducedPair, reduce_inputs
from .grid import MAX_BITS, MAX_LEVELS, IntegerGrid, zero_point
from .tensor_io import QuantizedMatrixFile

NORM_SORTED = "norm-sorted"
NATURAL = "natural"

# A candidate output whose squared norm lands below this fraction of the
# magnitudes feeding it is treated as exactly zero (undefined cosine).
_ZERO_OUT_TOL = 1e-20


@dataclass(frozen=True)
class BeaconConfig:
    """Solver settings.

    bits fixes the alphabet size at 2**bits; levels overrides it for grids
    that are not a power of two (e.g. 3).  max_loops bounds the refinement
    sweeps; with early_stop a channel quits as soon as a sweep changes
    nothing.  error_correction gates whether a provided second calibration
    matrix is used on the quantized side.
    """

    bits: int = 4
    max_loops: int = 6
    ordering: str = NORM_SORTED
    error_correction: bool = True
    early_stop: bool = True
    levels: int | None = None

    def __post_init__(self):
        if not 1 <= self.bits <= MAX_BITS:
            raise UnsupportedBits(f"bits must be in 1..{MAX_BITS}, got {self.bits}")
        if self.levels is not None and not 2 <= self.levels <= MAX_LEVELS:
            raise UnsupportedBits(f"levels must be in 2..{MAX_LEVELS}, got {self.levels}")
        if self.max_loops < 0:
            raise ValueError(f"max_loops must be >= 0, got {self.max_loops}")
        if self.ordering not in (NORM_SORTED, NATURAL):
            raise ValueError(f"ordering must be {NORM_SORTED!r} or {NATURAL!r}")

    @property
    def n_levels(self) -> int:
        return self.levels if self.levels is not None else 1 << self.bits

    @property
    def storage_bits(self) -> int:
        return max(1, int(self.n_levels - 1).bit_length())


@dataclass
class ChannelResult:
    """Outcome for one channel.

    q holds integer codes in the channel's alphabet, in the original
    coordinate order; the reconstruction is c * q.  e_trace records the
    cosine after the greedy pass and after every executed sweep (length =
    executed sweeps + 1) and is non-decreasing.  converged_at is the first
    sweep that changed nothing, or None.  degenerate marks channels whose
    final quantized output was identically zero (c falls back to 0).
    """

    q: np.ndarray
    c: float
    z: int
    e_trace: list[float]
    converged_at: int | None
    permutation: np.ndarray
    degenerate: bool = False

    @property
    def sweeps(self) -> int | None:
        """Executed refinement sweeps, None when no trace was kept."""
        return len(self.e_trace) - 1 if self.e_trace else None


@dataclass
class QuantizedMatrix:
    """Per-channel results for a full weight matrix (one column = one channel)."""

    channels: list[ChannelResult]
    levels: int
    n_rows: int

    @property
    def n_cols(self) -> int:
        return len(self.channels)

    @property
    def bits(self) -> int:
        return max(1, int(self.levels - 1).bit_length())

    def codes(self) -> np.ndarray:
        return np.stack([ch.q for ch in self.channels], axis=1)

    def scales(self) -> np.ndarray:
        return np.array([ch.c for ch in self.channels], dtype=np.float64)

    def zero_points(self) -> np.ndarray:
        return np.array([ch.z for ch in self.channels], dtype=np.int64)

    def reconstruct(self) -> np.ndarray:
        """Dequantized weights: column j is c_j * q_j."""
        return self.codes().astype(np.float64) * self.scales()[None, :]


def order_columns(x, x_tilde=None) -> np.ndarray:
    """Permutation putting calibration columns in increasing norm order.

    Ties keep the original relative order.  When a second matrix feeds the
    quantized side, its column norms are the ones that matter.
    """
    src = np.asarray(x if x_tilde is None else x_tilde, dtype=np.float64)
    if src.ndim != 2:
        raise DimensionMismatch(f"expected a matrix, got ndim={src.ndim}")
    return np.argsort(np.linalg.norm(src, axis=0), kind="stable")


def _smallest_valid(lo: int, hi: int) -> int:
    # smallest grid value with a nonzero output (p = 0 contributes nothing)
    return lo if lo != 0 else lo + 1


def _best_code(
    grid: IntegerGrid,
    a: float,
    b: float,
    vv: float,
    vc: float,
    cc: float,
    anchor: float | None = None,
    keep: int | None = None,
):
    """Code p maximizing <y, v' + p*col> / ||v' + p*col||, or None when every
    candidate output is zero.  The inputs are the cached inner products
    a = <y, v'>, b = <y, col>, vv = ||v'||^2, vc = <v', col>, cc = ||col||^2.

    Tie handling: with keep set (refinement) the incumbent code wins any
    exact score tie, so a sweep only moves on strict improvement; otherwise
    the smallest maximizing p wins.  When v' is the zero vector every
    same-sign candidate is parallel and ties exactly, and the cosine carries
    no magnitude information at all; there the pick rounds toward anchor
    (the unquantized coordinate, greedy pass) clipped to the sign-valid
    range, which is what makes exactly representable channels come back
    exactly, or keeps a sign-valid incumbent.
    """
    if vv == 0.0:
        # Parallel candidates; resolve the tie combinatorially instead of
        # trusting rounded quotients.
        if cc == 0.0:
            return None
        lo, hi = grid.lo, grid.hi
        if b > 0.0 and hi >= 1:
            if keep is not None and keep >= 1:
                return keep
            sub_lo = max(lo, 1)
            if anchor is None:
                return sub_lo
            return min(max(int(np.rint(anchor)), sub_lo), hi)
        if b < 0.0 and lo <= -1:
            if keep is not None and keep <= -1:
                return keep
            if anchor is None:
                return lo
            return min(max(int(np.rint(anchor)), lo), min(hi, -1))
        if keep is not None and keep != 0:
            return keep
        return _smallest_valid(lo, hi)
    ps = np.arange(grid.lo, grid.hi + 1, dtype=np.float64)
    num = a + ps * b
    den2 = vv + ps * (2.0 * vc + ps * cc)
    mag = vv + np.abs(ps) * (2.0 * abs(vc) + np.abs(ps) * cc)
    valid = den2 > _ZERO_OUT_TOL * mag
    if not valid.any():
        return None
    scores = np.where(valid, num / np.sqrt(np.where(valid, den2, 1.0)), -np.inf)
    best = int(np.argmax(scores))
    if keep is not None and scores[keep - grid.lo] >= scores[best]:
        return keep
    return grid.lo + best


def _safe_cosine(y, v) -> float:
    ny = float(np.linalg.norm(y))
    nv = float(np.linalg.norm(v))
    if ny == 0.0 or nv == 0.0:
        return 0.0
    return float(np.clip((y @ v) / (ny * nv), -1.0, 1.0))


def greedy_init(pair: ReducedPair, w, grid: IntegerGrid) -> np.ndarray:
    """Sequential first assignment of the codes, in the pair's column order.

    Step t picks the code maximizing the cosine between the first-t-column
    target prefix and the partial quantized output.  While the partial output
    is still zero the candidates are all parallel and the maximizers tie, so
    the pick is anchored on w_t itself (see _best_code).  Undefined cosines
    fall back to direct rounding: onto w_t when the target prefix is zero,
    onto 0 when every candidate output is zero.
    """
    w = np.asarray(w, dtype=np.float64)
    n = pair.n
    if w.shape != (n,):
        raise DimensionMismatch(f"channel length {w.shape} does not match pair size {n}")
    l, lt = pair.l, pair.l_tilde
    q = np.zeros(n, dtype=np.int64)
    y = np.zeros(l.shape[0])
    v = np.zeros(lt.shape[0])
    for t in range(n):
        col = lt[:, t]
        y = y + w[t] * l[:, t]
        if float(y @ y) == 0.0:
            p = grid.nearest(float(w[t]))
        else:
            p = _best_code(
                grid,
                float(y @ v),
                float(y @ col),
                float(v @ v),
                float(v @ col),
                float(col @ col),
                anchor=float(w[t]),
            )
            if p is None:
                p = grid.nearest(0.0)
        q[t] = p
        if p != 0:
            v = v + p * col
    return q


def refine_sweep(pair: ReducedPair, y, q, grid: IntegerGrid, visit_order):
    """One cyclic pass of coordinate ascent over the codes.

    Each coordinate in visit_order is reset to the code maximizing the full
    cosine with every other coordinate held fixed; the incumbent code wins
    ties, so a coordinate only moves on strict improvement and a
    coordinate-wise optimal q is a true fixed point of the sweep.  A
    coordinate whose candidates all produce a zero output keeps its value.
    Returns (codes, cosine after the pass, number of coordinates changed).
    """
    lt = pair.l_tilde
    y = np.asarray(y, dtype=np.float64)
    q = np.array(q, dtype=np.int64)
    qf = q.astype(np.float64)
    yl = y @ lt
    changed = 0
    for t in visit_order:
        col = lt[:, t]
        # Rebuild the rest-output from scratch rather than downdating a
        # running u: subtracting q[t]*col leaves cancellation residue whose
        # direction is pure noise, and a noise denominator can fake a great
        # cosine.  The fresh product is exactly zero when the rest codes are.
        held = qf[t]
        qf[t] = 0.0
        u_prime = lt @ qf
        p = _best_code(
            grid,
            float(y @ u_prime),
            float(yl[t]),
            float(u_prime @ u_prime),
            float(u_prime @ col),
            float(col @ col),
            keep=int(q[t]),
        )
        if p is None or p == q[t]:
            qf[t] = held
            continue
        q[t] = p
        qf[t] = float(p)
        changed += 1
    return q, _safe_cosine(y, lt @ qf), changed


def beacon_channel(pair: ReducedPair, w, cfg: BeaconConfig = BeaconConfig()) -> ChannelResult:
    """Quantize one channel against a prepared ReducedPair.

    Pipeline: offset from the channel's own range, greedy first assignment in
    the pair's column order, up to max_loops refinement sweeps (reverse order
    under norm-sorted visiting), then the closed-form scale from the final
    codes.  Codes in the result are back in the original coordinate order.
    """
    w = np.asarray(w, dtype=np.float64)
    n = pair.n
    if w.shape != (n,):
        raise DimensionMismatch(f"channel length {w.shape} does not match pair size {n}")
    z = zero_point(w, levels=cfg.n_levels)
    grid = IntegerGrid(cfg.n_levels, z)
    perm = np.asarray(pair.permutation, dtype=np.int64)
    wp = w[perm]
    y = pair.l @ wp
    q = greedy_init(pair, wp, grid)
    trace = [_safe_cosine(y, pair.l_tilde @ q.astype(np.float64))]
    converged = None
    if float(y @ y) != 0.0:
        visit = range(n - 1, -1, -1) if cfg.ordering == NORM_SORTED else range(n)
        for sweep in range(1, cfg.max_loops + 1):
            q, e, changed = refine_sweep(pair, y, q, grid, visit)
            trace.append(e)
            if changed == 0:
                if converged is None:
                    converged = sweep
                if cfg.early_stop:
                    break
    v = pair.l_tilde @ q.astype(np.float64)
    nv2 = float(v @ v)
    degenerate = nv2 == 0.0
    c = 0.0 if degenerate else float(y @ v) / nv2
    q_out = np.empty_like(q)
    q_out[perm] = q
    return ChannelResult(
        q=q_out,
        c=c,
        z=z,
        e_trace=trace,
        converged_at=converged,
        permutation=perm.copy(),
        degenerate=degenerate,
    )


def beacon_matrix(
    x,
    w,
    cfg: BeaconConfig = BeaconConfig(),
    x_tilde=None,
    threads: int = 1,
) -> QuantizedMatrix:
    """Quantize every channel (column) of w against calibration x.

    x_tilde, when given and error correction is enabled, feeds the quantized
    side of the objective.  Channels are independent; any thread count
    produces bit-identical results.
    """
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    if x.ndim != 2 or w.ndim != 2:
        raise DimensionMismatch("calibration and weights must both be matrices")
    if w.shape[0] != x.shape[1]:
        raise DimensionMismatch(
            f"weights have {w.shape[0]} rows but calibration has {x.shape[1]} columns"
        )
    if not np.isfinite(w).all():
        raise NonFiniteData("weights contain NaN or Inf")
    xt = None
    if x_tilde is not None and cfg.error_correction:
        xt = np.asarray(x_tilde, dtype=np.float64)
        if xt.shape != x.shape:
            raise DimensionMismatch(f"calibration shapes disagree: {x.shape} vs {xt.shape}")
    perm = order_columns(x, xt) if cfg.ordering == NORM_SORTED else None
    pair = reduce_inputs(x, xt, permutation=perm)

    def solve(j: int) -> ChannelResult:
        return beacon_channel(pair, w[:, j], cfg)

    cols = range(w.shape[1])
    if threads is not None and threads > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as pool:
            channels = list(pool.map(solve, cols))
    else:
        channels = [solve(j) for j in cols]
    return QuantizedMatrix(channels=channels, levels=cfg.n_levels, n_rows=w.shape[0])


def export_scales(qm: QuantizedMatrix) -> list[dict]:
    """Per-channel scale records for downstream grid-based quantizers.

    JSON-ready, in column order: {"col": j, "c": scale, "z": offset,
    "b": storage bits}; grids that are not a full power of two carry an
    extra "levels" key.
    """
    full = qm.levels == (1 << qm.bits)
    records = []
    for j, ch in enumerate(qm.channels):
        rec = {"col": j, "c": float(ch.c), "z": int(ch.z), "b": int(qm.bits)}
        if not full:
            rec["levels"] = int(qm.levels)
        records.append(rec)
    return records


def to_quantized_file(qm: QuantizedMatrix) -> QuantizedMatrixFile:
    """File image of the result: per-column (z, c) plus offsets k = q - z.

    The format stores a bit width, so level counts that are not a power of
    two round up (3 levels pack as 2-bit codes).
    """
    codes = qm.codes()
    offsets = codes - qm.zero_points()[None, :]
    return QuantizedMatrixFile(
        bits=qm.bits,
        n_rows=qm.n_rows,
        n_cols=qm.n_cols,
        zero_points=qm.zero_points().astype(np.int32),
        scales=qm.scales(),
        codes=offsets.astype(np.uint8),
    )


def from_quantized_file(qmf: QuantizedMatrixFile) -> QuantizedMatrix:
    """Rebuild the in-memory result from its file image.

    Traces and orderings are not stored, so the channels come back with an
    empty e_trace, no convergence mark, and the identity permutation.
    """
    identity = np.arange(qmf.n_rows)
    channels = []
    for j in range(qmf.n_cols):
        z = int(qmf.zero_points[j])
        c = float(qmf.scales[j])
        channels.append(
            ChannelResult(
                q=qmf.codes[:, j].astype(np.int64) + z,
                c=c,
                z=z,
                e_trace=[],
                converged_at=None,
                permutation=identity.copy(),
                degenerate=c == 0.0,
            )
        )
    return QuantizedMatrix(channels=channels, levels=1 << qmf.bits, n_rows=qmf.n_rows)
