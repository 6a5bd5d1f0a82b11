"""Brute-force ground truth and checks for small channels.

The enumerator walks every code vector on the channel's grid, so it is only
usable for tiny n and coarse grids: the count is levels**n and a hard cap
guards against accidental blowups.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, InvariantViolation, TooLarge, ZeroQuantizedOutput
from .geometry import optimal_scale
from .grid import IntegerGrid, RTNConfig, rtn_quantize

ENUM_LIMIT = 1_000_000
_BLOCK = 1 << 14
# Candidates within this of the running best are re-scored one at a time so
# the reported cosine is bit-identical to score_codes on the same vector.
_NEAR_MAX = 1e-12


@dataclass(frozen=True)
class OracleResult:
    """Best code vector found by enumeration.

    cos_star is the largest cosine over all code vectors; q_star is the
    lexicographically smallest vector whose cosine is within 1e-12 of it, so
    score_codes(q_star) may sit up to that much below cos_star.
    """

    q_star: np.ndarray
    c_star: float
    cos_star: float
    enumerated: int


def _prune(entries, best_cos):
    # Keep, in lex order, only candidates still inside the tie window that are
    # not beaten by a lex-smaller candidate with an equal or better cosine.
    kept = []
    for cos_i, qt in sorted(
        (e for e in entries if e[0] >= best_cos - _NEAR_MAX), key=lambda e: e[1]
    ):
        if not kept or cos_i > kept[-1][0]:
            kept.append((cos_i, qt))
    return kept


def score_codes(x, w, q, x_tilde=None):
    """Alignment of the channel output with the quantized output for codes q.

    Returns (cosine, scale) where the scale minimizes the reconstruction
    error for these codes.  Raises ZeroQuantizedOutput when the quantized
    output vanishes and no scale is meaningful.
    """
    x = np.asarray(x, dtype=np.float64)
    xt = x if x_tilde is None else np.asarray(x_tilde, dtype=np.float64)
    y = x @ np.asarray(w, dtype=np.float64)
    v = xt @ np.asarray(q, dtype=np.float64)
    nv = float(np.linalg.norm(v))
    if nv == 0.0:
        raise ZeroQuantizedOutput("quantized output is the zero vector")
    ny = float(np.linalg.norm(y))
    if ny == 0.0:
        return 0.0, 0.0
    cos = float(np.dot(y, v)) / (ny * nv)
    return min(1.0, max(-1.0, cos)), optimal_scale(y, v)


def exhaustive_best(x, w, grid: IntegerGrid, x_tilde=None, limit: int = ENUM_LIMIT):
    """Search all levels**n code vectors for the best-aligned one.

    Ties within 1e-12 of the maximum cosine go to the lexicographically
    smallest code vector.  Vectors whose quantized output is exactly zero
    carry no direction and are skipped.
    """
    x = np.asarray(x, dtype=np.float64)
    xt = x if x_tilde is None else np.asarray(x_tilde, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    if x.ndim != 2 or w.ndim != 1 or x.shape[1] != w.shape[0]:
        raise DimensionMismatch(f"inputs {x.shape} do not match weights {w.shape}")
    if xt.shape != x.shape:
        raise DimensionMismatch(f"shifted inputs {xt.shape} do not match {x.shape}")
    n = w.shape[0]
    total = grid.levels**n
    if total > limit:
        raise TooLarge(f"{grid.levels}**{n} = {total} code vectors exceeds the cap {limit}")

    y = x @ w
    ny = float(np.linalg.norm(y))

    best_cos = -np.inf
    entries = []
    lex_zero = None
    radix = grid.levels ** np.arange(n)
    for start in range(0, total, _BLOCK):
        idx = np.arange(start, min(start + _BLOCK, total))
        # Mixed-radix digits: coordinate 0 cycles fastest.
        k = (idx[:, None] // radix[None, :]) % grid.levels
        q_block = k.astype(np.float64) + grid.lo
        v = q_block @ xt.T
        vv = np.einsum("ij,ij->i", v, v)
        live = vv > 0.0
        if not live.any():
            continue
        if ny == 0.0:
            # Every live vector ties at cosine zero; track the lex-smallest.
            for i in np.nonzero(live)[0]:
                qt = tuple(int(p) for p in q_block[i])
                if lex_zero is None or qt < lex_zero:
                    lex_zero = qt
            continue
        cos = np.full(idx.shape[0], -np.inf)
        cos[live] = (v[live] @ y) / (ny * np.sqrt(vv[live]))
        cap = max(best_cos, float(cos.max()))
        near = np.nonzero(cos >= cap - _NEAR_MAX)[0]
        # Re-score near-max rows through the single-vector path; batched BLAS
        # can differ from it in the last ulp, and callers compare exactly.
        for i in near:
            q = q_block[i].astype(np.int64)
            cos_i, _ = score_codes(x, w, q, x_tilde)
            if cos_i >= best_cos - _NEAR_MAX:
                best_cos = max(best_cos, cos_i)
                entries.append((cos_i, tuple(int(p) for p in q)))
        if len(entries) > 64:
            entries = _prune(entries, best_cos)

    if ny == 0.0:
        if lex_zero is None:
            raise ZeroQuantizedOutput("every code vector maps to the zero output")
        q0 = np.asarray(lex_zero, dtype=np.int64)
        return OracleResult(q_star=q0, c_star=0.0, cos_star=0.0, enumerated=total)
    entries = _prune(entries, best_cos)
    if not entries:
        raise ZeroQuantizedOutput("every code vector maps to the zero output")
    q_star = np.asarray(entries[0][1], dtype=np.int64)
    c_star = optimal_scale(y, xt @ q_star.astype(np.float64))
    return OracleResult(q_star=q_star, c_star=c_star, cos_star=best_cos, enumerated=total)


def verify_fixed_point(x, w, q, c, x_tilde=None, rtol: float = 1e-12) -> float:
    """Check that c is the error-minimizing scale for codes q.

    Returns the relative deviation |c - c_opt| / max(1, |c_opt|) and raises
    InvariantViolation when it exceeds rtol.  A zero output is only
    acceptable with c == 0 (the degenerate convention).
    """
    x = np.asarray(x, dtype=np.float64)
    xt = x if x_tilde is None else np.asarray(x_tilde, dtype=np.float64)
    y = x @ np.asarray(w, dtype=np.float64)
    v = xt @ np.asarray(q, dtype=np.float64)
    if float(np.linalg.norm(v)) == 0.0 or float(np.linalg.norm(y)) == 0.0:
        if c == 0.0:
            return 0.0
        raise ZeroQuantizedOutput("no optimal scale exists for a zero output")
    c_opt = optimal_scale(y, v)
    dev = abs(c - c_opt) / max(1.0, abs(c_opt))
    if dev > rtol:
        raise InvariantViolation(f"scale off its fixed point by {dev:.3e} (rtol {rtol:.0e})")
    return dev


def rtn_refit(x, w, cfg: RTNConfig, x_tilde=None):
    """Round-to-nearest codes with the scale refit to the calibrated output.

    Keeps the RTN grid placement but replaces its scale with the one that
    minimizes the output error, matching how the closed-form scale is applied
    after code selection.  Returns (q, c, z).
    """
    q, _, z = rtn_quantize(w, cfg)
    x = np.asarray(x, dtype=np.float64)
    xt = x if x_tilde is None else np.asarray(x_tilde, dtype=np.float64)
    y = x @ np.asarray(w, dtype=np.float64)
    v = xt @ q.astype(np.float64)
    if float(np.linalg.norm(v)) == 0.0:
        return q, 0.0, z
    return q, optimal_scale(y, v), z
