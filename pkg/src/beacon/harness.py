"""Synthetic calibration data and end-to-end reconstruction metrics."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import QuantizedMatrix
from .errors import DimensionMismatch, NonFiniteData
from .tensor_io import quantized_file_size

WEIGHT_DISTS = ("gaussian", "laplace", "uniform")
CALIB_DISTS = ("gaussian", "correlated")


@dataclass(frozen=True)
class SyntheticSpec:
    """Shape and distribution of a generated (w, x, x_tilde) problem.

    m calibration rows over n input dims, n_prime weight channels.  The
    correlated calibration walks an AR(1) chain across columns at lag
    correlation rho (unit marginal variance), which spreads the column norms
    and makes the norm ordering do something.  x_tilde is x plus gaussian
    noise of scale sigma; sigma 0 reuses x bit for bit.
    """

    seed: int = 42
    m: int = 256
    n: int = 64
    n_prime: int = 64
    weight_dist: str = "gaussian"
    calib_dist: str = "correlated"
    rho: float = 0.5
    sigma: float = 0.01

    def __post_init__(self):
        if self.m < 1 or self.n < 1 or self.n_prime < 1:
            raise DimensionMismatch("all extents must be positive")
        if self.m < self.n:
            raise DimensionMismatch(f"need at least as many rows as dims, got {self.m} < {self.n}")
        if self.weight_dist not in WEIGHT_DISTS:
            raise ValueError(f"weight_dist must be one of {WEIGHT_DISTS}")
        if self.calib_dist not in CALIB_DISTS:
            raise ValueError(f"calib_dist must be one of {CALIB_DISTS}")
        if not -1.0 < self.rho < 1.0:
            raise ValueError(f"rho must be in (-1, 1), got {self.rho}")
        if not (np.isfinite(self.sigma) and self.sigma >= 0.0):
            raise ValueError(f"sigma must be finite and >= 0, got {self.sigma}")


def gen_synthetic(spec: SyntheticSpec):
    """Draw (w, x, x_tilde) as float32 arrays, deterministically in the seed.

    Draw order is fixed (weights, calibration, perturbation) so any one
    output is reproducible independent of how the others are used.
    """
    rng = np.random.default_rng(spec.seed)
    if spec.weight_dist == "gaussian":
        w = rng.standard_normal((spec.n, spec.n_prime))
    elif spec.weight_dist == "laplace":
        w = rng.laplace(0.0, 1.0, size=(spec.n, spec.n_prime))
    else:
        w = rng.uniform(-1.0, 1.0, size=(spec.n, spec.n_prime))
    e = rng.standard_normal((spec.m, spec.n))
    if spec.calib_dist == "gaussian":
        x = e
    else:
        x = np.empty_like(e)
        x[:, 0] = e[:, 0]
        damp = np.sqrt(1.0 - spec.rho**2)
        for j in range(1, spec.n):
            x[:, j] = spec.rho * x[:, j - 1] + damp * e[:, j]
    x = x.astype(np.float32)
    if spec.sigma == 0.0:
        x_tilde = x.copy()
    else:
        x_tilde = (x + spec.sigma * rng.standard_normal(x.shape)).astype(np.float32)
    return w.astype(np.float32), x, x_tilde


@dataclass
class EvalReport:
    """Reconstruction quality of a quantized matrix against its calibration.

    rel_error is the output-space error ||x w - x_used q diag(c)||_F over
    ||x w||_F where x_used is x_tilde when given.  Cosines compare each
    channel's calibrated output with its reconstruction (1.0 when both are
    zero, 0.0 when exactly one is).  pythagorean_dev is the largest relative
    gap between the direct residual and ||y||^2 (1 - cos^2); it only
    vanishes when every scale is output-optimal.  bits_per_weight counts the
    whole serialized file, headers included.
    """

    rel_error: float
    mean_cosine: float
    min_cosine: float
    bits_per_weight: float
    negative_scales: int
    pythagorean_dev: float
    sweep_histogram: dict[int, int]
    n_rows: int
    n_cols: int
    bits: int
    levels: int
    wall_ms: float | None = None
    per_channel_cosine: np.ndarray | None = field(repr=False, default=None)

    def to_dict(self) -> dict:
        return {
            "rel_error": self.rel_error,
            "mean_cosine": self.mean_cosine,
            "min_cosine": self.min_cosine,
            "bits_per_weight": self.bits_per_weight,
            "negative_scales": self.negative_scales,
            "pythagorean_dev": self.pythagorean_dev,
            "sweep_histogram": {str(k): v for k, v in sorted(self.sweep_histogram.items())},
            "n_rows": self.n_rows,
            "n_cols": self.n_cols,
            "bits": self.bits,
            "levels": self.levels,
            "wall_ms": self.wall_ms,
        }


def evaluate(w, x, qm: QuantizedMatrix, x_tilde=None, wall_ms: float | None = None) -> EvalReport:
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    xt = x if x_tilde is None else np.asarray(x_tilde, dtype=np.float64)
    if x.ndim != 2 or w.ndim != 2 or w.shape[0] != x.shape[1]:
        raise DimensionMismatch(f"calibration {x.shape} does not feed weights {w.shape}")
    if xt.shape != x.shape:
        raise DimensionMismatch(f"calibration shapes disagree: {x.shape} vs {xt.shape}")
    if w.shape != (qm.n_rows, qm.n_cols):
        raise DimensionMismatch(
            f"weights {w.shape} do not match quantized {(qm.n_rows, qm.n_cols)}"
        )
    if not (np.isfinite(x).all() and np.isfinite(w).all() and np.isfinite(xt).all()):
        raise NonFiniteData("inputs contain NaN or Inf")

    y = x @ w
    recon = xt @ qm.reconstruct()
    ny = np.linalg.norm(y, axis=0)
    nr = np.linalg.norm(recon, axis=0)

    cosines = np.empty(qm.n_cols)
    pyth_dev = 0.0
    for j in range(qm.n_cols):
        if ny[j] == 0.0 and nr[j] == 0.0:
            cosines[j] = 1.0
            continue
        if ny[j] == 0.0 or nr[j] == 0.0:
            cosines[j] = 0.0
        else:
            cosines[j] = min(1.0, max(-1.0, float(y[:, j] @ recon[:, j]) / (ny[j] * nr[j])))
        if ny[j] > 0.0:
            direct = float(np.sum((y[:, j] - recon[:, j]) ** 2))
            via_cos = ny[j] ** 2 * (1.0 - cosines[j] ** 2)
            pyth_dev = max(pyth_dev, abs(direct - via_cos) / ny[j] ** 2)

    total = float(np.linalg.norm(y))
    err = float(np.linalg.norm(y - recon))
    rel_error = err / total if total > 0.0 else (0.0 if err == 0.0 else np.inf)

    hist: dict[int, int] = {}
    for ch in qm.channels:
        s = ch.sweeps
        if s is not None:
            hist[s] = hist.get(s, 0) + 1

    file_bits = 8 * quantized_file_size(qm.n_rows, qm.n_cols, qm.bits)
    return EvalReport(
        rel_error=rel_error,
        mean_cosine=float(cosines.mean()),
        min_cosine=float(cosines.min()),
        bits_per_weight=file_bits / (qm.n_rows * qm.n_cols),
        negative_scales=int(sum(1 for ch in qm.channels if ch.c < 0.0)),
        pythagorean_dev=pyth_dev,
        sweep_histogram=hist,
        n_rows=qm.n_rows,
        n_cols=qm.n_cols,
        bits=qm.bits,
        levels=qm.levels,
        wall_ms=wall_ms,
        per_channel_cosine=cosines,
    )
