"""Command-line surface: gen, quantize, eval, oracle, compare.

Exit codes: 0 success, 2 usage errors (argparse), 3 unreadable or malformed
files, 4 data that parses but cannot be processed, 1 anything unexpected.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time

import numpy as np

from . import core, harness, oracle, tensor_io
from .errors import BeaconError, DimensionMismatch, FormatError
from .grid import MAX_BITS, MAX_LEVELS, IntegerGrid, RTNConfig, rtn_quantize


def _bits_arg(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bits must be an integer in 1..{MAX_BITS}")
    if not 1 <= value <= MAX_BITS:
        raise argparse.ArgumentTypeError(f"bits must be in 1..{MAX_BITS}, got {value}")
    return value


def _levels_arg(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"levels must be an integer in 2..{MAX_LEVELS}")
    if not 2 <= value <= MAX_LEVELS:
        raise argparse.ArgumentTypeError(f"levels must be in 2..{MAX_LEVELS}, got {value}")
    return value


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError("expected a positive integer")
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return value


def _default_threads() -> int:
    env = os.environ.get("BEACON_THREADS", "")
    try:
        return max(1, int(env))
    except ValueError:
        return 1


def _add_grid_flags(p: argparse.ArgumentParser) -> None:
    group = p.add_mutually_exclusive_group()
    group.add_argument("--bits", type=_bits_arg, default=None, help=f"code width, 1..{MAX_BITS}")
    group.add_argument(
        "--levels",
        type=_levels_arg,
        default=None,
        help=f"alphabet size, 2..{MAX_LEVELS}; for grids that are not a power of two",
    )


def _grid_kwargs(args) -> dict:
    if args.levels is not None:
        return {"bits": max(1, int(args.levels - 1).bit_length()), "levels": args.levels}
    return {"bits": args.bits if args.bits is not None else 4, "levels": None}


def _bits_label(args) -> float:
    if args.levels is not None:
        return round(float(np.log2(args.levels)), 2)
    return float(args.bits if args.bits is not None else 4)


def _read_matrix(path, name: str) -> np.ndarray:
    arr = tensor_io.read_tensor(path)
    if arr.ndim == 1:
        arr = arr[:, None] if name == "weights" else arr[None, :]
    if arr.ndim != 2:
        raise DimensionMismatch(f"{name} must be 1- or 2-dimensional, got {arr.ndim}")
    return arr


def _load_problem(args):
    w = _read_matrix(args.weights, "weights")
    x = _read_matrix(args.calib, "calib")
    xt = None
    if getattr(args, "calib_shifted", None):
        xt = _read_matrix(args.calib_shifted, "calib-shifted")
    return w, x, xt


def cmd_gen(args) -> int:
    spec = harness.SyntheticSpec(
        seed=args.seed,
        m=args.m,
        n=args.n,
        n_prime=args.channels,
        weight_dist=args.weight_dist,
        calib_dist=args.calib_dist,
        rho=args.rho,
        sigma=args.sigma,
    )
    w, x, xt = harness.gen_synthetic(spec)
    tensor_io.write_tensor(args.weights_out, w)
    tensor_io.write_tensor(args.calib_out, x)
    if args.calib_shifted_out:
        tensor_io.write_tensor(args.calib_shifted_out, xt)
    return 0


def cmd_quantize(args) -> int:
    w, x, xt = _load_problem(args)
    cfg = core.BeaconConfig(
        max_loops=args.loops,
        ordering=core.NATURAL if args.no_ordering else core.NORM_SORTED,
        error_correction=xt is not None,
        early_stop=not args.no_early_stop,
        **_grid_kwargs(args),
    )
    t0 = time.perf_counter()
    qm = core.beacon_matrix(x, w, cfg, x_tilde=xt, threads=args.threads)
    wall_ms = 1e3 * (time.perf_counter() - t0)
    tensor_io.write_quantized(args.out, core.to_quantized_file(qm))
    report = harness.evaluate(w, x, qm, x_tilde=xt, wall_ms=wall_ms)
    if args.report:
        payload = {
            "input": {
                "weights": args.weights,
                "calib": args.calib,
                "calib_shifted": args.calib_shifted,
            },
            "config": {
                "bits": cfg.bits,
                "levels": cfg.n_levels,
                "loops": cfg.max_loops,
                "ordering": cfg.ordering,
                "error_correction": cfg.error_correction,
                "early_stop": cfg.early_stop,
                "threads": args.threads,
            },
            "metrics": report.to_dict(),
        }
        with open(args.report, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
    if args.scales_out:
        with open(args.scales_out, "w") as fh:
            json.dump(core.export_scales(qm), fh, indent=2)
            fh.write("\n")
    print(f"rel_error={report.rel_error:.6g} mean_cos={report.mean_cosine:.9f}")
    return 0


def cmd_eval(args) -> int:
    w, x, xt = _load_problem(args)
    qm = core.from_quantized_file(tensor_io.read_quantized(args.quantized))
    report = harness.evaluate(w, x, qm, x_tilde=xt)
    text = json.dumps(report.to_dict(), indent=2, sort_keys=True)
    if args.report:
        with open(args.report, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    return 0


def cmd_oracle(args) -> int:
    w, x, xt = _load_problem(args)
    kw = _grid_kwargs(args)
    for j in range(w.shape[1]):
        wj = np.asarray(w[:, j], dtype=np.float64)
        if kw["levels"] is not None:
            grid = IntegerGrid.for_channel(wj, levels=kw["levels"])
        else:
            grid = IntegerGrid.for_channel(wj, kw["bits"])
        res = oracle.exhaustive_best(x, wj, grid, x_tilde=xt, limit=args.limit)
        codes = ",".join(str(int(v)) for v in res.q_star)
        print(
            f"col={j} cos_star={res.cos_star:.17g} c_star={res.c_star:.17g} "
            f"z={grid.zero_point} q_star=[{codes}] enumerated={res.enumerated}"
        )
    return 0


def cmd_compare(args) -> int:
    w, x, xt = _load_problem(args)
    kw = _grid_kwargs(args)
    label = _bits_label(args)
    rows = []

    cfg = core.BeaconConfig(
        max_loops=args.loops, error_correction=xt is not None, **kw
    )
    t0 = time.perf_counter()
    qm = core.beacon_matrix(x, w, cfg, x_tilde=xt, threads=args.threads)
    beacon_ms = 1e3 * (time.perf_counter() - t0)
    rep = harness.evaluate(w, x, qm, x_tilde=xt)
    rows.append(("beacon", label, rep.rel_error, rep.mean_cosine, beacon_ms))

    rcfg = RTNConfig(**kw)
    for method in ("rtn_refit", "rtn"):
        t0 = time.perf_counter()
        channels = []
        for j in range(w.shape[1]):
            wj = np.asarray(w[:, j], dtype=np.float64)
            if method == "rtn":
                q, c, z = rtn_quantize(wj, rcfg)
            else:
                q, c, z = oracle.rtn_refit(x, wj, rcfg, x_tilde=xt)
            channels.append(
                core.ChannelResult(
                    q=q, c=c, z=z, e_trace=[], converged_at=None,
                    permutation=np.arange(w.shape[0]),
                )
            )
        ms = 1e3 * (time.perf_counter() - t0)
        qm_m = core.QuantizedMatrix(channels=channels, levels=rcfg.n_levels, n_rows=w.shape[0])
        rep = harness.evaluate(w, x, qm_m, x_tilde=xt)
        rows.append((method, label, rep.rel_error, rep.mean_cosine, ms))

    out = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        writer = csv.writer(out)
        writer.writerow(["method", "bits", "rel_error", "mean_cos", "wall_ms"])
        for method, bits, rel, cos, ms in rows:
            writer.writerow([method, bits, f"{rel:.12g}", f"{cos:.12g}", f"{ms:.3f}"])
    finally:
        if args.out:
            out.close()
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="beacon",
        description="Cosine-aligned per-channel weight quantization on integer grids.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic (weights, calib) problem")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--m", type=_positive_int, default=256, help="calibration rows")
    p.add_argument("--n", type=_positive_int, default=64, help="input dims (weight rows)")
    p.add_argument("--channels", type=_positive_int, default=64, help="weight columns")
    p.add_argument("--weight-dist", choices=harness.WEIGHT_DISTS, default="gaussian")
    p.add_argument("--calib-dist", choices=harness.CALIB_DISTS, default="correlated")
    p.add_argument("--rho", type=float, default=0.5, help="AR(1) column correlation")
    p.add_argument("--sigma", type=float, default=0.01, help="perturbation noise scale")
    p.add_argument("--weights-out", required=True)
    p.add_argument("--calib-out", required=True)
    p.add_argument("--calib-shifted-out", default=None)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("quantize", help="quantize a weight matrix against calibration data")
    p.add_argument("--weights", required=True)
    p.add_argument("--calib", required=True)
    p.add_argument("--calib-shifted", default=None, help="perturbed calibration for the quantized side")
    _add_grid_flags(p)
    p.add_argument("--loops", type=int, default=6, help="max refinement sweeps")
    p.add_argument("--no-early-stop", action="store_true")
    p.add_argument("--no-ordering", action="store_true", help="keep natural coordinate order")
    p.add_argument("--threads", type=_positive_int, default=_default_threads())
    p.add_argument("--out", required=True, help="quantized output file")
    p.add_argument("--report", default=None, help="JSON metrics file")
    p.add_argument("--scales-out", default=None, help="JSON per-channel scale table")
    p.set_defaults(func=cmd_quantize)

    p = sub.add_parser("eval", help="score a quantized file against calibration data")
    p.add_argument("--weights", required=True)
    p.add_argument("--calib", required=True)
    p.add_argument("--calib-shifted", default=None)
    p.add_argument("--quantized", required=True)
    p.add_argument("--report", default=None, help="write JSON here instead of stdout")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("oracle", help="exhaustively search tiny channels for the best codes")
    p.add_argument("--weights", required=True)
    p.add_argument("--calib", required=True)
    p.add_argument("--calib-shifted", default=None)
    _add_grid_flags(p)
    p.add_argument("--limit", type=_positive_int, default=oracle.ENUM_LIMIT)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("compare", help="beacon vs round-to-nearest on the same problem")
    p.add_argument("--weights", required=True)
    p.add_argument("--calib", required=True)
    p.add_argument("--calib-shifted", default=None)
    _add_grid_flags(p)
    p.add_argument("--loops", type=int, default=6)
    p.add_argument("--threads", type=_positive_int, default=_default_threads())
    p.add_argument("--out", default=None, help="CSV file (default: stdout)")
    p.set_defaults(func=cmd_compare)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (FormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except BeaconError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except Exception as exc:  # noqa: BLE001 - last-resort diagnostic
        print(f"unexpected error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
