"""``tvho`` command line entry point.

Exit status is 0 on success, 1 for usage errors and 2 for numerical failures
or inconsistent data.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import io as tio
from .bcdiff import BoundaryCondition, build_derivative_matrix
from .diffkernel import design_nr_kernel, frequency_response
from .experiments import (ExperimentSpec, cell_seeds, rows_to_csv, run_sweep,
                          translating_boxes, worker_count)
from .solver import NumericalError, SolverConfig, build_operators, solve
from .transforms import make_measurement, make_sampling_plan, select
from .tvtensor import TensorGradient, tv_norm

log = logging.getLogger("tvho")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _num(x: float) -> str:
    return format(float(x), ".17g")


def _int_list(text: str) -> list[int]:
    out = []
    for part in text.split(","):
        part = part.strip()
        if "-" in part:
            lo, hi = part.split("-", 1)
            out.extend(range(int(lo), int(hi) + 1))
        elif part:
            out.append(int(part))
    if not out:
        raise argparse.ArgumentTypeError("empty list")
    return out


def _float_list(text: str) -> list[float]:
    try:
        vals = [float(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}")
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _shape(text: str) -> tuple:
    parts = _int_list(text)
    if len(parts) != 3 or min(parts) < 1:
        raise argparse.ArgumentTypeError("shape must be m,n,N with positive entries")
    return tuple(parts)


def _bc(text: str) -> BoundaryCondition:
    kind, _, shift = text.partition(":")
    try:
        return BoundaryCondition(kind, int(shift) if shift else None)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc))


def _load_signal(path) -> np.ndarray:
    return np.atleast_1d(np.loadtxt(path, dtype=float, ndmin=1))


def _config(args) -> SolverConfig:
    return tio.read_config(args.config) if getattr(args, "config", None) else SolverConfig()


# --------------------------------------------------------------------------
# subcommands


def cmd_kernel(args, out):
    k = design_nr_kernel(args.length, args.accuracy, args.spacing)
    if args.full:
        from .diffkernel import assemble_full_kernel
        vals = assemble_full_kernel(k)
    else:
        vals = k.d
    for v in vals:
        print(_num(v), file=out)
    if args.omega is not None:
        print(f"# H({_num(args.omega)}) = {_num(frequency_response(k, args.omega))}", file=out)
    return 0


def cmd_diff(args, out):
    f = _load_signal(args.input)
    k = design_nr_kernel(args.length, args.accuracy, args.spacing)
    op = build_derivative_matrix(f.size, k, args.bc)
    for v in op.D @ f:
        print(_num(v), file=out)
    return 0


def cmd_tv(args, out):
    k = design_nr_kernel(args.length, args.accuracy)
    if args.input.endswith(".txt"):
        f = _load_signal(args.input)
        op = build_derivative_matrix(f.size, k.with_spacing(args.spacing), args.bc)
        print(_num(args.spacing * np.abs(op.D @ f).sum()), file=out)
        return 0
    F = tio.read_volume(args.input)
    ops = [build_derivative_matrix(s, k, args.bc) for s in F.shape]
    print(_num(tv_norm(TensorGradient(*ops).forward(F), args.norm)), file=out)
    return 0


def _plan_for(meta):
    m, n, N = meta["m"], meta["n"], meta["N"]
    s_seed, p_seed = cell_seeds(meta["seed"])
    sensing = make_measurement(meta["transform"], m, n, s_seed)
    plan = make_sampling_plan(m, n, N, meta["rate"], p_seed, meta.get("per_frame", False))
    return sensing, plan


def cmd_sample(args, out):
    F = tio.read_volume(args.input)
    m, n, N = F.shape
    meta = dict(m=m, n=n, N=N, rate=args.rate, seed=args.seed, transform=args.transform,
                per_frame=args.per_frame, count=None)
    sensing, plan = _plan_for(meta)
    b = select(plan, sensing.forward(F))
    meta["count"] = len(plan)
    tio.write_volume(args.output, b.reshape(-1, 1, 1))
    plan_path = args.plan or str(args.output) + ".plan.json"
    Path(plan_path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    tio.write_metadata(args.output, "sample", args.argv, plan=meta, plan_file=plan_path)
    print(f"{len(b)} measurements of {m}x{n}x{N} -> {args.output}", file=out)
    return 0


def cmd_reconstruct(args, out):
    cfg = _config(args)
    if args.max_iter is not None:
        cfg = cfg.replace(max_iter=args.max_iter)
    meta = json.loads(Path(args.plan).read_text())
    b = tio.read_volume(args.measurements).ravel(order="F")
    sensing, plan = _plan_for(meta)
    if b.size != len(plan):
        raise ValueError(f"plan selects {len(plan)} samples but the measurement file "
                         f"holds {b.size}")
    ops = build_operators(plan.shape, cfg, sensing, plan)
    F, rep = solve(b, ops, cfg)
    tio.write_volume(args.output, F, args.dtype)
    info = dict(config=cfg.to_dict(), config_hash=cfg.digest(), plan=meta,
                iterations=rep.iterations, converged=rep.converged,
                final_rel_change=rep.rel_change[-1], objective=rep.objective,
                timings={"solve_s": rep.wall_time_s})
    if args.reference:
        from .experiments import nmse, psnr
        ref = tio.read_volume(args.reference)
        info["psnr_db"] = psnr(ref, F)
        info["nmse"] = nmse(ref, F)
        print(f"psnr_db={_num(info['psnr_db'])} nmse={_num(info['nmse'])}", file=out)
    tio.write_metadata(args.output, "reconstruct", args.argv, **info)
    print(f"iterations={rep.iterations} converged={rep.converged} "
          f"objective={_num(rep.objective)}", file=out)
    return 0


def cmd_sweep(args, out):
    cfg = _config(args)
    spec = ExperimentSpec(rates=args.rates, seeds=args.seeds, source=args.source,
                          shape=args.shape, transform=args.transform, config=cfg,
                          per_frame=args.per_frame, record_timing=args.record_timing)
    t0 = time.perf_counter()
    res = run_sweep(spec)
    elapsed = time.perf_counter() - t0
    Path(args.output).write_text(res.to_csv())
    extra = {}
    if args.emit_plot_data:
        base = str(args.output).removesuffix(".csv")
        curve = res.rate_curve()
        p1 = base + "_psnr_vs_rate.csv"
        Path(p1).write_text(rows_to_csv(curve, ("rate", "psnr_db", "nmse")))
        rows = [r for rate in spec.rates for r in res.frame_curve(rate)]
        p2 = base + "_psnr_vs_frame.csv"
        Path(p2).write_text(rows_to_csv(rows, ("rate", "frame_index", "psnr_db", "nmse")))
        extra["plot_data"] = [p1, p2]
    tio.write_metadata(args.output, "sweep", args.argv, config=cfg.to_dict(),
                       config_hash=cfg.digest(), rates=spec.rates, seeds=spec.seeds,
                       source=spec.source, shape=list(spec.shape), transform=spec.transform,
                       workers=worker_count(), failures=res.failures,
                       timings={"sweep_s": elapsed}, **extra)
    print(f"{len(res.rows)} rows -> {args.output}", file=out)
    return 2 if res.failures and len(res.failures) == len(spec.rates) * len(spec.seeds) else 0


def cmd_phantom(args, out):
    F = translating_boxes(*args.shape, outer=args.outer, inner=args.inner)
    tio.write_volume(args.output, F, args.dtype)
    tio.write_metadata(args.output, "phantom", args.argv, shape=list(args.shape),
                       outer=args.outer, inner=args.inner)
    print(f"{'x'.join(map(str, args.shape))} phantom -> {args.output}", file=out)
    return 0


# --------------------------------------------------------------------------
# parser


def _kernel_args(p, length=27, accuracy=25):
    p.add_argument("--length", "-L", type=int, default=length, help="kernel length (odd)")
    p.add_argument("--accuracy", "-p", type=int, default=accuracy, help="accuracy order")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="tvho", description="High-order TV tools and BC-ADMM reconstruction.")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("kernel", help="noise-robust derivative kernels")
    ksub = p.add_subparsers(dest="action", required=True, parser_class=_Parser)
    d = ksub.add_parser("design", help="print the coefficients d_1..d_A")
    _kernel_args(d)
    d.add_argument("--spacing", "-T", type=float, default=1.0)
    d.add_argument("--full", action="store_true", help="print the full antisymmetric kernel")
    d.add_argument("--omega", type=float, help="also print the frequency response at omega")
    d.set_defaults(func=cmd_kernel)

    p = sub.add_parser("diff", help="differentiate a 1D signal (text, one value per line)")
    p.add_argument("--input", required=True)
    _kernel_args(p)
    p.add_argument("--spacing", "-T", type=float, default=1.0)
    p.add_argument("--bc", type=_bc, default=BoundaryCondition("antireflective"),
                   help="zero|periodic|reflective|antireflective, optional ':shift'")
    p.set_defaults(func=cmd_diff)

    p = sub.add_parser("tv", help="total variation of a signal (.txt) or volume file")
    p.add_argument("--input", required=True)
    _kernel_args(p)
    p.add_argument("--spacing", "-T", type=float, default=1.0)
    p.add_argument("--bc", type=_bc, default=BoundaryCondition("antireflective"))
    p.add_argument("--norm", choices=("aniso", "iso"), default="aniso")
    p.set_defaults(func=cmd_tv)

    p = sub.add_parser("sample", help="take compressed measurements of a volume")
    p.add_argument("--input", required=True)
    p.add_argument("--rate", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--transform", choices=("gauss", "hadamard"), default="gauss")
    p.add_argument("--per-frame", action="store_true")
    p.add_argument("--output", required=True)
    p.add_argument("--plan", help="plan file (default: <output>.plan.json)")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("reconstruct", help="BC-ADMM reconstruction from measurements")
    p.add_argument("--measurements", required=True)
    p.add_argument("--plan", required=True)
    p.add_argument("--config")
    p.add_argument("--output", required=True)
    p.add_argument("--dtype", choices=("float64", "uint8"), default="float64")
    p.add_argument("--max-iter", type=int)
    p.add_argument("--reference", help="ground-truth volume for PSNR/NMSE")
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("sweep", help="Monte-Carlo sampling-rate sweep")
    p.add_argument("--rates", type=_float_list, required=True)
    p.add_argument("--seeds", type=_int_list, default=[0], help="e.g. 0-9 or 1,2,5")
    p.add_argument("--source", default="phantom", help="'phantom', a volume file or a PGM directory")
    p.add_argument("--shape", type=_shape, default=(16, 16, 16), help="phantom shape m,n,N")
    p.add_argument("--transform", choices=("gauss", "hadamard"), default="gauss")
    p.add_argument("--per-frame", action="store_true")
    p.add_argument("--config")
    p.add_argument("--output", required=True)
    p.add_argument("--emit-plot-data", action="store_true")
    p.add_argument("--record-timing", action="store_true",
                   help="fill wall_time_s (otherwise nan, keeping the CSV reproducible)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("phantom", help="write the translating-boxes phantom")
    p.add_argument("--shape", type=_shape, default=(16, 16, 16))
    p.add_argument("--outer", type=float, default=100.0)
    p.add_argument("--inner", type=float, default=200.0)
    p.add_argument("--dtype", choices=("float64", "uint8"), default="float64")
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_phantom)
    return ap


def dispatch(argv=None, out=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    out = sys.stdout if out is None else out
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    args.argv = argv
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args, out)
    except (NumericalError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"tvho: numerical failure: {exc}", file=sys.stderr)
        return 2
    except (ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"tvho: error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"tvho: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
