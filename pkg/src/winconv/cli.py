"""Command-line interface.

Exit status discipline: 0 on success, 1 when a verification run finds
kernels disagreeing beyond tolerance, 2 on usage, format, or geometry
errors. The worker pool honors the WINCONV_WORKERS environment variable.
"""

from __future__ import annotations

import argparse
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import parallel  # noqa: F401  (sets up the worker pool before numba loads)
from .bench import (
    ALGORITHMS,
    BENCHMARKS,
    COMPARISON_ALGORITHMS,
    BenchConfig,
    checksum_tensor,
    footprint_report,
    make_inputs,
    report_csv,
    run_ablation,
    run_bench,
)
from .errors import WinconvError
from .fixture_io import read_tensor, write_tensor
from .kernels.optimized import conv_im2win_opt
from .kernels.plan import TilePlan, default_plan
from .kernels.reference import (
    conv_direct,
    conv_im2col_gemm,
    conv_im2win_basic,
    conv_implicit_gemm,
)
from .layouts import im2col, im2win
from .tensors import ConvParams, Tensor4, max_rel_diff

_CONV_FNS = {
    "direct": conv_direct,
    "im2col-gemm": conv_im2col_gemm,
    "implicit-gemm": conv_implicit_gemm,
    "im2win-basic": conv_im2win_basic,
    "im2win-opt": conv_im2win_opt,
}


def _add_plan_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--plan", metavar="M_B,N_B,K_B,M_T,N_T",
                        help="tile plan override (five comma-separated integers)")
    parser.add_argument("--no-micro-kernel", action="store_true",
                        help="disable the micro-kernel (1x1 tiles)")
    parser.add_argument("--no-vectorized-load", action="store_true",
                        help="disable 8-wide register loads")
    parser.add_argument("--no-prefetch-double-buffer", action="store_true",
                        help="disable double buffering and prefetching")


def _plan_from_args(args, cfg: BenchConfig) -> TilePlan | None:
    toggles = {
        "micro_kernel": not args.no_micro_kernel,
        "vectorized_load": not args.no_vectorized_load,
        "prefetch_double_buffer": not args.no_prefetch_double_buffer,
    }
    if args.plan is None:
        if all(toggles.values()):
            return None
        return default_plan(cfg.gemm_dims()).with_toggles(**toggles)
    parts = args.plan.split(",")
    if len(parts) != 5:
        raise WinconvError(f"--plan expects 5 integers, got {args.plan!r}")
    try:
        m_b, n_b, k_b, m_t, n_t = (int(p) for p in parts)
    except ValueError:
        raise WinconvError(f"--plan expects integers, got {args.plan!r}") from None
    return TilePlan(m_b=m_b, n_b=n_b, k_b=k_b, m_t=m_t, n_t=n_t, **toggles)


def _geometry_config(args) -> BenchConfig:
    missing = [flag for flag in ("cin", "hin", "win", "cout", "hf", "wf")
               if getattr(args, flag) is None]
    if missing:
        raise WinconvError("geometry flags required: --" + " --".join(missing))
    return BenchConfig(name="custom", c_in=args.cin, h_in=args.hin, w_in=args.win,
                       c_out=args.cout, h_f=args.hf, w_f=args.wf,
                       stride=args.stride, batch=args.batch, seed=args.seed)


def _select_benches(name: str) -> list[BenchConfig]:
    if name == "all":
        return list(BENCHMARKS.values())
    if name not in BENCHMARKS:
        raise WinconvError(
            f"unknown benchmark {name!r}; valid names: {', '.join(BENCHMARKS)} or all"
        )
    return [BENCHMARKS[name]]


def _cmd_verify(args) -> int:
    if args.all_benchmarks and args.cin is not None:
        raise WinconvError("--all-benchmarks conflicts with explicit geometry flags")
    if args.all_benchmarks:
        cfgs = [replace(cfg, batch=args.batch, seed=args.seed)
                for cfg in BENCHMARKS.values()]
    else:
        cfgs = [_geometry_config(args)]

    worst = 0.0
    failed = False
    for cfg in cfgs:
        inp, flt = make_inputs(cfg)
        params = cfg.params
        outputs = {name: fn(inp, flt, params) for name, fn in _CONV_FNS.items()}
        names = list(outputs)
        print(f"{cfg.name}: batch={cfg.batch} seed={cfg.seed}")
        for i, a in enumerate(names):
            for b in names[i + 1:]:
                diff = max_rel_diff(outputs[a], outputs[b])
                worst = max(worst, diff)
                status = "ok" if diff <= args.tol else "FAIL"
                print(f"  {a:13s} vs {b:13s} max_rel_diff={diff:.3e} {status}")
                if diff > args.tol:
                    failed = True
    print(f"worst pair difference: {worst:.3e} (tolerance {args.tol:g})")
    return 1 if failed else 0


def _cmd_transform(args) -> int:
    tensor = read_tensor(args.infile)
    params = ConvParams(c_in=tensor.dims[1], c_out=1, h_f=args.hf, w_f=args.wf,
                        stride=args.stride)
    if args.layout == "im2win":
        windows = im2win(tensor, params)
        out = Tensor4(windows.data)
    else:
        mats = [im2col(tensor.data[i], params) for i in range(tensor.dims[0])]
        stacked = np.stack([m.data for m in mats])[:, None, :, :]
        out = Tensor4(stacked)
    write_tensor(out, args.outfile)
    print(f"layout: {args.layout}")
    print(f"elements: {out.data.size}")
    print(f"dims: {'x'.join(str(d) for d in out.dims)}")
    return 0


def _cmd_conv(args) -> int:
    inp = read_tensor(args.input)
    flt = read_tensor(args.filter)
    c_out, c_in, h_f, w_f = flt.dims
    params = ConvParams(c_in=c_in, c_out=c_out, h_f=h_f, w_f=w_f, stride=args.stride)
    if args.algo == "im2win-opt":
        cfg = BenchConfig(name="conv", c_in=c_in, h_in=inp.dims[2], w_in=inp.dims[3],
                          c_out=c_out, h_f=h_f, w_f=w_f, stride=args.stride,
                          batch=inp.dims[0])
        plan = _plan_from_args(args, cfg)
        t0 = time.perf_counter()
        out = conv_im2win_opt(inp, flt, params, plan)
    else:
        t0 = time.perf_counter()
        out = _CONV_FNS[args.algo](inp, flt, params)
    elapsed = time.perf_counter() - t0
    if args.out:
        write_tensor(out, args.out)
    print(f"algorithm: {args.algo}")
    print(f"output dims: {'x'.join(str(d) for d in out.dims)}")
    print(f"seconds: {elapsed:.6g}")
    print(f"checksum: {checksum_tensor(out)}")
    return 0


def _emit_report(args, records, figure_fn=None, figure_name: str = "") -> None:
    csv_text = report_csv(records)
    if args.csv:
        Path(args.csv).write_text(csv_text)
        print(f"wrote {len(records)} records (seed {args.seed}) to {args.csv}")
    else:
        sys.stdout.write(csv_text)
        print(f"# seed {args.seed}", file=sys.stderr)
    if args.plot_dir and figure_fn is not None:
        plot_dir = Path(args.plot_dir)
        plot_dir.mkdir(parents=True, exist_ok=True)
        target = figure_fn(records, plot_dir / figure_name)
        print(f"figure: {target}")


def _cmd_bench(args) -> int:
    algos = list(COMPARISON_ALGORITHMS) if args.algo == "all" else [args.algo]
    for algo in algos:
        if algo not in ALGORITHMS:
            raise WinconvError(
                f"unknown algorithm {algo!r}; valid: {', '.join(ALGORITHMS)} or all"
            )
    records = []
    for base in _select_benches(args.bench):
        cfg = replace(base, batch=args.batch, repeats=args.repeats, seed=args.seed)
        plan = _plan_from_args(args, cfg)
        for algo in algos:
            records.append(run_bench(replace(cfg, algorithm=algo, plan=plan)))
    from .plots import plot_throughput

    _emit_report(args, records, plot_throughput, "throughput.png")
    return 0


def _cmd_ablate(args) -> int:
    records = []
    for base in _select_benches(args.bench):
        cfg = replace(base, batch=args.batch, repeats=args.repeats, seed=args.seed)
        cfg = replace(cfg, plan=_plan_from_args(args, cfg))
        records.extend(run_ablation(cfg))
    from .plots import plot_ablation

    _emit_report(args, records, plot_ablation, "ablation.png")
    return 0


def _cmd_footprint(args) -> int:
    cfgs = [replace(cfg, batch=args.batch) for cfg in _select_benches(args.bench)]
    rows = footprint_report(cfgs)
    header = f"{'name':8s} {'batch':>5s} {'raw':>12s} {'im2col':>12s} {'im2win':>12s} {'saving':>8s}"
    print(header)
    for row in rows:
        print(f"{row.name:8s} {row.batch:5d} {row.raw_elems:12d} "
              f"{row.im2col_elems:12d} {row.im2win_elems:12d} {row.reduction_pct:7.1f}%")
    if args.csv:
        lines = ["name,batch,raw_elems,im2col_elems,im2win_elems,reduction_pct"]
        for row in rows:
            lines.append(f"{row.name},{row.batch},{row.raw_elems},"
                         f"{row.im2col_elems},{row.im2win_elems},{row.reduction_pct:.6g}")
        Path(args.csv).write_text("\n".join(lines) + "\n")
        print(f"wrote {len(rows)} rows to {args.csv}")
    if args.plot_dir:
        from .plots import plot_footprint

        plot_dir = Path(args.plot_dir)
        plot_dir.mkdir(parents=True, exist_ok=True)
        target = plot_footprint(rows, plot_dir / "footprint.png")
        print(f"figure: {target}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="winconv",
        description="Window-order convolution kernels and benchmark harness",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("verify", help="check that all convolution routes agree")
    p.add_argument("--all-benchmarks", action="store_true",
                   help="verify every built-in benchmark geometry")
    for flag, text in (("cin", "input channels"), ("hin", "input height"),
                       ("win", "input width"), ("cout", "output channels"),
                       ("hf", "filter height"), ("wf", "filter width")):
        p.add_argument(f"--{flag}", type=int, help=text)
    p.add_argument("--stride", type=int, default=1)
    p.add_argument("--batch", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float, default=1e-4)
    p.set_defaults(fn=_cmd_verify)

    p = sub.add_parser("transform", help="write a lowered layout as a fixture")
    p.add_argument("--in", dest="infile", required=True, help="input fixture path")
    p.add_argument("--layout", choices=("im2col", "im2win"), required=True)
    p.add_argument("--out", dest="outfile", required=True, help="output fixture path")
    p.add_argument("--hf", type=int, required=True, help="filter height")
    p.add_argument("--wf", type=int, required=True, help="filter width")
    p.add_argument("--stride", type=int, default=1)
    p.set_defaults(fn=_cmd_transform)

    p = sub.add_parser("conv", help="convolve fixture tensors")
    p.add_argument("--input", required=True, help="input tensor fixture")
    p.add_argument("--filter", required=True, help="filter tensor fixture")
    p.add_argument("--algo", choices=sorted(_CONV_FNS), default="im2win-opt")
    p.add_argument("--stride", type=int, default=1)
    p.add_argument("--out", help="write the output tensor here")
    _add_plan_flags(p)
    p.set_defaults(fn=_cmd_conv)

    p = sub.add_parser("bench", help="time algorithms on built-in benchmarks")
    p.add_argument("--bench", default="all", help="benchmark name or 'all'")
    p.add_argument("--algo", default="all",
                   help=f"one of {', '.join(ALGORITHMS)} or 'all'")
    p.add_argument("--batch", type=int, default=2)
    p.add_argument("--repeats", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--csv", help="write the report here instead of stdout")
    p.add_argument("--plot-dir", help="also render figures into this directory")
    _add_plan_flags(p)
    p.set_defaults(fn=_cmd_bench)

    p = sub.add_parser("ablate", help="remove one optimization at a time")
    p.add_argument("--bench", default="all", help="benchmark name or 'all'")
    p.add_argument("--batch", type=int, default=2)
    p.add_argument("--repeats", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--csv", help="write the report here instead of stdout")
    p.add_argument("--plot-dir", help="also render figures into this directory")
    _add_plan_flags(p)
    p.set_defaults(fn=_cmd_ablate)

    p = sub.add_parser("footprint", help="per-layout element counts per benchmark")
    p.add_argument("--bench", default="all", help="benchmark name or 'all'")
    p.add_argument("--batch", type=int, default=2)
    p.add_argument("--csv", help="also write the table as CSV")
    p.add_argument("--plot-dir", help="also render figures into this directory")
    p.set_defaults(fn=_cmd_footprint)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except WinconvError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
