"""Command-line interface: solve, converge, bench, and memory-model.

Every subcommand writes delimited output (CSV by default, JSON with
--format json) plus rendered figures into the output directory; figures
can be disabled with --no-plots. Numeric flags accept scientific
notation. RBFFD_THREADS provides the default for --threads.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import perf, plots
from .errors import (
    DegenerateStencilError,
    InstabilityError,
    ParameterError,
    SteadyStateTimeout,
)
from .geometry import save_nodes_csv
from .neighborhoods import average_spacing
from .perf import (
    DEFAULT_CACHE_BYTES,
    DEFAULT_SUPPORT_SIZES,
    MemoryModel,
    benchmark_time_loop,
    save_benchmark_csv,
    save_memory_model_csv,
)
from .solver import (
    SolveConfig,
    prepare_problem,
    run_time_loop,
    save_report_json,
    save_solution_csv,
)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_PARAMETER = 2
EXIT_DEGENERATE = 3
EXIT_INSTABILITY = 4


def main(argv=None) -> int:
    try:
        parser = _build_parser()
        args = parser.parse_args(argv)
        return args.handler(args)
    except (ParameterError, argparse.ArgumentTypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARAMETER
    except DegenerateStencilError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except InstabilityError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INSTABILITY
    except SteadyStateTimeout as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


def cmd_solve(args) -> int:
    config = _solve_config(args, nodes=args.nodes, h=args.h)
    out = _ensure_outdir(args.out)
    nodes, stencils, shapes = prepare_problem(config)
    report = run_time_loop(config, nodes, shapes)

    _write_solution(nodes, report, out, args.format)
    save_report_json(report, os.path.join(out, "report.json"))
    save_nodes_csv(nodes, os.path.join(out, "nodes.csv"))
    if args.plots:
        plots.render_solution(nodes, report.field, os.path.join(out, "solution.png"))
    print(
        f"solved N={nodes.n_total} (m={config.degree}, n={config.support_size}): "
        f"{report.steps} steps in {report.wall_time_s:.3g}s, "
        f"linf={report.linf:.3e}, l2={report.l2:.3e}"
    )
    return EXIT_OK


def cmd_converge(args) -> int:
    targets = args.nodes
    if len(targets) < 3:
        raise ParameterError("convergence study needs at least 3 target sizes")
    if any(b <= a for a, b in zip(targets, targets[1:])):
        raise ParameterError(f"target sizes must be strictly increasing: {targets}")
    if targets[0] < 50:
        raise ParameterError(f"every target size must be >= 50: {targets}")
    out = _ensure_outdir(args.out)

    rows = []
    for target in targets:
        config = _solve_config(args, nodes=target, h=None, mode="steady")
        nodes, stencils, shapes = prepare_problem(config)
        report = run_time_loop(config, nodes, shapes)
        rows.append(
            {
                "N": nodes.n_total,
                "h": average_spacing(nodes),
                "linf": report.linf,
                "l2": report.l2,
            }
        )
        print(
            f"N={nodes.n_total}: h={rows[-1]['h']:.5g} "
            f"linf={report.linf:.3e} l2={report.l2:.3e} ({report.steps} steps)"
        )

    order = fit_convergence_order(
        [r["h"] for r in rows], [r["linf"] for r in rows]
    )
    if np.isnan(order):
        print("warning: flat or degenerate errors, convergence order is nan")
    print(f"estimated order: {order:.3g}")

    _write_table(
        out, "convergence", ["N", "h", "linf", "l2"],
        [[r["N"], f"{r['h']:.17g}", f"{r['linf']:.17g}", f"{r['l2']:.17g}"] for r in rows],
        args.format,
    )
    if args.plots:
        plots.render_convergence(
            [r["h"] for r in rows],
            [r["linf"] for r in rows],
            [r["l2"] for r in rows],
            order,
            os.path.join(out, "convergence.png"),
        )
    return EXIT_OK


def cmd_bench(args) -> int:
    if not args.nodes:
        raise ParameterError("need at least one target node count")
    if not args.n:
        raise ParameterError("need at least one support size")
    out = _ensure_outdir(args.out)

    reports = []
    for target in args.nodes:
        for support in args.n:
            config = SolveConfig(
                degree=args.m,
                support_size=support,
                nodes=target,
                dt=args.dt,
                steps=args.steps,
                mode="fixed",
                seed=args.seed,
                threads=args.threads[0],
            )
            runs = benchmark_time_loop(config, args.threads, repeats=args.repeats)
            reports.extend(runs)
            for r in runs:
                rate = "-" if r.ns_per_step_node is None else f"{r.ns_per_step_node:.1f}"
                print(
                    f"N={r.n_total} n={r.support_size} threads={r.threads}: "
                    f"{r.loop_seconds:.4g}s ({rate} ns/step/node)"
                )

    if args.format == "json":
        _write_json(out, "benchmark", [r.__dict__ for r in reports])
    else:
        save_benchmark_csv(reports, os.path.join(out, "benchmark.csv"))
    if args.plots:
        plots.render_benchmark(reports, os.path.join(out, "benchmark.png"))
    return EXIT_OK


def cmd_memory_model(args) -> int:
    sizes = list(DEFAULT_SUPPORT_SIZES)
    for extra in args.n or []:
        if extra not in sizes:
            sizes.append(extra)
    out = _ensure_outdir(args.out)
    models = [MemoryModel(support_size=n, cache_bytes=args.cache_bytes) for n in sizes]

    print(f"cache {args.cache_bytes} bytes")
    print("n    per_node_bytes    cache_peak_N")
    for model in models:
        print(
            f"{model.support_size:<5d}{model.per_node_bytes():<18d}"
            f"{model.cache_peak_nodes()}"
        )

    if args.format == "json":
        _write_json(
            out,
            "memory_model",
            [
                {
                    "n": m.support_size,
                    "per_node_bytes": m.per_node_bytes(),
                    "cache_peak_N": m.cache_peak_nodes(),
                }
                for m in models
            ],
        )
    else:
        save_memory_model_csv(models, os.path.join(out, "memory_model.csv"))
    if args.plots:
        plots.render_memory_model(models, os.path.join(out, "memory_model.png"))
    return EXIT_OK


def fit_convergence_order(spacings, errors) -> float:
    """Least-squares slope of log(error) vs log(h).

    Uses only the three finest spacings when more are given; returns nan
    when the errors are flat, nonpositive, or otherwise unusable.
    """
    pairs = sorted(zip(spacings, errors))
    if len(pairs) >= 4:
        pairs = pairs[:3]
    hs = np.asarray([p[0] for p in pairs], dtype=float)
    errs = np.asarray([p[1] for p in pairs], dtype=float)
    if len(hs) < 2 or (errs <= 0).any() or np.ptp(errs) == 0 or np.ptp(hs) == 0:
        return float("nan")
    slope = np.polyfit(np.log(hs), np.log(errs), 1)[0]
    return float(slope)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rbffd",
        description="Meshless RBF-FD Poisson solver on the unit disk",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    solve = sub.add_parser("solve", help="run one solve and write solution + report")
    _common_flags(solve)
    group = solve.add_mutually_exclusive_group(required=True)
    group.add_argument("--nodes", type=_int_value, help="target node count")
    group.add_argument("--h", type=float, help="target spacing")
    _stepping_flags(solve)
    solve.set_defaults(handler=cmd_solve)

    conv = sub.add_parser("converge", help="refinement study over target node counts")
    _common_flags(conv)
    conv.add_argument(
        "--nodes", type=_int_list, required=True,
        help="comma-separated increasing target node counts",
    )
    conv.add_argument("--tol", type=float, default=1e-9, help="steady-state residual tolerance")
    conv.add_argument("--dt", type=float, default=None, help="time step (default: auto)")
    conv.set_defaults(handler=cmd_converge)

    bench = sub.add_parser("bench", help="time the fixed-step loop over a size sweep")
    _common_flags(bench, threads_list=True)
    bench.add_argument(
        "--nodes", type=_int_list, required=True,
        help="comma-separated target node counts",
    )
    bench.add_argument("--steps", type=_int_value, default=200, help="steps per timed loop")
    bench.add_argument("--dt", type=float, default=None, help="time step (default: auto)")
    bench.add_argument("--repeats", type=_int_value, default=3, help="repeats per config (min kept)")
    bench.set_defaults(handler=cmd_bench)

    mem = sub.add_parser("memory-model", help="working-set model and cache-peak table")
    mem.add_argument("--n", type=_int_list, default=[], help="extra support sizes")
    mem.add_argument(
        "--cache-bytes", type=_int_value, default=DEFAULT_CACHE_BYTES,
        help="cache capacity in bytes",
    )
    mem.add_argument("--out", default="out", help="output directory")
    mem.add_argument("--format", choices=("csv", "json"), default="csv")
    mem.add_argument("--no-plots", dest="plots", action="store_false", help="skip figures")
    mem.set_defaults(handler=cmd_memory_model)

    return parser


def _common_flags(cmd, threads_list=False) -> None:
    cmd.add_argument("--m", type=_int_value, default=2, help="augmented monomial degree")
    if cmd.prog.endswith("bench"):
        cmd.add_argument("--n", type=_int_list, default=[15], help="support sizes")
    else:
        cmd.add_argument("--n", type=_int_value, default=15, help="support size")
    cmd.add_argument("--seed", type=_int_value, default=0, help="node-generation seed")
    default_threads = os.environ.get("RBFFD_THREADS", "1")
    if threads_list:
        cmd.add_argument(
            "--threads", type=_int_list, default=_int_list(default_threads),
            help="comma-separated thread counts",
        )
    else:
        cmd.add_argument(
            "--threads", type=_int_value, default=_int_value(default_threads),
            help="worker threads",
        )
    cmd.add_argument("--out", default="out", help="output directory")
    cmd.add_argument("--format", choices=("csv", "json"), default="csv")
    cmd.add_argument("--no-plots", dest="plots", action="store_false", help="skip figures")


def _stepping_flags(cmd) -> None:
    cmd.add_argument("--dt", type=float, default=None, help="time step (default: auto)")
    cmd.add_argument("--steps", type=_int_value, default=0, help="fixed step count")
    cmd.add_argument("--steady", action="store_true", help="march until steady state")
    cmd.add_argument("--tol", type=float, default=1e-9, help="steady-state residual tolerance")


def _solve_config(args, nodes=None, h=None, mode=None) -> SolveConfig:
    if mode is None:
        mode = "steady" if getattr(args, "steady", False) else "fixed"
    return SolveConfig(
        degree=args.m,
        support_size=args.n,
        nodes=nodes,
        h=h,
        dt=args.dt,
        steps=getattr(args, "steps", 0),
        mode=mode,
        tol=getattr(args, "tol", 1e-9),
        seed=args.seed,
        threads=args.threads,
    )


def _ensure_outdir(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    return path


def _write_solution(nodes, report, out, fmt) -> None:
    if fmt == "json":
        from .geometry import closed_form_solution

        exact = closed_form_solution(nodes.positions)
        records = [
            {
                "x": float(x),
                "y": float(y),
                "kind": "boundary" if b else "interior",
                "u": float(u),
                "exact": float(ex),
                "abs_error": float(abs(u - ex)),
            }
            for (x, y), b, u, ex in zip(
                nodes.positions, nodes.is_boundary, report.field, exact
            )
        ]
        _write_json(out, "solution", records)
    else:
        save_solution_csv(nodes, report.field, os.path.join(out, "solution.csv"))


def _write_table(out, name, header, rows, fmt) -> None:
    if fmt == "json":
        _write_json(out, name, [dict(zip(header, row)) for row in rows])
    else:
        import csv

        with open(os.path.join(out, f"{name}.csv"), "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            writer.writerows(rows)


def _write_json(out, name, payload) -> None:
    with open(os.path.join(out, f"{name}.json"), "w") as fh:
        json.dump(payload, fh, indent=2, allow_nan=False)
        fh.write("\n")


def _int_value(text: str) -> int:
    """Integer flag value, scientific notation accepted (e.g. 1e5)."""
    try:
        value = float(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from exc
    if value != int(value):
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}")
    return int(value)


def _int_list(text: str) -> list[int]:
    items = [part for part in text.split(",") if part.strip()]
    return [_int_value(part) for part in items]


if __name__ == "__main__":
    sys.exit(main())
