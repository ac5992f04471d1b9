"""Command-line entry point binding the solver, simulator and generators.

Subcommands: ``strategy gen``, ``svd run``, ``svd dist``, ``testgen``,
``rotation survey``, ``bench``.  Reports are JSON with a stable field
order (identical inputs reproduce identical bytes, the wall-time field
aside); table-like sweeps are CSV.  Exit codes: 0 success, 2 usage,
3 numeric failure, 4 I/O failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time

import numpy as np

from . import matio
from .blockkernel import JDefinitenessError, RankDeficiencyError, Signature
from .distsim import run_distributed
from .driver import SolverConfig, UnsafeScalingError, block_jacobi
from .rotation import HYPERBOLIC, TRIG, departure_survey
from .strategy import (
    StrategyError,
    dump_strategy,
    expand_pstrategy,
    make_strategy,
    reverse_pstrategy,
)
from .testgen import SpectrumSpec, gen_factor, gen_spectrum, relative_error

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERIC = 3
EXIT_IO = 4

STRATEGY_KINDS = ("row", "col", "rrow", "rcol", "bl", "mm")
VARIANT_NAMES = {"fb": "full-block", "bo": "block-oriented"}


def _default_width() -> int:
    return int(os.environ.get("JHSVD_WIDTH", "32"))


def _default_strategy() -> str:
    return os.environ.get("JHSVD_STRATEGY", "rrow")


def _build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(
        prog="jhsvd",
        description="Blocked one-sided Jacobi (H)SVD toolkit",
    )
    sub = top.add_subparsers(dest="command", required=True)

    p_strat = sub.add_parser("strategy", help="pivot strategy utilities")
    strat_sub = p_strat.add_subparsers(dest="strategy_command", required=True)
    p_gen = strat_sub.add_parser("gen", help="generate a strategy table")
    p_gen.add_argument("--kind", choices=STRATEGY_KINDS, required=True)
    p_gen.add_argument("--n", type=int, required=True, help="matrix order (even)")
    p_gen.add_argument(
        "--expand", type=int, default=0, metavar="K",
        help="double the order K more times after generation",
    )
    p_gen.add_argument("--search-cap", type=int, default=16)
    p_gen.add_argument("--out", help="output file (default: stdout)")

    p_svd = sub.add_parser("svd", help="run the solver")
    svd_sub = p_svd.add_subparsers(dest="svd_command", required=True)

    def add_solver_flags(p):
        p.add_argument("--input", required=True, help="matrix file (JHSV binary)")
        p.add_argument("--nplus", type=int, default=None,
                       help="override the signature's +1 count")
        p.add_argument("--variant", choices=("fb", "bo"), default="fb")
        p.add_argument("--strategy", default=_default_strategy(),
                       choices=STRATEGY_KINDS)
        p.add_argument("--width", type=int, default=_default_width(),
                       help="order of the shortened block factor")
        p.add_argument("--accumulate-v", action="store_true")
        p.add_argument("--solve-v", action="store_true")
        p.add_argument("--shortening", choices=("cholesky", "qr"),
                       default="cholesky")
        p.add_argument("--max-sweeps", type=int, default=30)
        p.add_argument("--lambda", dest="lambda_file",
                       help="eigenvalue CSV for the reconstruction error")
        p.add_argument("--out", help="JSON report file (default: stdout)")

    p_run = svd_sub.add_parser("run", help="single-node solve")
    add_solver_flags(p_run)
    p_run.add_argument("--threads", type=int, default=1,
                       help="worker cap; does not affect the results")

    p_dist = svd_sub.add_parser("dist", help="multi-worker simulation")
    add_solver_flags(p_dist)
    p_dist.add_argument("--workers", type=int, required=True)
    p_dist.add_argument("--trace", help="CSV file for the exchange trace")
    p_dist.add_argument("--hybrid-early-stop", action="store_true")

    p_tg = sub.add_parser("testgen", help="generate a test factor")
    p_tg.add_argument("--type", type=int, choices=(1, 2, 3, 4), required=True)
    p_tg.add_argument("--n", type=int, required=True)
    p_tg.add_argument("--seed", type=int, required=True)
    p_tg.add_argument("--out", required=True, help="matrix output file")
    p_tg.add_argument("--lambda", dest="lambda_file",
                      help="eigenvalue CSV output file")

    p_rot = sub.add_parser("rotation", help="rotation diagnostics")
    rot_sub = p_rot.add_subparsers(dest="rotation_command", required=True)
    p_survey = rot_sub.add_parser("survey", help="orthogonality-departure survey")
    p_survey.add_argument("--kind", choices=("trig", "hyp"), required=True)
    p_survey.add_argument("--samples", type=int, default=1 << 16)
    p_survey.add_argument("--seed", type=int, default=0)
    p_survey.add_argument("--emin", type=int, default=-53)
    p_survey.add_argument("--emax", type=int, default=53)
    p_survey.add_argument("--out", help="CSV output (default: stdout)")

    p_bench = sub.add_parser("bench", help="sweep orders/variants, emit CSV")
    p_bench.add_argument("--orders", default="128,256",
                         help="comma-separated matrix orders")
    p_bench.add_argument("--types", default="1,2,3,4")
    p_bench.add_argument("--variants", default="fb,bo")
    p_bench.add_argument("--seed", type=int, default=42)
    p_bench.add_argument("--width", type=int, default=_default_width())
    p_bench.add_argument("--strategy", default=_default_strategy(),
                         choices=STRATEGY_KINDS)
    p_bench.add_argument("--threads", type=int, default=1)
    p_bench.add_argument("--out", help="CSV output (default: stdout)")
    return top


def _emit(text: str, out_path) -> None:
    if out_path:
        with open(out_path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _cmd_strategy_gen(args) -> int:
    kind = args.kind
    if args.expand and kind in ("bl", "mm"):
        print("--expand applies to closest strategies only", file=sys.stderr)
        return EXIT_USAGE
    if kind in ("bl", "mm"):
        strat = make_strategy(kind, args.n, search_cap=args.search_cap)
    else:
        base_kind = kind[1:] if kind.startswith("r") and kind != "row" else kind
        strat = make_strategy(base_kind, args.n, search_cap=args.search_cap)
        for _ in range(args.expand):
            strat = expand_pstrategy(strat, base_kind)
        if kind in ("rrow", "rcol"):
            strat = reverse_pstrategy(strat)
    _emit(dump_strategy(strat), args.out)
    return EXIT_OK


def _solver_config(args) -> SolverConfig:
    return SolverConfig(
        block_width=args.width,
        variant=VARIANT_NAMES[args.variant],
        max_block_sweeps=args.max_sweeps,
        outer_strategy=args.strategy,
        inner_strategy=args.strategy,
        accumulate_v=args.accumulate_v,
        solve_v=args.solve_v,
        shortening=args.shortening,
    )


def _load_problem(args):
    g, signature = matio.read_matrix(args.input)
    if args.nplus is not None:
        signature = Signature(g.shape[1], args.nplus)
    if signature is None:
        signature = Signature(g.shape[1], g.shape[1])
    lam = matio.read_lambda_csv(args.lambda_file) if args.lambda_file else None
    return g, signature, lam


def _report(args, cfg, signature, result, lam, wall_time, extra=None) -> str:
    sigma = result.sigma
    digest = hashlib.sha256(sigma.tobytes()).hexdigest()
    report = {
        "config": {
            "input": args.input,
            "variant": cfg.variant,
            "block_width": cfg.block_width,
            "outer_strategy": cfg.outer_strategy,
            "inner_strategy": cfg.inner_strategy,
            "accumulate_v": cfg.accumulate_v,
            "solve_v": cfg.solve_v,
            "shortening": cfg.shortening,
            "max_block_sweeps": cfg.max_block_sweeps,
            "n": int(sigma.size),
            "n_plus": signature.n_plus,
        },
        "sweep_stats": [list(s) for s in result.stats],
        "block_sweeps": result.block_sweeps,
        "converged": result.converged,
        "sigma": [float(s) for s in sigma],
        "sigma_digest": {
            "min": float(sigma.min()),
            "max": float(sigma.max()),
            "sha256": digest,
        },
        "relative_error": (
            relative_error(sigma, signature, lam) if lam is not None else None
        ),
        "wall_time_s": wall_time,
    }
    if extra:
        report.update(extra)
    return json.dumps(report, indent=2) + "\n"


def _cmd_svd_run(args) -> int:
    g, signature, lam = _load_problem(args)
    cfg = _solver_config(args)
    t0 = time.perf_counter()
    result = block_jacobi(g, signature, cfg, workers=args.threads)
    wall = time.perf_counter() - t0
    _emit(_report(args, cfg, signature, result, lam, wall), args.out)
    return EXIT_OK


def _cmd_svd_dist(args) -> int:
    g, signature, lam = _load_problem(args)
    cfg = _solver_config(args)
    t0 = time.perf_counter()
    result, trace = run_distributed(
        g, signature, args.workers, cfg,
        hybrid_early_stop=args.hybrid_early_stop,
        collect_trace=bool(args.trace),
    )
    wall = time.perf_counter() - t0
    if args.trace:
        lines = ["sweep,step,worker,column,dest,link"]
        lines += [
            f"{r.sweep},{r.step},{r.worker},{r.column},{r.dest},{r.link}"
            for r in trace
        ]
        with open(args.trace, "w") as fh:
            fh.write("\n".join(lines) + "\n")
    extra = {"workers": args.workers}
    _emit(_report(args, cfg, signature, result, lam, wall, extra), args.out)
    return EXIT_OK


def _cmd_testgen(args) -> int:
    lam = gen_spectrum(SpectrumSpec(args.type, args.n, args.seed))
    g, signature = gen_factor(lam, seed=args.seed + 1)
    matio.write_matrix(args.out, g, signature)
    if args.lambda_file:
        matio.write_lambda_csv(args.lambda_file, lam)
    return EXIT_OK


def _cmd_rotation_survey(args) -> int:
    kind = TRIG if args.kind == "trig" else HYPERBOLIC
    res = departure_survey(
        kind, (args.emin, args.emax), args.samples, seed=args.seed
    )
    lines = ["exponent,samples,mean_departure_cs1,mean_departure_cs2"]
    for row in res.rows:
        lines.append(
            f"{row.exponent},{row.samples},{row.mean_cs1:.9e},{row.mean_cs2:.9e}"
        )
    lines.append(f"all,{sum(r.samples for r in res.rows)},"
                 f"{res.mean_cs1:.9e},{res.mean_cs2:.9e}")
    _emit("\n".join(lines) + "\n", args.out)
    return EXIT_OK


def _cmd_bench(args) -> int:
    orders = [int(tok) for tok in args.orders.split(",") if tok]
    types = [int(tok) for tok in args.types.split(",") if tok]
    variants = [tok for tok in args.variants.split(",") if tok]
    lines = [
        "type,n,variant,block_sweeps,converged,rotations,"
        "proper_rotations,relative_error,wall_time_s"
    ]
    for typ in types:
        for n in orders:
            lam = gen_spectrum(SpectrumSpec(typ, n, args.seed))
            g, signature = gen_factor(lam, seed=args.seed + 1)
            for var in variants:
                cfg = SolverConfig(
                    block_width=args.width,
                    variant=VARIANT_NAMES[var],
                    outer_strategy=args.strategy,
                    inner_strategy=args.strategy,
                    accumulate_v=False,
                )
                t0 = time.perf_counter()
                result = block_jacobi(g, signature, cfg, workers=args.threads)
                wall = time.perf_counter() - t0
                rots = sum(a for a, _ in result.stats)
                props = sum(b for _, b in result.stats)
                err = relative_error(result.sigma, signature, lam)
                lines.append(
                    f"{typ},{n},{var},{result.block_sweeps},"
                    f"{int(result.converged)},{rots},{props},{err:.6e},{wall:.3f}"
                )
    _emit("\n".join(lines) + "\n", args.out)
    return EXIT_OK


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "strategy":
            return _cmd_strategy_gen(args)
        if args.command == "svd" and args.svd_command == "run":
            return _cmd_svd_run(args)
        if args.command == "svd" and args.svd_command == "dist":
            return _cmd_svd_dist(args)
        if args.command == "testgen":
            return _cmd_testgen(args)
        if args.command == "rotation":
            return _cmd_rotation_survey(args)
        if args.command == "bench":
            return _cmd_bench(args)
        parser.error(f"unknown command {args.command!r}")
    except (
        RankDeficiencyError,
        JDefinitenessError,
        UnsafeScalingError,
        StrategyError,
        ZeroDivisionError,
    ) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, matio.FormatError) as exc:
        print(f"i/o failure: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"invalid request: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
