"""Command-line front end: partition, synthesize, sweep, oracle."""

from __future__ import annotations

import argparse
import json
import logging
import statistics
import sys
from datetime import datetime, timezone
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .baselines import brute_force_optimal
from .distribution import (
    DistributionError,
    EmpiricalDistribution,
    from_rows,
    read_csv,
    rescale_to_unit_ball,
    snap_to_grid,
    write_csv,
)
from .general import GeneralConfig
from .partition import (
    BudgetExceededError,
    PartitionError,
    covariance_loss,
    equalize_min_cell_size,
    synthetic_data,
)
from .pinning import NotBooleanError
from .runner import ALGORITHMS, run_algorithm

SCHEMA = 1
EXIT_OK, EXIT_INPUT, EXIT_BUDGET = 0, 1, 2


class InputError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _algo_list(text: str) -> list[str]:
    algos = [a.strip() for a in text.split(",") if a.strip()]
    bad = [a for a in algos if a not in ALGORITHMS]
    if bad:
        raise argparse.ArgumentTypeError(f"unknown algorithm(s): {', '.join(bad)}")
    return algos


def _add_input(p):
    p.add_argument("--input", required=True, help="CSV file, one point per row")
    p.add_argument("--weighted", action="store_true", help="last CSV column holds point weights")
    p.add_argument("--rescale", action="store_true", help="divide rows by the largest norm if > 1")
    p.add_argument(
        "--snap",
        default="none",
        help="grid-snap the support: 'none', 'auto' (gamma/8 of the general clusterer) or a spacing",
    )
    p.add_argument("--no-meta", action="store_true", help="omit timestamp/version metadata")


def _add_algo(p):
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--algo", choices=ALGORITHMS, default="general")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--c", type=float, default=None, help="constant c in (0, 1/120)")
    p.add_argument("--paper-mode", action="store_true", help="use the literal constants for p and gamma")
    p.add_argument("--audit", action="store_true", help="record per-cube idealized-rounding audits")
    p.add_argument("--max-retries", type=int, default=16, help="pinning retry budget")
    p.add_argument(
        "--reseed", type=int, default=1, help="general: run this many derived seeds and keep the best"
    )
    p.add_argument("--tensor-orders", type=_int_list, default=[], help="e.g. 2,3")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="covpart", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("partition", help="partition the data and report the covariance loss")
    _add_input(p)
    _add_algo(p)
    p.add_argument("--out", default="-", help="report JSON path ('-' for stdout)")

    p = sub.add_parser("synthesize", help="emit anonymized synthetic rows")
    _add_input(p)
    _add_algo(p)
    p.add_argument("--min-cell", default="auto", help="'auto' = floor(n/k), or an integer")
    p.add_argument("--out", required=True, help="synthetic CSV path")
    p.add_argument("--report", default=None, help="report JSON path")

    p = sub.add_parser("sweep", help="loss as a function of k over many seeds")
    _add_input(p)
    p.add_argument("--k-list", type=_int_list, default=[8, 64, 512])
    p.add_argument("--algos", type=_algo_list, default=["general", "epsnet"])
    p.add_argument("--seeds", type=int, default=32)
    p.add_argument("--seed", type=int, default=0, help="first seed of the corpus")
    p.add_argument("--paper-mode", action="store_true")
    p.add_argument("--out", default="-")

    p = sub.add_parser("oracle", help="exhaustive optimum for tiny inputs")
    _add_input(p)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--out", default="-")
    return parser


def load(args) -> tuple[EmpiricalDistribution, float, Optional[list]]:
    try:
        rows, weights, header = read_csv(args.input, args.weighted)
    except FileNotFoundError:
        raise InputError(f"input file not found: {args.input}")
    except OSError as exc:
        raise InputError(f"cannot read {args.input}: {exc}")
    if args.rescale:
        dist, scale = rescale_to_unit_ball(rows, weights)
    else:
        dist, scale = from_rows(rows, weights), 1.0
    if args.snap != "none":
        if args.snap == "auto":
            eps = GeneralConfig(max(getattr(args, "k", 3), 3)).gamma / 8
        else:
            try:
                eps = float(args.snap)
            except ValueError:
                raise InputError(f"--snap expects 'none', 'auto' or a number, got {args.snap!r}")
        dist = snap_to_grid(dist, eps)
    return dist, scale, header


def _meta() -> dict:
    return {"version": __version__, "created": datetime.now(timezone.utc).isoformat()}


def _write_json(obj: dict, path: str) -> None:
    text = json.dumps(obj, indent=2) + "\n"
    if path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


def _header(args, dist, scale) -> dict:
    out = {
        "schema": SCHEMA,
        "command": args.command,
        "input": args.input,
        "n_rows": dist.n_rows,
        "support_size": dist.size,
        "dim": dist.dim,
        "scale": scale,
    }
    if not args.no_meta:
        out["meta"] = _meta()
    return out


def _run(args, dist):
    kw = dict(
        c=args.c,
        paper_mode=args.paper_mode,
        audit=args.audit,
        max_retries=args.max_retries,
        tensor_orders=args.tensor_orders,
    )
    if args.algo != "general" or args.reseed <= 1:
        return run_algorithm(args.algo, dist, args.k, args.seed, **kw) + (args.seed,)
    best = None
    for i in range(args.reseed):
        # attempt 0 keeps the user's seed; later attempts derive theirs from (seed, i)
        seed = args.seed if i == 0 else int(np.random.SeedSequence([args.seed % 2**64, i]).generate_state(1)[0])
        res = run_algorithm(args.algo, dist, args.k, seed, **kw)
        if best is None or res[1].loss_frobenius < best[1].loss_frobenius:
            best = res + (seed,)
    return best


def cmd_partition(args) -> int:
    dist, scale, _ = load(args)
    part, report, diag, seed_used = _run(args, dist)
    out = _header(args, dist, scale)
    out.update(
        algo=args.algo,
        k=args.k,
        seed=args.seed,
        seed_used=seed_used,
        report=report.to_json(),
        partition=part.to_json(),
    )
    if diag:
        out["diagnostics"] = diag
    _write_json(out, args.out)
    return EXIT_OK


def cmd_synthesize(args) -> int:
    dist, scale, header = load(args)
    if not dist.is_uniform:
        raise InputError("synthetic data needs unweighted rows (uniform record weights)")
    n = dist.n_rows
    if args.min_cell == "auto":
        min_count = n // args.k
    else:
        try:
            min_count = int(args.min_cell)
        except ValueError:
            raise InputError(f"--min-cell expects 'auto' or an integer, got {args.min_cell!r}")
    part, report, diag, seed_used = _run(args, dist)
    equalized = equalize_min_cell_size(dist, part, min_count)
    synth = synthetic_data(dist, equalized)
    final = covariance_loss(dist, equalized, args.tensor_orders)
    write_csv(args.out, synth.rows * scale, header)
    if args.report:
        out = _header(args, dist, scale)
        out.update(
            algo=args.algo,
            k=args.k,
            seed=args.seed,
            seed_used=seed_used,
            min_cell=min_count,
            anonymity_level=synth.anonymity_level,
            cell_sizes=synth.cell_sizes.tolist(),
            rows_written=len(synth.rows),
            loss_before_equalization=report.loss_frobenius,
            report=final.to_json(),
            partition=equalized.to_json(),
        )
        if diag:
            out["diagnostics"] = diag
        _write_json(out, args.report)
    return EXIT_OK


def cmd_sweep(args) -> int:
    dist, scale, _ = load(args)
    runs = []
    summary: dict = {}
    for algo in args.algos:
        summary[algo] = {}
        for k in args.k_list:
            losses = []
            for s in range(args.seed, args.seed + args.seeds):
                _, report, _ = run_algorithm(algo, dist, k, s, paper_mode=args.paper_mode)
                runs.append(
                    {"algo": algo, "k": k, "seed": s, "loss": report.loss_frobenius, "cells": report.cell_count}
                )
                losses.append(report.loss_frobenius)
            summary[algo][str(k)] = {
                "median": statistics.median(losses),
                "mean": statistics.fmean(losses),
                "min": min(losses),
                "max": max(losses),
            }
    out = _header(args, dist, scale)
    out.update(k_list=args.k_list, algos=args.algos, seeds=args.seeds, summary=summary, runs=runs)
    _write_json(out, args.out)
    return EXIT_OK


def cmd_oracle(args) -> int:
    dist, scale, _ = load(args)
    part, loss = brute_force_optimal(dist, args.k)
    out = _header(args, dist, scale)
    out.update(k=args.k, loss=loss, partition=part.to_json(), report=covariance_loss(dist, part).to_json())
    _write_json(out, args.out)
    return EXIT_OK


COMMANDS = {
    "partition": cmd_partition,
    "synthesize": cmd_synthesize,
    "sweep": cmd_sweep,
    "oracle": cmd_oracle,
}


def run(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except BudgetExceededError as exc:
        print(f"covpart: internal budget violation: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except (InputError, DistributionError, PartitionError, NotBooleanError, ValueError, OSError) as exc:
        print(f"covpart: {exc}", file=sys.stderr)
        return EXIT_INPUT


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
