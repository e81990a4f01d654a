"""Command-line front end.

Subcommands::

    logitprice solve     --builtin intel --gap 1e-3 --out run/
    logitprice local     --instance inst.json --starts 10
    logitprice evaluate  --builtin intel --prices 608.2695 365.079 1209.09
    logitprice generate  parking --seed 0 --customers 10 --n-grid 3 -o inst.json
    logitprice surface   --instance two.json --resolution 51 -o grid.txt

Exit codes: 0 success (``solve``: gap certified), 2 solver limit reached,
1 bad input.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .bnb import SolveConfig, SolveStatus, solve
from .instances import continuous_ml_revenue, intel_instance, parking_context, parking_instance, random_instance
from .io import InstanceFormatError, dumps, load_instance
from .local_search import LocalSearchConfig, local_search
from .model import expected_revenue, market_shares

EXIT_OK, EXIT_INPUT, EXIT_LIMIT = 0, 1, 2

TRACE_HEADER = "iteration wall_time incumbent upper_bound open_nodes max_box_radius"

log = logging.getLogger("logitprice")


class InputError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # usage mistakes are bad input too; keep exit code 2 for solver limits
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def fmt(x: float) -> str:
    return "%.17g" % x


def _load(args):
    if args.builtin and args.instance:
        raise InputError("give either --instance or --builtin, not both")
    if args.builtin == "intel":
        return intel_instance()
    if args.instance:
        try:
            return load_instance(args.instance)
        except OSError as exc:
            raise InputError(f"cannot read {args.instance}: {exc.strerror}") from None
    raise InputError("no instance given (use --instance FILE or --builtin intel)")


def _write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def _prices(inst, values):
    p = np.asarray(values, dtype=float)
    if p.shape != (inst.n_priced,):
        raise InputError(f"expected {inst.n_priced} prices, got {p.size}")
    if not inst.is_feasible(p):
        raise InputError("prices lie outside the price box or violate A p >= b")
    return p


def cmd_solve(args) -> int:
    inst = _load(args)
    cfg = SolveConfig(
        gap_tol=args.gap, time_limit=args.time_limit, node_limit=args.node_limit,
        seed=args.seed, ls_starts=args.ls_starts, threads=args.threads,
    )
    report = solve(inst, cfg)
    timing = not args.no_timing
    result = {
        "status": report.status.value,
        "prices": dict(zip((inst.names[i] for i in inst.priced_index), report.incumbent.tolist())),
        "value": report.incumbent_value,
        "upper_bound": report.global_upper_bound,
        "gap": report.gap,
        "nodes": report.n_nodes,
        "nodes_per_depth": report.nodes_explored_per_iteration,
        "solutions": [{"value": v, "prices": p.tolist()} for v, p in report.solutions],
    }
    if timing:
        result["elapsed"] = report.elapsed
    lines = [TRACE_HEADER]
    for t in report.trace:
        lines.append(" ".join([
            str(t.iteration), fmt(t.wall_time if timing else 0.0), fmt(t.incumbent_value),
            fmt(t.global_upper_bound), str(t.open_nodes), fmt(t.max_box_radius),
        ]))
    out = Path(args.out)
    _write(out / "result.json", json.dumps(result, indent=1) + "\n")
    _write(out / "trace.txt", "\n".join(lines) + "\n")
    print(f"status {report.status.value}")
    print(f"value {fmt(report.incumbent_value)}")
    print(f"upper_bound {fmt(report.global_upper_bound)}")
    print(f"gap {fmt(report.gap)}")
    print("prices " + " ".join(fmt(x) for x in report.incumbent))
    return EXIT_OK if report.status == SolveStatus.OPTIMAL_WITHIN_TOL else EXIT_LIMIT


def cmd_local(args) -> int:
    inst = _load(args)
    best = None
    for k in range(args.starts):
        res = local_search(inst, LocalSearchConfig(seed=args.seed + k))
        log.info("start %d: %s", k, fmt(res.value))
        if best is None or res.value > best.value:
            best = res
    print(f"value {fmt(best.value)}")
    print("prices " + " ".join(fmt(x) for x in best.prices))
    return EXIT_OK


def cmd_evaluate(args) -> int:
    inst = _load(args)
    p = _prices(inst, args.prices)
    print(f"revenue {fmt(expected_revenue(inst, p))}")
    print(f"{'alternative':<16}{'price':>14}{'share %':>14}")
    full = dict(zip((inst.names[i] for i in inst.priced_index), p))
    for name, s in zip(inst.names, market_shares(inst, p)):
        price = f"{full[name]:.6g}" if name in full else "-"
        print(f"{name:<16}{price:>14}{s:>14.4f}")
    if args.continuous:
        try:
            params, profiles = parking_context(inst)
        except ValueError as exc:
            raise InputError(str(exc)) from None
        mean, se = continuous_ml_revenue(params, profiles, p, samples=args.continuous,
                                         seed=args.seed, return_std_error=True)
        print(f"continuous_revenue {fmt(mean)} +- {fmt(se)}")
    return EXIT_OK


def cmd_generate(args) -> int:
    if args.kind == "intel":
        inst = intel_instance()
    elif args.kind == "random":
        inst = random_instance(args.seed, I=args.products, K=args.classes, N=args.customers,
                               price_ub=args.price_ub)
    else:
        try:
            inst = parking_instance(args.seed, N=args.customers, n_grid=args.n_grid)
        except ValueError as exc:
            raise InputError(str(exc)) from None
    text = dumps(inst)
    if args.output in (None, "-"):
        sys.stdout.write(text)
    else:
        _write(Path(args.output), text)
    return EXIT_OK


def cmd_surface(args) -> int:
    inst = _load(args)
    if inst.n_priced != 2:
        raise InputError(f"surface needs exactly 2 priced alternatives, instance has {inst.n_priced}")
    if args.resolution < 2:
        raise InputError("resolution must be at least 2")
    g1 = np.linspace(inst.price_lb[0], inst.price_ub[0], args.resolution)
    g2 = np.linspace(inst.price_lb[1], inst.price_ub[1], args.resolution)
    lines = ["p1 p2 revenue"]
    for a in g1:
        for b in g2:
            lines.append(f"{fmt(a)} {fmt(b)} {fmt(expected_revenue(inst, np.array([a, b])))}")
    text = "\n".join(lines) + "\n"
    if args.output in (None, "-"):
        sys.stdout.write(text)
    else:
        _write(Path(args.output), text)
    return EXIT_OK


def _positive(kind):
    def parse(s):
        v = kind(s)
        if not v > 0:
            raise argparse.ArgumentTypeError(f"must be positive, got {s}")
        return v
    return parse


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="logitprice",
        description="Global revenue maximization under discrete mixed logit demand.",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    sub = parser.add_subparsers(dest="command", required=True)

    def source(p):
        p.add_argument("--instance", help="instance file (JSON)")
        p.add_argument("--builtin", choices=["intel"], help="built-in instance")
        p.add_argument("--seed", type=int, default=0, help="random seed")

    p = sub.add_parser("solve", help="certify a global optimum by branch-and-bound",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    source(p)
    p.add_argument("--gap", type=_positive(float), default=1e-5, help="relative gap tolerance")
    p.add_argument("--time-limit", type=_positive(float), default=None, help="seconds")
    p.add_argument("--node-limit", type=_positive(int), default=None)
    p.add_argument("--threads", type=_positive(int), default=1)
    p.add_argument("--ls-starts", type=int, default=1, help="local searches per node")
    p.add_argument("--out", default="logitprice-out", help="directory for result.json and trace.txt")
    p.add_argument("--no-timing", action="store_true",
                   help="omit wall-clock times so repeated runs give identical files")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("local", help="trust-region local search from random starts",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    source(p)
    p.add_argument("--starts", type=_positive(int), default=10)
    p.set_defaults(func=cmd_local)

    p = sub.add_parser("evaluate", help="revenue and market shares at given prices",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    source(p)
    p.add_argument("--prices", type=float, nargs="+", required=True, help="one price per priced alternative")
    p.add_argument("--continuous", type=int, default=0, metavar="SAMPLES",
                   help="also estimate continuous mixed logit revenue (parking instances)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("generate", help="write a built-in or generated instance",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    p.add_argument("kind", choices=["intel", "random", "parking"])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--customers", type=_positive(int), default=None,
                   help="customers (default 1 for random, 10 for parking)")
    p.add_argument("--n-grid", type=_positive(int), default=1, help="parking taste grid size per axis")
    p.add_argument("--products", type=_positive(int), default=3, help="priced products (random)")
    p.add_argument("--classes", type=_positive(int), default=7, help="taste classes (random)")
    p.add_argument("--price-ub", type=_positive(float), default=100.0, help="price cap (random)")
    p.add_argument("-o", "--output", default="-", help="output file, '-' for stdout")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("surface", help="revenue on a grid over a two-price box",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    source(p)
    p.add_argument("--resolution", type=int, default=51, help="grid points per axis")
    p.add_argument("-o", "--output", default="-", help="output file, '-' for stdout")
    p.set_defaults(func=cmd_surface)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "customers", 0) is None:
        args.customers = 10 if args.kind == "parking" else 1
    try:
        return args.func(args)
    except (InputError, InstanceFormatError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
