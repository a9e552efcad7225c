"""Command line front end: ``envforge solve | sweep-k | validate | compare``.

Exit codes: 0 success (or clean validation), 1 violations found,
2 usage or input error, 3 solver or power-flow failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time

from . import io as eio
from .baselines import SO_CAP, deterministic_doe, ellipsoid_rdoe, so_enumeration
from .exceptions import (EnvforgeError, InfeasibleRegionError, NetworkError, PowerFlowError,
                         SolverError, TooManyCustomersError)
from .network import load_network
from .rdoe import (DEFAULT_EPS_MD, DEFAULT_PWL_POINTS, RdoeConfig, default_anchors,
                   extract_envelopes, solve_rdoe)
from .region import feasible_region_from_network
from .superellipsoid import K_MAX, relative_gap, select_K
from .validation import monte_carlo_validate

log = logging.getLogger("envforge")

EXIT_OK, EXIT_VIOLATIONS, EXIT_USAGE, EXIT_SOLVER = 0, 1, 2, 3


class UsageError(Exception):
    pass


def _network(args):
    net = load_network(args.network)
    if args.vmin is not None:
        net.v_min = args.vmin
    if args.vmax is not None:
        net.v_max = args.vmax
    if args.vmin is not None or args.vmax is not None:
        net.validate()
    return net


def _region(args):
    if getattr(args, "region", None):
        return eio.load_region(args.region)
    if not args.network:
        raise UsageError("one of --network or --region is required")
    return feasible_region_from_network(_network(args))


def run_method(fr, method, K=None, theta=None, eps_md=DEFAULT_EPS_MD, pwl_points=DEFAULT_PWL_POINTS,
               so_cap=SO_CAP, backend=None):
    """Run one method on a region and return its allocation."""
    t0 = time.perf_counter()
    if method == "dmtd":
        alloc = deterministic_doe(fr)
    elif method == "so":
        alloc = so_enumeration(fr, eps_md=eps_md, cap=so_cap)
    elif method == "ellipsoid":
        alloc = ellipsoid_rdoe(fr, eps_md=eps_md, anchors=default_anchors(fr, pwl_points), backend=backend)
    elif method == "sesd":
        if K is None:
            K = 1 if fr.v < 2 else select_K(fr.v, 0.01 if theta is None else theta)
        cfg = RdoeConfig(K=K, eps_md=eps_md, anchors=default_anchors(fr, pwl_points), prune_zero=True)
        alloc = extract_envelopes(solve_rdoe(fr, cfg, backend=backend), fr.v, K, fr.customer_ids, method="sesd")
    else:
        raise UsageError(f"unknown method {method!r}")
    alloc.solve_time = time.perf_counter() - t0
    return alloc


def _label(alloc):
    if alloc.method == "sesd":
        return f"sesd(K={alloc.meta['K']})"
    return alloc.method


def _print_table(header, rows, out=None):
    out = out or sys.stdout
    widths = [max(len(str(h)), *(len(str(r[i])) for r in rows)) for i, h in enumerate(header)]
    fmt = "  ".join(f"{{:<{w}}}" for w in widths)
    print(fmt.format(*header), file=out)
    print(fmt.format(*("-" * w for w in widths)), file=out)
    for r in rows:
        print(fmt.format(*r), file=out)


def _outdir(args):
    os.makedirs(args.out, exist_ok=True)
    return args.out


def cmd_solve(args):
    if args.method == "sesd" and args.K is not None and args.theta is not None:
        raise UsageError("give either --K or --theta, not both")
    if args.method != "sesd" and args.K is not None:
        raise UsageError("--K only applies to --method sesd")
    fr = _region(args)
    alloc = run_method(fr, args.method, K=args.K, theta=args.theta, eps_md=args.eps_md,
                       pwl_points=args.pwl_points, so_cap=args.so_cap)
    path = os.path.join(_outdir(args), f"envelopes_{args.method}.json")
    eio.save_allocation(alloc, path)
    rows = [(cid, f"{lo:.3f}", f"{up:.3f}") for cid, lo, up in zip(alloc.customer_ids, alloc.lower, alloc.upper)]
    _print_table(("customer", "lower_kw", "upper_kw"), rows)
    print()
    _print_table(("method", "total DOE (kW)", "time (s)"),
                 [(_label(alloc), f"{alloc.total_doe:.3f}", f"{alloc.solve_time:.2f}")])
    print(f"\nwrote {path}")
    return EXIT_OK


def _parse_range(text):
    try:
        lo, _, hi = text.partition(":")
        lo, hi = int(lo), int(hi or lo)
    except ValueError:
        raise UsageError(f"bad K range {text!r}; expected A:B") from None
    if lo < 1 or hi > K_MAX or lo > hi:
        raise UsageError(f"K range {text!r} is empty or outside [1, {K_MAX}]")
    return list(range(lo, hi + 1))


def cmd_sweep_k(args):
    Ks = _parse_range(args.k_range)
    fr = _region(args)
    rows = []
    for K in Ks:
        alloc = run_method(fr, "sesd", K=K, eps_md=args.eps_md, pwl_points=args.pwl_points)
        rows.append((K, alloc.total_doe, relative_gap(fr.v, K), alloc.solve_time))
    path = os.path.join(_outdir(args), "sweep_k.csv")
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["K", "total_doe_kw", "gap", "time_s"])
        for r in rows:
            wr.writerow([r[0], repr(r[1]), repr(r[2]), repr(r[3])])
    _print_table(("K", "total DOE (kW)", "1 - S/S_max", "time (s)"),
                 [(K, f"{t:.3f}", f"{g:.6f}", f"{s:.2f}") for K, t, g, s in rows])
    print(f"\nwrote {path}")
    return EXIT_OK


def cmd_validate(args):
    if args.draws < 1:
        raise UsageError("--draws must be at least 1")
    net = _network(args)
    alloc = eio.load_allocation(args.allocation)
    rep = monte_carlo_validate(net, alloc, draws=args.draws, seed=args.seed, tolerance=args.tolerance)
    out = _outdir(args)
    jpath = os.path.join(out, f"validation_{alloc.method}.json")
    cpath = os.path.join(out, f"validation_{alloc.method}.csv")
    eio.save_violation_report(rep, jpath, cpath)
    print(json.dumps(eio._jsonable(rep.summary()), indent=2))
    print(f"\nwrote {jpath} and {cpath}")
    if rep.violations:
        print(f"{rep.violations} of {rep.draws} draws violate the voltage limits", file=sys.stderr)
        return EXIT_VIOLATIONS
    return EXIT_OK


def _parse_method(spec):
    name, _, k = spec.partition(":")
    if name not in ("dmtd", "so", "sesd", "ellipsoid"):
        raise UsageError(f"unknown method {name!r}")
    if k and name != "sesd":
        raise UsageError("only sesd takes a K suffix (sesd:7)")
    return name, int(k) if k else None


def cmd_compare(args):
    specs = [_parse_method(s) for s in args.methods.split(",") if s]
    if not specs:
        raise UsageError("--methods is empty")
    fr = _region(args)
    rows = []
    for name, K in specs:
        label = name if K is None else f"sesd(K={K})"
        try:
            alloc = run_method(fr, name, K=K, theta=args.theta, eps_md=args.eps_md,
                               pwl_points=args.pwl_points, so_cap=args.so_cap)
        except (EnvforgeError, ValueError) as exc:
            rows.append((label, "failed", "-", "-", str(exc)))
            continue
        label = _label(alloc)
        gap = f"{relative_gap(fr.v, alloc.meta['K']):.6f}" if name == "sesd" else "-"
        rows.append((label, f"{alloc.total_doe:.3f}", f"{alloc.solve_time:.2f}", gap, ""))
    _print_table(("method", "total DOE (kW)", "time (s)", "gap", "note"), rows)
    path = os.path.join(_outdir(args), "compare.csv")
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["method", "total_doe_kw", "time_s", "gap", "note"])
        wr.writerows(rows)
    print(f"\nwrote {path}")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="envforge", description="Robust dynamic operating envelopes.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, region=True):
        p.add_argument("--network", help="network JSON file")
        if region:
            p.add_argument("--region", help="feasible-region JSON file (instead of --network)")
        p.add_argument("--vmin", type=float, help="override lower voltage limit (p.u.)")
        p.add_argument("--vmax", type=float, help="override upper voltage limit (p.u.)")
        p.add_argument("--out", default="out", help="output directory")

    def solver_opts(p):
        p.add_argument("--eps-md", type=float, default=DEFAULT_EPS_MD, help="status penalty weight")
        p.add_argument("--pwl-points", type=int, default=DEFAULT_PWL_POINTS, help="log tangent anchors per customer")
        p.add_argument("--so-cap", type=int, default=SO_CAP, help="customer cap for vertex enumeration")

    p = sub.add_parser("solve", help="compute envelopes with one method")
    common(p)
    solver_opts(p)
    p.add_argument("--method", choices=("dmtd", "ellipsoid", "sesd", "so"), default="sesd")
    p.add_argument("--K", type=int, help="squareness K (sesd)")
    p.add_argument("--theta", type=float, help="target gap used to pick K (sesd, default 0.01)")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("sweep-k", help="total envelope and gap for a range of K")
    common(p)
    solver_opts(p)
    p.add_argument("--k-range", default="1:7", help="inclusive range A:B")
    p.set_defaults(func=cmd_sweep_k)

    p = sub.add_parser("validate", help="Monte-Carlo check of an envelope file with the exact power flow")
    common(p, region=False)
    p.add_argument("--allocation", required=True, help="envelope result JSON")
    p.add_argument("--draws", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tolerance", type=float, default=0.0, help="voltage overshoot ignored (p.u.)")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("compare", help="run several methods and tabulate totals and times")
    common(p)
    solver_opts(p)
    p.add_argument("--methods", default="dmtd,so,sesd,sesd:2,ellipsoid",
                   help="comma list; sesd:K fixes K, bare sesd picks K from --theta")
    p.add_argument("--theta", type=float, default=0.01)
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    if args.command == "validate" and not args.network:
        parser.error("validate needs --network")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"envforge: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (TooManyCustomersError, NetworkError, InfeasibleRegionError, FileNotFoundError, ValueError) as exc:
        print(f"envforge: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SolverError, PowerFlowError) as exc:
        print(f"envforge: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
