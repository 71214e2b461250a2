"""Command-line front end.

Exit codes: 0 success, 1 usage or configuration error, 2 the simulation
stopped before ``t_end`` (or an order sweep contained such a run).

Examples
--------
    polyflow run --preset regular:4:0.5 --law pcf --scheme implicit \\
        --tau 1e-4 --t-end 0.12 --out out/square
    polyflow order --preset rectangle:0.6:0.4 --law pcf --scheme euler --t-end 0.02
    polyflow presets
    polyflow check --scenario scenarios/ex1_half_gon_5.txt
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from typing import List, Optional

from . import __version__
from .diagnostics import conservation_report, convergence_order
from .errors import NoConservationDeclared, PolyflowError, RunFailed
from .integrators import SCHEMES, StepControl, run
from .laws import FIELD_IDS, LAW_IDS, conservation_residual
from .polygon import check_admissible
from .scenarios import (
    PRESETS,
    ScenarioSpec,
    parse_preset,
    read_scenario,
    write_conservation_csv,
    write_snapshots,
    write_trajectory_csv,
)

log = logging.getLogger("polyflow")

EXIT_OK, EXIT_CONFIG, EXIT_STOPPED = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage; 2 is reserved for numerical stops here
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _positive(conv):
    def check(text):
        try:
            v = conv(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"not a number: {text!r}")
        if not v > 0:
            raise argparse.ArgumentTypeError(f"must be positive: {text!r}")
        return v

    return check


def _add_problem_flags(p: argparse.ArgumentParser) -> None:
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--scenario", metavar="PATH", help="scenario file")
    src.add_argument("--preset", metavar="ID:PARAMS", help="built-in polygon, e.g. regular:4:0.5")
    p.add_argument("--law", help="velocity law id: " + ", ".join(LAW_IDS))
    p.add_argument("--scheme", choices=SCHEMES)
    p.add_argument("--tau", type=_positive(float))
    p.add_argument("--t-end", dest="t_end", type=_positive(float))
    p.add_argument("--eps", type=_positive(float), help="fixed-point tolerance (default 1e-15)")
    p.add_argument("--min-edge", dest="min_edge", type=_positive(float))
    p.add_argument("--quad-order", dest="quad_order", type=_positive(int))
    p.add_argument("--retry-halving", action="store_true", help="halve tau on non-convergence")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="polyflow", description="Crystalline curvature flows of polygons.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="-v info, -vv per-step debug")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("run", help="integrate one scenario")
    _add_problem_flags(p)
    p.add_argument("--every", type=_positive(int), help="SVG frame cadence (default: steps/10)")
    p.add_argument("--out", default="out", help="output directory (default: out)")

    p = sub.add_parser("order", help="empirical convergence order over a tau-halving sweep")
    _add_problem_flags(p)
    p.add_argument("--taus", type=_positive(float), nargs="+", help="default: 1e-2 halved 4 times")
    p.add_argument("--ref", choices=("closed", "fine"), default="closed")
    p.add_argument("--out", default=None, help="directory for order.csv (default: cwd)")

    sub.add_parser("presets", help="list built-in polygons and velocity laws")

    p = sub.add_parser("check", help="admissibility and conservation residual of a scenario")
    _add_problem_flags(p)
    return parser


def load_spec(args, need_time: bool = True) -> ScenarioSpec:
    """Merge a scenario file (or preset) with command-line overrides."""
    over = dict(
        law=args.law,
        scheme=args.scheme,
        tau=args.tau,
        t_end=args.t_end,
        eps=args.eps,
        min_edge=args.min_edge,
        quad_order=args.quad_order,
    )
    if args.scenario:
        spec = read_scenario(args.scenario)
        return spec.with_overrides(**over)
    pid, params = parse_preset(args.preset)
    if pid not in PRESETS:
        raise UsageError(f"unknown preset {pid!r}; try 'polyflow presets'")
    missing = [f"--{k.replace('_', '-')}" for k in ("law", "tau", "t_end") if over[k] is None]
    if not need_time:
        missing = [m for m in missing if m == "--law"]
    if missing:
        raise UsageError(f"--preset needs {', '.join(missing)}")
    return ScenarioSpec(
        law=args.law,
        scheme=args.scheme or "implicit",
        tau=args.tau if args.tau is not None else 1e-4,
        t_end=args.t_end if args.t_end is not None else 1.0,
        preset=(pid,) + tuple(params),
        eps=args.eps,
        min_edge=args.min_edge,
        quad_order=args.quad_order,
    )


def _control(spec: ScenarioSpec, args) -> StepControl:
    return spec.control(retry_halving=bool(getattr(args, "retry_halving", False)))


def cmd_run(args) -> int:
    spec = load_spec(args)
    p0 = spec.polygon()
    law = spec.velocity_law()
    ctl = _control(spec, args)
    log.info("run %s scheme=%s N=%d tau=%g t_end=%g", law.name, spec.scheme, p0.fan.n, ctl.tau, ctl.t_end)
    traj = run(p0, law, spec.scheme, ctl)

    os.makedirs(args.out, exist_ok=True)
    write_trajectory_csv(traj, os.path.join(args.out, "trajectory.csv"), law)
    write_conservation_csv(traj, os.path.join(args.out, "conservation.csv"))
    every = args.every or spec.every or max(1, traj.n_steps // 10)
    write_snapshots(traj, os.path.join(args.out, "frames"), every)

    final = traj.final
    print(f"steps {traj.n_steps}  t {traj.t_final:.17g}  reason {traj.reason.value}")
    print(f"area {final.area():.17g}  perimeter {final.perimeter():.17g}")
    try:
        print(conservation_report(traj, law).summary())
    except NoConservationDeclared:
        pass
    if not traj.completed:
        print(f"stopped at t={traj.t_final:.6g}: {traj.reason.value}: {traj.message}", file=sys.stderr)
        return EXIT_STOPPED
    return EXIT_OK


def _default_taus() -> List[float]:
    return [1e-2 / 2 ** k for k in range(5)]


def cmd_order(args) -> int:
    spec = load_spec(args, need_time=False)
    if args.t_end is None and not args.scenario:
        raise UsageError("order needs --t-end")
    p0 = spec.polygon()
    law = spec.velocity_law()
    taus = args.taus or _default_taus()
    base = spec.control(tau=taus[0])
    est = convergence_order(p0, law, spec.scheme, taus, spec.t_end, ref=args.ref, ctl=base)

    print(f"reference: {est.reference}")
    print(f"{'tau':>12} {'error':>12} {'order':>8}")
    for tau, err, p in est.table():
        print(f"{tau:12.5g} {err:12.4e} {'' if p is None else f'{p:8.3f}':>8}")
    if est.exact:
        print("exact (rounding-level errors)")
    elif est.order is not None:
        print(f"order {est.order:.3f}")

    path = os.path.join(args.out or ".", "order.csv")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["tau", "error", "order"])
        for tau, err, p in est.table():
            w.writerow([repr(tau), repr(err), "" if p is None else repr(p)])

    for f in est.failures:
        print(f"run failed: {f}", file=sys.stderr)
    return EXIT_OK if est.ok else EXIT_STOPPED


def cmd_presets(args) -> int:
    print("presets:")
    for pid, info in PRESETS.items():
        print(f"  {pid}:{info.usage}")
    print("laws:")
    for lid in LAW_IDS:
        print(f"  {lid}")
    print("fields:")
    for fid in FIELD_IDS:
        print(f"  {fid}")
    return EXIT_OK


def cmd_check(args) -> int:
    spec = load_spec(args, need_time=False)
    p = spec.polygon()
    law = spec.velocity_law()
    rep = check_admissible(p, spec.min_edge, check_simple=True)
    print(f"N {p.fan.n}  area {p.area():.17g}  perimeter {p.perimeter():.17g}")
    print(f"admissible {rep.admissible}  simple {rep.simple}  min edge {rep.min_edge_length:.6g}")
    res = conservation_residual(law, p)
    cons = law.conservation(p.fan)
    if res.cas is not None:
        print(f"CAS mu={cons.mu_cas:.17g} residual {res.cas:.3e}")
    if res.cls is not None:
        print(f"CLS mu={cons.mu_cls:.17g} residual {res.cls:.3e}")
    if res.cas is None and res.cls is None:
        print("law declares no conservation class")
    return EXIT_OK if rep.admissible else EXIT_STOPPED


COMMANDS = {"run": cmd_run, "order": cmd_order, "presets": cmd_presets, "check": cmd_check}


def main(argv: Optional[List[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        # --help and --version exit 0, usage errors exit 1
        return exc.code
    level = {0: logging.WARNING, 1: logging.INFO}.get(args.verbose, logging.DEBUG)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except RunFailed as exc:
        print(f"polyflow: {exc}", file=sys.stderr)
        return EXIT_STOPPED
    except (UsageError, PolyflowError, ValueError, OSError) as exc:
        print(f"polyflow: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
