"""Command-line entry point: ``hetcdc solve|sweep|simulate|verify``."""

from __future__ import annotations

import argparse
import random
import sys
from pathlib import Path

from .experiments import (
    SCHEMES,
    ScenarioError,
    VerificationError,
    load_scenario,
    run_scenario,
    write_report,
)
from .joint import relaxation_lower_bound, solve_joint, two_file_group_search
from .placement import Placement, PlacementError, round_robin_placement, two_file_group_placement
from .shuffle_opt import VARIANTS, exact_placement_expected_load, shuffle_plan
from .sim import DecodingError, ScheduleError, simulate
from .system import ConfigError, SystemConfig


def _common(p: argparse.ArgumentParser, config_required: bool = True):
    p.add_argument("--config", required=config_required, help="scenario file")
    p.add_argument("--theta", type=float, help="override the scenario's Zipf parameter")
    p.add_argument("--variant", choices=VARIANTS, default="cdc")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="output directory")


def _point(args) -> SystemConfig:
    scenario = load_scenario(args.config, args.theta)
    if not scenario.points:
        raise ScenarioError("scenario has no sweep points")
    if getattr(args, "files", None) is not None:
        for value, cfg in scenario.points:
            if cfg.num_files == args.files:
                return cfg
        raise ScenarioError(f"scenario has no point with N={args.files}")
    return scenario.points[0][1]


def _placement_for(args, cfg: SystemConfig) -> Placement:
    if getattr(args, "placement", None):
        return Placement.loads(Path(args.placement).read_text(), cfg.num_workers).validate(cfg)
    if args.scheme == "round-robin":
        return round_robin_placement(cfg)
    if args.scheme == "two-file-group":
        if args.n1 is not None:
            return two_file_group_placement(cfg, args.n1)
        return two_file_group_search(cfg, args.variant).placement
    if args.scheme == "joint-bnb":
        return solve_joint(cfg, args.variant, args.max_nodes, args.max_seconds).placement
    raise ScenarioError(f"scheme {args.scheme} has no placement")


def _emit(args, name: str, text: str):
    sys.stdout.write(text)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / name).write_text(text)


def cmd_solve(args) -> int:
    cfg = _point(args)
    if args.scheme == "joint-bnb":
        text = solve_joint(cfg, args.variant, args.max_nodes, args.max_seconds).dumps()
    elif args.scheme == "lower-bound":
        text = f"variant: {args.variant}\nlower_bound: {relaxation_lower_bound(cfg, args.variant):.12g}\n"
    elif args.scheme == "two-file-group" and args.n1 is None:
        res = two_file_group_search(cfg, args.variant)
        splits = "".join(f"  {n1}: {float(v):.12g}\n" for n1, v in res.loads_by_split.items())
        text = (f"variant: {args.variant}\nsplit: {res.split}\nexpected_load: {res.expected_load}\n"
                f"expected_load_decimal: {float(res.expected_load):.12g}\nloads_by_split:\n{splits}"
                f"placement:\n{res.placement.dumps()}")
    else:
        placement = _placement_for(args, cfg)
        load = exact_placement_expected_load(placement, cfg, args.variant)
        text = (f"variant: {args.variant}\nexpected_load: {load}\n"
                f"expected_load_decimal: {float(load):.12g}\nplacement:\n{placement.dumps()}")
    _emit(args, "solve.txt", text)
    return 0


def cmd_sweep(args) -> int:
    scenario = load_scenario(args.config, args.theta)
    if args.seed is not None:
        scenario.seed = args.seed
    if args.max_nodes is not None:
        scenario.max_nodes = args.max_nodes
    if args.max_seconds is not None:
        scenario.max_seconds = args.max_seconds
    if args.scheme:
        scenario.schemes = tuple(args.scheme)
    if args.allow_large_bnb:
        scenario.allow_large_bnb = True
    report = run_scenario(scenario, jobs=args.jobs)
    sys.stdout.write(report.to_csv())
    if args.out:
        write_report(report, args.out)
    return 0


def _parse_demand(text: str, num_files: int) -> int:
    if text == "all":
        return (1 << num_files) - 1
    mask = 0
    for part in text.replace(",", " ").split():
        n = int(part)
        if not 1 <= n <= num_files:
            raise ScenarioError(f"file {n} outside 1..{num_files}")
        mask |= 1 << (n - 1)
    if not mask:
        raise ScenarioError("demand must name at least one file")
    return mask


def cmd_simulate(args) -> int:
    cfg = _point(args)
    placement = _placement_for(args, cfg)
    demand = _parse_demand(args.demand, cfg.num_files)
    plan = shuffle_plan(placement, cfg, demand, args.variant)
    tr = simulate(placement, cfg, demand, args.variant, seed=args.seed)
    text = f"placement:\n{placement.dumps()}{plan.dumps()}{tr.summary()}"
    if args.hexdump:
        text += tr.hexdump()
    _emit(args, "transcript.txt", text)
    return 0


def cmd_verify(args) -> int:
    """Randomised end-to-end checks plus the cross-scheme ordering on one config."""
    cfg = _point(args)
    rng = random.Random(args.seed)
    K, N = cfg.num_workers, cfg.num_files
    lines = []
    ok = 0
    for trial in range(args.trials):
        while True:
            assignment = tuple(rng.randrange(1, 1 << K) for _ in range(N))
            placement = Placement(assignment, K)
            if placement.is_feasible(cfg):
                break
        demand = rng.randrange(1, 1 << N)
        for variant in VARIANTS:
            simulate(placement, cfg, demand, variant, seed=args.seed + trial)
            ok += 1
    lines.append(f"simulations: {ok} passed")
    for variant in VARIANTS:
        lb = relaxation_lower_bound(cfg, variant)
        rr = exact_placement_expected_load(round_robin_placement(cfg), cfg, variant)
        tfg = two_file_group_search(cfg, variant).expected_load
        chain = [("lower-bound", lb)]
        if N <= 8 and K <= 5:
            chain.append(("joint-bnb", solve_joint(cfg, variant, args.max_nodes, args.max_seconds).expected_load))
        chain += [("two-file-group", tfg), ("round-robin", rr)]
        good = all(float(a[1]) <= float(b[1]) + 1e-9 if isinstance(a[1], float) else a[1] <= b[1]
                   for a, b in zip(chain, chain[1:]))
        lines.append(f"{variant}: " + " <= ".join(f"{n} {float(v):.9g}" for n, v in chain)
                     + (" ok" if good else " VIOLATED"))
        if not good:
            _emit(args, "verify.txt", "\n".join(lines) + "\n")
            return 1
    _emit(args, "verify.txt", "\n".join(lines) + "\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hetcdc", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve one configuration with one scheme")
    _common(p)
    p.add_argument("--scheme", choices=SCHEMES, default="two-file-group")
    p.add_argument("--n1", type=int, help="fixed two-file-group split")
    p.add_argument("--files", type=int, help="pick the sweep point with this N")
    p.add_argument("--max-nodes", type=int)
    p.add_argument("--max-seconds", type=float)
    p.add_argument("--placement", help="placement file ('n: mask' lines)")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("sweep", help="run a scenario file")
    _common(p)
    p.add_argument("--scheme", action="append", choices=SCHEMES, help="restrict schemes (repeatable)")
    p.add_argument("--max-nodes", type=int)
    p.add_argument("--max-seconds", type=float)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--allow-large-bnb", action="store_true", help="lift the N<=8, K<=5 guardrail")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("simulate", help="shuffle one demand bit-exactly")
    _common(p)
    p.add_argument("--scheme", choices=SCHEMES[:3], default="two-file-group")
    p.add_argument("--n1", type=int)
    p.add_argument("--files", type=int)
    p.add_argument("--max-nodes", type=int)
    p.add_argument("--max-seconds", type=float)
    p.add_argument("--placement")
    p.add_argument("--demand", default="all", help="1-based file list, e.g. '1,3', or 'all'")
    p.add_argument("--hexdump", action="store_true")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("verify", help="randomised end-to-end property run")
    _common(p)
    p.add_argument("--files", type=int)
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--max-nodes", type=int)
    p.add_argument("--max-seconds", type=float)
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ScenarioError, ConfigError, PlacementError, ScheduleError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (DecodingError, VerificationError) as exc:
        print(f"verification failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
