"""Scenario files, sweeps and report output.

A scenario is an INI file with a single ``[scenario]`` section::

    [scenario]
    name = load_vs_files
    mapping_loads = 3 4 4 5
    reducing_loads = 1/8 1/4 1/4 3/8
    theta = 0.56
    files = 4 5 6 7 8
    sweep = files
    schemes = joint-bnb two-file-group round-robin lower-bound
    variants = cdc ccdc

``sweep`` names the swept key (``files``, ``theta`` or ``workers``); every
other list-valued key must then hold a single value. For a worker sweep the
per-size vectors are given as ``mapping_loads.<K>`` and
``reducing_loads.<K>``. An explicit ``popularity`` vector may replace
``theta``. Optional keys: ``seed``, ``max_nodes``, ``max_seconds``,
``verify_top``, ``verify_random``, ``allow_large_bnb``, ``sample_demands``,
``omit_timing``.
"""

from __future__ import annotations

import configparser
import os
import random
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from .joint import relaxation_lower_bound, solve_joint, two_file_group_search
from .placement import Placement, round_robin_placement
from .shuffle_opt import CCDC, CDC, VARIANTS, exact_placement_expected_load
from .sim import simulate
from .system import ConfigError, SystemConfig, zipf_popularity

SCHEMES = ("joint-bnb", "two-file-group", "round-robin", "lower-bound")
SWEEP_KEYS = ("files", "theta", "workers")
CSV_VERSION = "hetcdc-report v1"
CSV_COLUMNS = ("sweep_value", "scheme", "variant", "expected_load", "expected_load_decimal",
               "seconds", "verified", "status")
EXACT_LIMIT = 14
BNB_MAX_FILES, BNB_MAX_WORKERS = 8, 5


class ScenarioError(ValueError):
    """Malformed scenario file or options."""


class VerificationError(RuntimeError):
    """A released report row failed simulation or ordering checks."""


def _words(text: str) -> list[str]:
    return text.replace(",", " ").split()


@dataclass
class Scenario:
    name: str
    points: list[tuple[str, SystemConfig]]
    sweep: str = "files"
    schemes: tuple[str, ...] = SCHEMES
    variants: tuple[str, ...] = VARIANTS
    seed: int = 0
    max_nodes: int | None = None
    max_seconds: float | None = None
    verify_top: int = 5
    verify_random: int = 5
    allow_large_bnb: bool = False
    sample_demands: int = 0
    omit_timing: bool = False

    def __post_init__(self):
        for s in self.schemes:
            if s not in SCHEMES:
                raise ScenarioError(f"unknown scheme {s!r}; choose from {', '.join(SCHEMES)}")
        for v in self.variants:
            if v not in VARIANTS:
                raise ScenarioError(f"unknown variant {v!r}")
        if self.sweep not in SWEEP_KEYS:
            raise ScenarioError(f"sweep must be one of {', '.join(SWEEP_KEYS)}")


def parse_scenario(text: str, theta: float | None = None) -> Scenario:
    """Parse scenario text; ``theta`` overrides the file's popularity."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ScenarioError(str(exc)) from exc
    if "scenario" not in cp:
        raise ScenarioError("missing [scenario] section")
    sec = cp["scenario"]
    sweep = sec.get("sweep", "files").strip()
    if sweep not in SWEEP_KEYS:
        raise ScenarioError(f"sweep must be one of {', '.join(SWEEP_KEYS)}")

    def values(key):
        if key not in sec:
            return None
        vals = _words(sec[key])
        if key != sweep and len(vals) != 1:
            raise ScenarioError(f"{key} must hold one value unless it is the swept key")
        return vals

    files = values("files")
    thetas = [str(theta)] if theta is not None else values("theta")
    workers = values("workers")
    popularity = None if theta is not None else sec.get("popularity")
    if theta is not None and sweep == "theta":
        sweep = "files" if files and len(files) > 1 else "theta"

    def vectors(k: int | None):
        mk = sec.get(f"mapping_loads.{k}") if k is not None else None
        wk = sec.get(f"reducing_loads.{k}") if k is not None else None
        mk = mk or sec.get("mapping_loads")
        wk = wk or sec.get("reducing_loads")
        if mk is None or wk is None:
            raise ScenarioError("mapping_loads and reducing_loads are required")
        return [int(x) for x in _words(mk)], _words(wk)

    def config(n: int, th: str | None, k: int | None):
        m, w = vectors(k)
        if k is not None and len(m) != k:
            raise ScenarioError(f"mapping_loads for K={k} has {len(m)} entries")
        if popularity is not None:
            p = [float(x) for x in _words(popularity)]
            if len(p) != n:
                raise ScenarioError("popularity length differs from files")
        elif th is None:
            raise ScenarioError("give theta or popularity")
        else:
            p = zipf_popularity(n, float(th))
        try:
            return SystemConfig(m, w, p)
        except ConfigError as exc:
            raise ScenarioError(str(exc)) from exc

    if files is None and popularity is not None:
        files = [str(len(_words(popularity)))]
    if files is None:
        raise ScenarioError("files is required")
    points = []
    if sweep == "files":
        for n in files:
            points.append((n, config(int(n), thetas[0] if thetas else None, None)))
    elif sweep == "theta":
        for th in thetas or []:
            points.append((th, config(int(files[0]), th, None)))
    else:
        for k in workers or []:
            points.append((k, config(int(files[0]), thetas[0] if thetas else None, int(k))))

    def opt(key, cast, default):
        return cast(sec[key]) if key in sec else default

    return Scenario(
        name=sec.get("name", "scenario"),
        points=points,
        sweep=sweep,
        schemes=tuple(_words(sec.get("schemes", " ".join(SCHEMES)))),
        variants=tuple(_words(sec.get("variants", " ".join(VARIANTS)))),
        seed=opt("seed", int, 0),
        max_nodes=opt("max_nodes", int, None),
        max_seconds=opt("max_seconds", float, None),
        verify_top=opt("verify_top", int, 5),
        verify_random=opt("verify_random", int, 5),
        allow_large_bnb=opt("allow_large_bnb", _boolean, False),
        sample_demands=opt("sample_demands", int, 0),
        omit_timing=opt("omit_timing", _boolean, False),
    )


def _boolean(text: str) -> bool:
    return text.strip().lower() in ("1", "true", "yes", "on")


def load_scenario(path: str | os.PathLike, theta: float | None = None) -> Scenario:
    return parse_scenario(Path(path).read_text(), theta)


@dataclass
class ReportRow:
    sweep_value: str
    scheme: str
    variant: str
    load: Fraction | None
    decimal: float
    seconds: float
    verified: bool
    status: str = "ok"
    placement: Placement | None = None
    stderr: float | None = None


@dataclass
class ExperimentReport:
    name: str
    sweep: str
    rows: list[ReportRow] = field(default_factory=list)
    omit_timing: bool = False

    def find(self, value: str, scheme: str, variant: str) -> ReportRow | None:
        for r in self.rows:
            if (r.sweep_value, r.scheme, r.variant) == (value, scheme, variant):
                return r
        return None

    def to_csv(self) -> str:
        lines = [f"# {CSV_VERSION}", f"# scenario={self.name} sweep={self.sweep}", ",".join(CSV_COLUMNS)]
        for r in self.rows:
            exact = "" if r.load is None else str(r.load)
            secs = "0" if self.omit_timing else f"{r.seconds:.6f}"
            lines.append(",".join([
                r.sweep_value, r.scheme, r.variant, exact, f"{r.decimal:.12g}", secs,
                str(r.verified).lower(), r.status,
            ]))
        return "\n".join(lines) + "\n"


def sampled_expected_load(
    placement: Placement, config: SystemConfig, variant: str, samples: int, seed: int = 0
) -> tuple[float, float]:
    """Monte Carlo estimate of the expected load and its standard error."""
    from .placement import subset_file_counts
    from .shuffle_opt import flow_solver

    rng = np.random.default_rng(seed)
    p = np.asarray(config.popularity)
    solver = flow_solver(config.reducing_loads)
    vals = np.empty(samples)
    weights = 1 << np.arange(len(p), dtype=object)
    for i in range(samples):
        while True:
            hit = rng.random(len(p)) < p
            if hit.any():
                break
        demand = int(sum(weights[hit]))
        vals[i] = solver.load(subset_file_counts(placement, demand), variant)
    return float(vals.mean()), float(vals.std(ddof=1) / np.sqrt(samples)) if samples > 1 else 0.0


def verification_demands(config: SystemConfig, top: int, rand: int, seed: int) -> list[int]:
    """The ``top`` most probable demands plus ``rand`` further ones drawn at random."""
    probs = config.demand_probs
    order = sorted(range(1, len(probs)), key=lambda d: (-probs[d], d))
    rest = order[top:]
    return order[:top] + sorted(random.Random(seed).sample(rest, min(rand, len(rest))))


def verify_placement(placement: Placement, config: SystemConfig, variant: str, demands, seed: int) -> bool:
    """Simulate the sampled demands; raises on any decoding or load mismatch."""
    for d in demands:
        simulate(placement, config, d, variant, seed=seed)
    return True


def _evaluate(placement, config, variant, scenario):
    if config.num_files > EXACT_LIMIT:
        if not scenario.sample_demands:
            raise ScenarioError(
                f"N={config.num_files} exceeds exact evaluation; set sample_demands to estimate"
            )
        mean, err = sampled_expected_load(placement, config, variant, scenario.sample_demands, scenario.seed)
        return None, mean, err
    load = exact_placement_expected_load(placement, config, variant)
    return load, float(load), None


def run_point(scenario: Scenario, value: str, config: SystemConfig) -> list[ReportRow]:
    rows = []
    demands = verification_demands(config, scenario.verify_top, scenario.verify_random, scenario.seed)
    for variant in scenario.variants:
        for scheme in scenario.schemes:
            t0 = time.perf_counter()
            status, placement, err = "ok", None, None
            if scheme == "lower-bound":
                lb = relaxation_lower_bound(config, variant)
                rows.append(ReportRow(value, scheme, variant, None, lb, time.perf_counter() - t0, True))
                continue
            if scheme == "joint-bnb":
                too_big = config.num_files > BNB_MAX_FILES or config.num_workers > BNB_MAX_WORKERS
                if too_big and not scenario.allow_large_bnb:
                    rows.append(ReportRow(value, scheme, variant, None, float("nan"), 0.0, True, "skipped"))
                    continue
                rep = solve_joint(config, variant, scenario.max_nodes, scenario.max_seconds)
                placement, load = rep.placement, rep.expected_load
                status = "optimal" if rep.optimal else "budget"
                dec = float(load)
            elif scheme == "two-file-group":
                res = two_file_group_search(config, variant)
                placement, load, dec = res.placement, res.expected_load, float(res.expected_load)
                status = f"N1={res.split}"
            else:
                placement = round_robin_placement(config)
                load, dec, err = _evaluate(placement, config, variant, scenario)
            secs = time.perf_counter() - t0
            verified = verify_placement(placement, config, variant, demands, scenario.seed)
            rows.append(ReportRow(value, scheme, variant, load, dec, secs, verified, status, placement, err))
    return rows


def check_report(report: ExperimentReport) -> list[str]:
    """Sandwich and dominance violations (empty when the report is consistent)."""
    problems = []
    values = list(dict.fromkeys(r.sweep_value for r in report.rows))
    chain = ("lower-bound", "joint-bnb", "two-file-group", "round-robin")
    for v in values:
        for variant in VARIANTS:
            present = [report.find(v, s, variant) for s in chain]
            present = [r for r in present if r is not None and r.status != "skipped"]
            for a, b in zip(present, present[1:]):
                if not _leq(a, b):
                    problems.append(f"{v} {variant}: {a.scheme} {a.decimal} > {b.scheme} {b.decimal}")
        for s in chain:
            c, d = report.find(v, s, CCDC), report.find(v, s, CDC)
            if c and d and "skipped" not in (c.status, d.status) and "budget" not in (c.status, d.status):
                if not _leq(c, d):
                    problems.append(f"{v} {s}: ccdc {c.decimal} > cdc {d.decimal}")
    return problems


def _leq(a: ReportRow, b: ReportRow) -> bool:
    if a.load is not None and b.load is not None:
        return a.load <= b.load
    return a.decimal <= b.decimal + 1e-9 * max(1.0, abs(b.decimal)) + 3 * ((a.stderr or 0) + (b.stderr or 0))


def run_scenario(scenario: Scenario, jobs: int = 1) -> ExperimentReport:
    """Run every scheme at every sweep point and verify the results.

    Raises :class:`VerificationError` if a simulated demand fails or the
    released rows break the sandwich or dominance orderings.
    """
    report = ExperimentReport(scenario.name, scenario.sweep, omit_timing=scenario.omit_timing)
    if jobs > 1 and len(scenario.points) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(run_point, scenario, v, c) for v, c in scenario.points]
            for f in futures:
                report.rows.extend(f.result())
    else:
        for v, c in scenario.points:
            report.rows.extend(run_point(scenario, v, c))
    problems = check_report(report)
    if problems:
        raise VerificationError("; ".join(problems))
    return report


def emit_plot_data(report: ExperimentReport, out_dir: str | os.PathLike, schemes=SCHEMES, variants=VARIANTS) -> list[Path]:
    """One ``<scheme>_<variant>.dat`` series file per pair: ``x y`` lines."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for scheme in schemes:
        for variant in variants:
            path = out / f"{scheme}_{variant}.dat"
            lines = [f"# {report.sweep} expected_load"]
            for r in report.rows:
                if r.scheme == scheme and r.variant == variant and r.status != "skipped":
                    lines.append(f"{r.sweep_value} {r.decimal:.12g}")
            path.write_text("\n".join(lines) + "\n")
            paths.append(path)
    return paths


def write_report(report: ExperimentReport, out_dir: str | os.PathLike) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "report.csv"
    path.write_text(report.to_csv())
    emit_plot_data(report, out)
    return path
