"""Nested coded shuffling programs for a fixed placement.

For a demand ``D`` the shuffle program has one equality row per worker
``k`` and subset ``S`` with ``k in S`` and ``|S| >= 2``::

    need(k, S) + sum_{i not in S} r[k, S+i -> S]
        = sum_{j in S-k} L[j, S] + sum_{i in S-k} r[k, S -> S-i]

where ``need(k, S) = W_k * a[S-k]`` for plain coded shuffling and
``W_k * [a[S-k] >= 1]`` when intermediate values are aggregated before
shuffling. The objective is the total multicast size ``sum L``.

Only the right-hand side depends on the placement and the demand, so
:class:`FlowSolver` caches optimal bases and re-uses them across demands:
a cached basis that stays primal feasible for a new right-hand side is
optimal for it as well.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np

from .lp import EQ, LinearProgram, _fraction_solve, solve_lp
from .placement import Placement, subset_file_counts
from .system import (
    SystemConfig,
    enumerate_worker_subsets,
    format_subset,
    members,
    popcount,
)

CDC, CCDC = "cdc", "ccdc"
VARIANTS = (CDC, CCDC)


def check_variant(variant: str) -> str:
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}, got {variant!r}")
    return variant


@dataclass(frozen=True)
class FlowLayout:
    """Variable and row indexing of the shuffle program for ``K`` workers."""

    num_workers: int
    variables: tuple[tuple, ...]
    rows: tuple[tuple[int, int], ...]

    @classmethod
    def build(cls, num_workers: int) -> "FlowLayout":
        subsets = enumerate_worker_subsets(num_workers, 2)
        variables = []
        for s in subsets:
            for j in members(s):
                variables.append(("L", j, s))
        for s in subsets:
            if popcount(s) >= 3:
                for k in members(s):
                    for i in members(s):
                        if i != k:
                            variables.append(("r", k, s, i))
        rows = tuple((k, s) for s in subsets for k in members(s))
        return cls(num_workers, tuple(variables), rows)

    @property
    def index(self) -> dict:
        return _layout_index(self)

    def name(self, var: tuple) -> str:
        if var[0] == "L":
            return f"L_{var[1] + 1}_{var[2]}"
        return f"r_{var[1] + 1}_{var[2]}_{var[3] + 1}"

    def describe(self, var: tuple) -> str:
        if var[0] == "L":
            return f"L[sender={var[1] + 1}, S={format_subset(var[2])}]"
        _, k, s, i = var
        return f"r[recipient={k + 1}, S={format_subset(s)} -> {format_subset(s & ~(1 << i))}]"

    def row_terms(self, k: int, s: int) -> dict[tuple, int]:
        terms = {}
        for j in members(s):
            if j != k:
                terms[("L", j, s)] = 1
        if popcount(s) >= 3:
            for i in members(s):
                if i != k:
                    terms[("r", k, s, i)] = 1
        for i in range(self.num_workers):
            if not s >> i & 1:
                terms[("r", k, s | 1 << i, i)] = -1
        return terms


_INDEX_CACHE: dict[int, dict] = {}
_LAYOUTS: dict[int, FlowLayout] = {}


def layout_for(num_workers: int) -> FlowLayout:
    if num_workers not in _LAYOUTS:
        _LAYOUTS[num_workers] = FlowLayout.build(num_workers)
    return _LAYOUTS[num_workers]


def _layout_index(layout: FlowLayout) -> dict:
    key = layout.num_workers
    if key not in _INDEX_CACHE:
        _INDEX_CACHE[key] = {v: j for j, v in enumerate(layout.variables)}
    return _INDEX_CACHE[key]


def need_vector(counts: Sequence[int], variant: str) -> np.ndarray:
    """Per-subset demand counts, clipped to indicators for the aggregated variant."""
    a = np.asarray(counts, dtype=np.int64)
    return np.minimum(a, 1) if check_variant(variant) == CCDC else a


def build_flow_lp(
    reducing_loads: Sequence[Fraction], counts: Sequence[int], variant: str = CDC
) -> LinearProgram:
    """Shuffle program for one demand, given ``a[S]`` indexed by subset bitmask."""
    K = len(reducing_loads)
    layout = layout_for(K)
    a = need_vector(counts, variant)
    lp = LinearProgram()
    for var in layout.variables:
        lp.add_variable(layout.name(var), cost=1 if var[0] == "L" else 0)
    idx = layout.index
    for k, s in layout.rows:
        coeffs = {idx[v]: c for v, c in layout.row_terms(k, s).items()}
        lp.add_constraint(coeffs, EQ, Fraction(reducing_loads[k]) * int(a[s & ~(1 << k)]),
                          name=f"flow_{k + 1}_{s}")
    return lp


def build_cdc_flow_lp(placement: Placement, config: SystemConfig, demand: int) -> LinearProgram:
    return build_flow_lp(config.reducing_loads, subset_file_counts(placement, demand), CDC)


def build_ccdc_flow_lp(placement: Placement, config: SystemConfig, demand: int) -> LinearProgram:
    return build_flow_lp(config.reducing_loads, subset_file_counts(placement, demand), CCDC)


@dataclass
class _Basis:
    columns: np.ndarray
    gain: np.ndarray  # x_B = gain @ a
    value: np.ndarray  # objective = value @ a
    exact_gain: list[list[Fraction]] | None = None
    exact_value: list[Fraction] | None = None
    dual_feasible: bool | None = None


@dataclass
class ShuffleLoadPlan:
    """Optimal shuffle variables for one demand (units of ``T*Q`` bits)."""

    demand: int
    variant: str
    num_workers: int
    values: dict[tuple, Fraction]
    load: Fraction

    def __post_init__(self):
        total = sum((v for var, v in self.values.items() if var[0] == "L"), Fraction(0))
        if total != self.load:
            raise ValueError("plan load does not match the sum of its multicast sizes")

    def sender_size(self, j: int, s: int) -> Fraction:
        return self.values.get(("L", j, s), Fraction(0))

    def residual(self, k: int, s: int, i: int) -> Fraction:
        return self.values.get(("r", k, s, i), Fraction(0))

    def dumps(self) -> str:
        layout = layout_for(self.num_workers)
        lines = [f"# demand={self.demand} variant={self.variant} load={self.load}"]
        for var in layout.variables:
            v = self.values.get(var)
            if v:
                lines.append(f"{layout.name(var)} = {v}")
        return "\n".join(lines) + "\n"


class FlowSolver:
    """Optimal shuffle load as a function of the per-subset demand counts.

    One instance serves every placement and demand of a system with the
    given reducing loads; plain and aggregated variants share it.
    """

    def __init__(self, reducing_loads: Sequence[Fraction]):
        self.reducing_loads = tuple(Fraction(w) for w in reducing_loads)
        self.K = len(self.reducing_loads)
        self.layout = layout_for(self.K)
        K = self.K
        nsub = 1 << K
        rows = self.layout.rows
        # rhs = rhs_map @ a, row (k, S) reads W_k * a[S - k].
        self.rhs_map_exact = [[Fraction(0)] * nsub for _ in rows]
        rhs_map = np.zeros((len(rows), nsub))
        for r, (k, s) in enumerate(rows):
            rhs_map[r, s & ~(1 << k)] = float(self.reducing_loads[k])
            self.rhs_map_exact[r][s & ~(1 << k)] = self.reducing_loads[k]
        self.rhs_map = rhs_map
        idx = self.layout.index
        self.A = np.zeros((len(rows), len(self.layout.variables)))
        self.A_exact = [dict() for _ in rows]
        for r, (k, s) in enumerate(rows):
            for v, c in self.layout.row_terms(k, s).items():
                self.A[r, idx[v]] = c
                self.A_exact[r][idx[v]] = c
        self.cost = np.array([1.0 if v[0] == "L" else 0.0 for v in self.layout.variables])
        # Only subsets that appear as S-k for some row affect the program.
        self.relevant = np.zeros(nsub, dtype=bool)
        for k, s in rows:
            self.relevant[s & ~(1 << k)] = True
        self._bases: list[_Basis] = []
        self._stack: np.ndarray | None = None
        self._offsets: np.ndarray | None = None
        self._cache: dict[bytes, tuple[float, int]] = {}
        self._prices: np.ndarray | None = None
        self.lp_solves = 0

    # -- basis bookkeeping -------------------------------------------------
    def _restack(self):
        self._stack = np.vstack([b.gain for b in self._bases])
        sizes = [b.gain.shape[0] for b in self._bases]
        self._offsets = np.concatenate([[0], np.cumsum(sizes)[:-1]]).astype(int)

    def _add_basis(self, columns) -> int:
        columns = np.array(sorted(columns))
        B = self.A[:, columns]
        gain = np.linalg.solve(B, self.rhs_map)
        value = self.cost[columns] @ gain
        self._bases.append(_Basis(columns, gain, value))
        self._restack()
        return len(self._bases) - 1

    def _find_basis(self, a: np.ndarray) -> int | None:
        if not self._bases:
            return None
        xb = self._stack @ a
        worst = np.minimum.reduceat(xb, self._offsets)
        ok = np.flatnonzero(worst >= -1e-9)
        return int(ok[0]) if ok.size else None

    def _solve_fresh(self, a: np.ndarray) -> int:
        lp = build_flow_lp(self.reducing_loads, a, CDC)
        sol = solve_lp(lp)
        self.lp_solves += 1
        if not sol.optimal:
            raise RuntimeError(f"shuffle program not solved: {sol.status}")
        n = len(self.layout.variables)
        return self._add_basis([c for c in sol.basis if c < n])

    # -- evaluation ----------------------------------------------------------
    def _key(self, a: np.ndarray) -> bytes:
        return np.where(self.relevant, a, 0).astype(np.int64).tobytes()

    def load(self, counts: Sequence[int], variant: str = CDC) -> float:
        """Optimal shuffle load (float) for per-subset counts ``a``."""
        a = need_vector(counts, variant)
        a = np.where(self.relevant, a, 0)
        if not a.any():
            return 0.0
        key = a.astype(np.int64).tobytes()
        hit = self._cache.get(key)
        if hit is not None:
            return hit[0]
        af = a.astype(float)
        b = self._find_basis(af)
        if b is None:
            b = self._solve_fresh(af)
        val = float(self._bases[b].value @ af)
        self._cache[key] = (val, b)
        return val

    def load_with_basis(self, counts: Sequence[int]) -> tuple[float, int]:
        """Float load for need vector ``counts`` and the index of its optimal basis."""
        a = np.where(self.relevant, np.asarray(counts), 0)
        if not a.any():
            return 0.0, -1
        self.load(a, CDC)
        return self._cache[a.astype(np.int64).tobytes()]

    def price_matrix(self) -> np.ndarray:
        """Dual price vectors of every cached basis, plus a final zero row."""
        nb = len(self._bases)
        if self._prices is None or self._prices.shape[0] != nb + 1:
            self._prices = np.vstack([b.value for b in self._bases] + [np.zeros(1 << self.K)])
        return self._prices

    def _exact_basis(self, b: int) -> _Basis:
        basis = self._bases[b]
        if basis.exact_gain is None:
            cols = list(basis.columns)
            Bm = [[Fraction(row.get(c, 0)) for c in cols] for row in self.A_exact]
            gain = _fraction_solve(Bm, [row[:] for row in self.rhs_map_exact])
            nsub = len(self.rhs_map_exact[0])
            basis.exact_gain = gain
            # Reduced costs do not depend on the right-hand side: check them once.
            cb = [Fraction(int(self.cost[c])) for c in cols]
            y = _fraction_solve([list(col) for col in zip(*Bm)], cb)
            reduced = [Fraction(int(self.cost[j])) for j in range(self.A.shape[1])]
            for r, row in enumerate(self.A_exact):
                if y[r]:
                    for j, c in row.items():
                        reduced[j] -= y[r] * c
            basis.dual_feasible = all(v >= 0 for v in reduced)
            basis.exact_value = [
                sum((gain[i][u] for i, c in enumerate(cols) if self.cost[c]), Fraction(0))
                for u in range(nsub)
            ]
        return basis

    def plan(self, counts: Sequence[int], variant: str = CDC, demand: int = 0) -> ShuffleLoadPlan:
        """Exact optimal plan for per-subset counts ``a``."""
        a = need_vector(counts, variant)
        a = [int(x) if rel else 0 for x, rel in zip(a, self.relevant)]
        if not any(a):
            return ShuffleLoadPlan(demand, variant, self.K, {}, Fraction(0))
        self.load(a, CDC)
        b = self._cache[self._key(np.array(a))][1]
        basis = self._exact_basis(b)
        xb = [sum((g * x for g, x in zip(row, a) if x), Fraction(0)) for row in basis.exact_gain]
        if not basis.dual_feasible:
            raise RuntimeError("cached basis is not exactly optimal")
        if any(v < 0 for v in xb):
            # The float feasibility test misjudged this basis; solve from scratch.
            b = self._solve_fresh(np.array(a, dtype=float))
            self._cache[self._key(np.array(a))] = (float(self._bases[b].value @ np.array(a, float)), b)
            basis = self._exact_basis(b)
            xb = [sum((g * x for g, x in zip(row, a) if x), Fraction(0)) for row in basis.exact_gain]
            if any(v < 0 for v in xb) or not basis.dual_feasible:
                raise RuntimeError("no exactly optimal basis found")
        values = {}
        for c, v in zip(basis.columns, xb):
            if v:
                values[self.layout.variables[c]] = v
        load = sum((v for var, v in values.items() if var[0] == "L"), Fraction(0))
        return ShuffleLoadPlan(demand, variant, self.K, values, load)

    def exact_load(self, counts: Sequence[int], variant: str = CDC) -> Fraction:
        return self.plan(counts, variant).load

    @property
    def num_bases(self) -> int:
        return len(self._bases)


_SOLVERS: dict[tuple, FlowSolver] = {}


def reset_flow_solvers() -> None:
    """Drop every cached solver (used to time methods from a cold start)."""
    _SOLVERS.clear()


def flow_solver(reducing_loads: Sequence[Fraction]) -> FlowSolver:
    """Process-wide shared solver for the given reducing loads."""
    key = tuple(Fraction(w) for w in reducing_loads)
    if key not in _SOLVERS:
        _SOLVERS[key] = FlowSolver(key)
    return _SOLVERS[key]


def demand_count_table(placement: Placement) -> np.ndarray:
    """``table[D, S] = a_S^D`` for every demand bitmask ``D`` (row 0 is zero)."""
    N, K = placement.num_files, placement.num_workers
    table = np.zeros((1 << N, 1 << K), dtype=np.int64)
    for n, s in enumerate(placement.assignment):
        half = 1 << n
        table[half : 2 * half] = table[:half]
        table[half : 2 * half, s] += 1
    return table


def per_demand_loads(placement: Placement, config: SystemConfig, variant: str = CDC) -> np.ndarray:
    """Float optimal load for every demand, indexed by demand bitmask."""
    solver = flow_solver(config.reducing_loads)
    table = demand_count_table(placement)
    if variant == CCDC:
        table = np.minimum(table, 1)
    table[:, ~solver.relevant] = 0
    uniq, inverse = np.unique(table, axis=0, return_inverse=True)
    vals = np.array([solver.load(row, CDC) for row in uniq])
    return vals[inverse.ravel()]


def expected_load(per_demand, popularity: Sequence[float]):
    """Probability-weighted load over all non-empty demands.

    ``per_demand`` maps demand bitmask to load. When every load is a
    :class:`~fractions.Fraction` the result is exact, with each ``p_n``
    taken at its exact binary value.
    """
    from .system import demand_probabilities, exact_demand_probabilities

    num_demands = (1 << len(popularity)) - 1
    if isinstance(per_demand, Mapping):
        missing = [d for d in range(1, num_demands + 1) if d not in per_demand]
        if missing:
            raise KeyError(f"missing loads for demands {missing[:5]}")
        loads = [per_demand[d] for d in range(1, num_demands + 1)]
    else:
        loads = list(per_demand)[1:] if len(per_demand) == num_demands + 1 else list(per_demand)
        if len(loads) != num_demands:
            raise KeyError("need one load per non-empty demand")
    if all(isinstance(v, (Fraction, int)) for v in loads):
        probs = exact_demand_probabilities(popularity)
        return sum((probs[d] * Fraction(v) for d, v in enumerate(loads, start=1)), Fraction(0))
    probs = demand_probabilities(popularity)
    return float(np.dot(probs[1:], np.asarray(loads, dtype=float)))


def placement_expected_load(placement: Placement, config: SystemConfig, variant: str = CDC) -> float:
    loads = per_demand_loads(placement, config, variant)
    return float(config.demand_probs @ loads)


def exact_per_demand_loads(placement: Placement, config: SystemConfig, variant: str = CDC) -> dict[int, Fraction]:
    solver = flow_solver(config.reducing_loads)
    table = demand_count_table(placement)
    out, memo = {}, {}
    for d in range(1, 1 << config.num_files):
        a = need_vector(table[d], variant)
        key = a.tobytes()
        if key not in memo:
            memo[key] = solver.exact_load(a, CDC)
        out[d] = memo[key]
    return out


def exact_placement_expected_load(placement: Placement, config: SystemConfig, variant: str = CDC) -> Fraction:
    return expected_load(exact_per_demand_loads(placement, config, variant), config.popularity)


def shuffle_plan(placement: Placement, config: SystemConfig, demand: int, variant: str = CDC) -> ShuffleLoadPlan:
    """Exact optimal shuffle plan for one demand under ``placement``."""
    counts = subset_file_counts(placement, demand)
    return flow_solver(config.reducing_loads).plan(counts, variant, demand)


def count_lp_dimensions(config: SystemConfig) -> tuple[int, int]:
    """Closed-form variable and constraint totals of the full shuffle program.

    Counts run over all ``2**N - 1`` demands. Constraints are the flow rows
    plus one non-negativity bound per variable.
    """
    K, N = config.num_workers, config.num_files
    demands = (1 << N) - 1
    tail = sum(math.comb(K, k) * k * k for k in range(3, K + 1))
    tail_c = sum(math.comb(K, k) * (k * k + k) for k in range(3, K + 1))
    return demands * (K * K + tail - K), demands * (2 * K * K + tail_c - 2 * K)


def constructed_lp_dimensions(config: SystemConfig, placement: Placement | None = None) -> tuple[int, int]:
    """Variable and constraint totals from building every per-demand program.

    Constraints are counted as flow rows plus non-negativity bounds, the
    same accounting as :func:`count_lp_dimensions`.
    """
    from .placement import round_robin_placement

    placement = placement or round_robin_placement(config)
    table = demand_count_table(placement)
    nvars = ncons = 0
    for d in range(1, 1 << config.num_files):
        lp = build_flow_lp(config.reducing_loads, table[d])
        nvars += lp.num_variables
        ncons += lp.num_constraints + sum(1 for lo in lp.lower if lo is not None)
    return nvars, ncons
