"""Joint placement and shuffle optimisation.

:func:`solve_joint` runs a branch-and-bound over file placements. Each file
is assigned to exactly one non-empty worker subset; a node fixes the
subsets of the most popular files and is bounded by the linear relaxation
of the joint program in which the undecided placement indicators range
over ``[0, 1]``. Leaves are evaluated exactly with the per-demand shuffle
programs of :mod:`hetcdc.shuffle_opt`.
"""

from __future__ import annotations

import heapq
import time
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product

import numpy as np

from .lp import EQ, LE, LinearProgram, LpArrays, solve_arrays
from .placement import (
    InfeasibleSplit,
    Placement,
    round_robin_placement,
    two_file_group_placement,
)
from .shuffle_opt import (
    CCDC,
    CDC,
    check_variant,
    exact_placement_expected_load,
    layout_for,
    placement_expected_load,
)
from .system import SystemConfig, members, popcount

REL_TOL = 1e-7


class RelaxationModel:
    """The joint program with continuous placement indicators.

    Indicator ``t[n, S]`` is column ``n * (2**K - 1) + S - 1``. Branching
    only changes the bounds of these columns, so the matrix form is built
    once and re-solved with different bounds.
    """

    def __init__(self, config: SystemConfig, variant: str = CDC):
        self.config = config
        self.variant = check_variant(variant)
        K, N = config.num_workers, config.num_files
        nsub = (1 << K) - 1
        layout = layout_for(K)
        lp = LinearProgram()
        for n in range(N):
            for s in range(1, nsub + 1):
                lp.add_variable(f"t_{n + 1}_{s}", 0, 1)
        self.num_indicators = N * nsub

        def t(n, s):
            return n * nsub + s - 1

        for n in range(N):
            lp.add_constraint({t(n, s): 1 for s in range(1, nsub + 1)}, EQ, 1, name=f"place_{n + 1}")
        for k in range(K):
            lp.add_constraint(
                {t(n, s): 1 for n in range(N) for s in range(1, nsub + 1) if s >> k & 1},
                LE,
                config.mapping_loads[k],
                name=f"capacity_{k + 1}",
            )
        probs = config.exact_demand_probs()
        for d in range(1, 1 << N):
            files = [n for n in range(N) if d >> n & 1]
            col = {}
            for var in layout.variables:
                col[var] = lp.add_variable(
                    f"{layout.name(var)}_d{d}", cost=probs[d] if var[0] == "L" else 0
                )
            for k, s in layout.rows:
                flow = {col[v]: c for v, c in layout.row_terms(k, s).items()}
                w = config.reducing_loads[k]
                u = s & ~(1 << k)
                if self.variant == CDC:
                    row = dict(flow)
                    for n in files:
                        row[t(n, u)] = -w
                    lp.add_constraint(row, EQ, 0)
                else:
                    for n in files:
                        row = {j: -c for j, c in flow.items()}
                        row[t(n, u)] = w
                        lp.add_constraint(row, LE, 0)
        self.program = lp
        self.arrays = LpArrays.from_program(lp)
        self._nsub = nsub

    def column(self, n: int, s: int) -> int:
        return n * self._nsub + s - 1

    def bounds_for(self, fixed: dict[int, int] | tuple, allowed=None):
        """Variable bounds with files in ``fixed`` pinned to their subsets.

        ``allowed`` optionally maps a free file to the subsets it may still use.
        """
        lower = self.arrays.lower.copy()
        upper = self.arrays.upper.copy()
        items = fixed.items() if isinstance(fixed, dict) else enumerate(fixed)
        for n, s in items:
            base = n * self._nsub
            upper[base : base + self._nsub] = 0.0
            upper[base + s - 1] = 1.0
            lower[base + s - 1] = 1.0
        if allowed:
            for n, subs in allowed.items():
                base = n * self._nsub
                mask = np.zeros(self._nsub, dtype=bool)
                mask[[s - 1 for s in subs]] = True
                upper[base : base + self._nsub][~mask] = 0.0
        return lower, upper

    def solve(self, fixed=(), allowed=None) -> float:
        lower, upper = self.bounds_for(fixed, allowed)
        sol = solve_arrays(self.arrays, lower, upper)
        if sol.status == "infeasible":
            return float("inf")
        if not sol.optimal:
            raise RuntimeError(f"relaxation failed: {sol.status}")
        return sol.objective


def relaxation_lower_bound(config: SystemConfig, variant: str = CDC) -> float:
    """Optimal value of the joint program with placement indicators in ``[0, 1]``."""
    return RelaxationModel(config, variant).solve()


class _LoadCodes:
    """Packs per-subset demand counts into one integer key per demand.

    Subset ``S`` owns a fixed-width bit field; adding a demanded file stored
    at ``S`` adds one to that field (or sets it to one when intermediate
    values are aggregated). Keys map to optimal shuffle loads.
    """

    def __init__(self, config: SystemConfig, variant: str):
        from .shuffle_opt import flow_solver

        self.variant = variant
        self.solver = flow_solver(config.reducing_loads)
        self.width = max(config.num_files, 1).bit_length() + 1
        self.field_mask = (1 << self.width) - 1
        self.nsub = 1 << config.num_workers
        self.delta = [
            (1 << (s * self.width)) if self.solver.relevant[s] else 0 for s in range(self.nsub)
        ]
        # code -> slot in the value/basis arrays (slot 0 is the empty demand)
        self.slot: dict[int, int] = {0: 0}
        self._vals = np.zeros(1024)
        self._bases = np.full(1024, -1, dtype=np.int64)
        self._size = 1
        self.exact: dict[int, Fraction] = {0: Fraction(0)}

    def add(self, codes: list[int], s: int) -> list[int]:
        d = self.delta[s]
        if not d:
            return list(codes)
        if self.variant == CDC:
            return [c + d for c in codes]
        return [c | d for c in codes]

    def decode(self, code: int) -> np.ndarray:
        a = np.zeros(self.nsub, dtype=np.int64)
        for s in range(self.nsub):
            a[s] = (code >> (s * self.width)) & self.field_mask
        return a

    def load(self, codes: list[int]) -> tuple[np.ndarray, np.ndarray]:
        """Loads and optimal-basis indices (``-1`` for the empty demand)."""
        get = self.slot.get
        slots = [get(c, -1) for c in codes]
        if -1 in slots:
            for i, c in enumerate(codes):
                if slots[i] == -1:
                    slots[i] = self._insert(c)
        idx = np.array(slots, dtype=np.int64)
        return self._vals[idx], self._bases[idx]

    def _insert(self, code: int) -> int:
        val, basis = self.solver.load_with_basis(self.decode(code))
        if self._size == len(self._vals):
            self._vals = np.concatenate([self._vals, np.zeros(self._size)])
            self._bases = np.concatenate([self._bases, np.full(self._size, -1, dtype=np.int64)])
        i = self._size
        self._vals[i], self._bases[i] = val, basis
        self.slot[code] = i
        self._size += 1
        return i

    def exact_load(self, codes: list[int]) -> list[Fraction]:
        out = []
        for c in codes:
            v = self.exact.get(c)
            if v is None:
                v = self.exact[c] = self.solver.exact_load(self.decode(c), CDC)
            out.append(v)
        return out


@dataclass
class JointSolveReport:
    variant: str
    placement: Placement
    expected_load: Fraction
    lower_bound: float
    nodes: int
    seconds: float
    optimal: bool
    lp_bounds: int = 0
    pruned: int = 0

    @property
    def gap(self) -> float:
        best = float(self.expected_load)
        return (best - self.lower_bound) / best if best > 0 else 0.0

    def dumps(self) -> str:
        return (
            f"variant: {self.variant}\n"
            f"expected_load: {self.expected_load}\n"
            f"expected_load_decimal: {float(self.expected_load):.12g}\n"
            f"root_lower_bound: {self.lower_bound:.12g}\n"
            f"optimal: {str(self.optimal).lower()}\n"
            f"nodes: {self.nodes}\n"
            f"lp_bounds: {self.lp_bounds}\n"
            f"seconds: {self.seconds:.3f}\n"
            f"placement:\n{self.placement.dumps()}"
        )


def _subset_order(num_workers: int) -> list[int]:
    subsets = range(1, 1 << num_workers)
    return sorted(subsets, key=lambda s: (-popcount(s), s))


def _demand_weights(popularity) -> list[np.ndarray]:
    """``w[m][D']`` = P(D restricted to files < m equals D') / P(D non-empty)."""
    p = np.asarray(popularity, dtype=float)
    denom = 1.0 - float(np.prod(1.0 - p))
    out = [np.ones(1) / denom]
    for pn in p:
        prev = out[-1]
        out.append(np.concatenate([prev * (1.0 - pn), prev * pn]))
    return out


def _exact_demand_weights(popularity, m: int) -> list[Fraction]:
    p = [Fraction(float(x)) for x in popularity]
    denom = 1
    for pn in p:
        denom *= 1 - pn
    denom = 1 - denom
    w = [1 / denom]
    for pn in p[:m]:
        w = [v * (1 - pn) for v in w] + [v * pn for v in w]
    return w


def _subsets_by_size(num_workers: int) -> dict[int, list[np.ndarray]]:
    """``out[A][s - 1]`` = the non-empty subsets of ``A`` with ``s`` members."""
    out = {}
    for avail in range(1, 1 << num_workers):
        size = popcount(avail)
        groups = [[] for _ in range(size)]
        sub = avail
        while sub:
            groups[popcount(sub) - 1].append(sub)
            sub = (sub - 1) & avail
        out[avail] = [np.array(sorted(g)) for g in groups]
    return out


def _allocation_bound(vbar: np.ndarray, avail: int, slots: int, probs, by_size) -> float:
    """Least extra load the undecided files can add, priced by ``vbar``.

    The undecided files must occupy exactly ``slots`` worker slots among
    the workers in ``avail``. Each file ``n`` is charged ``p_n * g(s)``,
    with ``g(s)`` the cheapest price over available subsets of size ``s``,
    and a dynamic program over slot counts picks the sizes.
    """
    if not probs:
        return 0.0
    if not avail:
        return float("inf")
    g = [float(vbar[idx].min()) for idx in by_size[avail]]
    smax = len(g)
    if slots < len(probs) or slots > smax * len(probs):
        return float("inf")
    dp = np.full(slots + 1, np.inf)
    dp[0] = 0.0
    for pn in probs:
        nxt = np.full(slots + 1, np.inf)
        for s in range(1, smax + 1):
            np.minimum(nxt[s:], dp[:-s] + pn * g[s - 1], out=nxt[s:])
        dp = nxt
    return float(dp[slots])


def solve_joint(
    config: SystemConfig,
    variant: str = CDC,
    max_nodes: int | None = None,
    max_seconds: float | None = None,
    lp_bound_depth: int = 0,
    max_frontier: int = 200_000,
    incumbent: Placement | None = None,
) -> JointSolveReport:
    """Branch-and-bound over placements for the minimum expected shuffle load.

    Files are branched on in order of decreasing popularity and subsets in
    order of decreasing size. A node's bound is the exact expected load of
    the demands restricted to its decided files, which is valid because the
    optimal shuffle load never decreases when a demand grows. For plain
    coded shuffling the bound also charges the undecided files through the
    dual prices of the restricted demands' optimal bases (weak duality),
    given that they must fill the remaining slots exactly. Nodes at depth
    at most ``lp_bound_depth`` that survive this test are also bounded by the
    linear relaxation with the undecided indicators in ``[0, 1]``.

    Capacity propagation keeps only placements that use
    ``min(M_k, N)`` slots at every worker: replicating a file at a worker
    with spare capacity never increases the load, so some optimum has this
    form. Files of equal popularity are interchangeable, so their subsets
    are required to follow the branching order.

    The search starts from the better of round-robin and the best
    two-file-group placement (or ``incumbent`` when given).
    """
    check_variant(variant)
    start = time.perf_counter()
    K, N = config.num_workers, config.num_files
    M = config.mapping_loads
    target = [min(m, N) for m in M]
    order = _subset_order(K)
    rank = {s: i for i, s in enumerate(order)}
    subset_members = {s: members(s) for s in order}
    weights = _demand_weights(config.popularity)
    p = config.popularity
    by_size = _subsets_by_size(K)
    codes_table = _LoadCodes(config, variant)
    use_prices = variant == CDC

    relax = RelaxationModel(config, variant)
    root_bound = relax.solve()
    lp_bounds = 1

    if incumbent is None:
        seeds = [round_robin_placement(config)]
        seeds.append(two_file_group_search(config, variant).placement)
    else:
        seeds = [incumbent.validate(config)]
    best_place, best_exact = None, None
    for cand in seeds:
        val = exact_placement_expected_load(cand, config, variant)
        if best_exact is None or val < best_exact:
            best_place, best_exact = cand, val
    best_float = float(best_exact)
    eps = 1e-12 * max(1.0, best_float)

    exact_weights: dict[int, list[Fraction]] = {}

    def exact_bound(codes, depth):
        if depth not in exact_weights:
            exact_weights[depth] = _exact_demand_weights(p, depth)
        w = exact_weights[depth]
        return sum((a * b for a, b in zip(w, codes_table.exact_load(codes)) if a and b), Fraction(0))

    nodes = pruned = 0
    seq = 0
    # Node: (bound, -depth, seq, assignment, used, codes, loads, bases)
    heap = [(0.0, 0, seq, (), (0,) * K, [0], np.zeros(1), np.full(1, -1))]
    exhausted = False

    def expand(node):
        nonlocal seq, nodes, pruned, best_place, best_exact, best_float, eps, lp_bounds
        _, negdepth, _, assign, used, codes, loads, bases = node
        m = len(assign)
        out = []
        remaining = N - m - 1
        tied_prev = rank[assign[-1]] if m and p[m] == p[m - 1] else -1
        full_mask = sum(1 << k for k in range(K) if used[k] >= M[k])
        for s in order:
            if rank[s] < tied_prev:
                continue
            if s & full_mask:
                continue
            new_used = list(used)
            for k in subset_members[s]:
                new_used[k] += 1
            if any(u + remaining < tk for u, tk in zip(new_used, target)):
                continue
            nodes += 1
            child_codes = codes + codes_table.add(codes, s)
            new_loads, new_bases = codes_table.load(child_codes[len(codes):])
            child_loads = np.concatenate([loads, new_loads])
            child_bases = np.concatenate([bases, new_bases])
            bound = float(weights[m + 1] @ child_loads)
            if bound > best_float + eps:
                pruned += 1
                continue
            priced = bound
            if use_prices and m + 1 < N:
                avail = sum(1 << k for k in range(K) if new_used[k] < M[k])
                slots = sum(target[k] - new_used[k] for k in range(K))
                vbar = weights[m + 1] @ codes_table.solver.price_matrix()[child_bases]
                priced = bound + _allocation_bound(vbar, avail, slots, p[m + 1:], by_size)
                # Prices come from float basis solves, hence the wider margin.
                if priced > best_float * (1 + 1e-9) + 1e-12:
                    pruned += 1
                    continue
            child_assign = assign + (s,)
            if m + 1 == N:
                if bound < best_float - eps or exact_bound(child_codes, N) < best_exact:
                    val = exact_placement_expected_load(Placement(child_assign, K), config, variant)
                    if val < best_exact:
                        best_place, best_exact = Placement(child_assign, K), val
                        best_float = float(val)
                        eps = 1e-12 * max(1.0, best_float)
                continue
            if bound >= best_float - eps and exact_bound(child_codes, m + 1) >= best_exact:
                pruned += 1
                continue
            if m + 1 <= lp_bound_depth:
                lb = relax.solve(dict(enumerate(child_assign)))
                lp_bounds += 1
                if lb > best_float * (1 + 1e-9) + 1e-12:
                    pruned += 1
                    continue
                bound = max(bound, lb)
            seq += 1
            out.append((max(bound, priced), -(m + 1), seq, child_assign, tuple(new_used),
                        child_codes, child_loads, child_bases))
        return out

    def budget_left():
        if max_nodes is not None and nodes >= max_nodes:
            return False
        if max_seconds is not None and time.perf_counter() - start >= max_seconds:
            return False
        return True

    while heap:
        if not budget_left():
            exhausted = True
            break
        node = heapq.heappop(heap)
        if node[0] > best_float + eps:
            continue
        children = expand(node)
        if len(heap) + len(children) <= max_frontier:
            for c in children:
                heapq.heappush(heap, c)
        else:
            # Frontier full: dive depth-first below this node instead.
            stack = sorted(children, key=lambda c: (c[0], c[2]), reverse=True)
            while stack:
                if not budget_left():
                    exhausted = True
                    break
                c = stack.pop()
                if c[0] > best_float + eps:
                    continue
                grand = expand(c)
                stack.extend(sorted(grand, key=lambda g: (g[0], g[2]), reverse=True))
            if exhausted:
                break

    return JointSolveReport(
        variant=variant,
        placement=best_place,
        expected_load=best_exact,
        lower_bound=root_bound,
        nodes=nodes,
        seconds=time.perf_counter() - start,
        optimal=not exhausted,
        lp_bounds=lp_bounds,
        pruned=pruned,
    )


@dataclass
class TwoFileGroupResult:
    variant: str
    split: int
    placement: Placement
    expected_load: Fraction
    loads_by_split: dict[int, Fraction] = field(default_factory=dict)
    seconds: float = 0.0


def two_file_group_search(config: SystemConfig, variant: str = CDC) -> TwoFileGroupResult:
    """Best split of the two-file-group placement; ties go to the smallest split."""
    check_variant(variant)
    start = time.perf_counter()
    loads, placements = {}, {}
    for split in range(1, config.num_files + 1):
        try:
            placement = two_file_group_placement(config, split)
        except InfeasibleSplit:
            continue
        placements[split] = placement
        loads[split] = exact_placement_expected_load(placement, config, variant)
    if not loads:
        raise InfeasibleSplit("no feasible two-file-group split")
    best = min(loads, key=lambda n1: (loads[n1], n1))
    return TwoFileGroupResult(variant, best, placements[best], loads[best], loads,
                              time.perf_counter() - start)


def enumerate_placements(config: SystemConfig):
    """Every capacity-feasible placement (no dominance or symmetry reduction)."""
    K = config.num_workers
    subsets = range(1, 1 << K)
    for combo in product(subsets, repeat=config.num_files):
        used = [0] * K
        ok = True
        for s in combo:
            for k in members(s):
                used[k] += 1
                if used[k] > config.mapping_loads[k]:
                    ok = False
                    break
            if not ok:
                break
        if ok:
            yield Placement(combo, K)


def exhaustive_optimum(config: SystemConfig, variant: str = CDC) -> tuple[Placement, Fraction]:
    """Brute-force minimum over :func:`enumerate_placements`."""
    best, best_val, best_float = None, None, float("inf")
    for placement in enumerate_placements(config):
        val = placement_expected_load(placement, config, variant)
        if val <= best_float + 1e-9 * max(1.0, best_float):
            exact = exact_placement_expected_load(placement, config, variant)
            if best_val is None or exact < best_val:
                best, best_val, best_float = placement, exact, float(exact)
    return best, best_val
