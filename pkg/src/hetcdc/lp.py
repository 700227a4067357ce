"""Linear programs: construction, solving and exact verification.

Programs are assembled with exact rational data. Two solvers are offered:

``simplex``
    A dense revised simplex method using Bland's rule, suitable for the
    small per-demand shuffle programs. Its optimal basis can be re-solved
    in exact rational arithmetic by :func:`exact_basic_solution`.
``highs``
    SciPy's HiGHS interface, used for the large relaxations.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

FEAS_TOL = 1e-9
OPT_TOL = 1e-7

EQ, LE, GE = "=", "<=", ">="


def _frac(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, float):
        if not math.isfinite(x):
            raise ValueError("LP data must be finite")
        return Fraction(x)
    return Fraction(x)


@dataclass
class Constraint:
    coeffs: dict[int, Fraction]
    relation: str
    rhs: Fraction
    name: str = ""


@dataclass
class LinearProgram:
    """``minimize c @ x`` subject to linear rows and simple bounds."""

    names: list[str] = field(default_factory=list)
    lower: list[Fraction] = field(default_factory=list)
    upper: list[Fraction | None] = field(default_factory=list)
    objective: dict[int, Fraction] = field(default_factory=dict)
    constraints: list[Constraint] = field(default_factory=list)
    _index: dict[str, int] = field(default_factory=dict, repr=False)

    @property
    def num_variables(self) -> int:
        return len(self.names)

    @property
    def num_constraints(self) -> int:
        return len(self.constraints)

    def add_variable(self, name: str, lower=0, upper=None, cost=0) -> int:
        if name in self._index:
            raise ValueError(f"duplicate variable {name!r}")
        j = len(self.names)
        self.names.append(name)
        self.lower.append(_frac(lower))
        self.upper.append(None if upper is None else _frac(upper))
        self._index[name] = j
        if cost:
            self.objective[j] = _frac(cost)
        return j

    def index(self, name: str) -> int:
        return self._index[name]

    def add_constraint(self, coeffs: Mapping[int, object], relation: str, rhs, name: str = "") -> int:
        if relation not in (EQ, LE, GE):
            raise ValueError(f"unknown relation {relation!r}")
        row = {}
        for j, v in coeffs.items():
            if not 0 <= j < self.num_variables:
                raise ValueError(f"constraint references undeclared variable {j}")
            v = _frac(v)
            if v:
                row[j] = row.get(j, Fraction(0)) + v
        self.constraints.append(Constraint(row, relation, _frac(rhs), name))
        return len(self.constraints) - 1

    def set_objective(self, coeffs: Mapping[int, object]):
        self.objective = {j: _frac(v) for j, v in coeffs.items() if v}

    def arrays(self) -> "LpArrays":
        return LpArrays.from_program(self)

    def violation(self, x: Sequence[float]) -> float:
        """Largest violation of any row or bound at the point ``x``."""
        x = np.asarray(x, dtype=float)
        worst = 0.0
        for j in range(self.num_variables):
            worst = max(worst, float(self.lower[j]) - x[j])
            if self.upper[j] is not None:
                worst = max(worst, x[j] - float(self.upper[j]))
        for con in self.constraints:
            lhs = sum(float(v) * x[j] for j, v in con.coeffs.items())
            gap = lhs - float(con.rhs)
            if con.relation == EQ:
                worst = max(worst, abs(gap))
            elif con.relation == LE:
                worst = max(worst, gap)
            else:
                worst = max(worst, -gap)
        return worst

    def objective_value(self, x) -> float:
        return sum(float(v) * float(x[j]) for j, v in self.objective.items())

    def check_exact(self, x: Sequence[Fraction]) -> bool:
        """True iff the rational point ``x`` satisfies every row and bound exactly."""
        for j in range(self.num_variables):
            if x[j] < self.lower[j] or (self.upper[j] is not None and x[j] > self.upper[j]):
                return False
        for con in self.constraints:
            lhs = sum((v * x[j] for j, v in con.coeffs.items()), Fraction(0))
            if con.relation == EQ and lhs != con.rhs:
                return False
            if con.relation == LE and lhs > con.rhs:
                return False
            if con.relation == GE and lhs < con.rhs:
                return False
        return True


@dataclass
class LpArrays:
    """Floating point matrix form of a :class:`LinearProgram`."""

    c: np.ndarray
    a_eq: sp.csr_matrix
    b_eq: np.ndarray
    a_ub: sp.csr_matrix
    b_ub: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    eq_rows: list[int]
    ub_rows: list[tuple[int, float]]

    @classmethod
    def from_program(cls, lp: LinearProgram) -> "LpArrays":
        n = lp.num_variables
        c = np.zeros(n)
        for j, v in lp.objective.items():
            c[j] = float(v)
        eq, ub = ([], [], []), ([], [], [])
        b_eq, b_ub, eq_rows, ub_rows = [], [], [], []
        for i, con in enumerate(lp.constraints):
            if con.relation == EQ:
                tgt, sign = eq, 1.0
                eq_rows.append(i)
                b_eq.append(float(con.rhs))
                r = len(b_eq) - 1
            else:
                tgt, sign = ub, 1.0 if con.relation == LE else -1.0
                ub_rows.append((i, sign))
                b_ub.append(sign * float(con.rhs))
                r = len(b_ub) - 1
            for j, v in con.coeffs.items():
                tgt[0].append(r)
                tgt[1].append(j)
                tgt[2].append(sign * float(v))
        a_eq = sp.csr_matrix((eq[2], (eq[0], eq[1])), shape=(len(b_eq), n))
        a_ub = sp.csr_matrix((ub[2], (ub[0], ub[1])), shape=(len(b_ub), n))
        lower = np.array([float(v) for v in lp.lower])
        upper = np.array([np.inf if v is None else float(v) for v in lp.upper])
        return cls(c, a_eq, np.array(b_eq), a_ub, np.array(b_ub), lower, upper, eq_rows, ub_rows)


@dataclass
class LpSolution:
    status: str  # optimal | infeasible | unbounded | numerical
    objective: float = math.nan
    x: np.ndarray | None = None
    duals: np.ndarray | None = None  # one multiplier per constraint row
    dual_bound: float = math.nan
    max_violation: float = math.nan
    iterations: int = 0
    basis: tuple[int, ...] | None = None
    method: str = ""

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"

    @property
    def duality_gap(self) -> float:
        return abs(self.objective - self.dual_bound) / max(1.0, abs(self.objective))


class StandardForm:
    """``min c @ z  s.t.  A z = b, z >= 0`` derived from a program.

    Column layout: the shifted structural variables ``z_j = x_j - l_j`` come
    first, followed by one slack per inequality row and one per finite
    upper bound. Rows are scaled so that ``b >= 0``.
    """

    def __init__(self, lp: LinearProgram):
        n = lp.num_variables
        rows, rhs, slack_of_row = [], [], []
        self.row_sign = []
        self.constraint_rows = len(lp.constraints)
        ncols = n
        for con in lp.constraints:
            b = con.rhs - sum((v * lp.lower[j] for j, v in con.coeffs.items()), Fraction(0))
            row = dict(con.coeffs)
            slack = None
            if con.relation != EQ:
                slack = ncols
                row[slack] = Fraction(1 if con.relation == LE else -1)
                ncols += 1
            sign = -1 if b < 0 else 1
            if sign < 0:
                row = {j: -v for j, v in row.items()}
                b = -b
            rows.append(row)
            rhs.append(b)
            slack_of_row.append(slack)
            self.row_sign.append(sign)
        for j in range(n):
            if lp.upper[j] is not None:
                width = lp.upper[j] - lp.lower[j]
                if width < 0:
                    raise ValueError(f"variable {lp.names[j]!r} has empty bounds")
                rows.append({j: Fraction(1), ncols: Fraction(1)})
                rhs.append(width)
                slack_of_row.append(ncols)
                self.row_sign.append(1)
                ncols += 1
        self.num_structural = n
        self.num_columns = ncols
        self.rows = rows
        self.rhs = rhs
        self.slack_of_row = slack_of_row
        self.cost = [Fraction(0)] * ncols
        for j, v in lp.objective.items():
            self.cost[j] = v
        self.offset = sum((v * lp.lower[j] for j, v in lp.objective.items()), Fraction(0))
        self.lower = lp.lower
        m = len(rows)
        self.A = np.zeros((m, ncols))
        for i, row in enumerate(rows):
            for j, v in row.items():
                self.A[i, j] = float(v)
        self.b = np.array([float(v) for v in rhs])
        self.c = np.array([float(v) for v in self.cost])


def _bland_simplex(A, b, c, basis, allowed, max_iter):
    """Revised simplex from a feasible basis. Returns (status, basis, iters)."""
    m, n = A.shape
    basis = list(basis)
    for it in range(max_iter):
        B = A[:, basis]
        try:
            xb = np.linalg.solve(B, b)
            y = np.linalg.solve(B.T, c[basis])
        except np.linalg.LinAlgError:
            return "numerical", basis, it
        reduced = c - A.T @ y
        in_basis = np.zeros(n, dtype=bool)
        in_basis[basis] = True
        cand = np.flatnonzero((reduced < -FEAS_TOL) & allowed & ~in_basis)
        if cand.size == 0:
            return "optimal", basis, it
        enter = int(cand[0])
        d = np.linalg.solve(B, A[:, enter])
        pos = np.flatnonzero(d > FEAS_TOL)
        if pos.size == 0:
            return "unbounded", basis, it
        ratios = np.maximum(xb[pos], 0.0) / d[pos]
        best = ratios.min()
        ties = pos[ratios <= best + FEAS_TOL * max(1.0, best)]
        leave_row = min(ties, key=lambda r: basis[r])
        basis[leave_row] = enter
    return "numerical", basis, max_iter


def _solve_simplex(lp: LinearProgram, max_iter: int) -> LpSolution:
    sf = StandardForm(lp)
    m, n = sf.A.shape
    if m == 0:
        if any(v < 0 for v in sf.c):
            return LpSolution("unbounded", method="simplex")
        z = np.zeros(n)
        return _finish(lp, sf, z, (), np.zeros(0), 0, "simplex")
    # Phase one: artificial columns n .. n+m-1, except where a slack already
    # supplies an identity column.
    A1 = np.hstack([sf.A, np.eye(m)])
    c1 = np.concatenate([np.zeros(n), np.ones(m)])
    basis = []
    for i in range(m):
        s = sf.slack_of_row[i]
        basis.append(s if s is not None and sf.A[i, s] == 1.0 else n + i)
    allowed = np.ones(n + m, dtype=bool)
    status, basis, it1 = _bland_simplex(A1, sf.b, c1, basis, allowed, max_iter)
    if status != "optimal":
        return LpSolution("numerical", iterations=it1, method="simplex")
    xb = np.linalg.solve(A1[:, basis], sf.b)
    if float(c1[basis] @ xb) > FEAS_TOL * max(1.0, float(np.abs(sf.b).max())):
        return LpSolution("infeasible", iterations=it1, method="simplex")
    # Drive zero-level artificials out of the basis where possible; any that
    # remain sit on redundant rows and can never become non-zero.
    for r in range(m):
        if basis[r] < n:
            continue
        B = A1[:, basis]
        row = np.linalg.solve(B.T, np.eye(m)[r]) @ sf.A
        in_basis = set(basis)
        cols = [j for j in np.flatnonzero(np.abs(row) > 1e-7) if j not in in_basis]
        if cols:
            basis[r] = int(cols[0])
    c2 = np.concatenate([sf.c, np.zeros(m)])
    allowed = np.concatenate([np.ones(n, dtype=bool), np.zeros(m, dtype=bool)])
    status, basis, it2 = _bland_simplex(A1, sf.b, c2, basis, allowed, max_iter)
    if status != "optimal":
        return LpSolution(status, iterations=it1 + it2, method="simplex")
    B = A1[:, basis]
    z = np.zeros(n + m)
    z[basis] = np.linalg.solve(B, sf.b)
    y = np.linalg.solve(B.T, c2[basis])
    return _finish(lp, sf, z[:n], tuple(basis), y, it1 + it2, "simplex")


def _finish(lp, sf, z, basis, y, iters, method) -> LpSolution:
    x = z[: sf.num_structural] + np.array([float(v) for v in sf.lower])
    # Undo the row scaling to report multipliers on the original rows.
    sign = np.array(sf.row_sign, dtype=float)
    y_orig = y * sign if y.size else y
    dual_bound = float(y @ sf.b) + float(sf.offset) if y.size else float(sf.offset)
    return LpSolution(
        "optimal",
        objective=lp.objective_value(x),
        x=x,
        duals=y_orig[: sf.constraint_rows] if y.size else np.zeros(0),
        dual_bound=dual_bound,
        max_violation=lp.violation(x),
        iterations=iters,
        basis=basis,
        method=method,
    )


def solve_arrays(arr: LpArrays, lower=None, upper=None) -> LpSolution:
    """Solve the matrix form with HiGHS, optionally overriding variable bounds."""
    lo = arr.lower if lower is None else lower
    hi = arr.upper if upper is None else upper
    bounds = np.column_stack([lo, np.where(np.isinf(hi), None, hi)])
    res = linprog(
        arr.c,
        A_ub=arr.a_ub if arr.a_ub.shape[0] else None,
        b_ub=arr.b_ub if arr.a_ub.shape[0] else None,
        A_eq=arr.a_eq if arr.a_eq.shape[0] else None,
        b_eq=arr.b_eq if arr.a_eq.shape[0] else None,
        bounds=bounds,
        method="highs",
        options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10},
    )
    if res.status == 2:
        return LpSolution("infeasible", method="highs")
    if res.status == 3:
        return LpSolution("unbounded", method="highs")
    if res.status != 0:
        return LpSolution("numerical", method="highs")
    dual_bound = 0.0
    if arr.a_eq.shape[0]:
        dual_bound += float(res.eqlin.marginals @ arr.b_eq)
    if arr.a_ub.shape[0]:
        dual_bound += float(res.ineqlin.marginals @ arr.b_ub)
    finite_lo = np.where(np.isfinite(lo), lo, 0.0)
    finite_hi = np.where(np.isfinite(hi), hi, 0.0)
    dual_bound += float(res.lower.marginals @ finite_lo) + float(res.upper.marginals @ finite_hi)
    duals = np.zeros(len(arr.eq_rows) + len(arr.ub_rows))
    if arr.eq_rows:
        duals[arr.eq_rows] = res.eqlin.marginals
    for (i, sign), v in zip(arr.ub_rows, res.ineqlin.marginals if arr.ub_rows else ()):
        duals[i] = sign * v
    return LpSolution(
        "optimal",
        objective=float(res.fun),
        x=np.asarray(res.x),
        duals=duals,
        dual_bound=dual_bound,
        iterations=int(res.nit),
        method="highs",
    )


def solve_lp(program: LinearProgram, method: str = "simplex", max_iter: int = 50_000) -> LpSolution:
    """Solve ``program`` to optimality or classify it as infeasible/unbounded."""
    if method == "simplex":
        return _solve_simplex(program, max_iter)
    if method == "highs":
        arr = program.arrays()
        sol = solve_arrays(arr)
        if sol.optimal:
            sol.max_violation = program.violation(sol.x)
        return sol
    raise ValueError(f"unknown LP method {method!r}")


def _fraction_solve(B: list[list[Fraction]], b: list) -> list:
    """Gauss-Jordan elimination over the rationals; ``B`` must be square.

    ``b`` is either a vector or a list of rows (one row per equation) for
    several right-hand sides at once.
    """
    m = len(b)
    multi = bool(b) and isinstance(b[0], list)
    M = [row[:] + (b[i][:] if multi else [b[i]]) for i, row in enumerate(B)]
    for col in range(m):
        piv = next((r for r in range(col, m) if M[r][col] != 0), None)
        if piv is None:
            raise ZeroDivisionError("singular basis")
        M[col], M[piv] = M[piv], M[col]
        inv = 1 / M[col][col]
        M[col] = [v * inv for v in M[col]]
        prow = M[col]
        for r in range(m):
            f = M[r][col]
            if r != col and f != 0:
                M[r] = [a - f * p if p else a for a, p in zip(M[r], prow)]
    if multi:
        return [M[r][m:] for r in range(m)]
    return [M[r][m] for r in range(m)]


def exact_basic_solution(program: LinearProgram, basis: Sequence[int]) -> list[Fraction]:
    """Rational values of the structural variables for a simplex ``basis``.

    The basis indexes the standard form columns, artificial columns
    included (an artificial left on a redundant row is simply dropped
    together with its row).
    """
    sf = StandardForm(program)
    m = len(sf.rows)
    n = sf.num_columns
    keep = [r for r in range(m) if basis[r] < n]
    cols = [basis[r] for r in keep]
    # A basis column set restricted to non-redundant rows: select the rows on
    # which the structural part of the basis has full rank.
    dense = [[row.get(j, Fraction(0)) for j in cols] for row in sf.rows]
    rows = _independent_rows(dense, len(cols))
    B = [dense[r] for r in rows]
    b = [sf.rhs[r] for r in rows]
    zb = _fraction_solve(B, b)
    z = [Fraction(0)] * n
    for j, v in zip(cols, zb):
        z[j] = v
    return [z[j] + program.lower[j] for j in range(sf.num_structural)]


def _independent_rows(dense: list[list[Fraction]], rank: int) -> list[int]:
    chosen, reduced = [], []
    for r, row in enumerate(dense):
        v = row[:]
        for piv_col, basis_row in reduced:
            if v[piv_col] != 0:
                f = v[piv_col] / basis_row[piv_col]
                v = [a - f * b for a, b in zip(v, basis_row)]
        nz = next((j for j, a in enumerate(v) if a != 0), None)
        if nz is not None:
            chosen.append(r)
            reduced.append((nz, v))
            if len(chosen) == rank:
                break
    if len(chosen) != rank:
        raise ZeroDivisionError("basis columns are linearly dependent")
    return chosen


_NAME_OK = re.compile(r"[^A-Za-z0-9_.]")


def _lp_name(name: str, j: int) -> str:
    clean = _NAME_OK.sub("_", name) or f"x{j}"
    if clean[0].isdigit() or clean[0] in ".eE":
        clean = "v" + clean
    return clean


def _term(coef: Fraction, name: str, first: bool) -> str:
    val = float(coef)
    sign = "-" if val < 0 else ("" if first else "+")
    mag = repr(abs(val))
    return f"{sign} {mag} {name}" if not first or sign else f"{mag} {name}"


def write_lp_format(program: LinearProgram, title: str = "") -> str:
    """Render ``program`` in the CPLEX LP text format."""
    names = []
    seen = set()
    for j, raw in enumerate(program.names):
        nm = _lp_name(raw, j)
        while nm in seen:
            nm += "_"
        seen.add(nm)
        names.append(nm)
    out = []
    if title:
        out.append(f"\\ {title}")
    out.append("Minimize")
    obj = [_term(v, names[j], i == 0) for i, (j, v) in enumerate(sorted(program.objective.items()))]
    out.append(" obj: " + (" ".join(obj) if obj else "0 " + names[0]))
    out.append("Subject To")
    for i, con in enumerate(program.constraints):
        terms = [_term(v, names[j], k == 0) for k, (j, v) in enumerate(sorted(con.coeffs.items()))]
        if not terms:
            continue
        out.append(f" c{i}: {' '.join(terms)} {con.relation} {float(con.rhs)!r}")
    out.append("Bounds")
    for j, nm in enumerate(names):
        lo, hi = program.lower[j], program.upper[j]
        if hi is None:
            if lo != 0:
                out.append(f" {nm} >= {float(lo)!r}")
        else:
            out.append(f" {float(lo)!r} <= {nm} <= {float(hi)!r}")
    out.append("End")
    return "\n".join(out) + "\n"
