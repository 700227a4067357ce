import itertools
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hetcdc.lp import EQ, GE, LE, LinearProgram, exact_basic_solution, solve_lp, write_lp_format


def small(objective, rows, upper=None):
    lp = LinearProgram()
    for j, c in enumerate(objective):
        lp.add_variable(f"x{j}", upper=None if upper is None else upper[j], cost=c)
    for coeffs, rel, rhs in rows:
        lp.add_constraint(dict(enumerate(coeffs)), rel, rhs)
    return lp


def test_lower_bound_example():
    sol = solve_lp(small([1], [([1], GE, 3)]))
    assert sol.optimal and sol.objective == pytest.approx(3)


def test_degenerate_face():
    sol = solve_lp(small([1, 1], [([1, 1], EQ, 1)]))
    assert sol.optimal and sol.objective == pytest.approx(1)
    assert sol.max_violation <= 1e-9


def vertex_optimum(c, A, b):
    """Brute-force minimum over basic feasible solutions of {A x <= b, x >= 0}."""
    n, m = len(c), len(A)
    G = np.vstack([np.asarray(A, float), -np.eye(n)])
    h = np.concatenate([b, np.zeros(n)])
    best = None
    for rows in itertools.combinations(range(m + n), n):
        sub = G[list(rows)]
        if abs(np.linalg.det(sub)) < 1e-12:
            continue
        x = np.linalg.solve(sub, h[list(rows)])
        if np.all(G @ x <= h + 1e-9):
            v = float(np.dot(c, x))
            best = v if best is None else min(best, v)
    return best


def test_three_variable_vertex_enumeration():
    c = [-3, -2, -4]
    A = [[1, 1, 2], [2, 0, 3], [2, 1, 3]]
    b = [4, 5, 7]
    sol = solve_lp(small(c, [(row, LE, r) for row, r in zip(A, b)]))
    assert sol.optimal
    assert sol.objective == pytest.approx(vertex_optimum(c, A, b), rel=1e-7)


def test_infeasible_and_unbounded():
    assert solve_lp(small([1], [([1], LE, -1)])).status == "infeasible"
    assert solve_lp(small([-1], [([1], GE, 1)])).status == "unbounded"
    assert solve_lp(small([1], [([1], LE, -1)]), "highs").status == "infeasible"


def test_upper_bounds():
    sol = solve_lp(small([-1, -1], [([1, 2], LE, 4)], upper=[1, None]))
    assert sol.objective == pytest.approx(-2.5)


@st.composite
def programs(draw):
    n = draw(st.integers(1, 4))
    m = draw(st.integers(1, 4))
    ints = st.integers(-3, 3)
    c = draw(st.lists(ints, min_size=n, max_size=n))
    rows = []
    for _ in range(m):
        coeffs = draw(st.lists(ints, min_size=n, max_size=n))
        rows.append((coeffs, draw(st.sampled_from([LE, GE, EQ])), draw(st.integers(-4, 6))))
    # a box keeps most instances bounded
    return small(c, rows, upper=[5] * n)


@settings(max_examples=120, deadline=None)
@given(programs())
def test_simplex_agrees_with_highs(lp):
    ours, ref = solve_lp(lp), solve_lp(lp, "highs")
    assert ours.status == ref.status
    if ours.optimal:
        assert ours.max_violation <= 1e-9
        assert ours.objective == pytest.approx(ref.objective, rel=1e-7, abs=1e-9)
        x = exact_basic_solution(lp, ours.basis)
        assert lp.check_exact(x)
        exact = sum((v * x[j] for j, v in lp.objective.items()), Fraction(0))
        assert float(exact) == pytest.approx(ours.objective, abs=1e-9)


def test_duplicate_and_undeclared():
    lp = LinearProgram()
    lp.add_variable("x")
    with pytest.raises(ValueError):
        lp.add_variable("x")
    with pytest.raises(ValueError):
        lp.add_constraint({3: 1}, LE, 1)
    with pytest.raises(ValueError):
        lp.add_constraint({0: 1}, "<>", 1)


def test_lp_format_round_trip(tmp_path):
    highspy = pytest.importorskip("highspy")
    lp = small([1, 2, -1], [([1, 1, 1], LE, 4), ([1, -1, 0], GE, -1), ([0, 1, 1], EQ, 2)], upper=[3, None, 2])
    path = tmp_path / "model.lp"
    path.write_text(write_lp_format(lp, "round trip"))
    h = highspy.Highs()
    h.setOptionValue("output_flag", False)
    assert h.readModel(str(path)) == highspy.HighsStatus.kOk
    h.run()
    assert h.getInfo().objective_function_value == pytest.approx(solve_lp(lp).objective, abs=1e-6)
