import random
from fractions import Fraction

import pytest

from hetcdc.lp import solve_lp, LinearProgram
from hetcdc.placement import Placement, round_robin_placement, subset_file_counts
from hetcdc.shuffle_opt import (
    CCDC,
    CDC,
    FlowSolver,
    build_ccdc_flow_lp,
    build_cdc_flow_lp,
    count_lp_dimensions,
    constructed_lp_dimensions,
    exact_per_demand_loads,
    exact_placement_expected_load,
    expected_load,
    placement_expected_load,
    shuffle_plan,
)
from hetcdc.system import SystemConfig, members

from _util import random_instance


def uniform(K, N, M=None):
    return SystemConfig(M or [N] * K, [Fraction(1, K)] * K, [0.5] * N)


def lp_optimum(lp: LinearProgram) -> float:
    sol = solve_lp(lp)
    assert sol.optimal
    return sol.objective


def test_two_worker_unicast():
    rng = random.Random(3)
    for _ in range(20):
        N = rng.randint(1, 4)
        cfg = SystemConfig([N, N], ["1/3", "2/3"], [0.5] * N)
        p = Placement(tuple(rng.randrange(1, 4) for _ in range(N)), 2)
        d = rng.randrange(1, 1 << N)
        a = subset_file_counts(p, d)
        want = Fraction(1, 3) * int(a[0b10]) + Fraction(2, 3) * int(a[0b01])
        assert shuffle_plan(p, cfg, d).load == want
        assert lp_optimum(build_cdc_flow_lp(p, cfg, d)) == pytest.approx(float(want))


def test_homogeneous_golden_value():
    cfg = uniform(3, 3, [2, 2, 2])
    p = Placement((0b011, 0b101, 0b110), 3)
    plan = shuffle_plan(p, cfg, 0b111)
    assert plan.load == Fraction(1, 2)
    assert lp_optimum(build_cdc_flow_lp(p, cfg, 0b111)) == pytest.approx(0.5)


def test_full_replication_is_free():
    cfg = uniform(3, 2)
    p = Placement((0b111, 0b111), 3)
    assert shuffle_plan(p, cfg, 0b11).load == 0
    assert shuffle_plan(p, cfg, 0b11).values == {}


def test_ccdc_examples():
    cfg = SystemConfig([2, 2], ["1/2", "1/2"], [0.5, 0.5])
    p = Placement((0b01, 0b01), 2)
    assert shuffle_plan(p, cfg, 0b11, CDC).load == 1
    assert shuffle_plan(p, cfg, 0b11, CCDC).load == Fraction(1, 2)
    # single-file demand: nothing to aggregate
    assert shuffle_plan(p, cfg, 0b01, CCDC).load == shuffle_plan(p, cfg, 0b01, CDC).load
    # counts at most one per subset: identical programs
    q = Placement((0b01, 0b10), 2)
    assert shuffle_plan(q, cfg, 0b11, CCDC).load == shuffle_plan(q, cfg, 0b11, CDC).load


def test_expected_load_examples():
    assert expected_load({1: Fraction(1), 2: Fraction(2), 3: Fraction(3)}, [0.5, 0.5]) == 2
    assert expected_load({1: Fraction(7)}, [0.3]) == 7
    assert expected_load({d: Fraction(5, 3) for d in range(1, 8)}, [0.9, 0.4, 0.2]) == Fraction(5, 3)
    with pytest.raises(KeyError):
        expected_load({1: Fraction(1)}, [0.5, 0.5])


def test_dimension_examples():
    assert count_lp_dimensions(uniform(2, 1)) == (2, 4)
    assert count_lp_dimensions(uniform(3, 1))[0] == 15


@pytest.mark.parametrize("K", [2, 3, 4, 5])
def test_dimensions_match_construction(K):
    for N in (1, 2, 3):
        cfg = uniform(K, N)
        assert count_lp_dimensions(cfg) == constructed_lp_dimensions(cfg)


def test_decomposes_into_monolithic_program():
    rng = random.Random(11)
    for _ in range(6):
        cfg, p, _ = random_instance(rng, (2, 3), (1, 3))
        probs = cfg.exact_demand_probs()
        mono = LinearProgram()
        for d in range(1, 1 << cfg.num_files):
            part = build_cdc_flow_lp(p, cfg, d)
            base = mono.num_variables
            for j, name in enumerate(part.names):
                mono.add_variable(f"{name}_d{d}", cost=probs[d] * part.objective.get(j, 0))
            for con in part.constraints:
                mono.add_constraint({base + j: v for j, v in con.coeffs.items()}, con.relation, con.rhs)
        sol = solve_lp(mono, "highs")
        want = exact_placement_expected_load(p, cfg, CDC)
        assert sol.objective == pytest.approx(float(want), abs=1e-9)


def test_invariants_on_random_instances():
    rng = random.Random(5)
    for _ in range(150):
        cfg, p, d = random_instance(rng)
        K = cfg.num_workers
        W = cfg.reducing_loads
        a = subset_file_counts(p, d)
        cdc = shuffle_plan(p, cfg, d, CDC)
        ccdc = shuffle_plan(p, cfg, d, CCDC)
        # the float simplex agrees with the exact plan
        assert lp_optimum(build_cdc_flow_lp(p, cfg, d)) == pytest.approx(float(cdc.load), abs=1e-9)
        assert lp_optimum(build_ccdc_flow_lp(p, cfg, d)) == pytest.approx(float(ccdc.load), abs=1e-9)
        assert ccdc.load <= cdc.load
        uncoded = sum(W[k] * sum(1 for n in members(d) if not p.assignment[n] >> k & 1) for k in range(K))
        assert cdc.load <= uncoded
        for plan, need in ((cdc, lambda x: x), (ccdc, lambda x: min(x, 1))):
            for k in range(K):
                lhs = sum((W[k] * need(int(a[s & ~(1 << k)])) for s in range(1 << K)
                           if s >> k & 1 and bin(s).count("1") >= 2), Fraction(0))
                rhs = sum((plan.sender_size(j, s) for s in range(1 << K) if s >> k & 1
                           for j in members(s) if j != k), Fraction(0))
                assert lhs == rhs


def test_load_monotone_in_counts():
    solver = FlowSolver([Fraction(1, 8), Fraction(1, 4), Fraction(1, 4), Fraction(3, 8)])
    rng = random.Random(2)
    for _ in range(100):
        a = [0] + [rng.randint(0, 2) for _ in range(15)]
        b = list(a)
        b[rng.randrange(1, 16)] += 1
        assert solver.exact_load(a) <= solver.exact_load(b)


def test_cached_bases_match_fresh_solves():
    W = [Fraction(1, 6), Fraction(1, 3), Fraction(1, 2)]
    warm = FlowSolver(W)
    rng = random.Random(9)
    vectors = [[0] + [rng.randint(0, 3) for _ in range(7)] for _ in range(40)]
    for a in vectors:
        warm.load(a)
    for a in vectors:
        assert warm.exact_load(a) == FlowSolver(W).exact_load(a)


def test_float_and_exact_expected_loads_agree(four_worker):
    cfg = four_worker(5)
    p = round_robin_placement(cfg)
    for v in (CDC, CCDC):
        exact = exact_placement_expected_load(p, cfg, v)
        assert placement_expected_load(p, cfg, v) == pytest.approx(float(exact), rel=1e-9)
        loads = exact_per_demand_loads(p, cfg, v)
        assert len(loads) == 31
