import random
from fractions import Fraction

import pytest

from hetcdc.joint import (
    JointSolveReport,
    exhaustive_optimum,
    relaxation_lower_bound,
    solve_joint,
    two_file_group_search,
)
from hetcdc.placement import round_robin_placement
from hetcdc.shuffle_opt import CCDC, CDC, VARIANTS, exact_placement_expected_load
from hetcdc.system import SystemConfig, zipf_popularity

from _util import random_config


def test_full_replication_example():
    cfg = SystemConfig([1, 1], ["1/2", "1/2"], [1.0])
    r = solve_joint(cfg)
    assert r.placement.assignment == (0b11,) and r.expected_load == 0 and r.optimal
    assert relaxation_lower_bound(cfg) == pytest.approx(0, abs=1e-9)


@pytest.mark.parametrize("variant", VARIANTS)
def test_small_examples_match_exhaustive(variant):
    cases = [
        SystemConfig([1, 1], ["1/2", "1/2"], [0.5, 0.5]),
        SystemConfig([2, 2, 2], ["1/3"] * 3, [0.5] * 3),
    ]
    for cfg in cases:
        r = solve_joint(cfg, variant)
        _, best = exhaustive_optimum(cfg, variant)
        assert r.optimal and r.expected_load == best
        assert relaxation_lower_bound(cfg, variant) <= float(best) + 1e-9


def test_random_small_configs_match_exhaustive():
    rng = random.Random(4)
    for _ in range(8):
        cfg = random_config(rng, 3, rng.randint(2, 4))
        for v in VARIANTS:
            r = solve_joint(cfg, v)
            placement, best = exhaustive_optimum(cfg, v)
            assert r.expected_load == best
            assert exact_placement_expected_load(r.placement, cfg, v) == best


def test_sandwich_and_dominance():
    rng = random.Random(8)
    for _ in range(6):
        cfg = random_config(rng, rng.choice([3, 4]), rng.randint(2, 5))
        loads = {}
        for v in VARIANTS:
            lb = relaxation_lower_bound(cfg, v)
            opt = solve_joint(cfg, v).expected_load
            tfg = two_file_group_search(cfg, v).expected_load
            rr = exact_placement_expected_load(round_robin_placement(cfg), cfg, v)
            assert lb <= float(opt) + 1e-9
            assert opt <= tfg <= rr
            loads[v] = (opt, tfg, rr)
        assert all(c <= d for c, d in zip(loads[CCDC], loads[CDC]))


def test_lower_bound_monotone_in_capacity():
    cfg = SystemConfig([1, 2, 1], ["1/4", "1/4", "1/2"], list(zipf_popularity(4, 0.8)))
    more = cfg.with_mapping_loads([2, 3, 2])
    for v in VARIANTS:
        assert relaxation_lower_bound(more, v) <= relaxation_lower_bound(cfg, v) + 1e-9


def test_two_file_group_search():
    cfg = SystemConfig([1, 1], ["1/2", "1/2"], [0.7])
    assert two_file_group_search(cfg).split == 1
    cfg = SystemConfig([2, 3, 3], ["1/6", "1/3", "1/2"], list(zipf_popularity(4, 0.0)))
    res = two_file_group_search(cfg)
    assert res.expected_load == exact_placement_expected_load(res.placement, cfg, CDC)
    assert res.expected_load == min(res.loads_by_split.values())
    assert res.split == min(n for n, v in res.loads_by_split.items() if v == res.expected_load)
    assert res.expected_load >= solve_joint(cfg).expected_load


def test_budget_exhaustion_returns_incumbent(four_worker):
    cfg = four_worker(6)
    r = solve_joint(cfg, max_nodes=5)
    assert not r.optimal
    assert r.expected_load == exact_placement_expected_load(r.placement, cfg, CDC)
    assert r.expected_load <= two_file_group_search(cfg).expected_load


def test_deterministic(four_worker):
    cfg = four_worker(5)
    a, b = solve_joint(cfg), solve_joint(cfg)
    assert (a.placement, a.expected_load, a.nodes) == (b.placement, b.expected_load, b.nodes)
    assert a.lower_bound <= float(a.expected_load) + 1e-9


def test_report_dump(four_worker):
    r = solve_joint(four_worker(4), CCDC)
    assert isinstance(r, JointSolveReport)
    text = r.dumps()
    assert "expected_load" in text and "ccdc" in text
