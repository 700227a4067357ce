import numpy as np
import pytest
from hypothesis import given, strategies as st

from hetcdc.placement import (
    InfeasibleSplit,
    Placement,
    PlacementError,
    indicators_to_placement,
    placement_to_indicators,
    round_robin_placement,
    subset_file_counts,
    two_file_group_placement,
)
from hetcdc.system import SystemConfig, members


def cfg(M, N, W=None):
    K = len(M)
    W = W or [f"1/{K}"] * K
    return SystemConfig(M, W, [1.0 / (n + 1) for n in range(N)])


def test_two_file_group_examples():
    assert two_file_group_placement(cfg([1, 1], 2), 1).assignment == (0b10, 0b01)
    assert two_file_group_placement(cfg([2, 2], 2), 2).assignment == (0b11, 0b11)
    full = cfg([3, 3, 3], 3)
    assert two_file_group_placement(full, 3).assignment == (0b111,) * 3


def test_two_file_group_rejects_bad_split():
    with pytest.raises(ValueError):
        two_file_group_placement(cfg([1, 1], 2), 0)
    with pytest.raises(ValueError):
        two_file_group_placement(cfg([1, 1], 2), 3)


def test_round_robin_examples():
    assert round_robin_placement(cfg([1, 1, 1, 1], 4)).assignment == (1, 2, 4, 8)
    assert round_robin_placement(cfg([2, 2], 3)).assignment == (1, 2, 1)
    assert round_robin_placement(cfg([1, 2], 3)).assignment == (1, 2, 2)


def test_subset_file_counts_examples():
    p = Placement((0b011, 0b100), 3)
    a = subset_file_counts(p, 0b01)
    assert a[0b011] == 1 and a.sum() == 1
    assert subset_file_counts(p, 0b11).sum() == 2


def test_subset_counts_brute_force_on_two_file_group(four_worker):
    c = four_worker(6)
    p = two_file_group_placement(c, 3)
    t = placement_to_indicators(p)
    rng = np.random.default_rng(1)
    for d in rng.integers(1, 1 << 6, size=20):
        d = int(d)
        a = subset_file_counts(p, d)
        want = [sum(t[n, s] for n in members(d)) for s in range(16)]
        assert list(a) == want


def test_indicators():
    p = Placement((0b011, 0b100), 3)
    t = placement_to_indicators(p)
    assert t[0, 0b011] == 1 and t[0].sum() == 1
    assert indicators_to_placement(t, 3) == p
    with pytest.raises(PlacementError):
        indicators_to_placement(np.zeros((2, 8)), 3)


@given(st.integers(2, 4), st.integers(1, 8), st.data())
def test_schemes_satisfy_invariants(K, N, data):
    M = data.draw(st.lists(st.integers(1, N), min_size=K, max_size=K))
    if sum(M) < N:
        return
    c = cfg(M, N)
    placements = [round_robin_placement(c)]
    for n1 in range(1, N + 1):
        try:
            placements.append(two_file_group_placement(c, n1))
        except InfeasibleSplit:
            pass
    for p in placements:
        p.validate(c)
        assert all(s != 0 for s in p.assignment)
        assert (placement_to_indicators(p).sum(axis=1) == 1).all()


def test_validation_and_io():
    c = cfg([1, 1], 2)
    with pytest.raises(PlacementError):
        Placement((3, 3), 2).validate(c)
    with pytest.raises(PlacementError):
        Placement((0, 1), 2)
    p = Placement((2, 1), 2)
    assert Placement.loads(p.dumps(), 2) == p
    assert p.stored_counts() == [1, 1]
    assert p.files_at(1) == [0]
