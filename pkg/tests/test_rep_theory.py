import math

import pytest

from symcomb.rep_theory import (ChainSpec, Leg, Task, branch, build_bratteli, casimir_value,
                                chain_for_task, enumerate_paths, weyl_dim)


def test_branch_defining_adds_a_box():
    assert branch((1, 0), Leg.DEF, 2) == [(2, 0), (1, 1)]
    assert branch((1, 1), Leg.DEF, 2) == [(2, 1)]


def test_branch_conjugate_removes_a_box():
    assert branch((1, 0), Leg.CONJ, 2) == [(1, -1), (0, 0)]
    assert branch((0, 0, 0), Leg.CONJ, 3) == [(0, 0, -1)]


def test_branch_rejects_bad_label():
    with pytest.raises(ValueError):
        branch((0, 1), Leg.DEF, 2)
    with pytest.raises(ValueError):
        branch((1, 0), Leg.DEF, 3)


@pytest.mark.parametrize("lam,dim", [((0, 0), 1), ((1, 0), 2), ((2, 0), 3), ((1, 1), 1),
                                     ((1, 0, 0), 3), ((2, 1, 0), 8), ((1, 0, -1), 8),
                                     ((0, 0, -1), 3), ((3, 0, 0, 0), 20)])
def test_weyl_dim(lam, dim):
    assert weyl_dim(lam) == dim


def test_weyl_dim_shift_invariant():
    assert weyl_dim((3, 1, 0)) == weyl_dim((2, 0, -1))


def test_casimir_of_defining():
    # sum_ab E_ab E_ba on C^d is d * identity
    for d in (2, 3, 4):
        assert casimir_value((1,) + (0,) * (d - 1)) == d


def _syt(shape):
    n = sum(shape)
    prod = 1
    for i, r in enumerate(shape):
        for j in range(r):
            arm = r - j - 1
            leg = sum(1 for rr in shape[i + 1:] if rr > j)
            prod *= arm + leg + 1
    return math.factorial(n) // prod


def test_path_counts_are_standard_tableaux():
    B = build_bratteli(ChainSpec(3, (Leg.DEF,) * 4))
    for lam in B.levels[4]:
        assert B.npaths(4, lam) == _syt([x for x in lam if x > 0])


def test_dimension_count_at_every_level():
    for legs in [(Leg.DEF,) * 4, (Leg.DEF, Leg.DEF, Leg.CONJ), (Leg.CONJ, Leg.DEF, Leg.DEF)]:
        B = build_bratteli(ChainSpec(2, legs))
        for k in range(len(legs) + 1):
            total = sum(B.npaths(k, lam) * weyl_dim(lam) for lam in B.levels[k])
            assert total == 2 ** k


def test_paths_are_ordered_and_indexed():
    B = build_bratteli(ChainSpec(2, (Leg.DEF,) * 3))
    P = enumerate_paths(B, (2, 1))
    assert len(P) == 2
    assert [B.path_index(t) for t in P] == [0, 1]
    assert all(t[0] == (0, 0) and t[-1] == (2, 1) for t in P)


def test_chain_for_task_legs():
    BL, BR = chain_for_task(Task.TRANSPOSE, 2, 2)
    assert BL.legs == (Leg.DEF, Leg.DEF, Leg.CONJ)
    assert BR.legs == (Leg.CONJ, Leg.DEF, Leg.DEF)
    BL, BR = chain_for_task(Task.INVERT, 3, 2)
    assert BL.legs == BR.legs == (Leg.DEF,) * 3


def test_chain_for_task_rejects_small():
    with pytest.raises(ValueError):
        chain_for_task(Task.INVERT, 1, 2)
    with pytest.raises(ValueError):
        chain_for_task(Task.INVERT, 2, 0)
