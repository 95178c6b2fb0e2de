import numpy as np
import pytest

from symcomb.choi_verify import check_comb_conditions, choi_from_blocks, fidelity_full
from symcomb.comb_sdp import (assemble_sdp, blocks_from_top, comb_constraints, comb_residual, comb_structure,
                              depolarizing_top, n_variables, objective_coefficients, objective_vector,
                              random_feasible_top, top_vector_from_blocks)
from symcomb.sdp_solver import solve

CELLS = [("invert", 2, 1), ("transpose", 2, 1), ("invert", 2, 2), ("transpose", 2, 2),
         ("invert", 3, 1), ("transpose", 3, 1)]


@pytest.mark.parametrize("task,d,n", CELLS)
def test_depolarizing_comb_is_feasible(task, d, n):
    S = comb_structure(task, d, n)
    x = depolarizing_top(S)
    assert comb_residual(S, x) <= 1e-12
    C = choi_from_blocks(blocks_from_top(S, x), S.BL, S.BR)
    assert np.abs(C.data - np.eye(len(C.data)) / d ** (n + 1)).max() <= 1e-12
    # discard-and-reprepare: fidelity 1/d^2
    assert abs(objective_vector(S) @ x - 1 / d ** 2) <= 1e-12


def test_normalization_is_a_single_row():
    S = comb_structure("invert", 2, 2)
    A, b = comb_constraints(S)
    assert b.sum() == 1.0 and b[-1] == 1.0
    assert np.count_nonzero(b) == 1


def test_constraints_from_diagrams_match_structure():
    S = comb_structure("transpose", 2, 2)
    A1, b1 = comb_constraints(S)
    A2, b2 = comb_constraints(S.BL, S.BR, 2, 2)
    assert abs(A1 - A2).max() == 0 and np.array_equal(b1, b2)


@pytest.mark.parametrize("task,d,n", CELLS[:5])
def test_random_feasible_points_transfer_to_full_space(task, d, n):
    S = comb_structure(task, d, n)
    rng = np.random.default_rng(7)
    for _ in range(3):
        x = random_feasible_top(S, rng)
        assert comb_residual(S, x) <= 1e-10
        C = choi_from_blocks(blocks_from_top(S, x), S.BL, S.BR)
        assert check_comb_conditions(C).max_residual <= 1e-8
        assert abs(fidelity_full(C, task) - objective_vector(S) @ x) <= 1e-9


def test_objective_coefficients_agree_with_vector():
    S = comb_structure("transpose", 2, 2)
    oc = objective_coefficients("transpose", 2, 2)
    x = random_feasible_top(S, np.random.default_rng(3))
    assert abs(oc.value(blocks_from_top(S, x).top) - objective_vector(S) @ x) <= 1e-12


def test_objective_vanishes_off_diagonal_pairs():
    S = comb_structure("invert", 2, 3)
    w = objective_vector(S)
    for b, (lam, mu) in enumerate(S.top.pairs):
        n = S.top.block_dim(b)
        if lam != mu:
            assert not np.any(w[S.top.offsets[b]:S.top.offsets[b] + n * n])


def test_block_sizes():
    P = assemble_sdp(comb_structure("invert", 2, 1))
    assert set(P.block_sizes) == {1}
    P = assemble_sdp(comb_structure("invert", 2, 4))
    assert max(P.block_sizes) <= 25
    assert n_variables(comb_structure("invert", 2, 4)) > 0


def test_assembled_problem_keeps_feasible_points():
    S = comb_structure("transpose", 2, 2)
    P = assemble_sdp(S)
    x = random_feasible_top(S, np.random.default_rng(0))
    X = [x[S.top.offsets[b]:S.top.offsets[b] + n * n].reshape(n, n) for b, n in enumerate(P.block_sizes)]
    assert np.abs(P.op(X) - P.b).max() <= 1e-12
    assert np.allclose(top_vector_from_blocks(S, X), x)


def test_optimum_monotone_in_n():
    vals = [solve(assemble_sdp(comb_structure("invert", 3, n))).pobj for n in (1, 2, 3)]
    assert vals[0] <= vals[1] + 1e-7 <= vals[2] + 2e-7
