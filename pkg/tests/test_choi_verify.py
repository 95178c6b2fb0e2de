import numpy as np
import pytest

from symcomb.choi_verify import (ChoiMatrix, ScaleError, blocks_from_choi, check_comb_conditions,
                                 check_symmetry, choi_from_blocks, fidelity_full, haar_fidelity_mc,
                                 haar_unitary, omega_full, partial_trace, pointwise_fidelity,
                                 verify_lemma_partial_trace)
from symcomb.comb_sdp import (assemble_sdp, blocks_from_top, comb_structure, depolarizing_top,
                              objective_vector, random_feasible_top, top_vector_from_blocks)
from symcomb.rep_theory import Leg
from symcomb.sdp_solver import solve


def _choi(task, d, n, x=None, seed=0):
    S = comb_structure(task, d, n)
    if x is None:
        x = random_feasible_top(S, np.random.default_rng(seed))
    return S, x, choi_from_blocks(blocks_from_top(S, x), S.BL, S.BR)


def test_haar_unitaries_are_unitary_and_seeded():
    rng = np.random.default_rng(0)
    for d in (2, 3, 5):
        U = haar_unitary(d, rng)
        assert np.abs(U.conj().T @ U - np.eye(d)).max() <= 1e-12
    a = haar_unitary(3, np.random.default_rng(4))
    b = haar_unitary(3, np.random.default_rng(4))
    assert np.array_equal(a, b)


def test_haar_first_moment():
    # E |U_00|^2 = 1/d
    rng = np.random.default_rng(1)
    vals = [abs(haar_unitary(3, rng)[0, 0]) ** 2 for _ in range(4000)]
    assert abs(np.mean(vals) - 1 / 3) <= 4 * np.std(vals) / np.sqrt(4000)


def test_partial_trace_of_product():
    rng = np.random.default_rng(2)
    A, B = rng.standard_normal((2, 2)), rng.standard_normal((2, 2))
    M = np.kron(A, B)
    assert np.allclose(partial_trace(M, 2, 2, [1]), np.trace(B) * A)
    assert np.allclose(partial_trace(M, 2, 2, [0]), np.trace(A) * B)


@pytest.mark.parametrize("task,d,n", [("invert", 2, 1), ("transpose", 2, 2), ("invert", 3, 1)])
def test_block_round_trip(task, d, n):
    S, x, C = _choi(task, d, n)
    back = blocks_from_choi(C, S.BL, S.BR)
    for key, M in blocks_from_top(S, x).top.items():
        assert np.abs(back[key] - M).max() <= 1e-10


def test_depolarizing_comb_conditions():
    S, x, C = _choi("invert", 2, 2, None)
    S = comb_structure("invert", 2, 2)
    C = choi_from_blocks(blocks_from_top(S, depolarizing_top(S)), S.BL, S.BR)
    assert check_comb_conditions(C).max_residual <= 1e-12


def test_comb_condition_detects_perturbation():
    S = comb_structure("invert", 2, 1)
    C = choi_from_blocks(blocks_from_top(S, depolarizing_top(S)), S.BL, S.BR)
    eps = 1e-4
    D = np.zeros_like(C.data)
    D[0, 0], D[-1, -1] = eps, -eps  # traceless, changes a marginal
    rep = check_comb_conditions(ChoiMatrix(C.data + D, C.d, C.legs))
    assert 0.5 * eps <= max(rep.marginal_residuals) <= 2 * eps


def test_rank_one_block_trace():
    S = comb_structure("invert", 2, 1)
    x = np.zeros(S.top.size)
    b = S.top.where[((2, 0), (2, 0))]
    x[S.top.offsets[b]] = 1.0
    C = choi_from_blocks(blocks_from_top(S, x), S.BL, S.BR)
    # Tr(E/d_lam (x) Et/d_mu) = 1 for a diagonal unit pair; rank d_lam d_mu
    assert abs(np.trace(C.data) - 1) <= 1e-12
    assert np.linalg.matrix_rank(C.data, tol=1e-10) == 9


def test_symmetry_detects_asymmetric_perturbation():
    S, x, C = _choi("transpose", 2, 1)
    assert check_symmetry(C, "transpose") <= 1e-9
    D = np.zeros_like(C.data)
    D[1, 2] = D[2, 1] = 1e-3
    assert check_symmetry(ChoiMatrix(C.data + D, C.d, C.legs), "transpose") > 1e-5


def test_scale_guard():
    S = comb_structure("invert", 3, 3)
    with pytest.raises(ScaleError):
        choi_from_blocks(blocks_from_top(S, depolarizing_top(S)), S.BL, S.BR)


@pytest.mark.parametrize("task", ["invert", "transpose"])
def test_full_objective_matches_reduced(task):
    for d, n in [(2, 1), (2, 2), (3, 1)]:
        S, x, C = _choi(task, d, n, seed=d + n)
        assert abs(fidelity_full(C, task) - objective_vector(S) @ x) <= 1e-9


def test_omega_is_psd_with_expected_trace():
    # Tr Omega = (1/d^2) * Tr(twirl |Phi><Phi|) = d^(n+1) / d^2 * ... ; check positivity and Hermiticity
    Om = omega_full("invert", 2, 1)
    assert np.abs(Om - Om.conj().T).max() <= 1e-12
    assert np.linalg.eigvalsh(Om)[0] >= -1e-12


def test_pointwise_fidelity_of_optimal_invert_comb_is_constant():
    S = comb_structure("invert", 2, 1)
    sol = solve(assemble_sdp(S))
    C = choi_from_blocks(blocks_from_top(S, top_vector_from_blocks(S, sol.X)), S.BL, S.BR)
    rng = np.random.default_rng(0)
    vals = [pointwise_fidelity(C, "invert", haar_unitary(2, rng)) for _ in range(20)]
    assert np.ptp(vals) <= 1e-8
    mean, err = haar_fidelity_mc(C, "invert", samples=200, seed=1)
    assert abs(mean - 0.5) <= 3 * err + 1e-8


def test_mc_agrees_with_reduced_on_random_point():
    S, x, C = _choi("transpose", 2, 1, seed=11)
    mean, err = haar_fidelity_mc(C, "transpose", samples=4000, seed=3)
    # symmetric combs have U-independent pointwise fidelity, so err may vanish
    assert abs(mean - objective_vector(S) @ x) <= 3 * err + 1e-12


@pytest.mark.parametrize("legs", [(Leg.DEF,) * 3, (Leg.DEF, Leg.DEF, Leg.CONJ), (Leg.DEF,)])
def test_lemma_partial_trace(legs):
    r = verify_lemma_partial_trace(2, legs)
    assert max(r.values()) <= 1e-10
