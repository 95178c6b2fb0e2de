import numpy as np
import pytest

from symcomb.choi_verify import ScaleError
from symcomb.circuit_synth import (alternating_chain, build_comb_vector, check_covariant_comb,
                                   choi_from_covariant_blocks, covariant_constraint_residual,
                                   covariant_depolarizing, isometries_from_coefficients, psd_factor,
                                   random_covariant_blocks, verify_theorem1, verify_theorem_covariant)
from symcomb.comb_sdp import (assemble_sdp, blocks_from_top, comb_structure, depolarizing_top,
                              random_feasible_top, top_vector_from_blocks)
from symcomb.param_comb import CombModel, param_shape, random_param_comb
from symcomb.rep_theory import Leg
from symcomb.sdp_solver import solve


def test_psd_factor_and_negative_block():
    rng = np.random.default_rng(0)
    G = rng.standard_normal((4, 2))
    Y = psd_factor(G @ G.T)
    assert Y.shape[1] == 2 and np.allclose(Y @ Y.T, G @ G.T)
    with pytest.raises(ValueError):
        psd_factor(np.diag([1.0, -1e-3]))


def test_depolarizing_isometries():
    S = comb_structure("invert", 2, 1)
    blocks = blocks_from_top(S, depolarizing_top(S))
    stages = isometries_from_coefficients(blocks, S.BL, S.BR)
    assert max(s.isometry_residual for s in stages) <= 1e-10
    res, info = verify_theorem1(blocks, return_details=True)
    assert res <= 1e-9
    assert abs(info["norm2"] - 2 ** 2) <= 1e-8


@pytest.mark.parametrize("task,d,n", [("invert", 2, 1), ("transpose", 2, 2), ("invert", 3, 1)])
def test_sdp_optimal_blocks_reconstruct(task, d, n):
    S = comb_structure(task, d, n)
    sol = solve(assemble_sdp(S))
    blocks = blocks_from_top(S, top_vector_from_blocks(S, sol.X))
    assert verify_theorem1(blocks) <= 1e-8


def test_rank_one_blocks_give_unit_memory(rng):
    shape = param_shape("transpose", 2, 2)
    model = CombModel(shape)
    W = random_param_comb(shape, rng).W
    # complex rank one -> real part has rank <= 2; reconstruction stays exact
    blocks = model.coefficient_blocks(W)
    res, info = verify_theorem1(blocks, return_details=True)
    assert res <= 1e-8
    assert max(info["memory"]) <= 2


def test_theorem1_residual_grows_with_perturbation():
    S = comb_structure("invert", 2, 1)
    x = random_feasible_top(S, np.random.default_rng(3), mix=0.5)
    base = verify_theorem1(blocks_from_top(S, x))
    assert base <= 1e-9
    b = S.top.where[((2, 0), (2, 0))]
    r = []
    for eps in (1e-4, 1e-3):
        y = x.copy()
        y[S.top.offsets[b]] += eps
        r.append(verify_theorem1(blocks_from_top(S, y)))
    assert r[0] > 1e-6 and 5 < r[1] / r[0] < 20


def test_comb_vector_guard():
    S = comb_structure("invert", 3, 3)
    blocks = blocks_from_top(S, depolarizing_top(S))
    stages = isometries_from_coefficients(blocks, S.BL, S.BR)
    with pytest.raises(ScaleError):
        build_comb_vector(stages, 3, 3)


@pytest.mark.parametrize("legs", [(Leg.DEF, Leg.DEF), (Leg.DEF, Leg.CONJ)])
@pytest.mark.parametrize("n", [1, 2])
def test_covariant_reconstruction(legs, n, rng):
    B = alternating_chain(2, n, inp=legs[0], output=legs[1])
    for cb in (covariant_depolarizing(B), random_covariant_blocks(B, rng)):
        assert covariant_constraint_residual(cb) <= 1e-12
        C = choi_from_covariant_blocks(cb)
        assert check_covariant_comb(C, 2, n) <= 1e-12
        res, info = verify_theorem_covariant(cb, return_details=True)
        assert res <= 1e-8
        assert abs(info["norm2"] - 2 ** n) <= 1e-8


def test_covariant_depolarizing_is_identity():
    B = alternating_chain(2, 1)
    C = choi_from_covariant_blocks(covariant_depolarizing(B))
    assert np.allclose(C, np.eye(4) / 2)


def test_covariant_residual_scales_linearly(rng):
    B = alternating_chain(2, 1)
    cb = random_covariant_blocks(B, rng, mix=0.3)
    lam = next(l for l, M in cb.top.items() if M.size)
    out = []
    for eps in (1e-5, 1e-4):
        top = {k: v.copy() for k, v in cb.top.items()}
        top[lam][0, 0] += eps
        pert = type(cb)(cb.B, cb.levels[:-1] + [top])
        out.append(verify_theorem_covariant(pert))
    assert 5 < out[1] / out[0] < 20
