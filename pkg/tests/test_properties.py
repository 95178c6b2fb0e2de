"""Property-based checks of the algebraic and feasibility invariants."""
import itertools

import numpy as np
from hypothesis import given, strategies as st

from symcomb.choi_verify import _tensor_action, check_comb_conditions, choi_from_blocks, fidelity_full, haar_unitary
from symcomb.circuit_synth import verify_theorem1
from symcomb.comb_sdp import blocks_from_top, comb_residual, comb_structure, objective_vector, random_feasible_top
from symcomb.matrix_units import REGISTRY, matrix_unit, path_isometry
from symcomb.param_comb import CombModel, param_shape, random_param_comb
from symcomb.rep_theory import ChainSpec, Leg, branch, build_bratteli, weyl_dim

legs_st = st.lists(st.sampled_from([Leg.DEF, Leg.CONJ]), min_size=1, max_size=4)
d_st = st.sampled_from([2, 3])
cell_st = st.sampled_from([("invert", 2, 1), ("transpose", 2, 1), ("invert", 2, 2),
                           ("transpose", 2, 2), ("invert", 3, 1), ("transpose", 3, 1)])


@given(d=d_st, legs=legs_st)
def test_dimensions_add_up_under_branching(d, legs):
    B = build_bratteli(ChainSpec(d, tuple(legs)))
    for k in range(len(legs)):
        for lam in B.levels[k]:
            kids = branch(lam, legs[k], d)
            assert sum(weyl_dim(c) for c in kids) == d * weyl_dim(lam)


@given(d=d_st, legs=legs_st, seed=st.integers(0, 2 ** 16))
def test_matrix_units_commute_with_group(d, legs, seed):
    B = build_bratteli(ChainSpec(d, tuple(legs)))
    k = len(legs)
    g = _tensor_action(haar_unitary(d, np.random.default_rng(seed)), legs)
    lam = B.levels[k][seed % len(B.levels[k])]
    P = B.paths(k, lam)
    E = matrix_unit(B, P[0], P[-1]).materialize()
    assert np.linalg.norm(E @ g - g @ E) <= 1e-9


@given(d=d_st, legs=legs_st)
def test_path_isometries_span_orthogonal_subspaces(d, legs):
    B = build_bratteli(ChainSpec(d, tuple(legs)))
    k = len(legs)
    Us = [path_isometry(B, T) for lam in B.levels[k] for T in B.paths(k, lam)]
    for U, V in itertools.combinations(Us, 2):
        assert np.abs(U.T @ V).max() <= 1e-10


@given(cell=cell_st, seed=st.integers(0, 2 ** 16), mix=st.floats(0, 1))
def test_random_feasible_points_satisfy_all_oracles(cell, seed, mix):
    S = comb_structure(*cell)
    x = random_feasible_top(S, np.random.default_rng(seed), mix=mix)
    assert comb_residual(S, x) <= 1e-10
    blocks = blocks_from_top(S, x)
    C = choi_from_blocks(blocks, S.BL, S.BR)
    assert check_comb_conditions(C).max_residual <= 1e-8
    F = objective_vector(S) @ x
    assert abs(fidelity_full(C, cell[0]) - F) <= 1e-9
    assert -1e-12 <= F <= 1 + 1e-12
    assert verify_theorem1(blocks) <= 1e-7


@given(cell=cell_st, seed=st.integers(0, 2 ** 16), t=st.floats(0, 1))
def test_feasible_set_is_convex(cell, seed, t):
    S = comb_structure(*cell)
    rng = np.random.default_rng(seed)
    x, y = random_feasible_top(S, rng), random_feasible_top(S, rng)
    z = t * x + (1 - t) * y
    assert comb_residual(S, z) <= 1e-10
    w = objective_vector(S)
    assert abs(w @ z - (t * (w @ x) + (1 - t) * (w @ y))) <= 1e-12


@given(cell=cell_st, seed=st.integers(0, 2 ** 16))
def test_param_combs_are_feasible(cell, seed):
    shape = param_shape(*cell)
    model = CombModel(shape)
    W = random_param_comb(shape, np.random.default_rng(seed)).W
    x = model.top_vector(W)
    assert comb_residual(model.S, x) <= 1e-10
    F = model.fidelity(W)
    assert -1e-12 <= F <= 1 + 1e-12
