import numpy as np
import pytest

from symcomb.comb_sdp import blocks_from_top, comb_residual, comb_structure, objective_vector
from symcomb.param_comb import (CombModel, amplitudes, count_parameters, count_parameters_naive,
                                enumerate_prunings, fidelity, optimize, param_shape, random_param_comb,
                                riemannian_ascent)

CELLS = [("transpose", 2, 1), ("transpose", 2, 2), ("invert", 2, 2), ("invert", 3, 2), ("transpose", 3, 2)]


@pytest.mark.parametrize("task,d,n", CELLS)
def test_blocks_fit_on_stiefel(task, d, n):
    shape = param_shape(task, d, n)
    for b in shape.blocks:
        assert 1 <= b.in_dim <= b.out_dim


@pytest.mark.parametrize("task,d,n", CELLS)
def test_induced_blocks_are_feasible_rank_one(task, d, n, rng):
    shape = param_shape(task, d, n)
    model = CombModel(shape)
    p = random_param_comb(shape, rng)
    top, blocks = amplitudes(p, model)
    x = model.top_vector(p.W)
    assert comb_residual(model.S, x) <= 1e-10
    # objective of the induced blocks equals the amplitude fidelity
    assert abs(objective_vector(model.S) @ x - fidelity(p, model)) <= 1e-12
    for key, a in top.items():
        c = blocks.top[key]
        if c.size:
            assert np.linalg.matrix_rank(c, tol=1e-10) <= 2  # real part of a rank-one complex block


@pytest.mark.parametrize("task,d,n", CELLS[:4])
def test_gradient_matches_finite_differences(task, d, n, rng):
    shape = param_shape(task, d, n)
    model = CombModel(shape)
    W = random_param_comb(shape, rng).W
    F, G = model.value_and_grad(W)
    h = 1e-6
    for j in range(len(W)):
        D = rng.standard_normal(W[j].shape) + 1j * rng.standard_normal(W[j].shape)
        Wp = [w.copy() for w in W]
        Wm = [w.copy() for w in W]
        Wp[j] = Wp[j] + h * D
        Wm[j] = Wm[j] - h * D
        fd = (model.fidelity(Wp) - model.fidelity(Wm)) / (2 * h)
        assert abs(fd - np.real(np.vdot(G[j], D))) <= 1e-6


def test_ascent_is_monotone_and_stays_on_manifold(rng):
    shape = param_shape("invert", 3, 2)
    model = CombModel(shape)
    W0 = random_param_comb(shape, rng).W
    F0 = model.fidelity(W0)
    res = riemannian_ascent(model, W0, 1e-9, 300)
    assert res.fidelity >= F0 - 1e-12
    for w in res.W:
        assert np.abs(w.conj().T @ w - np.eye(w.shape[1])).max() <= 1e-10


def test_optimize_small_cell_reaches_sdp_value():
    res = optimize("transpose", 2, 1, restarts=4, seed=0)
    assert abs(res.fidelity - 0.5) <= 1e-8


def test_optimize_is_seed_deterministic():
    a = optimize("invert", 3, 1, restarts=3, seed=5)
    b = optimize("invert", 3, 1, restarts=3, seed=5)
    assert a.fidelity == b.fidelity


def test_prunings_are_minimal_and_distinct():
    P = enumerate_prunings("invert", 3, 2)
    assert len(P) == len(set(P))
    for a in P:
        assert not any(b < a for b in P)


def test_naive_counts_from_stage_dimensions():
    # transpose d=2 n=1: stages of size 2*2*1 and 2*(3+1)*2
    assert count_parameters_naive("transpose", 2, 1) == 4 ** 2 + 16 ** 2
    assert count_parameters("transpose", 2, 1) > 0
