import itertools

import numpy as np
import pytest

from symcomb.choi_verify import _tensor_action, haar_unitary
from symcomb.matrix_units import (REGISTRY, casimir, leg_generators, matrix_unit, pairing_trace,
                                  path_isometry, schur_transform)
from symcomb.rep_theory import ChainSpec, Leg, build_bratteli, casimir_value

CHAINS = [(2, (Leg.DEF,) * 3), (2, (Leg.DEF, Leg.DEF, Leg.CONJ)), (3, (Leg.DEF, Leg.CONJ)),
          (3, (Leg.DEF,) * 3), (2, (Leg.CONJ, Leg.DEF, Leg.DEF, Leg.DEF))]


def _swap(d):
    S = np.zeros((d * d, d * d))
    for i in range(d):
        for j in range(d):
            S[i * d + j, j * d + i] = 1
    return S


def _all_units(B):
    k = B.depth
    for lam in B.levels[k]:
        for T, Tp in itertools.product(B.paths(k, lam), repeat=2):
            yield lam, T, Tp, matrix_unit(B, T, Tp).materialize()


@pytest.mark.parametrize("d,legs", CHAINS)
def test_models_satisfy_lie_relations(d, legs):
    B = build_bratteli(ChainSpec(d, legs))
    for lam, *_ in _all_units(B):
        pass
    for k in range(1, B.depth + 1):
        for lam in B.levels[k]:
            G = REGISTRY.model(lam).gens
            for a, b, c, e in itertools.product(range(d), repeat=4):
                lhs = G[a, b] @ G[c, e] - G[c, e] @ G[a, b]
                rhs = (b == c) * G[a, e] - (e == a) * G[c, b]
                assert np.abs(lhs - rhs).max() <= 1e-10
            C = casimir(G)
            assert np.abs(C - casimir_value(lam) * np.eye(len(C))).max() <= 1e-9


@pytest.mark.parametrize("d,legs", CHAINS)
def test_edges_are_isometric_intertwiners(d, legs):
    B = build_bratteli(ChainSpec(d, legs))
    for k in range(B.depth):
        for p, c in B.edges[k]:
            G = REGISTRY.edge(p, legs[k], c).gamma
            assert np.abs(G.T @ G - np.eye(G.shape[1])).max() <= 1e-12
            Gp = REGISTRY.model(p).gens
            Gc = REGISTRY.model(c).gens
            g = leg_generators(d, legs[k])
            for a, b in itertools.product(range(d), repeat=2):
                act = np.kron(Gp[a, b], np.eye(d)) + np.kron(np.eye(len(Gp[a, b])), g[a, b])
                assert np.abs(G.T @ act @ G - Gc[a, b]).max() <= 1e-9


def test_first_defining_edge_is_identity():
    G = REGISTRY.edge((0, 0, 0), Leg.DEF, (1, 0, 0)).gamma
    assert np.allclose(G, np.eye(3), atol=1e-12)


def test_symmetric_and_antisymmetric_projectors():
    B = build_bratteli(ChainSpec(2, (Leg.DEF, Leg.DEF)))
    S = _swap(2)
    Psym = matrix_unit(B, *(B.paths(2, (2, 0)) * 2)).materialize()
    Panti = matrix_unit(B, *(B.paths(2, (1, 1)) * 2)).materialize()
    assert np.allclose(Psym, (np.eye(4) + S) / 2, atol=1e-12)
    assert np.allclose(Panti, (np.eye(4) - S) / 2, atol=1e-12)


def test_conjugate_edge_to_trivial_is_max_entangled():
    G = REGISTRY.edge((1, 0), Leg.CONJ, (0, 0)).gamma.ravel()
    phi = np.array([1, 0, 0, 1]) / np.sqrt(2)
    assert abs(abs(G @ phi) - 1) <= 1e-12


@pytest.mark.parametrize("d,legs", CHAINS)
def test_orthogonal_basis_properties(d, legs):
    B = build_bratteli(ChainSpec(d, legs))
    units = list(_all_units(B))
    D = d ** len(legs)
    total = np.zeros((D, D))
    for lam, T, Tp, E in units:
        assert abs(np.trace(E) - (T == Tp) * len(REGISTRY.model(lam).gens[0, 0])) <= 1e-10
        Et = matrix_unit(B, Tp, T).materialize()
        assert np.abs(E.T - Et).max() <= 1e-10
        if T == Tp:
            total += E
    assert np.abs(total - np.eye(D)).max() <= 1e-10
    for (l1, T1, S1, E1), (l2, T2, S2, E2) in itertools.product(units[:12], repeat=2):
        prod = E1 @ E2
        if l1 == l2 and S1 == T2:
            assert np.abs(prod - matrix_unit(B, T1, S2).materialize()).max() <= 1e-10
        else:
            assert np.abs(prod).max() <= 1e-10


@pytest.mark.parametrize("d,legs", CHAINS[:3])
def test_units_commute_with_tensor_action(d, legs):
    B = build_bratteli(ChainSpec(d, legs))
    rng = np.random.default_rng(1)
    gs = [_tensor_action(haar_unitary(d, rng), legs) for _ in range(20)]
    for lam, T, Tp, E in _all_units(B):
        for g in gs:
            assert np.linalg.norm(E @ g - g @ E) <= 1e-9


def test_schur_transform_is_orthogonal():
    B = build_bratteli(ChainSpec(3, (Leg.DEF, Leg.DEF, Leg.CONJ)))
    U, index = schur_transform(B)
    assert U.shape == (27, 27)
    assert np.abs(U.T @ U - np.eye(27)).max() <= 1e-10


def test_matrix_unit_endpoint_mismatch():
    B = build_bratteli(ChainSpec(2, (Leg.DEF, Leg.DEF)))
    with pytest.raises(ValueError):
        matrix_unit(B, B.paths(2, (2, 0))[0], B.paths(2, (1, 1))[0])


def test_pairing_trace_examples():
    B = build_bratteli(ChainSpec(2, (Leg.DEF, Leg.DEF)))
    Ts = B.paths(2, (2, 0))[0]
    Ta = B.paths(2, (1, 1))[0]
    Es = matrix_unit(B, Ts, Ts)
    Ea = matrix_unit(B, Ta, Ta)
    assert abs(pairing_trace(Es, Es, (1, 0), 2) - 3) <= 1e-12
    assert abs(pairing_trace(Es, Ea, (1, 0), 2)) <= 1e-12
    assert abs(pairing_trace(Es, Ea, (0, 1), 2)) <= 1e-12
    assert abs(pairing_trace(Ea, Ea, (0, 1), 2) - 1) <= 1e-12


def test_pairing_trace_matches_dense():
    B = build_bratteli(ChainSpec(2, (Leg.DEF,) * 3))
    perm = (1, 2, 0)
    from symcomb.matrix_units import inverse_perm, permute_legs
    for lam, T, Tp, E in list(_all_units(B))[:6]:
        for mu, Q, Qp, Et in list(_all_units(B))[:6]:
            # psi E psi^-1 as a dense operator
            PE = permute_legs(permute_legs(E, perm, 2).T, perm, 2).T
            dense = np.trace(PE @ Et)
            low = pairing_trace(matrix_unit(B, T, Tp), matrix_unit(B, Q, Qp), perm, 2)
            assert abs(dense - low) <= 1e-12


def test_path_isometry_memoized_and_isometric():
    B = build_bratteli(ChainSpec(3, (Leg.DEF,) * 4))
    for lam in B.levels[4]:
        for T in B.paths(4, lam):
            U = path_isometry(B, T)
            assert U is path_isometry(B, T)
            assert np.abs(U.T @ U - np.eye(U.shape[1])).max() <= 1e-12
