"""Concrete irrep models, Clebsch-Gordan edge isometries and matrix units.

Everything is real: the generators E_ab of the defining rep and of its dual
(-E_ba) are real matrices with E_ab^T = E_ba, compression by real isometries
keeps that property, so the Casimir is real symmetric and every CG isometry
can be chosen real orthogonal.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .rep_theory import Bratteli, Label, Leg, Path, branch, casimir_value, trivial, weyl_dim

EIG_TOL = 1e-6


@dataclass
class IrrepModel:
    label: Label
    gens: np.ndarray  # (d, d, dim, dim), gens[a, b] represents E_ab

    @property
    def dim(self) -> int:
        return self.gens.shape[-1]

    @property
    def d(self) -> int:
        return self.gens.shape[0]


@dataclass
class EdgeIsometry:
    parent: Label
    leg: Leg
    child: Label
    gamma: np.ndarray  # (d_parent * d, d_child)


def leg_generators(d: int, leg: Leg) -> np.ndarray:
    g = np.zeros((d, d, d, d))
    for a in range(d):
        for b in range(d):
            if Leg(leg) == Leg.DEF:
                g[a, b, a, b] = 1.0
            else:
                g[a, b, b, a] = -1.0
    return g


def tensor_generators(parent: IrrepModel, leg: Leg) -> np.ndarray:
    """Lie-algebra action on V_parent (x) C^d; shape (d, d, dp*d, dp*d)."""
    d, dp = parent.d, parent.dim
    g = leg_generators(d, leg)
    eye_p = np.eye(dp)
    eye_d = np.eye(d)
    out = np.empty((d, d, dp * d, dp * d))
    for a in range(d):
        for b in range(d):
            out[a, b] = np.kron(parent.gens[a, b], eye_d) + np.kron(eye_p, g[a, b])
    return out


def casimir(gens: np.ndarray) -> np.ndarray:
    d = gens.shape[0]
    return sum(gens[a, b] @ gens[b, a] for a in range(d) for b in range(d))


def _tensor_casimir(parent: IrrepModel, leg: Leg) -> np.ndarray:
    # (c_parent + d) 1 + 2 sum_ab A_ab (x) g_ba, assembled without d^2 matmuls
    d, dp = parent.d, parent.dim
    A = parent.gens
    if Leg(leg) == Leg.DEF:
        # A_ab (x) E_ba : [(p,j),(q,k)] = A_kj[p,q]
        K = np.einsum("kjpq->pjqk", A)
    else:
        # A_ab (x) (-E_ab) : [(p,j),(q,k)] = -A_jk[p,q]
        K = -np.einsum("jkpq->pjqk", A)
    K = K.reshape(dp * d, dp * d)
    cas = 2.0 * K
    cas[np.diag_indices_from(cas)] += casimir_value(parent.label) + d
    return cas


def _fix_signs(M: np.ndarray) -> np.ndarray:
    idx = np.argmax(np.abs(M), axis=0)
    s = np.sign(M[idx, np.arange(M.shape[1])])
    s[s == 0] = 1.0
    return M * s


def _canonical_basis(Q: np.ndarray, G: np.ndarray) -> np.ndarray:
    """Deterministic orthonormal basis of the invariant subspace spanned by Q.

    Basis vectors are weight vectors sorted by weight, highest first; inside a
    weight space they diagonalize a fixed combination of the Casimirs of the
    nested subgroups U(2) < ... < U(d-1).
    """
    d = G.shape[0]
    comp = np.einsum("ip,abij,jq->abpq", Q, G, Q, optimize=True)
    # log-prime weighting separates distinct integer weights
    primes = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37][:d]
    H = sum(np.log(p) * comp[a, a] for a, p in enumerate(primes))
    w, V = np.linalg.eigh((H + H.T) / 2)
    K = np.zeros_like(H)
    for k in range(2, d):
        K += (1.0 + 0.37 * k) * sum(comp[a, b] @ comp[b, a] for a in range(k) for b in range(k))
    cols, keys = [], []
    start = 0
    while start < len(w):
        stop = start + 1
        while stop < len(w) and w[stop] - w[start] < EIG_TOL:
            stop += 1
        Vg = V[:, start:stop]
        if stop - start > 1:
            Kg = Vg.T @ K @ Vg
            _, R = np.linalg.eigh((Kg + Kg.T) / 2)
            Vg = Vg @ R
        for j in range(Vg.shape[1]):
            v = Vg[:, j]
            weight = tuple(int(round(v @ comp[a, a] @ v)) for a in range(d))
            cols.append(v)
            keys.append((tuple(-x for x in weight), len(keys)))
        start = stop
    order = [i for _, i in sorted(keys)]
    return _fix_signs(Q @ np.array(cols).T[:, order])


def _highest_weight_vector(gens: np.ndarray) -> np.ndarray:
    d, dim = gens.shape[0], gens.shape[-1]
    if dim == 1:
        return np.ones(1)
    S = np.vstack([gens[a, b] for a in range(d) for b in range(a + 1, d)])
    _, s, vt = np.linalg.svd(S)
    if np.sum(s < 1e-8) != 1:
        raise RuntimeError("highest-weight space is not one-dimensional")
    return vt[-1]


def _intertwiner(A: np.ndarray, R: np.ndarray) -> np.ndarray:
    """Orthogonal Y with A_ab Y = Y R_ab for all a, b (unique up to sign)."""
    d, dim = A.shape[0], A.shape[-1]
    vA = _highest_weight_vector(A)
    vR = _highest_weight_vector(R)
    lowering = [(b, a) for a in range(d) for b in range(a + 1, d)]
    basis_R: List[np.ndarray] = []
    cols_R: List[np.ndarray] = []
    cols_A: List[np.ndarray] = []

    def accept(wr, wa):
        r = wr.copy()
        for q in basis_R:
            r -= (q @ r) * q
        nr = np.linalg.norm(r)
        if nr > 1e-8 * max(1.0, np.linalg.norm(wr)):
            basis_R.append(r / nr)
            cols_R.append(wr)
            cols_A.append(wa)
            return True
        return False

    accept(vR, vA)
    frontier = [(vR, vA)]
    while frontier and len(cols_R) < dim:
        nxt = []
        for wr, wa in frontier:
            for (b, a) in lowering:
                cr = R[b, a] @ wr
                ca = A[b, a] @ wa
                if np.linalg.norm(cr) < 1e-12:
                    continue
                if accept(cr, ca):
                    nxt.append((cr, ca))
                if len(cols_R) == dim:
                    break
        frontier = nxt
    if len(cols_R) < dim:
        raise RuntimeError("intertwiner space is not one-dimensional")
    WR = np.array(cols_R).T
    WA = np.array(cols_A).T
    Y = np.linalg.solve(WR.T, WA.T).T
    # normalize to an orthogonal matrix and fix the sign
    u, _, vt = np.linalg.svd(Y)
    Y = u @ vt
    first = Y.flat[np.flatnonzero(np.abs(Y) > 1e-12)[0]]
    return Y * np.sign(first)


class ModelRegistry:
    """Global registry: one fixed model per irrep label, plus edge isometries."""

    def __init__(self):
        self.models: Dict[Label, IrrepModel] = {}
        self.edges: Dict[Tuple[Label, Leg, Label], EdgeIsometry] = {}

    def trivial_model(self, d: int) -> IrrepModel:
        lab = trivial(d)
        if lab not in self.models:
            self.models[lab] = IrrepModel(lab, np.zeros((d, d, 1, 1)))
        return self.models[lab]

    def model(self, lam: Label) -> IrrepModel:
        return self.models[lam]

    def edge(self, parent: Label, leg: Leg, child: Label) -> EdgeIsometry:
        key = (parent, Leg(leg), child)
        if key not in self.edges:
            self._expand(parent, Leg(leg))
        if key not in self.edges:
            raise KeyError(f"{child} is not a child of {parent} for leg {leg}")
        return self.edges[key]

    def _expand(self, parent: Label, leg: Leg) -> None:
        d = len(parent)
        if parent == trivial(d):
            self.trivial_model(d)
        pm = self.models[parent]
        G = tensor_generators(pm, leg)
        cas = _tensor_casimir(pm, leg)
        w, V = np.linalg.eigh(cas)
        for child in branch(parent, leg, d):
            c = casimir_value(child)
            sel = np.abs(w - c) < EIG_TOL
            Q = V[:, sel]
            if Q.shape[1] != weyl_dim(child):
                raise RuntimeError(f"Casimir eigenspace of {child} has the wrong dimension")
            if child not in self.models:
                gamma = _canonical_basis(Q, G)
                gens = np.einsum("ip,abij,jq->abpq", gamma, G, gamma, optimize=True)
                self.models[child] = IrrepModel(child, gens)
            else:
                A = np.einsum("ip,abij,jq->abpq", Q, G, Q, optimize=True)
                Y = _intertwiner(A, self.models[child].gens)
                gamma = Q @ Y
            self.edges[(parent, leg, child)] = EdgeIsometry(parent, leg, child, gamma)


REGISTRY = ModelRegistry()


def model_registry_get_or_create(parent_model: IrrepModel, leg: Leg, child: Label,
                                 registry: ModelRegistry = REGISTRY):
    if parent_model.label not in registry.models:
        registry.models[parent_model.label] = parent_model
    e = registry.edge(parent_model.label, leg, child)
    return e, registry.model(child)


# ---------------------------------------------------------------- path isometries

_PATH_CACHE: Dict[Tuple[Tuple[Leg, ...], Path], np.ndarray] = {}


def extend_isometry(U: np.ndarray, gamma: np.ndarray, d: int) -> np.ndarray:
    """(U (x) 1_d) gamma without forming the Kronecker product."""
    rows, dp = U.shape
    dc = gamma.shape[1]
    out = U @ gamma.reshape(dp, d * dc)
    return out.reshape(rows * d, dc)


def path_isometry(B: Bratteli, T: Path, registry: ModelRegistry = REGISTRY) -> np.ndarray:
    """Thin isometry U_T : V_lambda -> (C^d)^{(x)k} for the path T."""
    k = len(T) - 1
    key = (B.legs[:k], T)
    if key in _PATH_CACHE:
        return _PATH_CACHE[key]
    if k == 0:
        U = np.ones((1, 1))
    else:
        prev = path_isometry(B, T[:-1], registry)
        e = registry.edge(T[-2], B.legs[k - 1], T[-1])
        U = extend_isometry(prev, e.gamma, B.d)
    _PATH_CACHE[key] = U
    return U


def irrep_isometry(B: Bratteli, k: int, lam: Label) -> np.ndarray:
    """All paths to lam stacked: columns ordered (path, irrep index)."""
    return np.hstack([path_isometry(B, T) for T in B.paths(k, lam)])


def schur_transform(B: Bratteli, k: int | None = None) -> Tuple[np.ndarray, List[Tuple[Label, int]]]:
    """Orthogonal matrix whose column blocks are U_T for all paths at level k."""
    k = B.depth if k is None else k
    cols = []
    index = []
    for lam in B.levels[k]:
        for T in B.paths(k, lam):
            cols.append(path_isometry(B, T))
            index.append((lam, B.path_index(T)))
    return np.hstack(cols), index


@dataclass
class MatrixUnit:
    """E^lambda_{T,T'} = U_T U_T'^T, held as the isometry pair."""

    ket: np.ndarray
    bra: np.ndarray
    label: Label

    def materialize(self) -> np.ndarray:
        return self.ket @ self.bra.T


def matrix_unit(B: Bratteli, T: Path, Tp: Path) -> MatrixUnit:
    if T[-1] != Tp[-1] or len(T) != len(Tp):
        raise ValueError("matrix units need two paths with the same endpoint")
    return MatrixUnit(path_isometry(B, T), path_isometry(B, Tp), T[-1])


# ---------------------------------------------------------------- leg permutations

def permute_legs(M: np.ndarray, perm: Sequence[int], d: int) -> np.ndarray:
    """Apply the leg permutation psi to the rows of M: new leg j is old leg perm[j]."""
    k = len(perm)
    shape = M.shape
    t = M.reshape((d,) * k + shape[1:])
    t = np.transpose(t, tuple(perm) + tuple(range(k, t.ndim)))
    return t.reshape(shape)


def inverse_perm(perm: Sequence[int]) -> Tuple[int, ...]:
    inv = [0] * len(perm)
    for j, p in enumerate(perm):
        inv[p] = j
    return tuple(inv)


def pairing_trace(E: MatrixUnit, Et: MatrixUnit, perm: Sequence[int], d: int) -> float:
    """Tr(psi E psi^-1 Et) in low-rank form Tr(U_T'^T psi^-1 Ut_Q Ut_Q'^T psi U_T)."""
    if E.ket.shape[0] != Et.ket.shape[0]:
        raise ValueError("matrix units act on spaces of different size")
    inv = inverse_perm(perm)
    left = E.bra.T @ permute_legs(Et.ket, inv, d)      # U_T'^T psi^-1 Ut_Q
    right = Et.bra.T @ permute_legs(E.ket, perm, d)    # Ut_Q'^T psi U_T
    return float(np.trace(left @ right))


def clear_caches() -> None:
    _PATH_CACHE.clear()
