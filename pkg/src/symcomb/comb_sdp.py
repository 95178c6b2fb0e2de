"""Symmetry-reduced SDP for optimal unitary transposition/inversion combs.

Index conventions (spaces P, I_1..I_n, O_1..O_n, F):
  * B_L lives on (I_1, ..., I_n, F), B_R on (P, O_1, ..., O_n).
  * C_i is the level-i marginal comb on (I_1..I_i) x (P, O_1..O_{i-1}); it is
    block diagonal over pairs (nu, rho) of level-i vertices of B_L and B_R.
  * A level-i block c[(s, R), (s', R')] is indexed by path pairs; the Choi
    matrix is  C_i = sum c^{nu rho}_{s s' R R'} E^nu_{s s'}/d_nu (x) Et^rho_{R R'}/d_rho.
  * C_{n+1} = C, C_0 = 1 and Tr C = d^(n+1).

The comb conditions  Tr_{I_i} C_i = C_{i-1} (x) 1_{O_{i-1}}  become, for each
nu in B_L^(i-1) and mu in B_R^(i) with paths s, s' -> nu and Q, Q' -> mu,

  sum_{lam: nu->lam} c^{i, lam mu}_{(s->lam)(s'->lam) Q Q'}
      = [Q, Q' share the parent rho] (d_mu/d_rho) c^{i-1, nu rho}_{s s' Qbar Qbar'}

with the lower levels defined by  c^{i-1} = (1/d) sum_{lam, mu} c^i  on edge
extensions.  Everything is a linear function of the top-level blocks, so only
those are SDP variables.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Tuple

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .matrix_units import path_isometry, permute_legs
from .rep_theory import Bratteli, Label, Task, chain_for_task, weyl_dim

log = logging.getLogger(__name__)

# The output-side operator of Omega acts on legs (O_1, ..., O_n, P); B_R paths
# live on (P, O_1, ..., O_n).  This permutation moves P to the end.
def cyclic_perm(n_legs: int) -> Tuple[int, ...]:
    return tuple(range(1, n_legs)) + (0,)


@dataclass
class LevelLayout:
    """Full-entry indexing of all blocks at one level."""

    level: int
    pairs: List[Tuple[Label, Label]]
    fl: List[int]
    fr: List[int]
    offsets: List[int]
    size: int
    where: Dict[Tuple[Label, Label], int]

    def block_dim(self, b: int) -> int:
        return self.fl[b] * self.fr[b]


def level_layout(BL: Bratteli, BR: Bratteli, i: int) -> LevelLayout:
    pairs, fl, fr, offs = [], [], [], []
    off = 0
    for nu in BL.levels[i]:
        for rho in BR.levels[i]:
            a, b = BL.npaths(i, nu), BR.npaths(i, rho)
            pairs.append((nu, rho))
            fl.append(a)
            fr.append(b)
            offs.append(off)
            off += (a * b) ** 2
    return LevelLayout(i, pairs, fl, fr, offs, off, {p: k for k, p in enumerate(pairs)})


def _entry_index(L: LevelLayout, b: int, s, sp_, R, Rp):
    """Flat index of c[(s,R),(s',R')] in block b (broadcasts over arrays)."""
    fr = L.fr[b]
    n = L.fl[b] * fr
    return L.offsets[b] + (np.asarray(s) * fr + R) * n + (np.asarray(sp_) * fr + Rp)


def _ext_index(B: Bratteli, k: int, parent: Label, child: Label) -> np.ndarray:
    """Index at level k+1 (paths to child) of every path to parent extended by the edge."""
    return np.array([B.path_index(t + (child,)) for t in B.paths(k, parent)], dtype=np.int64)


def _parent_and_index(B: Bratteli, k: int, lam: Label):
    """For each path to lam at level k: (parent label, index among the parent's paths)."""
    par, idx = [], []
    for t in B.paths(k, lam):
        par.append(t[-2])
        idx.append(B.path_index(t[:-1]))
    return par, np.array(idx, dtype=np.int64)


def down_map(BL: Bratteli, BR: Bratteli, i: int, Li: LevelLayout, Lm: LevelLayout, d: int) -> sp.csr_matrix:
    """Sparse map from level-i entries to level-(i-1) entries (the 1/d traced recursion)."""
    rows, cols = [], []
    for b, (nu, rho) in enumerate(Lm.pairs):
        fa, fb = Lm.fl[b], Lm.fr[b]
        s, s2, R, R2 = np.meshgrid(np.arange(fa), np.arange(fa), np.arange(fb), np.arange(fb), indexing="ij")
        tgt = _entry_index(Lm, b, s, s2, R, R2).ravel()
        for lam in BL.children(i - 1, nu):
            es = _ext_index(BL, i - 1, nu, lam)
            for mu in BR.children(i - 1, rho):
                er = _ext_index(BR, i - 1, rho, mu)
                bb = Li.where[(lam, mu)]
                src = _entry_index(Li, bb, es[s], es[s2], er[R], er[R2]).ravel()
                rows.append(tgt)
                cols.append(src)
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.full(rows.shape, 1.0 / d)
    return sp.csr_matrix((vals, (rows, cols)), shape=(Lm.size, Li.size))


def marginal_rows(BL: Bratteli, BR: Bratteli, i: int, Li: LevelLayout, Lm: LevelLayout):
    """Level-i comb-condition rows as (coefficients on level i, coefficients on level i-1)."""
    ri, ci, vi = [], [], []
    rm, cm, vm = [], [], []
    row = 0
    for nu in BL.levels[i - 1]:
        fa = BL.npaths(i - 1, nu)
        kids = BL.children(i - 1, nu)
        for mu in BR.levels[i]:
            fb = BR.npaths(i, mu)
            s, s2, Q, Q2 = np.meshgrid(np.arange(fa), np.arange(fa), np.arange(fb), np.arange(fb), indexing="ij")
            # one row per unordered pair {(s,Q),(s',Q')}
            keep = (s * fb + Q) <= (s2 * fb + Q2)
            s, s2, Q, Q2 = s[keep], s2[keep], Q[keep], Q2[keep]
            nrow = s.size
            rid = row + np.arange(nrow)
            for lam in kids:
                es = _ext_index(BL, i - 1, nu, lam)
                bb = Li.where[(lam, mu)]
                ri.append(rid)
                ci.append(_entry_index(Li, bb, es[s], es[s2], Q, Q2))
                vi.append(np.ones(nrow))
            par, pidx = _parent_and_index(BR, i, mu)
            par = np.array([BR.levels[i - 1].index(p) for p in par])
            same = par[Q] == par[Q2]
            if np.any(same):
                for rho_i in np.unique(par[Q[same]]):
                    rho = BR.levels[i - 1][rho_i]
                    sel = same & (par[Q] == rho_i)
                    bb = Lm.where[(nu, rho)]
                    rm.append(rid[sel])
                    cm.append(_entry_index(Lm, bb, s[sel], s2[sel], pidx[Q[sel]], pidx[Q2[sel]]))
                    vm.append(np.full(sel.sum(), -weyl_dim(mu) / weyl_dim(rho)))
            row += nrow
    Ai = sp.csr_matrix((np.concatenate(vi), (np.concatenate(ri), np.concatenate(ci))), shape=(row, Li.size))
    if rm:
        Am = sp.csr_matrix((np.concatenate(vm), (np.concatenate(rm), np.concatenate(cm))), shape=(row, Lm.size))
    else:
        Am = sp.csr_matrix((row, Lm.size))
    return Ai, Am


@dataclass
class CombStructure:
    """Diagrams, per-level layouts and the linear maps from top-level entries."""

    task: Task
    d: int
    n: int
    BL: Bratteli
    BR: Bratteli
    layouts: List[LevelLayout]
    maps: List[sp.csr_matrix]  # maps[i]: top-level entries -> level-i entries

    @property
    def top(self) -> LevelLayout:
        return self.layouts[-1]


def comb_structure(task, d: int, n: int) -> CombStructure:
    task = Task(task)
    BL, BR = chain_for_task(task, d, n)
    return structure_from_diagrams(task, BL, BR, d, n)


def structure_from_diagrams(task, BL: Bratteli, BR: Bratteli, d: int, n: int) -> CombStructure:
    task = Task(task)
    layouts = [level_layout(BL, BR, i) for i in range(n + 2)]
    maps: List[sp.csr_matrix] = [None] * (n + 2)
    maps[n + 1] = sp.identity(layouts[n + 1].size, format="csr")
    for i in range(n + 1, 0, -1):
        D = down_map(BL, BR, i, layouts[i], layouts[i - 1], d)
        maps[i - 1] = (D @ maps[i]).tocsr()
    return CombStructure(task, d, n, BL, BR, layouts, maps)


def comb_constraints(S, BR: Bratteli | None = None, d: int | None = None,
                     n: int | None = None) -> Tuple[sp.csr_matrix, np.ndarray]:
    """Comb conditions as rows on the top-level full-entry vector: A x = b.

    Accepts a CombStructure or the diagram pair (B_L, B_R, d, n).  The last row
    is the normalization C_0 = 1.
    """
    if isinstance(S, Bratteli):
        task = Task.TRANSPOSE if BR.legs[0] != S.legs[0] else Task.INVERT
        S = structure_from_diagrams(task, S, BR, d, n)
    blocks = []
    for i in range(1, S.n + 2):
        Ai, Am = marginal_rows(S.BL, S.BR, i, S.layouts[i], S.layouts[i - 1])
        blocks.append((Ai @ S.maps[i] + Am @ S.maps[i - 1]).tocsr())
    blocks.append(S.maps[0])  # C_0 = 1
    A = sp.vstack(blocks).tocsr()
    b = np.zeros(A.shape[0])
    b[-1] = 1.0
    return A, b


# ---------------------------------------------------------------- objective

def overlap_matrix(S: CombStructure, lam: Label) -> np.ndarray:
    """h[S, Q] with U_S^T psi^T Ut_Q = h[S, Q] * identity (Schur's lemma).

    psi reorders the B_R legs (P, O_1..O_n) into the order (O_1..O_n, P) that
    pairs leg-by-leg with (I_1..I_n, F) in the objective operator.
    """
    k = S.n + 1
    dl = weyl_dim(lam)
    perm = cyclic_perm(k)
    left = [path_isometry(S.BL, T) for T in S.BL.paths(k, lam)]
    right = [permute_legs(path_isometry(S.BR, Q), perm, S.d) for Q in S.BR.paths(k, lam)]
    h = np.empty((len(left), len(right)))
    for a, U in enumerate(left):
        for c, V in enumerate(right):
            h[a, c] = np.trace(U.T @ V) / dl
    return h


def objective_blocks(S: CombStructure) -> Dict[int, np.ndarray]:
    """Top-level objective matrices W_b with Tr(C Omega) = sum_b <W_b, X_b>.

    Only diagonal pairs (lam, lam) contribute and each W is rank one:
    W = v v^T / (d^2 d_lam) with v[(S, Q)] = h[S, Q].
    """
    top = S.top
    out = {}
    for lam in S.BL.levels[S.n + 1]:
        if (lam, lam) not in top.where:
            continue
        v = overlap_matrix(S, lam).ravel()
        out[top.where[(lam, lam)]] = np.outer(v, v) / (S.d ** 2 * weyl_dim(lam))
    return out


def objective_vector(S: CombStructure) -> np.ndarray:
    """Objective as a linear functional on the top-level full-entry vector."""
    w = np.zeros(S.top.size)
    for b, W in objective_blocks(S).items():
        o = S.top.offsets[b]
        w[o:o + W.size] = W.ravel()
    return w


@dataclass
class ObjectiveCoeffs:
    """Tr(C Omega) = sum over lam of v^T c^{lam lam} v * scale[lam] on top-level blocks."""

    task: Task
    d: int
    n: int
    vectors: Dict[Label, np.ndarray]
    scale: Dict[Label, float]
    perm: Tuple[int, ...]

    def value(self, top: Dict[Tuple[Label, Label], np.ndarray]) -> float:
        out = 0.0
        for lam, v in self.vectors.items():
            c = top.get((lam, lam))
            if c is not None:
                out += self.scale[lam] * float(v @ c @ v)
        return out


def objective_coefficients(task, d: int, n: int) -> ObjectiveCoeffs:
    S = comb_structure(task, d, n)
    vecs, scale = {}, {}
    for lam in S.BL.levels[n + 1]:
        if (lam, lam) in S.top.where:
            vecs[lam] = overlap_matrix(S, lam).ravel()
            scale[lam] = 1.0 / (d ** 2 * weyl_dim(lam))
    return ObjectiveCoeffs(S.task, d, n, vecs, scale, cyclic_perm(n + 1))


# ---------------------------------------------------------------- blocks

@dataclass
class CoefficientBlocks:
    """Real symmetric coefficient blocks at every level 0..n+1."""

    task: Task
    d: int
    n: int
    levels: List[Dict[Tuple[Label, Label], np.ndarray]] = field(default_factory=list)

    @property
    def top(self) -> Dict[Tuple[Label, Label], np.ndarray]:
        return self.levels[-1]


def unpack_level(L: LevelLayout, vec: np.ndarray) -> Dict[Tuple[Label, Label], np.ndarray]:
    out = {}
    for b, pair in enumerate(L.pairs):
        n = L.block_dim(b)
        out[pair] = vec[L.offsets[b]:L.offsets[b] + n * n].reshape(n, n)
    return out


def pack_level(L: LevelLayout, blocks) -> np.ndarray:
    vec = np.zeros(L.size)
    for b, pair in enumerate(L.pairs):
        n = L.block_dim(b)
        if pair in blocks:
            vec[L.offsets[b]:L.offsets[b] + n * n] = np.asarray(blocks[pair]).reshape(-1)
    return vec


def blocks_from_top(S: CombStructure, x: np.ndarray) -> CoefficientBlocks:
    levels = [unpack_level(S.layouts[i], S.maps[i] @ x) for i in range(S.n + 2)]
    return CoefficientBlocks(S.task, S.d, S.n, levels)


def depolarizing_top(S: CombStructure) -> np.ndarray:
    """Top-level entries of the discard-and-reprepare comb C = identity / d^(n+1)."""
    # identity = sum_lam sum_T E^lam_TT, so c^{lam mu}_{SS'QQ'} = d_lam d_mu delta delta
    x = np.zeros(S.top.size)
    scale = float(S.d) ** (S.n + 1)
    for b, (lam, mu) in enumerate(S.top.pairs):
        n = S.top.block_dim(b)
        blk = np.eye(n) * weyl_dim(lam) * weyl_dim(mu) / scale
        x[S.top.offsets[b]:S.top.offsets[b] + n * n] = blk.ravel()
    return x


def comb_residual(S: CombStructure, x: np.ndarray, A=None, b=None) -> float:
    if A is None:
        A, b = comb_constraints(S)
    return float(np.abs(A @ x - b).max())


# ---------------------------------------------------------------- SDP assembly

def _transpose_perm(L: LevelLayout) -> np.ndarray:
    """Permutation of full entries sending (b, p, q) to (b, q, p)."""
    perm = np.empty(L.size, dtype=np.int64)
    for b in range(len(L.pairs)):
        n = L.block_dim(b)
        idx = np.arange(n * n).reshape(n, n)
        perm[L.offsets[b]:L.offsets[b] + n * n] = L.offsets[b] + idx.T.ravel()
    return perm


def independent_rows(A: sp.csr_matrix, tol: float = 1e-10) -> np.ndarray:
    """Indices of a maximal linearly independent subset of the rows of A.

    Rows are normalized, duplicates removed, and the survivors are selected by
    pivoted Cholesky on the Gram matrix.
    """
    norms = np.sqrt(np.asarray(A.multiply(A).sum(axis=1)).ravel())
    live = np.flatnonzero(norms > tol)
    An = sp.diags(1.0 / norms[live]) @ A[live]
    An = An.tocsr()
    An.sort_indices()
    # exact duplicates (up to sign) are common; drop them cheaply first
    keyed = {}
    keep = []
    for k in range(An.shape[0]):
        lo, hi = An.indptr[k], An.indptr[k + 1]
        vals = An.data[lo:hi]
        sgn = np.sign(vals[0]) if hi > lo else 1.0
        key = (An.indices[lo:hi].tobytes(), np.round(sgn * vals, 12).tobytes())
        if key not in keyed:
            keyed[key] = k
            keep.append(k)
    keep = np.array(keep, dtype=np.int64)
    G = (An[keep] @ An[keep].T).toarray()
    _, piv, rank, info = sla.lapack.dpstrf(G, lower=1, tol=tol)
    if info < 0:
        raise RuntimeError("pivoted Cholesky failed")
    chosen = keep[piv[:rank] - 1]
    return np.sort(live[chosen])


def assemble_sdp(S: CombStructure, tol: float = 1e-10):
    """Block SDP: maximize <W, X> over the top-level blocks subject to the comb conditions."""
    from .sdp_solver import SDPProblem

    A, b = comb_constraints(S)
    top = S.top
    perm = _transpose_perm(top)
    inv = np.empty_like(perm)
    inv[perm] = np.arange(perm.size)
    A = ((A + A[:, inv]) / 2).tocsr()
    A.eliminate_zeros()
    rows = independent_rows(A, tol)
    A, b = A[rows], b[rows]
    Wb = objective_blocks(S)
    sizes, Cs, As = [], [], []
    Acsc = A.tocsc()
    for k in range(len(top.pairs)):
        n = top.block_dim(k)
        o = top.offsets[k]
        sizes.append(n)
        Cs.append(Wb.get(k, np.zeros((n, n))))
        As.append(Acsc[:, o:o + n * n].tocsr())
    meta = {"task": S.task.value, "d": S.d, "n": S.n, "pairs": list(top.pairs)}
    return SDPProblem(sizes, Cs, As, b, meta)


def top_vector_from_blocks(S: CombStructure, X: List[np.ndarray]) -> np.ndarray:
    return np.concatenate([x.ravel() for x in X])


def n_variables(S: CombStructure) -> int:
    """Number of real scalar unknowns (symmetric entries) in the reduced SDP."""
    return sum(n * (n + 1) // 2 for n in (S.top.block_dim(b) for b in range(len(S.top.pairs))))


def _random_isometry_real(rows: int, cols: int, rng: np.random.Generator) -> np.ndarray:
    Q, R = np.linalg.qr(rng.standard_normal((rows, cols)))
    return Q * np.sign(np.diag(R))


def random_feasible_top(S: CombStructure, rng: np.random.Generator, mix: float | None = None) -> np.ndarray:
    """A random feasible point, built from random stage isometries with memory.

    Level-i factors Y^{lam mu} (c^i = Y Y^T) follow
        Y_i[(s->lam, R->mu)] = sqrt(d_mu/d_rho) T^{nu mu}_{lam rho} Y_{i-1}[(s, R)]
    with [T_{lam rho}] an isometry for every (nu, mu); the comb conditions then
    hold exactly.  The result is mixed with the depolarizing comb (weight
    `mix`, random if not given) to reach full-rank points as well.
    """
    BL, BR, d = S.BL, S.BR, S.d
    t0 = BL.levels[0][0]
    Y = {(t0, t0): np.ones((1, 1))}
    m_prev = 1
    for i in range(1, S.n + 2):
        mp = max(len(BR.parents(i, mu)) for mu in BR.levels[i])
        m = m_prev * mp
        new = {(lam, mu): np.zeros((BL.npaths(i, lam) * BR.npaths(i, mu), m))
               for lam in BL.levels[i] for mu in BR.levels[i]}
        for nu in BL.levels[i - 1]:
            kids = BL.children(i - 1, nu)
            for mu in BR.levels[i]:
                pars = BR.parents(i, mu)
                T = _random_isometry_real(len(kids) * m, len(pars) * m_prev, rng)
                for a, lam in enumerate(kids):
                    es = _ext_index(BL, i - 1, nu, lam)
                    fr_new = BR.npaths(i, mu)
                    for c, rho in enumerate(pars):
                        er = _ext_index(BR, i - 1, rho, mu)
                        Yp = Y[(nu, rho)]
                        fr_old = BR.npaths(i - 1, rho)
                        blk = T[a * m:(a + 1) * m, c * m_prev:(c + 1) * m_prev]
                        vals = math.sqrt(weyl_dim(mu) / weyl_dim(rho)) * Yp @ blk.T
                        s_old, r_old = np.divmod(np.arange(Yp.shape[0]), fr_old)
                        rows = es[s_old] * fr_new + er[r_old]
                        new[(lam, mu)][rows] += vals
        Y = new
        m_prev = m
    top = {k: v @ v.T for k, v in Y.items()}
    x = pack_level(S.top, top)
    w = rng.uniform() if mix is None else mix
    return (1 - w) * x + w * depolarizing_top(S)
