"""Streaming-circuit reconstruction of symmetric combs from their coefficient blocks.

A comb with blocks c^{lam mu} is realized by stage isometries
W_i : A_{i-1} (x) O_{i-1} -> I_i (x) A_i  (I_{n+1} = F, O_0 = P), with memory

    A_i = sum over pairs (lam, mu) at level i of  V_lam (x) C^{m_i} (x) V_mu.

Each W_i is a product of three pieces acting on separate factors:
  * the input-side CG transform V_rho (x) C^d -> sum_mu V_mu,
  * the output-side dual CG map V_nu -> C^d (x) V_lam, sqrt(d_nu/d_lam) Gamma,
  * a memory map T = (sqrt(d_rho/d_mu) Y_{i-1}^+ Z)^T between multiplicity factors,
where Y_i Y_i^T = c^i and Z are the rows of Y_i on edge extensions.
The composed network has Choi matrix Tr_A |W><W| which must equal the ansatz.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .choi_verify import ChoiMatrix, ScaleError, choi_from_blocks, partial_trace
from .comb_sdp import CoefficientBlocks, _ext_index, comb_structure
from .matrix_units import REGISTRY, path_isometry
from .rep_theory import Bratteli, ChainSpec, Label, Leg, build_bratteli, chain_for_task, weyl_dim

PINV_TOL = 1e-10
NEG_TOL = 1e-8
MAX_VECTOR_DIM = 10 ** 6


def psd_factor(c: np.ndarray, tol: float = PINV_TOL) -> np.ndarray:
    """Y with Y Y^T = c, keeping eigenvalues above tol * max."""
    c = (c + c.T) / 2
    w, V = np.linalg.eigh(c)
    if w.size and w[0] < -NEG_TOL * max(1.0, abs(w[-1])):
        raise ValueError(f"block has a negative eigenvalue {w[0]:.3e}")
    keep = w > tol * max(w[-1] if w.size else 0.0, 1e-300)
    return V[:, keep] * np.sqrt(w[keep])


@dataclass
class MemoryLayout:
    """Index layout of A_i: pairs, their memory width m and offsets."""

    pairs: List[Tuple[Label, Label]]
    dims: List[Tuple[int, int]]  # (d_left, d_right)
    m: int
    offsets: List[int]
    size: int

    def where(self, pair) -> int:
        return self.pairs.index(pair)


def _layout(factors: Dict[Tuple[Label, Label], np.ndarray]) -> MemoryLayout:
    pairs = [p for p, Y in factors.items() if Y.shape[1] > 0]
    m = max([factors[p].shape[1] for p in pairs], default=1)
    dims, offs, off = [], [], 0
    for lam, mu in pairs:
        a, b = weyl_dim(lam), weyl_dim(mu)
        dims.append((a, b))
        offs.append(off)
        off += a * m * b
    return MemoryLayout(pairs, dims, m, offs, off)


def _pad(Y: np.ndarray, m: int) -> np.ndarray:
    out = np.zeros((Y.shape[0], m))
    out[:, :Y.shape[1]] = Y
    return out


@dataclass
class StageIsometry:
    stage: int
    matrix: np.ndarray  # rows (j, A_i), columns (A_{i-1}, x)
    layout_in: MemoryLayout
    layout_out: MemoryLayout
    support: np.ndarray  # projector on the input support
    isometry_residual: float

    def isometric(self, tol: float = 1e-8) -> np.ndarray:
        """Polar factor of the stage matrix: the nearest partial isometry.

        For feasible blocks the formula already gives an isometry on the
        support and this is a no-op; for infeasible blocks it makes the
        reconstructed circuit physical, so the Choi mismatch exposes the defect.
        """
        if not self.matrix.size:
            return self.matrix
        U, s, Vt = np.linalg.svd(self.matrix, full_matrices=False)
        k = int(np.sum(s > tol))
        return U[:, :k] @ Vt[:k]


def isometries_from_coefficients(blocks: CoefficientBlocks, BL: Bratteli, BR: Bratteli) -> List[StageIsometry]:
    d, n = blocks.d, blocks.n
    factors = [{p: psd_factor(c) for p, c in lv.items()} for lv in blocks.levels]
    layouts = [_layout(f) for f in factors]
    stages = []
    for i in range(1, n + 2):
        Lin, Lout = layouts[i - 1], layouts[i]
        mi, mo = Lin.m, Lout.m
        W = np.zeros((d * Lout.size, Lin.size * d))
        W4 = W.reshape(d, Lout.size, Lin.size, d)
        proj = np.zeros((Lin.size * d, Lin.size * d))
        P4 = proj.reshape(Lin.size, d, Lin.size, d)
        for pi, (nu, rho) in enumerate(Lin.pairs):
            dn, dr = Lin.dims[pi]
            Yp = _pad(factors[i - 1][(nu, rho)], mi)
            Yp_pinv = np.linalg.pinv(Yp, rcond=PINV_TOL)
            sup = Yp_pinv @ Yp
            o = Lin.offsets[pi]
            blk = np.einsum("ab,kl,ce,xy->akcxbley", np.eye(dn), sup, np.eye(dr), np.eye(d))
            sz = dn * mi * dr
            P4[o:o + sz, :, o:o + sz, :] = blk.reshape(sz, d, sz, d)
            fr_old = BR.npaths(i - 1, rho)
            for lam in BL.children(i - 1, nu):
                es = _ext_index(BL, i - 1, nu, lam)
                gl = REGISTRY.edge(nu, BL.legs[i - 1], lam).gamma.reshape(dn, d, -1)
                for mu in BR.children(i - 1, rho):
                    if (lam, mu) not in Lout.pairs:
                        continue
                    qo = Lout.where((lam, mu))
                    dl, dm = Lout.dims[qo]
                    er = _ext_index(BR, i - 1, rho, mu)
                    Yn = _pad(factors[i][(lam, mu)], mo)
                    fr_new = BR.npaths(i, mu)
                    s_old, r_old = np.divmod(np.arange(Yp.shape[0]), fr_old)
                    Z = Yn[es[s_old] * fr_new + er[r_old]]
                    T = (math.sqrt(dr / dm) * Yp_pinv @ Z).T  # m_out x m_in
                    gr = REGISTRY.edge(rho, BR.legs[i - 1], mu).gamma.reshape(dr, d, -1)
                    # out (j, a', k', b'); in (a, k, b, x)
                    piece = math.sqrt(dn / dl) * np.einsum("ajp,qk,bxr->jpqrakbx", gl, T, gr)
                    oo = Lout.offsets[qo]
                    W4[:, oo:oo + dl * mo * dm, o:o + sz, :] += piece.reshape(d, dl * mo * dm, sz, d)
        res = float(np.abs(W.T @ W - proj).max()) if W.size else 0.0
        stages.append(StageIsometry(i, W, Lin, Lout, proj, res))
    return stages


@dataclass
class CombVector:
    """|W>> on (I_1..I_n, F) x (P, O_1..O_n) x A_{n+1}, stored as a matrix."""

    data: np.ndarray  # shape (d^(2(n+1)), dim A)
    d: int
    n: int

    @property
    def norm2(self) -> float:
        return float(np.sum(np.abs(self.data) ** 2))

    def choi(self) -> np.ndarray:
        return self.data @ self.data.conj().T


def build_comb_vector(stages: Sequence[StageIsometry], d: int, n: int) -> CombVector:
    """Chain the stage isometries on explicit tensors, one input leg at a time."""
    dimA_max = max(s.layout_out.size for s in stages)
    if d ** (2 * (n + 1)) * dimA_max > MAX_VECTOR_DIM:
        raise ScaleError("comb vector exceeds the desk-scale dimension guard")
    psi = np.ones((1, 1, 1))  # (L, R, A)
    for st in stages:
        Ain, Aout = st.layout_in.size, st.layout_out.size
        W = st.isometric().reshape(d, Aout, Ain, d)
        # new[L, j, R, x, A'] = sum_A W[j, A', A, x] psi[L, R, A]
        new = np.einsum("jpax,lra->ljrxp", W, psi)
        Ld, Rd = psi.shape[0] * d, psi.shape[1] * d
        psi = new.reshape(Ld, Rd, Aout)
    return CombVector(psi.reshape(-1, psi.shape[2]), d, n)


def verify_theorem1(blocks: CoefficientBlocks, BL: Optional[Bratteli] = None, BR: Optional[Bratteli] = None,
                    return_details: bool = False):
    """Frobenius distance between the reconstructed circuit's Choi matrix and the ansatz."""
    if BL is None:
        BL, BR = chain_for_task(blocks.task, blocks.d, blocks.n)
    stages = isometries_from_coefficients(blocks, BL, BR)
    vec = build_comb_vector(stages, blocks.d, blocks.n)
    C = choi_from_blocks(blocks, BL, BR).data
    res = float(np.linalg.norm(vec.choi() - C))
    if return_details:
        return res, {"isometry_residual": max(s.isometry_residual for s in stages),
                     "norm2": vec.norm2, "memory": [s.layout_out.m for s in stages]}
    return res


# ---------------------------------------------------------------- covariant combs

@dataclass
class CovariantBlocks:
    """Blocks C^lam over single-diagram paths at the even levels 0, 2, ..., 2n.

    Legs of the diagram are (I_1, O_1, ..., I_n, O_n); C = sum C^lam_pq E^lam_pq / d_lam.
    """

    B: Bratteli
    levels: List[Dict[Label, np.ndarray]]

    @property
    def n(self) -> int:
        return len(self.B.legs) // 2

    @property
    def top(self) -> Dict[Label, np.ndarray]:
        return self.levels[-1]


def alternating_chain(d: int, n: int, output: Leg = Leg.DEF, inp: Leg = Leg.DEF) -> Bratteli:
    legs = []
    for _ in range(n):
        legs += [Leg(inp), Leg(output)]
    return build_bratteli(ChainSpec(d, tuple(legs)))


def _two_step(B: Bratteli, k: int, lam: Label, nu: Label, mu: Label) -> np.ndarray:
    """Level-(k+2) indices of paths to lam extended by lam -> nu -> mu."""
    return np.array([B.path_index(t + (nu, mu)) for t in B.paths(k, lam)], dtype=np.int64)


def covariant_levels(B: Bratteli, top: Dict[Label, np.ndarray]) -> CovariantBlocks:
    """Fill the lower even levels by the traced recursion C_{i-1} = Tr_{I_i O_i} C_i / d_I."""
    n = len(B.legs) // 2
    levels: List[Dict[Label, np.ndarray]] = [None] * (n + 1)
    levels[n] = {lam: np.asarray(top.get(lam, np.zeros((B.npaths(2 * n, lam),) * 2)), dtype=float)
                 for lam in B.levels[2 * n]}
    for i in range(n, 0, -1):
        k = 2 * i - 2
        cur = {}
        for lam in B.levels[k]:
            f = B.npaths(k, lam)
            acc = np.zeros((f, f))
            for nu in B.children(k, lam):
                for mu in B.children(k + 1, nu):
                    idx = _two_step(B, k, lam, nu, mu)
                    acc += levels[i][mu][np.ix_(idx, idx)]
            cur[lam] = acc / B.d
        levels[i - 1] = cur
    return CovariantBlocks(B, levels)


def covariant_depolarizing(B: Bratteli) -> CovariantBlocks:
    n = len(B.legs) // 2
    top = {lam: np.eye(B.npaths(2 * n, lam)) * weyl_dim(lam) / B.d ** n for lam in B.levels[2 * n]}
    return covariant_levels(B, top)


def random_covariant_blocks(B: Bratteli, rng: np.random.Generator, mix: Optional[float] = None) -> CovariantBlocks:
    """Random covariant comb from random stage isometries on the multiplicity spaces.

    Y_i[p -> nu -> mu] = sqrt(d_nu / d_lam) T^{nu}_{mu lam} Y_{i-1}[p] with
    [T_{mu lam}] an isometry for every middle label nu.
    """
    n = len(B.legs) // 2
    t0 = B.levels[0][0]
    Y = {t0: np.ones((1, 1))}
    m_prev = 1
    for i in range(1, n + 1):
        k = 2 * i - 2
        mp = max(len(B.parents(k + 1, nu)) for nu in B.levels[k + 1])
        m = m_prev * mp
        new = {mu: np.zeros((B.npaths(k + 2, mu), m)) for mu in B.levels[k + 2]}
        for nu in B.levels[k + 1]:
            pars = B.parents(k + 1, nu)
            kids = B.children(k + 1, nu)
            Q, R = np.linalg.qr(rng.standard_normal((len(kids) * m, len(pars) * m_prev)))
            T = Q * np.sign(np.diag(R))
            for a, mu in enumerate(kids):
                for c, lam in enumerate(pars):
                    idx = _two_step(B, k, lam, nu, mu)
                    blk = T[a * m:(a + 1) * m, c * m_prev:(c + 1) * m_prev]
                    new[mu][idx] += math.sqrt(weyl_dim(nu) / weyl_dim(lam)) * Y[lam] @ blk.T
        Y = new
        m_prev = m
    top = {mu: v @ v.T for mu, v in Y.items()}
    w = rng.uniform() if mix is None else mix
    dep = covariant_depolarizing(B).top
    top = {mu: (1 - w) * top[mu] + w * dep[mu] for mu in top}
    return covariant_levels(B, top)


def covariant_constraint_residual(cb: CovariantBlocks) -> float:
    """Reduced comb conditions: sum_mu C_i^mu on paths through nu = (d_nu/d_lam) C_{i-1}^lam on shared parents."""
    B = cb.B
    worst = 0.0
    for i in range(1, cb.n + 1):
        k = 2 * i - 2
        for nu in B.levels[k + 1]:
            P = B.paths(k + 1, nu)
            f = len(P)
            lhs = np.zeros((f, f))
            for mu in B.children(k + 1, nu):
                idx = np.array([B.path_index(t + (mu,)) for t in P])
                lhs += cb.levels[i][mu][np.ix_(idx, idx)]
            rhs = np.zeros((f, f))
            for a, p in enumerate(P):
                for b, q in enumerate(P):
                    if p[-2] == q[-2]:
                        lam = p[-2]
                        rhs[a, b] = weyl_dim(nu) / weyl_dim(lam) * cb.levels[i - 1][lam][
                            B.path_index(p[:-1]), B.path_index(q[:-1])]
            worst = max(worst, float(np.abs(lhs - rhs).max()))
    return max(worst, abs(float(cb.levels[0][B.levels[0][0]][0, 0]) - 1.0))


def choi_from_covariant_blocks(cb: CovariantBlocks) -> np.ndarray:
    """C on legs (I_1, O_1, ..., I_n, O_n)."""
    B = cb.B
    k = len(B.legs)
    D = B.d ** k
    if D * D > MAX_VECTOR_DIM * 64:
        raise ScaleError("covariant Choi matrix too large")
    C = np.zeros((D, D))
    for lam, c in cb.top.items():
        U = [path_isometry(B, t) for t in B.paths(k, lam)]
        dl = weyl_dim(lam)
        for a, Ua in enumerate(U):
            for b, Ub in enumerate(U):
                if c[a, b] != 0.0:
                    C += c[a, b] * (Ua @ Ub.T) / dl
    return C


def check_covariant_comb(C: np.ndarray, d: int, n: int) -> float:
    """Full-space comb conditions Tr_{O_i} C^(i) = C^(i-1) (x) 1_{I_i}, C^(0) = 1, on (I_1, O_1, ...)."""
    worst = 0.0
    cur = C
    for i in range(n, 0, -1):
        legs = 2 * i
        t = partial_trace(cur, d, legs, [legs - 1])  # drop O_i
        prev = partial_trace(t, d, legs - 1, [legs - 2]) / d  # drop I_i
        worst = max(worst, float(np.abs(t - np.kron(prev, np.eye(d))).max()))
        cur = prev
    return max(worst, abs(float(cur.ravel()[0]) - 1.0))


def covariant_stage_isometries(cb: CovariantBlocks) -> List[StageIsometry]:
    """W_i : A_{i-1} (x) I_i -> O_i (x) A_i with A_i = sum_lam V_lam (x) C^{m_i}."""
    B, d = cb.B, cb.B.d
    factors = [{lam: psd_factor(c) for lam, c in lv.items()} for lv in cb.levels]
    triv = B.levels[0][0]
    layouts = []
    for i, f in enumerate(factors):
        pairs = [(lam, triv) for lam, Y in f.items() if Y.shape[1] > 0]
        m = max([f[p[0]].shape[1] for p in pairs], default=1)
        dims, offs, off = [], [], 0
        for lam, _ in pairs:
            dims.append((weyl_dim(lam), 1))
            offs.append(off)
            off += weyl_dim(lam) * m
        layouts.append(MemoryLayout(pairs, dims, m, offs, off))
    stages = []
    for i in range(1, cb.n + 1):
        k = 2 * i - 2
        Lin, Lout = layouts[i - 1], layouts[i]
        mi, mo = Lin.m, Lout.m
        W = np.zeros((d * Lout.size, Lin.size * d))
        W4 = W.reshape(d, Lout.size, Lin.size, d)
        proj = np.zeros((Lin.size * d, Lin.size * d))
        P4 = proj.reshape(Lin.size, d, Lin.size, d)
        for pi, (lam, _) in enumerate(Lin.pairs):
            dlam = weyl_dim(lam)
            Yp = _pad(factors[i - 1][lam], mi)
            Yp_pinv = np.linalg.pinv(Yp, rcond=PINV_TOL)
            sup = Yp_pinv @ Yp
            o = Lin.offsets[pi]
            sz = dlam * mi
            P4[o:o + sz, :, o:o + sz, :] = np.einsum("ab,kl,xy->akxbly", np.eye(dlam), sup, np.eye(d)).reshape(sz, d, sz, d)
            for nu in B.children(k, lam):
                dnu = weyl_dim(nu)
                g_in = REGISTRY.edge(lam, B.legs[k], nu).gamma.reshape(dlam, d, dnu)
                for mu in B.children(k + 1, nu):
                    if (mu, triv) not in Lout.pairs:
                        continue
                    qo = Lout.where((mu, triv))
                    dmu = weyl_dim(mu)
                    idx = _two_step(B, k, lam, nu, mu)
                    Z = _pad(factors[i][mu], mo)[idx]
                    T = (math.sqrt(dlam / dnu) * Yp_pinv @ Z).T
                    g_out = REGISTRY.edge(nu, B.legs[k + 1], mu).gamma.reshape(dnu, d, dmu)
                    # in (a, k, x) with a in V_lam, x in I_i; CG to V_nu, then dual CG to O_i (x) V_mu
                    K = math.sqrt(dnu / dmu) * np.einsum("axn,nyb->yb ax".replace(" ", ""), g_in, g_out)
                    piece = np.einsum("ybax,qk->ybqakx", K, T)
                    oo = Lout.offsets[qo]
                    W4[:, oo:oo + dmu * mo, o:o + sz, :] += piece.reshape(d, dmu * mo, sz, d)
        res = float(np.abs(W.T @ W - proj).max()) if W.size else 0.0
        stages.append(StageIsometry(i, W, Lin, Lout, proj, res))
    return stages


def verify_theorem_covariant(cb: CovariantBlocks, return_details: bool = False):
    """Reconstruct the covariant comb circuit and compare its Choi matrix with the ansatz."""
    B, d, n = cb.B, cb.B.d, cb.n
    stages = covariant_stage_isometries(cb)
    psi = np.ones((1, 1))  # legs so far (I_1, O_1, ...) x A
    for st in stages:
        Ain, Aout = st.layout_in.size, st.layout_out.size
        W = st.isometric().reshape(d, Aout, Ain, d)
        # new[L, x, y, A'] = sum_A W[y, A', A, x] psi[L, A]   (x on I_i, y on O_i)
        new = np.einsum("ypax,la->lxyp", W, psi)
        psi = new.reshape(-1, Aout)
    Cp = psi @ psi.T
    C = choi_from_covariant_blocks(cb)
    res = float(np.linalg.norm(Cp - C))
    if return_details:
        return res, {"isometry_residual": max(s.isometry_residual for s in stages),
                     "norm2": float(np.sum(psi ** 2))}
    return res
