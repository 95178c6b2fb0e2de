"""Full-space oracle: explicit Choi matrices, comb conditions, symmetry and fidelity.

Full leg order of every Choi matrix here is (I_1, ..., I_n, F, P, O_1, ..., O_n):
the B_L legs followed by the B_R legs.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .comb_sdp import CoefficientBlocks, CombStructure
from .matrix_units import irrep_isometry, path_isometry, permute_legs
from .rep_theory import Bratteli, Leg, Task, build_bratteli, ChainSpec, chain_for_task, task_legs, weyl_dim

MAX_FULL_DIM = 4096


class ScaleError(RuntimeError):
    pass


def leg_names(n: int) -> List[str]:
    return [f"I{i}" for i in range(1, n + 1)] + ["F", "P"] + [f"O{i}" for i in range(1, n + 1)]


@dataclass
class ChoiMatrix:
    data: np.ndarray
    d: int
    legs: List[str] = field(default_factory=list)

    @property
    def n(self) -> int:
        return len(self.legs) // 2 - 1


def _guard(d: int, n_legs: int, force: bool) -> None:
    if d ** n_legs > MAX_FULL_DIM and not force:
        raise ScaleError(f"full space dimension {d ** n_legs} exceeds {MAX_FULL_DIM}; pass force=True")


# ---------------------------------------------------------------- leg bookkeeping

def permute_operator(M: np.ndarray, perm: Sequence[int], d: int) -> np.ndarray:
    """psi M psi^T for the leg permutation psi (new leg j = old leg perm[j])."""
    k = len(perm)
    t = M.reshape((d,) * (2 * k))
    t = np.transpose(t, tuple(perm) + tuple(k + p for p in perm))
    return t.reshape(M.shape)


def partial_trace(M: np.ndarray, d: int, n_legs: int, traced: Sequence[int]) -> np.ndarray:
    """Trace out the listed legs of an operator on (C^d)^{n_legs}."""
    t = M.reshape((d,) * (2 * n_legs))
    keep = [j for j in range(n_legs) if j not in set(traced)]
    letters = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ"
    rows = list(letters[:n_legs])
    cols = list(letters[n_legs:2 * n_legs])
    for j in traced:
        cols[j] = rows[j]
    out = "".join(rows[j] for j in keep) + "".join(cols[j] for j in keep)
    r = np.einsum("".join(rows) + "".join(cols) + "->" + out, t)
    D = d ** len(keep)
    return r.reshape(D, D)


# ---------------------------------------------------------------- Choi from blocks

def choi_from_blocks(blocks: CoefficientBlocks, BL: Bratteli, BR: Bratteli, force: bool = False) -> ChoiMatrix:
    """C = sum c^{lam mu}_{S S' Q Q'} E^lam_{S S'}/d_lam (x) Et^mu_{Q Q'}/d_mu."""
    k = BL.depth
    d = BL.d
    _guard(d, 2 * k, force)
    D = d ** (2 * k)
    C = np.zeros((D, D))
    for (lam, mu), c in blocks.top.items():
        if not np.any(c):
            continue
        dl, dm = weyl_dim(lam), weyl_dim(mu)
        UL = irrep_isometry(BL, k, lam)  # columns (S, a)
        UR = irrep_isometry(BR, k, mu)   # columns (Q, b)
        fl, fr = UL.shape[1] // dl, UR.shape[1] // dm
        # core[(S,a,Q,b),(S',a',Q',b')] = c[(S,Q),(S',Q')] delta_aa' delta_bb' / (dl dm)
        c4 = c.reshape(fl, fr, fl, fr)
        core = np.einsum("sqtr,ab,xy->saqxtbry", c4, np.eye(dl), np.eye(dm)) / (dl * dm)
        n_core = fl * dl * fr * dm
        core = core.reshape(n_core, n_core)
        K = np.kron(UL, UR)  # columns ((S,a),(Q,b)) in that order
        C += K @ core @ K.T
    return ChoiMatrix(C, d, leg_names(k - 1))


def blocks_from_choi(C: ChoiMatrix, BL: Bratteli, BR: Bratteli) -> Dict[Tuple, np.ndarray]:
    """Project a full Choi matrix back onto the matrix-unit basis."""
    k = BL.depth
    out = {}
    for lam in BL.levels[k]:
        UL = irrep_isometry(BL, k, lam)
        dl = weyl_dim(lam)
        fl = UL.shape[1] // dl
        for mu in BR.levels[k]:
            UR = irrep_isometry(BR, k, mu)
            dm = weyl_dim(mu)
            fr = UR.shape[1] // dm
            K = np.kron(UL, UR)
            R = (K.T @ C.data @ K).reshape(fl, dl, fr, dm, fl, dl, fr, dm)
            # c[(S,Q),(S',Q')] = Tr over the irrep factors
            c = np.einsum("saqbtarb->sqtr", R)
            out[(lam, mu)] = c.reshape(fl * fr, fl * fr)
    return out


# ---------------------------------------------------------------- comb conditions

@dataclass
class CombReport:
    min_eigenvalue: float
    hermiticity: float
    marginal_residuals: List[float]
    normalization: float

    @property
    def max_residual(self) -> float:
        return max([self.hermiticity, abs(self.normalization)] + self.marginal_residuals
                   + [max(0.0, -self.min_eigenvalue)])


def marginal_chain(C: ChoiMatrix) -> List[np.ndarray]:
    """[C_0, C_1, ..., C_{n+1}] with C_{i-1} = Tr_{I_i, O_{i-1}} C_i / d.

    C_i lives on legs (I_1..I_i, P, O_1..O_{i-1}) in that order (I_{n+1} = F, O_0 = P).
    """
    n, d = C.n, C.d
    names = ["I%d" % i for i in range(1, n + 1)] + ["I%d" % (n + 1), "O0"] + ["O%d" % i for i in range(1, n + 1)]
    chain = [None] * (n + 2)
    chain[n + 1] = (C.data, names)
    for i in range(n + 1, 0, -1):
        M, legs = chain[i]
        tr = [legs.index("I%d" % i), legs.index("O%d" % (i - 1))]
        rest = [x for j, x in enumerate(legs) if j not in tr]
        chain[i - 1] = (partial_trace(M, d, len(legs), tr) / d, rest)
    return [m for m, _ in chain], [l for _, l in chain]


def check_comb_conditions(C: ChoiMatrix) -> CombReport:
    """PSD, Tr_{I_i} C_i = C_{i-1} (x) 1_{O_{i-1}} for i = 1..n+1, and C_0 = 1."""
    d = C.d
    M = C.data
    herm = float(np.abs(M - M.conj().T).max())
    mins = float(np.linalg.eigvalsh((M + M.conj().T) / 2)[0])
    mats, legs = marginal_chain(C)
    res = []
    for i in range(1, C.n + 2):
        Mi, li = mats[i], legs[i]
        j = li.index("I%d" % i)
        lhs = partial_trace(Mi, d, len(li), [j])
        rest = [x for x in li if x != "I%d" % i]
        # C_{i-1} (x) 1_{O_{i-1}} ordered as `rest`
        rhs = np.kron(mats[i - 1], np.eye(d))
        cur = legs[i - 1] + ["O%d" % (i - 1)]
        perm = [cur.index(x) for x in rest]
        rhs = permute_operator(rhs, perm, d)
        res.append(float(np.abs(lhs - rhs).max()))
    norm = float(np.real(mats[0].ravel()[0]) - 1.0)
    return CombReport(mins, herm, res, norm)


# ---------------------------------------------------------------- symmetry

def haar_unitary(d: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random unitary: QR of a complex Ginibre matrix with phase-fixed R diagonal."""
    Z = (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))) / math.sqrt(2)
    Q, R = np.linalg.qr(Z)
    ph = np.diag(R) / np.abs(np.diag(R))
    return Q * ph


def _tensor_action(g: np.ndarray, legs: Sequence[Leg]) -> np.ndarray:
    out = np.ones((1, 1))
    for leg in legs:
        out = np.kron(out, g if leg == Leg.DEF else g.conj())
    return out


def check_symmetry(C: ChoiMatrix, task, samples: int = 20, seed: int = 0) -> float:
    """max_F ||[C, W]|| over random W = (V on the B_L legs) (x) (U on the B_R legs)."""
    task = Task(task)
    left, right = task_legs(task, C.n)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(samples):
        V = haar_unitary(C.d, rng)
        U = haar_unitary(C.d, rng)
        W = np.kron(_tensor_action(V, left), _tensor_action(U, right))
        worst = max(worst, float(np.linalg.norm(C.data @ W - W @ C.data)))
    return worst


# ---------------------------------------------------------------- performance operator

def _perm_matrices(k: int, d: int) -> Tuple[List[Tuple[int, ...]], List[np.ndarray]]:
    perms = list(itertools.permutations(range(k)))
    I = np.eye(d ** k)
    return perms, [permute_legs(I, p, d) for p in perms]


def _cycles(p: Sequence[int]) -> int:
    seen, c = set(), 0
    for s in range(len(p)):
        if s not in seen:
            c += 1
            j = s
            while j not in seen:
                seen.add(j)
                j = p[j]
    return c


def twirl(A: np.ndarray, d: int, k: int) -> np.ndarray:
    """Integral of (1 (x) V^{(x)k}) A (1 (x) V^{(x)k})^dagger over Haar V.

    The twirled factor is the last k legs.  Exact, via the orthogonal projection
    onto span{P_sigma}: sum_{s,t} Wg[s,t] Tr_k(A P_s^T) (x) P_t with Wg the
    pseudo-inverse of the Gram matrix d^{cycles(s^-1 t)}.
    """
    perms, P = _perm_matrices(k, d)
    m = len(perms)
    G = np.empty((m, m))
    for a in range(m):
        for b in range(m):
            G[a, b] = float(np.trace(P[a].T @ P[b]))
    Wg = np.linalg.pinv(G)
    D = d ** k
    Dspec = A.shape[0] // D
    A4 = A.reshape(Dspec, D, Dspec, D)
    partial = [np.einsum("itju,ut->ij", A4, Ps.T) for Ps in P]
    out = np.zeros_like(A)
    for a in range(m):
        for b in range(m):
            if Wg[a, b] != 0.0:
                out += Wg[a, b] * np.kron(partial[a], P[b])
    return out


def _partial_transpose_last(M: np.ndarray, d: int) -> np.ndarray:
    D = M.shape[0] // d
    return M.reshape(D, d, D, d).transpose(0, 3, 2, 1).reshape(M.shape)


def _to_full_order(n: int) -> List[int]:
    """Perm from (I_1..I_n, F, O_1..O_n, P) to (I_1..I_n, F, P, O_1..O_n)."""
    k = n + 1
    return list(range(k)) + [2 * k - 1] + list(range(k, 2 * k - 1))


def omega_full(task, d: int, n: int, force: bool = False) -> np.ndarray:
    """Performance operator with F_avg = Tr(C Omega), computed by exact Haar twirling."""
    task = Task(task)
    k = n + 1
    _guard(d, 2 * k, force)
    D = d ** k
    phi = np.eye(D).ravel()  # pairs I_i <-> O_i and F <-> P
    A = np.outer(phi, phi)
    if task == Task.INVERT:
        Om = twirl(A, d, k)
    else:
        Om = _partial_transpose_last(twirl(_partial_transpose_last(A, d), d, k), d)
    Om = Om / d ** 2
    return permute_operator(Om, _to_full_order(n), d)


def fidelity_full(C: ChoiMatrix, task, force: bool = False) -> float:
    return float(np.real(np.vdot(omega_full(task, C.d, C.n, force), C.data)))


# ---------------------------------------------------------------- Monte Carlo

def _probe_vector(U: np.ndarray, task: Task, n: int) -> np.ndarray:
    """|U*>>^{(x)n} on (I_i, O_i) and |f(U)>> on (P, F), in the full leg order."""
    d = U.shape[0]
    M = U.conj()
    ops = [M] * n + ([M] if task == Task.INVERT else [U])
    W = np.ones((1, 1))
    for o in ops:
        W = np.kron(W, o)
    x = W.T.ravel()  # (1 (x) W)|Phi> with legs (I.., F, O.., P)
    k = n + 1
    t = x.reshape((d,) * (2 * k))
    t = np.transpose(t, _to_full_order(n))
    return t.ravel()


def pointwise_fidelity(C: ChoiMatrix, task, U: np.ndarray) -> float:
    """Channel fidelity between the comb's output on U^{(x)n} and the target f(U)."""
    x = _probe_vector(U, Task(task), C.n)
    return float(np.real(np.vdot(x, C.data @ x))) / C.d ** 2


def haar_fidelity_mc(C: ChoiMatrix, task, samples: int = 10_000, seed: int = 0,
                     return_samples: bool = False):
    """Sample mean and standard error of the pointwise fidelity over Haar unitaries."""
    rng = np.random.default_rng(seed)
    vals = np.array([pointwise_fidelity(C, task, haar_unitary(C.d, rng)) for _ in range(samples)])
    mean = float(np.mean(vals))
    err = float(np.std(vals, ddof=1) / math.sqrt(samples)) if samples > 1 else float("nan")
    if return_samples:
        return mean, err, vals
    return mean, err


# ---------------------------------------------------------------- algebra lemma

def verify_lemma_partial_trace(d: int, legs: Sequence[Leg]) -> Dict[str, float]:
    """Brute-force check of the tensor-extension and partial-trace identities.

    * E^mu_{rs} (x) 1_d = sum over edges mu -> lam of E^lam_{r->lam, s->lam}
    * Tr_last E^lam_{pq} = (d_lam / d_mu) E^mu_{p', q'} when p, q end with the
      same edge mu -> lam (p', q' the truncated paths), and 0 otherwise.
    """
    legs = [Leg(l) for l in legs]
    B = build_bratteli(ChainSpec(d, tuple(legs)))
    k = len(legs)
    tens = ptr = 0.0
    for lev in range(1, k + 1):
        for mu in B.levels[lev - 1]:
            P = B.paths(lev - 1, mu)
            for r in P:
                Ur = path_isometry(B, r)
                for s in P:
                    Us = path_isometry(B, s)
                    lhs = np.kron(Ur @ Us.T, np.eye(d))
                    rhs = np.zeros_like(lhs)
                    for lam in B.children(lev - 1, mu):
                        rhs += path_isometry(B, r + (lam,)) @ path_isometry(B, s + (lam,)).T
                    tens = max(tens, float(np.abs(lhs - rhs).max()))
        for lam in B.levels[lev]:
            P = B.paths(lev, lam)
            for p in P:
                Up = path_isometry(B, p)
                for q in P:
                    Uq = path_isometry(B, q)
                    got = partial_trace(Up @ Uq.T, d, lev, [lev - 1])
                    if p[-2] == q[-2]:
                        mu = p[-2]
                        want = weyl_dim(lam) / weyl_dim(mu) * (path_isometry(B, p[:-1]) @ path_isometry(B, q[:-1]).T)
                    else:
                        want = np.zeros_like(got)
                    ptr = max(ptr, float(np.abs(got - want).max()))
    return {"tensor_identity": tens, "partial_trace": ptr}
