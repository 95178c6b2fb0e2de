"""Dense block-diagonal primal-dual interior point SDP solver.

Primal:  maximize <C, X>  s.t.  <A_k, X> = b_k,  X >= 0
Dual:    minimize b^T y   s.t.  sum_k y_k A_k - C = Z >= 0

Infeasible-start path following with the HKM direction and Mehrotra's
predictor-corrector.  Constraint matrices are stored per block as CSR rows of
row-major vectorized symmetric matrices.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from . import kernels

log = logging.getLogger(__name__)

STEP = 0.98
REG = 1e-12


@dataclass
class SDPProblem:
    block_sizes: List[int]
    C: List[np.ndarray]
    A: List[sp.csr_matrix]  # A[j]: (m, n_j^2)
    b: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def m(self) -> int:
        return len(self.b)

    def op(self, X: List[np.ndarray]) -> np.ndarray:
        out = np.zeros(self.m)
        for Aj, Xj in zip(self.A, X):
            out += Aj @ Xj.ravel()
        return out

    def adj(self, y: np.ndarray) -> List[np.ndarray]:
        return [(Aj.T @ y).reshape(n, n) for Aj, n in zip(self.A, self.block_sizes)]

    def check(self) -> None:
        for n, Cj, Aj in zip(self.block_sizes, self.C, self.A):
            if Cj.shape != (n, n) or Aj.shape != (self.m, n * n):
                raise ValueError("inconsistent block dimensions")
            if np.abs(Cj - Cj.T).max() > 1e-12:
                raise ValueError("objective block is not symmetric")


@dataclass
class SDPSolution:
    X: List[np.ndarray]
    y: np.ndarray
    Z: List[np.ndarray]
    pobj: float
    dobj: float
    gap: float
    pinf: float
    dinf: float
    iterations: int
    status: str
    seconds: float = 0.0
    history: list = field(default_factory=list)


def _inner(U: List[np.ndarray], V: List[np.ndarray]) -> float:
    return float(sum(np.vdot(u, v) for u, v in zip(U, V)))


def _max_step(X: List[np.ndarray], dX: List[np.ndarray]) -> float:
    alpha = np.inf
    for Xj, dj in zip(X, dX):
        L = np.linalg.cholesky(Xj)
        Li = sla.solve_triangular(L, np.eye(len(L)), lower=True)
        w = np.linalg.eigvalsh(Li @ dj @ Li.T)
        if w[0] < 0:
            alpha = min(alpha, -1.0 / w[0])
    return alpha


def _schur(problem: SDPProblem, X, Zinv, rows_nz, kernel) -> np.ndarray:
    M = np.zeros((problem.m, problem.m))
    for Aj, Xj, Zj, rows in zip(problem.A, X, Zinv, rows_nz):
        if len(rows) == 0:
            continue
        sub = Aj[rows]
        Mj = kernel(sub.indptr, sub.indices, sub.data, Xj, Zj)
        M[np.ix_(rows, rows)] += Mj
    return M


def _factor(M: np.ndarray):
    """Cholesky of the Schur matrix, with diagonal regularization only if needed."""
    scale = max(1.0, np.abs(np.diag(M)).max())
    reg = 0.0
    while True:
        try:
            return sla.cho_factor(M + reg * np.eye(len(M)), lower=True)
        except np.linalg.LinAlgError:
            reg = REG * scale if reg == 0.0 else reg * 100
            if reg > 1e-4 * scale:
                raise


def _sym(G: np.ndarray) -> np.ndarray:
    return (G + G.T) / 2


def solve(problem: SDPProblem, tol: float = 1e-8, max_iter: int = 200, kernel=None,
          verbose: bool = False) -> SDPSolution:
    problem.check()
    kernel = kernel or kernels.schur_block
    t0 = time.perf_counter()
    nb = problem.block_sizes
    N = sum(nb)
    b = problem.b
    C = problem.C
    rows_nz = [np.unique(Aj.tocoo().row) for Aj in problem.A]

    # starting point
    X, Z = [], []
    for j, n in enumerate(nb):
        Aj = problem.A[j]
        norms = np.sqrt(np.asarray(Aj.multiply(Aj).sum(axis=1)).ravel())
        xi = max(10.0, np.sqrt(n), n * np.max((1 + np.abs(b)) / (1 + norms)))
        eta = max(10.0, np.sqrt(n), norms.max(initial=0.0), np.linalg.norm(C[j]))
        X.append(xi * np.eye(n))
        Z.append(eta * np.eye(n))
    y = np.zeros(problem.m)
    normb = 1 + np.linalg.norm(b)
    normC = 1 + np.sqrt(sum(np.sum(c * c) for c in C))

    status = "MaxIter"
    history = []
    it = 0
    for it in range(max_iter + 1):
        rp = b - problem.op(X)
        ATy = problem.adj(y)
        Rd = [c - a + z for c, a, z in zip(C, ATy, Z)]
        pobj = _inner(C, X)
        dobj = float(b @ y)
        mu = _inner(X, Z) / N
        pinf = np.linalg.norm(rp) / normb
        dinf = np.sqrt(sum(np.sum(r * r) for r in Rd)) / normC
        gap = abs(pobj - dobj) / (1 + abs(pobj) + abs(dobj))
        history.append((it, pobj, dobj, gap, pinf, dinf))
        if verbose:
            log.info("it %3d pobj %.10e dobj %.10e gap %.2e pinf %.2e dinf %.2e", it, pobj, dobj, gap, pinf, dinf)
        if max(gap, pinf, dinf) <= tol:
            status = "Optimal"
            break
        if it == max_iter:
            break
        if pinf < tol and dobj - pobj < -1e3 * (1 + abs(pobj)) and it > 30:
            status = "Infeasible"
            break
        try:
            Zinv = []
            for Zj in Z:
                cf = sla.cho_factor(Zj, lower=True)
                Zinv.append(_sym(sla.cho_solve(cf, np.eye(len(Zj)))))
            M = _schur(problem, X, Zinv, rows_nz, kernel)
            cfM = _factor(M)
        except np.linalg.LinAlgError:
            status = "NumericalFailure"
            break

        XRdZ = [Xj @ R @ Zi for Xj, R, Zi in zip(X, Rd, Zinv)]

        def direction(sigma, corr=None):
            G = []
            for j in range(len(nb)):
                g = sigma * mu * Zinv[j] - X[j] + XRdZ[j]
                if corr is not None:
                    g = g - corr[j]
                G.append(g)
            rhs = problem.op(G) - rp
            dy = sla.cho_solve(cfM, rhs)
            for _ in range(2):  # iterative refinement against the unregularized M
                dy += sla.cho_solve(cfM, rhs - M @ dy)
            ATdy = problem.adj(dy)
            dZ = [a - r for a, r in zip(ATdy, Rd)]
            dX = []
            for j in range(len(nb)):
                g = sigma * mu * Zinv[j] - X[j] - X[j] @ dZ[j] @ Zinv[j]
                if corr is not None:
                    g = g - corr[j]
                dX.append(_sym(g))
            return dX, dy, dZ

        try:
            dXa, dya, dZa = direction(0.0)
            ap = min(1.0, STEP * _max_step(X, dXa))
            ad = min(1.0, STEP * _max_step(Z, dZa))
            mu_aff = _inner([x + ap * d for x, d in zip(X, dXa)], [z + ad * d for z, d in zip(Z, dZa)]) / N
            sigma = min(1.0, max(0.0, (mu_aff / mu) ** 3))
            corr = [dx @ dz @ zi for dx, dz, zi in zip(dXa, dZa, Zinv)]
            dX, dy, dZ = direction(sigma, corr)
            ap = min(1.0, STEP * _max_step(X, dX))
            ad = min(1.0, STEP * _max_step(Z, dZ))
        except np.linalg.LinAlgError:
            status = "NumericalFailure"
            break
        X = [_sym(x + ap * d) for x, d in zip(X, dX)]
        y = y + ad * dy
        Z = [_sym(z + ad * d) for z, d in zip(Z, dZ)]

    return SDPSolution(X=X, y=y, Z=Z, pobj=pobj, dobj=dobj, gap=gap, pinf=pinf, dinf=dinf,
                       iterations=it, status=status, seconds=time.perf_counter() - t0, history=history)


@dataclass
class KKTReport:
    primal_residual: float
    dual_residual: float
    gap: float
    min_eig_X: float
    min_eig_Z: float
    complementarity: float

    def worst(self) -> float:
        return max(self.primal_residual, self.dual_residual, self.gap,
                   -self.min_eig_X, -self.min_eig_Z)


def check_kkt(problem: SDPProblem, sol: SDPSolution) -> KKTReport:
    """Recompute all optimality residuals from scratch (relative norms)."""
    rp = problem.b - problem.op(sol.X)
    ATy = problem.adj(sol.y)
    Rd = [c - a + z for c, a, z in zip(problem.C, ATy, sol.Z)]
    normC = 1 + np.sqrt(sum(np.sum(c * c) for c in problem.C))
    pobj = _inner(problem.C, sol.X)
    dobj = float(problem.b @ sol.y)
    mx = min(np.linalg.eigvalsh(x)[0] for x in sol.X)
    mz = min(np.linalg.eigvalsh(z)[0] for z in sol.Z)
    return KKTReport(
        primal_residual=float(np.linalg.norm(rp) / (1 + np.linalg.norm(problem.b))),
        dual_residual=float(np.sqrt(sum(np.sum(r * r) for r in Rd)) / normC),
        gap=abs(pobj - dobj) / (1 + abs(pobj) + abs(dobj)),
        min_eig_X=float(mx),
        min_eig_Z=float(mz),
        complementarity=_inner(sol.X, sol.Z),
    )
