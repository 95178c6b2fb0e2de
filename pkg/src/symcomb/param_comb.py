"""Parametrized combs with one-dimensional memory and their Riemannian optimization.

Stage i (1..n+1) carries one isometry per label pair (nu, mu) with nu at level
i-1 of B_L and mu at level i of B_R.  Its columns are the parents rho of mu in
B_R, its rows the children lam of nu in B_L.  Amplitudes on path pairs follow

    a_i(s -> lam, R -> mu) = sqrt(d_mu / d_rho) W^{nu mu}[lam, rho] a_{i-1}(s, R),   a_0 = 1,

and the induced coefficient blocks are c^i = a_i a_i^dagger.  The comb
conditions hold at every level exactly when each W is an isometry on the
columns that can carry amplitude.  A block with more such columns than rows
cannot be an isometry; the offending upstream pairs are pruned (held at zero).
"""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, List, Optional, Sequence, Tuple

import numpy as np

from .comb_sdp import (CoefficientBlocks, CombStructure, _ext_index, comb_structure, overlap_matrix,
                       pack_level)
from .rep_theory import Bratteli, Label, Task, chain_for_task, weyl_dim

log = logging.getLogger(__name__)

Pair = Tuple[Label, Label]
MAX_PRUNINGS = 64


@dataclass(frozen=True)
class BlockShape:
    stage: int
    nu: Label
    mu: Label
    rows: Tuple[Label, ...]  # children lam of nu kept alive
    cols: Tuple[Label, ...]  # parents rho of mu with (nu, rho) alive

    @property
    def out_dim(self) -> int:
        return len(self.rows)

    @property
    def in_dim(self) -> int:
        return len(self.cols)


@dataclass
class ParamShape:
    task: Task
    d: int
    n: int
    pruned: FrozenSet[Tuple[int, Pair]]
    blocks: List[BlockShape]


@dataclass
class ParamComb:
    shape: ParamShape
    W: List[np.ndarray]

    @property
    def task(self) -> Task:
        return self.shape.task


# ---------------------------------------------------------------- shapes

def _violations(BL: Bratteli, BR: Bratteli, n: int, dead: FrozenSet[Tuple[int, Pair]]):
    """Blocks whose live inputs outnumber their live outputs."""
    bad = []
    for i in range(1, n + 2):
        for nu in BL.levels[i - 1]:
            if (i - 1, (nu, None)) in dead:
                continue
            for mu in BR.levels[i]:
                cols = [r for r in BR.parents(i, mu) if (i - 1, (nu, r)) not in dead]
                rows = [l for l in BL.children(i - 1, nu) if (i, (l, mu)) not in dead]
                if len(cols) > len(rows):
                    bad.append((i, nu, mu, cols, rows))
    return bad


def enumerate_prunings(task, d: int, n: int, limit: int = MAX_PRUNINGS) -> List[FrozenSet[Tuple[int, Pair]]]:
    """Minimal sets of zeroed level pairs (level, (nu, rho)) making every block fit.

    Branches over which surplus inputs to drop, repeating until no block has
    more live inputs than live outputs.
    """
    BL, BR = chain_for_task(Task(task), d, n)
    out: List[FrozenSet] = []
    seen = set()

    def rec(dead: FrozenSet):
        if len(out) >= limit or dead in seen:
            return
        seen.add(dead)
        bad = _violations(BL, BR, n, dead)
        if not bad:
            if not any(o <= dead for o in out):
                out[:] = [o for o in out if not dead <= o]
                out.append(dead)
            return
        i, nu, mu, cols, rows = bad[0]
        excess = len(cols) - len(rows)
        for drop in itertools.combinations(cols, excess):
            rec(dead | {(i - 1, (nu, r)) for r in drop})

    rec(frozenset())
    return sorted(out, key=lambda s: (len(s), sorted(s)))


def param_shape(task, d: int, n: int, pruned: Optional[FrozenSet] = None) -> ParamShape:
    """Block shapes for one pruning (default: the first minimal pruning)."""
    task = Task(task)
    BL, BR = chain_for_task(task, d, n)
    if pruned is None:
        pruned = enumerate_prunings(task, d, n)[0]
    blocks = []
    for i in range(1, n + 2):
        for nu in BL.levels[i - 1]:
            for mu in BR.levels[i]:
                cols = tuple(r for r in BR.parents(i, mu) if (i - 1, (nu, r)) not in pruned)
                rows = tuple(l for l in BL.children(i - 1, nu) if (i, (l, mu)) not in pruned)
                if not cols or not rows:
                    continue
                if len(cols) > len(rows):
                    raise ValueError("pruning leaves a block with more inputs than outputs")
                blocks.append(BlockShape(i, nu, mu, rows, cols))
    return ParamShape(task, d, n, frozenset(pruned), blocks)


def count_parameters(task, d: int, n: int) -> int:
    """Real dimension of the product of complex Stiefel manifolds, 2 in out - in^2 per block."""
    return sum(2 * b.in_dim * b.out_dim - b.in_dim ** 2 for b in param_shape(task, d, n).blocks)


def count_parameters_naive(task, d: int, n: int) -> int:
    """Real parameters of unreduced stage unitaries acting on whole irrep sums.

    Stage k acts on C^d (x) (sum of irrep spaces at level k of B_R) (x)
    (sum at level k-1 of B_L); an N x N unitary has N^2 real parameters.
    """
    BL, BR = chain_for_task(Task(task), d, n)
    tot = 0
    for k in range(1, n + 2):
        N = d * sum(map(weyl_dim, BR.levels[k])) * sum(map(weyl_dim, BL.levels[k - 1]))
        tot += N * N
    return tot


# ---------------------------------------------------------------- amplitudes

@dataclass
class _Stage:
    """Precomputed index maps for one block: where each (rho, lam) piece lands."""

    block: int
    nu: Label
    mu: Label
    pieces: List[Tuple[int, int, float, Pair, np.ndarray, np.ndarray]]


class CombModel:
    """Structure shared by all parametrized combs of one (task, d, n, pruning)."""

    def __init__(self, shape: ParamShape, S: Optional[CombStructure] = None):
        self.shape = shape
        self.task, self.d, self.n = shape.task, shape.d, shape.n
        self.S = S or comb_structure(self.task, self.d, self.n)
        BL, BR = self.S.BL, self.S.BR
        self.BL, self.BR = BL, BR
        self.stages: List[List[_Stage]] = [[] for _ in range(self.n + 2)]
        for bi, b in enumerate(shape.blocks):
            i = b.stage
            pieces = []
            for c, rho in enumerate(b.cols):
                er = _ext_index(BR, i - 1, rho, b.mu)
                coef = math.sqrt(weyl_dim(b.mu) / weyl_dim(rho))
                for r, lam in enumerate(b.rows):
                    es = _ext_index(BL, i - 1, b.nu, lam)
                    pieces.append((r, c, coef, (b.nu, rho), es, er))
            self.stages[i].append(_Stage(bi, b.nu, b.mu, pieces))
        k = self.n + 1
        self.diag = [lam for lam in BL.levels[k] if lam in BR.levels[k]]
        self.h = {lam: overlap_matrix(self.S, lam) for lam in self.diag}
        self.kappa = {lam: 1.0 / (self.d ** 2 * weyl_dim(lam)) for lam in self.diag}

    def _zeros(self, i: int) -> Dict[Pair, np.ndarray]:
        return {(lam, mu): np.zeros((self.BL.npaths(i, lam), self.BR.npaths(i, mu)), dtype=complex)
                for lam in self.BL.levels[i] for mu in self.BR.levels[i]}

    def amplitudes(self, W: Sequence[np.ndarray]) -> List[Dict[Pair, np.ndarray]]:
        t0 = self.BL.levels[0][0]
        levels = [{(t0, t0): np.ones((1, 1), dtype=complex)}]
        for i in range(1, self.n + 2):
            cur = self._zeros(i)
            prev = levels[-1]
            for st in self.stages[i]:
                Wb = W[st.block]
                for r, c, coef, src, es, er in st.pieces:
                    a = prev.get(src)
                    if a is None:
                        continue
                    lam = self.shape.blocks[st.block].rows[r]
                    cur[(lam, st.mu)][np.ix_(es, er)] += coef * Wb[r, c] * a
            levels.append(cur)
        return levels

    def overlaps(self, top: Dict[Pair, np.ndarray]) -> Dict[Label, complex]:
        return {lam: complex(np.sum(self.h[lam] * top[(lam, lam)])) for lam in self.diag}

    def fidelity(self, W: Sequence[np.ndarray]) -> float:
        top = self.amplitudes(W)[-1]
        z = self.overlaps(top)
        return float(sum(self.kappa[l] * abs(z[l]) ** 2 for l in self.diag))

    def value_and_grad(self, W: Sequence[np.ndarray]) -> Tuple[float, List[np.ndarray]]:
        """Fidelity and its Euclidean gradient 2 dF/d(conj W) for each block."""
        levels = self.amplitudes(W)
        top = levels[-1]
        z = self.overlaps(top)
        F = float(sum(self.kappa[l] * abs(z[l]) ** 2 for l in self.diag))
        # cotangents b = dF/d(conj a)
        cot = self._zeros(self.n + 1)
        for lam in self.diag:
            cot[(lam, lam)] = self.kappa[lam] * z[lam] * self.h[lam]
        grads = [np.zeros_like(w) for w in W]
        for i in range(self.n + 1, 0, -1):
            prev = levels[i - 1]
            pcot = {key: np.zeros_like(v) for key, v in prev.items()}
            for st in self.stages[i]:
                Wb = W[st.block]
                g = grads[st.block]
                blk = self.shape.blocks[st.block]
                for r, c, coef, src, es, er in st.pieces:
                    a = prev.get(src)
                    if a is None:
                        continue
                    b = cot[(blk.rows[r], st.mu)][np.ix_(es, er)]
                    g[r, c] += coef * np.sum(b * a.conj())
                    pcot[src] += coef * np.conj(Wb[r, c]) * b
            cot = pcot
        return F, [2 * g for g in grads]

    def coefficient_blocks(self, W: Sequence[np.ndarray]) -> CoefficientBlocks:
        """Induced blocks c^i = Re(a_i a_i^dagger) at every level.

        The real part is itself feasible (all constraint coefficients are real)
        and carries the full objective.
        """
        levels = []
        for lv in self.amplitudes(W):
            blk = {}
            for key, a in lv.items():
                v = a.ravel()
                blk[key] = np.real(np.outer(v, v.conj()))
            levels.append(blk)
        return CoefficientBlocks(self.task, self.d, self.n, levels)

    def top_vector(self, W: Sequence[np.ndarray]) -> np.ndarray:
        return pack_level(self.S.top, self.coefficient_blocks(W).top)


def random_isometry(rows: int, cols: int, rng: np.random.Generator) -> np.ndarray:
    Z = (rng.standard_normal((rows, cols)) + 1j * rng.standard_normal((rows, cols))) / math.sqrt(2)
    Q, R = np.linalg.qr(Z)
    return Q * (np.diag(R) / np.abs(np.diag(R)))


def random_param_comb(shape: ParamShape, rng: np.random.Generator) -> ParamComb:
    return ParamComb(shape, [random_isometry(b.out_dim, b.in_dim, rng) for b in shape.blocks])


def amplitudes(p: ParamComb, model: Optional[CombModel] = None):
    """Top-level amplitudes and induced coefficient blocks; checks the comb conditions."""
    from .comb_sdp import comb_residual

    model = model or CombModel(p.shape)
    top = model.amplitudes(p.W)[-1]
    blocks = model.coefficient_blocks(p.W)
    res = comb_residual(model.S, pack_level(model.S.top, blocks.top))
    if res > 1e-8:
        raise RuntimeError(f"induced blocks violate the comb conditions (residual {res:.2e})")
    return top, blocks


def fidelity(p: ParamComb, model: Optional[CombModel] = None) -> float:
    return (model or CombModel(p.shape)).fidelity(p.W)


# ---------------------------------------------------------------- optimization

def _retract(W: np.ndarray) -> np.ndarray:
    Q, R = np.linalg.qr(W)
    s = np.sign(np.real(np.diag(R)))
    s[s == 0] = 1
    return Q * s


def _project(W: np.ndarray, G: np.ndarray) -> np.ndarray:
    A = W.conj().T @ G
    return G - W @ (A + A.conj().T) / 2


def _inner(X: Sequence[np.ndarray], Y: Sequence[np.ndarray]) -> float:
    return float(sum(np.real(np.vdot(x, y)) for x, y in zip(X, Y)))


@dataclass
class AscentResult:
    W: List[np.ndarray]
    fidelity: float
    grad_norm: float
    iterations: int
    converged: bool


def riemannian_ascent(model: CombModel, W0: List[np.ndarray], tol: float = 1e-9,
                      max_iter: int = 5000) -> AscentResult:
    """Gradient ascent on a product of Stiefel manifolds with BB steps and backtracking."""
    W = [w.copy() for w in W0]
    F, G = model.value_and_grad(W)
    R = [_project(w, g) for w, g in zip(W, G)]
    gn = math.sqrt(_inner(R, R))
    step = 1.0
    it = 0
    for it in range(1, max_iter + 1):
        if gn <= tol:
            return AscentResult(W, F, gn, it - 1, True)
        t = step
        while True:
            Wn = [_retract(w + t * r) for w, r in zip(W, R)]
            Fn, Gn = model.value_and_grad(Wn)
            if Fn >= F + 1e-4 * t * gn ** 2 or t < 1e-12:
                break
            t *= 0.5
        Rn = [_project(w, g) for w, g in zip(Wn, Gn)]
        s = [a - b for a, b in zip(Wn, W)]
        y = [a - b for a, b in zip(Rn, R)]
        sy = _inner(s, y)
        step = abs(_inner(s, s) / sy) if abs(sy) > 1e-300 else 1.0
        step = min(max(step, 1e-6), 1e6)
        if t < 1e-12 and Fn <= F:
            gn_new = math.sqrt(_inner(Rn, Rn))
            return AscentResult(W, F, gn_new, it, gn_new <= tol)
        W, F, R = Wn, Fn, Rn
        gn = math.sqrt(_inner(R, R))
    return AscentResult(W, F, gn, it, gn <= tol)


@dataclass
class OptimizeResult:
    best: ParamComb
    fidelity: float
    grad_norm: float
    converged: bool
    trace: List[dict] = field(default_factory=list)


def optimize(task, d: int, n: int, restarts: int = 32, seed: int = 0, tol: float = 1e-9,
             max_iter: int = 5000) -> OptimizeResult:
    """Best of `restarts` Haar-random starts; restarts cycle over the pruning choices."""
    task = Task(task)
    prunings = enumerate_prunings(task, d, n)
    S = comb_structure(task, d, n)
    models = [CombModel(param_shape(task, d, n, p), S) for p in prunings]
    if len(prunings) > 1:
        log.info("%d pruning choices for %s d=%d n=%d", len(prunings), task.value, d, n)
    rng = np.random.default_rng(seed)
    best = None
    trace = []
    for r in range(restarts):
        m = models[r % len(models)]
        W0 = random_param_comb(m.shape, rng).W
        res = riemannian_ascent(m, W0, tol, max_iter)
        trace.append({"restart": r, "pruning": r % len(models), "fidelity": res.fidelity,
                      "grad_norm": res.grad_norm, "iterations": res.iterations})
        if best is None or res.fidelity > best[1].fidelity:
            best = (m, res)
    m, res = best
    return OptimizeResult(ParamComb(m.shape, res.W), res.fidelity, res.grad_norm, res.converged, trace)
