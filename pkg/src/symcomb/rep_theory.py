"""Irrep labels of U(d), Pieri branching and Bratteli diagrams.

Labels are plain tuples of ints (weakly decreasing, negatives allowed).
Tuples compare lexicographically, and every enumeration below is sorted in
decreasing lexicographic order so that path indices are reproducible.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from typing import Dict, List, Sequence, Tuple

Label = Tuple[int, ...]
Path = Tuple[Label, ...]


class Leg(str, Enum):
    DEF = "def"
    CONJ = "conj"


class Task(str, Enum):
    TRANSPOSE = "transpose"
    INVERT = "invert"


def check_label(lam: Sequence[int], d: int) -> Label:
    lam = tuple(int(x) for x in lam)
    if len(lam) != d:
        raise ValueError(f"label {lam} has length {len(lam)}, expected {d}")
    if any(lam[i] < lam[i + 1] for i in range(d - 1)):
        raise ValueError(f"label {lam} is not weakly decreasing")
    return lam


def trivial(d: int) -> Label:
    return (0,) * d


def branch(lam: Sequence[int], leg: Leg, d: int) -> List[Label]:
    """Children of lam after tensoring with the defining rep (or its conjugate).

    Every child has multiplicity one, so a list of labels is enough.
    """
    lam = check_label(lam, d)
    step = 1 if Leg(leg) == Leg.DEF else -1
    out = []
    for i in range(d):
        mu = list(lam)
        mu[i] += step
        if all(mu[j] >= mu[j + 1] for j in range(d - 1)):
            out.append(tuple(mu))
    return sorted(out, reverse=True)


@lru_cache(maxsize=None)
def weyl_dim(lam: Label) -> int:
    """Dimension of the U(d) irrep with highest weight lam (exact integer)."""
    d = len(lam)
    num = 1
    den = 1
    for i in range(d):
        for j in range(i + 1, d):
            num *= lam[i] - lam[j] + j - i
            den *= j - i
    q, r = divmod(num, den)
    assert r == 0
    return q


def casimir_value(lam: Sequence[int]) -> int:
    """Eigenvalue of sum_ab E_ab E_ba on the irrep lam."""
    d = len(lam)
    return sum(l * (l + d + 1 - 2 * (i + 1)) for i, l in enumerate(lam))


@dataclass(frozen=True)
class ChainSpec:
    d: int
    legs: Tuple[Leg, ...]

    def __post_init__(self):
        if self.d < 2:
            raise ValueError("d must be at least 2")
        if len(self.legs) == 0:
            raise ValueError("a chain needs at least one leg")
        object.__setattr__(self, "legs", tuple(Leg(x) for x in self.legs))


@dataclass
class Bratteli:
    """Leveled branching graph; level k holds the irreps of k tensor legs."""

    d: int
    legs: Tuple[Leg, ...]
    levels: List[List[Label]]
    edges: List[List[Tuple[Label, Label]]]
    _paths: Dict[Tuple[int, Label], List[Path]] = field(default_factory=dict, repr=False)
    _index: Dict[Tuple[int, Label], Dict[Path, int]] = field(default_factory=dict, repr=False)

    @property
    def depth(self) -> int:
        return len(self.legs)

    def children(self, k: int, lam: Label) -> List[Label]:
        """Children of lam (a level-k vertex) at level k+1."""
        return [c for p, c in self.edges[k] if p == lam]

    def parents(self, k: int, lam: Label) -> List[Label]:
        """Parents of lam (a level-k vertex) at level k-1."""
        return [p for p, c in self.edges[k - 1] if c == lam]

    def paths(self, k: int, lam: Label) -> List[Path]:
        key = (k, lam)
        if key not in self._paths:
            if lam not in self.levels[k]:
                raise KeyError(f"{lam} is not a vertex at level {k}")
            if k == 0:
                out = [(lam,)]
            else:
                out = []
                for p in self.parents(k, lam):
                    out.extend(t + (lam,) for t in self.paths(k - 1, p))
                out.sort(key=lambda t: t[::-1], reverse=True)
            self._paths[key] = out
            self._index[key] = {t: i for i, t in enumerate(out)}
        return self._paths[key]

    def path_index(self, path: Path) -> int:
        k = len(path) - 1
        self.paths(k, path[-1])
        return self._index[(k, path[-1])][path]

    def npaths(self, k: int, lam: Label) -> int:
        return len(self.paths(k, lam))


def build_bratteli(spec: ChainSpec) -> Bratteli:
    d = spec.d
    levels = [[trivial(d)]]
    edges = []
    for leg in spec.legs:
        nxt = set()
        e = []
        for p in levels[-1]:
            for c in branch(p, leg, d):
                nxt.add(c)
                e.append((p, c))
        levels.append(sorted(nxt, reverse=True))
        edges.append(sorted(e, reverse=True))
    return Bratteli(d=d, legs=spec.legs, levels=levels, edges=edges)


def enumerate_paths(B: Bratteli, lam: Label, level: int | None = None) -> List[Path]:
    k = B.depth if level is None else level
    if lam not in B.levels[k]:
        raise KeyError(f"{lam} is absent from level {k}")
    return B.paths(k, lam)


def task_legs(task: Task, n: int) -> Tuple[Tuple[Leg, ...], Tuple[Leg, ...]]:
    """Leg sequences of the output-side (I_1..I_n, F) and input-side (P, O_1..O_n) chains."""
    task = Task(task)
    if task == Task.TRANSPOSE:
        return (Leg.DEF,) * n + (Leg.CONJ,), (Leg.CONJ,) + (Leg.DEF,) * n
    return (Leg.DEF,) * (n + 1), (Leg.DEF,) * (n + 1)


@lru_cache(maxsize=None)
def chain_for_task(task: Task, d: int, n: int) -> Tuple[Bratteli, Bratteli]:
    """(B_L, B_R): B_L lives on I_1..I_n, F and B_R on P, O_1..O_n."""
    if d < 2 or n < 1:
        raise ValueError("need d >= 2 and n >= 1")
    left, right = task_legs(Task(task), n)
    return build_bratteli(ChainSpec(d, left)), build_bratteli(ChainSpec(d, right))
