"""SDPA sparse format (.dat-s) export and import.

The block SDP  max <C, X> s.t. <A_k, X> = b_k  is the SDPA dual form with
F_0 = C, F_k = A_k and c = b.
"""
from __future__ import annotations

from typing import List

import numpy as np
import scipy.sparse as sp

from .sdp_solver import SDPProblem


def _fmt(v: float) -> str:
    return repr(float(v))


def export_sdpa(problem: SDPProblem, path) -> None:
    problem.check()
    lines = [f"{problem.m} = mDIM", f"{len(problem.block_sizes)} = nBLOCK",
             " ".join(str(n) for n in problem.block_sizes),
             " ".join(_fmt(v) for v in problem.b) if problem.m else ""]
    for j, (n, Cj) in enumerate(zip(problem.block_sizes, problem.C), start=1):
        iu, ju = np.triu_indices(n)
        for a, b in zip(iu, ju):
            if Cj[a, b] != 0.0:
                lines.append(f"0 {j} {a + 1} {b + 1} {_fmt(Cj[a, b])}")
    # constraints in order, blocks in order, upper-triangle entries sorted
    entries = []
    for j, (n, Aj) in enumerate(zip(problem.block_sizes, problem.A), start=1):
        coo = Aj.tocoo()
        r, c = np.divmod(coo.col, n)
        keep = r <= c
        for k, a, b, v in zip(coo.row[keep], r[keep], c[keep], coo.data[keep]):
            if v != 0.0:
                entries.append((int(k) + 1, j, int(a) + 1, int(b) + 1, float(v)))
    entries.sort()
    lines.extend(f"{k} {j} {a} {b} {_fmt(v)}" for k, j, a, b, v in entries)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _tokens(line: str) -> List[str]:
    for ch in ",{}()":
        line = line.replace(ch, " ")
    return line.split()


def read_sdpa(path) -> SDPProblem:
    with open(path) as fh:
        raw = [l.split("=")[0] if "=" in l else l for l in fh.read().splitlines()]
    raw = [l for l in raw if l.strip() and not l.lstrip().startswith(("*", '"'))]
    m = int(_tokens(raw[0])[0])
    nb = int(_tokens(raw[1])[0])
    sizes = [int(t) for t in _tokens(raw[2])[:nb]]
    if any(s < 0 for s in sizes):
        sizes = [abs(s) for s in sizes]  # diagonal blocks are read as dense
    pos = 3
    if m:
        b = np.array([float(t) for t in _tokens(raw[3])[:m]])
        pos = 4
    else:
        b = np.zeros(0)
        if len(raw) > 3 and len(_tokens(raw[3])) != 5:
            pos = 4
    C = [np.zeros((n, n)) for n in sizes]
    rows = [[] for _ in sizes]
    cols = [[] for _ in sizes]
    vals = [[] for _ in sizes]
    for line in raw[pos:]:
        t = _tokens(line)
        k, j, a, c = (int(x) for x in t[:4])
        v = float(t[4])
        j -= 1
        a -= 1
        c -= 1
        n = sizes[j]
        if k == 0:
            C[j][a, c] = v
            C[j][c, a] = v
        else:
            rows[j].append(k - 1)
            cols[j].append(a * n + c)
            vals[j].append(v)
            if a != c:
                rows[j].append(k - 1)
                cols[j].append(c * n + a)
                vals[j].append(v)
    A = [sp.csr_matrix((vals[j], (rows[j], cols[j])), shape=(m, n * n)) for j, n in enumerate(sizes)]
    return SDPProblem(sizes, C, A, b)
