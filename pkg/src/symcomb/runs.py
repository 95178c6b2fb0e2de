"""Run pipeline shared by the CLI and the tests: solve, optimize, verify, serialize.

Records are plain dicts with a fixed key order so that identical configurations
produce byte-identical JSON apart from the ``timestamp`` object.
"""
from __future__ import annotations

import datetime as _dt
import json
import math
import platform
import time
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from . import __version__
from .choi_verify import (MAX_FULL_DIM, ScaleError, check_comb_conditions, check_symmetry,
                          choi_from_blocks, fidelity_full, haar_fidelity_mc)
from .circuit_synth import verify_theorem1
from .comb_sdp import (CombStructure, assemble_sdp, blocks_from_top, comb_residual, comb_structure,
                       cyclic_perm, n_variables, objective_vector, pack_level, top_vector_from_blocks)
from .param_comb import CombModel, count_parameters, count_parameters_naive, optimize
from .rep_theory import Label, Task
from .sdp_solver import check_kkt, solve

SCHEMA_VERSION = "1.0"
MAX_SDP_VARIABLES = 50_000

# verification thresholds
TOL_COMB = 1e-7
TOL_PSD = 1e-8
TOL_SYMMETRY = 1e-9
TOL_THEOREM1 = 1e-7
TOL_OBJECTIVE = 1e-9
MC_SIGMAS = 3.0


class GuardError(RuntimeError):
    """A resource guard refused the request (use force to override)."""


@dataclass
class RunConfig:
    task: str = "invert"
    d: int = 2
    n: int = 1
    method: str = "sdp"
    tol: float = 1e-8
    restarts: int = 32
    seed: int = 0
    output: Optional[str] = None
    verify: bool = False
    export_sdpa: Optional[str] = None
    force: bool = False
    mc_samples: int = 0

    def validate(self) -> None:
        Task(self.task)
        if self.d < 2 or self.n < 1:
            raise ValueError("need d >= 2 and n >= 1")
        if self.method not in ("sdp", "nlopt", "both"):
            raise ValueError(f"unknown method {self.method!r}")


def conventions() -> dict:
    return {
        "spaces": "B_L on (I_1..I_n, F); B_R on (P, O_1..O_n)",
        "objective_permutation": "B_R legs (P, O_1..O_n) -> (O_1..O_n, P), perm %s at n=1" % (cyclic_perm(2),),
        "conjugation": "transpose: conjugate legs are F and P; invert: none",
        "choi_trace": "Tr C = d^(n+1), C_0 = 1",
        "block_entries": "c[(S,Q),(S',Q')], C = sum c E^lam_SS'/d_lam (x) Et^mu_QQ'/d_mu, real symmetric",
    }


def versions() -> dict:
    import scipy

    from .kernels import BACKEND
    return {"symcomb": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version(), "kernel_backend": BACKEND}


def _label(lam: Label) -> List[int]:
    return [int(x) for x in lam]


def blocks_to_json(S: CombStructure, x: np.ndarray) -> List[dict]:
    out = []
    for b, (lam, mu) in enumerate(S.top.pairs):
        n = S.top.block_dim(b)
        M = x[S.top.offsets[b]:S.top.offsets[b] + n * n].reshape(n, n)
        out.append({"lambda": _label(lam), "mu": _label(mu), "matrix": M.tolist()})
    return out


def blocks_from_json(S: CombStructure, data: List[dict]) -> np.ndarray:
    """Top-level entry vector from serialized blocks; missing pairs are zero."""
    blocks = {}
    for item in data:
        key = (tuple(item["lambda"]), tuple(item["mu"]))
        if key not in S.top.where:
            raise ValueError(f"block pair {key} does not exist for this task/d/n")
        M = np.asarray(item["matrix"], dtype=float)
        n = S.top.block_dim(S.top.where[key])
        if M.shape != (n, n):
            raise ValueError(f"block {key} has shape {M.shape}, expected {(n, n)}")
        blocks[key] = M
    return pack_level(S.top, blocks)


def block_summary(S: CombStructure, x: np.ndarray, tol: float = 1e-8) -> List[dict]:
    out = []
    for b, (lam, mu) in enumerate(S.top.pairs):
        n = S.top.block_dim(b)
        M = x[S.top.offsets[b]:S.top.offsets[b] + n * n].reshape(n, n)
        w = np.linalg.eigvalsh((M + M.T) / 2)
        rank = int(np.sum(w > tol * max(1.0, abs(w[-1]))))
        out.append({"lambda": _label(lam), "mu": _label(mu), "size": n, "rank": rank})
    return out


def full_dim(d: int, n: int) -> int:
    return d ** (2 * (n + 1))


def check_sdp_guard(S: CombStructure, force: bool) -> None:
    nv = n_variables(S)
    if nv > MAX_SDP_VARIABLES and not force:
        raise GuardError(f"reduced SDP has {nv} variables (> {MAX_SDP_VARIABLES}); pass --force")


def run_sdp(task, d: int, n: int, tol: float = 1e-8, force: bool = False, export_path=None) -> Tuple[dict, np.ndarray]:
    S = comb_structure(task, d, n)
    check_sdp_guard(S, force)
    t0 = time.perf_counter()
    P = assemble_sdp(S)
    if export_path:
        from .sdpa_io import export_sdpa
        export_sdpa(P, export_path)
    t1 = time.perf_counter()
    sol = solve(P, tol=tol)
    kkt = check_kkt(P, sol)
    x = top_vector_from_blocks(S, sol.X)
    rec = {
        "status": sol.status,
        "fidelity": sol.pobj,
        "dual_objective": sol.dobj,
        "duality_gap": abs(sol.pobj - sol.dobj),
        "relative_gap": sol.gap,
        "primal_infeasibility": sol.pinf,
        "dual_infeasibility": sol.dinf,
        "tolerance": tol,
        "iterations": sol.iterations,
        "variables": n_variables(S),
        "constraints": P.m,
        "kkt_worst": kkt.worst(),
        "seconds": {"assemble": t1 - t0, "solve": sol.seconds},
    }
    return rec, x


def run_nlopt(task, d: int, n: int, restarts: int = 32, seed: int = 0,
              tol: float = 1e-9) -> Tuple[dict, np.ndarray]:
    t0 = time.perf_counter()
    res = optimize(task, d, n, restarts=restarts, seed=seed, tol=tol)
    model = CombModel(res.best.shape)
    x = model.top_vector(res.best.W)
    rec = {
        "fidelity": res.fidelity,
        "gradient_norm": res.grad_norm,
        "tolerance": tol,
        "converged": bool(res.converged),
        "restarts": restarts,
        "seed": seed,
        "parameters": count_parameters(task, d, n),
        "restart_fidelities": [t["fidelity"] for t in res.trace],
        "seconds": time.perf_counter() - t0,
    }
    return rec, x


def verify_top(S: CombStructure, x: np.ndarray, mc_samples: int = 0, seed: int = 0,
               force: bool = False) -> dict:
    """Every available check on a top-level block vector; each entry carries its threshold."""
    checks: Dict[str, dict] = {}

    def put(name, value, threshold, ok, **extra):
        checks[name] = {"value": value, "threshold": threshold, "passed": bool(ok), **extra}

    res = comb_residual(S, x)
    put("reduced_comb_conditions", res, TOL_COMB, res <= TOL_COMB)
    mins = min((float(np.linalg.eigvalsh(M)[0]) for M in blocks_from_top(S, x).top.values() if M.size),
               default=0.0)
    put("block_psd", mins, -TOL_PSD, mins >= -TOL_PSD)
    reduced = float(objective_vector(S) @ x)
    if full_dim(S.d, S.n) <= MAX_FULL_DIM or force:
        blocks = blocks_from_top(S, x)
        C = choi_from_blocks(blocks, S.BL, S.BR, force=force)
        rep = check_comb_conditions(C)
        put("full_comb_conditions", rep.max_residual, TOL_COMB, rep.max_residual <= TOL_COMB)
        sym = check_symmetry(C, S.task, samples=20, seed=seed)
        put("symmetry", sym, TOL_SYMMETRY, sym <= TOL_SYMMETRY)
        full = fidelity_full(C, S.task, force=force)
        put("objective_full_vs_reduced", abs(full - reduced), TOL_OBJECTIVE, abs(full - reduced) <= TOL_OBJECTIVE,
            reduced=reduced, full=full)
        if mins < -TOL_PSD:
            put("theorem1_reconstruction", None, TOL_THEOREM1, False, note="blocks are not PSD")
        else:
            try:
                r = verify_theorem1(blocks, S.BL, S.BR)
                put("theorem1_reconstruction", r, TOL_THEOREM1, r <= TOL_THEOREM1)
            except ScaleError as exc:
                put("theorem1_reconstruction", None, TOL_THEOREM1, True, note=f"skipped: {exc}")
            except ValueError as exc:
                put("theorem1_reconstruction", None, TOL_THEOREM1, False, note=str(exc))
        if mc_samples:
            mean, err = haar_fidelity_mc(C, S.task, samples=mc_samples, seed=seed)
            dev = abs(mean - reduced)
            bound = MC_SIGMAS * err + 1e-9
            put("monte_carlo", mean, bound, dev <= bound, stderr=err, samples=mc_samples, reduced=reduced)
    else:
        checks["full_space"] = {"value": None, "threshold": MAX_FULL_DIM, "passed": True,
                                "note": f"skipped: full dimension {full_dim(S.d, S.n)} exceeds guard"}
    return checks


def now_stamp(wall: float) -> dict:
    return {"utc": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"), "wall_seconds": wall}


def make_record(cfg: RunConfig) -> Tuple[dict, int]:
    """Full solve record and the process exit code."""
    cfg.validate()
    t0 = time.perf_counter()
    S = comb_structure(cfg.task, cfg.d, cfg.n)
    rec = {
        "schema_version": SCHEMA_VERSION,
        "config": {k: v for k, v in asdict(cfg).items() if k not in ("output",)},
        "conventions": conventions(),
        "versions": versions(),
        "parameter_counts": {"symmetric": count_parameters(cfg.task, cfg.d, cfg.n),
                             "naive": count_parameters_naive(cfg.task, cfg.d, cfg.n)},
    }
    code = 0
    x_main = None
    if cfg.method in ("sdp", "both"):
        try:
            sdp, x = run_sdp(cfg.task, cfg.d, cfg.n, cfg.tol, cfg.force, cfg.export_sdpa)
            rec["sdp"] = _strip_seconds(sdp)
            rec["blocks_summary"] = block_summary(S, x)
            x_main = x
            if sdp["status"] != "Optimal":
                code = 2
        except GuardError as exc:
            rec["sdp"] = {"status": "Refused", "error": str(exc)}
            code = 3
    if cfg.method in ("nlopt", "both"):
        nl, x = run_nlopt(cfg.task, cfg.d, cfg.n, cfg.restarts, cfg.seed)
        rec["nlopt"] = _strip_seconds(nl)
        if x_main is None:
            x_main = x
            rec["blocks_summary"] = block_summary(S, x)
        else:
            rec["nlopt_blocks_summary"] = block_summary(S, x)
    if cfg.method == "both" and "fidelity" in rec.get("sdp", {}):
        rec["method_gap"] = rec["sdp"]["fidelity"] - rec["nlopt"]["fidelity"]
    if x_main is not None:
        rec["blocks"] = blocks_to_json(S, x_main)
        if cfg.verify:
            checks = verify_top(S, x_main, cfg.mc_samples, cfg.seed, cfg.force)
            rec["verification"] = checks
            if not all(c["passed"] for c in checks.values()):
                code = code or 4
    rec["fidelity"] = rec["sdp"]["fidelity"] if "fidelity" in rec.get("sdp", {}) else \
        rec.get("nlopt", {}).get("fidelity")
    rec["timestamp"] = now_stamp(time.perf_counter() - t0)
    return rec, code


def _strip_seconds(rec: dict) -> dict:
    # timings are not reproducible; they only appear under "timestamp"
    return {k: v for k, v in rec.items() if k != "seconds"}


def dumps(rec: dict) -> str:
    return json.dumps(rec, indent=2, allow_nan=True) + "\n"


def load_record(path) -> Tuple[CombStructure, np.ndarray, dict]:
    """Structure and top-level vector from a solve record or a bare blocks file."""
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ValueError(f"cannot read blocks file {path}: {exc}") from exc
    try:
        cfg = data.get("config", data)
        S = comb_structure(cfg["task"], int(cfg["d"]), int(cfg["n"]))
        x = blocks_from_json(S, data["blocks"])
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed blocks file {path}: missing {exc}") from exc
    return S, x, data
