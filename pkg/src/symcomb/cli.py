"""Command-line entry point: solve, table, verify, count-params, export-sdpa.

Thread count for BLAS/LAPACK is taken from SYMCOMB_NUM_THREADS when set.
"""
from __future__ import annotations

import csv
import json
import logging
import os
import sys
from typing import List

import click

from .runs import (MAX_SDP_VARIABLES, GuardError, RunConfig, dumps, load_record, make_record,
                   run_nlopt, run_sdp, verify_top)

THREADS_ENV = "SYMCOMB_NUM_THREADS"


def parse_range(text: str) -> List[int]:
    """'1-4', '2,3,5' or '' (empty)."""
    out: List[int] = []
    for part in filter(None, (p.strip() for p in text.split(","))):
        if "-" in part:
            a, b = part.split("-", 1)
            out.extend(range(int(a), int(b) + 1))
        else:
            out.append(int(part))
    return out


def _load_config(ctx, param, path):
    """A JSON object of solve options; explicit flags take precedence."""
    if path:
        with open(path) as fh:
            data = json.load(fh)
        ctx.default_map = {**(ctx.default_map or {}), **{k.replace("-", "_"): v for k, v in data.items()}}
    return path


@click.group()
@click.option("-v", "--verbose", count=True)
def main(verbose):
    logging.basicConfig(level=logging.WARNING - 10 * verbose, format="%(levelname)s %(name)s: %(message)s")
    threads = os.environ.get(THREADS_ENV)
    if threads:
        from threadpoolctl import threadpool_limits
        threadpool_limits(int(threads))


TASK = click.Choice(["transpose", "invert"])


@main.command()
@click.option("--config", type=click.Path(exists=True, dir_okay=False), callback=_load_config,
              is_eager=True, expose_value=False, help="JSON file of options (flags win).")
@click.option("--task", type=TASK, required=True)
@click.option("--d", "d", type=int, required=True)
@click.option("--n", "n", type=int, required=True)
@click.option("--method", type=click.Choice(["sdp", "nlopt", "both"]), default="sdp", show_default=True)
@click.option("--tol", type=float, default=1e-8, show_default=True)
@click.option("--restarts", type=int, default=32, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--output", "-o", type=click.Path(dir_okay=False), default=None, help="JSON record path.")
@click.option("--verify", is_flag=True, help="Run full-space and reconstruction checks.")
@click.option("--mc-samples", type=int, default=0, help="Monte-Carlo samples for --verify.")
@click.option("--export-sdpa", type=click.Path(dir_okay=False), default=None)
@click.option("--force", is_flag=True, help="Override the resource guards.")
def solve(**kw):
    """Solve one (task, d, n) cell and write a JSON record."""
    cfg = RunConfig(**kw)
    try:
        cfg.validate()
    except ValueError as exc:
        raise click.BadParameter(str(exc))
    rec, code = make_record(cfg)
    text = dumps(rec)
    if cfg.output:
        with open(cfg.output, "w") as fh:
            fh.write(text)
    summary = {k: rec[k] for k in ("fidelity", "method_gap") if k in rec}
    for m in ("sdp", "nlopt"):
        if m in rec:
            summary[m] = {k: rec[m].get(k) for k in ("status", "fidelity", "duality_gap", "gradient_norm")
                          if k in rec[m]}
    if "verification" in rec:
        summary["failed_checks"] = [k for k, c in rec["verification"].items() if not c["passed"]]
    click.echo(json.dumps(summary, indent=2) if cfg.output else text.rstrip())
    sys.exit(code)


@main.command()
@click.option("--task", type=TASK, required=True)
@click.option("--d", "d_range", default="2", show_default=True, help="e.g. 2-5 or 2,3")
@click.option("--n", "n_range", default="1-4", show_default=True)
@click.option("--method", type=click.Choice(["sdp", "nlopt"]), default="sdp", show_default=True)
@click.option("--tol", type=float, default=1e-8, show_default=True)
@click.option("--restarts", type=int, default=32, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--output", "-o", type=click.File("w"), default="-")
@click.option("--force", is_flag=True)
def table(task, d_range, n_range, method, tol, restarts, seed, output, force):
    """Grid of optimal fidelities as CSV (6 decimals)."""
    w = csv.writer(output, lineterminator="\n")
    w.writerow(["task", "d", "n", "method", "fidelity", "gap_or_grad"])
    for d in parse_range(d_range):
        for n in parse_range(n_range):
            try:
                if method == "sdp":
                    rec, _ = run_sdp(task, d, n, tol, force)
                    fid, err = rec["fidelity"], rec["duality_gap"]
                else:
                    rec, _ = run_nlopt(task, d, n, restarts, seed)
                    fid, err = rec["fidelity"], rec["gradient_norm"]
                w.writerow([task, d, n, method, f"{fid:.6f}", f"{err:.1e}"])
            except GuardError:
                w.writerow([task, d, n, method, "skipped", ""])
            output.flush()


@main.command()
@click.argument("blocks_file", type=click.Path(dir_okay=False))
@click.option("--mc-samples", type=int, default=0)
@click.option("--seed", type=int, default=0)
@click.option("--force", is_flag=True)
@click.option("--output", "-o", type=click.Path(dir_okay=False), default=None)
def verify(blocks_file, mc_samples, seed, force, output):
    """Check a blocks file (a solve record) with every oracle; nonzero exit on any breach."""
    try:
        S, x, _ = load_record(blocks_file)
    except ValueError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)
    checks = verify_top(S, x, mc_samples, seed, force)
    report = {"task": S.task.value, "d": S.d, "n": S.n, "checks": checks}
    text = json.dumps(report, indent=2) + "\n"
    if output:
        with open(output, "w") as fh:
            fh.write(text)
    for name, c in checks.items():
        click.echo(f"{'PASS' if c['passed'] else 'FAIL'} {name}: value={c['value']} threshold={c['threshold']}")
    failed = [k for k, c in checks.items() if not c["passed"]]
    if failed:
        click.echo("failed checks: " + ", ".join(failed), err=True)
        sys.exit(1)


@main.command("count-params")
@click.option("--task", type=TASK, required=True)
@click.option("--d", "d_range", default="2-3", show_default=True)
@click.option("--n", "n_range", default="1-4", show_default=True)
@click.option("--output", "-o", type=click.File("w"), default="-")
def count_params(task, d_range, n_range, output):
    """Symmetric and naive parameter counts of the rank-1-memory comb, as CSV."""
    from .param_comb import count_parameters, count_parameters_naive

    w = csv.writer(output, lineterminator="\n")
    w.writerow(["task", "d", "n", "symmetric", "naive", "ratio"])
    for d in parse_range(d_range):
        for n in parse_range(n_range):
            s = count_parameters(task, d, n)
            nv = count_parameters_naive(task, d, n)
            w.writerow([task, d, n, s, nv, f"{nv / s:.4g}"])


@main.command("export-sdpa")
@click.option("--task", type=TASK, required=True)
@click.option("--d", "d", type=int, required=True)
@click.option("--n", "n", type=int, required=True)
@click.option("--output", "-o", type=click.Path(dir_okay=False), required=True)
@click.option("--force", is_flag=True)
def export_sdpa_cmd(task, d, n, output, force):
    """Write the reduced SDP in SDPA sparse format (.dat-s)."""
    from .comb_sdp import assemble_sdp, comb_structure, n_variables
    from .sdpa_io import export_sdpa

    S = comb_structure(task, d, n)
    if n_variables(S) > MAX_SDP_VARIABLES and not force:
        click.echo(f"error: more than {MAX_SDP_VARIABLES} variables; pass --force", err=True)
        sys.exit(3)
    P = assemble_sdp(S)
    export_sdpa(P, output)
    click.echo(f"wrote {output}: {P.m} constraints, {len(P.block_sizes)} blocks")


if __name__ == "__main__":
    main()
