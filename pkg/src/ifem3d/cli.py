"""Command-line experiment runner.

    ifem3d run CONFIG [--check] [--threads K] [--out DIR]
    ifem3d problems

``run`` executes the study described in CONFIG (see ``ifem3d.config``),
writes CSV (and optional VTK) artifacts to the output directory, prints a
summary table and, with ``--check``, exits non-zero when an acceptance
threshold for that study is violated.
"""

from __future__ import annotations

import argparse
import csv
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .assembly import symmetry_defect
from .config import ConfigError, RunConfig, load_config
from .pipeline import conditioning_study, convergence_study, epsilon_robustness_study, solve_problem
from .postprocess import CSV_COLUMNS, surface_error_map, write_solution_vtk, write_surface_map
from .problems import PROBLEMS

__all__ = ["main", "run", "THRESHOLDS"]

# acceptance thresholds enforced by --check
THRESHOLDS = {
    "l2_order": 1.8,
    "h1_order": 0.85,
    "kappa_ratio": (3.0, 5.0),
    "max_iterations": 40,
    "iteration_spread": 5,
    "symmetry": 1e-10,
    "patch_error": 1e-9,
}
_TIMING = ("assemble_s", "solve_s")


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "nan" if math.isnan(v) else f"{v:.6e}"
    return str(v)


def _write_csv(path: Path, rows: list[dict], columns: list[str], timings: bool) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(float("nan") if (c in _TIMING and not timings) else r.get(c, float("nan")))
                        for c in columns])


def _write_timings(path: Path, rows: list[dict], keys: list[str]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(keys + list(_TIMING))
        for r in rows:
            w.writerow([_fmt(r[k]) for k in keys] + [f"{r[c]:.3f}" for c in _TIMING])


def _print_table(rows: list[dict], columns: list[str], out) -> None:
    cells = [[_fmt(r.get(c, float("nan"))) for c in columns] for r in rows]
    width = [max(len(c), *(len(row[i]) for row in cells)) for i, c in enumerate(columns)]
    print("  ".join(c.rjust(w) for c, w in zip(columns, width)), file=out)
    for row in cells:
        print("  ".join(v.rjust(w) for v, w in zip(row, width)), file=out)


class _Gate:
    def __init__(self, out):
        self.out = out
        self.failed = []

    def check(self, name: str, ok: bool, detail: str) -> None:
        print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}", file=self.out)
        if not ok:
            self.failed.append(name)


def _study_solve(cfg: RunConfig, out_dir: Path, threads: int, gate: _Gate | None, out) -> list[dict]:
    pb = cfg.make_problem()
    rows, last = [], None
    for n in cfg.ns:
        r = solve_problem(pb, n, cfg.assembly, cfg.solver, cfg.subdivision)
        rows.append(r.row())
        last = r
        if gate is not None:
            gate.check(f"solver converged N={n}", r.solve_report.converged,
                       f"{r.solve_report.iterations} iterations, residual {r.solve_report.final_residual:.2e}")
            sym = symmetry_defect(r.system.matrix)
            gate.check(f"symmetry N={n}", sym <= THRESHOLDS["symmetry"], f"{sym:.2e}")
            if pb.name == "patch" and r.errors is not None:
                e = max(r.errors.l2_error, r.errors.h1_seminorm_error, r.errors.linf_error)
                gate.check(f"patch test N={n}", e <= THRESHOLDS["patch_error"], f"max error {e:.2e}")
    columns = list(CSV_COLUMNS)
    _write_csv(out_dir / "solve.csv", rows, columns, cfg.timings)
    _write_timings(out_dir / "timings.csv", rows, ["N"])
    _artifacts(cfg, last, out_dir)
    _print_table(rows, ["N", "dofs", "l2", "h1", "linf", "energy", "iterations"], out)
    return rows


def _artifacts(cfg: RunConfig, result, out_dir: Path) -> None:
    if result is None:
        return
    n = result.disc.mesh.n_per_axis
    if cfg.surface_map and result.problem.exact is not None:
        sm = surface_error_map(result.field, result.problem.exact)
        write_surface_map(out_dir / f"surface_error_N{n}.csv", sm,
                          out_dir / f"surface_error_N{n}.vtk" if cfg.vtk else None)
    if cfg.vtk:
        write_solution_vtk(out_dir / f"solution_N{n}.vtk", result.field, result.problem.exact)


def _study_convergence(cfg: RunConfig, out_dir: Path, threads: int, gate: _Gate | None, out) -> list[dict]:
    rows, results = convergence_study(cfg.make_problem(), cfg.ns, cfg.assembly, cfg.solver, threads, cfg.subdivision)
    _write_csv(out_dir / "convergence.csv", rows, list(CSV_COLUMNS), cfg.timings)
    _write_timings(out_dir / "timings.csv", rows, ["N"])
    _artifacts(cfg, results[-1], out_dir)
    _print_table(rows, ["N", "dofs", "l2", "l2_order", "h1", "h1_order", "linf", "energy", "iterations"], out)
    if gate is not None:
        last = rows[-1]
        gate.check("L2 order", last["l2_order"] >= THRESHOLDS["l2_order"],
                   f"{last['l2_order']:.3f} >= {THRESHOLDS['l2_order']}")
        gate.check("H1 order", last["h1_order"] >= THRESHOLDS["h1_order"],
                   f"{last['h1_order']:.3f} >= {THRESHOLDS['h1_order']}")
    return rows


def _study_conditioning(cfg: RunConfig, out_dir: Path, threads: int, gate: _Gate | None, out) -> list[dict]:
    rows = []
    for n in cfg.ns:
        rows += conditioning_study(lambda rho: cfg.make_problem(beta_plus=cfg.beta_minus * rho), n, cfg.rhos,
                                   cfg.assembly, threads, cfg.subdivision)
    columns = ["rho", "N", "dofs", "lambda_min", "lambda_max", "kappa", "lanczos_steps"]
    _write_csv(out_dir / "conditioning.csv", rows, columns, False)
    _print_table(rows, columns, out)
    if gate is not None:
        for n in cfg.ns:
            sub = [r for r in rows if r["N"] == n]
            if len(sub) > 1:
                k = [r["kappa"] for r in sub]
                gate.check(f"kappa non-decreasing in rho, N={n}", all(b >= a for a, b in zip(k, k[1:])),
                           ", ".join(f"{v:.3e}" for v in k))
        lo, hi = THRESHOLDS["kappa_ratio"]
        for rho in cfg.rhos:
            sub = [r for r in rows if r["rho"] == rho]
            for a, b in zip(sub, sub[1:]):
                if b["N"] == 2 * a["N"]:
                    q = b["kappa"] / a["kappa"]
                    gate.check(f"kappa ratio N={a['N']}->{b['N']}, rho={rho:g}", lo <= q <= hi, f"{q:.3f} in [{lo}, {hi}]")
    return rows


def _study_epsilon(cfg: RunConfig, out_dir: Path, threads: int, gate: _Gate | None, out) -> list[dict]:
    rows = epsilon_robustness_study(lambda eps: cfg.make_problem(epsilon=eps), cfg.epsilons, cfg.ns,
                                    cfg.assembly, cfg.solver, threads, cfg.subdivision)
    columns = ["epsilon"] + list(CSV_COLUMNS)
    _write_csv(out_dir / "epsilon_robustness.csv", rows, columns, cfg.timings)
    _write_timings(out_dir / "timings.csv", rows, ["epsilon", "N"])
    _print_table(rows, ["epsilon", "N", "dofs", "l2", "l2_order", "h1", "h1_order", "iterations"], out)
    if gate is not None:
        its = [r["iterations"] for r in rows]
        gate.check("AMG iterations bounded", max(its) <= THRESHOLDS["max_iterations"],
                   f"max {max(its)} <= {THRESHOLDS['max_iterations']}")
        for n in cfg.ns:
            sub = [r["iterations"] for r in rows if r["N"] == n]
            gate.check(f"iteration spread N={n}", max(sub) - min(sub) <= THRESHOLDS["iteration_spread"],
                       f"{max(sub) - min(sub)} <= {THRESHOLDS['iteration_spread']}")
        for eps in cfg.epsilons:
            last = [r for r in rows if r["epsilon"] == eps][-1]
            o = last.get("l2_order", float("nan"))
            gate.check(f"L2 order eps={eps:g}", o >= THRESHOLDS["l2_order"], f"{o:.3f} >= {THRESHOLDS['l2_order']}")
    return rows


_STUDIES = {
    "solve": _study_solve,
    "convergence": _study_convergence,
    "conditioning": _study_conditioning,
    "epsilon_robustness": _study_epsilon,
}


def run(cfg: RunConfig, out_dir=None, check: bool = False, threads: int = 1, out=None) -> int:
    """Execute a study; returns the process exit status."""
    out = out or sys.stdout
    out_dir = Path(out_dir or cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    gate = _Gate(out) if check else None
    print(f"ifem3d {__version__}: study={cfg.study} problem={cfg.problem} Ns={cfg.ns} -> {out_dir}", file=out)
    _STUDIES[cfg.study](cfg, out_dir, max(1, threads), gate, out)
    if gate is not None and gate.failed:
        print(f"{len(gate.failed)} check(s) failed", file=out)
        return 1
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="ifem3d", description="Enriched immersed finite element experiments")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="run the study described in a config file")
    p.add_argument("config", help="INI run configuration")
    p.add_argument("--check", action="store_true", help="enforce acceptance thresholds; exit 1 on violation")
    p.add_argument("--threads", type=int, default=1, metavar="K", help="run independent study points concurrently")
    p.add_argument("--out", metavar="DIR", help="output directory (overrides [output] dir)")
    sub.add_parser("problems", help="list built-in problems")
    args = parser.parse_args(argv)
    if args.command == "problems":
        for name in sorted(PROBLEMS):
            doc = (PROBLEMS[name].__doc__ or "").strip().splitlines()
            print(f"{name:10s} {doc[0] if doc else ''}")
        return 0
    if args.threads < 1:
        parser.error("--threads must be at least 1")
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        return run(cfg, args.out, args.check, args.threads)
    except Exception as exc:  # mid-study failure: report the structured error
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
