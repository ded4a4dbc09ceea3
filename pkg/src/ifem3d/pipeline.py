"""End-to-end drivers: one solve, convergence, conditioning and robustness studies."""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse.linalg as spla

from .assembly import AssemblyParams, Discretization, IFEField, SparseSystem, assemble_system, reconstruct_solution
from .mesh import build_mesh
from .postprocess import ErrorReport, compute_errors, convergence_table
from .problems import ProblemSpec
from .solver import SolveReport, build_amg, estimate_condition, pcg_solve

__all__ = [
    "SolverOptions",
    "SolveResult",
    "solve_problem",
    "convergence_study",
    "conditioning_study",
    "epsilon_robustness_study",
    "parallel_map",
]


@dataclass
class SolverOptions:
    """Linear solver settings.

    ``method`` is ``"pcg"`` or ``"direct"``; ``preconditioner`` is ``"amg"``,
    ``"jacobi"`` or ``"none"``; ``amg`` holds keyword arguments for
    ``build_amg``.
    """

    method: str = "pcg"
    preconditioner: str = "amg"
    tol: float = 1e-8
    max_iter: int = 1000
    amg: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.method not in ("pcg", "direct"):
            raise ValueError(f"unknown solver method {self.method!r}")
        if self.preconditioner not in ("amg", "jacobi", "none"):
            raise ValueError(f"unknown preconditioner {self.preconditioner!r}")
        if not self.tol > 0 or self.max_iter < 1:
            raise ValueError("tol must be positive and max_iter at least 1")


@dataclass
class SolveResult:
    problem: ProblemSpec
    disc: Discretization
    system: SparseSystem
    field: IFEField
    solve_report: SolveReport
    errors: ErrorReport | None
    timings: dict

    def row(self) -> dict:
        """Flat record for tables; error columns are NaN without an exact solution."""
        e = self.errors
        nan = float("nan")
        return {
            "N": self.disc.mesh.n_per_axis,
            "h": self.disc.mesh.h,
            "dofs": self.system.n_dofs,
            "l2": e.l2_error if e else nan,
            "h1": e.h1_seminorm_error if e else nan,
            "linf": e.linf_error if e else nan,
            "energy": e.energy_error if e else nan,
            "iterations": self.solve_report.iterations,
            "assemble_s": self.timings["assemble_s"],
            "solve_s": self.timings["solve_s"],
        }


def _solve_linear(system: SparseSystem, opts: SolverOptions):
    if opts.method == "direct":
        t0 = time.perf_counter()
        u = spla.spsolve(system.matrix.tocsc(), system.rhs)
        r = np.linalg.norm(system.rhs - system.matrix @ u) / max(np.linalg.norm(system.rhs), 1e-300)
        return u, SolveReport(0, [float(r)], time.perf_counter() - t0, True)
    M = opts.preconditioner
    if M == "amg":
        M = build_amg(system.matrix, **opts.amg)
    u, rep = pcg_solve(system, tol=opts.tol, max_iter=opts.max_iter, preconditioner=M)
    if not rep.converged:
        raise RuntimeError(f"PCG did not reach {opts.tol:g} in {opts.max_iter} iterations "
                           f"(residual {rep.final_residual:.2e})")
    return u, rep


def solve_problem(problem: ProblemSpec, n: int, params: AssemblyParams | None = None,
                  solver: SolverOptions | None = None, subdivision: str = "six_tet",
                  error_degree: int = 4) -> SolveResult:
    """Mesh, assemble, solve and (when the exact solution is known) measure errors."""
    solver = solver or SolverOptions()
    t0 = time.perf_counter()
    mesh = build_mesh(problem.domain, n, subdivision)
    disc = Discretization(mesh, problem.level_set, problem.beta_minus, problem.beta_plus, params)
    system = assemble_system(disc, problem)
    t_asm = time.perf_counter() - t0
    t1 = time.perf_counter()
    u, rep = _solve_linear(system, solver)
    t_solve = time.perf_counter() - t1
    fld = reconstruct_solution(disc, system, u)
    errors = compute_errors(fld, problem.exact, error_degree, dofs=system.n_dofs) if problem.exact else None
    return SolveResult(problem, disc, system, fld, rep, errors, {"assemble_s": t_asm, "solve_s": t_solve})


def parallel_map(fn: Callable, items, threads: int = 1) -> list:
    """Map over independent study points; results keep the input order."""
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


def convergence_study(problem: ProblemSpec, ns, params: AssemblyParams | None = None,
                      solver: SolverOptions | None = None, threads: int = 1,
                      subdivision: str = "six_tet") -> tuple[list[dict], list[SolveResult]]:
    """Solve on each N and return table rows with observed orders."""
    ns = list(ns)
    if problem.exact is None:
        raise ValueError("a convergence study needs an exact solution")
    results = parallel_map(lambda n: solve_problem(problem, n, params, solver, subdivision), ns, threads)
    extras = [{"iterations": r.solve_report.iterations, **r.timings} for r in results]
    rows = convergence_table([r.errors for r in results], extras)
    return rows, results


def conditioning_study(factory: Callable[[float], ProblemSpec], n: int, rhos,
                       params: AssemblyParams | None = None, threads: int = 1,
                       subdivision: str = "six_tet", inner: str = "direct") -> list[dict]:
    """Spectral condition number of the stiffness matrix for each jump ratio rho.

    ``factory(rho)`` returns the problem with beta+/beta- = rho.
    """

    def point(rho):
        pb = factory(rho)
        mesh = build_mesh(pb.domain, n, subdivision)
        disc = Discretization(mesh, pb.level_set, pb.beta_minus, pb.beta_plus, params)
        A = assemble_system(disc, pb).matrix
        est = estimate_condition(A, inner=inner)
        return {"rho": float(rho), "N": n, "dofs": A.shape[0], "lambda_min": est.lambda_min,
                "lambda_max": est.lambda_max, "kappa": est.kappa, "lanczos_steps": est.lanczos_steps}

    return parallel_map(point, list(rhos), threads)


def epsilon_robustness_study(factory: Callable[[float], ProblemSpec], epsilons, ns,
                             params: AssemblyParams | None = None, solver: SolverOptions | None = None,
                             threads: int = 1, subdivision: str = "six_tet") -> list[dict]:
    """Iteration counts and errors for each interface offset epsilon and mesh N."""
    points = [(float(e), int(n)) for e in epsilons for n in ns]

    def point(p):
        eps, n = p
        r = solve_problem(factory(eps), n, params, solver, subdivision)
        return {"epsilon": eps, **r.row()}

    rows = parallel_map(point, points, threads)
    for eps in sorted({p[0] for p in points}, reverse=True):
        sub = [r for r in rows if r["epsilon"] == eps]
        for prev, cur in zip(sub, sub[1:]):
            for key in ("l2", "h1"):
                cur[f"{key}_order"] = float(np.log(prev[key] / cur[key]) / np.log(prev["h"] / cur["h"]))
    return rows
