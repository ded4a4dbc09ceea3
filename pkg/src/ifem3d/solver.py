"""Preconditioned conjugate gradients, aggregation AMG and Lanczos spectra."""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

__all__ = [
    "SolveReport",
    "SpectrumEstimate",
    "IndefiniteMatrixError",
    "AMGWarning",
    "AMGHierarchy",
    "build_amg",
    "pcg_solve",
    "lanczos_extremes",
    "estimate_condition",
    "SEED",
]

SEED = 42


class IndefiniteMatrixError(ArithmeticError):
    """Raised when CG meets a direction of non-positive curvature."""


class AMGWarning(UserWarning):
    pass


@dataclass
class SolveReport:
    iterations: int
    relative_residual_history: list = field(default_factory=list)
    wall_time: float = 0.0
    converged: bool = False

    @property
    def final_residual(self) -> float:
        return self.relative_residual_history[-1] if self.relative_residual_history else float("nan")


@dataclass
class SpectrumEstimate:
    lambda_max: float
    lambda_min: float
    kappa: float
    lanczos_steps: int

    def __post_init__(self):
        if not (self.lambda_max >= self.lambda_min > 0):
            raise ValueError(f"invalid spectrum estimate [{self.lambda_min}, {self.lambda_max}]")


# ----------------------------------------------------------------------- AMG
def _strength(A: sp.csr_matrix, theta: float) -> sp.csr_matrix:
    d = np.sqrt(np.abs(A.diagonal()))
    C = sp.coo_matrix(A)
    off = C.row != C.col
    rel = np.where(off, np.abs(C.data) / (d[C.row] * d[C.col]), 0.0)
    # every row keeps its strongest link, so weak coarse stencils do not leave singletons
    rmax = np.zeros(A.shape[0])
    np.maximum.at(rmax, C.row, rel)
    keep = off & ((rel >= theta) | ((rel >= rmax[C.row]) & (rel > 0)))
    S = sp.csr_matrix((np.ones(keep.sum()), (C.row[keep], C.col[keep])), shape=A.shape)
    return S


def _aggregate(S: sp.csr_matrix) -> np.ndarray:
    """Greedy aggregation: roots with free neighbourhoods, then attach leftovers."""
    n = S.shape[0]
    ptr, idx = S.indptr, S.indices
    agg = np.full(n, -1, dtype=np.int64)
    k = 0
    for i in range(n):
        if agg[i] >= 0:
            continue
        nb = idx[ptr[i]:ptr[i + 1]]
        if len(nb) and np.all(agg[nb] < 0):
            agg[i] = k
            agg[nb] = k
            k += 1
    for i in np.flatnonzero(agg < 0):
        nb = idx[ptr[i]:ptr[i + 1]]
        nb = nb[agg[nb] >= 0]
        if len(nb):
            agg[i] = agg[nb[0]]
    for i in np.flatnonzero(agg < 0):
        agg[i] = k
        k += 1
    return agg


@dataclass
class _Level:
    A: sp.csr_matrix
    P: sp.csr_matrix | None
    dinv: np.ndarray
    omega: float = 2.0 / 3.0


def _jacobi_radius(A: sp.csr_matrix, dinv: np.ndarray, steps: int = 15) -> float:
    """Upper estimate of rho(D^-1 A) from a short Lanczos run, padded by 5%."""
    n = A.shape[0]
    if n <= 2:
        return float(np.max(np.abs(np.linalg.eigvals((dinv[:, None] * A.toarray())))))
    s = np.sqrt(dinv)
    _, top, _ = lanczos_extremes(lambda v: s * (A @ (s * v)), n, steps=min(steps, n), tol=0.0)
    return 1.05 * float(top)


class AMGHierarchy:
    """Symmetric V-cycle built from unsmoothed aggregation.

    Damped Jacobi is applied once before and once after the coarse
    correction, so the cycle is a symmetric operator; it is positive
    definite as long as the smoother converges on every level.
    """

    def __init__(self, levels: list, coarse_factor, omega: float, sweeps: int):
        self.levels = levels
        self.coarse_factor = coarse_factor
        self.omega = omega
        self.sweeps = sweeps

    @property
    def n_levels(self) -> int:
        return len(self.levels)

    @property
    def operator_complexity(self) -> float:
        return sum(L.A.nnz for L in self.levels) / self.levels[0].A.nnz

    def _cycle(self, lvl: int, b: np.ndarray) -> np.ndarray:
        L = self.levels[lvl]
        if lvl == len(self.levels) - 1:
            return sla.cho_solve(self.coarse_factor, b)
        w = L.omega * L.dinv
        x = w * b
        for _ in range(self.sweeps - 1):
            x += w * (b - L.A @ x)
        r = b - L.A @ x
        x += L.P @ self._cycle(lvl + 1, L.P.T @ r)
        for _ in range(self.sweeps):
            x += w * (b - L.A @ x)
        return x

    def apply(self, r) -> np.ndarray:
        return self._cycle(0, np.asarray(r, dtype=float))

    __call__ = apply

    def aslinearoperator(self) -> spla.LinearOperator:
        n = self.levels[0].A.shape[0]
        return spla.LinearOperator((n, n), matvec=self.apply, dtype=float)


def build_amg(A, strength: float = 0.08, omega: float = 2.0 / 3.0, sweeps: int = 1,
              max_coarse: int = 200, max_levels: int = 25, min_reduction: float = 0.05,
              strength_decay: float = 1.0, prolongation: str = "smoothed") -> AMGHierarchy:
    """Aggregation AMG hierarchy for an SPD matrix.

    ``strength`` is the threshold on |a_ij|/sqrt(a_ii a_jj), multiplied by
    ``strength_decay`` on each coarser level. The Jacobi weight on a level
    is min(omega, 4/(3 rho)) with rho an estimate of rho(D^-1 A); this keeps
    the smoother convergent, and hence the cycle positive definite, when
    the diagonal is weak. ``prolongation`` is ``"tentative"`` (piecewise
    constant on aggregates) or ``"smoothed"`` (one damped-Jacobi step
    applied to it).
    """
    if prolongation not in ("tentative", "smoothed"):
        raise ValueError(f"unknown prolongation {prolongation!r}")
    A = sp.csr_matrix(A, dtype=float)
    levels = []
    theta = strength
    while True:
        diag = A.diagonal()
        if np.any(diag <= 0):
            raise IndefiniteMatrixError("non-positive diagonal entry in AMG level")
        n = A.shape[0]
        dinv = 1.0 / diag
        if n <= max_coarse or len(levels) + 1 >= max_levels:
            levels.append(_Level(A, None, dinv))
            break
        rho = _jacobi_radius(A, dinv)
        w = min(omega, 4.0 / (3.0 * rho))
        agg = _aggregate(_strength(A, theta))
        theta *= strength_decay
        nc = int(agg.max()) + 1
        if nc > (1.0 - min_reduction) * n:
            warnings.warn(f"AMG coarsening stagnated at level {len(levels)} ({n} -> {nc}); hierarchy truncated",
                          AMGWarning, stacklevel=2)
            levels.append(_Level(A, None, dinv))
            break
        P = sp.csr_matrix((np.ones(n), (np.arange(n), agg)), shape=(n, nc))
        if prolongation == "smoothed":
            P = sp.csr_matrix(P - (4.0 / (3.0 * rho)) * (sp.diags(dinv) @ (A @ P)))
        levels.append(_Level(A, P, dinv, w))
        A = sp.csr_matrix(P.T @ A @ P)
    coarse = levels[-1].A.toarray()
    try:
        factor = sla.cho_factor(coarse)
    except np.linalg.LinAlgError:
        raise IndefiniteMatrixError("coarsest AMG matrix is not positive definite") from None
    return AMGHierarchy(levels, factor, omega, sweeps)


# ------------------------------------------------------------------------ CG
def _as_precond(M):
    if M is None:
        return lambda r: r.copy()
    if isinstance(M, AMGHierarchy):
        return M.apply
    if callable(M):
        return M
    if hasattr(M, "matvec"):
        return M.matvec
    if sp.issparse(M) or isinstance(M, np.ndarray):
        return lambda r: M @ r
    raise TypeError(f"unsupported preconditioner {type(M)!r}")


def pcg_solve(system, b=None, tol: float = 1e-8, max_iter: int = 1000, preconditioner="amg",
              x0=None, callback=None, amg_options: dict | None = None):
    """Preconditioned CG on an SPD matrix.

    ``system`` is a ``SparseSystem`` (its matrix and rhs are used) or a
    matrix, in which case ``b`` is required. ``preconditioner`` is
    ``"amg"``, ``"jacobi"``, ``None`` or any callable / operator. Stops when
    ||b - Ax|| <= tol ||b||. Returns (x, SolveReport).
    """
    A = system.matrix if hasattr(system, "matrix") else system
    if b is None:
        b = system.rhs
    b = np.asarray(b, dtype=float)
    t0 = time.perf_counter()
    if isinstance(preconditioner, str):
        if preconditioner == "amg":
            preconditioner = build_amg(A, **(amg_options or {}))
        elif preconditioner == "jacobi":
            dinv = 1.0 / A.diagonal()
            preconditioner = lambda r: dinv * r  # noqa: E731
        elif preconditioner == "none":
            preconditioner = None
        else:
            raise ValueError(f"unknown preconditioner {preconditioner!r}")
    M = _as_precond(preconditioner)
    n = len(b)
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    bnorm = np.linalg.norm(b)
    if bnorm == 0:
        return np.zeros(n), SolveReport(0, [0.0], time.perf_counter() - t0, True)
    r = b - A @ x
    hist = [np.linalg.norm(r) / bnorm]
    if hist[-1] <= tol:
        return x, SolveReport(0, hist, time.perf_counter() - t0, True)
    z = M(r)
    rz = r @ z
    if not rz > 0:
        raise IndefiniteMatrixError("preconditioner is not positive definite")
    p = z.copy()
    it = 0
    converged = False
    while it < max_iter:
        Ap = A @ p
        pAp = p @ Ap
        if not pAp > 0:
            raise IndefiniteMatrixError(
                f"CG found p^T A p = {pAp:.3e} <= 0 at iteration {it}; the matrix is not positive "
                "definite, increase the penalty parameter sigma"
            )
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        it += 1
        hist.append(np.linalg.norm(r) / bnorm)
        if callback is not None:
            callback(x)
        if hist[-1] <= tol:
            converged = True
            break
        z = M(r)
        rz_new = r @ z
        if not rz_new > 0:
            raise IndefiniteMatrixError("preconditioner is not positive definite")
        p = z + (rz_new / rz) * p
        rz = rz_new
    return x, SolveReport(it, hist, time.perf_counter() - t0, converged)


# ------------------------------------------------------------------- Lanczos
def lanczos_extremes(op, n: int, steps: int = 200, tol: float = 1e-6, seed: int = SEED):
    """Extreme Ritz values of a symmetric operator, full reorthogonalisation.

    Stops when both extreme Ritz values change by less than ``tol``
    (relative) between consecutive steps. Returns (theta_min, theta_max,
    steps_taken).
    """
    rng = np.random.default_rng(seed)
    steps = min(steps, n)
    Q = np.zeros((n, steps + 1))
    q = rng.standard_normal(n)
    Q[:, 0] = q / np.linalg.norm(q)
    alpha, beta = [], []
    prev = None
    k = 0
    for k in range(steps):
        w = op(Q[:, k])
        a = Q[:, k] @ w
        w = w - a * Q[:, k] - (beta[-1] * Q[:, k - 1] if k else 0.0)
        w -= Q[:, :k + 1] @ (Q[:, :k + 1].T @ w)
        w -= Q[:, :k + 1] @ (Q[:, :k + 1].T @ w)
        alpha.append(a)
        b = np.linalg.norm(w)
        theta = sla.eigh_tridiagonal(np.array(alpha), np.array(beta), eigvals_only=True)
        cur = (theta[0], theta[-1])
        if prev is not None and abs(cur[0] - prev[0]) <= tol * abs(cur[0]) and abs(cur[1] - prev[1]) <= tol * abs(cur[1]):
            return cur[0], cur[1], k + 1
        prev = cur
        if b <= 1e-14 * max(abs(a), 1.0):
            return cur[0], cur[1], k + 1
        beta.append(b)
        Q[:, k + 1] = w / b
    return prev[0], prev[1], k + 1


def estimate_condition(A, steps: int = 300, tol: float = 1e-6, inner: str = "pcg",
                       inner_tol: float = 1e-12) -> SpectrumEstimate:
    """Spectral condition number of an SPD matrix.

    lambda_max from Lanczos on A; lambda_min as the inverse of the largest
    eigenvalue of A^{-1}, found by Lanczos with inner solves (``inner`` is
    ``"pcg"`` with the AMG preconditioner, or ``"direct"``).
    """
    A = sp.csr_matrix(A)
    n = A.shape[0]
    if n == 1:
        v = float(A[0, 0])
        return SpectrumEstimate(v, v, 1.0, 1)
    _, lmax, k1 = lanczos_extremes(lambda v: A @ v, n, steps, tol)
    if inner == "direct":
        lu = spla.splu(sp.csc_matrix(A))
        solve = lu.solve
    elif inner == "pcg":
        M = build_amg(A)

        def solve(v):
            x, rep = pcg_solve(A, v, tol=inner_tol, max_iter=5000, preconditioner=M)
            if not rep.converged:
                raise RuntimeError(f"inner PCG solve failed ({rep.final_residual:.2e})")
            return x
    else:
        raise ValueError(f"unknown inner solver {inner!r}")
    _, mu, k2 = lanczos_extremes(solve, n, steps, tol)
    lmin = 1.0 / mu
    return SpectrumEstimate(float(lmax), float(lmin), float(lmax / lmin), k1 + k2)
