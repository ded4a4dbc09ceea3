"""Interface problems: data container and built-in manufactured solutions."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .enrichment import JumpData
from .levelset import LevelSet, Orthocircle, Plane, Sphere, Squircle
from .mesh import BoxDomain

__all__ = [
    "ExactSolution",
    "ProblemSpec",
    "manufactured",
    "example1",
    "example2",
    "example3",
    "planar_patch",
    "PROBLEMS",
    "make_problem",
]


@dataclass
class ExactSolution:
    """Piecewise exact solution with analytic gradients and Laplacians."""

    u_minus: Callable
    u_plus: Callable
    grad_minus: Callable
    grad_plus: Callable
    lap_minus: Callable | None = None
    lap_plus: Callable | None = None

    def value(self, x, plus) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.where(plus, self.u_plus(x), self.u_minus(x))

    def gradient(self, x, plus) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.where(np.asarray(plus)[..., None], self.grad_plus(x), self.grad_minus(x))


@dataclass
class ProblemSpec:
    domain: BoxDomain
    level_set: LevelSet
    beta_minus: float
    beta_plus: float
    f: Callable
    g: Callable
    jump: JumpData
    exact: ExactSolution | None = None
    name: str = "custom"
    params: dict = field(default_factory=dict)
    f_minus: Callable | None = None  # smooth extensions of f from each side
    f_plus: Callable | None = None

    def side(self, x) -> np.ndarray:
        """True where x lies on the plus side of the interface."""
        return self.level_set.value(x) > 0


def manufactured(domain: BoxDomain, level_set: LevelSet, beta_minus: float, beta_plus: float,
                 exact: ExactSolution, name: str = "manufactured", **params) -> ProblemSpec:
    """Derive source, boundary and jump data from a piecewise exact solution."""
    bm, bp = float(beta_minus), float(beta_plus)

    def f(x):
        x = np.asarray(x, dtype=float)
        plus = level_set.value(x) > 0
        return np.where(plus, -bp * exact.lap_plus(x), -bm * exact.lap_minus(x))

    def g(x):
        x = np.asarray(x, dtype=float)
        return exact.value(x, level_set.value(x) > 0)

    jump = JumpData(
        q1=lambda x: exact.u_plus(x) - exact.u_minus(x),
        q2_vector=lambda x: bp * exact.grad_plus(x) - bm * exact.grad_minus(x),
    )
    return ProblemSpec(domain, level_set, bm, bp, f, g, jump, exact, name, dict(params),
                       f_minus=lambda x: -bm * exact.lap_minus(x), f_plus=lambda x: -bp * exact.lap_plus(x))


def _r2(x):
    return np.sum(np.asarray(x, dtype=float) ** 2, axis=-1)


def example1(beta_minus: float = 1.0, beta_plus: float = 100.0, radius: float = np.pi / 4) -> ProblemSpec:
    """Sphere in (-1, 1)^3 with u- = sin(r^2), u+ = cos(r^2)."""
    exact = ExactSolution(
        u_minus=lambda x: np.sin(_r2(x)),
        u_plus=lambda x: np.cos(_r2(x)),
        grad_minus=lambda x: 2 * np.cos(_r2(x))[..., None] * x,
        grad_plus=lambda x: -2 * np.sin(_r2(x))[..., None] * x,
        lap_minus=lambda x: 6 * np.cos(_r2(x)) - 4 * _r2(x) * np.sin(_r2(x)),
        lap_plus=lambda x: -6 * np.sin(_r2(x)) - 4 * _r2(x) * np.cos(_r2(x)),
    )
    return manufactured(BoxDomain.cube(-1, 1), Sphere(radius), beta_minus, beta_plus, exact,
                        name="example1", radius=radius)


def example2(beta_minus: float = 1.0, beta_plus: float = 100.0, c: float = 0.075) -> ProblemSpec:
    """Orthocircle in (-1.2, 1.2)^3 with u- = sin(x+2y+3z), u+ = x^2+y^3-z."""
    k = np.array([1.0, 2.0, 3.0])

    def s(x):
        return np.asarray(x, dtype=float) @ k

    def grad_plus(x):
        x = np.asarray(x, dtype=float)
        return np.stack([2 * x[..., 0], 3 * x[..., 1] ** 2, -np.ones(x.shape[:-1])], axis=-1)

    exact = ExactSolution(
        u_minus=lambda x: np.sin(s(x)),
        u_plus=lambda x: x[..., 0] ** 2 + x[..., 1] ** 3 - x[..., 2],
        grad_minus=lambda x: np.cos(s(x))[..., None] * k,
        grad_plus=grad_plus,
        lap_minus=lambda x: -14 * np.sin(s(x)),
        lap_plus=lambda x: 2 + 6 * x[..., 1],
    )
    return manufactured(BoxDomain.cube(-1.2, 1.2), Orthocircle(c), beta_minus, beta_plus, exact,
                        name="example2", c=c)


def example3(epsilon: float = 0.1, beta_minus: float = 1.0, beta_plus: float = 100.0, alpha: float = 0.5) -> ProblemSpec:
    """Squircle with r0 = 0.75 - epsilon; flux-continuous power solution."""
    ls = Squircle(epsilon)
    r0 = ls.radius
    bm, bp = float(beta_minus), float(beta_plus)
    shift = (1 / bm - 1 / bp) * r0 ** (4 * alpha)

    def s(x):
        return np.sum(np.asarray(x, dtype=float) ** 4, axis=-1)

    def p(x):
        return s(x) ** alpha

    def grad_p(x):
        x = np.asarray(x, dtype=float)
        sv = s(x)
        with np.errstate(divide="ignore", invalid="ignore"):
            fac = np.where(sv > 0, alpha * sv ** (alpha - 1), 0.0)
        return fac[..., None] * 4 * x**3

    def lap_p(x):
        x = np.asarray(x, dtype=float)
        sv = s(x)
        with np.errstate(divide="ignore", invalid="ignore"):
            t1 = alpha * (alpha - 1) * sv ** (alpha - 2) * 16 * np.sum(x**6, axis=-1)
            t2 = alpha * sv ** (alpha - 1) * 12 * np.sum(x**2, axis=-1)
            out = np.where(sv > 0, t1 + t2, 0.0)
        return out

    exact = ExactSolution(
        u_minus=lambda x: p(x) / bm,
        u_plus=lambda x: p(x) / bp + shift,
        grad_minus=lambda x: grad_p(x) / bm,
        grad_plus=lambda x: grad_p(x) / bp,
        lap_minus=lambda x: lap_p(x) / bm,
        lap_plus=lambda x: lap_p(x) / bp,
    )
    return manufactured(BoxDomain.cube(-1, 1), ls, bm, bp, exact, name="example3",
                        epsilon=epsilon, alpha=alpha)


def planar_patch(offset: float = 0.31, beta_minus: float = 1.0, beta_plus: float = 100.0,
                 minus=(1.0, 2.0, -1.0, 0.5), plus=(0.3, -1.0, 0.7, 0.2)) -> ProblemSpec:
    """Piecewise-linear solution across the plane x = offset in the unit cube.

    ``minus``/``plus`` are (c0, cx, cy, cz); any choice gives non-zero
    solution and flux jumps, which the method must reproduce exactly.
    """
    cm = np.asarray(minus, dtype=float)
    cp = np.asarray(plus, dtype=float)
    exact = ExactSolution(
        u_minus=lambda x: cm[0] + np.asarray(x, dtype=float) @ cm[1:],
        u_plus=lambda x: cp[0] + np.asarray(x, dtype=float) @ cp[1:],
        grad_minus=lambda x: np.broadcast_to(cm[1:], np.shape(x)).copy(),
        grad_plus=lambda x: np.broadcast_to(cp[1:], np.shape(x)).copy(),
        lap_minus=lambda x: np.zeros(np.shape(x)[:-1]),
        lap_plus=lambda x: np.zeros(np.shape(x)[:-1]),
    )
    return manufactured(BoxDomain.cube(0, 1), Plane((1, 0, 0), offset), beta_minus, beta_plus, exact,
                        name="patch", offset=offset)


PROBLEMS: dict[str, Callable[..., ProblemSpec]] = {
    "example1": example1,
    "example2": example2,
    "example3": example3,
    "patch": planar_patch,
}


def make_problem(name: str, **params) -> ProblemSpec:
    try:
        return PROBLEMS[name](**params)
    except KeyError:
        raise KeyError(f"unknown problem {name!r}; known: {sorted(PROBLEMS)}") from None
