"""Level-set descriptions of the interface.

``value(x) < 0`` marks the inner subdomain, ``value(x) > 0`` the outer one.
Points are arrays of shape ``(..., 3)``.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

__all__ = [
    "LevelSet",
    "FunctionLevelSet",
    "Sphere",
    "Orthocircle",
    "Squircle",
    "Plane",
    "make_level_set",
    "register_level_set",
    "LEVEL_SETS",
]


class LevelSet:
    """Base class. Subclasses provide ``value``; ``gradient`` defaults to
    central differences with step ``fd_step``."""

    fd_step: float = 1e-6

    def value(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, x):
        return self.value(x)

    def gradient(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        h = self.fd_step
        g = np.empty(x.shape)
        for k in range(3):
            e = np.zeros(3)
            e[k] = h
            g[..., k] = (self.value(x + e) - self.value(x - e)) / (2 * h)
        return g

    def normal(self, x: np.ndarray) -> np.ndarray:
        g = self.gradient(x)
        return g / np.linalg.norm(g, axis=-1, keepdims=True)

    def project(self, x: np.ndarray, max_steps: int = 10, tol: float = 1e-12) -> np.ndarray:
        """Move points onto the zero set with Newton steps along the gradient."""
        x = np.array(x, dtype=float)
        for _ in range(max_steps):
            v = self.value(x)
            if np.all(np.abs(v) <= tol):
                break
            g = self.gradient(x)
            x = x - (v / np.sum(g * g, axis=-1))[..., None] * g
        return x


class FunctionLevelSet(LevelSet):
    """Wrap plain callables; the gradient falls back to finite differences."""

    def __init__(self, fun: Callable, grad: Callable | None = None, fd_step: float = 1e-6):
        self._fun = fun
        self._grad = grad
        self.fd_step = fd_step

    def value(self, x):
        return np.asarray(self._fun(np.asarray(x, dtype=float)), dtype=float)

    def gradient(self, x):
        if self._grad is None:
            return super().gradient(x)
        return np.asarray(self._grad(np.asarray(x, dtype=float)), dtype=float)


class Sphere(LevelSet):
    def __init__(self, radius: float = np.pi / 4, center=(0.0, 0.0, 0.0)):
        self.radius = float(radius)
        self.center = np.asarray(center, dtype=float)

    def value(self, x):
        d = np.asarray(x, dtype=float) - self.center
        return np.sum(d * d, axis=-1) - self.radius**2

    def gradient(self, x):
        return 2.0 * (np.asarray(x, dtype=float) - self.center)


class Plane(LevelSet):
    """gamma(x) = (x - point) . normal"""

    def __init__(self, normal=(1.0, 0.0, 0.0), offset: float = 0.31):
        n = np.asarray(normal, dtype=float)
        self.normal_vector = n / np.linalg.norm(n)
        self.offset = float(offset)

    def value(self, x):
        return np.asarray(x, dtype=float) @ self.normal_vector - self.offset

    def gradient(self, x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(self.normal_vector, x.shape).copy()


class Squircle(LevelSet):
    """x^4 + y^4 + z^4 - r0^4 with r0 = 0.75 - epsilon by default."""

    def __init__(self, epsilon: float = 0.1, radius: float | None = None):
        self.epsilon = float(epsilon)
        self.radius = 0.75 - self.epsilon if radius is None else float(radius)

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return np.sum(x**4, axis=-1) - self.radius**4

    def gradient(self, x):
        return 4.0 * np.asarray(x, dtype=float) ** 3


class Orthocircle(LevelSet):
    """Three interlocking tori-like rings, thickness controlled by ``c``."""

    def __init__(self, c: float = 0.075):
        self.c = float(c)

    def _factors(self, x):
        x = np.asarray(x, dtype=float)
        X, Y, Z = x[..., 0], x[..., 1], x[..., 2]
        X2, Y2, Z2 = X * X, Y * Y, Z * Z
        a1, a2, a3 = X2 + Y2 - 1, X2 + Z2 - 1, Y2 + Z2 - 1
        p1 = a1 * a1 + Z2
        p2 = a2 * a2 + Y2
        p3 = a3 * a3 + X2
        return X, Y, Z, a1, a2, a3, p1, p2, p3

    def value(self, x):
        X, Y, Z, _, _, _, p1, p2, p3 = self._factors(x)
        return p1 * p2 * p3 - self.c**2 * (1 + 3 * (X * X + Y * Y + Z * Z))

    def gradient(self, x):
        X, Y, Z, a1, a2, a3, p1, p2, p3 = self._factors(x)
        g1 = np.stack([4 * X * a1, 4 * Y * a1, 2 * Z], axis=-1)
        g2 = np.stack([4 * X * a2, 2 * Y, 4 * Z * a2], axis=-1)
        g3 = np.stack([2 * X, 4 * Y * a3, 4 * Z * a3], axis=-1)
        g = (p2 * p3)[..., None] * g1 + (p1 * p3)[..., None] * g2 + (p1 * p2)[..., None] * g3
        return g - 6 * self.c**2 * np.stack([X, Y, Z], axis=-1)


LEVEL_SETS: dict[str, Callable[..., LevelSet]] = {
    "sphere": Sphere,
    "orthocircle": Orthocircle,
    "squircle": Squircle,
    "plane": Plane,
}


def register_level_set(name: str, factory: Callable[..., LevelSet]) -> None:
    LEVEL_SETS[name] = factory


def make_level_set(name: str, **params) -> LevelSet:
    try:
        factory = LEVEL_SETS[name]
    except KeyError:
        raise KeyError(f"unknown level set {name!r}; known: {sorted(LEVEL_SETS)}") from None
    return factory(**params)
