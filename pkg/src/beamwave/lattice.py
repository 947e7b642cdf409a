"""Discretized 3-torus, wavevector arithmetic and the beam dispersion relation.

Nodes are the centered lattice ``{-D, ..., D}^3 / (2D+1)``.  A node is
addressed either by its signed integer indices ``(ix, iy, iz)`` or by a flat
index ``((ix+D)*n + (iy+D))*n + (iz+D)``; the flat order is lexicographic in
the signed indices and is used everywhere as the canonical node order.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def dispersion_formula(omega0: float, k) -> np.ndarray:
    """omega(k) = omega0 + sum_j 2(1 - cos(2 pi k^j)) for torus coordinates k."""
    k = np.asarray(k, dtype=float)
    return omega0 + np.sum(2.0 * (1.0 - np.cos(2.0 * np.pi * k)), axis=-1)


def upsilon(alpha, beta):
    """cos(2 pi a) + cos(2 pi b) - cos(2 pi (a + b)); ranges over [-3, 3/2]."""
    alpha = np.asarray(alpha, dtype=float)
    beta = np.asarray(beta, dtype=float)
    return (np.cos(2 * np.pi * alpha) + np.cos(2 * np.pi * beta)
            - np.cos(2 * np.pi * (alpha + beta)))


@dataclass(frozen=True, eq=False)
class Grid:
    D: int
    omega0: float = 2.5
    allow_any_omega0: bool = False
    n: int = field(init=False)
    h: float = field(init=False)
    indices: np.ndarray = field(init=False, repr=False)
    coords: np.ndarray = field(init=False, repr=False)
    omega: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if int(self.D) != self.D or self.D < 1:
            raise ValueError(f"D must be a positive integer, got {self.D!r}")
        if not self.allow_any_omega0 and not (2.0 < self.omega0 < 3.0):
            raise ValueError(f"omega0 must lie in (2, 3), got {self.omega0}")
        if self.omega0 <= 0:
            raise ValueError("omega0 must be positive")
        n = 2 * self.D + 1
        axis = np.arange(-self.D, self.D + 1)
        ix, iy, iz = np.meshgrid(axis, axis, axis, indexing="ij")
        indices = np.stack([ix.ravel(), iy.ravel(), iz.ravel()], axis=1)
        coords = indices / n
        omega = dispersion_formula(self.omega0, coords)
        for arr in (indices, coords, omega):
            arr.setflags(write=False)
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "h", 1.0 / n)
        object.__setattr__(self, "indices", indices)
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "omega", omega)

    @property
    def size(self) -> int:
        return self.n ** 3

    @property
    def cell_volume(self) -> float:
        return self.h ** 3

    def wrap(self, i):
        """Map signed indices into [-D, D] modulo n."""
        return (np.asarray(i) + self.D) % self.n - self.D

    def flat(self, k) -> np.ndarray | int:
        """Flat node index of signed index triple(s) ``k`` (wrapped first)."""
        k = self.wrap(k)
        s = k + self.D
        out = (s[..., 0] * self.n + s[..., 1]) * self.n + s[..., 2]
        return int(out) if np.ndim(out) == 0 else out

    def add(self, a, b):
        """Flat index of k_a + k_b on the torus (flat inputs)."""
        return self.flat(self.indices[a] + self.indices[b])

    def sub(self, a, b):
        return self.flat(self.indices[a] - self.indices[b])

    def neg(self, a):
        return self.flat(-self.indices[a])

    @property
    def origin(self) -> int:
        return self.flat((0, 0, 0))

    def dispersion(self, k) -> float:
        """omega at flat node ``k`` (cached table lookup)."""
        return float(self.omega[k])

    # Residuals of the three collision conditions, each evaluated from the
    # cached table through its algebraic identity.
    def residual_forward(self, x, y):
        """omega(y) - omega(x) - omega(y - x); zero iff x, y forward-connected."""
        return self.omega[y] - self.omega[x] - self.omega[self.sub(y, x)]

    def residual_backward(self, x, y):
        """omega(x) - omega(y) - omega(x - y); zero iff x, y backward-connected."""
        return self.omega[x] - self.omega[y] - self.omega[self.sub(x, y)]

    def residual_central(self, x, y):
        """omega(x + y) - omega(x) - omega(y); symmetric in x and y."""
        return self.omega[self.add(x, y)] - (self.omega[x] + self.omega[y])

    def on_edge(self, k) -> np.ndarray | bool:
        """True where some component of k is 0 (the lattice never reaches +-1/2)."""
        idx = self.indices[k]
        out = np.any(idx == 0, axis=-1)
        return bool(out) if np.ndim(out) == 0 else out


def residual_forward_direct(omega0: float, x, y):
    """Trigonometric form of the forward residual on torus coordinates."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    s = np.cos(2 * np.pi * (y - x)) + np.cos(2 * np.pi * x) - np.cos(2 * np.pi * y)
    return np.sum(2 * s, axis=-1) - 6 - omega0


def residual_backward_direct(omega0: float, x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    s = np.cos(2 * np.pi * y) + np.cos(2 * np.pi * (x - y)) - np.cos(2 * np.pi * x)
    return np.sum(2 * s, axis=-1) - 6 - omega0


def residual_central_direct(omega0: float, x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return np.sum(2 * upsilon(x, y), axis=-1) - 6 - omega0
