"""Broadened 3-wave collision operator, its weak form, cutoff variant and gain/loss split.

Assembly runs once over the unordered triads.  A triad ``(k; k1, k2)`` with
combined weight ``w`` and ``F = f1 f2 - f f1 - f f2`` adds ``+2wF`` at ``k``
and ``-2wF`` at ``k1`` and ``k2``; a diagonal triad (``k1 == k2``) adds ``+wF``
at ``k`` and ``-2wF`` once at ``k1``.  Node sums use ``np.bincount`` over the
fixed triad order, so results are reproducible bit for bit.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .lattice import Grid
from .resonance import TriadTable


def _field(f, grid: Grid) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    if f.shape != (grid.size,):
        raise ValueError(f"field must have shape ({grid.size},), got {f.shape}")
    return f


def _gain_factor(table: TriadTable) -> np.ndarray:
    """Multiplicity of the k slot: 2 for an unordered pair, 1 on the diagonal."""
    return np.where(table.diagonal, 1.0, 2.0)


def _scatter(grid: Grid, table: TriadTable, at_k, at_k1, at_k2) -> np.ndarray:
    n = grid.size
    out = np.bincount(table.k, weights=at_k, minlength=n)
    out += np.bincount(table.k1, weights=at_k1, minlength=n)
    out += np.bincount(table.k2, weights=np.where(table.diagonal, 0.0, at_k2), minlength=n)
    return out


def triad_flux(grid: Grid, table: TriadTable, f) -> np.ndarray:
    """w * F per triad."""
    f = _field(f, grid)
    f0, f1, f2 = f[table.k], f[table.k1], f[table.k2]
    return table.combined_weight(grid.h) * (f1 * f2 - f0 * f1 - f0 * f2)


def _assemble(grid, table, wF) -> np.ndarray:
    return _scatter(grid, table, _gain_factor(table) * wF, -2.0 * wF, -2.0 * wF)


def apply_Q(grid: Grid, table: TriadTable, f, projection=None) -> np.ndarray:
    """Discrete collision operator Q_c[f] at every node.

    ``projection`` (a ``ConservativeProjection``) optionally removes the
    O(theta) energy leak of the broadened triads.
    """
    out = _assemble(grid, table, triad_flux(grid, table, f))
    if projection is not None:
        out = projection(out)
    return out


def apply_weak(grid: Grid, table: TriadTable, f, phi) -> float:
    """Weak pairing h^3 sum_k Q[f](k) phi(k), summed triad by triad."""
    phi = _field(phi, grid)
    wF = triad_flux(grid, table, f)
    # diagonal: gain wF at k, loss 2wF at k1; phi(k) - 2 phi(k1) times wF
    test = np.where(table.diagonal,
                    phi[table.k] - 2.0 * phi[table.k1],
                    2.0 * (phi[table.k] - phi[table.k1] - phi[table.k2]))
    return grid.cell_volume * float(np.sum(wF * test))


def entropy_dissipation(grid: Grid, table: TriadTable, f) -> float:
    """D_c[f] = h^3 sum_triads m w f f1 f2 (1/f1 + 1/f2 - 1/f)^2 >= 0 (m = 2, or 1 on the diagonal)."""
    f = _field(f, grid)
    used = np.concatenate([table.k, table.k1, table.k2])
    if used.size and np.min(f[used]) <= 0:
        raise ValueError("entropy dissipation needs f > 0 on every node in a triad")
    f0, f1, f2 = f[table.k], f[table.k1], f[table.k2]
    defect = 1.0 / f1 + 1.0 / f2 - 1.0 / f0
    w = table.combined_weight(grid.h)
    return grid.cell_volume * float(np.sum(_gain_factor(table) * w * f0 * f1 * f2 * defect ** 2))


def entropy_dissipation_nodes(grid, table, f) -> np.ndarray:
    """Per-triad dissipation density, for region-wise sums."""
    f = _field(f, grid)
    f0, f1, f2 = f[table.k], f[table.k1], f[table.k2]
    defect = 1.0 / f1 + 1.0 / f2 - 1.0 / f0
    return (grid.cell_volume * _gain_factor(table) * table.combined_weight(grid.h)
            * f0 * f1 * f2 * defect ** 2)


# -- cutoff ------------------------------------------------------------------

def _smoothstep(t):
    t = np.clip(t, 0.0, 1.0)
    return t * t * (3.0 - 2.0 * t)


@dataclass(frozen=True)
class CutoffSpec:
    N: float = math.inf

    def __post_init__(self):
        if not self.N > 1:
            raise ValueError("cutoff level N must exceed 1")

    @property
    def active(self) -> bool:
        return math.isfinite(self.N)

    def rho(self, z):
        """1 on [1/N, N], 0 on [0, 1/(2N)] and [2N, inf), cubic smoothstep between."""
        z = np.asarray(z, dtype=float)
        if not self.active:
            return np.ones_like(z)
        N = self.N
        up = _smoothstep((z - 0.5 / N) / (0.5 / N))
        down = 1.0 - _smoothstep((z - N) / N)
        return np.where(z <= N, up, down)


def gradient_magnitude(grid: Grid, f) -> np.ndarray:
    """|grad f| by centered periodic differences with spacing h."""
    f = _field(f, grid).reshape(grid.n, grid.n, grid.n)
    sq = np.zeros_like(f)
    for ax in range(3):
        d = (np.roll(f, -1, axis=ax) - np.roll(f, 1, axis=ax)) / (2.0 * grid.h)
        sq += d * d
    return np.sqrt(sq).ravel()


def chi(grid: Grid, f, cutoff: CutoffSpec) -> np.ndarray:
    """chi_N[f] = rho_N(f) rho_N(|grad f|) per node; identically 1 for N = inf."""
    if not cutoff.active:
        return np.ones(grid.size)
    return cutoff.rho(f) * cutoff.rho(gradient_magnitude(grid, f))


def chi_star(grid, table, f, cutoff: CutoffSpec):
    """chi_N[f] chi_N[f1] chi_N[f2] per triad, or None when the cutoff is off."""
    if not cutoff.active:
        return None
    c = chi(grid, f, cutoff)
    return c[table.k] * c[table.k1] * c[table.k2]


def apply_Q_cutoff(grid: Grid, table: TriadTable, f, cutoff: CutoffSpec) -> np.ndarray:
    cs = chi_star(grid, table, f, cutoff)
    wF = triad_flux(grid, table, f)
    if cs is not None:
        wF = wF * cs
    return _assemble(grid, table, wF)


def split_Q_g(grid: Grid, table: TriadTable, g, cutoff: CutoffSpec):
    """Gain/loss split of the kernel-stripped cutoff operator in g = 1/f.

    Returns ``(Qplus, Qminus, L)`` with ``Qplus = g * L``.  The cutoff factor
    chi is evaluated on ``f = 1/g`` only where the cutoff is active.
    """
    g = _field(g, grid)
    v = table.combined_weight(grid.h)
    if cutoff.active:
        with np.errstate(divide="ignore"):
            f = np.where(g != 0, 1.0 / np.where(g != 0, g, 1.0), np.inf)
        v = v * chi_star(grid, table, f, cutoff)
    diag = table.diagonal
    g0, g1, g2 = g[table.k], g[table.k1], g[table.k2]
    L = _scatter(grid, table, np.where(diag, v, 2.0 * v), 2.0 * v, 2.0 * v)
    minus = _scatter(grid, table,
                     np.where(diag, 2.0 * v * g1, 2.0 * v * (g1 + g2)),
                     2.0 * v * (g0 - g2),
                     2.0 * v * (g0 - g1))
    return g * L, minus, L


def stripped_operator(grid, table, g, cutoff: CutoffSpec = CutoffSpec()) -> np.ndarray:
    """+2vG at k, -2vG at k1 and k2 with G = g - g1 - g2 (diagonal: +vG at k, -2vG at k1)."""
    g = _field(g, grid)
    v = table.combined_weight(grid.h)
    cs = chi_star(grid, table, np.where(g != 0, 1.0 / np.where(g != 0, g, 1.0), np.inf),
                  cutoff) if cutoff.active else None
    if cs is not None:
        v = v * cs
    G = g[table.k] - g[table.k1] - g[table.k2]
    return _assemble(grid, table, v * G)


# -- energy-conserving projection -------------------------------------------

class ConservativeProjection:
    """Per-region orthogonal projection onto {E, M} conserving increments.

    For each region with constraint rows ``C = h^3 (omega, k^1, k^2, k^3)``
    the increment ``q`` is replaced by ``q - C^T (C C^T)^+ C q``.  Momentum is
    already conserved by the assembly, so in practice only the energy leak of
    the broadened triads is removed.
    """

    def __init__(self, grid: Grid, region_nodes):
        self.blocks = []
        for nodes in region_nodes:
            C = grid.cell_volume * np.column_stack([grid.omega[nodes], grid.coords[nodes]]).T
            pinv = np.linalg.pinv(C @ C.T)
            self.blocks.append((np.asarray(nodes), C, pinv))

    def __call__(self, q):
        q = np.array(q, dtype=float)
        for nodes, C, pinv in self.blocks:
            qr = q[nodes]
            q[nodes] = qr - C.T @ (pinv @ (C @ qr))
        return q
