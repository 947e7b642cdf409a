"""Broadened resonant-triad enumeration and the set index functionals.

The frequency delta is replaced by a normalized kernel of half-width
``theta``; momentum conservation stays exact on the lattice.  Every unordered
triad ``(k; k1, k2)`` with ``k = k1 + k2``, ``k1 <= k2`` (flat order) and
``|omega(k) - omega(k1) - omega(k2)|`` inside the kernel support is stored
once.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .lattice import Grid, upsilon

_SHAPES = ("gaussian", "box")
_DEFAULT_CUTOFF = {"gaussian": 3.0, "box": 1.0}
# slack on the per-axis pruning threshold; pruning must never drop a pair the
# exact table test keeps
_PRUNE_SLACK = 1e-9


@dataclass(frozen=True)
class BroadeningKernel:
    theta: float
    shape: str = "gaussian"
    cutoff_multiple: float | None = None

    def __post_init__(self):
        if self.shape not in _SHAPES:
            raise ValueError(f"unknown kernel shape {self.shape!r}")
        if not self.theta > 0:
            raise ValueError("theta must be positive")
        if self.cutoff_multiple is None:
            object.__setattr__(self, "cutoff_multiple", _DEFAULT_CUTOFF[self.shape])
        if not self.cutoff_multiple > 0:
            raise ValueError("cutoff_multiple must be positive")

    @property
    def support(self) -> float:
        return self.cutoff_multiple * self.theta

    def __call__(self, s):
        """phi_theta(s), zero outside |s| <= support."""
        s = np.asarray(s, dtype=float)
        inside = np.abs(s) <= self.support
        if self.shape == "gaussian":
            val = np.exp(-np.pi * (s / self.theta) ** 2) / self.theta
        else:
            val = np.full(s.shape, 0.5 / self.theta)
        return np.where(inside, val, 0.0)

    def check_margin(self, omega0: float) -> None:
        if self.theta >= omega0 - 2.0:
            raise ValueError(
                f"theta={self.theta} must be below omega0 - 2 = {omega0 - 2.0:g}")


@dataclass(frozen=True, eq=False)
class TriadTable:
    """Immutable list of broadened triads, stored as parallel arrays."""

    D: int
    omega0: float
    kernel: BroadeningKernel
    c_K: float
    k: np.ndarray
    k1: np.ndarray
    k2: np.ndarray
    weight: np.ndarray
    kernel_factor: np.ndarray
    delta_omega: np.ndarray = field(repr=False)

    def __len__(self) -> int:
        return len(self.k)

    @property
    def n_nodes(self) -> int:
        return (2 * self.D + 1) ** 3

    @property
    def key(self) -> dict:
        return cache_key(self.D, self.omega0, self.kernel, self.c_K)

    @cached_property
    def diagonal(self) -> np.ndarray:
        return self.k1 == self.k2

    @cached_property
    def _node_index(self):
        nodes = np.concatenate([self.k, self.k1, self.k2])
        tids = np.tile(np.arange(len(self)), 3)
        slots = np.repeat(np.arange(3), len(self))
        # a diagonal triad lists its doubled node once in slot 1
        keep = np.ones(len(nodes), bool)
        keep[2 * len(self):] = ~self.diagonal
        nodes, tids, slots = nodes[keep], tids[keep], slots[keep]
        order = np.lexsort((slots, tids, nodes))
        ptr = np.zeros(self.n_nodes + 1, dtype=np.int64)
        np.add.at(ptr, nodes + 1, 1)
        return np.cumsum(ptr), tids[order], slots[order]

    def triples_of(self, node: int) -> list[tuple[int, int]]:
        """(triple id, slot) pairs in which ``node`` appears; slot 0 is k."""
        ptr, tids, slots = self._node_index
        lo, hi = ptr[node], ptr[node + 1]
        return list(zip(tids[lo:hi].tolist(), slots[lo:hi].tolist()))

    @cached_property
    def participation(self) -> np.ndarray:
        """Number of (triple, slot) memberships per node."""
        ptr = self._node_index[0]
        return np.diff(ptr)

    def combined_weight(self, h: float) -> np.ndarray:
        """w = h^3 * weight * kernel_factor per triple."""
        return h ** 3 * self.weight * self.kernel_factor

    def count_wrapping(self, grid: Grid) -> int:
        """Triads whose momentum balance needs a torus wrap (k != k1 + k2 in R^3)."""
        s = grid.indices[self.k1] + grid.indices[self.k2]
        return int(np.any(s != grid.indices[self.k], axis=1).sum())


def cache_key(D, omega0, kernel: BroadeningKernel, c_K) -> dict:
    return {"D": int(D), "omega0": float(omega0), "theta": float(kernel.theta),
            "shape": kernel.shape, "cutoff_multiple": float(kernel.cutoff_multiple),
            "c_K": float(c_K)}


def cache_digest(key: dict) -> str:
    blob = json.dumps(key, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _axis_candidates(grid: Grid, threshold: float):
    """Per-axis index pairs (a, b) that can still reach the resonance band."""
    axis = np.arange(-grid.D, grid.D + 1)
    a, b = np.meshgrid(axis, axis, indexing="ij")
    ups = upsilon(a / grid.n, b / grid.n)
    keep = ups >= threshold - _PRUNE_SLACK
    return a[keep], b[keep]


def _make_table(grid, kernel, c_K, k, k1, k2) -> TriadTable:
    om = grid.omega
    # grouped so that swapping k1 and k2 is bitwise neutral
    dw = om[k] - (om[k1] + om[k2])
    order = np.lexsort((k1, k))
    k, k1, k2, dw = k[order], k1[order], k2[order], dw[order]
    weight = kernel(dw)
    kf = 1.0 / (c_K * om[k] * (om[k1] * om[k2]))
    arrays = [np.ascontiguousarray(x) for x in (k, k1, k2, weight, kf, dw)]
    for x in arrays:
        x.setflags(write=False)
    return TriadTable(grid.D, grid.omega0, kernel, float(c_K), *arrays)


def enumerate_triples(grid: Grid, kernel: BroadeningKernel, c_K: float = 1.0,
                      check_margin: bool = True) -> TriadTable:
    """All broadened triads of ``grid``.

    The triad mismatch factorizes per axis,
    ``dw = -omega0 - 6 + sum_j 2*upsilon(k1^j, k2^j)``, and each upsilon is at
    most 3/2, so an admissible pair needs ``upsilon_j >= (omega0 - support)/2``
    on every axis.  Candidates are the product of the per-axis survivors; the
    exact band test is then done with the cached dispersion table.
    """
    if check_margin:
        kernel.check_margin(grid.omega0)
    if c_K <= 0:
        raise ValueError("c_K must be positive")
    thr = 0.5 * (grid.omega0 - kernel.support)
    a, b = _axis_candidates(grid, thr)
    m = len(a)
    # remaining two axes as a fixed product; the first axis is looped so the
    # working set stays O(m^2)
    jj, kk = np.meshgrid(np.arange(m), np.arange(m), indexing="ij")
    jj, kk = jj.ravel(), kk.ravel()
    om = grid.omega
    parts = []
    for i in range(m):
        i1 = np.stack([np.full(jj.size, a[i]), a[jj], a[kk]], axis=1)
        i2 = np.stack([np.full(jj.size, b[i]), b[jj], b[kk]], axis=1)
        k1 = grid.flat(i1)
        k2 = grid.flat(i2)
        keep = k1 <= k2
        k1, k2 = k1[keep], k2[keep]
        k = grid.add(k1, k2)
        keep = np.abs(om[k] - (om[k1] + om[k2])) <= kernel.support
        parts.append((k[keep], k1[keep], k2[keep]))
    if not parts:
        parts = [(np.zeros(0, np.int64),) * 3]
    k, k1, k2 = (np.concatenate([p[j] for p in parts]).astype(np.int64) for j in range(3))
    return _make_table(grid, kernel, c_K, k, k1, k2)


def enumerate_triples_bruteforce(grid: Grid, kernel: BroadeningKernel,
                                 c_K: float = 1.0) -> TriadTable:
    """O(n^6) scan over every (k1, k2) pair; a reference for small grids."""
    kernel.check_margin(grid.omega0)
    ks, k1s, k2s = [], [], []
    om = grid.omega
    for p in range(grid.size):
        q = np.arange(p, grid.size)
        k = grid.add(np.full_like(q, p), q)
        dw = om[k] - (om[p] + om[q])
        hit = np.abs(dw) <= kernel.support
        ks.append(k[hit])
        k1s.append(np.full(hit.sum(), p))
        k2s.append(q[hit])
    cat = lambda xs: np.concatenate(xs).astype(np.int64)
    return _make_table(grid, kernel, c_K, cat(ks), cat(k1s), cat(k2s))


def save_table(table: TriadTable, path) -> None:
    """Binary cache: 9 index columns plus weight and kernel factor, bit-exact."""
    path = Path(path)
    grid = Grid(table.D, table.omega0, allow_any_omega0=True)
    idx = np.concatenate([grid.indices[table.k], grid.indices[table.k1],
                          grid.indices[table.k2]], axis=1).astype(np.int32)
    np.savez(path, key=json.dumps(table.key, sort_keys=True), idx=idx,
             weight=table.weight, kernel_factor=table.kernel_factor,
             delta_omega=table.delta_omega)


def load_table(path, expect_key: dict | None = None) -> TriadTable:
    with np.load(Path(path), allow_pickle=False) as z:
        key = json.loads(str(z["key"]))
        if expect_key is not None and key != expect_key:
            raise ValueError(f"triad cache key mismatch: {key} != {expect_key}")
        grid = Grid(key["D"], key["omega0"], allow_any_omega0=True)
        idx = z["idx"].astype(np.int64)
        kernel = BroadeningKernel(key["theta"], key["shape"], key["cutoff_multiple"])
        arrays = [grid.flat(idx[:, 0:3]), grid.flat(idx[:, 3:6]), grid.flat(idx[:, 6:9]),
                  z["weight"].copy(), z["kernel_factor"].copy(), z["delta_omega"].copy()]
    for x in arrays:
        x.setflags(write=False)
    return TriadTable(key["D"], key["omega0"], kernel, key["c_K"], *arrays)


def write_table_csv(table: TriadTable, path) -> None:
    grid = Grid(table.D, table.omega0, allow_any_omega0=True)
    with open(path, "w") as fh:
        fh.write("kx,ky,kz,k1x,k1y,k1z,k2x,k2y,k2z,weight,kernel_factor\n")
        for t in range(len(table)):
            idx = [*grid.indices[table.k[t]], *grid.indices[table.k1[t]],
                   *grid.indices[table.k2[t]]]
            fh.write(",".join(str(int(v)) for v in idx))
            fh.write(f",{float(table.weight[t])!r},{float(table.kernel_factor[t])!r}\n")


def cached_enumerate(grid: Grid, kernel: BroadeningKernel, c_K: float,
                     cache_dir) -> TriadTable:
    """enumerate_triples behind a content-keyed file cache."""
    key = cache_key(grid.D, grid.omega0, kernel, c_K)
    path = Path(cache_dir) / f"triads-{cache_digest(key)}.npz"
    if path.exists():
        try:
            return load_table(path, expect_key=key)
        except ValueError:
            pass
    table = enumerate_triples(grid, kernel, c_K)
    path.parent.mkdir(parents=True, exist_ok=True)
    save_table(table, path)
    return table


# -- index functionals -------------------------------------------------------

MU_KINDS = ("forward", "backward", "central")


def mu_phase(grid: Grid, which: str, x: int, y):
    """Phase of the index functional: forward omega(x)-omega(x-y)-omega(y),
    backward omega(y)-omega(y-x)-omega(x), central omega(x+y)-omega(x)-omega(y)."""
    y = np.asarray(y)
    if which == "forward":
        return grid.residual_backward(x, y)
    if which == "backward":
        return grid.residual_forward(x, y)
    if which == "central":
        return grid.residual_central(x, y)
    raise ValueError(f"unknown index functional {which!r}")


def mu_index(grid: Grid, kernel: BroadeningKernel, which: str, A, x: int) -> float:
    """Broadened index functional h^3 sum_{y in A} phi_theta(phase(x, y))."""
    A = np.asarray(sorted(set(int(a) for a in np.atleast_1d(A))) if np.size(A) else [],
                   dtype=np.int64)
    if A.size == 0:
        return 0.0
    return float(grid.cell_volume * np.sum(kernel(mu_phase(grid, which, x, A))))


def mu_full(grid: Grid, kernel: BroadeningKernel, which: str, x: int) -> float:
    """Index functional of the whole torus at x."""
    return float(grid.cell_volume * np.sum(kernel(mu_phase(grid, which, x,
                                                           np.arange(grid.size)))))


def _check_interior(grid: Grid, x: int) -> None:
    if grid.on_edge(x):
        raise ValueError(f"node {grid.indices[x].tolist()} has a zero component")


def phase_bound(coords, which: str = "central") -> float:
    """1/sqrt(prod_j |1 -+ exp(2 pi i x^j)|) at torus coordinates; '+' for forward."""
    xs = np.asarray(coords, dtype=float)
    if which == "forward":
        fac = 2 * np.abs(np.cos(np.pi * xs))
    else:
        fac = 2 * np.abs(np.sin(np.pi * xs))
    return float(1.0 / np.sqrt(np.prod(fac)))


def mu_bound_value(grid: Grid, x: int, which: str = "central") -> float:
    return phase_bound(grid.coords[x], which)


def mu_bound_check(grid: Grid, kernel: BroadeningKernel, x: int) -> dict:
    """Central index of the torus at x against its stationary-phase bound."""
    _check_interior(grid, x)
    mu3 = mu_full(grid, kernel, "central", x)
    bound = mu_bound_value(grid, x, "central")
    return {"x": grid.indices[x].tolist(), "mu3_value": mu3, "bound_value": bound,
            "ratio": mu3 / bound}


def lipschitz_probe(grid: Grid, kernel: BroadeningKernel, which: str,
                    x: int, xp: int) -> float:
    """Difference quotient |mu(x) - mu(x')| / |x - x'| (torus distance)."""
    _check_interior(grid, x)
    _check_interior(grid, xp)
    if x == xp:
        return 0.0
    d = grid.coords[x] - grid.coords[xp]
    d = d - np.round(d)
    dist = float(np.linalg.norm(d))
    return abs(mu_full(grid, kernel, which, x) - mu_full(grid, kernel, which, xp)) / dist
