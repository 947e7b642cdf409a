"""Partition of the lattice into the frozen set and collisional invariant regions.

Two nodes are connected when they share a broadened triad.  Connected
components of size >= 3 are the invariant regions; nodes in no triad form the
frozen set and carry label 0.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .lattice import Grid
from .resonance import TriadTable


class UnionFind:
    """Disjoint sets with path compression and union by size."""

    def __init__(self, n: int):
        self.parent = list(range(n))
        self.size = [1] * n

    def find(self, x: int) -> int:
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a: int, b: int) -> int:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return ra
        if self.size[ra] < self.size[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        self.size[ra] += self.size[rb]
        return ra


@dataclass(frozen=True, eq=False)
class RegionDecomposition:
    label: np.ndarray
    region_nodes: tuple
    h: float

    @property
    def n_regions(self) -> int:
        return len(self.region_nodes)

    @property
    def frozen_nodes(self) -> np.ndarray:
        return np.flatnonzero(self.label == 0)

    def nodes(self, region_id: int) -> np.ndarray:
        if not 1 <= region_id <= self.n_regions:
            raise KeyError(f"unknown region {region_id}")
        return self.region_nodes[region_id - 1]

    def measure(self, region_id: int) -> float:
        return self.h ** 3 * len(self.nodes(region_id))

    @property
    def region_measure(self) -> np.ndarray:
        return np.array([self.h ** 3 * len(r) for r in self.region_nodes])

    def partition(self) -> set:
        """Regions as a set of frozensets, for order-free comparison."""
        return {frozenset(r.tolist()) for r in self.region_nodes}


def decompose(grid: Grid, table: TriadTable) -> RegionDecomposition:
    if table.D != grid.D or table.omega0 != grid.omega0:
        raise ValueError("triad table was built on a different grid")
    uf = UnionFind(grid.size)
    for a, b, c in zip(table.k.tolist(), table.k1.tolist(), table.k2.tolist()):
        uf.union(a, b)
        uf.union(a, c)
    touched = np.zeros(grid.size, bool)
    touched[table.k] = touched[table.k1] = touched[table.k2] = True
    label = np.zeros(grid.size, dtype=np.int64)
    root_label: dict[int, int] = {}
    members: list[list[int]] = []
    # ascending node scan numbers components by their smallest node
    for u in np.flatnonzero(touched).tolist():
        r = uf.find(u)
        if r not in root_label:
            root_label[r] = len(members) + 1
            members.append([])
        label[u] = root_label[r]
        members[root_label[r] - 1].append(u)
    label.setflags(write=False)
    regions = tuple(np.array(m, dtype=np.int64) for m in members)
    for r in regions:
        r.setflags(write=False)
    return RegionDecomposition(label, regions, grid.h)


def n_collision_hull(grid: Grid, table: TriadTable, x: int, n: int) -> set:
    """Nodes reached from x through at most n rounds of shared-triad expansion."""
    if n < 1:
        raise ValueError("n must be a positive integer")
    if not table.triples_of(x):
        raise ValueError("node lies in the no-collision set; its connection set is empty")
    trip = np.stack([table.k, table.k1, table.k2], axis=1)
    frontier = {x}
    hull: set = set()
    for _ in range(n):
        new = set()
        for u in frontier:
            for tid, _slot in table.triples_of(u):
                new.update(trip[tid].tolist())
        new -= hull
        hull |= new
        frontier = new
        if not frontier:
            break
    return hull


@dataclass(frozen=True)
class LocalInvariants:
    region_id: int
    E: float
    M: np.ndarray


def local_invariants(grid: Grid, decomp: RegionDecomposition, region_id: int,
                     f) -> LocalInvariants:
    nodes = decomp.nodes(region_id)
    fv = np.asarray(f, dtype=float)[nodes]
    E = grid.cell_volume * float(np.dot(fv, grid.omega[nodes]))
    M = grid.cell_volume * (fv @ grid.coords[nodes])
    return LocalInvariants(region_id, E, M)


def write_labels_csv(grid: Grid, decomp: RegionDecomposition, path) -> None:
    with open(path, "w") as fh:
        fh.write("ix,iy,iz,kx,ky,kz,omega,label\n")
        for u in range(grid.size):
            ix, iy, iz = grid.indices[u].tolist()
            kx, ky, kz = grid.coords[u].tolist()
            fh.write(f"{ix},{iy},{iz},{kx!r},{ky!r},{kz!r},"
                     f"{float(grid.omega[u])!r},{int(decomp.label[u])}\n")


def summary(grid: Grid, decomp: RegionDecomposition) -> dict:
    sizes = [len(r) for r in decomp.region_nodes]
    return {
        "n_nodes": grid.size,
        "frozen_size": int((decomp.label == 0).sum()),
        "origin_label": int(decomp.label[grid.origin]),
        "region_count": decomp.n_regions,
        "region_sizes": sizes,
        "region_measures": [float(m) for m in decomp.region_measure],
    }


def write_summary_json(grid: Grid, decomp: RegionDecomposition, path) -> None:
    with open(path, "w") as fh:
        json.dump(summary(grid, decomp), fh, indent=2, sort_keys=True)
        fh.write("\n")
