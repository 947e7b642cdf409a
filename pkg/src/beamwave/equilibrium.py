"""Local equilibria on a collisional region and distance/entropy diagnostics.

The equilibrium on a region is fixed by its energy and momentum: find ``a``
and ``b`` with ``h^3 sum omega F = E`` and ``h^3 sum k F = M`` where
``F = 1/z`` (classical) or ``F = 1/(exp z - 1)`` (quantized) and
``z = a omega + b.k > 0`` on every node of the region.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .lattice import Grid
from .regions import LocalInvariants, RegionDecomposition

KINDS = ("classical", "quantized")
MAX_ITER = 100
N_STARTS = 8


class EquilibriumError(RuntimeError):
    """Newton failed to converge; ``best_residual`` holds the smallest residual seen."""

    def __init__(self, msg, best_residual=np.inf):
        super().__init__(msg)
        self.best_residual = best_residual


class InadmissibleError(EquilibriumError):
    """No admissible (positive) solution, or a degenerate region."""


@dataclass(frozen=True)
class EquilibriumParams:
    a: float
    b: np.ndarray
    region_id: int
    kind: str = "classical"

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([[self.a], self.b])

    def exponent(self, grid: Grid, nodes) -> np.ndarray:
        """a omega + b.k on the given nodes."""
        return self.a * grid.omega[nodes] + grid.coords[nodes] @ self.b

    def values(self, grid: Grid, nodes) -> np.ndarray:
        return equilibrium_profile(self.kind, self.exponent(grid, nodes))

    def field(self, grid: Grid, decomp: RegionDecomposition, base=None) -> np.ndarray:
        """Full-grid field: the equilibrium on this region, ``base`` (or 0) elsewhere."""
        out = np.zeros(grid.size) if base is None else np.array(base, dtype=float)
        nodes = decomp.nodes(self.region_id)
        out[nodes] = self.values(grid, nodes)
        return out


@dataclass
class AdmissibilityReport:
    unique: bool
    jacobian_condition: float
    continuity_ok: bool
    residual: float
    iterations: int
    starts_converged: int
    continuity_probes: list = field(default_factory=list)


def equilibrium_profile(kind: str, z):
    z = np.asarray(z, dtype=float)
    if kind == "classical":
        return 1.0 / z
    if kind == "quantized":
        with np.errstate(over="ignore"):
            return 1.0 / np.expm1(z)
    raise ValueError(f"unknown equilibrium kind {kind!r}")


def _profile_slope(kind: str, z):
    if kind == "classical":
        return -1.0 / z ** 2
    ez = np.exp(-z)
    return -ez / (-np.expm1(-z)) ** 2


def features(grid: Grid, nodes) -> np.ndarray:
    """Rows (omega, k^1, k^2, k^3) per node."""
    return np.column_stack([grid.omega[nodes], grid.coords[nodes]])


def invariants_of_params(grid: Grid, nodes, kind: str, p) -> np.ndarray:
    """(E, M) of the equilibrium with parameter vector p = (a, b)."""
    X = features(grid, nodes)
    return grid.cell_volume * (X.T @ equilibrium_profile(kind, X @ np.asarray(p, float)))


def _newton(X, h3, target, kind, p0, tol):
    p = np.array(p0, dtype=float)
    z = X @ p
    if np.min(z) <= 0:
        raise InadmissibleError("initial point violates positivity")
    R = h3 * (X.T @ equilibrium_profile(kind, z)) - target
    best = np.max(np.abs(R))
    for it in range(1, MAX_ITER + 1):
        if best <= tol:
            return p, best, it - 1
        J = h3 * (X.T * _profile_slope(kind, z)) @ X
        step = np.linalg.solve(J, -R)
        t = 1.0
        for _ in range(60):
            q = p + t * step
            zq = X @ q
            if np.min(zq) > 0:
                Rq = h3 * (X.T @ equilibrium_profile(kind, zq)) - target
                rq = np.max(np.abs(Rq))
                if rq < best or rq <= tol:
                    break
            t *= 0.5
        else:
            raise EquilibriumError("damped step found no admissible decrease", best)
        p, z, R, best = q, zq, Rq, rq
    if best <= tol:
        return p, best, MAX_ITER
    raise EquilibriumError(f"no convergence after {MAX_ITER} iterations", best)


def _starts(X, p0, rng):
    yield p0
    for _ in range(N_STARTS - 1):
        a = p0[0] * np.exp(rng.uniform(-0.7, 0.7))
        b = rng.normal(size=3) * a
        # pull b toward 0 until the start is admissible
        for _ in range(60):
            q = np.concatenate([[a], b])
            if np.min(X @ q) > 0:
                break
            b = 0.5 * b
        else:
            q = np.concatenate([[a], np.zeros(3)])
        yield q


def _solve_vector(grid, nodes, target, kind, rng_seed=0):
    X = features(grid, nodes)
    if np.linalg.matrix_rank(X) < 4:
        raise InadmissibleError("region is degenerate: (omega, k) features are rank deficient")
    h3 = grid.cell_volume
    E = target[0]
    if not E > 0:
        raise InadmissibleError("energy must be positive")
    # 1e-12 (1 + E), tightened to a relative test when E < 1 so tiny
    # invariants are still resolved
    tol = 1e-12 * (E if E < 1.0 else 1.0 + E)
    m = h3 * len(nodes)
    if kind == "classical":
        a0 = m / E
    else:
        # a rough scale: e^{-a omega} with mean omega
        a0 = max(np.log1p(m / E * np.mean(grid.omega[nodes])) / np.mean(grid.omega[nodes]), 1e-3)
    p0 = np.concatenate([[a0], np.zeros(3)])
    rng = np.random.default_rng(rng_seed)
    sols, best = [], np.inf
    last_err = None
    for q in _starts(X, p0, rng):
        try:
            p, res, it = _newton(X, h3, target, kind, q, tol)
            sols.append((p, res, it))
        except EquilibriumError as err:
            best = min(best, err.best_residual)
            last_err = err
    if not sols:
        raise EquilibriumError(f"all starts failed: {last_err}", best)
    p, res, it = sols[0]
    scale = 1.0 + np.max(np.abs(p))
    unique = all(np.max(np.abs(s[0] - p)) <= 1e-8 * scale for s in sols)
    J = h3 * (X.T * _profile_slope(kind, X @ p)) @ X
    return p, res, it, len(sols), unique, J


def solve_for_invariants(grid: Grid, nodes, region_id: int, E: float, M, kind="classical",
                         check_continuity: bool = True):
    """Solve the four-equation system for prescribed (E, M) on ``nodes``."""
    if kind not in KINDS:
        raise ValueError(f"unknown equilibrium kind {kind!r}")
    nodes = np.asarray(nodes)
    target = np.concatenate([[float(E)], np.asarray(M, dtype=float)])
    p, res, it, nconv, unique, J = _solve_vector(grid, nodes, target, kind)
    cond = float(np.linalg.cond(J))
    probes, ok = [], True
    if check_continuity:
        Jinv = np.linalg.inv(J)
        for eps in (1e-6, 1e-5, 1e-4):
            dt = eps * np.max(np.abs(target)) * np.array([1.0, -1.0, 1.0, -1.0])
            try:
                q = _solve_vector(grid, nodes, target + dt, kind)[0]
            except EquilibriumError:
                ok = False
                probes.append({"eps": eps, "moved": None, "predicted": None})
                continue
            moved = float(np.max(np.abs(q - p)))
            predicted = float(np.max(np.abs(Jinv @ dt)))
            probes.append({"eps": eps, "moved": moved, "predicted": predicted})
            # first-order response, with room for curvature and rounding
            ok &= moved <= 10.0 * predicted + 1e-12 * (1 + np.max(np.abs(p)))
    params = EquilibriumParams(float(p[0]), p[1:].copy(), region_id, kind)
    report = AdmissibilityReport(unique, cond, bool(ok), float(res), it, nconv, probes)
    return params, report


def solve_equilibrium(grid: Grid, decomp: RegionDecomposition, region_id: int,
                      inv: LocalInvariants, kind: str = "classical",
                      check_continuity: bool = True):
    """Equilibrium parameters on a region from its local invariants."""
    if inv.region_id != region_id:
        raise ValueError("invariants were computed on a different region")
    return solve_for_invariants(grid, decomp.nodes(region_id), region_id, inv.E, inv.M,
                                kind, check_continuity)


def entropy(grid: Grid, decomp: RegionDecomposition, region_id: int, f) -> float:
    """S = h^3 sum_{region} ln f."""
    fv = np.asarray(f, dtype=float)[decomp.nodes(region_id)]
    if np.min(fv) <= 0:
        raise ValueError("entropy needs f > 0 on the region")
    return grid.cell_volume * float(np.sum(np.log(fv)))


def distance_report(grid: Grid, decomp: RegionDecomposition, region_id: int, f,
                    eq: EquilibriumParams, p: float = 1.0) -> float:
    """Discrete L^p distance between f and the equilibrium on the region."""
    nodes = decomp.nodes(region_id)
    diff = np.abs(np.asarray(f, dtype=float)[nodes] - eq.values(grid, nodes))
    if np.isinf(p):
        return float(np.max(diff))
    if p < 1:
        raise ValueError("p must be at least 1")
    return float((grid.cell_volume * np.sum(diff ** p)) ** (1.0 / p))


def csiszar_kullback_check(grid: Grid, decomp: RegionDecomposition, region_id: int, f,
                           eq: EquilibriumParams, tol: float = 1e-8) -> dict:
    """L1 distance to the classical equilibrium against the root entropy gap."""
    nodes = decomp.nodes(region_id)
    fv = np.asarray(f, dtype=float)
    feq = eq.values(grid, nodes)
    X = features(grid, nodes)
    inv_f = grid.cell_volume * (X.T @ fv[nodes])
    inv_eq = grid.cell_volume * (X.T @ feq)
    if np.max(np.abs(inv_f - inv_eq)) > tol * (1.0 + np.max(np.abs(inv_eq))):
        raise ValueError("f and the equilibrium carry different energy/momentum")
    lhs = distance_report(grid, decomp, region_id, fv, eq, 1.0)
    gap = grid.cell_volume * float(np.sum(np.log(feq) - np.log(fv[nodes])))
    rhs = float(np.sqrt(max(gap, 0.0)))
    if lhs == 0.0 and rhs == 0.0:
        ratio = 0.0
    else:
        ratio = lhs / rhs if rhs > 0 else np.inf
    return {"lhs": lhs, "rhs": rhs, "ratio": ratio, "entropy_gap": gap}


def constrained_perturbation(grid: Grid, nodes, f_ref, size: float, rng,
                             max_tries: int = 50) -> np.ndarray:
    """Random positive values on ``nodes`` with the same (E, M) as ``f_ref`` there.

    Multiplicative noise ``f_ref (1 + size u)`` is corrected by a factor
    ``1 + c.(omega, k)``; the invariants are linear in f so c solves a 4x4 system.
    """
    nodes = np.asarray(nodes)
    X = features(grid, nodes)
    ref = np.asarray(f_ref, dtype=float)
    target = X.T @ ref
    for _ in range(max_tries):
        f = ref * (1.0 + size * rng.uniform(-1.0, 1.0, len(nodes)))
        A = X.T @ (f[:, None] * X)
        c = np.linalg.solve(A, target - X.T @ f)
        g = f * (1.0 + X @ c)
        if np.min(g) > 0:
            return g
        size *= 0.5
    raise RuntimeError("could not build a positive constrained perturbation")
