"""Explicit time integration of df/dt = Q[f] with per-region diagnostics."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .lattice import Grid
from .operator import (ConservativeProjection, CutoffSpec, apply_Q, apply_Q_cutoff,
                       entropy_dissipation_nodes)
from .regions import RegionDecomposition
from .resonance import TriadTable

MAX_HALVINGS = 30
LN_FLOOR = 1e-300


class StepFailure(RuntimeError):
    def __init__(self, msg, t=None):
        super().__init__(msg if t is None else f"{msg} (t={t!r})")
        self.t = t
        self.trajectory = None


@dataclass(frozen=True)
class SimConfig:
    dt: float | None = None
    t_end: float = 50.0
    integrator: str = "rk4"
    positivity_mode: str = "halve_step"
    snapshot_every: int = 10
    cutoff: CutoffSpec | None = None
    conservation_rel: float = 1e-6
    entropy_backstep: float = 1e-10
    energy_projection: bool = False
    dt_safety: float = 0.5
    max_snapshots: int = 10_000

    def __post_init__(self):
        if self.dt is not None and not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.t_end >= 0:
            raise ValueError("t_end must be nonnegative")
        if self.integrator not in ("rk4", "euler"):
            raise ValueError(f"unknown integrator {self.integrator!r}")
        if self.positivity_mode not in ("halve_step", "reject"):
            raise ValueError(f"unknown positivity mode {self.positivity_mode!r}")
        if self.snapshot_every < 1:
            raise ValueError("snapshot_every must be at least 1")


def auto_dt(grid: Grid, table: TriadTable, f, safety: float = 0.5) -> float:
    """Step from a bound on the linearized collision rate at the largest value of f."""
    if len(table) == 0:
        return 1.0
    w = 2.0 * table.combined_weight(grid.h)
    rate = np.bincount(table.k, weights=w, minlength=grid.size)
    rate += np.bincount(table.k1, weights=w, minlength=grid.size)
    rate += np.bincount(table.k2, weights=w, minlength=grid.size)
    fmax = float(np.max(np.abs(f))) or 1.0
    return safety / (2.0 * fmax * float(np.max(rate)))


def make_rhs(grid: Grid, table: TriadTable, cfg: SimConfig, decomp=None):
    proj = None
    if cfg.energy_projection:
        if decomp is None:
            raise ValueError("energy projection needs the region decomposition")
        proj = ConservativeProjection(grid, decomp.region_nodes)
    if cfg.cutoff is not None and cfg.cutoff.active:
        cut = cfg.cutoff

        def rhs(f):
            q = apply_Q_cutoff(grid, table, f, cut)
            return proj(q) if proj is not None else q
        return rhs
    return lambda f: apply_Q(grid, table, f, proj)


def _advance(rhs, f, dt, integrator):
    if integrator == "euler":
        return f + dt * rhs(f)
    k1 = rhs(f)
    k2 = rhs(f + 0.5 * dt * k1)
    k3 = rhs(f + 0.5 * dt * k2)
    k4 = rhs(f + dt * k3)
    return f + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def step(grid: Grid, table: TriadTable, f, cfg: SimConfig, dt: float | None = None,
         rhs=None, t=None):
    """One explicit step; halves the step on a negative value (halve_step mode)."""
    f = np.asarray(f, dtype=float)
    if np.min(f) < 0:
        raise ValueError("step needs f >= 0")
    if rhs is None:
        rhs = make_rhs(grid, table, cfg)
    dt = cfg.dt if dt is None else dt
    if dt is None:
        dt = auto_dt(grid, table, f, cfg.dt_safety)
    for _ in range(MAX_HALVINGS + 1):
        out = _advance(rhs, f, dt, cfg.integrator)
        if np.min(out) >= 0:
            return out, dt
        if cfg.positivity_mode == "reject":
            raise StepFailure("step produced a negative value", t)
        dt *= 0.5
    raise StepFailure(f"positivity lost after {MAX_HALVINGS} halvings", t)


@dataclass
class Trajectory:
    """Snapshots plus per-step region diagnostics (row 0 is the initial state)."""

    times: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)
    step_times: list = field(default_factory=list)
    dt_used: list = field(default_factory=list)
    energy: list = field(default_factory=list)
    momentum: list = field(default_factory=list)
    entropy: list = field(default_factory=list)
    dissipation: list = field(default_factory=list)
    region_min: list = field(default_factory=list)
    region_max: list = field(default_factory=list)
    min_f: list = field(default_factory=list)
    max_f: list = field(default_factory=list)

    def arrays(self) -> dict:
        keys = ("step_times", "dt_used", "energy", "momentum", "entropy", "dissipation",
                "region_min", "region_max", "min_f", "max_f")
        return {k: np.asarray(getattr(self, k)) for k in keys}


class RegionDiagnostics:
    """Per-region E, M, S, D and extrema of a field."""

    def __init__(self, grid: Grid, table: TriadTable, decomp: RegionDecomposition):
        self.grid, self.table, self.decomp = grid, table, decomp
        self.R = decomp.n_regions
        self.label = decomp.label
        self.tri_label = decomp.label[table.k] if len(table) else np.zeros(0, np.int64)

    def _sum(self, x):
        return np.bincount(self.label, weights=x, minlength=self.R + 1)[1:]

    def __call__(self, f) -> dict:
        g = self.grid
        h3 = g.cell_volume
        E = h3 * self._sum(f * g.omega)
        M = h3 * np.stack([self._sum(f * g.coords[:, j]) for j in range(3)], axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            S = h3 * self._sum(np.log(np.maximum(f, LN_FLOOR)))
            bad = self._sum((f <= 0).astype(float)) > 0
            S = np.where(bad, np.nan, S)
            dens = entropy_dissipation_nodes(g, self.table, f)
        D = np.bincount(self.tri_label, weights=dens, minlength=self.R + 1)[1:]
        rmin = np.array([f[n].min() for n in self.decomp.region_nodes])
        rmax = np.array([f[n].max() for n in self.decomp.region_nodes])
        return {"E": E, "M": M, "S": S, "D": D, "rmin": rmin, "rmax": rmax}


def simulate(grid: Grid, table: TriadTable, decomp: RegionDecomposition, f0,
             cfg: SimConfig) -> Trajectory:
    f = np.array(f0, dtype=float)
    if np.min(f) < 0:
        raise ValueError("initial field must be nonnegative")
    rhs = make_rhs(grid, table, cfg, decomp)
    diag = RegionDiagnostics(grid, table, decomp)
    dt = cfg.dt if cfg.dt is not None else auto_dt(grid, table, f, cfg.dt_safety)
    traj = Trajectory()

    def record(t, f, dt_used):
        d = diag(f)
        traj.step_times.append(t)
        traj.dt_used.append(dt_used)
        traj.energy.append(d["E"])
        traj.momentum.append(d["M"])
        traj.entropy.append(d["S"])
        traj.dissipation.append(d["D"])
        traj.region_min.append(d["rmin"])
        traj.region_max.append(d["rmax"])
        traj.min_f.append(float(f.min()))
        traj.max_f.append(float(f.max()))

    def snap(t, f):
        if len(traj.snapshots) < cfg.max_snapshots:
            traj.times.append(t)
            traj.snapshots.append(f.copy())

    t, n = 0.0, 0
    record(t, f, 0.0)
    snap(t, f)
    while t < cfg.t_end:
        h = min(dt, cfg.t_end - t)
        # land exactly on t_end when the remainder is a rounding sliver
        if cfg.t_end - (t + h) < 1e-12 * max(1.0, cfg.t_end):
            h = cfg.t_end - t
        try:
            f, used = step(grid, table, f, cfg, h, rhs=rhs, t=t)
        except StepFailure as err:
            err.trajectory = traj
            raise
        t = cfg.t_end if used == cfg.t_end - t else t + used
        n += 1
        record(t, f, used)
        if n % cfg.snapshot_every == 0 or t >= cfg.t_end:
            snap(t, f)
    return traj


def lower_bound_report(traj: Trajectory, f0_min: float, decomp=None) -> dict:
    """Fit f_* with min f(t) >= f_* / B(t), B the running sup-norm, per region."""
    if not f0_min > 0:
        raise ValueError("initial data must be bounded below by a positive constant")
    rmin = np.asarray(traj.region_min)
    rmax = np.asarray(traj.region_max)
    if rmin.size and np.min(rmin) <= 0:
        raise ValueError("minimum of f reached 0 on a region")
    running_sup = np.maximum.accumulate(rmax, axis=0)
    products = rmin * running_sup
    f_star = products.min(axis=0) if products.size else np.zeros(0)
    report = {"f_star": f_star.tolist(), "positive": bool(np.all(f_star > 0)),
              "floor": rmin.min(axis=0).tolist(),
              "sup_final": running_sup[-1].tolist() if running_sup.size else []}
    if decomp is not None and traj.snapshots:
        frozen = decomp.label == 0
        report["frozen_floor"] = float(min(s[frozen].min() for s in traj.snapshots))
    return report


def entropy_rate_check(grid: Grid, table: TriadTable, decomp: RegionDecomposition, f,
                       dt: float, cfg: SimConfig) -> dict:
    """Compare (S(t+dt) - S(t))/dt with D_c at the midpoint state, per region."""
    rhs = make_rhs(grid, table, cfg, decomp)
    diag = RegionDiagnostics(grid, table, decomp)
    f = np.asarray(f, dtype=float)
    f_end, _ = step(grid, table, f, cfg, dt, rhs=rhs)
    f_mid, _ = step(grid, table, f, cfg, 0.5 * dt, rhs=rhs)
    dS = (diag(f_end)["S"] - diag(f)["S"]) / dt
    Dmid = diag(f_mid)["D"]
    rel = np.abs(dS - Dmid) / np.maximum(np.abs(Dmid), 1e-300)
    return {"dS_dt": dS, "D_mid": Dmid, "rel_err": rel}


# -- output ------------------------------------------------------------------

def write_snapshot_csv(grid: Grid, f, path) -> None:
    with open(path, "w") as fh:
        fh.write("ix,iy,iz,f\n")
        for (ix, iy, iz), v in zip(grid.indices.tolist(), np.asarray(f, float).tolist()):
            fh.write(f"{ix},{iy},{iz},{v!r}\n")


def read_snapshot_csv(grid: Grid, path) -> np.ndarray:
    with open(path) as fh:
        header = fh.readline().strip()
        if header != "ix,iy,iz,f":
            raise ValueError(f"bad snapshot header {header!r}")
        f = np.full(grid.size, np.nan)
        for lineno, line in enumerate(fh, start=2):
            parts = line.strip().split(",")
            if len(parts) != 4:
                raise ValueError(f"line {lineno}: expected 4 columns")
            idx = [int(p) for p in parts[:3]]
            if any(abs(i) > grid.D for i in idx):
                raise ValueError(f"line {lineno}: index outside the grid")
            f[grid.flat(idx)] = float(parts[3])
    if np.isnan(f).any() or not np.isfinite(f).all():
        raise ValueError("snapshot does not cover every node with a finite value")
    return f


def diagnostics_records(traj: Trajectory):
    for i, t in enumerate(traj.step_times):
        regions = {}
        for r in range(len(traj.energy[i])):
            M = traj.momentum[i][r]
            S = traj.entropy[i][r]
            regions[str(r + 1)] = {"E": float(traj.energy[i][r]), "Mx": float(M[0]),
                                   "My": float(M[1]), "Mz": float(M[2]),
                                   "S": None if math.isnan(S) else float(S),
                                   "D": float(traj.dissipation[i][r])}
        yield {"t": float(t), "regions": regions, "min_f": traj.min_f[i],
               "max_f": traj.max_f[i], "dt_used": float(traj.dt_used[i])}


def write_diagnostics_jsonl(traj: Trajectory, path) -> None:
    with open(path, "w") as fh:
        for rec in diagnostics_records(traj):
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
