"""Command-line entry points: decompose, simulate, equilibrium, indices."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import regions
from .config import ConfigError, RunConfig, canonical_json, load_config, make_initial
from .dynamics import (StepFailure, simulate, write_diagnostics_jsonl,
                       write_snapshot_csv)
from .equilibrium import (EquilibriumError, distance_report, solve_equilibrium,
                          solve_for_invariants)
from .lattice import Grid
from .resonance import cached_enumerate, enumerate_triples, mu_bound_value, mu_full


def _dump(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _setup(cfg: RunConfig, out: Path):
    grid = cfg.grid()
    kernel = cfg.kernel()
    if cfg.cache_dir:
        table = cached_enumerate(grid, kernel, cfg.c_K, cfg.cache_dir)
    else:
        table = enumerate_triples(grid, kernel, cfg.c_K)
    decomp = regions.decompose(grid, table)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(canonical_json(cfg))
    return grid, table, decomp


def cmd_decompose(cfg: RunConfig, out: Path) -> int:
    grid, table, decomp = _setup(cfg, out)
    regions.write_labels_csv(grid, decomp, out / "regions.csv")
    summary = regions.summary(grid, decomp)
    summary["n_triads"] = len(table)
    _dump(summary, out / "summary.json")
    return 0


def _equilibrium_record(params, report, inv_E, inv_M):
    return {"region_id": params.region_id, "kind": params.kind, "a": params.a,
            "b": params.b.tolist(), "E": float(inv_E), "M": [float(m) for m in inv_M],
            "residual": report.residual, "unique": report.unique,
            "jacobian_condition": report.jacobian_condition,
            "continuity_ok": report.continuity_ok}


def cmd_simulate(cfg: RunConfig, out: Path) -> int:
    grid = cfg.grid()
    f0 = make_initial(grid, cfg.init)
    grid, table, decomp = _setup(cfg, out)
    sim = cfg.sim_config()
    code = 0
    try:
        traj = simulate(grid, table, decomp, f0, sim)
    except StepFailure as err:
        print(f"simulate: {err}", file=sys.stderr)
        traj, code = err.trajectory, 3
    snap_dir = out / "snapshots"
    snap_dir.mkdir(exist_ok=True)
    for i, f in enumerate(traj.snapshots):
        write_snapshot_csv(grid, f, snap_dir / f"snapshot_{i:05d}.csv")
    write_diagnostics_jsonl(traj, out / "diagnostics.jsonl")
    final = traj.snapshots[-1]
    rows = []
    for r in range(1, decomp.n_regions + 1):
        inv = regions.local_invariants(grid, decomp, r, f0)
        try:
            params, report = solve_equilibrium(grid, decomp, r, inv, "classical",
                                               check_continuity=False)
        except EquilibriumError as err:
            rows.append({"region_id": r, "error": str(err)})
            continue
        rec = _equilibrium_record(params, report, inv.E, inv.M)
        l1_0 = grid.cell_volume * float(np.sum(f0[decomp.nodes(r)]))
        rec["l1_distance_final"] = distance_report(grid, decomp, r, final, params, 1.0)
        rec["l1_initial_mass"] = l1_0
        rec["relative_distance_final"] = rec["l1_distance_final"] / l1_0
        rows.append(rec)
    _dump({"t_final": traj.times[-1], "regions": rows}, out / "equilibrium_comparison.json")
    return code


def cmd_equilibrium(cfg: RunConfig, out: Path) -> int:
    grid = cfg.grid()
    explicit = cfg.equilibrium.invariants
    f = None if explicit else make_initial(grid, cfg.init)
    grid, table, decomp = _setup(cfg, out)
    if explicit:
        targets = [(int(d["region_id"]), float(d["E"]), np.asarray(d["M"], float))
                   for d in explicit]
    else:
        targets = []
        for r in range(1, decomp.n_regions + 1):
            inv = regions.local_invariants(grid, decomp, r, f)
            targets.append((r, inv.E, inv.M))
    rows = []
    for r, E, M in targets:
        for kind in cfg.equilibrium.kinds:
            try:
                params, report = solve_for_invariants(grid, decomp.nodes(r), r, E, M, kind)
                rows.append(_equilibrium_record(params, report, E, M))
            except (EquilibriumError, KeyError) as err:
                rows.append({"region_id": r, "kind": kind, "admissible": False,
                             "error": str(err)})
    _dump({"regions": rows}, out / "equilibrium.json")
    return 0


def cmd_indices(cfg: RunConfig, out: Path) -> int:
    grid, table, decomp = _setup(cfg, out)
    kernel = cfg.kernel()
    rng = np.random.default_rng(cfg.indices.seed)
    interior = np.flatnonzero(~grid.on_edge(np.arange(grid.size)))
    picks = np.sort(rng.choice(interior, size=min(cfg.indices.n_points, interior.size),
                               replace=False))
    rows = []
    for x in picks.tolist():
        row = {"x": grid.indices[x].tolist(), "label": int(decomp.label[x])}
        for which in ("forward", "backward", "central"):
            row[f"mu_{which}"] = mu_full(grid, kernel, which, x)
        row["bound_central"] = mu_bound_value(grid, x, "central")
        row["ratio_central"] = row["mu_central"] / row["bound_central"]
        rows.append(row)
    _dump({"points": rows, "max_ratio_central": max(r["ratio_central"] for r in rows)},
          out / "indices.json")
    return 0


COMMANDS = {"decompose": cmd_decompose, "simulate": cmd_simulate,
            "equilibrium": cmd_equilibrium, "indices": cmd_indices}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="beamwave", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, default=None, help="JSON run configuration")
        p.add_argument("--output", type=Path, default=None, help="output directory")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config field (dotted keys, JSON values)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.set)
        if args.output is not None:
            cfg = load_config(args.config, [*args.set, f"output_dir={json.dumps(str(args.output))}"])
        cfg.validate()
        return COMMANDS[args.command](cfg, Path(cfg.output_dir))
    except (ConfigError, OSError) as err:
        print(f"beamwave {args.command}: {err}", file=sys.stderr)
        return 2
    except ValueError as err:
        print(f"beamwave {args.command}: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
