"""Central index functional against its stationary-phase bound, under lattice refinement.

Samples interior torus points once, snaps them to the nearest node at each
half-width, and prints the largest value/bound ratio.

    python3 scripts/index_sweep.py --D 6 12 24
"""
import argparse

import numpy as np

from beamwave.lattice import Grid
from beamwave.resonance import BroadeningKernel, mu_bound_value, mu_full


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--D", type=int, nargs="+", default=[6, 12, 24])
    ap.add_argument("--theta", type=float, default=0.1)
    ap.add_argument("--points", type=int, default=20)
    ap.add_argument("--seed", type=int, default=12)
    args = ap.parse_args()
    kernel = BroadeningKernel(args.theta)
    pts = np.random.default_rng(args.seed).uniform(-0.45, 0.45, size=(args.points, 3))
    pts = np.where(np.abs(pts) < 0.05, 0.05 * np.sign(pts + 1e-300), pts)
    for D in args.D:
        g = Grid(D)
        ratios = []
        for x in pts:
            idx = np.rint(x * g.n).astype(int)
            idx = np.where(idx == 0, np.sign(x).astype(int), idx)
            node = g.flat(tuple(idx))
            ratios.append(mu_full(g, kernel, "central", node) / mu_bound_value(g, node))
        print(f"D={D:3d}  max ratio {max(ratios):.4g}  median {np.median(ratios):.4g}")


if __name__ == "__main__":
    main()
