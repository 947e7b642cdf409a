"""Residual of a fixed classical equilibrium as the broadening width halves.

Prints max|Q[F]| over collisional nodes and D_c[F] for theta in {0.2, 0.1, 0.05},
with the halving factors, for each lattice half-width given.

    python3 scripts/theta_sweep.py --D 6 12 18
"""
import argparse

import numpy as np

from beamwave.equilibrium import features
from beamwave.lattice import Grid
from beamwave.operator import apply_Q, entropy_dissipation
from beamwave.regions import decompose
from beamwave.resonance import BroadeningKernel, enumerate_triples

THETAS = (0.2, 0.1, 0.05)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--D", type=int, nargs="+", default=[6, 12])
    ap.add_argument("--omega0", type=float, default=2.5)
    args = ap.parse_args()
    p = np.array([1.0, 0.05, -0.03, 0.02])
    for D in args.D:
        g = Grid(D, args.omega0)
        F = 1.0 / (features(g, np.arange(g.size)) @ p)
        qs, ds = [], []
        for theta in THETAS:
            t = enumerate_triples(g, BroadeningKernel(theta))
            active = decompose(g, t).label > 0
            qs.append(float(np.abs(apply_Q(g, t, F))[active].max()))
            ds.append(entropy_dissipation(g, t, F))
        print(f"D={D:3d}  |Q|: " + ", ".join(f"{q:.3e}" for q in qs)
              + f"  factors {qs[0] / qs[1]:.3g}, {qs[1] / qs[2]:.3g}"
              + f"  | D_c factors {ds[0] / ds[1]:.3g}, {ds[1] / ds[2]:.3g}")


if __name__ == "__main__":
    main()
