"""Solve the moment map equation for the z-rotation on the Hopf bundle and
compare the lattice solution with the height function."""

import numpy as np

from gauge_killing.catalog import get_example
from gauge_killing.charts import sphere_embedding
from gauge_killing.moment import MomentMapProblem, solve


def main():
    hopf = get_example("hopf")
    X = hopf.field("rot-z")
    for h in (0.08, 0.04, 0.02):
        sol = solve(MomentMapProblem.for_example(hopf, X, h), kernel=True)
        diffs = []
        for c, lat in sol.problem.lattices.items():
            vals = sol.values[c][tuple(lat.multi.T)]
            diffs.append(vals + 0.5 * sphere_embedding(lat.nodes, c)[:, 2:3])
        diffs = np.concatenate(diffs)
        err = np.max(np.abs(diffs - diffs.mean(axis=0)))
        print(f"h={h:.2f}  continuum residual {sol.continuum_residual:.3e}  height error {err:.3e}  kernel dim {sol.kernel_dim}  solvable {sol.solvable}")


if __name__ == "__main__":
    main()
