"""The DG solver and the particle scheme on the same transient problem.

γ = 1, a = 1/2, unscaled equation, uniform box.  Both methods are
independent discretisations, so their agreement on M2 and M4 is a check
on each.  The particle side averages a few seeds.

    python3 demos/dg_vs_particles.py
"""

import math

import numpy as np

from inelastic1d.core import Grid, ModelParams, project_initial
from inelastic1d.operators import build_workspace
from inelastic1d.particle import DsmcConfig, run_dsmc, uniform_box
from inelastic1d.timestepping import integrate_transient

SQRT3 = math.sqrt(3.0)


def main(n_seeds=4):
    params = ModelParams(1.0, 0.5, 0.0)
    times = np.linspace(0.0, 5.0, 11)
    grid = Grid(SQRT3, 64)  # particles never leave the initial hull
    field = project_initial(lambda x: (np.abs(x) <= SQRT3) / (2 * SQRT3), grid, 2)
    dg = integrate_transient(field, params, build_workspace(grid, 2, None, params), 5.0, record_times=times[1:])
    runs = [run_dsmc(DsmcConfig(n_particles=100_000, t_end=5.0, seed=s, record_times=times,
                                acceptance_target=0.01), params, uniform_box) for s in range(n_seeds)]
    print("     t      M2 (DG)   M2 (DSMC)    M4 (DG)   M4 (DSMC)")
    for i, t in enumerate(times):
        p2 = np.mean([r.moment(2)[i] for r in runs])
        p4 = np.mean([r.moment(4)[i] for r in runs])
        print(f"{t:6.2f}  {dg[i][2]:9.6f}  {p2:9.6f}  {dg[i][4]:9.6f}  {p4:9.6f}")


if __name__ == "__main__":
    main()
