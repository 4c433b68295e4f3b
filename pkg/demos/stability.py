"""Distance between coupled particle runs started at W1 distance d0.

Both runs share every random number, so the distance measures how the
dynamics spread nearby data apart.  Prints the median over seeds.

    python3 demos/stability.py
"""

import numpy as np

from inelastic1d.core import ModelParams
from inelastic1d.particle import ParticleEnsemble, perturb_ensemble, stability_experiment, uniform_box


def main(n_seeds=20, n=10_000):
    params = ModelParams(1.0, 0.5, 0.0)
    times = np.linspace(0.0, 5.0, 11)
    for d0 in (1e-3, 1e-2):
        curves = []
        for s in range(n_seeds):
            mu = ParticleEnsemble(uniform_box(n, np.random.default_rng(s)))
            series = stability_experiment(mu, perturb_ensemble(mu, d0), params, 5.0, seed=s, record_times=times)
            curves.append([d for _, d in series])
        med = np.median(curves, axis=0)
        print(f"d0={d0:g}: " + " ".join(f"{v:.2e}" for v in med))


if __name__ == "__main__":
    main()
