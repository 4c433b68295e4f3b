"""Energy cooling of the particle system and its envelopes.

Runs the particle scheme for γ = 1, 2 from the uniform box, fits the late
time exponent of M2 and compares the trajectory with the upper envelope
and a fitted lower envelope.

    python3 demos/haff_cooling.py [n_particles]
"""

import sys

import numpy as np

from inelastic1d.analysis import decay_upper_series, fit_lower_constant, haff_fit, lower_envelope
from inelastic1d.core import ModelParams
from inelastic1d.particle import DsmcConfig, run_dsmc, uniform_box


def main(n=100_000):
    n = int(n)
    for gamma in (1.0, 2.0):
        params = ModelParams(gamma, 0.5, 0.0)
        res = run_dsmc(DsmcConfig(n_particles=n, t_end=2000.0, seed=0, acceptance_target=0.1), params, uniform_box)
        t, m2 = res.times(), res.moment(2)
        upper = decay_upper_series(res, 2.0, params)
        fit = fit_lower_constant(res, params)
        lower = lower_envelope(t, 2.0, params, fit["scale"], fit["rate"], fit["K"])
        print(f"gamma={gamma:g}: fitted exponent {haff_fit(res):.4f} (expected {-2 / gamma:g}), "
              f"K={fit['K']:.4f}, max M2/upper {np.max(m2 / upper):.6f}")
        for i in range(0, len(t), 12):
            print(f"   t={t[i]:10.3f}  lower={lower[i]:.4e}  M2={m2[i]:.4e}  upper={upper[i]:.4e}")


if __name__ == "__main__":
    main(*sys.argv[1:])
