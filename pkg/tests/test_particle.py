import math

import numpy as np
import pytest

from inelastic1d.analysis import haff_fit, w1_distance
from inelastic1d.core import ModelParams
from inelastic1d.errors import InvalidArgumentError
from inelastic1d.particle import (
    DsmcConfig,
    ParticleEnsemble,
    dsmc_step,
    ensemble_moments,
    gaussian,
    perturb_ensemble,
    pushforward_scale,
    read_snapshots,
    rescaled_dsmc,
    run_dsmc,
    stability_constant,
    stability_experiment,
    uniform_box,
    write_snapshot,
)


def mean_abs_cubed_difference(x):
    """(1/n²) Σ_{i,j} |x_i - x_j|^3 via prefix sums over the sorted sample."""
    x = np.sort(np.asarray(x, dtype=float))
    n = x.size
    s1 = np.concatenate([[0.0], np.cumsum(x)[:-1]])
    s2 = np.concatenate([[0.0], np.cumsum(x**2)[:-1]])
    s3 = np.concatenate([[0.0], np.cumsum(x**3)[:-1]])
    j = np.arange(n)
    tot = np.sum(j * x**3 - 3 * x**2 * s1 + 3 * x * s2 - s3)
    return 2.0 * tot / n**2


class TestEnsemble:
    def test_validation(self):
        with pytest.raises(InvalidArgumentError):
            ParticleEnsemble([1.0])
        with pytest.raises(InvalidArgumentError):
            ParticleEnsemble([1.0, np.nan])

    def test_moments(self):
        e = ParticleEnsemble([1.0, -1.0, 2.0, -2.0])
        rec = ensemble_moments(e, (0, 1, 2))
        assert rec.moments == {0.0: 1.0, 1.0: 1.5, 2.0: 2.5}
        assert rec.momentum == 0.0

    def test_pushforward(self):
        e = ParticleEnsemble([1.0, -1.0])
        assert pushforward_scale(e, 1.0).positions.tolist() == [1.0, -1.0]
        d = pushforward_scale(e, 2.0)
        assert d.positions.tolist() == [2.0, -2.0]
        assert d.moment(2) == 4 * e.moment(2)

    def test_samplers_centred(self, rng):
        x = uniform_box(1000, rng)
        assert abs(x.mean()) < 1e-15
        assert np.mean(x**2) == pytest.approx(1.0, abs=1e-4)
        g = gaussian(1000, rng)
        assert abs(g.mean()) < 1e-15


class TestStep:
    def test_sticky_pair(self):
        e = ParticleEnsemble([1.0, -1.0])
        # dt large enough to force acceptance: rate |x-y|/n = 1, P(pair) = 1
        out = dsmc_step(e, ModelParams(1.0, 0.5), 1.0, np.random.default_rng(0))
        assert out.positions.tolist() == [0.0, 0.0]

    @pytest.mark.parametrize("a", [0.5, 0.3])
    def test_pair_identities(self, rng, a):
        x0 = uniform_box(1000, rng)
        e = ParticleEnsemble(x0)
        p = ModelParams(1.0, a)
        out = dsmc_step(e, p, 0.5, rng)
        x1 = out.positions
        moved = x1 != x0
        assert np.any(moved)
        if a == 0.5:
            assert x1.sum() == x0.sum() or abs(x1.sum() - x0.sum()) < 1e-15 * 1000
        else:
            assert abs(x1.sum() - x0.sum()) < 1e-12 * 1000
        # energy drop equals the per-event decrement summed over events
        dE = np.sum(x1**2) - np.sum(x0**2)
        assert dE < 0

    def test_event_decrement_formula(self):
        a, b = 0.3, 0.7
        x, y = 1.7, -0.4
        new = (a * x + b * y) ** 2 + (b * x + a * y) ** 2
        assert new - x * x - y * y == pytest.approx(-2 * a * b * (x - y) ** 2, rel=1e-14)

    def test_odd_n_idles_rotating_particle(self, rng):
        e = ParticleEnsemble(uniform_box(7, rng), generation=3)
        out = dsmc_step(e, ModelParams(0.0, 0.5), 0.5, rng)
        assert out.positions[3] == e.positions[3]
        assert out.generation == 4

    def test_initial_energy_slope(self):
        # d M2 / dt at t = 0 equals -ab E|x - y|^3 (γ = 1)
        n = 100_000
        rng = np.random.default_rng(7)
        e = ParticleEnsemble(uniform_box(n, rng))
        p = ModelParams(1.0, 0.5)
        dt = 0.2 * n / (n // 2 * 2 / (n - 1)) / n / e.spread()  # max acceptance 0.2
        m2 = e.moment(2)
        slopes = np.array([(dsmc_step(e, p, dt, rng).moment(2) - m2) / dt for _ in range(40)])
        oracle = -0.25 * mean_abs_cubed_difference(e.positions)
        se = slopes.std(ddof=1) / math.sqrt(slopes.size)
        assert abs(slopes.mean() - oracle) < 3 * se
        assert se < 0.02 * abs(oracle)


class TestRun:
    def test_deterministic(self):
        cfg = DsmcConfig(n_particles=500, t_end=5.0, seed=11, n_records=10)
        p = ModelParams(1.0, 0.5)
        r1 = run_dsmc(cfg, p, uniform_box)
        r2 = run_dsmc(cfg, p, uniform_box)
        assert r1.moment(2).tobytes() == r2.moment(2).tobytes()
        assert r1.final.positions.tobytes() == r2.final.positions.tobytes()

    def test_conservation_and_support(self):
        spreads = []
        p = ModelParams(1.0, 0.5)
        cfg = DsmcConfig(n_particles=2000, t_end=20.0, seed=1, record_times=np.linspace(0, 20, 41))
        res = run_dsmc(cfg, p, uniform_box, observer=lambda t, e: spreads.append(e.spread()))
        assert np.all(np.diff(spreads) <= 0)
        x0 = uniform_box(2000, np.random.default_rng(1))
        assert abs(res.final.positions.sum() - x0.sum()) < 1e-12
        assert np.all(np.diff(res.moment(2)) <= 0)

    def test_collapse_flag(self):
        cfg = DsmcConfig(n_particles=2, t_end=100.0, seed=0, acceptance_target=1.0)
        res = run_dsmc(cfg, ModelParams(1.0, 0.5), [1.0, -1.0])
        assert res.collapsed
        assert res.final.spread() == 0.0

    def test_haff_gamma1(self):
        cfg = DsmcConfig(n_particles=20_000, t_end=500.0, seed=3, acceptance_target=0.1)
        res = run_dsmc(cfg, ModelParams(1.0, 0.5), uniform_box)
        assert haff_fit(res) == pytest.approx(-2.0, abs=0.1)

    def test_snapshots(self, tmp_path):
        path = tmp_path / "snap.bin"
        cfg = DsmcConfig(n_particles=64, t_end=1.0, seed=0, record_times=[0.5, 1.0], snapshot_path=str(path))
        res = run_dsmc(cfg, ModelParams(1.0, 0.5), uniform_box)
        snaps = read_snapshots(path)
        assert len(snaps) == 3
        np.testing.assert_array_equal(snaps[-1], res.final.positions)
        e = ParticleEnsemble([0.25, -3.5, 1e300])
        write_snapshot(path, e)
        np.testing.assert_array_equal(read_snapshots(path)[0], e.positions)
        raw = path.read_bytes()
        assert int.from_bytes(raw[:8], "little") == 3 and len(raw) == 8 + 24


class TestRescaled:
    def test_s_zero_matches_initial(self):
        cfg = DsmcConfig(n_particles=1000, seed=2)
        p = ModelParams(1.0, 0.5, 1.0)
        res = rescaled_dsmc(cfg, p, uniform_box, s_times=[0.0, 0.5])
        x0 = uniform_box(1000, np.random.default_rng(2))
        assert res[0].time == 0.0 and res[0].rescaled
        assert res[0].moments[2] == pytest.approx(np.mean(x0**2), rel=1e-14)

    def test_plateau_positive(self):
        cfg = DsmcConfig(n_particles=5000, seed=4, acceptance_target=0.1)
        p = ModelParams(1.0, 0.5, 1.0)
        res = rescaled_dsmc(cfg, p, uniform_box, s_times=np.linspace(0, 6, 25))
        m2 = res.moment(2)
        late = m2[-8:]
        assert late.min() > 0.5 * m2[12:].min() > 0
        assert late.std() < 0.1 * late.mean()


class TestStability:
    def test_identical_inputs(self, rng):
        mu = ParticleEnsemble(uniform_box(500, rng))
        out = stability_experiment(mu, mu, ModelParams(1.0, 0.5), 1.0, seed=0)
        assert all(d == 0.0 for _, d in out)
        assert stability_constant(out) == 0.0

    def test_perturbations(self, rng):
        mu = ParticleEnsemble(uniform_box(400, rng))
        for kind in ("dilation", "shift"):
            nu = perturb_ensemble(mu, 1e-3, kind)
            assert w1_distance(mu, nu) == pytest.approx(1e-3, rel=1e-9)
        assert abs(perturb_ensemble(mu, 1e-2).mean()) < 1e-15

    def test_shift_continuity(self):
        rng = np.random.default_rng(9)
        mu = ParticleEnsemble(uniform_box(10_000, rng))
        nu = perturb_ensemble(mu, 1e-3, "shift")
        out = stability_experiment(mu, nu, ModelParams(1.0, 0.5), 1.0, seed=9,
                                   record_times=np.linspace(0, 1, 11))
        assert max(d for _, d in out) <= 0.1
