"""Stochastic particle oracle for the unscaled equation.

An ensemble of ``n`` equal-weight particles evolves by random pairwise
interactions ``(x, y) -> (a x + b y, b x + a y)``.  Each unordered pair
interacts at rate ``|x - y|^γ / n``, which makes the empirical measure follow
the weak form of the equation in the large-``n`` limit.

Time is advanced in small steps.  In every step the particles are split into
disjoint random pairs and each pair is accepted with the probability that
its rate assigns to the step, divided by the chance that this pair was
drawn.  The step is set from a majorant ``Λ = (max x - min x)^γ`` of the
pair rates so that the largest acceptance probability stays at a small
target value.
"""

from __future__ import annotations

import logging
import math
import struct
from dataclasses import dataclass, field as dc_field
from pathlib import Path
from typing import Callable, Iterator, Sequence

import numpy as np

from .analysis import scaling_factor, unrescale_time, w1_distance, fit_log_lipschitz_constant
from .core import ModelParams, MomentRecord
from .errors import InvalidArgumentError

__all__ = [
    "ParticleEnsemble",
    "DsmcConfig",
    "DsmcResult",
    "dsmc_step",
    "run_dsmc",
    "rescaled_dsmc",
    "pushforward_scale",
    "stability_experiment",
    "perturb_ensemble",
    "uniform_box",
    "gaussian",
    "write_snapshot",
    "read_snapshots",
    "ensemble_moments",
    "default_record_times",
]

log = logging.getLogger(__name__)

DEFAULT_ORDERS = (0.0, 1.0, 2.0, 3.0, 4.0)


class ParticleEnsemble:
    """Equal-weight empirical measure ``(1/n) Σ δ_{x_i}``.

    Positions are stored as a read-only float array; ``generation`` counts
    the pairing rounds the ensemble has been through.
    """

    __slots__ = ("positions", "generation")

    def __init__(self, positions, generation: int = 0):
        pos = np.array(positions, dtype=float).ravel()
        if pos.size < 2:
            raise InvalidArgumentError(f"an ensemble needs at least 2 particles, got {pos.size}")
        if not np.all(np.isfinite(pos)):
            raise InvalidArgumentError("positions must be finite")
        pos.setflags(write=False)
        self.positions = pos
        self.generation = int(generation)

    def __len__(self) -> int:
        return self.positions.size

    def __repr__(self) -> str:
        return f"ParticleEnsemble(n={len(self)}, generation={self.generation})"

    @property
    def n(self) -> int:
        return self.positions.size

    def mean(self) -> float:
        return float(np.mean(self.positions))

    def spread(self) -> float:
        return float(self.positions.max() - self.positions.min())

    def moment(self, p: float) -> float:
        """``(1/n) Σ |x_i|^p``."""
        if p == 0:
            return 1.0
        return float(np.mean(np.abs(self.positions) ** p))

    def centered(self) -> "ParticleEnsemble":
        return ParticleEnsemble(self.positions - self.positions.mean(), self.generation)

    def with_positions(self, positions, generation=None) -> "ParticleEnsemble":
        gen = self.generation if generation is None else generation
        return ParticleEnsemble(positions, gen)


def ensemble_moments(ens: ParticleEnsemble, orders=DEFAULT_ORDERS, time=0.0, rescaled=False) -> MomentRecord:
    x = ens.positions
    ax = np.abs(x)
    mom = {float(p): (1.0 if p == 0 else float(np.mean(ax**p))) for p in orders}
    return MomentRecord(time=time, moments=mom, rescaled=rescaled, momentum=float(np.mean(x)))


def pushforward_scale(ens: ParticleEnsemble, factor: float) -> ParticleEnsemble:
    """Image of the ensemble under ``x -> factor * x``."""
    if not factor > 0:
        raise InvalidArgumentError(f"factor must be positive, got {factor}")
    return ens.with_positions(ens.positions * factor)


# ---------------------------------------------------------------------------
# initial data

def _stratified(n, rng):
    if rng is None:
        return (np.arange(n) + 0.5) / n
    return (np.arange(n) + rng.random(n)) / n


def uniform_box(n: int, rng=None, half_width: float = math.sqrt(3.0), stratified: bool = True) -> np.ndarray:
    """Centred samples of the uniform law on ``[-w, w]``.

    With ``stratified`` the quantile levels are jittered within ``n`` equal
    strata (or placed at their midpoints when ``rng`` is None), which keeps
    the initial moments within ``O(1/n)`` of their exact values.
    """
    if stratified:
        u = _stratified(n, rng)
    else:
        u = rng.random(n)
    x = half_width * (2.0 * u - 1.0)
    return x - x.mean()


def gaussian(n: int, rng=None, std: float = 1.0, stratified: bool = True) -> np.ndarray:
    from scipy.special import ndtri

    u = _stratified(n, rng) if stratified else rng.random(n)
    x = std * ndtri(u)
    return x - x.mean()


# ---------------------------------------------------------------------------

@dataclass
class DsmcConfig:
    """Particle run settings.

    ``dt`` fixes the step; when None the step is set from the majorant so
    that the largest acceptance probability equals ``acceptance_target``.
    The majorant is recomputed every ``majorant_refresh`` steps (the support
    only shrinks, so a stale majorant is still valid).
    """

    n_particles: int = 10_000
    t_end: float = 1.0
    seed: int = 0
    dt: float | None = None
    majorant_refresh: int = 1
    acceptance_target: float = 0.02
    record_times: Sequence[float] | None = None
    n_records: int = 60
    orders: Sequence[float] = DEFAULT_ORDERS
    snapshot_path: str | None = None
    max_steps: int = 50_000_000

    def __post_init__(self):
        if int(self.n_particles) < 2:
            raise InvalidArgumentError("n_particles must be >= 2")
        if self.dt is not None and not self.dt > 0:
            raise InvalidArgumentError(f"dt must be positive, got {self.dt}")
        if not self.t_end >= 0:
            raise InvalidArgumentError(f"t_end must be >= 0, got {self.t_end}")
        if not (0 < self.acceptance_target <= 1):
            raise InvalidArgumentError("acceptance_target must lie in (0, 1]")
        if int(self.majorant_refresh) < 1:
            raise InvalidArgumentError("majorant_refresh must be >= 1")


def default_record_times(t_end: float, n: int = 60, t_min: float | None = None) -> np.ndarray:
    """``0`` followed by ``n`` log-spaced times ending at ``t_end``."""
    if t_end <= 0:
        return np.array([0.0])
    t_min = t_end * 1e-3 if t_min is None else t_min
    return np.concatenate([[0.0], np.geomspace(t_min, t_end, n)])


@dataclass
class DsmcResult:
    """Moment series of a particle run; behaves as a sequence of records."""

    records: list
    final: ParticleEnsemble
    collapsed: bool = False
    n_steps: int = 0
    n_events: int = 0
    majorant_retries: int = 0
    seed: int | None = None

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[MomentRecord]:
        return iter(self.records)

    def __getitem__(self, idx):
        return self.records[idx]

    def times(self) -> np.ndarray:
        return np.array([r.time for r in self.records])

    def moment(self, p: float) -> np.ndarray:
        return np.array([r[p] for r in self.records])


class _MajorantViolation(Exception):
    pass


def _pair_draw_probability(n: int) -> float:
    """Chance that a given unordered pair is drawn in one pairing round."""
    n_pairs = n // 2
    return n_pairs / (0.5 * n * (n - 1))


def _pairs(n: int, generation: int, rng):
    """Disjoint random pairs; with odd ``n`` particle ``generation % n`` idles."""
    if n % 2:
        idle = generation % n
        rest = np.delete(np.arange(n), idle)
        perm = rest[rng.permutation(n - 1)]
    else:
        perm = rng.permutation(n)
    return perm[0::2], perm[1::2]


def _accept_probability(x, y, gamma, dt, n):
    rate = np.abs(x - y) ** gamma / n if gamma > 0 else np.full(x.shape, 1.0 / n)
    return rate * dt / _pair_draw_probability(n)


def _apply(pos, i, j, acc, a, b):
    ii, jj = i[acc], j[acc]
    x, y = pos[ii], pos[jj]
    pos[ii] = a * x + b * y
    pos[jj] = b * x + a * y


def dsmc_step(ens: ParticleEnsemble, params: ModelParams, dt: float, rng, *, _strict=False) -> ParticleEnsemble:
    """One pairing round of length ``dt``.

    A pair whose acceptance probability would exceed one is a majorant
    violation; by default the step is then split into halves until it fits
    (logged), so the returned ensemble always corresponds to time ``dt``.
    """
    if not dt > 0:
        raise InvalidArgumentError(f"dt must be positive, got {dt}")
    n = ens.n
    pos = np.array(ens.positions)
    i, j = _pairs(n, ens.generation, rng)
    p = _accept_probability(pos[i], pos[j], params.gamma, dt, n)
    if p.size and p.max() > 1.0:
        if _strict:
            raise _MajorantViolation
        log.info("acceptance probability %.3g > 1; splitting the step", p.max())
        half = dsmc_step(ens, params, 0.5 * dt, rng)
        return dsmc_step(half, params, 0.5 * dt, rng)
    acc = rng.random(p.size) < p
    _apply(pos, i, j, acc, params.a, params.b)
    return ens.with_positions(pos, ens.generation + 1)


def _majorant(positions, gamma):
    width = float(positions.max() - positions.min())
    return width**gamma if gamma > 0 else 1.0


def _step_from_majorant(lam, n, target):
    if lam <= 0:
        return math.inf
    return target * _pair_draw_probability(n) * n / lam


def _resolve_initial(initial, n, rng):
    if isinstance(initial, ParticleEnsemble):
        return initial
    if callable(initial):
        return ParticleEnsemble(initial(n, rng))
    return ParticleEnsemble(initial)


def _record_grid(config: DsmcConfig):
    if config.record_times is not None:
        rt = sorted({0.0, *[float(t) for t in config.record_times if 0 <= t <= config.t_end]})
        if rt[-1] < config.t_end:
            rt.append(config.t_end)
        return np.array(rt)
    return default_record_times(config.t_end, config.n_records)


def run_dsmc(
    config: DsmcConfig,
    params: ModelParams,
    initial: Callable | ParticleEnsemble | Sequence[float],
    *,
    observer: Callable[[float, ParticleEnsemble], None] | None = None,
) -> DsmcResult:
    """Evolve a particle ensemble and record moments at fixed times.

    Parameters
    ----------
    initial
        A sampler ``initial(n, rng) -> positions``, an ensemble or an array.
    observer : callable, optional
        Called as ``observer(t, ensemble)`` at every record time.

    The run is deterministic given ``config.seed``.  It stops early with
    ``collapsed=True`` when all particles coincide.
    """
    rng = np.random.default_rng(config.seed)
    ens = _resolve_initial(initial, config.n_particles, rng)
    n = ens.n
    times = _record_grid(config)
    records = [ensemble_moments(ens, config.orders, 0.0)]
    if observer is not None:
        observer(0.0, ens)
    snap = Path(config.snapshot_path) if config.snapshot_path else None
    if snap is not None:
        if snap.exists():
            snap.unlink()
        write_snapshot(snap, ens, append=True)
    t = 0.0
    k = 1
    steps = events = retries = 0
    lam = None
    collapsed = False
    while k < len(times):
        if steps >= config.max_steps:
            raise RuntimeError(f"particle run exceeded {config.max_steps} steps")
        if config.dt is None and (lam is None or steps % config.majorant_refresh == 0):
            lam = _majorant(ens.positions, params.gamma)
            if lam == 0.0:
                collapsed = True
                break
        dt_base = config.dt if config.dt is not None else _step_from_majorant(lam, n, config.acceptance_target)
        goal = times[k]
        dt = min(dt_base, goal - t)
        hit = dt >= goal - t
        state = rng.bit_generator.state
        while True:
            try:
                new = dsmc_step(ens, params, dt, rng, _strict=config.dt is None)
                break
            except _MajorantViolation:
                # cannot happen with the width majorant; kept for custom dt paths
                rng.bit_generator.state = state
                lam *= 2.0
                retries += 1
                log.info("majorant violated; doubling to %.3g", lam)
                dt = min(_step_from_majorant(lam, n, config.acceptance_target), goal - t)
                hit = dt >= goal - t
        events += int(np.count_nonzero(new.positions != ens.positions)) // 2
        ens = new
        steps += 1
        if hit:
            t = goal
            records.append(ensemble_moments(ens, config.orders, t))
            if observer is not None:
                observer(t, ens)
            if snap is not None:
                write_snapshot(snap, ens, append=True)
            k += 1
        else:
            t += dt
        if ens.positions.max() == ens.positions.min():
            collapsed = True
            break
    return DsmcResult(records, ens, collapsed, steps, events, retries, config.seed)


def rescaled_dsmc(
    config: DsmcConfig,
    params: ModelParams,
    initial,
    s_end: float | None = None,
    s_times: Sequence[float] | None = None,
) -> DsmcResult:
    """Particle run reported in self-similar variables.

    The run happens in original time; at each output time ``t(s)`` the
    ensemble is dilated by ``V(t(s)) = exp(s)`` (``exp(c s)`` for γ = 0) and
    its moments are recorded against ``s``.
    """
    if s_times is None:
        if s_end is None:
            raise InvalidArgumentError("give s_end or s_times")
        s_times = np.linspace(0.0, s_end, config.n_records + 1)
    s_times = np.asarray(sorted(s_times), dtype=float)
    t_times = unrescale_time(s_times, params)
    out = []

    def observe(t, ens):
        s = s_times[len(out)]
        scaled = pushforward_scale(ens, scaling_factor(t, params))
        out.append(ensemble_moments(scaled, config.orders, float(s), rescaled=True))

    cfg = DsmcConfig(**{**config.__dict__, "record_times": list(t_times), "t_end": float(t_times[-1])})
    res = run_dsmc(cfg, params, initial, observer=observe)
    res.records = out
    return res


# ---------------------------------------------------------------------------
# coupled runs for the stability experiment

def perturb_ensemble(ens: ParticleEnsemble, d0: float, kind: str = "dilation") -> ParticleEnsemble:
    """An ensemble at distance ``d0`` in W1 from ``ens``.

    ``kind="dilation"`` scales the centred ensemble so that the result stays
    centred; ``kind="shift"`` translates it.
    """
    if d0 < 0:
        raise InvalidArgumentError("d0 must be >= 0")
    if kind == "shift":
        return ens.with_positions(ens.positions + d0)
    if kind != "dilation":
        raise InvalidArgumentError(f"unknown perturbation {kind!r}")
    x = ens.positions
    m = x.mean()
    m1 = float(np.mean(np.abs(x - m)))
    if m1 == 0:
        raise InvalidArgumentError("cannot dilate a collapsed ensemble")
    return ens.with_positions(m + (x - m) * (1.0 + d0 / m1))


def stability_experiment(
    mu0: ParticleEnsemble,
    nu0: ParticleEnsemble,
    params: ModelParams,
    t_end: float,
    seed: int,
    *,
    record_times: Sequence[float] | None = None,
    acceptance_target: float = 0.05,
) -> list[tuple[float, float]]:
    """Coupled particle runs from two initial ensembles.

    Both runs share the pairing permutation and the acceptance uniforms of
    every step, and use a common step from the larger of the two majorants.
    Identical inputs therefore give identical trajectories.  Returns
    ``(t, W1)`` pairs at the record times.
    """
    if mu0.n != nu0.n:
        raise InvalidArgumentError("coupled runs need ensembles of equal size")
    rng = np.random.default_rng(seed)
    n = mu0.n
    times = (
        np.array(sorted({0.0, *record_times, t_end}))
        if record_times is not None
        else np.linspace(0.0, t_end, 21)
    )
    x = np.array(mu0.positions)
    y = np.array(nu0.positions)
    out = [(0.0, w1_distance(x, y))]
    t = 0.0
    gen = 0
    a, b, gamma = params.a, params.b, params.gamma
    for goal in times[1:]:
        while t < goal:
            lam = max(_majorant(x, gamma), _majorant(y, gamma))
            dt = min(_step_from_majorant(lam, n, acceptance_target), goal - t)
            i, j = _pairs(n, gen, rng)
            u = rng.random(i.size)
            _apply(x, i, j, u < _accept_probability(x[i], x[j], gamma, dt, n), a, b)
            _apply(y, i, j, u < _accept_probability(y[i], y[j], gamma, dt, n), a, b)
            gen += 1
            t = goal if dt >= goal - t else t + dt
        out.append((float(goal), w1_distance(x, y)))
    return out


def stability_constant(series: Sequence[tuple[float, float]]) -> float:
    """Fitted log-Lipschitz constant of a :func:`stability_experiment` series."""
    t = np.array([s[0] for s in series])
    d = np.array([s[1] for s in series])
    if d[0] == 0:
        # coupled identical runs stay identical; any separation is unbounded growth
        return 0.0 if not np.any(d) else math.inf
    return fit_log_lipschitz_constant(t, d, d[0])


# ---------------------------------------------------------------------------
# binary snapshots: little-endian uint64 count followed by float64 positions

_HEADER = struct.Struct("<Q")


def write_snapshot(path, ens: ParticleEnsemble, append: bool = False) -> None:
    data = np.ascontiguousarray(ens.positions, dtype="<f8")
    with open(path, "ab" if append else "wb") as fh:
        fh.write(_HEADER.pack(data.size))
        fh.write(data.tobytes())


def read_snapshots(path) -> list[np.ndarray]:
    """All snapshots in a file, in write order."""
    out = []
    with open(path, "rb") as fh:
        while True:
            head = fh.read(_HEADER.size)
            if not head:
                break
            if len(head) < _HEADER.size:
                raise ValueError("truncated snapshot header")
            (n,) = _HEADER.unpack(head)
            buf = fh.read(8 * n)
            if len(buf) < 8 * n:
                raise ValueError("truncated snapshot payload")
            out.append(np.frombuffer(buf, dtype="<f8").astype(float))
    return out
