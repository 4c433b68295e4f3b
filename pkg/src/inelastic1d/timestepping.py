"""Explicit TVD-RK3 time integration and the steady-state driver."""

from __future__ import annotations

import logging
import math
import time as _time
from dataclasses import dataclass, field as dc_field
from typing import Callable, Sequence

import numpy as np

from .core import DGField, Grid, ModelParams, MomentRecord, field_moments
from .errors import InvalidArgumentError, MaxStepsExceededError, NumericalBlowupError
from .operators import CollisionWorkspace, is_even, loss_frequency, rhs_total, symmetrize

__all__ = [
    "rk3_step",
    "residual",
    "choose_dt",
    "SteadyResult",
    "solve_steady",
    "integrate_transient",
    "run_to_steady",
    "run_transient",
    "DEFAULT_ORDERS",
]

log = logging.getLogger(__name__)

DEFAULT_ORDERS = (0.0, 1.0, 2.0, 3.0, 4.0)

Rhs = Callable[[DGField], DGField]


def _check_finite(arr, step, state, stage):
    if not np.all(np.isfinite(arr)):
        raise NumericalBlowupError(
            f"non-finite values in RK stage {stage} of step {step}", step=step, state=state
        )


def rk3_step(field: DGField, dt: float, rhs: Rhs, step: int | None = None) -> DGField:
    """One Shu-Osher TVD-RK3 step.

    Raises
    ------
    NumericalBlowupError
        If any stage is non-finite; ``state`` is the input field.
    """
    if not dt > 0:
        raise InvalidArgumentError(f"dt must be positive, got {dt}")
    u = field.coeffs
    k1 = rhs(field).coeffs
    # Shu-Osher stages written as increments of u, so F = 0 returns u bitwise
    u1 = u + dt * k1
    _check_finite(u1, step, field, 1)
    k2 = rhs(field.with_coeffs(u1)).coeffs
    u2 = u + (0.25 * dt) * (k1 + k2)
    _check_finite(u2, step, field, 2)
    k3 = rhs(field.with_coeffs(u2)).coeffs
    un = u + (dt / 6.0) * (k1 + k2 + 4.0 * k3)
    _check_finite(un, step, field, 3)
    return field.with_coeffs(un)


def residual(prev: DGField, nxt: DGField, dt: float) -> float:
    """``|| (next - prev) / dt ||_{L2}`` computed from Legendre orthogonality."""
    if not dt > 0:
        raise InvalidArgumentError(f"dt must be positive, got {dt}")
    if not prev.same_space(nxt):
        raise InvalidArgumentError("fields live on different spaces")
    diff = nxt.coeffs - prev.coeffs
    norm = prev.grid.dx / (2 * np.arange(prev.degree + 1) + 1)
    return float(math.sqrt(np.sum(diff * diff * norm)) / dt)


def choose_dt(field: DGField, params: ModelParams, ws: CollisionWorkspace | None, cfl: float) -> float:
    """Stable step ``cfl / (c L / dx (2k+1) + max loss frequency)``.

    The loss frequency ``∫ g(y) |ξ - y|^γ dy`` is sampled at every cell edge
    and center.  For ``c = 0`` and a zero field the bound is infinite.
    """
    if not (0.0 < cfl <= 1.0):
        raise InvalidArgumentError(f"cfl must lie in (0, 1], got {cfl}")
    grid = field.grid
    drift = params.drift_coeff * grid.half_width / grid.dx * (2 * field.degree + 1)
    lam = 0.0
    if ws is not None and np.any(field.coeffs):
        lam = float(max(0.0, np.max(loss_frequency(field, ws))))
    rate = drift + lam
    return cfl / rate if rate > 0 else math.inf


@dataclass
class SteadyResult:
    final_field: DGField
    n_steps: int
    final_residual: float
    moment_history: list = dc_field(default_factory=list)
    wall_time: float = 0.0
    residual_history: list = dc_field(default_factory=list)
    time: float = 0.0


def _symmetry_mode(field: DGField, symmetry: str) -> bool:
    if symmetry == "auto":
        return is_even(field)
    if symmetry == "even":
        return True
    if symmetry == "none":
        return False
    raise InvalidArgumentError(f"symmetry must be 'auto', 'even' or 'none', got {symmetry!r}")


def _stepper(params, ws, boundary, even):
    def rhs(f):
        return rhs_total(f, params, ws, boundary)

    def step(field, dt, n):
        new = rk3_step(field, dt, rhs, step=n)
        return symmetrize(new) if even else new

    return step


def _record(field, t, orders, rescaled, res=None):
    rec = field_moments(field, orders, time=t, rescaled=rescaled)
    rec.residual = res
    return rec


def solve_steady(
    initial: DGField,
    params: ModelParams,
    ws: CollisionWorkspace,
    *,
    threshold: float = 1e-4,
    cfl: float = 0.3,
    max_steps: int = 1_000_000,
    record_every: int = 10,
    orders: Sequence[float] = DEFAULT_ORDERS,
    dt_every: int = 1,
    boundary: str = "outflow",
    symmetry: str = "auto",
    callback: Callable[[int, float, float], None] | None = None,
) -> SteadyResult:
    """March the rescaled equation until the residual drops below ``threshold``.

    Parameters
    ----------
    boundary : {"outflow", "wall"}
        Treatment of the drift flux at ``±L``.
    symmetry : {"auto", "even", "none"}
        The rescaled drift amplifies any momentum like ``exp(c s)``, so
        round-off asymmetry of even data eventually grows into a drifting
        profile.  ``"even"`` projects every step onto even functions;
        ``"auto"`` does so when the initial field is even.
    dt_every : int
        Recompute the step size every this many steps (the loss frequency
        changes slowly once the transient has passed).
    callback : callable, optional
        Called as ``callback(step, time, residual)`` after every step.

    Raises
    ------
    MaxStepsExceededError
        The limit was hit; ``state`` holds the last field.
    NumericalBlowupError
        A stage produced non-finite values.
    """
    if threshold <= 0:
        raise InvalidArgumentError(f"threshold must be positive, got {threshold}")
    t0 = _time.perf_counter()
    field = initial
    t = 0.0
    history = [_record(field, t, orders, True)]
    res_hist = []
    if math.isinf(threshold):
        return SteadyResult(field, 0, math.nan, history, _time.perf_counter() - t0, res_hist, t)

    advance = _stepper(params, ws, boundary, _symmetry_mode(initial, symmetry))
    res = math.inf
    dt = None
    step = 0
    while res >= threshold:
        if step >= max_steps:
            raise MaxStepsExceededError(
                f"no convergence after {max_steps} steps (residual {res:.3e})", state=field
            )
        if dt is None or step % dt_every == 0:
            dt = choose_dt(field, params, ws, cfl)
            if not math.isfinite(dt):
                # nothing moves: zero field with no drift
                return SteadyResult(field, step, 0.0, history, _time.perf_counter() - t0, res_hist, t)
        new = advance(field, dt, step)
        res = residual(field, new, dt)
        field = new
        step += 1
        t += dt
        res_hist.append(res)
        if callback is not None:
            callback(step, t, res)
        if step % record_every == 0 or res < threshold:
            history.append(_record(field, t, orders, True, res))
    return SteadyResult(field, step, res, history, _time.perf_counter() - t0, res_hist, t)


def integrate_transient(
    initial: DGField,
    params: ModelParams,
    ws: CollisionWorkspace,
    t_end: float,
    *,
    cfl: float = 0.3,
    record_times: Sequence[float] | None = None,
    record_every: int = 10,
    orders: Sequence[float] = DEFAULT_ORDERS,
    max_steps: int = 10_000_000,
    boundary: str = "outflow",
    symmetry: str = "auto",
) -> list[MomentRecord]:
    """Integrate to ``t_end`` and return the moment time series.

    With ``record_times`` the step is shortened to land on each requested
    time exactly; otherwise moments are taken every ``record_every`` steps
    and at ``t_end``.  Times are flagged as rescaled when ``c > 0``.
    """
    if not t_end >= 0:
        raise InvalidArgumentError(f"t_end must be >= 0, got {t_end}")
    rescaled = params.drift_coeff > 0
    field = initial
    t = 0.0
    out = [_record(field, t, orders, rescaled)]
    if t_end == 0:
        return out
    targets = sorted(float(x) for x in (() if record_times is None else record_times) if 0 < x <= t_end)
    if not targets or targets[-1] < t_end:
        targets.append(t_end)
    ti = 0

    advance = _stepper(params, ws, boundary, _symmetry_mode(initial, symmetry))
    step = 0
    while ti < len(targets):
        if step >= max_steps:
            raise MaxStepsExceededError(f"t_end not reached in {max_steps} steps", state=field)
        dt = choose_dt(field, params, ws, cfl)
        goal = targets[ti]
        hit = t + dt >= goal * (1 - 1e-13)
        if hit:
            dt = goal - t
        if dt > 0:
            field = advance(field, dt, step)
        step += 1
        if hit:
            t = goal
            out.append(_record(field, t, orders, rescaled))
            ti += 1
        else:
            t += dt
            if record_times is None and step % record_every == 0:
                out.append(_record(field, t, orders, rescaled))
    return out


def _setup(config):
    from .cli import build_problem  # local import: cli depends on this module

    return build_problem(config)


def run_to_steady(config) -> SteadyResult:
    """Steady-state run described by a :class:`~inelastic1d.config.RunConfig`."""
    field, params, ws = _setup(config)
    return solve_steady(
        field,
        params,
        ws,
        threshold=config.threshold,
        cfl=config.cfl,
        max_steps=config.max_steps,
        record_every=config.record_every,
        boundary=config.boundary,
        symmetry=config.symmetry,
    )


def run_transient(config, t_end: float | None = None) -> list[MomentRecord]:
    """Fixed-horizon run described by a config; returns the moment series."""
    field, params, ws = _setup(config)
    t_end = config.t_end if t_end is None else t_end
    return integrate_transient(
        field, params, ws, t_end, cfl=config.cfl, record_every=config.record_every,
        max_steps=config.max_steps, boundary=config.boundary, symmetry=config.symmetry,
    )
