"""Moment theory as executable checks.

Decay envelopes, Haff-exponent fits, the time change between original and
self-similar variables, Wasserstein distances between particle ensembles,
bounds on rescaled moments and fitted lower-envelope constants.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import Mapping, Sequence

import numpy as np

from .core import ModelParams, MomentRecord
from .errors import InsufficientDataError, InvalidArgumentError

__all__ = [
    "decay_upper",
    "decay_upper_series",
    "DecayEnvelope",
    "haff_fit",
    "rescale_time",
    "unrescale_time",
    "scaling_factor",
    "w1_distance",
    "wp_distance",
    "rescaled_moment_bound",
    "BoundsReport",
    "check_rescaled_bounds",
    "fit_lower_constant",
    "lower_envelope",
    "osgood_psi",
    "osgood_psi_inv",
    "fit_log_lipschitz_constant",
]


# ---------------------------------------------------------------------------
# decay envelopes

def decay_upper(k: float, M_k0: float, params: ModelParams, t) -> np.ndarray | float:
    """Upper envelope for ``M_k(t)`` of the unscaled equation.

    ``M_k0 (1 + (γ / 2k)(1 - a^k - b^k) M_k0^{γ/k} t)^{-k/γ}``; for γ = 0 the
    limit ``M_k0 exp(-(1 - a^k - b^k) t / 2)`` is returned.

    Raises
    ------
    InvalidArgumentError
        If ``k < 2``, ``M_k0 < 0`` or any ``t < 0``.
    """
    if k < 2:
        raise InvalidArgumentError(f"the envelope holds for k >= 2, got k={k}")
    if M_k0 < 0:
        raise InvalidArgumentError(f"M_k0 must be >= 0, got {M_k0}")
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise InvalidArgumentError("times must be >= 0")
    gamma = params.gamma
    D = params.dissipation_factor(k)
    if gamma == 0:
        out = M_k0 * np.exp(-0.5 * D * t_arr)
    else:
        rate = gamma / (2.0 * k) * D * M_k0 ** (gamma / k)
        out = M_k0 * (1.0 + rate * t_arr) ** (-k / gamma)
    return float(out) if np.ndim(t) == 0 else out


def decay_upper_series(series: Sequence[MomentRecord], k: float, params: ModelParams) -> np.ndarray:
    """Envelope evaluated at the record times, anchored at the first record."""
    t = np.array([r.time for r in series])
    return decay_upper(k, series[0][k], params, t - t[0])


@dataclass
class DecayEnvelope:
    """Upper and fitted lower envelopes for one moment order.

    The lower envelope has the form ``A (1 + K B t)^{-k/γ}`` where ``A`` and
    ``B`` come from the initial data and ``K`` is fitted; see
    :func:`fit_lower_constant`.
    """

    order: float
    params: ModelParams
    M_k0: float
    lower_constant: float | None = None
    lower_scale: float = 1.0
    lower_rate: float = 1.0

    def upper(self, t):
        return decay_upper(self.order, self.M_k0, self.params, t)

    def lower(self, t):
        if self.lower_constant is None:
            raise InvalidArgumentError("lower envelope constant has not been fitted")
        gamma = self.params.gamma
        t = np.asarray(t, dtype=float)
        return self.lower_scale * (1.0 + self.lower_constant * self.lower_rate * t) ** (
            -self.order / gamma
        )


def _lower_ingredients(series, params, p=2.0):
    """Anchor values ``(A, B, exponent map)`` for the lower envelope of ``M_p``."""
    gamma = params.gamma
    if gamma <= 0:
        raise InvalidArgumentError("the lower envelope needs gamma > 0")
    first = series[0]
    if gamma <= 1:
        Mg = first[gamma]
        return Mg ** (p / gamma), Mg
    M1 = first[1.0]
    return M1**p, gamma * M1**gamma


def lower_envelope(t, p: float, params: ModelParams, scale: float, rate: float, K: float):
    """``scale (1 + K rate t)^{-p/γ}``."""
    t = np.asarray(t, dtype=float)
    return scale * (1.0 + K * rate * t) ** (-p / params.gamma)


def fit_lower_constant(series: Sequence[MomentRecord], params: ModelParams, p: float = 2.0) -> dict:
    """Smallest constant ``K`` making the lower envelope valid on a series.

    For ``γ <= 1`` the envelope is ``M_γ(0)^{p/γ} (1 + K M_γ(0) t)^{-p/γ}``;
    for ``γ > 1`` it is ``M_1(0)^p (1 + K γ M_1(0)^γ t)^{-p/γ}``.  Solving the
    envelope inequality for ``K`` at every record and taking the maximum gives
    the fitted value.  Records must carry the anchor moment (``γ`` or 1) at
    the first time.
    """
    if len(series) < 2:
        raise InsufficientDataError("need at least two records to fit a lower envelope")
    scale, rate = _lower_ingredients(series, params, p)
    t0 = series[0].time
    K = 0.0
    for r in series[1:]:
        dt = r.time - t0
        if dt <= 0:
            continue
        Mp = r[p]
        if Mp <= 0:
            raise InsufficientDataError("moment vanished; the lower envelope is undefined")
        need = ((scale / Mp) ** (params.gamma / p) - 1.0) / (rate * dt)
        K = max(K, need)
    return {"K": K, "scale": scale, "rate": rate, "order": p}


# ---------------------------------------------------------------------------
# Haff fit

def haff_fit(series: Sequence[MomentRecord], p: float = 2.0, decades: float = 1.0) -> float:
    """Late-time exponent of ``M_p(t)`` by least squares in log-log variables.

    Uses the records with ``t >= t_max / 10**decades``.

    Raises
    ------
    InsufficientDataError
        Fewer than 10 usable records, the window spans less than the
        requested decades, or a moment underflowed.
    """
    t = np.array([r.time for r in series], dtype=float)
    m = np.array([r[p] for r in series], dtype=float)
    if t.size < 10:
        raise InsufficientDataError(f"need at least 10 records, got {t.size}")
    t_max = t.max()
    if not t_max > 0:
        raise InsufficientDataError("series has no positive times")
    sel = t >= t_max / 10.0**decades
    pos = t[t > 0]
    if pos.size == 0 or pos.min() > t_max / 10.0**decades * (1 + 1e-12):
        raise InsufficientDataError("series does not span the requested time window")
    if np.count_nonzero(sel) < 10:
        raise InsufficientDataError(f"only {np.count_nonzero(sel)} records in the fit window")
    mm = m[sel]
    if np.any(~np.isfinite(mm)) or np.any(mm <= np.finfo(float).tiny):
        raise InsufficientDataError("moment underflow in the fit window")
    slope, _ = np.polyfit(np.log(t[sel]), np.log(mm), 1)
    return float(slope)


# ---------------------------------------------------------------------------
# self-similar time change

def _rate(params: ModelParams) -> float:
    c = params.drift_coeff
    if c <= 0:
        raise InvalidArgumentError("the self-similar time change needs drift_coeff > 0")
    return c


def rescale_time(t, params: ModelParams):
    """``s(t) = log(1 + cγt) / (cγ)``; for γ = 0 the time is unchanged."""
    c = _rate(params)
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise InvalidArgumentError("t must be >= 0")
    g = params.gamma
    s = t_arr if g == 0 else np.log1p(c * g * t_arr) / (c * g)
    return float(s) if np.ndim(t) == 0 else s


def unrescale_time(s, params: ModelParams):
    """Inverse of :func:`rescale_time`, ``t(s) = (exp(cγs) - 1) / (cγ)``."""
    c = _rate(params)
    s_arr = np.asarray(s, dtype=float)
    if np.any(s_arr < 0):
        raise InvalidArgumentError("s must be >= 0")
    g = params.gamma
    t = s_arr if g == 0 else np.expm1(c * g * s_arr) / (c * g)
    return float(t) if np.ndim(s) == 0 else t


def scaling_factor(t, params: ModelParams):
    """Dilation ``V(t) = (1 + cγt)^{1/γ}`` (``exp(ct)`` for γ = 0)."""
    c = _rate(params)
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise InvalidArgumentError("t must be >= 0")
    g = params.gamma
    v = np.exp(c * t_arr) if g == 0 else np.exp(np.log1p(c * g * t_arr) / g)
    return float(v) if np.ndim(t) == 0 else v


# ---------------------------------------------------------------------------
# Wasserstein distances

def _positions(x) -> np.ndarray:
    pos = getattr(x, "positions", x)
    pos = np.asarray(pos, dtype=float).ravel()
    if pos.size == 0:
        raise InvalidArgumentError("empty ensemble")
    return pos


def wp_distance(x, y, p: float = 1.0) -> float:
    """``W_p`` between equal-weight empirical measures of equal size."""
    if p < 1:
        raise InvalidArgumentError(f"p must be >= 1, got {p}")
    xs, ys = np.sort(_positions(x)), np.sort(_positions(y))
    if xs.size != ys.size:
        raise InvalidArgumentError("wp_distance needs ensembles of equal size")
    return float(np.mean(np.abs(xs - ys) ** p) ** (1.0 / p))


def w1_distance(x, y) -> float:
    """Kantorovich-Rubinstein distance of two equal-weight ensembles.

    Equal sizes use the sorted matching; otherwise the L1 distance between
    the two empirical distribution functions is integrated exactly.
    Accepts ensembles or plain position arrays.
    """
    xs, ys = np.sort(_positions(x)), np.sort(_positions(y))
    if xs.size == ys.size:
        return float(np.mean(np.abs(xs - ys)))
    pts = np.union1d(xs, ys)
    Fx = np.searchsorted(xs, pts[:-1], side="right") / xs.size
    Fy = np.searchsorted(ys, pts[:-1], side="right") / ys.size
    return float(np.sum(np.abs(Fx - Fy) * np.diff(pts)))


# ---------------------------------------------------------------------------
# bounds on rescaled moments

def rescaled_moment_bound(p: float, M_p0: float, params: ModelParams) -> float:
    """``max(M_p0, (2pc / (1 - a^p - b^p))^{p/γ})`` for the rescaled flow.

    With ``c = 1`` this is ``max(M_p0, (2p / (1 - a^p - b^p))^{p/γ})``.
    """
    if params.gamma <= 0:
        raise InvalidArgumentError("the rescaled bound needs gamma > 0")
    if p <= 1:
        raise InvalidArgumentError(f"the rescaled bound needs p > 1, got {p}")
    D = params.dissipation_factor(p)
    return max(M_p0, (2.0 * p * params.drift_coeff / D) ** (p / params.gamma))


@dataclass
class BoundsReport:
    """Outcome of :func:`check_rescaled_bounds`.

    ``violations`` lists ``(time, order, value, bound)`` tuples exceeding the
    bound by more than the tolerance; ``margins`` maps each order to
    ``min(bound - value) / bound`` over the series.
    """

    bounds: dict = dc_field(default_factory=dict)
    margins: dict = dc_field(default_factory=dict)
    max_ratio: dict = dc_field(default_factory=dict)
    violations: list = dc_field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def check_rescaled_bounds(
    series: Sequence[MomentRecord],
    params: ModelParams,
    M_p0: Mapping[float, float],
    tol: float = 0.05,
) -> BoundsReport:
    """Compare rescaled moments against their uniform-in-time bounds."""
    rep = BoundsReport()
    for p, m0 in M_p0.items():
        p = float(p)
        bound = rescaled_moment_bound(p, m0, params)
        rep.bounds[p] = bound
        vals = np.array([r[p] for r in series], dtype=float)
        rep.margins[p] = float(np.min((bound - vals) / bound)) if vals.size else math.inf
        rep.max_ratio[p] = float(np.max(vals / bound)) if vals.size else 0.0
        for r, v in zip(series, vals):
            if v > bound * (1.0 + tol):
                rep.violations.append((r.time, p, float(v), bound))
    return rep


# ---------------------------------------------------------------------------
# log-Lipschitz (Osgood) envelope for the stability experiment

def osgood_psi(x):
    """``Ψ(x) = log(1 - log x)`` for ``x <= 1`` and ``-log(1 + log x)`` above.

    ``Ψ' = -1 / (x (1 + |log x|))``, so the solution of ``d' = K d (1 + |log d|)``
    is ``Ψ(d(t)) = Ψ(d0) - K t``.
    """
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise InvalidArgumentError("Psi is defined for x > 0")
    lx = np.log(x)
    out = np.where(lx <= 0, np.log1p(-np.minimum(lx, 0.0)), -np.log1p(np.maximum(lx, 0.0)))
    return float(out) if out.ndim == 0 else out


def osgood_psi_inv(y):
    """Inverse of :func:`osgood_psi`."""
    y = np.asarray(y, dtype=float)
    out = np.where(y >= 0, np.exp(-np.expm1(np.maximum(y, 0.0))), np.exp(np.expm1(-np.minimum(y, 0.0))))
    return float(out) if out.ndim == 0 else out


def fit_log_lipschitz_constant(times, distances, d0: float) -> float:
    """Smallest ``K`` with ``d(t) <= Ψ^{-1}(Ψ(d0) - K t)`` at every sample."""
    times = np.asarray(times, dtype=float)
    d = np.asarray(distances, dtype=float)
    if d0 <= 0:
        raise InvalidArgumentError("d0 must be positive")
    sel = (times > 0) & (d > 0)
    if not np.any(sel):
        return 0.0
    K = (osgood_psi(d0) - osgood_psi(d[sel])) / times[sel]
    return float(max(0.0, np.max(K)))
