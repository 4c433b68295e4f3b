"""Pointwise inequalities behind the moment estimates, as sampled checks.

Each ``check_*`` function draws random arguments, evaluates both sides and
returns a :class:`InequalityReport` with the worst normalised slack.  The
constant ``C_γ`` in the lower bound on ``B_γ`` is not known in closed form;
:func:`fit_c_gamma` computes it by maximising a one-variable function.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy import optimize, special

from .core import ModelParams
from .errors import InvalidArgumentError

__all__ = [
    "InequalityReport",
    "mixing_gap",
    "check_mixing_inequality",
    "b_gamma",
    "fit_c_gamma",
    "check_b_gamma_bound",
    "beta_p",
    "check_beta_bound",
    "gen_binom",
    "binomial_gap",
    "check_binomial_bound",
    "povzner_pair",
    "check_povzner",
    "run_inequality_suite",
]


@dataclass
class InequalityReport:
    """Worst case of a sampled inequality ``lhs <= rhs``.

    ``worst`` is the minimum over samples of ``(rhs - lhs) / scale``; the
    check passes when it is at least ``-tol``.
    """

    name: str
    n_samples: int
    worst: float
    tol: float
    extra: dict = dc_field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.worst >= -self.tol


def _signed_scales(rng, n, decades=3.0):
    return rng.choice([-1.0, 1.0], n) * 10.0 ** rng.uniform(-decades, decades, n) * rng.random(n)


# ---------------------------------------------------------------------------
# |x|^k + |y|^k - |ax+by|^k - |ay+bx|^k >= (1 - a^k - b^k) |x-y|^k, k >= 2

def mixing_gap(x, y, k, a):
    """Left side minus right side of the mixing inequality (``>= 0`` for k >= 2)."""
    b = 1.0 - a
    lhs = np.abs(x) ** k + np.abs(y) ** k - np.abs(a * x + b * y) ** k - np.abs(a * y + b * x) ** k
    return lhs - (1.0 - a**k - b**k) * np.abs(x - y) ** k


def check_mixing_inequality(n_samples=100_000, seed=0, k_range=(2.0, 8.0), tol=1e-12, same_sign=False):
    """Sampled check of the mixing inequality over the whole plane.

    For ``k > 2`` the inequality fails whenever ``x`` and ``y`` have opposite
    signs (``x = 1, y = -1, a = 1/2, k = 4`` gives 2 on the left and 14 on
    the right), so over the plane this report is expected to fail.  With
    ``same_sign=True`` the samples are restricted to ``x y >= 0``, where it
    holds.  The worst sample is kept in ``extra["worst_case"]``.
    """
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(n_samples)
    y = rng.standard_normal(n_samples)
    if same_sign:
        y = np.abs(y) * np.sign(x)
    k = rng.uniform(*k_range, n_samples)
    k[: n_samples // 10] = 2.0  # the equality case
    a = rng.uniform(0.0, 1.0, n_samples)
    gap = mixing_gap(x, y, k, a)
    scale = np.maximum(np.abs(x), np.abs(y)) ** k + 1e-300
    rel = gap / scale
    i = int(np.argmin(rel))
    name = "mixing inequality" + (" (same-sign pairs)" if same_sign else "")
    extra = {
        "worst_case": {"x": float(x[i]), "y": float(y[i]), "k": float(k[i]), "a": float(a[i])},
        "fail_fraction": float(np.mean(rel < -tol)),
    }
    return InequalityReport(name, n_samples, float(rel[i]), tol, extra)


# ---------------------------------------------------------------------------
# B_γ(x, y) >= -C_γ |x|^γ |y|^γ for γ in (0, 1]

def b_gamma(x, y, gamma, a):
    b = 1.0 - a
    return (
        np.abs(a * x + b * y) ** gamma + np.abs(a * y + b * x) ** gamma - np.abs(x) ** gamma - np.abs(y) ** gamma
    ) * np.abs(x - y) ** gamma


def _ratio(r, gamma, a):
    # -B(r, 1) / |r|^γ; B and |x|^γ|y|^γ are both homogeneous of degree 2γ
    return -b_gamma(r, 1.0, gamma, a) / np.abs(r) ** gamma


def fit_c_gamma(gamma: float, a: float, n_grid: int = 20001) -> float:
    """Smallest ``C`` with ``B_γ(x, y) >= -C |x|^γ |y|^γ`` for all x, y.

    Homogeneity and the symmetry ``x <-> y`` reduce the search to the ratio
    ``r = x / y`` in ``[-1, 1]``; a grid scan is refined with a bounded
    scalar optimiser around the best grid point.
    """
    if not (0.0 < gamma <= 1.0):
        raise InvalidArgumentError(f"the bound is stated for gamma in (0, 1], got {gamma}")
    r = np.linspace(-1.0, 1.0, n_grid)
    r = r[r != 0.0]
    vals = _ratio(r, gamma, a)
    i = int(np.argmax(vals))
    lo = r[max(i - 1, 0)]
    hi = r[min(i + 1, r.size - 1)]
    best = float(vals[i])
    if lo < hi and not (lo < 0.0 < hi):
        res = optimize.minimize_scalar(lambda t: -_ratio(t, gamma, a), bounds=(lo, hi), method="bounded",
                                       options={"xatol": 1e-13})
        best = max(best, float(-res.fun))
    # |ar + b|^γ and |br + a|^γ have cusps at r = -b/a and r = -a/b; for γ < 1
    # the supremum can sit exactly on one of them
    b = 1.0 - a
    cusps = np.array([r0 for r0 in (-a / b, -b / a) if -1.0 <= r0 <= 1.0])
    if cusps.size:
        best = max(best, float(np.max(_ratio(cusps, gamma, a))))
    return max(best, 0.0)


def check_b_gamma_bound(n_samples=100_000, seed=0, gammas=(0.25, 0.5, 0.75, 1.0), a_values=(0.1, 0.3, 0.5),
                        tol=1e-9):
    """Sampled check of the ``B_γ`` lower bound with fitted constants.

    ``extra["constants"]`` records ``C_γ`` per ``(γ, a)`` and
    ``extra["sample_fit"]`` the largest ratio seen in the samples.
    """
    rng = np.random.default_rng(seed)
    worst = np.inf
    consts, sample_fit = {}, {}
    per = max(1, n_samples // (len(gammas) * len(a_values)))
    for g in gammas:
        for a in a_values:
            C = fit_c_gamma(g, a)
            x = _signed_scales(rng, per)
            y = _signed_scales(rng, per)
            lhs = -b_gamma(x, y, g, a)
            prod = np.abs(x) ** g * np.abs(y) ** g
            ok = prod > 0
            slack = (C * prod[ok] - lhs[ok]) / np.maximum(prod[ok], 1e-300)
            worst = min(worst, float(slack.min()) / max(C, 1.0))
            consts[(g, a)] = C
            sample_fit[(g, a)] = float(np.max(lhs[ok] / prod[ok]))
    return InequalityReport("B_gamma lower bound", per * len(gammas) * len(a_values), worst, tol,
                            {"constants": consts, "sample_fit": sample_fit})


# ---------------------------------------------------------------------------
# |ax+by|^p + |ay+bx|^p <= β_p (x² + y²)^{p/2} <= β_p (|x| + |y|)^p

def beta_p(p, a):
    """``max(a^{p/2-1}, b^{p/2-1})``; equals 1 at p = 2 and decreases in p."""
    b = 1.0 - a
    return np.maximum(a ** (0.5 * p - 1.0), b ** (0.5 * p - 1.0))


def check_beta_bound(n_samples=100_000, seed=0, p_range=(0.1, 10.0), tol=1e-12):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(n_samples)
    y = rng.standard_normal(n_samples)
    p = rng.uniform(*p_range, n_samples)
    a = rng.uniform(0.01, 0.99, n_samples)
    b = 1.0 - a
    lhs = np.abs(a * x + b * y) ** p + np.abs(a * y + b * x) ** p
    beta = beta_p(p, a)
    mid = beta * (x * x + y * y) ** (0.5 * p)
    rhs = beta * (np.abs(x) + np.abs(y)) ** p
    worst = min(float(np.min((mid - lhs) / rhs)), float(np.min((rhs - mid) / rhs)))
    return InequalityReport("beta bound", n_samples, worst, tol, {"max_ratio": float(np.max(lhs / mid))})


# ---------------------------------------------------------------------------
# (u+v)^p - u^p - v^p <= Σ_{k=1}^{k_p} C(p,k) (u^k v^{p-k} + u^{p-k} v^k)

def gen_binom(p, k):
    """``p (p-1) ... (p-k+1) / k!`` for real ``p`` and integer ``k >= 0``."""
    return special.binom(p, k)


def binomial_gap(u, v, p):
    """Right side minus left side of the fractional binomial bound (p >= 1)."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    p = np.broadcast_to(np.asarray(p, dtype=float), np.broadcast(u, v).shape)
    kp = np.floor((p + 1.0) / 2.0).astype(int)
    rhs = np.zeros(p.shape)
    for k in range(1, int(kp.max(initial=1)) + 1):
        use = k <= kp
        term = gen_binom(p, k) * (u**k * v ** (p - k) + u ** (p - k) * v**k)
        rhs = rhs + np.where(use, term, 0.0)
    lhs = (u + v) ** p - u**p - v**p
    return rhs - lhs


def check_binomial_bound(n_samples=100_000, seed=0, p_range=(1.0, 10.0), tol=1e-12):
    rng = np.random.default_rng(seed)
    u = rng.random(n_samples) * 10.0 ** rng.uniform(-2, 2, n_samples)
    v = rng.random(n_samples) * 10.0 ** rng.uniform(-2, 2, n_samples)
    p = rng.uniform(*p_range, n_samples)
    gap = binomial_gap(u, v, p)
    scale = (u + v) ** p
    return InequalityReport("fractional binomial bound", n_samples, float(np.min(gap / scale)), tol)


# ---------------------------------------------------------------------------
# moments of the collision operator on discrete measures

def povzner_pair(positions, k: float, params: ModelParams):
    """``(<Q, |.|^k>, -(1 - a^k - b^k) M_{k+γ} / 2)`` for an equal-weight measure.

    The left value is the exact double sum of the weak form over all pairs.
    """
    x = np.asarray(positions, dtype=float)
    a, b, g = params.a, params.b, params.gamma
    X, Y = x[:, None], x[None, :]
    kern = np.abs(X - Y) ** g if g > 0 else np.ones((x.size, x.size))
    delta = np.abs(a * X + b * Y) ** k + np.abs(b * X + a * Y) ** k - np.abs(X) ** k - np.abs(Y) ** k
    lhs = 0.5 * np.mean(kern * delta)
    rhs = -0.5 * params.dissipation_factor(k) * np.mean(np.abs(x) ** (k + g))
    return float(lhs), float(rhs)


def check_povzner(n_measures=1000, seed=0, ks=(2.0, 3.0, 4.0), gammas=(0.0, 0.5, 1.0, 2.0),
                  a_values=(0.1, 0.3, 0.5), max_atoms=12, tol=1e-12):
    """Sampled check of ``<Q, |.|^k> <= -(1 - a^k - b^k) M_{k+γ} / 2`` on centred measures."""
    rng = np.random.default_rng(seed)
    worst = np.inf
    count = 0
    for m in range(n_measures):
        n = int(rng.integers(2, max_atoms + 1))
        x = rng.standard_normal(n) * 10.0 ** rng.uniform(-1, 1)
        x -= x.mean()
        params = ModelParams(float(gammas[m % len(gammas)]), float(a_values[m % len(a_values)]))
        for k in ks:
            lhs, rhs = povzner_pair(x, k, params)
            worst = min(worst, rhs - lhs)
            count += 1
    return InequalityReport("moment inequality on discrete measures", count, float(worst), tol)


def run_inequality_suite(n_samples=100_000, n_measures=1000, seed=0) -> list[InequalityReport]:
    return [
        check_mixing_inequality(n_samples, seed),
        check_mixing_inequality(n_samples, seed, same_sign=True),
        check_b_gamma_bound(n_samples, seed + 1),
        check_beta_bound(n_samples, seed + 2),
        check_binomial_bound(n_samples, seed + 3),
        check_povzner(n_measures, seed + 4),
    ]
