"""Model parameters, uniform grids, Legendre DG fields and quadrature.

Every field lives on a uniform partition of ``[-L, L]`` and is stored as a
``(n_cells, degree + 1)`` array of Legendre coefficients against
``P_m(2 (xi - xi_j) / dx)`` on each cell.  With this scaling the mass matrix
is diagonal, ``int_{I_j} P_m P_n = dx / (2m + 1) * delta_mn``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np
from numpy.polynomial import legendre as npleg
from scipy.special import roots_jacobi

from .errors import InvalidArgumentError, OutOfDomainError

__all__ = [
    "ModelParams",
    "Grid",
    "QuadratureRule",
    "gauss_legendre",
    "default_quadrature",
    "DGField",
    "MomentRecord",
    "legendre_values",
    "legendre_derivatives",
    "project_initial",
    "eval_field",
    "field_moments",
    "field_momentum",
    "cell_average",
]


@dataclass(frozen=True)
class ModelParams:
    """Physical parameters of the interaction model.

    Parameters
    ----------
    gamma : float
        Kernel exponent, interactions happen at rate ``|x - y|**gamma``.
    a : float
        Mixing weight, post-interaction states are ``(a x + b y, b x + a y)``.
    drift_coeff : float, optional
        Coefficient ``c`` of the self-similar drift ``c d/dxi (xi g)``.
        Defaults to ``a * b`` when ``gamma == 0`` (the only value with a
        finite-energy steady profile) and to 1 otherwise.  ``0`` selects the
        unscaled equation.
    """

    gamma: float
    a: float
    drift_coeff: float | None = None

    def __post_init__(self):
        if not (0.0 < self.a < 1.0):
            raise InvalidArgumentError(f"a must satisfy a ∈ (0,1), got a={self.a}")
        if not (self.gamma >= 0.0 and math.isfinite(self.gamma)):
            raise InvalidArgumentError(f"gamma must be finite and >= 0, got {self.gamma}")
        c = self.drift_coeff
        if c is None:
            c = self.a * (1.0 - self.a) if self.gamma == 0 else 1.0
        if not (c >= 0.0 and math.isfinite(c)):
            raise InvalidArgumentError(f"drift_coeff must be finite and >= 0, got {c}")
        object.__setattr__(self, "gamma", float(self.gamma))
        object.__setattr__(self, "a", float(self.a))
        object.__setattr__(self, "drift_coeff", float(c))

    @property
    def b(self) -> float:
        return 1.0 - self.a

    def dissipation_factor(self, k: float) -> float:
        """``1 - a**k - b**k``, positive for every k > 1."""
        return 1.0 - self.a**k - self.b**k

    def with_drift(self, c: float) -> "ModelParams":
        return ModelParams(self.gamma, self.a, c)


@dataclass(frozen=True)
class Grid:
    """Uniform partition of ``[-half_width, half_width]`` into ``n_cells`` cells."""

    half_width: float
    n_cells: int

    def __post_init__(self):
        if not (self.half_width > 0 and math.isfinite(self.half_width)):
            raise InvalidArgumentError(f"half_width must be positive, got {self.half_width}")
        if int(self.n_cells) != self.n_cells or self.n_cells < 1:
            raise InvalidArgumentError(f"n_cells must be a positive integer, got {self.n_cells}")
        object.__setattr__(self, "half_width", float(self.half_width))
        object.__setattr__(self, "n_cells", int(self.n_cells))

    @property
    def dx(self) -> float:
        return 2.0 * self.half_width / self.n_cells

    @property
    def edges(self) -> np.ndarray:
        # Built from integer offsets so the grid is exactly symmetric about 0.
        j = np.arange(self.n_cells + 1) - 0.5 * self.n_cells
        return j * self.dx

    @property
    def centers(self) -> np.ndarray:
        e = self.edges
        return 0.5 * (e[:-1] + e[1:])

    def cell_of(self, xi, trace: str | None = None) -> np.ndarray:
        """Index of the cell containing each point.

        Points on an interior edge belong to the left cell for
        ``trace="left"`` and to the right cell for ``trace="right"``; with
        ``trace=None`` they raise.  The outer edges always map to the
        adjacent interior cell.
        """
        xi = np.asarray(xi, dtype=float)
        L = self.half_width
        if np.any(~np.isfinite(xi)) or np.any(np.abs(xi) > L * (1 + 1e-14)):
            raise OutOfDomainError(f"point outside [-{L}, {L}]")
        u = (xi + L) / self.dx
        j = np.floor(u).astype(np.int64)
        on_edge = (u == j) & (j > 0) & (j < self.n_cells)
        if np.any(on_edge):
            if trace is None:
                raise InvalidArgumentError(
                    "point lies on an interior cell edge; pass trace='left' or 'right'"
                )
            if trace == "left":
                j = np.where(on_edge, j - 1, j)
            elif trace != "right":
                raise InvalidArgumentError(f"trace must be 'left' or 'right', got {trace!r}")
        return np.clip(j, 0, self.n_cells - 1)

    def to_reference(self, xi, cell) -> np.ndarray:
        """Map physical points to the reference coordinate of ``cell``."""
        return 2.0 * (np.asarray(xi, dtype=float) - self.centers[cell]) / self.dx


@dataclass(frozen=True)
class QuadratureRule:
    """Quadrature on ``[-1, 1]`` exact for polynomials up to ``order``."""

    nodes: np.ndarray
    weights: np.ndarray
    order: int

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        if nodes.shape != weights.shape or nodes.ndim != 1 or nodes.size == 0:
            raise InvalidArgumentError("nodes and weights must be equal-length 1-D arrays")
        if np.any(weights <= 0):
            raise InvalidArgumentError("quadrature weights must be positive")
        nodes.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)

    @property
    def n_points(self) -> int:
        return self.nodes.size

    def on_interval(self, lo, hi):
        """Nodes and weights mapped onto ``[lo, hi]`` (broadcasts over arrays)."""
        lo = np.asarray(lo, dtype=float)[..., None]
        hi = np.asarray(hi, dtype=float)[..., None]
        half = 0.5 * (hi - lo)
        return lo + half * (self.nodes + 1.0), half * self.weights


def gauss_legendre(n_points: int) -> QuadratureRule:
    """Gauss-Legendre rule with ``n_points`` nodes (exact to degree 2n-1)."""
    if n_points < 1:
        raise InvalidArgumentError(f"n_points must be >= 1, got {n_points}")
    x, w = npleg.leggauss(int(n_points))
    return QuadratureRule(x, w, 2 * int(n_points) - 1)


def default_quadrature(degree: int, gamma: float = 0.0) -> QuadratureRule:
    """Per-cell rule with ``ceil(gamma) + 2 degree + 2`` points."""
    return gauss_legendre(max(2 * degree + 2, math.ceil(gamma) + 2 * degree + 2))


def legendre_values(s, degree: int) -> np.ndarray:
    """``P_0 .. P_degree`` at reference points, shape ``s.shape + (degree+1,)``."""
    return npleg.legvander(np.asarray(s, dtype=float), degree)


def legendre_derivatives(s, degree: int) -> np.ndarray:
    """``P_m'(s)`` for ``m = 0 .. degree``."""
    s = np.asarray(s, dtype=float)
    out = np.zeros(s.shape + (degree + 1,))
    for m in range(1, degree + 1):
        cm = np.zeros(m + 1)
        cm[m] = 1.0
        out[..., m] = npleg.legval(s, npleg.legder(cm))
    return out


@dataclass(frozen=True)
class DGField:
    """Piecewise-polynomial density on a uniform grid.

    ``coeffs[j, m]`` multiplies ``P_m`` on cell ``j``; ``coeffs[j, 0]`` is
    the cell average.
    """

    grid: Grid
    degree: int
    coeffs: np.ndarray

    def __post_init__(self):
        if self.degree < 0:
            raise InvalidArgumentError(f"degree must be >= 0, got {self.degree}")
        c = np.array(self.coeffs, dtype=float, copy=True)
        expected = (self.grid.n_cells, self.degree + 1)
        if c.size != expected[0] * expected[1]:
            raise InvalidArgumentError(
                f"expected {expected[0] * expected[1]} coefficients, got {c.size}"
            )
        c = c.reshape(expected)
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def zeros(cls, grid: Grid, degree: int) -> "DGField":
        return cls(grid, degree, np.zeros((grid.n_cells, degree + 1)))

    def with_coeffs(self, coeffs) -> "DGField":
        return DGField(self.grid, self.degree, coeffs)

    def same_space(self, other: "DGField") -> bool:
        return self.grid == other.grid and self.degree == other.degree

    @property
    def n_dofs(self) -> int:
        return self.coeffs.size

    def traces(self):
        """Left and right limits at every edge (outer edges use the interior side).

        Returns
        -------
        minus, plus : ndarray, shape (n_cells + 1,)
        """
        ones = np.ones(self.degree + 1)
        alt = (-1.0) ** np.arange(self.degree + 1)
        right_end = self.coeffs @ ones
        left_end = self.coeffs @ alt
        minus = np.concatenate([[left_end[0]], right_end])
        plus = np.concatenate([left_end, [right_end[-1]]])
        return minus, plus


@dataclass
class MomentRecord:
    """Moments ``M_p = int |xi|^p g`` at one time.

    ``rescaled`` tells whether ``time`` is the self-similar time ``s``
    or the original time ``t``.
    """

    time: float
    moments: dict = dc_field(default_factory=dict)
    rescaled: bool = False
    momentum: float | None = None
    residual: float | None = None

    @property
    def energy(self) -> float:
        return self.moments[2.0]

    def __getitem__(self, p) -> float:
        return self.moments[float(p)]


def _split_intervals(lo: float, hi: float, cuts: Iterable[float]) -> list[tuple[float, float]]:
    pts = sorted({lo, hi, *[c for c in cuts if lo < c < hi]})
    return list(zip(pts[:-1], pts[1:]))


def project_initial(
    profile: Callable[[np.ndarray], np.ndarray],
    grid: Grid,
    degree: int,
    quad: QuadratureRule | None = None,
    breakpoints: Sequence[float] = (),
) -> DGField:
    """L2 projection of ``profile`` onto piecewise Legendre polynomials.

    ``breakpoints`` lists known discontinuities of the profile; cells that
    contain one are integrated piecewise so that the cell moments of a
    piecewise-smooth profile are reproduced to quadrature precision.
    """
    if degree < 0:
        raise InvalidArgumentError(f"degree must be >= 0, got {degree}")
    if quad is None:
        quad = default_quadrature(degree)
    edges = grid.edges
    centers = grid.centers
    dx = grid.dx
    cuts = np.asarray(sorted(breakpoints), dtype=float)
    coeffs = np.zeros((grid.n_cells, degree + 1))
    norm = (2 * np.arange(degree + 1) + 1) / dx

    # Cells without a breakpoint are handled in one vectorized pass.
    has_cut = np.zeros(grid.n_cells, dtype=bool)
    if cuts.size:
        inside = (cuts[None, :] > edges[:-1, None]) & (cuts[None, :] < edges[1:, None])
        has_cut = inside.any(axis=1)
    plain = np.flatnonzero(~has_cut)
    if plain.size:
        x, w = quad.on_interval(edges[plain], edges[plain + 1])
        vals = np.asarray(profile(x), dtype=float)
        phi = legendre_values(quad.nodes, degree)
        coeffs[plain] = np.einsum("jq,q,qm->jm", vals, quad.weights, phi) * (dx / 2)
    for j in np.flatnonzero(has_cut):
        for lo, hi in _split_intervals(edges[j], edges[j + 1], cuts):
            x, w = quad.on_interval(lo, hi)
            s = 2.0 * (x - centers[j]) / dx
            coeffs[j] += (np.asarray(profile(x), dtype=float) * w) @ legendre_values(s, degree)
    return DGField(grid, degree, coeffs * norm)


def eval_field(field: DGField, xi, trace: str | None = None):
    """Evaluate the DG field; scalar input gives a float.

    At an interior edge the caller must pick ``trace="left"`` or
    ``trace="right"``.
    """
    grid = field.grid
    scalar = np.ndim(xi) == 0
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    j = grid.cell_of(xi, trace)
    s = grid.to_reference(xi, j)
    vals = np.einsum("pm,pm->p", legendre_values(s, field.degree), field.coeffs[j])
    return float(vals[0]) if scalar else vals


def cell_average(field: DGField) -> np.ndarray:
    return field.coeffs[:, 0].copy()


def _moment_quadrature(grid: Grid, degree: int, p: float):
    """Cells, nodes and weights with ``|xi|^p`` folded into the weights.

    Intervals with an endpoint at the origin use Gauss-Jacobi rules whose
    weight is exactly ``|xi|^p``, so non-smooth powers are integrated to
    round-off there; elsewhere ``|xi|^p`` is smooth and plain Gauss is used.
    """
    n = max(degree + 2, int(math.ceil(p) + degree + 2) // 2 + 1)
    if not float(p).is_integer():
        n += 10  # |xi|^p is not a polynomial away from the origin either
    edges = grid.edges
    lo, hi = edges[:-1].copy(), edges[1:].copy()
    cells = np.arange(grid.n_cells)
    # A cell straddling 0 (odd n_cells) is integrated on both halves.
    straddle = np.flatnonzero((lo < 0) & (hi > 0))
    if straddle.size:
        j = straddle[0]
        lo = np.concatenate([lo, [0.0]])
        hi = np.concatenate([hi, [hi[j]]])
        hi[j] = 0.0
        cells = np.concatenate([cells, [j]])
    quad = gauss_legendre(n)
    x, w = quad.on_interval(lo, hi)
    w = w * np.abs(x) ** p
    smooth = float(p).is_integer() and int(p) % 2 == 0
    if not smooth:
        t, wj = roots_jacobi(n, 0.0, p)  # weight (1 + t)^p on [-1, 1]
        for r in np.flatnonzero((lo == 0.0) | (hi == 0.0)):
            length = hi[r] - lo[r]
            u = 0.5 * length * (1.0 + t)  # distance from the origin
            x[r] = u if lo[r] == 0.0 else -u
            w[r] = wj * (0.5 * length) ** (p + 1)
    return cells, x, w


def field_moments(
    field: DGField,
    orders: Sequence[float] = (0, 1, 2),
    time: float = 0.0,
    rescaled: bool = False,
) -> MomentRecord:
    """Moments ``int |xi|^p g(xi) dxi`` by per-cell Gauss quadrature.

    ``M_0`` is taken from the cell averages, which is exact.  The momentum
    ``int xi g`` is attached to the record as well.
    """
    grid = field.grid
    out = {}
    for p in orders:
        p = float(p)
        if not (p >= 0 and math.isfinite(p)):
            raise InvalidArgumentError(f"moment orders must be >= 0, got {p}")
        if p == 0.0:
            out[p] = float(field.coeffs[:, 0].sum() * grid.dx)
            continue
        cells, x, w = _moment_quadrature(grid, field.degree, p)
        s = 2.0 * (x - grid.centers[cells, None]) / grid.dx
        g = np.einsum("cqm,cm->cq", legendre_values(s, field.degree), field.coeffs[cells])
        out[p] = float(np.sum(g * w))
    return MomentRecord(time=time, moments=out, rescaled=rescaled, momentum=field_momentum(field))


def field_momentum(field: DGField) -> float:
    """``int xi g`` in closed form from the P0 and P1 coefficients."""
    c = field.coeffs
    grid = field.grid
    m = grid.centers * c[:, 0] * grid.dx
    if field.degree >= 1:
        m = m + c[:, 1] * grid.dx**2 / 6.0
    return float(m.sum())


def moments_of(field: DGField, orders: Iterable[float]) -> Mapping[float, float]:
    return field_moments(field, tuple(orders)).moments
