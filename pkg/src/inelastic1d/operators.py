"""DG discretization of the collision operator and the self-similar drift.

The collision term is evaluated through its weak form

    <Q(g, g), v> = 1/2 ∬ g(x) g(y) |x - y|^γ [v(ax+by) + v(bx+ay) - v(x) - v(y)] dx dy

for every basis function ``v``.  On a uniform grid every quantity attached to
a source cell pair ``(i, j)`` depends only on ``d = i - j``: the kernel, the
reference coordinates of the sources and the *offset* (relative to ``j``) of
the cells receiving the two post-interaction points.  The workspace therefore
stores one quadrature table per ``d`` and contracts it once into small
``(K, K, K)`` tensors, one per ``(d, target offset)`` slot, ``K = degree+1``.

Two quadratures are available:

``"split"`` (default)
    Each source square is cut along the lines where ``ax+by`` or ``bx+ay``
    crosses a cell edge, and along ``x = y``.  On every piece the integrand is
    a polynomial times ``|x-y|^γ`` with a fixed sign of ``x-y``, so collapsed
    Gauss rules on a triangulation integrate it exactly for integer γ.
``"scatter"``
    Tensor Gauss nodes on the source square, each node's post-interaction
    points evaluated in whatever cell they land.  Cheaper to build, but the
    test functions jump inside the square so the rule is only first-order
    accurate there.

Both variants accumulate gain and loss at the same nodes, so mass and
momentum are annihilated to round-off whatever the quadrature error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import roots_jacobi
import scipy.sparse as sp

from ._kernels import contract_slots
from .core import (
    DGField,
    Grid,
    ModelParams,
    QuadratureRule,
    default_quadrature,
    gauss_legendre,
    legendre_derivatives,
    legendre_values,
)
from .errors import InvalidArgumentError

__all__ = [
    "CollisionWorkspace",
    "build_workspace",
    "collision_rhs",
    "drift_rhs",
    "rhs_total",
    "drift_matrix",
    "loss_frequency",
    "reflect",
    "is_even",
    "symmetrize",
    "DEFAULT_BYTE_BUDGET",
]

DEFAULT_BYTE_BUDGET = 1 << 30
BOUNDARIES = ("outflow", "wall")
_ALIGN_TOL = 1e-12
_AREA_TOL = 1e-14


# ---------------------------------------------------------------------------
# polygon helpers, coordinates scaled so that cells have unit width

def _split_polygon(poly, normal, offset):
    """Cut a convex polygon by ``normal . p = offset``; returns (below, above)."""
    dist = poly @ normal - offset
    below, above = [], []
    n = len(poly)
    for k in range(n):
        p, q = poly[k], poly[(k + 1) % n]
        dp, dq = dist[k], dist[(k + 1) % n]
        if dp <= 0:
            below.append(p)
        if dp >= 0:
            above.append(p)
        if (dp < 0 < dq) or (dq < 0 < dp):
            cut = p + (q - p) * (dp / (dp - dq))
            below.append(cut)
            above.append(cut)
    out = []
    for part in (below, above):
        part = np.array(part) if len(part) >= 3 else None
        if part is not None and _area(part) <= _AREA_TOL:
            part = None
        out.append(part)
    return out


def _area(poly):
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def _triangle_rule(n):
    """Collapsed Gauss rule on the unit right triangle, exact to degree 2n-2."""
    g = gauss_legendre(n)
    u = 0.5 * (g.nodes + 1.0)
    w = 0.5 * g.weights
    U, V = np.meshgrid(u, u, indexing="ij")
    W = np.outer(w, w) * U
    # Barycentric-style coordinates: p = v0 + U (v1 - v0) + U V (v2 - v1).
    return U.ravel(), V.ravel(), W.ravel()


def _polygon_nodes(poly, rule):
    """Quadrature nodes/weights on a convex polygon by fan triangulation."""
    U, V, W = rule
    xs, ws = [], []
    v0 = poly[0]
    for k in range(1, len(poly) - 1):
        v1, v2 = poly[k], poly[k + 1]
        area2 = abs((v1[0] - v0[0]) * (v2[1] - v0[1]) - (v1[1] - v0[1]) * (v2[0] - v0[0]))
        if area2 <= 2 * _AREA_TOL:
            continue
        pts = v0 + U[:, None] * (v1 - v0) + (U * V)[:, None] * (v2 - v1)
        xs.append(pts)
        ws.append(W * area2)
    return np.concatenate(xs), np.concatenate(ws)


def _interior_integer(lo):
    """The integer strictly inside ``(lo, lo + 1)``, or None if ``lo`` is integral."""
    n = math.floor(lo) + 1
    if abs(lo - round(lo)) < _ALIGN_TOL:
        return None
    return n


def _split_square(d, a, b):
    """Pieces of ``[d, d+1] x [0, 1]`` on which both targets stay in one cell."""
    polys = [np.array([[d, 0.0], [d + 1, 0.0], [d + 1, 1.0], [d, 1.0]], dtype=float)]
    cuts = []
    n1 = _interior_integer(a * d)
    if n1 is not None:
        cuts.append((np.array([a, b]), float(n1)))
    n2 = _interior_integer(b * d)
    if n2 is not None:
        cuts.append((np.array([b, a]), float(n2)))
    if d == 0:
        cuts.append((np.array([1.0, -1.0]), 0.0))
    for normal, offset in cuts:
        nxt = []
        for p in polys:
            nxt.extend(q for q in _split_polygon(p, normal, offset) if q is not None)
        polys = nxt
    return polys


# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CollisionWorkspace:
    """Precomputed quadrature tables of the collision operator.

    Node arrays are concatenated over all cell offsets ``d = i - j`` (source
    ``x`` in cell ``i``, source ``y`` in cell ``j``), with coordinates scaled
    by the cell width and measured from the left edge of cell ``j``.  The
    ``slot_*`` arrays hold the contracted tensors used at run time: slot ``s``
    adds ``sum_k u_k slot_T[s, k, :]`` with ``u = c[j + d] ⊗ c[j]`` to cell
    ``j + slot_o[s]``.  Pairs with ``d < 0`` are folded onto ``-d`` using the
    symmetry of the integrand, and slots are grouped by ``d`` through
    ``group_d`` / ``slot_ptr``.
    """

    grid: Grid
    degree: int
    gamma: float
    a: float
    method: str
    node_d: np.ndarray
    node_x: np.ndarray
    node_y: np.ndarray
    node_qw: np.ndarray
    node_kernel: np.ndarray
    node_off1: np.ndarray
    node_off2: np.ndarray
    slot_d: np.ndarray
    slot_o: np.ndarray
    slot_T: np.ndarray
    slot_ptr: np.ndarray
    group_d: np.ndarray
    freq_edge: np.ndarray
    freq_center: np.ndarray

    @property
    def b(self) -> float:
        return 1.0 - self.a

    @property
    def node_weight(self) -> np.ndarray:
        """Quadrature weight times kernel, ``w |x - y|^γ`` (physical units)."""
        return self.node_qw * self.node_kernel

    @property
    def nbytes(self) -> int:
        return sum(
            getattr(self, name).nbytes
            for name in self.__dataclass_fields__
            if isinstance(getattr(self, name), np.ndarray)
        )

    def targets(self):
        """Scaled post-interaction points ``(ax+by, bx+ay)`` for every node."""
        a, b = self.a, self.b
        x, y = self.node_x, self.node_y
        return a * x + b * y, b * x + a * y

    def pair_nodes(self, i: int, j: int) -> dict:
        """Node table of source pair ``(i, j)`` in physical coordinates."""
        n = self.grid.n_cells
        if not (0 <= i < n and 0 <= j < n):
            raise InvalidArgumentError(f"cell pair ({i}, {j}) outside grid")
        sel = self.node_d == i - j
        h = self.grid.dx
        left = self.grid.edges[j]
        t1, t2 = self.targets()
        return {
            "x": left + h * self.node_x[sel],
            "y": left + h * self.node_y[sel],
            "quad_weight": self.node_qw[sel],
            "kernel": self.node_kernel[sel],
            "target1": left + h * t1[sel],
            "target2": left + h * t2[sel],
            "target1_cell": j + self.node_off1[sel],
            "target2_cell": j + self.node_off2[sel],
        }

    def matches(self, field: DGField, params: ModelParams | None = None) -> bool:
        ok = field.grid == self.grid and field.degree == self.degree
        if params is not None:
            ok = ok and params.gamma == self.gamma and params.a == self.a
        return ok


def _square_nodes(d, a, b, method, rule):
    """Scaled nodes ``(x, y, w, off1, off2)`` for the source square at offset d."""
    if method == "split":
        xs, ws, o1, o2 = [], [], [], []
        for poly in _split_square(d, a, b):
            pts, w = _polygon_nodes(poly, rule)
            cx, cy = poly.mean(axis=0)
            xs.append(pts)
            ws.append(w)
            o1.append(np.full(len(w), math.floor(a * cx + b * cy)))
            o2.append(np.full(len(w), math.floor(b * cx + a * cy)))
        pts = np.concatenate(xs)
        return pts[:, 0], pts[:, 1], np.concatenate(ws), np.concatenate(o1), np.concatenate(o2)
    gx, gw = rule
    X, Y = np.meshgrid(d + gx, gx, indexing="ij")
    W = np.outer(gw, gw)
    x, y, w = X.ravel(), Y.ravel(), W.ravel()
    lo, hi = min(d, 0), max(d, 0)
    off1 = np.clip(np.floor(a * x + b * y), lo, hi)
    off2 = np.clip(np.floor(b * x + a * y), lo, hi)
    return x, y, w, off1, off2


def build_workspace(
    grid: Grid,
    degree: int,
    quad: QuadratureRule | None = None,
    params: ModelParams | None = None,
    *,
    method: str = "split",
    byte_budget: int = DEFAULT_BYTE_BUDGET,
) -> CollisionWorkspace:
    """Precompute the collision tables for a grid, degree and kernel.

    Parameters
    ----------
    quad : QuadratureRule, optional
        For ``method="scatter"`` the 1-D rule used on each side of the source
        square.  For ``method="split"`` its point count sets the collapsed
        triangle rule; by default that rule is exact for polynomials of
        degree ``3*degree + ceil(gamma)``.
    byte_budget : int
        Refuse to build tables whose estimated size exceeds this many bytes.
    """
    if params is None:
        raise InvalidArgumentError("build_workspace needs model parameters")
    if degree < 0:
        raise InvalidArgumentError(f"degree must be >= 0, got {degree}")
    if method not in ("split", "scatter"):
        raise InvalidArgumentError(f"unknown quadrature method {method!r}")
    N, K = grid.n_cells, degree + 1
    gamma, a, b = params.gamma, params.a, params.b
    h = grid.dx

    if method == "split":
        if quad is None:
            n_tri = math.ceil((3 * degree + math.ceil(gamma) + 2) / 2)
        else:
            n_tri = quad.n_points
        rule = _triangle_rule(n_tri)
        nodes_per_square = 7 * 3 * n_tri**2
        near_rule = rule if float(gamma).is_integer() else _triangle_rule(n_tri + 4)
    else:
        if quad is None:
            quad = default_quadrature(degree, gamma)
        rule = (0.5 * (quad.nodes + 1.0), 0.5 * quad.weights)
        nodes_per_square = quad.n_points**2
        near_rule = rule

    estimate = (2 * N - 1) * (nodes_per_square * 7 * 8 + 6 * K**3 * 8)
    if estimate > byte_budget:
        raise InvalidArgumentError(
            f"collision tables need about {estimate / 2**20:.0f} MiB, "
            f"over the budget of {byte_budget / 2**20:.0f} MiB"
        )

    norm = (2 * np.arange(K) + 1) / h
    cols = {k: [] for k in ("d", "x", "y", "w", "o1", "o2")}
    slots = {}
    for d in range(-(N - 1), N):
        x, y, w, o1, o2 = _square_nodes(d, a, b, method, near_rule if abs(d) <= 1 else rule)
        o1 = o1.astype(np.int64)
        o2 = o2.astype(np.int64)
        for key, val in zip(("d", "x", "y", "w", "o1", "o2"), (np.full(len(w), d), x, y, w, o1, o2)):
            cols[key].append(val)

        kern = (h * np.abs(x - y)) ** gamma if gamma > 0 else np.ones_like(x)
        weight = 0.5 * w * h * h * kern
        src = legendre_values(2 * (x - d) - 1, degree)[:, :, None] * legendre_values(2 * y - 1, degree)[:, None, :]
        src = src * weight[:, None, None]
        t1 = a * x + b * y
        t2 = b * x + a * y
        terms = (
            (o1, legendre_values(2 * (t1 - o1) - 1, degree), 1.0),
            (o2, legendre_values(2 * (t2 - o2) - 1, degree), 1.0),
            (np.full(len(w), d), legendre_values(2 * (x - d) - 1, degree), -1.0),
            (np.zeros(len(w), dtype=np.int64), legendre_values(2 * y - 1, degree), -1.0),
        )
        acc = {}
        for offs, phi, sign in terms:
            for o in np.unique(offs):
                sel = offs == o
                T = np.einsum("nab,nm->abm", src[sel], phi[sel]) * sign
                acc[int(o)] = acc.get(int(o), 0.0) + T
        for o, T in acc.items():
            if d < 0:
                # The integrand is symmetric in (x, y): the square (j + d, j)
                # is the square (j', j' - d) with j' = j + d and sources swapped.
                key, T = (-d, o - d), T.transpose(1, 0, 2)
            else:
                key = (d, o)
            slots[key] = slots.get(key, 0.0) + T * norm

    keys = sorted(slots)
    slot_d = [k[0] for k in keys]
    slot_o = [k[1] for k in keys]
    slot_T = [slots[k].reshape(K * K, K) for k in keys]
    grp_d, starts = np.unique(np.asarray(slot_d, dtype=np.int64), return_index=True)

    node = {k: np.concatenate(v) for k, v in cols.items()}
    node_kernel = (h * np.abs(node["x"] - node["y"])) ** gamma if gamma > 0 else np.ones_like(node["x"])
    freq_edge, freq_center = _loss_kernels(grid, degree, gamma)
    return CollisionWorkspace(
        grid=grid,
        degree=degree,
        gamma=gamma,
        a=a,
        method=method,
        node_d=node["d"].astype(np.int64),
        node_x=node["x"],
        node_y=node["y"],
        node_qw=node["w"] * h * h,
        node_kernel=node_kernel,
        node_off1=node["o1"],
        node_off2=node["o2"],
        slot_d=np.asarray(slot_d, dtype=np.int64),
        slot_o=np.asarray(slot_o, dtype=np.int64),
        slot_T=np.ascontiguousarray(np.array(slot_T)),
        slot_ptr=np.append(starts, len(keys)).astype(np.int64),
        group_d=grp_d,
        freq_edge=freq_edge,
        freq_center=freq_center,
    )


def _loss_kernels(grid: Grid, degree: int, gamma: float):
    """``∫_cell |ξ_p - y|^γ P_β`` for edges / centers at every relative offset.

    ``freq_edge[m + N, β]`` is the integral over a cell whose left edge lies
    ``m`` cells to the left of the evaluation edge; ``freq_center`` likewise
    for cell centers.
    """
    N, h = grid.n_cells, grid.dx
    quad = gauss_legendre(degree + math.ceil(gamma) + 4)
    singular = not float(gamma).is_integer()
    if singular:
        jx, jw = roots_jacobi(degree + 4, 0.0, gamma)

    def table(shift):
        out = np.zeros((2 * N + 1, degree + 1))
        for idx, m in enumerate(range(-N, N + 1)):
            p = m + shift  # evaluation point, scaled, relative to cell left edge
            pieces = [(0.0, 1.0)] if not (0.0 < p < 1.0) else [(0.0, p), (p, 1.0)]
            for lo, hi in pieces:
                if singular and p in (lo, hi):
                    # |p - y|^γ goes into the Gauss-Jacobi weight
                    r = 0.5 * (jx + 1.0) if p == lo else 0.5 * (1.0 - jx)
                    y = lo + (hi - lo) * r
                    kern_w = jw * (0.5 * (hi - lo)) ** (1.0 + gamma)
                else:
                    y, w = quad.on_interval(lo, hi)
                    kern_w = (np.abs(p - y) ** gamma if gamma > 0 else 1.0) * w
                out[idx] += kern_w @ legendre_values(2 * y - 1, degree)
        return out * h ** (1 + gamma)

    return table(0.0), table(0.5)


def loss_frequency(field: DGField, ws: CollisionWorkspace) -> np.ndarray:
    """``∫ g(y) |ξ - y|^γ dy`` at every edge followed by every cell center."""
    N = field.grid.n_cells
    c = field.coeffs
    edge = np.zeros(N + 1)
    center = np.zeros(N)
    for beta in range(field.degree + 1):
        # edge p sees cell j at relative offset p - j
        full = np.convolve(c[:, beta], ws.freq_edge[:, beta])
        edge += full[N: 2 * N + 1]
        fullc = np.convolve(c[:, beta], ws.freq_center[:, beta])
        center += fullc[N: 2 * N]
    return np.concatenate([edge, center])


def collision_rhs(field: DGField, params: ModelParams, ws: CollisionWorkspace) -> DGField:
    """DG coefficients of ``Q(g, g)`` (mass matrix already inverted)."""
    if not ws.matches(field, params):
        raise InvalidArgumentError("field / parameters do not match the collision workspace")
    out = np.zeros_like(field.coeffs)
    contract_slots(np.ascontiguousarray(field.coeffs), ws.group_d, ws.slot_ptr, ws.slot_o, ws.slot_T, out)
    return field.with_coeffs(out)


def drift_matrix(grid: Grid, degree: int, boundary: str = "outflow") -> sp.csr_matrix:
    """Sparse matrix of the upwind DG form of ``d/dξ (ξ g)`` for unit coefficient.

    Acts on coefficients flattened cell-major; the mass matrix is inverted.
    ``boundary="outflow"`` lets mass leave through ``±L`` with the interior
    trace; ``boundary="wall"`` sets the flux there to zero so that mass is
    conserved exactly on the truncated domain.
    """
    if boundary not in BOUNDARIES:
        raise InvalidArgumentError(f"boundary must be one of {BOUNDARIES}, got {boundary!r}")
    N, K, h = grid.n_cells, degree + 1, grid.dx
    quad = gauss_legendre(degree + 2)
    phi = legendre_values(quad.nodes, degree)
    dphi = legendre_derivatives(quad.nodes, degree)
    # volume: -∫ ξ g v_m' = -Σ_α c_α ∫ (ξ_j + h s/2) P_α P_m' ds
    A0 = np.einsum("q,qm,qa->ma", quad.weights, dphi, phi)
    A1 = np.einsum("q,q,qm,qa->ma", quad.weights, quad.nodes, dphi, phi)
    centers = grid.centers
    edges = grid.edges
    norm = (2 * np.arange(K) + 1) / h
    ones = np.ones(K)
    alt = (-1.0) ** np.arange(K)

    rows, cols, vals = [], [], []

    def add(block_r, block_c, M):
        r, c = np.nonzero(M)
        rows.append(block_r * K + r)
        cols.append(block_c * K + c)
        vals.append(M[r, c])

    for j in range(N):
        add(j, j, -(centers[j] * A0 + 0.5 * h * A1))
    # edge e between cells j-1 and j (e = 0..N); flux ξ_e g_upwind
    for e in range(N + 1):
        xe = edges[e]
        if xe >= 0:
            src, trace = (e - 1, ones) if e > 0 else (0, alt)
        else:
            src, trace = (e, alt) if e < N else (N - 1, ones)
        if boundary == "wall" and e in (0, N):
            continue
        flux = xe * trace  # flux = flux_row . c[src]
        if e > 0:  # right edge of cell e-1: + F v_m(1)
            add(e - 1, src, np.outer(ones, flux))
        if e < N:  # left edge of cell e: - F v_m(-1)
            add(e, src, -np.outer(alt, flux))
    M = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(N * K, N * K)
    ).tocsr()
    return sp.diags(np.tile(norm, N)) @ M


_DRIFT_CACHE: dict = {}


def _cached_drift(grid: Grid, degree: int, boundary: str) -> sp.csr_matrix:
    key = (grid, degree, boundary)
    if key not in _DRIFT_CACHE:
        if len(_DRIFT_CACHE) > 16:
            _DRIFT_CACHE.clear()
        _DRIFT_CACHE[key] = drift_matrix(grid, degree, boundary)
    return _DRIFT_CACHE[key]


def drift_rhs(field: DGField, params: ModelParams, boundary: str = "outflow") -> DGField:
    """DG coefficients of ``c d/dξ (ξ g)`` with the upwind flux.

    The flux takes the left trace where ``ξ >= 0`` and the right trace where
    ``ξ < 0``; at ``±L`` this is the interior trace (outflow) unless
    ``boundary="wall"``.
    """
    D = _cached_drift(field.grid, field.degree, boundary)
    out = params.drift_coeff * (D @ field.coeffs.ravel())
    return field.with_coeffs(out)


def rhs_total(
    field: DGField, params: ModelParams, ws: CollisionWorkspace, boundary: str = "outflow"
) -> DGField:
    """Right-hand side of ``∂_s g = Q(g, g) - c ∂_ξ(ξ g)``."""
    q = collision_rhs(field, params, ws).coeffs
    if params.drift_coeff == 0.0:
        return field.with_coeffs(q)
    return field.with_coeffs(q - drift_rhs(field, params, boundary).coeffs)


def reflect(field: DGField) -> DGField:
    """The mirror image ``g(-ξ)``; cells reverse and odd coefficients flip sign."""
    sign = (-1.0) ** np.arange(field.degree + 1)
    return field.with_coeffs(field.coeffs[::-1] * sign)


def is_even(field: DGField, rtol: float = 1e-12) -> bool:
    c = field.coeffs
    scale = np.max(np.abs(c)) if c.size else 0.0
    return bool(np.max(np.abs(c - reflect(field).coeffs), initial=0.0) <= rtol * scale)


def symmetrize(field: DGField) -> DGField:
    """Even part ``(g(ξ) + g(-ξ)) / 2``."""
    return field.with_coeffs(0.5 * (field.coeffs + reflect(field).coeffs))
