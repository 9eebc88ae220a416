"""Tensor calculus on uniformly sampled rectangular charts.

Fields store their values node-major, ``values[i, j, ...]`` at
``(u[i], v[j])``, and carry the grid they were sampled on.  Index conventions:
a metric is ``g[..., i, j]``, a (1,1)-tensor is ``B[..., k, j] = B^k_j`` (so
``B`` acting on a column vector is a matrix product) and Christoffel symbols
are ``gamma[..., k, i, j] = Gamma^k_{ij}``.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

TOL_SYM = 1e-9
TOL_ROOT = 1e-9
MIN_NODES = 5
EDGE_MARGIN = 2

# first-derivative stencils: (offsets, weights) for order 2 and 4
_CENTRAL = {
    2: (np.array([-1, 1]), np.array([-0.5, 0.5])),
    4: (np.array([-2, -1, 1, 2]), np.array([1.0, -8.0, 8.0, -1.0]) / 12.0),
}
_FORWARD = {
    2: [np.array([-1.5, 2.0, -0.5])],
    4: [np.array([-25.0, 48.0, -36.0, 16.0, -3.0]) / 12.0,
        np.array([-3.0, -10.0, 18.0, -6.0, 1.0]) / 12.0],
}
# second-derivative stencils
_CENTRAL2 = {
    2: (np.array([-1, 0, 1]), np.array([1.0, -2.0, 1.0])),
    4: (np.array([-2, -1, 0, 1, 2]), np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / 12.0),
}
_FORWARD2 = {
    2: [np.array([2.0, -5.0, 4.0, -1.0])],
    4: [np.array([45.0, -154.0, 214.0, -156.0, 61.0, -10.0]) / 12.0,
        np.array([10.0, -15.0, -4.0, 14.0, -6.0, 1.0]) / 12.0],
}


class GridMismatchError(ValueError):
    """Fields sampled on different grids were combined."""


class SingularMetricError(ValueError):
    """A metric (or pulled-back form) is not positive definite at some node."""


@dataclass(frozen=True)
class ChartGrid:
    u_min: float
    u_max: float
    v_min: float
    v_max: float
    n_u: int
    n_v: int

    def __post_init__(self):
        if self.n_u < MIN_NODES or self.n_v < MIN_NODES:
            raise ValueError(f"chart needs at least {MIN_NODES} nodes per axis")
        if not (self.u_max > self.u_min and self.v_max > self.v_min):
            raise ValueError("chart extents must be increasing")

    @classmethod
    def square(cls, extent: float, spacing: float) -> ChartGrid:
        """The chart [-extent, extent]^2 with the given node spacing."""
        n = int(round(2 * extent / spacing)) + 1
        return cls(-extent, extent, -extent, extent, n, n)

    @property
    def h_u(self) -> float:
        return (self.u_max - self.u_min) / (self.n_u - 1)

    @property
    def h_v(self) -> float:
        return (self.v_max - self.v_min) / (self.n_v - 1)

    @property
    def spacing(self) -> tuple[float, float]:
        return self.h_u, self.h_v

    @property
    def shape(self) -> tuple[int, int]:
        return self.n_u, self.n_v

    @property
    def u(self) -> np.ndarray:
        return np.linspace(self.u_min, self.u_max, self.n_u)

    @property
    def v(self) -> np.ndarray:
        return np.linspace(self.v_min, self.v_max, self.n_v)

    def points(self) -> np.ndarray:
        uu, vv = np.meshgrid(self.u, self.v, indexing="ij")
        return np.stack([uu, vv], axis=-1)

    def interior_mask(self, margin: int = 2) -> np.ndarray:
        mask = np.zeros(self.shape, dtype=bool)
        mask[margin:self.n_u - margin, margin:self.n_v - margin] = True
        return mask

    def refined(self) -> ChartGrid:
        """Same chart with halved spacing (every old node is kept)."""
        return ChartGrid(self.u_min, self.u_max, self.v_min, self.v_max, 2 * self.n_u - 1, 2 * self.n_v - 1)

    def nearest_node(self, x) -> tuple[int, int]:
        i = int(round((x[0] - self.u_min) / self.h_u))
        j = int(round((x[1] - self.v_min) / self.h_v))
        return min(max(i, 0), self.n_u - 1), min(max(j, 0), self.n_v - 1)

    def center_node(self) -> tuple[int, int]:
        return self.nearest_node((0.5 * (self.u_min + self.u_max), 0.5 * (self.v_min + self.v_max)))

    def to_json(self) -> dict:
        return {"u_min": self.u_min, "u_max": self.u_max, "v_min": self.v_min, "v_max": self.v_max,
                "n_u": self.n_u, "n_v": self.n_v, "h_u": self.h_u, "h_v": self.h_v}


@dataclass(frozen=True, eq=False)
class Field:
    """Values sampled on a :class:`ChartGrid`."""

    grid: ChartGrid
    values: np.ndarray

    value_shape: tuple | None = None

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.shape[:2] != self.grid.shape:
            raise GridMismatchError(f"values of shape {vals.shape} do not match grid {self.grid.shape}")
        if self.value_shape is not None and vals.shape[2:] != tuple(self.value_shape):
            raise ValueError(f"expected node values of shape {self.value_shape}, got {vals.shape[2:]}")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def same_grid(self, other: Field) -> None:
        if self.grid != other.grid:
            raise GridMismatchError("fields live on different grids")

    def interior(self, margin: int = 2) -> np.ndarray:
        return self.values[self.grid.interior_mask(margin)]

    def to_csv(self, path) -> None:
        """One row per node: u, v, components, and an ``edge`` flag for nodes within 2 cells of the boundary."""
        pts = self.grid.points().reshape(-1, 2)
        comps = self.values.reshape(pts.shape[0], -1)
        edge = (~self.grid.interior_mask(EDGE_MARGIN)).reshape(-1)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["u", "v"] + [f"c{k}" for k in range(comps.shape[1])] + ["edge"])
            for p, c, e in zip(pts, comps, edge):
                w.writerow([f"{x:.12g}" for x in (*p, *c)] + [int(e)])

    def header(self) -> str:
        return json.dumps({"grid": self.grid.to_json(), "kind": type(self).__name__,
                           "value_shape": list(self.values.shape[2:]), "edge_margin": EDGE_MARGIN})


def read_csv_field(path) -> tuple[ChartGrid, np.ndarray]:
    """Grid and node values from a CSV with columns u, v and value components (``edge`` ignored).

    Rows may come in any order but must cover a full rectangular grid.
    """
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2:
        raise ValueError("empty field file")
    head = [h.strip() for h in rows[0]]
    if head[:2] != ["u", "v"]:
        raise ValueError("field CSV must start with columns u, v")
    cols = [k for k, h in enumerate(head) if k >= 2 and h != "edge"]
    data = np.array([[float(r[k]) for k in [0, 1] + cols] for r in rows[1:]])
    u, v = np.unique(data[:, 0]), np.unique(data[:, 1])
    if len(u) * len(v) != len(data):
        raise ValueError("field CSV does not cover a rectangular grid")
    grid = ChartGrid(float(u[0]), float(u[-1]), float(v[0]), float(v[-1]), len(u), len(v))
    if np.max(np.abs(np.diff(u) - grid.h_u)) > 1e-9 * max(1.0, abs(grid.h_u)) or \
            np.max(np.abs(np.diff(v) - grid.h_v)) > 1e-9 * max(1.0, abs(grid.h_v)):
        raise ValueError("field CSV nodes are not uniformly spaced")
    iu = np.searchsorted(u, data[:, 0])
    iv = np.searchsorted(v, data[:, 1])
    values = np.empty((len(u), len(v), len(cols)))
    values[iu, iv] = data[:, 2:]
    return grid, values


class ScalarField(Field):
    def __init__(self, grid, values):
        super().__init__(grid, values, ())


class VectorField(Field):
    def __init__(self, grid, values):
        super().__init__(grid, values, (2,))


class TensorField(Field):
    """A (1,1)-tensor ``B^k_j`` per node."""

    def __init__(self, grid, values):
        super().__init__(grid, values, (2, 2))


class ChristoffelField(Field):
    """Christoffel symbols ``Gamma^k_{ij}`` per node, stored as ``[k, i, j]``."""

    def __init__(self, grid, values):
        super().__init__(grid, values, (2, 2, 2))


class MetricField(TensorField):
    """A symmetric positive definite 2-tensor per node."""

    def __post_init__(self):
        super().__post_init__()
        g = self.values
        if np.max(np.abs(g - np.swapaxes(g, -1, -2))) > TOL_SYM * max(1.0, float(np.max(np.abs(g)))):
            raise ValueError("metric is not symmetric")
        if np.any(g[..., 0, 0] <= 0) or np.any(np.linalg.det(g) <= 0):
            raise SingularMetricError("metric is not positive definite at some node")


def _axis(direction) -> int:
    if direction in (0, "u"):
        return 0
    if direction in (1, "v"):
        return 1
    raise ValueError(f"unknown direction {direction!r}")


def _stencil(a, axis, central, edges, odd):
    """Central stencil in the interior, one-sided stencils mirrored at both ends."""
    a = np.moveaxis(np.asarray(a, dtype=float), axis, 0)
    n = a.shape[0]
    offsets, weights = central
    w = int(np.max(np.abs(offsets)))
    if n < max(len(e) for e in edges) or n < 2 * w + 1:
        raise ValueError("grid too small for the stencil")
    out = np.zeros_like(a)
    for o, c in zip(offsets, weights):
        out[w:n - w] += c * a[w + o:n - w + o]
    mirror = -1.0 if odd else 1.0
    for i, e in enumerate(edges):
        idx = np.arange(len(e))
        out[i] = np.tensordot(e, a[idx], axes=(0, 0))
        out[n - 1 - i] = mirror * np.tensordot(e, a[n - 1 - idx], axes=(0, 0))
    return np.moveaxis(out, 0, axis)


def diff(a, axis: int, h: float, order: int = 2) -> np.ndarray:
    """First derivative of a node-major array along ``axis``."""
    if order not in _CENTRAL:
        raise ValueError("order must be 2 or 4")
    return _stencil(a, axis, _CENTRAL[order], _FORWARD[order], odd=True) / h


def diff2(a, axis: int, h: float, order: int = 2) -> np.ndarray:
    """Second derivative along one axis with narrow dedicated stencils."""
    if order not in _CENTRAL2:
        raise ValueError("order must be 2 or 4")
    return _stencil(a, axis, _CENTRAL2[order], _FORWARD2[order], odd=False) / (h * h)


def fd_derivative(field: Field, direction, order: int = 2) -> Field:
    """Partial derivative of a field along ``u`` (0) or ``v`` (1).

    Central differences in the interior, one-sided stencils of the same order
    at the two nodes (one for order 2) nearest each edge.
    """
    axis = _axis(direction)
    h = field.grid.spacing[axis]
    return Field(field.grid, diff(field.values, axis, h, order))


def fd_second(field: Field, d1, d2, order: int = 2) -> Field:
    a1, a2 = _axis(d1), _axis(d2)
    hu, hv = field.grid.spacing
    if a1 == a2:
        return Field(field.grid, diff2(field.values, a1, (hu, hv)[a1], order))
    return Field(field.grid, diff(diff(field.values, 0, hu, order), 1, hv, order))


def grad_array(a, grid: ChartGrid, order: int = 2) -> np.ndarray:
    """Stack of (d/du, d/dv) of a node-major array along a new axis placed after the node axes."""
    hu, hv = grid.spacing
    return np.stack([diff(a, 0, hu, order), diff(a, 1, hv, order)], axis=2)


def _inv2(m):
    det = m[..., 0, 0] * m[..., 1, 1] - m[..., 0, 1] * m[..., 1, 0]
    inv = np.empty_like(m)
    inv[..., 0, 0] = m[..., 1, 1]
    inv[..., 1, 1] = m[..., 0, 0]
    inv[..., 0, 1] = -m[..., 0, 1]
    inv[..., 1, 0] = -m[..., 1, 0]
    return inv / det[..., None, None]


def _det2(m):
    return m[..., 0, 0] * m[..., 1, 1] - m[..., 0, 1] * m[..., 1, 0]


def christoffel_from_derivatives(g, dg) -> np.ndarray:
    """Levi-Civita symbols from a metric and its derivatives ``dg[..., l, i, j] = d_l g_ij``."""
    g = np.asarray(g, dtype=float)
    if np.any(_det2(g) <= 0):
        raise SingularMetricError("metric is singular at some node")
    t = (np.einsum("...ijl->...lij", dg) + np.einsum("...jil->...lij", dg) - dg)
    return 0.5 * np.einsum("...kl,...lij->...kij", _inv2(g), t)


def christoffel(g: MetricField, order: int = 2) -> ChristoffelField:
    """Gamma^k_ij = 1/2 g^kl (d_i g_jl + d_j g_il - d_l g_ij) with finite-difference derivatives."""
    dg = grad_array(g.values, g.grid, order)
    return ChristoffelField(g.grid, christoffel_from_derivatives(g.values, dg))


def brioschi(E, F, G, Eu, Ev, Fu, Fv, Gu, Gv, Evv, Fuv, Guu):
    """Gaussian curvature from the coefficients of a metric and their derivatives."""
    m1 = np.empty(np.shape(E) + (3, 3))
    m1[..., 0, 0] = -0.5 * Evv + Fuv - 0.5 * Guu
    m1[..., 0, 1] = 0.5 * Eu
    m1[..., 0, 2] = Fu - 0.5 * Ev
    m1[..., 1, 0] = Fv - 0.5 * Gu
    m1[..., 1, 1] = E
    m1[..., 1, 2] = F
    m1[..., 2, 0] = 0.5 * Gv
    m1[..., 2, 1] = F
    m1[..., 2, 2] = G
    m2 = np.zeros_like(m1)
    m2[..., 0, 1] = m2[..., 1, 0] = 0.5 * Ev
    m2[..., 0, 2] = m2[..., 2, 0] = 0.5 * Gu
    m2[..., 1, 1] = E
    m2[..., 1, 2] = m2[..., 2, 1] = F
    m2[..., 2, 2] = G
    return (np.linalg.det(m1) - np.linalg.det(m2)) / (E * G - F * F) ** 2


def gauss_curvature_array(g, grid: ChartGrid, order: int = 2) -> np.ndarray:
    g = np.asarray(g, dtype=float)
    if np.any(_det2(g) <= 0):
        raise SingularMetricError("metric is singular at some node")
    hu, hv = grid.spacing
    E, F, G = g[..., 0, 0], g[..., 0, 1], g[..., 1, 1]
    return brioschi(
        E, F, G,
        diff(E, 0, hu, order), diff(E, 1, hv, order),
        diff(F, 0, hu, order), diff(F, 1, hv, order),
        diff(G, 0, hu, order), diff(G, 1, hv, order),
        diff2(E, 1, hv, order), diff(diff(F, 0, hu, order), 1, hv, order), diff2(G, 0, hu, order),
    )


def gauss_curvature(g: MetricField, order: int = 2) -> ScalarField:
    """Gaussian curvature of a sampled metric (Brioschi formula)."""
    return ScalarField(g.grid, gauss_curvature_array(g.values, g.grid, order))


def codazzi_vector(gamma, B, dB) -> np.ndarray:
    """Components of d^nabla B(d_u, d_v) = nabla_u(B d_v) - nabla_v(B d_u).

    ``dB[..., l, k, j]`` is the coordinate derivative ``d_l B^k_j``; the Lie
    bracket of coordinate fields vanishes so no bracket term appears.
    """
    w = dB[..., 0, :, 1] - dB[..., 1, :, 0]
    w = w + np.einsum("...kl,...l->...k", gamma[..., :, 0, :], B[..., :, 1])
    w = w - np.einsum("...kl,...l->...k", gamma[..., :, 1, :], B[..., :, 0])
    return w


def codazzi_norm(g, gamma, B, dB) -> np.ndarray:
    w = codazzi_vector(gamma, B, dB)
    return np.sqrt(np.clip(np.einsum("...i,...ij,...j->...", w, g, w), 0.0, None))


def codazzi_residual(g: MetricField, B: TensorField, order: int = 2) -> ScalarField:
    """Pointwise g-norm of the exterior covariant derivative of ``B``."""
    g.same_grid(B)
    gamma = christoffel(g, order).values
    dB = grad_array(B.values, B.grid, order)
    return ScalarField(g.grid, codazzi_norm(g.values, gamma, B.values, dB))


def sqrtm_spd2(m) -> np.ndarray:
    """Principal square root of symmetric positive definite 2x2 matrices."""
    det = _det2(m)
    if np.any(det <= 0) or np.any(m[..., 0, 0] <= 0):
        raise SingularMetricError("form is not positive definite")
    s = np.sqrt(det)
    t = np.sqrt(m[..., 0, 0] + m[..., 1, 1] + 2.0 * s)
    return (m + s[..., None, None] * np.eye(2)) / t[..., None, None]


def sym_positive_root_array(g, q, tol: float = TOL_ROOT) -> np.ndarray:
    """The g-self-adjoint positive definite ``B`` with ``g(B., B.) = q``, node-wise."""
    g = np.asarray(g, dtype=float)
    q = np.asarray(q, dtype=float)
    if np.any(_det2(q) <= 0) or np.any(q[..., 0, 0] <= 0):
        raise SingularMetricError("pulled-back form is not positive definite (not an immersion)")
    L = np.linalg.cholesky(g)
    Linv = _inv2(L)
    m = Linv @ q @ np.swapaxes(Linv, -1, -2)
    m = 0.5 * (m + np.swapaxes(m, -1, -2))
    s = sqrtm_spd2(m)
    B = np.swapaxes(Linv, -1, -2) @ s @ np.swapaxes(L, -1, -2)
    resid = np.swapaxes(B, -1, -2) @ g @ B - q
    scale = np.max(np.abs(q), axis=(-1, -2))
    if np.any(np.max(np.abs(resid), axis=(-1, -2)) > tol * scale):
        raise ArithmeticError("square root verification failed")
    return B


def sym_positive_root(g: MetricField, q: MetricField, tol: float = TOL_ROOT) -> TensorField:
    g.same_grid(q)
    return TensorField(g.grid, sym_positive_root_array(g.values, q.values, tol))


def pullback_array(jac, h) -> np.ndarray:
    """(F*h)_ij = h_ab dF^a_i dF^b_j for Jacobians ``jac[..., a, i]``."""
    return np.swapaxes(jac, -1, -2) @ h @ jac


@dataclass(frozen=True, eq=False)
class ChartMap:
    """A map from a source chart to a target chart.

    Either closed form (``func`` and optionally ``jac``, both vectorised over
    points of shape (..., 2)) or sampled (``samples``, a field of target
    coordinates on its grid, differentiated by finite differences).
    """

    func: object = None
    jac: object = None
    samples: Field | None = None

    def __post_init__(self):
        if (self.func is None) == (self.samples is None):
            raise ValueError("give exactly one of a closed-form map or samples")

    def sample(self, grid: ChartGrid, order: int = 2) -> tuple[np.ndarray, np.ndarray]:
        """Target coordinates and Jacobian (``[..., a, i]``) at the nodes of ``grid``."""
        if self.samples is not None:
            if self.samples.grid != grid:
                raise GridMismatchError("sampled map queried on a different grid")
            vals = self.samples.values
            return vals, np.swapaxes(grad_array(vals, grid, order), -1, -2)
        pts = grid.points()
        return self.evaluate(pts)

    def evaluate(self, x) -> tuple[np.ndarray, np.ndarray]:
        """Closed-form values and Jacobians at arbitrary points."""
        if self.func is None:
            raise ValueError("sampled maps can only be queried at their grid nodes")
        x = np.asarray(x, dtype=float)
        y = np.asarray(self.func(x), dtype=float)
        if self.jac is not None:
            return y, np.asarray(self.jac(x), dtype=float)
        return y, _central_jacobian(self.func, x)

    def sampled(self, grid: ChartGrid) -> ChartMap:
        y, _ = self.sample(grid)
        return ChartMap(samples=Field(grid, y))

    def compose(self, outer, outer_jac=None) -> ChartMap:
        """``outer o self`` for a closed-form ``outer`` acting on target coordinates.

        With ``outer_jac`` (Jacobian of ``outer``) the chain rule keeps the
        composite Jacobian exact; otherwise it is differenced numerically.
        """
        if self.samples is not None:
            return ChartMap(samples=Field(self.samples.grid, outer(self.samples.values)))
        f = self.func
        if outer_jac is None:
            return ChartMap(func=lambda x: outer(f(x)))

        def jac(x):
            y, j = self.evaluate(x)
            return outer_jac(y) @ j

        return ChartMap(func=lambda x: outer(f(x)), jac=jac)


def _central_jacobian(func, x, step: float = 1e-4) -> np.ndarray:
    """Fourth-order central-difference Jacobian ``[..., a, i]`` of a closed-form map."""
    cols = []
    for i in range(2):
        e = np.zeros(2)
        e[i] = step
        d = (-func(x + 2 * e) + 8 * func(x + e) - 8 * func(x - e) + func(x - 2 * e)) / (12 * step)
        cols.append(d)
    return np.stack(cols, axis=-1)


def pullback_metric(F: ChartMap, h, grid: ChartGrid, order: int = 2) -> MetricField:
    """Pull back the target metric ``h`` (a callable on target points) to ``grid``."""
    y, jac = F.sample(grid, order)
    return MetricField(grid, pullback_array(jac, h(y)))
