"""Reconstruction of a spacelike immersion from its first fundamental form and shape operator.

The moving frame (sigma, e1, e2, nu) obeys

    d_i sigma = e_i
    d_i e_j   = Gamma^k_ij e_k + II_ij nu,    II_ij = g_jk B^k_i
    d_i nu    = B^k_i e_k

and is integrated with classical RK4 along grid lines: first the u-row through
the base node, then every v-column from that row (or the transposed order).
The two orders agree to the scheme's accuracy exactly when the Gauss and
Codazzi equations hold, which gives the holonomy diagnostic.  No
re-orthonormalisation is done; the Gram drift is reported instead.
"""

from __future__ import annotations

import functools
import json
from dataclasses import dataclass, field

import numpy as np

from .chart import (ChartGrid, MetricField, TensorField, _det2, _inv2, christoffel_from_derivatives,
                    codazzi_norm, gauss_curvature_array, grad_array, pullback_array, sym_positive_root_array)
from .graphs import SpacelikeGraph, metric_from_gradient, shape_from_derivatives
from .lorentz import (J, FrameState, LorentzIsometry, ModelError, frame_alignment_isometry, hyperbolic_distance,
                      klein_lift, klein_lift_jacobian, mink_cross, mink_inner,
                      normalize_hyperboloid)

TOL_FRAME = 1e-6
DRIFT_FACTOR = 100.0
GC_FACTOR = 10.0
GC_FLOOR = 1e-10
TOL_PULLBACK = 1e-6


class GaussCodazziError(ValueError):
    """The data (g, B) violate the Gauss or Codazzi equation beyond tolerance."""


class FrameDegenerationError(ArithmeticError):
    """Integrated frames drifted away from the prescribed Gram matrix."""


class PullbackMismatchError(ValueError):
    """Target Gauss map and reconstruction have different pulled-back metrics."""


# --- coefficient data -----------------------------------------------------

class FrameData:
    """Coefficients (g, Gamma, B) of the frame equations, at nodes and line midpoints."""

    name = "frame-data"

    def nodes(self, grid: ChartGrid):
        raise NotImplementedError

    def midpoints(self, grid: ChartGrid, axis: int):
        raise NotImplementedError


@dataclass(eq=False)
class ClosedFormFrameData(FrameData):
    """Coefficients given as callables of chart points (exact at midpoints)."""

    metric: object
    christoffel: object
    shape: object
    name: str = "closed-form"

    def _at(self, x):
        return self.metric(x), self.christoffel(x), self.shape(x)

    def nodes(self, grid):
        return self._at(grid.points())

    def midpoints(self, grid, axis):
        pts = grid.points()
        shift = np.zeros(2)
        shift[axis] = 0.5 * grid.spacing[axis]
        pts = pts[:-1] if axis == 0 else pts[:, :-1]
        return self._at(pts + shift)


@dataclass(eq=False)
class TabulatedFrameData(FrameData):
    """Coefficients known at the nodes of one grid; midpoints by linear interpolation."""

    g: MetricField
    B: TensorField
    order: int = 2
    name: str = "tabulated"

    def __post_init__(self):
        self.g.same_grid(self.B)
        grid = self.g.grid
        self._gamma = christoffel_from_derivatives(self.g.values, grad_array(self.g.values, grid, self.order))

    def nodes(self, grid):
        if grid != self.g.grid:
            raise ValueError("tabulated data queried on a different grid")
        return self.g.values, self._gamma, self.B.values

    def midpoints(self, grid, axis):
        out = []
        for a in self.nodes(grid):
            if axis == 0:
                out.append(0.5 * (a[:-1] + a[1:]))
            else:
                out.append(0.5 * (a[:, :-1] + a[:, 1:]))
        return tuple(out)


def _graph_christoffel(df, hess):
    # d_l g_ij = -(f_il f_j + f_i f_jl)
    t = hess[..., :, :, None] * df[..., None, None, :]
    dg = -(t + np.swapaxes(t, -1, -2))
    return christoffel_from_derivatives(metric_from_gradient(df), dg)


def frame_data_from_graph(s: SpacelikeGraph) -> ClosedFormFrameData:
    """Exact (g, Gamma, B) of a graph from its gradient and Hessian."""

    def metric(x):
        return metric_from_gradient(s.evaluate(x)[1])

    def christoffel(x):
        _, df, hess = s.evaluate(x)
        return _graph_christoffel(df, hess)

    def shape(x):
        _, df, hess = s.evaluate(x)
        return shape_from_derivatives(df, hess)

    return ClosedFormFrameData(metric, christoffel, shape, name=f"graph-{s.name}")


def christoffel_from_callable(metric, step: float = 1e-3):
    """Christoffel symbols of a metric callable by fourth-order central differences."""

    def gamma(x):
        x = np.asarray(x, dtype=float)
        dg = []
        for l in range(2):
            e = np.zeros(2)
            e[l] = step
            dg.append((-metric(x + 2 * e) + 8 * metric(x + e) - 8 * metric(x - e) + metric(x - 2 * e))
                      / (12 * step))
        return christoffel_from_derivatives(metric(x), np.stack(dg, axis=-3))

    return gamma


def frame_data_from_callables(metric, shape, step: float = 1e-3, name: str = "callables") -> ClosedFormFrameData:
    return ClosedFormFrameData(metric, christoffel_from_callable(metric, step), shape, name=name)


def frame_data_from_map(m) -> ClosedFormFrameData:
    """(g, B) of a one-harmonic map: B is the positive g-root of F*h at each point."""
    if m.F.func is None:
        raise ValueError("closed-form frame data needs a closed-form map")
    gfun = m.g if callable(m.g) else None
    if gfun is None:
        raise ValueError("closed-form frame data needs a metric callable")

    def shape(x):
        y, jac = m.F.evaluate(x)
        return sym_positive_root_array(gfun(x), pullback_array(jac, m.h(y)))

    return frame_data_from_callables(gfun, shape, name=f"map-{m.name}")


def flat_frame_data(shape=None) -> ClosedFormFrameData:
    """Flat metric with the given B callable (default: B = 0)."""

    def metric(x):
        return np.broadcast_to(np.eye(2), np.shape(x)[:-1] + (2, 2)).copy()

    def gamma(x):
        return np.zeros(np.shape(x)[:-1] + (2, 2, 2))

    if shape is None:
        def shape(x):
            return np.zeros(np.shape(x)[:-1] + (2, 2))

    return ClosedFormFrameData(metric, gamma, shape, name="flat")


def corrupted_frame_data() -> ClosedFormFrameData:
    """Flat g with B = diag(1, 1 + u): violates both Gauss and Codazzi."""

    def shape(x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1] + (2, 2))
        out[..., 0, 0] = 1.0
        out[..., 1, 1] = 1.0 + x[..., 0]
        return out

    d = flat_frame_data(shape)
    d.name = "corrupted"
    return d


# --- Gauss-Codazzi precondition -------------------------------------------

@dataclass
class GaussCodazziReport:
    gauss: float
    codazzi: float
    tol_gauss: float
    tol_codazzi: float

    @property
    def ok(self) -> bool:
        return self.gauss <= self.tol_gauss and self.codazzi <= self.tol_codazzi

    def to_json(self) -> dict:
        return {"gauss_residual": self.gauss, "codazzi_residual": self.codazzi,
                "tol_gauss": self.tol_gauss, "tol_codazzi": self.tol_codazzi, "ok": self.ok}


def gauss_codazzi_residuals(data: FrameData, grid: ChartGrid, order: int = 2, margin: int = 2):
    """Sup over interior nodes of |K_g + det B| and of the g-norm of d^nabla B."""
    g, gamma, B = data.nodes(grid)
    mask = grid.interior_mask(margin)
    gauss = np.abs(gauss_curvature_array(g, grid, order) + _det2(B))
    cod = codazzi_norm(g, gamma, B, grad_array(B, grid, order))
    return float(np.max(gauss[mask])), float(np.max(cod[mask]))


@functools.lru_cache(maxsize=32)
def calibrated_gc_tolerance(grid: ChartGrid, order: int = 2) -> tuple[float, float]:
    """Ten times the residuals of finite-difference data from the hyperboloid at the same spacing."""
    from .graphs import hyperboloid
    from .harmonic import extract_B, gauss_map_pair

    m = gauss_map_pair(hyperboloid()).with_fd_jacobian()
    g = m.source_metric(grid)
    B = extract_B(m, grid, order)
    gres, cres = gauss_codazzi_residuals(TabulatedFrameData(g, B, order), grid, order)
    return GC_FACTOR * max(gres, GC_FLOOR), GC_FACTOR * max(cres, GC_FLOOR)


def gauss_codazzi_report(data: FrameData, grid: ChartGrid, order: int = 2, tol=None) -> GaussCodazziReport:
    gres, cres = gauss_codazzi_residuals(data, grid, order)
    tg, tc = calibrated_gc_tolerance(grid, order) if tol is None else tol
    return GaussCodazziReport(gres, cres, tg, tc)


# --- integration ------------------------------------------------------------

def _line_coefficients(g, gamma, B, i):
    """Coefficients of the system along direction i: Gamma^k_ij, II_ij, B^k_i."""
    II = g @ B
    return gamma[..., :, i, :], np.swapaxes(II, -1, -2)[..., i, :], B[..., :, i], i


def _rhs(state, coef):
    gam, ii, b, i = coef
    e = state[..., 1:3, :]
    nu = state[..., 3, :]
    out = np.empty_like(state)
    out[..., 0, :] = e[..., i, :]
    out[..., 1:3, :] = np.einsum("...kj,...kc->...jc", gam, e) + ii[..., :, None] * nu[..., None, :]
    out[..., 3, :] = np.einsum("...k,...kc->...c", b, e)
    return out


def _take(coef, idx):
    gam, ii, b, i = coef
    return gam[idx], ii[idx], b[idx], i


def _rk4(state, c0, cm, c1, h):
    k1 = _rhs(state, c0)
    k2 = _rhs(state + 0.5 * h * k1, cm)
    k3 = _rhs(state + 0.5 * h * k2, cm)
    k4 = _rhs(state + h * k3, c1)
    return state + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def _sweep(start, nodes, mids, h, k0):
    """Integrate lines stored along axis 0 of the coefficient arrays from index ``k0``.

    ``start`` has shape (L, 4, 3); ``nodes`` arrays have shape (N, L, ...) and
    ``mids`` (N - 1, L, ...).  Returns states of shape (N, L, 4, 3).
    """
    n = nodes[0].shape[0]
    out = np.empty((n,) + start.shape)
    out[k0] = start
    s = start
    for k in range(k0, n - 1):
        s = _rk4(s, _take(nodes, k), _take(mids, k), _take(nodes, k + 1), h)
        out[k + 1] = s
    s = start
    for k in range(k0, 0, -1):
        s = _rk4(s, _take(nodes, k), _take(mids, k - 1), _take(nodes, k - 1), -h)
        out[k - 1] = s
    return out


def _transpose(coef):
    gam, ii, b, i = coef
    return np.swapaxes(gam, 0, 1), np.swapaxes(ii, 0, 1), np.swapaxes(b, 0, 1), i


def _integrate(data: FrameData, grid: ChartGrid, base: FrameState, base_index, first_axis: int) -> np.ndarray:
    g, gamma, B = data.nodes(grid)
    cu = _line_coefficients(g, gamma, B, 0)
    cv = _line_coefficients(g, gamma, B, 1)
    mu = _line_coefficients(*data.midpoints(grid, 0), 0)
    mv = _line_coefficients(*data.midpoints(grid, 1), 1)
    i0, j0 = base_index
    start = np.stack([base.sigma, base.e1, base.e2, base.nu])[None]
    hu, hv = grid.spacing
    if first_axis == 0:
        row = _sweep(start, _take(cu, (slice(None), slice(j0, j0 + 1))),
                     _take(mu, (slice(None), slice(j0, j0 + 1))), hu, i0)[:, 0]
        cols = _sweep(row, _transpose(cv), _transpose(mv), hv, j0)
        return np.swapaxes(cols, 0, 1)
    col = _sweep(start, _take(_transpose(cv), (slice(None), slice(i0, i0 + 1))),
                 _take(_transpose(mv), (slice(None), slice(i0, i0 + 1))), hv, j0)[:, 0]
    return _sweep(col, cu, mu, hu, i0)


def default_base(data: FrameData, grid: ChartGrid, index=None) -> tuple[FrameState, tuple[int, int]]:
    """Frame at the centre node: e_i the columns of L^T lifted horizontally, nu = (0, 0, 1)."""
    idx = grid.center_node() if index is None else tuple(index)
    g = data.nodes(grid)[0][idx]
    lt = np.linalg.cholesky(g).T
    e1 = np.array([lt[0, 0], lt[1, 0], 0.0])
    e2 = np.array([lt[0, 1], lt[1, 1], 0.0])
    return FrameState(np.zeros(3), e1, e2, np.array([0.0, 0.0, 1.0])), idx


def _gram_drift(states, g) -> np.ndarray:
    e = states[..., 1:3, :]
    nu = states[..., 3, :]
    gram = np.einsum("...ic,cd,...jd->...ij", e, J, e)
    cross = np.einsum("...ic,cd,...d->...i", e, J, nu)
    norm = mink_inner(nu, nu)
    drift = np.max(np.abs(gram - g), axis=(-1, -2))
    drift = np.maximum(drift, np.max(np.abs(cross), axis=-1))
    return np.maximum(drift, np.abs(norm + 1.0))


@dataclass
class ReconstructionResult:
    grid: ChartGrid
    states: np.ndarray
    base_index: tuple[int, int]
    data: FrameData = field(repr=False)
    gram_drift: float = 0.0
    holonomy_residual: float | None = None
    gauss_codazzi: GaussCodazziReport | None = None

    @property
    def sigma(self) -> np.ndarray:
        return self.states[..., 0, :]

    @property
    def nu(self) -> np.ndarray:
        return self.states[..., 3, :]

    def frame_at(self, index) -> FrameState:
        s = self.states[tuple(index)]
        return FrameState(s[0].copy(), s[1].copy(), s[2].copy(), s[3].copy())

    def report(self) -> dict:
        return {
            "grid": self.grid.to_json(), "base_index": list(self.base_index),
            "gram_drift": self.gram_drift, "holonomy_residual": self.holonomy_residual,
            "gauss_codazzi": None if self.gauss_codazzi is None else self.gauss_codazzi.to_json(),
        }

    def to_csv(self, path) -> None:
        pts = self.grid.points().reshape(-1, 2)
        rows = np.concatenate([pts, self.sigma.reshape(-1, 3)], axis=1)
        np.savetxt(path, rows, delimiter=",", header="u,v,x1,x2,x3", comments="", fmt="%.12g")

    def dumps(self) -> str:
        return json.dumps(self.report(), sort_keys=True)


def integrate_frame(data: FrameData, grid: ChartGrid, base: FrameState | None = None, base_index=None,
                    order: int = 2, enforce_gc: bool = True, gc_tol=None, tol_frame: float = TOL_FRAME,
                    holonomy: bool = False) -> ReconstructionResult:
    """Integrate the frame equations over ``grid`` (u-row through the base, then v-columns).

    Raises
    ------
    GaussCodazziError
        If ``enforce_gc`` and the data fail the Gauss-Codazzi precondition.
    FrameDegenerationError
        If the Gram matrix drifts more than ``100 * tol_frame * (1 + path length)``.
    """
    gc = gauss_codazzi_report(data, grid, order, gc_tol)
    if enforce_gc and not gc.ok:
        raise GaussCodazziError(
            f"Gauss residual {gc.gauss:.3g} (tol {gc.tol_gauss:.3g}), "
            f"Codazzi residual {gc.codazzi:.3g} (tol {gc.tol_codazzi:.3g})")
    if base is None:
        base, base_index = default_base(data, grid, base_index)
    elif base_index is None:
        base_index = grid.center_node()
    g = data.nodes(grid)[0]
    base.check(metric=g[tuple(base_index)], tol=tol_frame)
    states = _integrate(data, grid, base, base_index, 0)
    drift = _gram_drift(states, g)
    pts = grid.points()
    path = np.abs(pts[..., 0] - pts[base_index][0]) + np.abs(pts[..., 1] - pts[base_index][1])
    if np.any(~np.isfinite(drift)) or np.any(drift > DRIFT_FACTOR * tol_frame * (1.0 + path)):
        raise FrameDegenerationError(f"frame Gram drift reached {float(np.nanmax(drift)):.3g}")
    hol = None
    if holonomy:
        other = _integrate(data, grid, base, base_index, 1)
        hol = float(np.max(np.abs(other[..., 0, :] - states[..., 0, :])))
    return ReconstructionResult(grid, states, tuple(base_index), data, float(np.max(drift)), hol, gc)


def holonomy_residual(data: FrameData, grid: ChartGrid, base: FrameState | None = None, base_index=None,
                      order: int = 2, enforce_gc: bool = True, gc_tol=None) -> float:
    """Sup distance between sigma integrated u-then-v and v-then-u."""
    r = integrate_frame(data, grid, base, base_index, order, enforce_gc, gc_tol, holonomy=True)
    return r.holonomy_residual


# --- alignment ----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class GaussTarget:
    """A target Gauss map sampled at nodes: hyperboloid points and their chart derivatives."""

    nu: np.ndarray
    dnu: np.ndarray

    @classmethod
    def from_klein_map(cls, F, grid: ChartGrid, order: int = 2) -> GaussTarget:
        """From a :class:`ChartMap` into the Klein disc (closed-form or sampled)."""
        y, jac = F.sample(grid, order)
        return cls(klein_lift(y), klein_lift_jacobian(y) @ jac)

    @classmethod
    def from_reconstruction(cls, r: ReconstructionResult, a: LorentzIsometry | None = None) -> GaussTarget:
        """The reconstructed Gauss map itself (d_i nu = B^k_i e_k), optionally moved by ``a``."""
        B = r.data.nodes(r.grid)[2]
        e = r.states[..., 1:3, :]
        dnu = np.einsum("...ki,...kc->...ci", B, e)
        nu = r.nu
        if a is not None:
            nu = nu @ a.m.T
            dnu = a.m @ dnu
        return cls(nu, dnu)


@dataclass
class AlignmentResult:
    isometry: LorentzIsometry
    sigma: np.ndarray
    gauss_residual: float
    isometry_variation: float
    pullback_mismatch: float

    def report(self) -> dict:
        return {"isometry": self.isometry.m.tolist(), "gauss_residual": self.gauss_residual,
                "isometry_variation": self.isometry_variation, "pullback_mismatch": self.pullback_mismatch}


def _target_frames(target: GaussTarget, B):
    # F = A o G_sigma gives dF(d_i) = B^k_i A e_k, so A e_k = dF(d_i) (B^-1)^i_k
    return target.dnu @ _inv2(B)


def align_to_gauss_map(r: ReconstructionResult, target: GaussTarget, tol: float = TOL_PULLBACK) -> AlignmentResult:
    """The isometry A with A o G_sigma = F, from the frames at the base node.

    Also reports the sup hyperbolic distance between A G_sigma and F over all
    nodes, and how much the node-wise alignment isometry varies (it must be
    constant when both maps pull back the same metric).
    """
    g, _, B = r.data.nodes(r.grid)
    q_target = np.einsum("...ci,cd,...dj->...ij", target.dnu, J, target.dnu)
    q_recon = np.swapaxes(B, -1, -2) @ g @ B
    mismatch = float(np.max(np.abs(q_target - q_recon) / (1.0 + np.abs(q_recon))))
    if mismatch > tol:
        raise PullbackMismatchError(f"pulled-back metrics differ by {mismatch:.3g}")
    tgt_e = _target_frames(target, B)
    idx = r.base_index
    src = r.frame_at(idx)
    dst = FrameState(src.sigma, tgt_e[idx][:, 0], tgt_e[idx][:, 1], target.nu[idx])
    a = frame_alignment_isometry(src, dst, tol=max(tol, 1e-8))
    moved = r.nu @ a.m.T
    resid = float(np.max(hyperbolic_distance(normalize_hyperboloid(moved), normalize_hyperboloid(target.nu))))
    # node-wise isometries D S^-1 compared with the base one
    S = np.stack([r.states[..., 1, :], r.states[..., 2, :], r.nu], axis=-1)
    D = np.concatenate([tgt_e, target.nu[..., :, None]], axis=-1)
    A_nodes = np.swapaxes(np.linalg.solve(np.swapaxes(S, -1, -2), np.swapaxes(D, -1, -2)), -1, -2)
    variation = float(np.max(np.abs(A_nodes - a.m)))
    return AlignmentResult(a, r.sigma @ a.m.T, resid, variation, mismatch)


def rigid_align(r: ReconstructionResult, target: FrameState, tol: float = 1e-8):
    """Lorentz isometry and translation carrying the base frame and point onto ``target``.

    Returns ``(A, t, sigma_aligned)`` with ``sigma_aligned = A sigma + t``.
    """
    src = r.frame_at(r.base_index)
    a = frame_alignment_isometry(src, target, tol=tol)
    t = target.sigma - a(src.sigma)
    return a, t, r.sigma @ a.m.T + t


def sigma_first_form(r: ReconstructionResult, order: int = 2) -> np.ndarray:
    """First fundamental form of the reconstructed sigma by finite differences."""
    d = grad_array(r.sigma, r.grid, order)
    return np.einsum("...ic,cd,...jd->...ij", d, J, d)


def sigma_normal(r: ReconstructionResult, order: int = 2) -> np.ndarray:
    """Future unit normal of the reconstructed sigma by finite differences."""
    d = grad_array(r.sigma, r.grid, order)
    n = mink_cross(d[..., 0, :], d[..., 1, :])
    n = n / np.sqrt(-mink_inner(n, n))[..., None]
    return np.where(n[..., 2:3] < 0, -n, n)


__all__ = [
    "ClosedFormFrameData", "TabulatedFrameData", "FrameData", "frame_data_from_graph", "frame_data_from_map",
    "frame_data_from_callables", "flat_frame_data", "corrupted_frame_data", "integrate_frame",
    "holonomy_residual", "align_to_gauss_map", "rigid_align", "GaussTarget", "ReconstructionResult",
    "GaussCodazziError", "FrameDegenerationError", "PullbackMismatchError", "ModelError",
    "gauss_codazzi_report", "calibrated_gc_tolerance", "sigma_first_form", "sigma_normal",
]
