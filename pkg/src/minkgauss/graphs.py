"""Entire spacelike graphs x -> (x, f(x)) in R^{2,1}.

Three flavours share one interface (``derivatives`` at points or chart nodes):
closed-form functions with exact gradient and Hessian, Legendre conjugates of
convex potentials on subsets of the unit disc (gradient and Hessian come from
the maximiser), and grid samples differentiated by finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .chart import (ChartGrid, MetricField, ScalarField, TensorField, _det2, _inv2, diff, diff2,
                    gauss_curvature_array)
from .lorentz import FrameState

EPS_LIPSCHITZ = 1e-6


class SpacelikeError(ValueError):
    """The graph is not spacelike (|Df| too close to or above 1) somewhere."""


class ConjugateResolutionError(RuntimeError):
    """The conjugate maximiser could not be located inside the potential's domain."""


class SpacelikeGraph:
    """Common interface; subclasses implement :meth:`evaluate` or :meth:`derivatives`."""

    name = "graph"
    params: dict = {}
    lipschitz_margin = EPS_LIPSCHITZ

    def evaluate(self, x):
        """Return ``(f, Df, Hess f)`` at points of shape (..., 2)."""
        raise NotImplementedError

    def value(self, x):
        return self.evaluate(x)[0]

    def grad(self, x):
        return self.evaluate(x)[1]

    def hess(self, x):
        return self.evaluate(x)[2]

    def derivatives(self, grid: ChartGrid, order: int = 2):
        """``(f, Df, Hess f)`` at the nodes of ``grid``."""
        return self.evaluate(grid.points())

    def reflected(self) -> SpacelikeGraph:
        """The graph of ``-f`` (reflection in a horizontal plane)."""
        return _Reflected(self)

    def describe(self) -> dict:
        return {"family": self.name, "params": dict(self.params)}


@dataclass(eq=False)
class ClosedFormGraph(SpacelikeGraph):
    f: object
    df: object
    d2f: object
    name: str = "closed-form"
    params: dict = field(default_factory=dict)
    lipschitz_margin: float = EPS_LIPSCHITZ

    def evaluate(self, x):
        x = np.asarray(x, dtype=float)
        return self.f(x), self.df(x), self.d2f(x)


class _Reflected(SpacelikeGraph):
    def __init__(self, base: SpacelikeGraph):
        self.base = base
        self.name = base.name
        self.params = dict(base.params, reflected=True)
        self.lipschitz_margin = base.lipschitz_margin

    def evaluate(self, x):
        f, df, d2f = self.base.evaluate(x)
        return -f, -df, -d2f

    def derivatives(self, grid, order=2):
        f, df, d2f = self.base.derivatives(grid, order)
        return -f, -df, -d2f


class SampledGraph(SpacelikeGraph):
    """Graph known only through its values on a chart grid."""

    name = "sampled"

    def __init__(self, values: ScalarField, lipschitz_margin: float = EPS_LIPSCHITZ):
        self.field = values
        self.params = {}
        self.lipschitz_margin = lipschitz_margin

    @classmethod
    def from_graph(cls, s: SpacelikeGraph, grid: ChartGrid) -> SampledGraph:
        out = cls(ScalarField(grid, s.value(grid.points())), s.lipschitz_margin)
        out.name = f"sampled-{s.name}"
        out.params = dict(s.params)
        return out

    def evaluate(self, x):
        raise ValueError("sampled graphs can only be queried at their own grid nodes")

    def derivatives(self, grid, order=2):
        if grid != self.field.grid:
            raise ValueError("sampled graph queried outside its declared chart")
        f = self.field.values
        hu, hv = grid.spacing
        df = np.stack([diff(f, 0, hu, order), diff(f, 1, hv, order)], axis=-1)
        fuv = diff(diff(f, 0, hu, order), 1, hv, order)
        hess = np.empty(f.shape + (2, 2))
        hess[..., 0, 0] = diff2(f, 0, hu, order)
        hess[..., 1, 1] = diff2(f, 1, hv, order)
        hess[..., 0, 1] = hess[..., 1, 0] = fuv
        return f, df, hess


# --- closed-form families -------------------------------------------------

def hyperboloid() -> ClosedFormGraph:
    """f(x) = sqrt(1 + |x|^2): the hyperbolic plane itself."""

    def f(x):
        return np.sqrt(1.0 + np.sum(x * x, axis=-1))

    def df(x):
        return x / f(x)[..., None]

    def d2f(x):
        r = f(x)[..., None, None]
        g = df(x)
        return (np.eye(2) - g[..., :, None] * g[..., None, :]) / r

    return ClosedFormGraph(f, df, d2f, name="hyperboloid")


def bumped_hyperboloid(eps: float = 0.1, width: float = 1.0) -> ClosedFormGraph:
    """Hyperboloid plus a small Gaussian bump; strictly convex and spacelike for eps <= 0.2."""
    base = hyperboloid()
    w2 = width * width

    def bump(x):
        return np.exp(-np.sum(x * x, axis=-1) / w2)

    def f(x):
        return base.f(x) + eps * bump(x)

    def df(x):
        return base.df(x) - (2 * eps / w2) * bump(x)[..., None] * x

    def d2f(x):
        b = bump(x)[..., None, None]
        outer = x[..., :, None] * x[..., None, :]
        return base.d2f(x) + eps * b * (4 * outer / w2**2 - 2 * np.eye(2) / w2)

    return ClosedFormGraph(f, df, d2f, name="bumped-hyperboloid", params={"eps": eps, "width": width})


def affine(a=(0.5, 0.0), c: float = 0.0) -> ClosedFormGraph:
    a = np.asarray(a, dtype=float)

    def f(x):
        return x @ a + c

    def df(x):
        return np.broadcast_to(a, np.shape(x)).copy()

    def d2f(x):
        return np.zeros(np.shape(x)[:-1] + (2, 2))

    return ClosedFormGraph(f, df, d2f, name="affine", params={"a": a.tolist(), "c": c})


# --- conjugate construction ----------------------------------------------

@dataclass(eq=False)
class ConvexPotential:
    """A smooth strictly convex function on a convex subset of the closed unit disc."""

    value: object
    grad: object
    hess: object
    inside: object
    name: str = "potential"
    params: dict = field(default_factory=dict)


def _lorentz_terms(y):
    s = np.sqrt(np.clip(1.0 - np.sum(y * y, axis=-1), 0.0, None))
    return s


def lorentz_potential() -> ConvexPotential:
    """-sqrt(1 - |y|^2) on the disc; its conjugate is the hyperboloid."""

    def value(y):
        return -_lorentz_terms(y)

    def grad(y):
        return y / _lorentz_terms(y)[..., None]

    def hess(y):
        s = _lorentz_terms(y)[..., None, None]
        return np.eye(2) / s + y[..., :, None] * y[..., None, :] / s**3

    def inside(y):
        return np.sum(y * y, axis=-1) < 1.0

    return ConvexPotential(value, grad, hess, inside, name="lorentz")


def half_disc_potential(eps: float = 0.1) -> ConvexPotential:
    """-sqrt(1 - |y|^2) - eps*log(y1) on the half-disc {y1 > 0}."""
    base = lorentz_potential()

    def value(y):
        return base.value(y) - eps * np.log(y[..., 0])

    def grad(y):
        g = base.grad(y)
        g[..., 0] -= eps / y[..., 0]
        return g

    def hess(y):
        h = base.hess(y)
        h[..., 0, 0] += eps / y[..., 0] ** 2
        return h

    def inside(y):
        return base.inside(y) & (y[..., 0] > 0)

    return ConvexPotential(value, grad, hess, inside, name="half-disc", params={"eps": eps})


def polygon_potential(angles, eps: float = 0.1) -> ConvexPotential:
    """-sqrt(1 - |y|^2) - eps * sum sqrt(l) over the edges of an ideal polygon.

    ``l`` is the distance to an edge; the potential stays finite up to the
    closed polygon (so its ideal vertices belong to the essential domain of
    the conjugate) while its gradient blows up like l^-1/2 at every edge.
    """
    base = lorentz_potential()
    th = np.sort(np.mod(np.asarray(angles, dtype=float), 2 * np.pi))
    verts = np.stack([np.cos(th), np.sin(th)], axis=-1)
    d = np.roll(verts, -1, axis=0) - verts
    normals = np.stack([-d[:, 1], d[:, 0]], axis=-1) / np.linalg.norm(d, axis=-1)[:, None]
    offsets = np.sum(normals * verts, axis=-1)

    def dist(y):
        return np.clip(y @ normals.T - offsets, 0.0, None)

    def value(y):
        return base.value(y) - eps * np.sum(np.sqrt(dist(y)), axis=-1)

    def grad(y):
        return base.grad(y) - 0.5 * eps * (1.0 / np.sqrt(dist(y))) @ normals

    def hess(y):
        ell = dist(y)
        nn = normals[:, :, None] * normals[:, None, :]
        return base.hess(y) + 0.25 * eps * np.einsum("...k,kij->...ij", ell**-1.5, nn)

    def inside(y):
        return base.inside(y) & np.all(y @ normals.T - offsets > 0, axis=-1)

    return ConvexPotential(value, grad, hess, inside, name="polygon",
                           params={"angles": th.tolist(), "eps": eps})


def _solve_gradient(phi: ConvexPotential, x, y, max_iter: int) -> np.ndarray:
    """Maximise x.y - phi(y) (i.e. solve grad phi(y) = x), one problem per row.

    Works in the variable z with y = z / sqrt(1 + |z|^2), in which the
    gradient of the Lorentz part is exactly z; this keeps Newton well
    conditioned for maximisers close to the unit circle.  Steps are damped by
    an Armijo test on the objective, or on the residual norm once the Newton
    decrement is at rounding level.
    """
    z = y / np.sqrt(1.0 - np.sum(y * y, axis=-1))[:, None]
    scale = 1.0 + np.linalg.norm(x, axis=-1)

    def to_y(zz):
        return zz / np.sqrt(1.0 + np.sum(zz * zz, axis=-1))[:, None]

    def state(zz, xx):
        with np.errstate(all="ignore"):
            yy = to_y(zz)
            r = xx - phi.grad(yy)
            psi = np.sum(xx * yy, axis=-1) - phi.value(yy)
        bad = ~phi.inside(yy) | ~np.all(np.isfinite(r), axis=-1) | ~np.isfinite(psi)
        return yy, r, np.where(bad, np.inf, np.linalg.norm(r, axis=-1)), np.where(bad, -np.inf, psi)

    live = np.ones(len(x), dtype=bool)
    for _ in range(max_iter):
        ia = np.flatnonzero(live)
        if len(ia) == 0:
            break
        za, xa = z[ia], x[ia]
        ya, r, rn, psi0 = state(za, xa)
        done = rn <= 1e-13 * scale[ia]
        w = np.sqrt(1.0 + np.sum(za * za, axis=-1))[:, None, None]
        with np.errstate(all="ignore"):
            hs = phi.hess(ya)
            dy = (_inv2(hs) @ r[..., None])[..., 0]
            # y = z / w  =>  dy/dz = (I - y y^T) / w, whose inverse is w (I + z z^T)
            dz = w[..., 0] * (dy + za * np.sum(za * dy, axis=-1)[:, None])
            dec = np.sum(r * dy, axis=-1)
        ok = np.isfinite(dec) & (dec > 0) & np.all(np.isfinite(dz), axis=-1) & ~done
        flat = dec <= 1e-12 * (1.0 + np.abs(psi0))
        moved = np.zeros(len(ia), dtype=bool)
        pend = np.flatnonzero(ok)
        alpha = 1.0
        for _ in range(50):
            if len(pend) == 0:
                break
            zn = za[pend] + alpha * dz[pend]
            _, _, rnn, psi = state(zn, xa[pend])
            good = np.where(flat[pend], rnn < rn[pend], psi >= psi0[pend] + 1e-4 * alpha * dec[pend])
            z[ia[pend[good]]] = zn[good]
            moved[pend[good]] = True
            pend = pend[~good]
            alpha *= 0.5
        live[ia[done | ~moved]] = False
    return to_y(z)


class ConjugateGraph(SpacelikeGraph):
    """f(x) = sup_y x.y - phi(y) for a convex potential phi on D inside the disc.

    Values come from the maximiser y*(x), located by a nearest-gradient lookup
    in a precomputed table and refined by damped Newton iterations on
    grad phi(y) = x.  Then Df(x) = y* and Hess f(x) = (Hess phi(y*))^-1.
    """

    def __init__(self, phi: ConvexPotential, table_size: int = 256, max_iter: int = 100,
                 lipschitz_margin: float = EPS_LIPSCHITZ):
        self.phi = phi
        self.name = phi.name
        self.params = dict(phi.params)
        self.lipschitz_margin = lipschitz_margin
        self.max_iter = max_iter
        ax = np.linspace(-1.0, 1.0, table_size)
        yy = np.stack(np.meshgrid(ax, ax, indexing="ij"), axis=-1).reshape(-1, 2)
        yy = yy[np.sum(yy * yy, axis=-1) < (1.0 - 1e-3) ** 2]
        yy = yy[phi.inside(yy)]
        grads = phi.grad(yy)
        keep = np.all(np.isfinite(grads), axis=-1)
        self._table = yy[keep]
        self._tree = cKDTree(grads[keep])

    def maximiser(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        shape = x.shape
        xf = x.reshape(-1, 2)
        _, idx = self._tree.query(xf)
        y = _solve_gradient(self.phi, xf, self._table[idx].copy(), self.max_iter)
        r = xf - self.phi.grad(y)
        bad = ~np.all(np.isfinite(r), axis=-1) | (np.linalg.norm(r, axis=-1) > 1e-7 * (1.0 + np.linalg.norm(xf, axis=-1)))
        if np.any(bad):
            raise ConjugateResolutionError(
                f"maximiser not resolved for {int(bad.sum())} point(s) (closest to the domain boundary)")
        return y.reshape(shape)

    def evaluate(self, x):
        x = np.asarray(x, dtype=float)
        y = self.maximiser(x)
        f = np.sum(x * y, axis=-1) - self.phi.value(y)
        return f, y, _inv2(self.phi.hess(y))


def conjugate_construct(phi, **kwargs) -> SpacelikeGraph:
    """Graph of the Legendre conjugate of ``phi``.

    ``phi`` is a :class:`ConvexPotential`, or a point ``a`` of the open disc
    standing for the indicator function of {a} (whose conjugate is linear).
    """
    if isinstance(phi, ConvexPotential):
        return ConjugateGraph(phi, **kwargs)
    a = np.asarray(phi, dtype=float)
    if a.shape != (2,) or a @ a >= 1.0:
        raise ValueError("a point potential must lie in the open unit disc")
    return affine(a)


def half_disc_graph(eps: float = 0.1) -> ConjugateGraph:
    return ConjugateGraph(half_disc_potential(eps))


def three_point_graph(angles=(0.0, 0.75 * np.pi, 1.25 * np.pi), eps: float = 0.1) -> ConjugateGraph:
    g = ConjugateGraph(polygon_potential(angles, eps))
    g.name = "three-point"
    return g


FAMILIES = {
    "hyperboloid": lambda **p: hyperboloid(**p),
    "bumped-hyperboloid": lambda **p: bumped_hyperboloid(**p),
    "affine": lambda **p: affine(**p),
    "half-disc": lambda **p: half_disc_graph(**p),
    "three-point": lambda **p: three_point_graph(**p),
}

CONVEX_FAMILIES = ("hyperboloid", "bumped-hyperboloid", "half-disc", "three-point")


def make_family(name: str, params: dict | None = None) -> SpacelikeGraph:
    if name not in FAMILIES:
        raise KeyError(f"unknown surface family {name!r}")
    s = FAMILIES[name](**(params or {}))
    s.params = dict(params or {}, **s.params)
    return s


# --- differential geometry of graphs -------------------------------------

def _check_spacelike(df, margin):
    n = np.linalg.norm(df, axis=-1)
    if np.any(n >= 1.0 - margin):
        raise SpacelikeError(f"|Df| reaches {float(np.max(n)):.6g}; graph is not spacelike there")


def metric_from_gradient(df) -> np.ndarray:
    return np.eye(2) - df[..., :, None] * df[..., None, :]


def shape_from_derivatives(df, hess) -> np.ndarray:
    """B = g^-1 II with II = Hess f / sqrt(1 - |Df|^2)."""
    w = np.sqrt(1.0 - np.sum(df * df, axis=-1))[..., None, None]
    return _inv2(metric_from_gradient(df)) @ (hess / w)


def first_fundamental_form(s: SpacelikeGraph, chart: ChartGrid, order: int = 2) -> MetricField:
    """g_ij = delta_ij - d_i f d_j f at the chart nodes."""
    _, df, _ = s.derivatives(chart, order)
    _check_spacelike(df, s.lipschitz_margin)
    return MetricField(chart, metric_from_gradient(df))


def gauss_map(s: SpacelikeGraph, x) -> np.ndarray:
    """Future unit normal (Df, 1) / sqrt(1 - |Df|^2) as hyperboloid points."""
    df = s.grad(x)
    _check_spacelike(df, s.lipschitz_margin)
    return gauss_map_from_gradient(df)


def gauss_map_from_gradient(df) -> np.ndarray:
    w = np.sqrt(1.0 - np.sum(df * df, axis=-1))[..., None]
    return np.concatenate([df, np.ones_like(df[..., :1])], axis=-1) / w


def shape_operator(s: SpacelikeGraph, chart: ChartGrid, order: int = 2) -> TensorField:
    _, df, hess = s.derivatives(chart, order)
    _check_spacelike(df, s.lipschitz_margin)
    B = shape_from_derivatives(df, hess)
    gB = metric_from_gradient(df) @ B
    if np.max(np.abs(gB - np.swapaxes(gB, -1, -2))) > 1e-9 * max(1.0, float(np.max(np.abs(gB)))):
        raise ArithmeticError("shape operator is not self-adjoint")
    return TensorField(chart, B)


def curvature_via_gauss_equation(s: SpacelikeGraph, chart: ChartGrid, order: int = 2) -> ScalarField:
    """K = -det B."""
    return ScalarField(chart, -_det2(shape_operator(s, chart, order).values))


def graph_frame(s: SpacelikeGraph, x) -> FrameState:
    """Position, coordinate frame and future normal of the graph above ``x``."""
    x = np.asarray(x, dtype=float)
    f, df, _ = s.evaluate(x)
    e1 = np.array([1.0, 0.0, df[0]])
    e2 = np.array([0.0, 1.0, df[1]])
    return FrameState(np.array([x[0], x[1], f]), e1, e2, gauss_map_from_gradient(df))


@dataclass
class CurvatureBounds:
    k_inf: float
    k_sup: float
    scope: str = "on chart only"


@dataclass
class SpacelikeReport:
    spacelike: bool
    max_gradient: float
    strictly_convex: bool
    reflected: bool
    bounds: CurvatureBounds | None
    pinched_negative: bool
    notes: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.spacelike

    def to_json(self) -> dict:
        return {
            "spacelike": self.spacelike, "max_gradient": self.max_gradient,
            "strictly_convex": self.strictly_convex, "reflected": self.reflected,
            "curvature_bounds": None if self.bounds is None else
            {"k_inf": self.bounds.k_inf, "k_sup": self.bounds.k_sup, "scope": self.bounds.scope},
            "pinched_negative": self.pinched_negative, "notes": list(self.notes),
        }


def spacelike_report(df, hess, lipschitz_margin: float = EPS_LIPSCHITZ) -> SpacelikeReport:
    """Spacelike and convexity audit from gradient and Hessian samples."""
    notes = []
    df = np.asarray(df).reshape(-1, 2)
    hess = np.asarray(hess).reshape(-1, 2, 2)
    gmax = float(np.max(np.linalg.norm(df, axis=-1)))
    if not gmax < 1.0 - lipschitz_margin:
        notes.append("not 1-Lipschitz: graph is not spacelike")
        return SpacelikeReport(False, gmax, False, False, None, False, notes)
    eig = np.linalg.eigvalsh(hess)
    reflected = False
    if np.all(eig[:, 1] < 0):
        reflected = True
        eig = -eig[:, ::-1]
        hess = -hess
        df = -df
        notes.append("concave input reflected in a horizontal plane")
    strictly_convex = bool(np.all(eig[:, 0] > 0))
    K = -_det2(shape_from_derivatives(df, hess))
    bounds = CurvatureBounds(float(np.min(K)), float(np.max(K)))
    pinched = bool(bounds.k_sup < 0)
    if not pinched:
        notes.append("curvature not pinched negative")
    return SpacelikeReport(True, gmax, strictly_convex, reflected, bounds, pinched, notes)


def entire_spacelike_check(s: SpacelikeGraph, chart: ChartGrid, order: int = 2) -> SpacelikeReport:
    """Spacelike and convexity audit of a graph over a chart (report only, never raises)."""
    _, df, hess = s.derivatives(chart, order)
    mask = chart.interior_mask(2) if isinstance(s, SampledGraph) else np.ones(chart.shape, dtype=bool)
    return spacelike_report(df[mask], hess[mask], s.lipschitz_margin)


def brioschi_curvature(s: SpacelikeGraph, chart: ChartGrid, order: int = 2) -> ScalarField:
    """Intrinsic curvature of the first fundamental form."""
    g = first_fundamental_form(s, chart, order)
    return ScalarField(chart, gauss_curvature_array(g.values, chart, order))
