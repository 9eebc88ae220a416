"""Legendre transforms of entire spacelike graphs and their essential domains.

For a convex 1-Lipschitz ``f`` the transform ``f*(y) = sup_x x.y - f(x)`` is
finite on a convex set whose closure is the hull of the points of S^1 where
``f*`` is finite; the gradient image ``Df(R^2)`` is its interior.  Finiteness
at a boundary point ``y`` is read off the asymptotic slopes
``lambda(t) = lim f(R t) / R`` (the support function of the essential domain):
``f*(y) < inf`` iff ``lambda(t) >= y.t`` for every direction ``t``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import shapely
from scipy.spatial import cKDTree

from .chart import ChartGrid, _det2, _inv2
from .graphs import SpacelikeGraph, spacelike_report
from .hull import (TWO_PI, DegenerateHullError, StraightConvexDomain, full_disc, hull_of_circle_subset,
                   interior_samples)
from .parallel import thread_count

R_DEFAULT = 50.0
DELTA_MARGIN = 1e-3
N_ANGLES = 1024
CERTIFY_FRACTION = 0.9
SHORT_RUN = 4
INJECTIVE_GAP = 1e-9


# --- transform ---------------------------------------------------------------

@dataclass
class LegendreValue:
    """Values of the truncated transform with maximisers and certification flags."""

    value: np.ndarray
    maximiser: np.ndarray
    certified: np.ndarray
    R: float

    @property
    def flag(self) -> np.ndarray:
        return np.where(self.certified, "interior-certified", "possibly +inf / truncation-limited")


def _disc_scan(R: float, n: int) -> np.ndarray:
    ax = np.linspace(-R, R, n)
    xx = np.stack(np.meshgrid(ax, ax, indexing="ij"), axis=-1).reshape(-1, 2)
    xx = xx[np.sum(xx * xx, axis=-1) <= R * R]
    t = np.linspace(0.0, TWO_PI, 4 * n, endpoint=False)
    return np.concatenate([xx, R * np.stack([np.cos(t), np.sin(t)], axis=-1)], axis=0)


def _scan_argmax(X, fX, y, chunk: int = 2048):
    """Best scan point per y; near-ties go to the smallest |x|."""
    norms = np.linalg.norm(X, axis=-1)
    out = np.empty(len(y), dtype=int)
    for s in range(0, len(y), chunk):
        vals = X @ y[s:s + chunk].T - fX[:, None]
        best = np.max(vals, axis=0)
        tie = vals >= best - 1e-10 * (1.0 + np.abs(best))
        out[s:s + chunk] = np.argmin(np.where(tie, norms[:, None], np.inf), axis=0)
    return out


def _newton_refine(f: SpacelikeGraph, x, y, R: float, max_iter: int = 60):
    """Damped Newton ascent of x.y - f(x) inside the closed disc |x| <= R."""
    x = x.copy()
    live = np.ones(len(x), dtype=bool)
    for _ in range(max_iter):
        ia = np.flatnonzero(live)
        if len(ia) == 0:
            break
        xa, ya = x[ia], y[ia]
        fv, df, hess = f.evaluate(xa)
        r = ya - df
        det = _det2(hess)
        ok = det > 1e-14 * (1.0 + np.sum(hess * hess, axis=(-1, -2)))
        d = np.zeros_like(xa)
        d[ok] = (_inv2(hess[ok]) @ r[ok][..., None])[..., 0]
        dec = np.sum(r * d, axis=-1)
        psi0 = np.sum(xa * ya, axis=-1) - fv
        moved = np.zeros(len(ia), dtype=bool)
        pend = np.flatnonzero(ok & (dec > 0))
        alpha = 1.0
        for _ in range(40):
            if len(pend) == 0:
                break
            xn = xa[pend] + alpha * d[pend]
            inside = np.sum(xn * xn, axis=-1) <= R * R
            p_in, xn = pend[inside], xn[inside]
            psi = np.sum(xn * ya[p_in], axis=-1) - f.value(xn)
            good = psi >= psi0[p_in] + 1e-4 * alpha * dec[p_in] - 1e-15 * np.abs(psi0[p_in])
            x[ia[p_in[good]]] = xn[good]
            moved[p_in[good]] = True
            pend = pend[~moved[pend]]
            alpha *= 0.5
        live[ia[~moved | (dec < 1e-26 * (1.0 + np.abs(psi0)))]] = False
    return x


def _circle_refine(f: SpacelikeGraph, theta, y, R: float, width: float, iters: int = 60):
    """Vectorised golden-section search of x.y - f(x) on |x| = R near ``theta``."""

    def psi(t):
        p = R * np.stack([np.cos(t), np.sin(t)], axis=-1)
        return np.sum(p * y, axis=-1) - f.value(p)

    a, b = theta - width, theta + width
    gr = (np.sqrt(5.0) - 1.0) / 2.0
    for _ in range(iters):
        c, d = b - gr * (b - a), a + gr * (b - a)
        left = psi(c) >= psi(d)
        b = np.where(left, d, b)
        a = np.where(left, a, c)
    t = 0.5 * (a + b)
    return t, psi(t)


def legendre_transform(f: SpacelikeGraph, y, R: float = R_DEFAULT, scan: int = 101) -> LegendreValue:
    """sup over |x| <= R of x.y - f(x), vectorised over ``y`` of shape (..., 2).

    A grid scan of the disc seeds a damped Newton ascent; maximisers that reach
    the circle |x| = R are refined along it.  Values whose maximiser lies
    within 0.9 R are flagged interior-certified; the others are lower bounds
    that may grow without limit in R.
    """
    y = np.asarray(y, dtype=float)
    shape = y.shape[:-1]
    yf = y.reshape(-1, 2)
    X = _disc_scan(R, scan)
    fX = f.value(X)
    x = X[_scan_argmax(X, fX, yf)]
    x = _newton_refine(f, x, yf, R)
    val = np.sum(x * yf, axis=-1) - f.value(x)
    on_rim = np.linalg.norm(x, axis=-1) >= (1.0 - 1e-6) * R
    if np.any(on_rim):
        th0 = np.arctan2(x[on_rim, 1], x[on_rim, 0])
        t, v = _circle_refine(f, th0, yf[on_rim], R, width=2 * np.pi / scan)
        better = v > val[on_rim]
        idx = np.flatnonzero(on_rim)[better]
        val[idx] = v[better]
        x[idx] = R * np.stack([np.cos(t[better]), np.sin(t[better])], axis=-1)
    certified = np.linalg.norm(x, axis=-1) <= CERTIFY_FRACTION * R
    return LegendreValue(val.reshape(shape), x.reshape(shape + (2,)), certified.reshape(shape), R)


def essential_domain_probe(f: SpacelikeGraph, y, R: float = R_DEFAULT, tol: float = 1e-8) -> np.ndarray:
    """True where the transform is certified finite: interior maximiser and no growth from R to 2R."""
    a = legendre_transform(f, y, R)
    b = legendre_transform(f, y, 2 * R)
    stable = np.abs(b.value - a.value) <= tol * (1.0 + np.abs(a.value))
    return a.certified & b.certified & stable


# --- gradient image -------------------------------------------------------------

def _boundary_points(chart: ChartGrid, refine: int) -> np.ndarray:
    """Counterclockwise points along the boundary of the chart rectangle."""
    nu = (chart.n_u - 1) * refine + 1
    nv = (chart.n_v - 1) * refine + 1
    u = np.linspace(chart.u_min, chart.u_max, nu)
    v = np.linspace(chart.v_min, chart.v_max, nv)
    bottom = np.stack([u, np.full(nu, chart.v_min)], axis=-1)
    right = np.stack([np.full(nv, chart.u_max), v], axis=-1)
    top = np.stack([u[::-1], np.full(nu, chart.v_max)], axis=-1)
    left = np.stack([np.full(nv, chart.u_min), v[::-1]], axis=-1)
    return np.concatenate([bottom[:-1], right[:-1], top[:-1], left[:-1]], axis=0)


@dataclass
class GradientImage:
    """Df at the chart nodes, plus Df along the (refined) chart boundary.

    For strictly convex ``f`` the gradient is a diffeomorphism, so the image of
    the chart rectangle is the region enclosed by ``boundary``.
    """

    nodes: np.ndarray
    boundary: np.ndarray
    chart: ChartGrid

    def points(self) -> np.ndarray:
        return np.concatenate([self.nodes.reshape(-1, 2), self.boundary], axis=0)

    def polygon(self):
        poly = shapely.Polygon(self.boundary)
        shapely.prepare(poly)
        return poly


def gradient_image(f: SpacelikeGraph, chart: ChartGrid, refine: int = 8, derivatives=None) -> GradientImage:
    """Gradient image of the chart; ``derivatives`` may pass precomputed (f, Df, Hess f)."""
    df = f.derivatives(chart)[1] if derivatives is None else derivatives[1]
    edge = f.grad(_boundary_points(chart, refine))
    return GradientImage(np.asarray(df), np.asarray(edge), chart)


def _densify(ring: np.ndarray, spacing: float) -> np.ndarray:
    closed = np.concatenate([ring, ring[:1]], axis=0)
    seg = np.diff(closed, axis=0)
    lens = np.linalg.norm(seg, axis=-1)
    counts = np.maximum(1, np.ceil(lens / spacing).astype(int))
    out = [closed[i] + seg[i] * (np.arange(c)[:, None] / c) for i, c in enumerate(counts)]
    return np.concatenate(out, axis=0)


def region_hausdorff(image: GradientImage, d: StraightConvexDomain, spacing: float = 1e-2,
                     edge_spacing: float = 1e-5) -> float:
    """Hausdorff distance between the closed image region and the closed hull.

    The image-to-hull part is exact at the sampled points.  The image is
    convex, so the distance to it is a convex function whose supremum over
    the hull is reached on the hull boundary (sampled at 2 pi / 4096 or
    finer); a grid of the hull interior at ``spacing`` guards against a
    slightly non-convex polygon.  Image edges are resampled at ``edge_spacing``.
    """
    one_sided = float(np.max(d.distance_to(image.points())))
    hull_pts = interior_samples(d, spacing)
    poly = image.polygon()
    outside = hull_pts[~shapely.contains_xy(poly, hull_pts[:, 0], hull_pts[:, 1])]
    if len(outside) == 0:
        return one_sided
    tree = cKDTree(_densify(image.boundary, edge_spacing))
    dist, _ = tree.query(outside, workers=thread_count())
    return max(one_sided, float(np.max(dist)))


# --- finiteness on the circle --------------------------------------------------

@dataclass
class LegendreProfile:
    """Two-radius slope estimates lambda(t) on an angular grid, at radii R and 2R."""

    thetas: np.ndarray
    slope: np.ndarray
    slope_far: np.ndarray
    R: float

    @property
    def slope_limit(self) -> np.ndarray:
        # both estimates lag the support function by c/R; cancel that term
        return 2.0 * self.slope_far - self.slope

    def margins(self, theta) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Minimal margins min_t' lambda(t') - y.t' for y = (cos theta, sin theta).

        Returned at radius R, at 2R and for the extrapolated slope.
        """
        c = np.cos(np.subtract.outer(np.atleast_1d(theta), self.thetas))
        return tuple(np.min(s[None] - c, axis=1) for s in (self.slope, self.slope_far, self.slope_limit))


def legendre_profile(f: SpacelikeGraph, n: int = N_ANGLES, R: float = R_DEFAULT) -> LegendreProfile:
    t = np.arange(n) * (TWO_PI / n)
    u = np.stack([np.cos(t), np.sin(t)], axis=-1)
    vals = f.value(np.concatenate([0.5 * R * u, R * u, 2 * R * u], axis=0)).reshape(3, n)
    slope = (vals[1] - vals[0]) / (0.5 * R)
    far = (vals[2] - vals[1]) / R
    return LegendreProfile(t, slope, far, R)


@dataclass
class FinitenessVerdict:
    state: str
    margin: float
    margin_far: float
    extrapolated: float

    def to_json(self) -> dict:
        return {"state": self.state, "margin": self.margin, "margin_far": self.margin_far,
                "extrapolated": self.extrapolated}


def angular_slack(n: int) -> float:
    """Half the angular sample spacing; a sample this close to the finite set counts as in it."""
    return float(np.pi / n)


def _decide(ext, delta: float, n: int) -> np.ndarray:
    # on the circle the limiting margin is <= 0, with equality exactly on the finite set
    slack = max(delta, angular_slack(n))
    return np.where(ext >= -slack, "finite", np.where(ext <= -slack - delta, "infinite", "undecided"))


def finiteness_test(f: SpacelikeGraph, theta: float, R: float = R_DEFAULT, delta: float = DELTA_MARGIN,
                    n: int = N_ANGLES, profile: LegendreProfile | None = None) -> FinitenessVerdict:
    """Three-valued finiteness of the transform at the circle point (cos theta, sin theta)."""
    prof = legendre_profile(f, n, R) if profile is None else profile
    m, m2, ext = prof.margins(theta)
    state = _decide(ext, delta, len(prof.thetas))
    return FinitenessVerdict(str(state[0]), float(m[0]), float(m2[0]), float(ext[0]))


@dataclass
class FinitenessSet:
    thetas: np.ndarray
    states: np.ndarray
    margins: np.ndarray
    margins_far: np.ndarray
    extrapolated: np.ndarray

    @property
    def finite(self) -> np.ndarray:
        return self.states == "finite"

    def runs(self) -> list[tuple[int, int]]:
        """Maximal cyclic runs of finite samples as (first index, length)."""
        fin = self.finite
        n = len(fin)
        if np.all(fin):
            return [(0, n)]
        start = int(np.flatnonzero(~fin)[0])
        out = []
        k = 0
        while k < n:
            i = (start + k) % n
            if fin[i]:
                j = k
                while j < n and fin[(start + j) % n]:
                    j += 1
                out.append((i, j - k))
                k = j
            else:
                k += 1
        return sorted(out)

    def components(self, short_run: int = SHORT_RUN):
        """Arcs (start, end) for long runs and isolated angles for short ones."""
        n = len(self.thetas)
        step = TWO_PI / n
        if np.all(self.finite):
            return [], [(0.0, TWO_PI)]
        points, arcs = [], []
        for i, length in self.runs():
            if length < short_run:
                points.append(float((self.thetas[i] + 0.5 * (length - 1) * step) % TWO_PI))
            else:
                arcs.append((float(self.thetas[i]), float((self.thetas[i] + (length - 1) * step) % TWO_PI)))
        return points, arcs

    def csv_rows(self) -> list[tuple[float, float, str]]:
        return [(float(t), float(m), str(s)) for t, m, s in zip(self.thetas, self.extrapolated, self.states)]

    def to_json(self, short_run: int = SHORT_RUN) -> dict:
        points, arcs = self.components(short_run)
        return {"points": points, "arcs": [list(a) for a in arcs],
                "counts": {s: int(np.sum(self.states == s)) for s in ("finite", "infinite", "undecided")}}


def finiteness_sweep(f: SpacelikeGraph, n: int = N_ANGLES, R: float = R_DEFAULT,
                     delta: float = DELTA_MARGIN) -> FinitenessSet:
    prof = legendre_profile(f, n, R)
    m, m2, ext = prof.margins(prof.thetas)
    return FinitenessSet(prof.thetas, _decide(ext, delta, n), m, m2, ext)


def essential_hull(f: SpacelikeGraph, n: int = N_ANGLES, R: float = R_DEFAULT, delta: float = DELTA_MARGIN,
                   sweep: FinitenessSet | None = None) -> StraightConvexDomain:
    """Hull of the boundary finiteness set of the transform.

    Raises
    ------
    DegenerateHullError
        If fewer than three boundary points are finite, or every sample is undecided.
    """
    fs = finiteness_sweep(f, n, R, delta) if sweep is None else sweep
    if np.all(fs.states == "undecided"):
        raise DegenerateHullError("finiteness undecided at every sampled angle")
    if np.all(fs.finite):
        return full_disc()
    points, arcs = fs.components()
    return hull_of_circle_subset(points=points, arcs=arcs)


# --- theorem check ------------------------------------------------------------

@dataclass
class InjectivityAudit:
    min_gap: float
    min_det_hessian: float

    @property
    def ok(self) -> bool:
        return self.min_gap > INJECTIVE_GAP and self.min_det_hessian > 0

    def to_json(self) -> dict:
        return {"min_gap": self.min_gap, "min_det_hessian": self.min_det_hessian,
                "result": "pass" if self.ok else "fail"}


def injectivity_audit(df, hess) -> InjectivityAudit:
    """Distinct gradients at distinct nodes and a positive definite Hessian everywhere."""
    pts = np.asarray(df).reshape(-1, 2)
    dist, _ = cKDTree(pts).query(pts, k=2)
    return InjectivityAudit(float(np.min(dist[:, 1])), float(np.min(_det2(np.asarray(hess)))))


@dataclass
class TheoremReport:
    family: str
    extents: list[float]
    hausdorff_by_extent: list[float]
    monotone: bool
    injectivity: InjectivityAudit | None
    finiteness: FinitenessSet | None
    hull: StraightConvexDomain | None
    precondition: dict
    verdict: str
    notes: list[str] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "family": self.family,
            "extents": list(self.extents),
            "hausdorff_by_extent": list(self.hausdorff_by_extent),
            "monotone": self.monotone,
            "injectivity": None if self.injectivity is None else self.injectivity.to_json(),
            "finiteness_arcs": None if self.finiteness is None else self.finiteness.to_json(),
            "hull": None if self.hull is None else self.hull.to_json(),
            "precondition": self.precondition,
            "pinching": "asserted beyond chart",
            "verdict": self.verdict,
            "notes": list(self.notes),
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)


def theorem_check(f: SpacelikeGraph, extents=(1.5, 3.0, 6.0, 12.0), nodes: int = 601, n_angles: int = N_ANGLES,
                  R: float = R_DEFAULT, delta: float = DELTA_MARGIN, spacing: float = 1e-2) -> TheoremReport:
    """Compare the gradient image of growing charts with the hull of the finiteness set.

    The verdict is the consistency string when the Hausdorff distances
    decrease strictly with the extent and the injectivity audit passes.  A
    failed precondition (not spacelike, not strictly convex, or curvature not
    pinched negative on the chart) is reported rather than raised.
    """
    extents = sorted(float(e) for e in extents)
    charts = [ChartGrid.square(e, 2 * e / (nodes - 1)) for e in extents]
    derivs = [f.derivatives(c) for c in charts]
    pre = spacelike_report(derivs[-1][1], derivs[-1][2], f.lipschitz_margin)
    notes = list(pre.notes)
    ok_pre = pre.spacelike and pre.strictly_convex and pre.pinched_negative
    if not ok_pre:
        if pre.spacelike and not pre.strictly_convex and "curvature not pinched negative" not in notes:
            notes.append("not strictly convex")
        return TheoremReport(f.name, extents, [], False, None, None, None, pre.to_json(),
                             "precondition failure", notes)
    sweep = finiteness_sweep(f, n_angles, R, delta)
    try:
        hull = essential_hull(f, sweep=sweep)
    except DegenerateHullError as exc:
        notes.append(str(exc))
        return TheoremReport(f.name, extents, [], False, None, sweep, None, pre.to_json(),
                             "precondition failure", notes)
    dists = [region_hausdorff(gradient_image(f, c, derivatives=d), hull, spacing) for c, d in zip(charts, derivs)]
    monotone = bool(all(b < a for a, b in zip(dists, dists[1:])))
    inj = injectivity_audit(derivs[-1][1], derivs[-1][2])
    verdict = "consistent with Theorem" if monotone and inj.ok else "inconsistent"
    return TheoremReport(f.name, extents, dists, monotone, inj, sweep, hull, pre.to_json(), verdict, notes)
