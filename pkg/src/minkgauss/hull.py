"""Convex hulls of subsets of the unit circle, viewed in the Klein disc.

A subset of S^1 is given by isolated angles and closed counterclockwise arcs
``(start, end)``.  Every point of the circle is an extreme point of the disc,
so the hull boundary is obtained by sorting the support by angle: consecutive
support components are joined by chords and arcs are kept as circular edges.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

TWO_PI = 2.0 * np.pi
ANGLE_EPS = 1e-12


class DegenerateHullError(ValueError):
    """The support set has fewer than three points, so the hull has no interior."""


def _wrap(theta):
    return np.mod(theta, TWO_PI)


def _unit(theta):
    return np.array([np.cos(theta), np.sin(theta)])


def _merge_components(points, arcs):
    """Sorted, disjoint components (start, length) of the support set."""
    comps = []
    for a, b in arcs:
        length = float(_wrap(b - a))
        if length < ANGLE_EPS and abs(b - a) >= TWO_PI - ANGLE_EPS:
            length = TWO_PI
        comps.append((float(_wrap(a)), length))
    comps += [(float(_wrap(p)), 0.0) for p in points]
    if any(length >= TWO_PI - ANGLE_EPS for _, length in comps):
        return [(0.0, TWO_PI)]
    comps.sort()
    merged = []
    for a, length in comps:
        if merged and a <= merged[-1][0] + merged[-1][1] + ANGLE_EPS:
            s, l0 = merged[-1]
            merged[-1] = (s, max(l0, a + length - s))
        else:
            merged.append((a, length))
    # the last component may wrap past 2*pi over the first ones
    while len(merged) > 1 and merged[-1][0] + merged[-1][1] + ANGLE_EPS >= merged[0][0] + TWO_PI:
        a0, l0 = merged.pop(0)
        s, l1 = merged[-1]
        merged[-1] = (s, max(l1, a0 + TWO_PI + l0 - s))
    if merged and merged[-1][1] >= TWO_PI - ANGLE_EPS:
        return [(0.0, TWO_PI)]
    return sorted(merged)


@dataclass(frozen=True)
class StraightConvexDomain:
    """Hull of a subset of S^1 with non-empty interior.

    ``components`` is the angularly sorted list of disjoint support pieces
    ``(start, length)``; a length of zero is an isolated ideal point, a length
    of ``2*pi`` is the whole circle.
    """

    components: tuple[tuple[float, float], ...]

    @property
    def is_full_disc(self) -> bool:
        return len(self.components) == 1 and self.components[0][1] >= TWO_PI - ANGLE_EPS

    @property
    def arcs(self) -> list[tuple[float, float]]:
        return [(a, float(_wrap(a + length)) if length < TWO_PI - ANGLE_EPS else a + TWO_PI)
                for a, length in self.components if length > 0]

    @property
    def points(self) -> list[float]:
        return [a for a, length in self.components if length == 0]

    @property
    def vertices(self) -> np.ndarray:
        """Chord endpoints in counterclockwise order, shape (n, 2)."""
        if self.is_full_disc:
            return np.zeros((0, 2))
        out = []
        for a, length in self.components:
            out.append(_unit(a))
            if length > 0:
                out.append(_unit(a + length))
        return np.array(out)

    def chords(self) -> list[tuple[np.ndarray, np.ndarray]]:
        """Chords (p, q) bounding the hull; the hull lies to the left of p -> q."""
        if self.is_full_disc:
            return []
        comps = list(self.components)
        out = []
        for i, (a, length) in enumerate(comps):
            nxt = comps[(i + 1) % len(comps)][0]
            p = _unit(a + length)
            q = _unit(nxt)
            if np.linalg.norm(p - q) > ANGLE_EPS:
                out.append((p, q))
        return out

    def contains(self, y, strict: bool = True) -> np.ndarray:
        """Interior (or closure, when ``strict`` is False) membership, vectorised."""
        y = np.asarray(y, dtype=float)
        r2 = np.sum(y * y, axis=-1)
        inside = r2 < 1.0 if strict else r2 <= 1.0 + 1e-12
        for p, q in self.chords():
            d = q - p
            cross = d[0] * (y[..., 1] - p[1]) - d[1] * (y[..., 0] - p[0])
            inside &= cross > 0 if strict else cross >= -1e-12
        return inside

    def boundary_samples(self, spacing: float = 2 * np.pi / 4096) -> np.ndarray:
        """Points along the hull boundary (arcs and chords) with roughly uniform spacing."""
        pts = []
        for a, length in self.components:
            if length > 0:
                n = max(2, int(np.ceil(length / spacing)) + 1)
                t = a + np.linspace(0.0, length, n)
                pts.append(np.stack([np.cos(t), np.sin(t)], axis=-1))
            else:
                pts.append(_unit(a)[None])
        for p, q in self.chords():
            n = max(2, int(np.ceil(np.linalg.norm(q - p) / spacing)) + 1)
            s = np.linspace(0.0, 1.0, n)[:, None]
            pts.append(p + s * (q - p))
        return np.concatenate(pts, axis=0)

    def distance_to(self, y) -> np.ndarray:
        """Euclidean distance from points to the closed hull (0 inside)."""
        y = np.asarray(y, dtype=float)
        out = np.zeros(y.shape[:-1])
        outside = ~self.contains(y, strict=False)
        if not np.any(outside):
            return out
        z = y[outside]
        best = np.full(z.shape[0], np.inf)
        for p, q in self.chords():
            d = q - p
            s = np.clip(((z - p) @ d) / (d @ d), 0.0, 1.0)
            best = np.minimum(best, np.linalg.norm(z - (p + s[:, None] * d), axis=-1))
        r = np.linalg.norm(z, axis=-1)
        theta = _wrap(np.arctan2(z[:, 1], z[:, 0]))
        for a, length in self.components:
            if length > 0:
                rel = _wrap(theta - a)
                on_arc = rel <= length
                best = np.where(on_arc, np.minimum(best, np.abs(r - 1.0)), best)
            ends = [a, a + length]
            for e in ends:
                best = np.minimum(best, np.linalg.norm(z - _unit(e), axis=-1))
        out[outside] = best
        return out

    def to_json(self) -> dict:
        return {
            "vertices": [[float(v[0]), float(v[1])] for v in self.vertices],
            "arcs": [[float(a), float(b)] for a, b in self.arcs],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json())

    @classmethod
    def from_json(cls, data: dict) -> StraightConvexDomain:
        arcs = [tuple(a) for a in data.get("arcs", [])]
        ends = [_unit(x) for a in arcs for x in a]
        points = []
        for v in data.get("vertices", []):
            v = np.asarray(v, dtype=float)
            if not any(np.linalg.norm(v - e) < 1e-9 for e in ends):
                points.append(float(np.arctan2(v[1], v[0])))
        return hull_of_circle_subset(points=points, arcs=arcs)


def hull_of_circle_subset(points=(), arcs=()) -> StraightConvexDomain:
    """Convex hull of isolated points (angles) and closed ccw arcs of S^1.

    Raises
    ------
    DegenerateHullError
        If the subset has fewer than three points.
    """
    comps = _merge_components(list(points), list(arcs))
    n_points = sum(1 for _, length in comps if length == 0)
    if not any(length > 0 for _, length in comps) and n_points < 3:
        raise DegenerateHullError(f"support has {n_points} point(s); at least three are needed")
    return StraightConvexDomain(tuple(comps))


def full_disc() -> StraightConvexDomain:
    return StraightConvexDomain(((0.0, TWO_PI),))


def domain_contains(d: StraightConvexDomain, y) -> np.ndarray:
    return d.contains(y, strict=True)


def interior_samples(d: StraightConvexDomain, spacing: float) -> np.ndarray:
    """Grid points of the closed hull plus a dense boundary sampling."""
    ax = np.arange(-1.0, 1.0 + spacing / 2, spacing)
    yy = np.stack(np.meshgrid(ax, ax, indexing="ij"), axis=-1).reshape(-1, 2)
    inner = yy[d.contains(yy, strict=False)]
    return np.concatenate([inner, d.boundary_samples(spacing=min(spacing, 2 * np.pi / 4096))], axis=0)


def hausdorff_distance(sample, d: StraightConvexDomain, spacing: float = 2.5e-3) -> float:
    """Symmetric Hausdorff distance between a point sample and the closed hull.

    The sample-to-hull part is exact; the hull-to-sample part is a supremum over
    a dense discretisation of the hull (boundary at ``2*pi/4096`` or finer).
    """
    sample = np.asarray(sample, dtype=float).reshape(-1, 2)
    if sample.shape[0] == 0:
        raise ValueError("empty sample")
    one_sided = float(np.max(d.distance_to(sample)))
    tree = cKDTree(sample)
    dist, _ = tree.query(interior_samples(d, spacing))
    return max(one_sided, float(np.max(dist)))
