"""SVG figures of straight convex domains and Gauss-image samples in the Klein or Poincare disc."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .hull import StraightConvexDomain

SIZE = 480
MARGIN = 20
MAX_POINTS = 2000
ARC_SAMPLES = 96


def klein_to_poincare(y) -> np.ndarray:
    """Klein coordinates to Poincare disc coordinates."""
    y = np.asarray(y, dtype=float)
    r2 = np.clip(np.sum(y * y, axis=-1, keepdims=True), 0.0, 1.0)
    return y / (1.0 + np.sqrt(1.0 - r2))


def _geodesic(p: np.ndarray, q: np.ndarray, poincare: bool) -> np.ndarray:
    """Polyline of the geodesic between two ideal points."""
    if not poincare:
        return np.stack([p, q])
    cos_d = float(np.clip(p @ q, -1.0, 1.0))
    if cos_d <= -1.0 + 1e-9:
        return np.stack([p, q])
    # circle orthogonal to the unit circle through p and q
    c = (p + q) / (1.0 + cos_d)
    a0 = np.arctan2(*(p - c)[::-1])
    a1 = np.arctan2(*(q - c)[::-1])
    d = (a1 - a0 + np.pi) % (2 * np.pi) - np.pi
    t = a0 + np.linspace(0.0, d, ARC_SAMPLES)
    r = np.linalg.norm(p - c)
    return c + r * np.stack([np.cos(t), np.sin(t)], axis=-1)


def _circle_arc(start: float, length: float) -> np.ndarray:
    n = max(2, int(np.ceil(ARC_SAMPLES * length / np.pi)) + 1)
    t = start + np.linspace(0.0, length, n)
    return np.stack([np.cos(t), np.sin(t)], axis=-1)


def boundary_polyline(d: StraightConvexDomain, poincare: bool = False) -> np.ndarray:
    """Closed polyline along the domain boundary: circle arcs and geodesic chords, counterclockwise."""
    if d.is_full_disc:
        return _circle_arc(0.0, 2 * np.pi)
    pieces = []
    comps = list(d.components)
    for i, (a, length) in enumerate(comps):
        if length > 0:
            pieces.append(_circle_arc(a, length))
        nxt = comps[(i + 1) % len(comps)][0]
        p = np.array([np.cos(a + length), np.sin(a + length)])
        q = np.array([np.cos(nxt), np.sin(nxt)])
        pieces.append(_geodesic(p, q, poincare))
    return np.concatenate(pieces, axis=0)


def _screen(y) -> np.ndarray:
    s = 0.5 * SIZE - MARGIN
    y = np.asarray(y, dtype=float)
    return np.stack([0.5 * SIZE + s * y[..., 0], 0.5 * SIZE - s * y[..., 1]], axis=-1)


def _path(points) -> str:
    pts = _screen(points)
    head = f"M {pts[0, 0]:.3f} {pts[0, 1]:.3f}"
    return head + "".join(f" L {x:.3f} {y:.3f}" for x, y in pts[1:]) + " Z"


def render_svg(domains=(), point_sets=(), poincare: bool = False, title: str = "") -> str:
    """SVG source; ``point_sets`` are Klein coordinates, thinned to at most 2000 points each."""
    r = 0.5 * SIZE - MARGIN
    lines = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" '
             f'viewBox="0 0 {SIZE} {SIZE}">']
    if title:
        lines.append(f"<title>{title}</title>")
    lines.append(f'<circle cx="{0.5 * SIZE:.3f}" cy="{0.5 * SIZE:.3f}" r="{r:.3f}" fill="none" '
                 f'stroke="black" stroke-width="1"/>')
    for pts in point_sets:
        pts = np.asarray(pts, dtype=float).reshape(-1, 2)
        stride = max(1, int(np.ceil(len(pts) / MAX_POINTS)))
        pts = pts[::stride]
        if poincare:
            pts = klein_to_poincare(pts)
        for x, y in _screen(pts):
            lines.append(f'<circle cx="{x:.3f}" cy="{y:.3f}" r="1.2" fill="steelblue"/>')
    for d in domains:
        if d.is_full_disc:
            continue
        lines.append(f'<path d="{_path(boundary_polyline(d, poincare))}" fill="none" stroke="firebrick" '
                     f'stroke-width="1.5"/>')
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


def emit_klein_figure(path, domains=(), point_sets=(), poincare: bool = False, title: str = "") -> Path:
    """Write the figure to ``path`` and return it."""
    path = Path(path)
    path.write_text(render_svg(domains, point_sets, poincare, title))
    return path
