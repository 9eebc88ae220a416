"""Minkowski space R^{2,1}, the hyperboloid and Klein models, Lorentz isometries.

Points and vectors are plain ``ndarray`` objects whose last axis has length 3
(ambient vectors) or 2 (Klein coordinates); every function broadcasts over
leading axes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

TOL_MODEL = 1e-9
TOL_DISC = 1e-12
TOL_ALIGN = 1e-8

J = np.diag([1.0, 1.0, -1.0])


class ModelError(ValueError):
    """Raised when a point or matrix violates the invariants of its model."""


def mink_inner(x, y):
    """Minkowski product x1*y1 + x2*y2 - x3*y3 along the last axis."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return x[..., 0] * y[..., 0] + x[..., 1] * y[..., 1] - x[..., 2] * y[..., 2]


def mink_norm2(x):
    return mink_inner(x, x)


def mink_cross(a, b):
    """Vector orthogonal (for the Minkowski product) to both ``a`` and ``b``."""
    return np.cross(a, b) * np.array([1.0, 1.0, -1.0])


def check_hyperboloid(p, tol=TOL_MODEL):
    p = np.asarray(p, dtype=float)
    bad = (np.abs(mink_norm2(p) + 1.0) > tol * (1.0 + np.abs(p[..., 2]) ** 2)) | (p[..., 2] <= 0)
    if np.any(bad):
        raise ModelError("point(s) not on the future sheet of the hyperboloid")
    return p


def klein_project(p, check=True):
    """Radial projection of hyperboloid points to the Klein disc at height 1."""
    p = np.asarray(p, dtype=float)
    if check:
        check_hyperboloid(p)
    return p[..., :2] / p[..., 2:3]


def klein_lift(y, tol=TOL_DISC):
    """Inverse of :func:`klein_project`: (y, 1) / sqrt(1 - |y|^2)."""
    y = np.asarray(y, dtype=float)
    r2 = np.sum(y * y, axis=-1)
    if np.any(r2 >= (1.0 - tol) ** 2):
        raise ModelError("Klein point(s) outside the open unit disc")
    s = np.sqrt(1.0 - r2)[..., None]
    return np.concatenate([y, np.ones_like(y[..., :1])], axis=-1) / s


def klein_lift_jacobian(y):
    """Derivative of :func:`klein_lift`, shape (..., 3, 2)."""
    y = np.asarray(y, dtype=float)
    r2 = np.sum(y * y, axis=-1)
    s = np.sqrt(1.0 - r2)[..., None, None]
    top = np.broadcast_to(np.eye(3, 2), y.shape[:-1] + (3, 2))
    lifted = np.concatenate([y, np.ones_like(y[..., :1])], axis=-1)
    return top / s + lifted[..., :, None] * y[..., None, :] / s**3


def klein_metric(y):
    """Hyperbolic metric tensor in Klein coordinates, shape (..., 2, 2)."""
    y = np.asarray(y, dtype=float)
    w = 1.0 - np.sum(y * y, axis=-1)
    if np.any(w <= 0):
        raise ModelError("Klein point(s) outside the open unit disc")
    eye = np.eye(2)
    return eye / w[..., None, None] + y[..., :, None] * y[..., None, :] / (w**2)[..., None, None]


def normalize_hyperboloid(p):
    """Rescale timelike future vectors onto the hyperboloid."""
    p = np.asarray(p, dtype=float)
    return p / np.sqrt(-mink_norm2(p))[..., None]


def hyperbolic_distance(p, q):
    """Distance on the hyperboloid, stable for nearby points."""
    d = np.asarray(p, dtype=float) - np.asarray(q, dtype=float)
    chord2 = np.clip(mink_norm2(d), 0.0, None)
    return 2.0 * np.arcsinh(0.5 * np.sqrt(chord2))


@dataclass(frozen=True, eq=False)
class LorentzIsometry:
    """An element of SO_0(2,1) acting linearly on R^{2,1}."""

    m: np.ndarray

    def __post_init__(self):
        m = np.array(self.m, dtype=float)
        if m.shape != (3, 3):
            raise ModelError("isometry matrix must be 3x3")
        scale = max(1.0, float(np.max(np.abs(m))) ** 2)
        if np.max(np.abs(m.T @ J @ m - J)) > TOL_MODEL * scale:
            raise ModelError("matrix does not preserve the Minkowski product")
        if abs(np.linalg.det(m) - 1.0) > TOL_MODEL * scale:
            raise ModelError("matrix is not orientation preserving")
        if m[2, 2] <= 0:
            raise ModelError("matrix does not preserve the future cone")
        m.setflags(write=False)
        object.__setattr__(self, "m", m)

    def __call__(self, x):
        return np.asarray(x, dtype=float) @ self.m.T

    def __matmul__(self, other: LorentzIsometry) -> LorentzIsometry:
        return LorentzIsometry(self.m @ other.m)

    def inverse(self) -> LorentzIsometry:
        return LorentzIsometry(J @ self.m.T @ J)

    def act_klein(self, y):
        """Induced projective action on Klein coordinates."""
        return klein_project(self(klein_lift(y)), check=False)

    @classmethod
    def identity(cls) -> LorentzIsometry:
        return cls(np.eye(3))

    @classmethod
    def rotation(cls, angle: float) -> LorentzIsometry:
        c, s = np.cos(angle), np.sin(angle)
        return cls(np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]]))

    @classmethod
    def boost(cls, rapidity: float, angle: float = 0.0) -> LorentzIsometry:
        """Boost of the given rapidity in the horizontal direction ``angle``."""
        ch, sh = np.cosh(rapidity), np.sinh(rapidity)
        b = np.array([[ch, 0.0, sh], [0.0, 1.0, 0.0], [sh, 0.0, ch]])
        r = cls.rotation(angle).m
        return cls(r @ b @ r.T)

    @classmethod
    def random(cls, rng: np.random.Generator, max_rapidity: float = 2.0) -> LorentzIsometry:
        a, b = rng.uniform(0.0, 2 * np.pi, size=2)
        t = rng.uniform(0.0, max_rapidity)
        return cls.rotation(a) @ cls.boost(t, b)


@dataclass(frozen=True, eq=False)
class FrameState:
    """Position, tangent frame and future unit normal of a spacelike surface."""

    sigma: np.ndarray
    e1: np.ndarray
    e2: np.ndarray
    nu: np.ndarray

    def matrix(self) -> np.ndarray:
        """Columns e1, e2, nu."""
        return np.stack([self.e1, self.e2, self.nu], axis=-1)

    def gram(self) -> np.ndarray:
        s = self.matrix()
        return s.T @ J @ s

    def check(self, metric=None, tol: float = TOL_ALIGN) -> float:
        """Largest violation of the frame invariants (raises if above ``tol``)."""
        gram = self.gram()
        target = np.zeros((3, 3))
        target[:2, :2] = gram[:2, :2] if metric is None else metric
        target[2, 2] = -1.0
        err = float(np.max(np.abs(gram - target)))
        if err > tol or self.nu[2] <= 0 or gram[0, 0] <= 0 or gram[1, 1] <= 0:
            raise ModelError(f"frame invariants violated (residual {err:.3g})")
        return err


def frame_alignment_isometry(src: FrameState, dst: FrameState, tol: float = TOL_ALIGN) -> LorentzIsometry:
    """The unique Lorentz isometry carrying (e1, e2, nu) of ``src`` to those of ``dst``."""
    gs = src.gram()
    src.check(tol=tol * max(1.0, float(np.max(np.abs(gs)))))
    gd = dst.gram()
    dst.check(tol=tol * max(1.0, float(np.max(np.abs(gd)))))
    if np.max(np.abs(gs - gd)) > tol * max(1.0, float(np.max(np.abs(gs)))):
        raise ModelError("frames are not isometric: Gram matrices differ")
    a = np.linalg.solve(src.matrix().T, dst.matrix().T).T
    return LorentzIsometry(a)
