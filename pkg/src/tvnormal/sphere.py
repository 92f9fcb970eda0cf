"""Riemannian primitives on the unit sphere S2 embedded in R3.

Points are unit 3-vectors, tangent vectors at ``n`` are 3-vectors orthogonal
to ``n``, and the metric is the Euclidean inner product of the embedding.
All functions are pure and accept arrays of shape (..., 3), operating
pointwise on the leading axes; they are safe to call concurrently.

The log map returns a tangent vector whose norm equals the geodesic distance
arccos(a . b).  (The unnormalized direction ``b - (a.b) a`` has norm
``sqrt(1 - (a.b)^2)``, i.e. the sine of the distance, which is why the
closed form rescales it.)
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import AntipodalPoints

__all__ = [
    "UnitNormal",
    "TangentVector",
    "geodesic_distance",
    "geodesic",
    "exp_map",
    "log_map",
    "parallel_transport",
    "parallel_transport_trig",
    "tangent_project",
    "random_unit_vectors",
]

# Below this on 1 + a.b the log direction is numerically meaningless.
ANTIPODAL_TOL = 1e-10
# Below this tangent norm, geodesics collapse to the base point.
ZERO_TANGENT = 1e-14
# Below this distance, transport degenerates to re-projection.
TRANSPORT_NEAR = 1e-8


def _dot(a, b):
    return np.einsum("...i,...i->...", a, b)


def tangent_project(n, w):
    """Orthogonal projection of ``w`` onto the tangent space at ``n``."""
    n = np.asarray(n, dtype=float)
    w = np.asarray(w, dtype=float)
    return w - _dot(n, w)[..., None] * n


def geodesic_distance(a, b):
    """Arc-length distance arccos(a . b), in [0, pi].

    The dot product is clamped to [-1, 1] to absorb roundoff; near the ends
    of that interval the equivalent arcsin forms of the same quantity are
    used, which stay fully accurate where arccos loses digits.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    c = np.clip(_dot(a, b), -1.0, 1.0)
    near = 2.0 * np.arcsin(np.clip(0.5 * np.linalg.norm(b - a, axis=-1), 0.0, 1.0))
    far = np.pi - 2.0 * np.arcsin(np.clip(0.5 * np.linalg.norm(b + a, axis=-1), 0.0, 1.0))
    mid = np.arccos(c)
    return np.asarray(np.where(c > 0.5, near, np.where(c < -0.5, far, mid)))


def geodesic(n, xi, t):
    """Point at parameter ``t`` on the geodesic leaving ``n`` with velocity ``xi``."""
    n = np.asarray(n, dtype=float)
    xi = np.asarray(xi, dtype=float)
    t = np.asarray(t, dtype=float)
    speed = np.linalg.norm(xi, axis=-1)
    ang = t * speed
    safe = np.where(speed < ZERO_TANGENT, 1.0, speed)
    out = np.cos(ang)[..., None] * n + (np.sin(ang) / safe)[..., None] * xi
    still = speed < ZERO_TANGENT
    if np.any(still):
        out = np.where(np.broadcast_to(still[..., None], out.shape), n, out)
    return out


def exp_map(n, xi):
    """Exponential map: the geodesic at unit parameter."""
    return geodesic(n, xi, 1.0)


def _check_not_antipodal(c):
    if np.any(1.0 + c <= ANTIPODAL_TOL):
        raise AntipodalPoints("log/transport undefined between antipodal points")


def log_map(n, n2):
    """Inverse of the exponential map at ``n``; norm equals the distance.

    Raises
    ------
    AntipodalPoints
        If 1 + n . n2 <= 1e-10 for any pair.
    """
    n = np.asarray(n, dtype=float)
    n2 = np.asarray(n2, dtype=float)
    c = np.clip(_dot(n, n2), -1.0, 1.0)
    _check_not_antipodal(c)
    w = n2 - c[..., None] * n
    wn = np.linalg.norm(w, axis=-1)
    d = geodesic_distance(n, n2)
    safe = np.where(wn < ZERO_TANGENT, 1.0, wn)
    out = (d / safe)[..., None] * w
    coincident = wn < ZERO_TANGENT
    if np.any(coincident):
        out = np.where(np.broadcast_to(coincident[..., None], out.shape), 0.0, out)
    return out


def parallel_transport(n, n2, xi):
    """Parallel transport of ``xi`` from T_n to T_n2 along the shortest geodesic.

    Uses the log-based closed form
    ``xi - <xi, v> / d^2 * (log_n(n2) + log_n2(n))`` with ``v = log_n(n2)``
    and ``d`` the distance; distances below 1e-8 fall back to re-projecting
    ``xi`` onto the target tangent plane, where the quotient degenerates.
    """
    n = np.asarray(n, dtype=float)
    n2 = np.asarray(n2, dtype=float)
    xi = np.asarray(xi, dtype=float)
    c = np.clip(_dot(n, n2), -1.0, 1.0)
    _check_not_antipodal(c)
    d = geodesic_distance(n, n2)
    near = d < TRANSPORT_NEAR
    v = log_map(n, n2)
    v_back = log_map(n2, n)
    d2 = np.where(near, 1.0, d * d)
    factor = _dot(xi, v) / d2
    out = xi - factor[..., None] * (v + v_back)
    if np.any(near):
        proj = tangent_project(n2, xi)
        out = np.where(np.broadcast_to(near[..., None], out.shape), proj, out)
    return out


def parallel_transport_trig(n, n2, xi):
    """Transport via the trigonometric closed form.

    ``xi + (cos(d) u - u - sin(d) n) (u . xi)`` with ``u`` the unit initial
    velocity; agrees with :func:`parallel_transport` wherever both are
    defined and is kept as an independent cross-check.
    """
    n = np.asarray(n, dtype=float)
    n2 = np.asarray(n2, dtype=float)
    xi = np.asarray(xi, dtype=float)
    c = np.clip(_dot(n, n2), -1.0, 1.0)
    _check_not_antipodal(c)
    d = geodesic_distance(n, n2)
    near = d < TRANSPORT_NEAR
    v = log_map(n, n2)
    dsafe = np.where(near, 1.0, d)
    u = v / dsafe[..., None]
    coef = _dot(u, xi)
    out = xi + coef[..., None] * (
        (np.cos(d) - 1.0)[..., None] * u - np.sin(d)[..., None] * n
    )
    if np.any(near):
        proj = tangent_project(n2, xi)
        out = np.where(np.broadcast_to(near[..., None], out.shape), proj, out)
    return out


def random_unit_vectors(rng: np.random.Generator, size: int) -> np.ndarray:
    """Uniform samples on S2, shape (size, 3)."""
    v = rng.normal(size=(size, 3))
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


@dataclass(frozen=True)
class UnitNormal:
    """A point on S2, renormalized to unit length on construction."""

    v: np.ndarray

    def __init__(self, v):
        v = np.asarray(v, dtype=float).reshape(3)
        norm = np.linalg.norm(v)
        if norm == 0.0:
            raise ValueError("cannot normalize the zero vector")
        object.__setattr__(self, "v", v / norm)

    def distance_to(self, other: "UnitNormal") -> float:
        return float(geodesic_distance(self.v, other.v))

    def antipode(self) -> "UnitNormal":
        return UnitNormal(-self.v)


@dataclass(frozen=True)
class TangentVector:
    """A tangent vector ``w`` at base point ``base`` on S2."""

    base: UnitNormal
    w: np.ndarray = field(default=None)

    def __init__(self, base: UnitNormal, w):
        if not isinstance(base, UnitNormal):
            base = UnitNormal(base)
        w = np.asarray(w, dtype=float).reshape(3)
        dev = abs(float(np.dot(base.v, w)))
        if dev > 1e-12 * max(1.0, float(np.linalg.norm(w))):
            raise ValueError(f"vector is not tangent at the base point (n.w = {dev:g})")
        object.__setattr__(self, "base", base)
        object.__setattr__(self, "w", w)

    @classmethod
    def project(cls, base: UnitNormal, w) -> "TangentVector":
        """Build a tangent vector by projecting ``w`` onto the tangent plane."""
        if not isinstance(base, UnitNormal):
            base = UnitNormal(base)
        return cls(base, tangent_project(base.v, np.asarray(w, dtype=float)))

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.w))

    def exp(self) -> UnitNormal:
        return UnitNormal(exp_map(self.base.v, self.w))

    def transport_to(self, target: UnitNormal) -> "TangentVector":
        return TangentVector(target, parallel_transport(self.base.v, target.v, self.w))


def log_between(a: UnitNormal, b: UnitNormal) -> TangentVector:
    """Log map between wrapped points."""
    return TangentVector(a, log_map(a.v, b.v))
