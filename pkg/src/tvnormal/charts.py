"""Parametric charts for closed genus-0 surfaces.

Every chart maps spherical parameters ``(theta, phi)`` to points of a closed
surface in R3 and provides analytic derivatives up to second order, which is
what the curvature and shape-calculus pipelines require.  Supported families:
spheres, ellipsoids, star-shaped radial graphs ``x = rho(theta, phi) *
omega(theta, phi)`` with ``rho`` a real spherical-harmonic expansion, plus
wrappers for scaled, rotated and perturbed versions of a base chart.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import harmonics
from .errors import InvalidChart

__all__ = [
    "ChartJet",
    "SurfaceChart",
    "SphereChart",
    "EllipsoidChart",
    "RadialChart",
    "ScaledChart",
    "RotatedChart",
    "PerturbedChart",
    "build_chart",
    "MAX_HARMONIC_DEGREE",
]

# Soft cap keeping quadrature exactness cheap for config-driven charts.
MAX_HARMONIC_DEGREE = 24


@dataclass(frozen=True)
class ChartJet:
    """Position and parametric derivatives of a chart at a set of nodes."""

    x: np.ndarray
    x_t: np.ndarray
    x_p: np.ndarray
    x_tt: np.ndarray
    x_tp: np.ndarray
    x_pp: np.ndarray


def _direction_jet(theta, phi):
    """Unit direction omega(theta, phi) and its angular derivatives."""
    st, ct = np.sin(theta), np.cos(theta)
    sp, cp = np.sin(phi), np.cos(phi)
    omega = np.stack([st * cp, st * sp, ct], axis=-1)
    e_t = np.stack([ct * cp, ct * sp, -st], axis=-1)
    e_p = np.stack([-sp, cp, np.zeros_like(sp)], axis=-1)  # unit azimuthal
    o_t = e_t
    o_p = st[..., None] * e_p
    o_tt = -omega
    o_tp = ct[..., None] * e_p
    o_pp = -(st * st)[..., None] * omega - (st * ct)[..., None] * e_t
    return omega, o_t, o_p, o_tt, o_tp, o_pp


class SurfaceChart:
    """Base interface: ``position`` is pole-safe, ``derivatives`` is not."""

    def position(self, theta, phi) -> np.ndarray:
        raise NotImplementedError

    def derivatives(self, theta, phi) -> ChartJet:
        raise NotImplementedError


class SphereChart(SurfaceChart):
    def __init__(self, radius: float):
        if radius <= 0:
            raise InvalidChart(f"sphere radius must be positive, got {radius}")
        self.radius = float(radius)

    def position(self, theta, phi):
        omega, *_ = _direction_jet(np.asarray(theta, float), np.asarray(phi, float))
        return self.radius * omega

    def derivatives(self, theta, phi):
        jets = _direction_jet(np.asarray(theta, float), np.asarray(phi, float))
        return ChartJet(*(self.radius * j for j in jets))

    def __repr__(self):
        return f"SphereChart(radius={self.radius})"


class EllipsoidChart(SurfaceChart):
    def __init__(self, a: float, b: float, c: float):
        if min(a, b, c) <= 0:
            raise InvalidChart(f"ellipsoid semi-axes must be positive, got {(a, b, c)}")
        self.axes = (float(a), float(b), float(c))

    def position(self, theta, phi):
        a, b, c = self.axes
        st, ct = np.sin(theta), np.cos(theta)
        sp, cp = np.sin(phi), np.cos(phi)
        return np.stack([a * st * cp, b * st * sp, c * ct], axis=-1)

    def derivatives(self, theta, phi):
        a, b, c = self.axes
        theta = np.asarray(theta, float)
        phi = np.asarray(phi, float)
        st, ct = np.sin(theta), np.cos(theta)
        sp, cp = np.sin(phi), np.cos(phi)
        zero = np.zeros_like(st)
        x = np.stack([a * st * cp, b * st * sp, c * ct], axis=-1)
        x_t = np.stack([a * ct * cp, b * ct * sp, -c * st], axis=-1)
        x_p = np.stack([-a * st * sp, b * st * cp, zero], axis=-1)
        x_tt = np.stack([-a * st * cp, -b * st * sp, -c * ct], axis=-1)
        x_tp = np.stack([-a * ct * sp, b * ct * cp, zero], axis=-1)
        x_pp = np.stack([-a * st * cp, -b * st * sp, zero], axis=-1)
        return ChartJet(x, x_t, x_p, x_tt, x_tp, x_pp)

    def __repr__(self):
        return f"EllipsoidChart{self.axes}"


class RadialChart(SurfaceChart):
    """Star-shaped graph ``x = rho(theta, phi) omega`` with harmonic radius."""

    def __init__(self, coeffs):
        coeffs = np.asarray(coeffs, dtype=float)
        degree = int(np.sqrt(coeffs.shape[0])) - 1
        if harmonics.n_harmonics(degree) != coeffs.shape[0]:
            raise InvalidChart("radius coefficient vector length must be (L+1)**2")
        self.coeffs = coeffs
        self.degree = degree

    @classmethod
    def from_sphere(cls, radius: float, degree: int = 0) -> "RadialChart":
        coeffs = np.zeros(harmonics.n_harmonics(degree))
        coeffs[0] = radius * np.sqrt(4.0 * np.pi)
        return cls(coeffs)

    @classmethod
    def from_terms(cls, base_radius: float, terms, degree: int | None = None) -> "RadialChart":
        """Radius ``base_radius + sum(value * Y_lm)`` from (l, m, value) terms."""
        terms = [(int(l), int(m), float(v)) for l, m, v in terms]
        L = max([l for l, _, _ in terms], default=0)
        if degree is not None:
            L = max(L, int(degree))
        coeffs = np.zeros(harmonics.n_harmonics(L))
        coeffs[0] = base_radius * np.sqrt(4.0 * np.pi)
        for l, m, v in terms:
            coeffs[harmonics.harmonic_index(l, m)] += v
        return cls(coeffs)

    @classmethod
    def fit(cls, chart: SurfaceChart, grid, degree: int) -> "RadialChart":
        """Project |position| of a star-shaped chart onto harmonics by quadrature."""
        rho = np.linalg.norm(chart.position(grid.nodes_theta, grid.nodes_phi), axis=-1)
        coeffs = harmonics.fit_coefficients(
            rho, grid.nodes_theta, grid.nodes_phi, grid.sphere_weights, degree
        )
        return cls(coeffs)

    def lift(self, degree: int) -> "RadialChart":
        """Zero-pad the coefficients up to a higher degree."""
        if degree < self.degree:
            raise InvalidChart("cannot lower the harmonic degree by lifting")
        coeffs = np.zeros(harmonics.n_harmonics(degree))
        coeffs[: self.coeffs.shape[0]] = self.coeffs
        return RadialChart(coeffs)

    def radius(self, theta, phi, order: int = 0):
        return harmonics.synthesize(self.coeffs, theta, phi, order=order)

    def position(self, theta, phi):
        theta = np.asarray(theta, float)
        phi = np.asarray(phi, float)
        rho = self.radius(theta, phi)
        omega, *_ = _direction_jet(theta, phi)
        return rho[..., None] * omega

    def derivatives(self, theta, phi):
        theta = np.asarray(theta, float)
        phi = np.asarray(phi, float)
        rho, r_t, r_p, r_tt, r_tp, r_pp = self.radius(theta, phi, order=2)
        if np.any(rho <= 0):
            raise InvalidChart("radius function is not positive at requested nodes")
        o, o_t, o_p, o_tt, o_tp, o_pp = _direction_jet(theta, phi)

        def c(f):
            return f[..., None]

        x = c(rho) * o
        x_t = c(r_t) * o + c(rho) * o_t
        x_p = c(r_p) * o + c(rho) * o_p
        x_tt = c(r_tt) * o + 2.0 * c(r_t) * o_t + c(rho) * o_tt
        x_tp = c(r_tp) * o + c(r_t) * o_p + c(r_p) * o_t + c(rho) * o_tp
        x_pp = c(r_pp) * o + 2.0 * c(r_p) * o_p + c(rho) * o_pp
        return ChartJet(x, x_t, x_p, x_tt, x_tp, x_pp)

    def __repr__(self):
        return f"RadialChart(degree={self.degree})"


class ScaledChart(SurfaceChart):
    """Uniform scaling of a base chart's output positions."""

    def __init__(self, base: SurfaceChart, alpha: float):
        if alpha <= 0:
            raise InvalidChart("scale factor must be positive")
        self.base = base
        self.alpha = float(alpha)

    def position(self, theta, phi):
        return self.alpha * self.base.position(theta, phi)

    def derivatives(self, theta, phi):
        jet = self.base.derivatives(theta, phi)
        a = self.alpha
        return ChartJet(a * jet.x, a * jet.x_t, a * jet.x_p, a * jet.x_tt, a * jet.x_tp, a * jet.x_pp)


class RotatedChart(SurfaceChart):
    """Rigid rotation of a base chart by an orthogonal matrix."""

    def __init__(self, base: SurfaceChart, rotation):
        R = np.asarray(rotation, dtype=float).reshape(3, 3)
        if not np.allclose(R @ R.T, np.eye(3), atol=1e-12):
            raise InvalidChart("rotation matrix must be orthogonal")
        self.base = base
        self.rotation = R

    def _rot(self, arr):
        return arr @ self.rotation.T

    def position(self, theta, phi):
        return self._rot(self.base.position(theta, phi))

    def derivatives(self, theta, phi):
        jet = self.base.derivatives(theta, phi)
        return ChartJet(*(self._rot(a) for a in (jet.x, jet.x_t, jet.x_p, jet.x_tt, jet.x_tp, jet.x_pp)))


class PerturbedChart(SurfaceChart):
    """Chart whose embedding is ``x + eps * V(x)`` for an ambient field V.

    The field must provide value, Jacobian and Hessian so that the perturbed
    chart keeps analytic second derivatives.  Star-shapedness is *not*
    checked here; use :func:`tvnormal.calculus.perturb_chart` for that.
    """

    def __init__(self, base: SurfaceChart, field, eps: float):
        self.base = base
        self.field = field
        self.eps = float(eps)

    def position(self, theta, phi):
        x = self.base.position(theta, phi)
        return x + self.eps * self.field(x)

    def derivatives(self, theta, phi):
        jet = self.base.derivatives(theta, phi)
        fe = self.field.evaluate(jet.x, order=2)
        eps = self.eps
        DV, H = fe.jacobian, fe.hessian

        def push1(v):
            return v + eps * np.einsum("...ij,...j->...i", DV, v)

        def push2(u, w, second):
            quad = np.einsum("...ijk,...j,...k->...i", H, u, w)
            lin = np.einsum("...ij,...j->...i", DV, second)
            return second + eps * (quad + lin)

        return ChartJet(
            jet.x + eps * fe.value,
            push1(jet.x_t),
            push1(jet.x_p),
            push2(jet.x_t, jet.x_t, jet.x_tt),
            push2(jet.x_t, jet.x_p, jet.x_tp),
            push2(jet.x_p, jet.x_p, jet.x_pp),
        )


def build_chart(kind: str, **params) -> SurfaceChart:
    """Construct a chart from a plain description (the config-facing factory).

    Radial charts take ``base_radius`` plus ``terms = [(l, m, value), ...]``
    or a full ``coeffs`` vector; harmonic degree is capped at
    ``MAX_HARMONIC_DEGREE`` on this path.
    """
    kind = kind.lower()
    if kind == "sphere":
        return SphereChart(params.get("radius", 1.0))
    if kind == "ellipsoid":
        if "semi_axes" in params:
            a, b, c = params["semi_axes"]
        else:
            a, b, c = params["a"], params["b"], params["c"]
        return EllipsoidChart(a, b, c)
    if kind == "radial":
        if "coeffs" in params:
            chart = RadialChart(np.asarray(params["coeffs"], dtype=float))
        else:
            chart = RadialChart.from_terms(
                params.get("base_radius", 1.0),
                params.get("terms", ()),
                degree=params.get("degree"),
            )
        if chart.degree > MAX_HARMONIC_DEGREE:
            raise InvalidChart(
                f"radial chart degree {chart.degree} exceeds cap {MAX_HARMONIC_DEGREE}"
            )
        # Positivity probe on a grid fine enough for the expansion.
        from .geometry import make_grid  # local import to avoid a cycle

        n_t = max(2 * chart.degree + 2, 24)
        grid = make_grid(n_t, 2 * n_t)
        rho = chart.radius(grid.nodes_theta, grid.nodes_phi)
        if np.any(rho <= 0):
            raise InvalidChart("radial chart has non-positive radius")
        return chart
    raise InvalidChart(f"unknown chart kind {kind!r}")
