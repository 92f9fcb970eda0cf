"""Ambient vector and scalar fields used to deform surfaces.

A deformation field must be evaluable not just on a surface but in a
neighborhood of it (perturbed charts re-evaluate it at displaced points),
and the analytic shape-derivative formulas consume its first and second
spatial derivatives.  Every field here therefore provides ``value``,
``jacobian`` and, where meaningful, ``hessian`` in closed form.

``RadialHarmonicField`` is the workhorse: the zero-homogeneous extension of
``f(omega) * omega`` with ``f`` a real-harmonic expansion.  Restricted to a
sphere centered at the origin it is exactly a normal field ``f n``, and its
components are the fields that perturb the radius coefficients of a
star-shaped chart.  ``ChartNormalField`` extends ``f n`` along rays for a
general star-shaped chart; it has no closed-form Hessian and is meant for
first-derivative identities only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import harmonics
from .geometry import normal_frame

__all__ = [
    "FieldEval",
    "AmbientField",
    "ConstantField",
    "LinearField",
    "rotation_field",
    "TrigPolyField",
    "RadialHarmonicField",
    "ChartNormalField",
    "ScaledField",
    "SumField",
    "TrigScalar",
    "RadialHarmonicBasis",
    "spherical_coordinate_jets",
]


@dataclass(frozen=True)
class FieldEval:
    """Field data at sampled points; arrays may carry a leading batch axis."""

    value: np.ndarray
    jacobian: np.ndarray | None = None
    hessian: np.ndarray | None = None

    @property
    def batched(self) -> bool:
        return self.value.ndim == 3


class AmbientField:
    """Smooth vector field on (a neighborhood of) R^3."""

    def __call__(self, x) -> np.ndarray:
        raise NotImplementedError

    def jacobian(self, x) -> np.ndarray:
        raise NotImplementedError

    def hessian(self, x) -> np.ndarray:
        """Second derivatives H[i, j, k] = d^2 V_i / dx_j dx_k."""
        raise NotImplementedError

    def evaluate(self, x, order: int = 2) -> FieldEval:
        x = np.asarray(x, dtype=float)
        return FieldEval(
            self(x),
            self.jacobian(x) if order >= 1 else None,
            self.hessian(x) if order >= 2 else None,
        )


class ConstantField(AmbientField):
    def __init__(self, v):
        self.v = np.asarray(v, dtype=float).reshape(3)

    def __call__(self, x):
        return np.broadcast_to(self.v, x.shape).copy()

    def jacobian(self, x):
        return np.zeros(x.shape[:-1] + (3, 3))

    def hessian(self, x):
        return np.zeros(x.shape[:-1] + (3, 3, 3))


class LinearField(AmbientField):
    """V(x) = A x + b; covers translations, dilations and rotations."""

    def __init__(self, A, b=None):
        self.A = np.asarray(A, dtype=float).reshape(3, 3)
        self.b = np.zeros(3) if b is None else np.asarray(b, dtype=float).reshape(3)

    def __call__(self, x):
        return x @ self.A.T + self.b

    def jacobian(self, x):
        return np.broadcast_to(self.A, x.shape[:-1] + (3, 3)).copy()

    def hessian(self, x):
        return np.zeros(x.shape[:-1] + (3, 3, 3))


def rotation_field(axis) -> LinearField:
    """Infinitesimal rotation V = axis x position (tangential on spheres)."""
    a = np.asarray(axis, dtype=float).reshape(3)
    A = np.array([[0.0, -a[2], a[1]], [a[2], 0.0, -a[0]], [-a[1], a[0], 0.0]])
    return LinearField(A)


class TrigPolyField(AmbientField):
    """V(x) = sum_t amp_t sin(k_t . x + p_t), entire and cheap to derive."""

    def __init__(self, amps, waves, phases):
        self.amps = np.asarray(amps, dtype=float).reshape(-1, 3)
        self.waves = np.asarray(waves, dtype=float).reshape(-1, 3)
        self.phases = np.asarray(phases, dtype=float).reshape(-1)

    @classmethod
    def random(cls, rng, n_terms: int = 3, wave_scale: float = 1.0, amp_scale: float = 1.0):
        return cls(
            amp_scale * rng.normal(size=(n_terms, 3)) / np.sqrt(n_terms),
            wave_scale * rng.normal(size=(n_terms, 3)),
            rng.uniform(0.0, 2.0 * np.pi, size=n_terms),
        )

    def _args(self, x):
        return np.einsum("...j,tj->...t", x, self.waves) + self.phases

    def __call__(self, x):
        return np.einsum("...t,ti->...i", np.sin(self._args(x)), self.amps)

    def jacobian(self, x):
        return np.einsum("...t,ti,tj->...ij", np.cos(self._args(x)), self.amps, self.waves)

    def hessian(self, x):
        return -np.einsum(
            "...t,ti,tj,tk->...ijk", np.sin(self._args(x)), self.amps, self.waves, self.waves
        )


class ScaledField(AmbientField):
    def __init__(self, base: AmbientField, factor: float):
        self.base = base
        self.factor = float(factor)

    def __call__(self, x):
        return self.factor * self.base(x)

    def jacobian(self, x):
        return self.factor * self.base.jacobian(x)

    def hessian(self, x):
        return self.factor * self.base.hessian(x)


class SumField(AmbientField):
    def __init__(self, *parts: AmbientField):
        self.parts = parts

    def __call__(self, x):
        return sum(p(x) for p in self.parts)

    def jacobian(self, x):
        return sum(p.jacobian(x) for p in self.parts)

    def hessian(self, x):
        return sum(p.hessian(x) for p in self.parts)


def spherical_coordinate_jets(x):
    """Spherical angles of ambient points with ambient derivatives.

    Returns a dict with r, theta, phi, the orthonormal triplet (omega, e_t,
    e_p), the gradients of theta/phi and their (symmetric) Hessians.  Valid
    away from the polar axis.
    """
    x = np.asarray(x, dtype=float)
    r = np.linalg.norm(x, axis=-1)
    omega = x / r[..., None]
    rho_xy = np.hypot(x[..., 0], x[..., 1])
    theta = np.arctan2(rho_xy, x[..., 2])
    phi = np.arctan2(x[..., 1], x[..., 0])
    st, ct = np.sin(theta), np.cos(theta)
    sp, cp = np.sin(phi), np.cos(phi)
    e_t = np.stack([ct * cp, ct * sp, -st], axis=-1)
    e_p = np.stack([-sp, cp, np.zeros_like(sp)], axis=-1)

    grad_theta = e_t / r[..., None]
    grad_phi = e_p / (r * st)[..., None]

    def sym(u, v):
        return u[..., :, None] * v[..., None, :] + v[..., :, None] * u[..., None, :]

    r2 = (r * r)[..., None, None]
    cot = (ct / st)[..., None, None]
    hess_theta = (-sym(omega, e_t) + cot * np.einsum("...i,...j->...ij", e_p, e_p)) / r2
    s1 = st[..., None, None]
    hess_phi = (-sym(omega, e_p) / s1 - (ct / (st * st))[..., None, None] * sym(e_t, e_p)) / r2
    return {
        "r": r,
        "theta": theta,
        "phi": phi,
        "omega": omega,
        "e_t": e_t,
        "e_p": e_p,
        "grad_theta": grad_theta,
        "grad_phi": grad_phi,
        "hess_theta": hess_theta,
        "hess_phi": hess_phi,
    }


def _direction_second_derivative(omega, r):
    """D^2 of omega_i(x) = x_i/|x|: (3 w_i w_j w_k - w_i d_jk - w_j d_ik - w_k d_ij)/r^2."""
    eye = np.eye(3)
    w = omega
    t = 3.0 * np.einsum("...i,...j,...k->...ijk", w, w, w)
    t -= np.einsum("...i,jk->...ijk", w, eye)
    t -= np.einsum("...j,ik->...ijk", w, eye)
    t -= np.einsum("...k,ij->...ijk", w, eye)
    return t / (r * r)[..., None, None, None]


class RadialHarmonicField(AmbientField):
    """Zero-homogeneous field f(omega) * omega with harmonic f.

    On a sphere about the origin this is the normal field with magnitude f;
    on any star-shaped chart it realizes a radius perturbation.
    """

    def __init__(self, coeffs):
        self.coeffs = np.asarray(coeffs, dtype=float)
        K = self.coeffs.shape[0]
        self.degree = int(np.sqrt(K)) - 1
        if harmonics.n_harmonics(self.degree) != K:
            raise ValueError("coefficient vector length must be a perfect square")

    @classmethod
    def single(cls, l: int, m: int, amplitude: float = 1.0) -> "RadialHarmonicField":
        coeffs = np.zeros(harmonics.n_harmonics(l))
        coeffs[harmonics.harmonic_index(l, m)] = amplitude
        return cls(coeffs)

    @classmethod
    def random(cls, rng, degree: int, amp_scale: float = 1.0, zero_mean: bool = False):
        coeffs = amp_scale * rng.normal(size=harmonics.n_harmonics(degree))
        coeffs /= np.sqrt(coeffs.size)
        if zero_mean:
            coeffs[0] = 0.0
        return cls(coeffs)

    def surface_magnitude(self, theta, phi):
        """f evaluated at given angles (equals V . n on origin-centered spheres)."""
        return harmonics.synthesize(self.coeffs, theta, phi)

    def _scalar_jets(self, sph, order):
        return harmonics.synthesize(self.coeffs, sph["theta"], sph["phi"], order=order)

    def __call__(self, x):
        sph = spherical_coordinate_jets(x)
        f = self._scalar_jets(sph, 0)
        return f[..., None] * sph["omega"]

    def jacobian(self, x):
        sph = spherical_coordinate_jets(x)
        f, f_t, f_p = self._scalar_jets(sph, 1)
        grad_f = f_t[..., None] * sph["grad_theta"] + f_p[..., None] * sph["grad_phi"]
        omega = sph["omega"]
        proj = np.eye(3) - np.einsum("...i,...j->...ij", omega, omega)
        d_omega = proj / sph["r"][..., None, None]
        return np.einsum("...i,...j->...ij", omega, grad_f) + f[..., None, None] * d_omega

    def hessian(self, x):
        sph = spherical_coordinate_jets(x)
        f, f_t, f_p, f_tt, f_tp, f_pp = self._scalar_jets(sph, 2)
        gt, gp = sph["grad_theta"], sph["grad_phi"]
        grad_f = f_t[..., None] * gt + f_p[..., None] * gp
        hess_f = (
            f_tt[..., None, None] * np.einsum("...i,...j->...ij", gt, gt)
            + f_tp[..., None, None]
            * (np.einsum("...i,...j->...ij", gt, gp) + np.einsum("...i,...j->...ij", gp, gt))
            + f_pp[..., None, None] * np.einsum("...i,...j->...ij", gp, gp)
            + f_t[..., None, None] * sph["hess_theta"]
            + f_p[..., None, None] * sph["hess_phi"]
        )
        omega, r = sph["omega"], sph["r"]
        proj = np.eye(3) - np.einsum("...i,...j->...ij", omega, omega)
        d_omega = proj / r[..., None, None]
        h_omega = _direction_second_derivative(omega, r)
        out = np.einsum("...i,...jk->...ijk", omega, hess_f)
        out += np.einsum("...j,...ik->...ijk", grad_f, d_omega)
        out += np.einsum("...k,...ij->...ijk", grad_f, d_omega)
        out += f[..., None, None, None] * h_omega
        return out


class ChartNormalField(AmbientField):
    """Ray-constant extension of f * (chart normal) for a star-shaped chart.

    The value at x is f(theta, phi) n_chart(theta, phi) with (theta, phi)
    the spherical angles of x, so along the chart surface it is exactly the
    normal field of magnitude f.  The Jacobian is available in closed form;
    the Hessian would need third chart derivatives and is not provided.
    """

    def __init__(self, chart, coeffs=None):
        self.chart = chart
        if coeffs is None:
            coeffs = np.array([np.sqrt(4.0 * np.pi)])  # f == 1
        self.coeffs = np.asarray(coeffs, dtype=float)

    def _pieces(self, x, order):
        sph = spherical_coordinate_jets(x)
        theta, phi = sph["theta"], sph["phi"]
        jet = self.chart.derivatives(theta, phi)
        n, n_t, n_p, _, _ = normal_frame(jet)
        f = harmonics.synthesize(self.coeffs, theta, phi, order=order)
        return sph, n, n_t, n_p, f

    def __call__(self, x):
        _, n, _, _, f = self._pieces(np.asarray(x, float), 0)
        return f[..., None] * n

    def jacobian(self, x):
        sph, n, n_t, n_p, (f, f_t, f_p) = self._pieces(np.asarray(x, float), 1)
        gt, gp = sph["grad_theta"], sph["grad_phi"]
        grad_f = f_t[..., None] * gt + f_p[..., None] * gp
        dn = np.einsum("...i,...j->...ij", n_t, gt) + np.einsum("...i,...j->...ij", n_p, gp)
        return np.einsum("...i,...j->...ij", n, grad_f) + f[..., None, None] * dn


class TrigScalar:
    """Scalar test function g(x) = sum_t a_t sin(k_t . x + p_t)."""

    def __init__(self, amps, waves, phases):
        self.amps = np.asarray(amps, dtype=float).reshape(-1)
        self.waves = np.asarray(waves, dtype=float).reshape(-1, 3)
        self.phases = np.asarray(phases, dtype=float).reshape(-1)

    @classmethod
    def random(cls, rng, n_terms: int = 3, wave_scale: float = 1.0):
        return cls(
            rng.normal(size=n_terms) / np.sqrt(n_terms),
            wave_scale * rng.normal(size=(n_terms, 3)),
            rng.uniform(0.0, 2.0 * np.pi, size=n_terms),
        )

    def _args(self, x):
        return np.einsum("...j,tj->...t", x, self.waves) + self.phases

    def __call__(self, x):
        return np.einsum("...t,t->...", np.sin(self._args(x)), self.amps)

    def gradient(self, x):
        return np.einsum("...t,t,tj->...j", np.cos(self._args(x)), self.amps, self.waves)


class RadialHarmonicBasis:
    """All radius-coefficient perturbation fields of a grid, batch-evaluated.

    The fields V_j(x) = Y_j(omega) omega are zero-homogeneous, so at grid
    nodes their angular content is independent of the radius; value,
    Jacobian and Hessian at a radial chart with nodal radius rho are the
    precomputed angle tensors scaled by 1, 1/rho and 1/rho^2.
    """

    def __init__(self, degree: int, grid):
        self.degree = int(degree)
        self.n_fields = harmonics.n_harmonics(self.degree)
        self.degrees = harmonics.harmonic_degrees(self.degree)
        theta, phi = grid.nodes_theta, grid.nodes_phi
        st, ct = np.sin(theta), np.cos(theta)
        Y, Y_t, Y_p, Y_tt, Y_tp, Y_pp = harmonics.real_harmonics(self.degree, theta, phi, order=2)

        sp, cp = np.sin(phi), np.cos(phi)
        omega = np.stack([st * cp, st * sp, ct], axis=-1)
        e_t = np.stack([ct * cp, ct * sp, -st], axis=-1)
        e_p = np.stack([-sp, cp, np.zeros_like(sp)], axis=-1)

        def outer(u, v):
            return np.einsum("ni,nj->nij", u, v)

        proj = np.eye(3) - outer(omega, omega)
        # r^2 * Hessians of the angle functions
        hess_t = -(outer(omega, e_t) + outer(e_t, omega)) + (ct / st)[:, None, None] * outer(e_p, e_p)
        hess_p = -(outer(omega, e_p) + outer(e_p, omega)) / st[:, None, None] - (
            ct / (st * st)
        )[:, None, None] * (outer(e_t, e_p) + outer(e_p, e_t))

        # r * gradient of Y_j
        grad = Y_t[..., None] * e_t[None] + (Y_p / st)[..., None] * e_p[None]
        # r^2 * Hessian of Y_j
        hess = (
            Y_tt[..., None, None] * outer(e_t, e_t)[None]
            + (Y_tp / st)[..., None, None] * (outer(e_t, e_p) + outer(e_p, e_t))[None]
            + (Y_pp / (st * st))[..., None, None] * outer(e_p, e_p)[None]
            + Y_t[..., None, None] * hess_t[None]
            + Y_p[..., None, None] * hess_p[None]
        )
        self.value = Y[..., None] * omega[None]  # (K, N, 3)
        # r * Jacobian
        self.jac_unit = np.einsum("kn,nij->knij", Y, proj) + np.einsum(
            "ni,knj->knij", omega, grad
        )
        # r^2 * Hessian
        h_omega = _direction_second_derivative(omega, np.ones_like(st))
        self.hess_unit = (
            np.einsum("ni,knjl->knijl", omega, hess)
            + np.einsum("knj,nil->knijl", grad, proj)
            + np.einsum("knl,nij->knijl", grad, proj)
            + np.einsum("kn,nijl->knijl", Y, h_omega)
        )
        self.surface_values = Y  # Y_j at the grid nodes

    def evaluate(self, rho) -> FieldEval:
        """Batched FieldEval of every basis field at nodal radius rho."""
        rho = np.asarray(rho, dtype=float)
        inv_r = (1.0 / rho)[None, :, None, None]
        return FieldEval(
            self.value,
            self.jac_unit * inv_r,
            self.hess_unit * inv_r[..., None] ** 2,
        )

    def displacement_jacobian(self, delta_coeffs, rho) -> np.ndarray:
        """Jacobian at the grid of the field sum_j delta_j V_j, shape (N, 3, 3)."""
        return np.einsum("k,knij->nij", delta_coeffs, self.jac_unit) / rho[:, None, None]
