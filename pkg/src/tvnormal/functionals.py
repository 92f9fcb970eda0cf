"""Geometric functionals of sampled surfaces, plus planar-curve analogues.

The main quantity is the total variation of the unit normal field, the
surface integral of sqrt(k1^2 + k2^2).  It is evaluated both through the
principal curvatures and through the tangent frame (the squared norms of
the Gauss-map derivative applied to an orthonormal frame); the two must
agree pointwise, and the evaluator enforces that.

No smoothing is applied when *evaluating* functionals; the integrand is
used exactly, including its zeros.  Regularization only ever enters the
gradient paths in :mod:`tvnormal.calculus`.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateCurve
from .geometry import SurfaceSamples

__all__ = [
    "FunctionalKind",
    "FunctionalValue",
    "tv_of_normal",
    "tv_of_normal_frame",
    "total_curvature",
    "total_abs_gauss",
    "gauss_bonnet_residual",
    "evaluate_all",
    "FourierCurve",
    "curve_total_abs_curvature",
]


class FunctionalKind(str, enum.Enum):
    TV_NORMAL = "tv_normal"
    TOTAL_CURVATURE = "total_curvature"
    TOTAL_ABS_GAUSS = "total_abs_gauss"
    GAUSS_BONNET = "gauss_bonnet"


@dataclass(frozen=True)
class FunctionalValue:
    """A functional value tagged with its kind.

    TV of the normal scales like length under uniform dilation; the total
    curvature and total absolute Gaussian curvature are scale invariant.
    """

    value: float
    kind: FunctionalKind

    def __post_init__(self):
        if self.kind in (FunctionalKind.TV_NORMAL, FunctionalKind.TOTAL_ABS_GAUSS):
            if self.value < 0:
                raise ValueError(f"{self.kind.value} must be nonnegative")


def tv_of_normal_frame(samples: SurfaceSamples) -> float:
    """Frame-based evaluation: integral of sqrt(|S xi1|^2 + |S xi2|^2)."""
    sq = np.einsum("ni,ni->n", samples.dn_xi1, samples.dn_xi1) + np.einsum(
        "ni,ni->n", samples.dn_xi2, samples.dn_xi2
    )
    return samples.integrate(np.sqrt(sq))


def tv_of_normal(samples: SurfaceSamples) -> float:
    """Total variation of the normal: integral of sqrt(k1^2 + k2^2).

    Also evaluates the frame form and insists the two agree; a mismatch
    would mean the frame, Gauss-map derivative and curvatures have come
    apart, which is an internal consistency failure.
    """
    value = samples.integrate(samples.rms_curvature)
    frame_value = tv_of_normal_frame(samples)
    if abs(value - frame_value) > 1e-10 * max(1.0, abs(value)):
        raise AssertionError(
            f"curvature and frame evaluations disagree: {value!r} vs {frame_value!r}"
        )
    return value


def total_curvature(samples: SurfaceSamples) -> float:
    """Integral of k1^2 + k2^2 (surface strain energy), scale invariant."""
    return samples.integrate(samples.k1 ** 2 + samples.k2 ** 2)


def total_abs_gauss(samples: SurfaceSamples) -> float:
    """Integral of |k1 k2|; equals 4 pi exactly for convex surfaces."""
    return samples.integrate(np.abs(samples.k1 * samples.k2))


def gauss_bonnet_residual(samples: SurfaceSamples) -> float:
    """|integral of k1 k2 - 4 pi|, zero for any closed genus-0 surface."""
    return abs(samples.integrate(samples.k1 * samples.k2) - 4.0 * np.pi)


def evaluate_all(samples: SurfaceSamples) -> dict:
    """All four functionals plus area and volume, keyed for reporting."""
    return {
        "tv_normal": tv_of_normal(samples),
        "total_curvature": total_curvature(samples),
        "total_abs_gauss": total_abs_gauss(samples),
        "gauss_bonnet_residual": gauss_bonnet_residual(samples),
        "area": samples.integrate(1.0),
        "volume": samples.integrate(
            np.einsum("ni,ni->n", samples.position, samples.normal) / 3.0
        ),
    }


@dataclass(frozen=True)
class FourierCurve:
    """Closed planar curve x(t) = a0 + sum_k (a_k cos kt + b_k sin kt).

    ``cos_coeffs`` and ``sin_coeffs`` have shape (K, 2) for modes 1..K.
    """

    a0: np.ndarray
    cos_coeffs: np.ndarray
    sin_coeffs: np.ndarray

    @classmethod
    def circle(cls, radius: float = 1.0) -> "FourierCurve":
        return cls(
            np.zeros(2),
            np.array([[radius, 0.0]]),
            np.array([[0.0, radius]]),
        )

    @classmethod
    def ellipse(cls, a: float, b: float) -> "FourierCurve":
        return cls(np.zeros(2), np.array([[a, 0.0]]), np.array([[0.0, b]]))

    @classmethod
    def limacon(cls, offset: float = 1.0, loop: float = 1.5) -> "FourierCurve":
        """((offset + loop cos t) cos t, (offset + loop cos t) sin t).

        Expanding the products gives an exact two-mode Fourier series.
        """
        return cls(
            np.array([loop / 2.0, 0.0]),
            np.array([[offset, 0.0], [loop / 2.0, 0.0]]),
            np.array([[0.0, offset], [0.0, loop / 2.0]]),
        )

    def _modes(self):
        K = self.cos_coeffs.shape[0]
        return np.arange(1, K + 1)

    def position(self, t):
        t = np.asarray(t, dtype=float)
        k = self._modes()
        arg = np.multiply.outer(t, k)
        return self.a0 + np.cos(arg) @ self.cos_coeffs + np.sin(arg) @ self.sin_coeffs

    def velocity(self, t):
        t = np.asarray(t, dtype=float)
        k = self._modes()
        arg = np.multiply.outer(t, k)
        return (-np.sin(arg) * k) @ self.cos_coeffs + (np.cos(arg) * k) @ self.sin_coeffs

    def acceleration(self, t):
        t = np.asarray(t, dtype=float)
        k = self._modes()
        arg = np.multiply.outer(t, k)
        k2 = k * k
        return (-np.cos(arg) * k2) @ self.cos_coeffs + (-np.sin(arg) * k2) @ self.sin_coeffs


def curve_total_abs_curvature(curve: FourierCurve, n_nodes: int = 512) -> float:
    """Integral of |curvature| along a closed planar curve.

    Uniform (trapezoid) quadrature in the curve parameter; spectrally
    accurate for smooth immersed curves.  2 pi for convex curves.

    Raises
    ------
    DegenerateCurve
        If the parametrization speed drops below 1e-12 at a node.
    """
    t = 2.0 * np.pi * np.arange(n_nodes) / n_nodes
    v = curve.velocity(t)
    a = curve.acceleration(t)
    speed = np.linalg.norm(v, axis=-1)
    if np.any(speed < 1e-12):
        raise DegenerateCurve("curve speed vanishes at a quadrature node")
    signed = (v[:, 0] * a[:, 1] - v[:, 1] * a[:, 0]) / speed ** 3
    return math.fsum(np.abs(signed) * speed * (2.0 * np.pi / n_nodes))
