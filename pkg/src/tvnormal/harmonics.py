"""Real spherical harmonics with analytic angular derivatives.

The basis is orthonormal on the unit sphere (integral of Y_i * Y_j over the
sphere measure is delta_ij) and indexed flat by ``l*(l+1) + m`` for degrees
``l = 0..L`` and orders ``-l <= m <= l``.  Conventions: no Condon-Shortley
phase; ``m > 0`` pairs with ``sqrt(2) cos(m phi)``, ``m < 0`` with
``sqrt(2) sin(|m| phi)``.  In particular ``Y[0] = 1/sqrt(4 pi)``.

First and second theta-derivatives come from stable degree recurrences plus
the associated Legendre differential equation, so they are valid only away
from the poles (``sin theta > 0``).  Plain values are pole-safe.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "n_harmonics",
    "harmonic_index",
    "harmonic_degrees",
    "real_harmonics",
    "synthesize",
    "fit_coefficients",
]


def n_harmonics(degree: int) -> int:
    """Number of real harmonics of degree <= ``degree``."""
    return (degree + 1) ** 2


def harmonic_index(l: int, m: int) -> int:
    """Flat index of the (l, m) harmonic."""
    if not (0 <= abs(m) <= l):
        raise ValueError(f"invalid harmonic (l={l}, m={m})")
    return l * (l + 1) + m


def harmonic_degrees(degree: int) -> np.ndarray:
    """Degree l of every flat index, shape ((degree+1)**2,)."""
    return np.repeat(np.arange(degree + 1), 2 * np.arange(degree + 1) + 1)


def _legendre_norm(L: int, x: np.ndarray, s: np.ndarray, order: int):
    """Orthonormal associated Legendre values Lam[l][m] at x = cos(theta).

    Returns nested lists ``lam[m][l - m]`` (and theta-derivatives when
    ``order`` is 1 or 2) so the harmonic assembly can walk (l, m) pairs.
    """
    lam = [[None] * (L + 1 - m) for m in range(L + 1)]
    lam[0][0] = np.full_like(x, 1.0 / np.sqrt(4.0 * np.pi))
    for m in range(1, L + 1):
        lam[m][0] = s * np.sqrt((2 * m + 1) / (2.0 * m)) * lam[m - 1][0]
    for m in range(L + 1):
        if m + 1 <= L:
            lam[m][1] = np.sqrt(2 * m + 3.0) * x * lam[m][0]
        for l in range(m + 2, L + 1):
            a = np.sqrt((4.0 * l * l - 1.0) / (l * l - m * m))
            b = np.sqrt(
                (2.0 * l + 1.0) * (l + m - 1.0) * (l - m - 1.0)
                / ((l * l - m * m) * (2.0 * l - 3.0))
            )
            lam[m][l - m] = a * x * lam[m][l - m - 1] - b * lam[m][l - m - 2]
    if order == 0:
        return lam, None, None

    # d/dtheta via (l x Lam_l - c_lm Lam_{l-1}) / s, c_lm as below.
    dlam = [[None] * (L + 1 - m) for m in range(L + 1)]
    for m in range(L + 1):
        for l in range(m, L + 1):
            acc = l * x * lam[m][l - m]
            if l - 1 >= m:
                c = np.sqrt((2.0 * l + 1.0) * (l - m) * (l + m) / (2.0 * l - 1.0))
                acc = acc - c * lam[m][l - m - 1]
            dlam[m][l - m] = acc / s
    if order == 1:
        return lam, dlam, None

    # Second derivative from the associated Legendre ODE.
    d2lam = [[None] * (L + 1 - m) for m in range(L + 1)]
    cot = x / s
    for m in range(L + 1):
        for l in range(m, L + 1):
            d2lam[m][l - m] = (
                -cot * dlam[m][l - m]
                - (l * (l + 1.0) - m * m / (s * s)) * lam[m][l - m]
            )
    return lam, dlam, d2lam


def real_harmonics(degree: int, theta, phi, order: int = 0):
    """Evaluate all real harmonics of degree <= ``degree`` at given angles.

    Parameters
    ----------
    theta, phi : array_like, broadcastable to a common shape (N,)
    order : 0, 1 or 2
        How many derivative levels to return.

    Returns
    -------
    Y : ndarray, shape (K, N)
        with K = (degree+1)**2, or a tuple
        ``(Y, Y_t, Y_p)`` for order 1, and
        ``(Y, Y_t, Y_p, Y_tt, Y_tp, Y_pp)`` for order 2,
        where suffixes t/p denote theta/phi derivatives.
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    phi = np.broadcast_to(np.asarray(phi, dtype=float), theta.shape)
    x, s = np.cos(theta), np.sin(theta)
    if order > 0 and np.any(s <= 0):
        raise ValueError("harmonic derivatives need interior nodes (sin theta > 0)")
    L = int(degree)
    K = n_harmonics(L)
    lam, dlam, d2lam = _legendre_norm(L, x, s, order)

    out = [np.zeros((K,) + theta.shape) for _ in range(1 + 2 * order + (order == 2))]
    sqrt2 = np.sqrt(2.0)
    for m in range(L + 1):
        if m == 0:
            cm = np.ones_like(phi)
            sm = np.zeros_like(phi)
        else:
            cm, sm = np.cos(m * phi), np.sin(m * phi)
        for l in range(m, L + 1):
            v = lam[m][l - m]
            dv = dlam[m][l - m] if order >= 1 else None
            d2v = d2lam[m][l - m] if order >= 2 else None
            if m == 0:
                pieces = [(harmonic_index(l, 0), 1.0, cm, sm)]
            else:
                pieces = [
                    (harmonic_index(l, m), sqrt2, cm, sm),
                    (harmonic_index(l, -m), sqrt2, sm, -cm),
                ]
            for j, scale, az, daz_over_m in pieces:
                # az is the azimuthal factor; its phi-derivative is -m*daz_over_m.
                out[0][j] = scale * v * az
                if order >= 1:
                    out[1][j] = scale * dv * az
                    out[2][j] = -m * scale * v * daz_over_m
                if order >= 2:
                    out[3][j] = scale * d2v * az
                    out[4][j] = -m * scale * dv * daz_over_m
                    out[5][j] = -(m * m) * out[0][j]
    return out[0] if order == 0 else tuple(out)


def synthesize(coeffs: np.ndarray, theta, phi, order: int = 0):
    """Evaluate sum_k coeffs[k] Y_k (and derivatives) at the given angles."""
    coeffs = np.asarray(coeffs, dtype=float)
    K = coeffs.shape[0]
    L = int(np.sqrt(K)) - 1
    if n_harmonics(L) != K:
        raise ValueError("coefficient vector length must be a perfect square")
    ys = real_harmonics(L, theta, phi, order=order)
    if order == 0:
        return np.tensordot(coeffs, ys, axes=(0, 0))
    return tuple(np.tensordot(coeffs, y, axes=(0, 0)) for y in ys)


def fit_coefficients(values: np.ndarray, theta, phi, sphere_weights, degree: int):
    """Project nodal values onto harmonics by quadrature over the unit sphere.

    ``sphere_weights`` must integrate the measure sin(theta) dtheta dphi;
    the projection is exact for band-limited data within the quadrature's
    exactness degree.
    """
    Y = real_harmonics(degree, theta, phi)
    return Y @ (np.asarray(values) * np.asarray(sphere_weights))
