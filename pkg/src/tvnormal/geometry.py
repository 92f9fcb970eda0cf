"""Surface sampling: quadrature grids, normals, frames, curvature, meshes.

The quadrature is Gauss-Legendre in cos(theta) crossed with a uniform
periodic rule in phi, so no node ever sits on a pole and smooth integrands
are integrated with spectral accuracy.  :func:`sample` evaluates a chart on
such a grid and bundles, per node, everything downstream modules need:
position, outward normal, an orthonormal tangent frame, the Gauss-map
derivative applied to that frame, principal curvatures and area weights.

The shape operator follows the Gauss-map (push-forward) sign convention:
on a sphere of radius r with outward normal both principal curvatures are
+1/r, and the tangential derivative of the normal is (I - n n^T)/r.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .charts import SurfaceChart
from .errors import DegenerateMetric

__all__ = [
    "QuadratureGrid",
    "make_grid",
    "SurfaceSamples",
    "sample",
    "normal_frame",
    "area",
    "volume",
    "integrate",
    "export_mesh",
    "read_mesh",
    "mesh_area",
]


@dataclass(frozen=True)
class QuadratureGrid:
    """Tensor-product quadrature on (theta, phi) parameter space.

    ``sphere_weights`` integrate the unit-sphere measure sin(theta) dtheta
    dphi; ``param_weights`` integrate plain dtheta dphi.  Both are flattened
    theta-major to match ``nodes_theta`` / ``nodes_phi``.
    """

    n_theta: int
    n_phi: int
    theta: np.ndarray
    phi: np.ndarray
    gl_weights: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.n_theta * self.n_phi

    @property
    def nodes_theta(self) -> np.ndarray:
        return np.repeat(self.theta, self.n_phi)

    @property
    def nodes_phi(self) -> np.ndarray:
        return np.tile(self.phi, self.n_theta)

    @property
    def sphere_weights(self) -> np.ndarray:
        return np.repeat(self.gl_weights, self.n_phi) * (2.0 * np.pi / self.n_phi)

    @property
    def param_weights(self) -> np.ndarray:
        return self.sphere_weights / np.sin(self.nodes_theta)

    def refined(self, factor: int = 2) -> "QuadratureGrid":
        return make_grid(self.n_theta * factor, self.n_phi * factor)


def make_grid(n_theta: int, n_phi: int) -> QuadratureGrid:
    """Gauss-Legendre x uniform grid with interior theta nodes."""
    if n_theta < 2 or n_phi < 4:
        raise ValueError("grid needs n_theta >= 2 and n_phi >= 4")
    x, w = np.polynomial.legendre.leggauss(n_theta)
    theta = np.arccos(x)[::-1].copy()  # ascending in theta, away from poles
    gl = w[::-1].copy()
    phi = 2.0 * np.pi * np.arange(n_phi) / n_phi
    return QuadratureGrid(n_theta, n_phi, theta, phi, gl)


def normal_frame(jet):
    """Outward normal and its parametric derivatives from a chart jet.

    Returns ``(n, n_t, n_p, jacobian, orientation)`` where ``jacobian`` is
    |x_t x x_p| and ``orientation`` is the sign applied to make the normal
    point away from the origin (+1 everywhere on star-shaped charts).
    """
    c = np.cross(jet.x_t, jet.x_p)
    jac = np.linalg.norm(c, axis=-1)
    if np.any(jac < 1e-12):
        raise DegenerateMetric("parametrization is singular at a quadrature node")
    n = c / jac[..., None]
    sign = np.where(np.einsum("...i,...i->...", n, jet.x) < 0.0, -1.0, 1.0)
    n = sign[..., None] * n
    c_t = np.cross(jet.x_tt, jet.x_p) + np.cross(jet.x_t, jet.x_tp)
    c_p = np.cross(jet.x_tp, jet.x_p) + np.cross(jet.x_t, jet.x_pp)

    def tangential_part(v):
        return (v - np.einsum("...i,...i->...", n, v)[..., None] * n) / jac[..., None]

    n_t = sign[..., None] * tangential_part(c_t)
    n_p = sign[..., None] * tangential_part(c_p)
    return n, n_t, n_p, jac, sign


@dataclass(frozen=True)
class SurfaceSamples:
    """Per-node geometric data of a chart on a quadrature grid.

    All arrays share the leading node axis and are treated as immutable; the
    bundle is safe to share across threads.  ``xi1``/``xi2`` is the
    Gram-Schmidt orthonormal tangent frame of ``(x_t, x_p)``, ``dn_xi*`` the
    Gauss-map derivative applied to it, and ``pushforward`` the rank-2
    matrix realizing that derivative on ambient vectors (it annihilates the
    normal).
    """

    theta: np.ndarray
    phi: np.ndarray
    position: np.ndarray
    x_t: np.ndarray
    x_p: np.ndarray
    normal: np.ndarray
    n_t: np.ndarray
    n_p: np.ndarray
    xi1: np.ndarray
    xi2: np.ndarray
    xi1_coords: np.ndarray  # (a, b) with xi = a x_t + b x_p
    xi2_coords: np.ndarray
    dn_xi1: np.ndarray
    dn_xi2: np.ndarray
    shape_op: np.ndarray
    k1: np.ndarray
    k2: np.ndarray
    jacobian: np.ndarray
    area_weight: np.ndarray
    metric: np.ndarray
    inverse_metric: np.ndarray
    pushforward: np.ndarray
    orientation_sign: np.ndarray
    grid: QuadratureGrid

    @property
    def n_nodes(self) -> int:
        return self.position.shape[0]

    def __len__(self) -> int:
        return self.n_nodes

    @property
    def rms_curvature(self) -> np.ndarray:
        """Pointwise root of k1^2 + k2^2 (the TV-of-normal integrand)."""
        return np.sqrt(self.k1 ** 2 + self.k2 ** 2)

    @property
    def mean_curvature_sum(self) -> np.ndarray:
        """k1 + k2 (twice the mean curvature)."""
        return self.k1 + self.k2

    def integrate(self, values) -> float:
        """Surface integral by quadrature, with compensated summation."""
        return math.fsum(np.asarray(values) * self.area_weight)

    def tangent_coords(self, v):
        """Coefficients (a, b) of tangent vectors v = a x_t + b x_p."""
        vt = np.einsum("...ni,ni->...n", v, self.x_t)
        vp = np.einsum("...ni,ni->...n", v, self.x_p)
        g = self.inverse_metric
        return g[:, 0, 0] * vt + g[:, 0, 1] * vp, g[:, 1, 0] * vt + g[:, 1, 1] * vp


def sample(chart: SurfaceChart, grid: QuadratureGrid) -> SurfaceSamples:
    """Evaluate a chart on a grid and assemble all per-node geometry."""
    theta, phi = grid.nodes_theta, grid.nodes_phi
    jet = chart.derivatives(theta, phi)
    n, n_t, n_p, jac, sign = normal_frame(jet)

    E = np.einsum("ni,ni->n", jet.x_t, jet.x_t)
    F = np.einsum("ni,ni->n", jet.x_t, jet.x_p)
    G = np.einsum("ni,ni->n", jet.x_p, jet.x_p)
    det = E * G - F * F
    metric = np.stack(
        [np.stack([E, F], axis=-1), np.stack([F, G], axis=-1)], axis=-2
    )
    inv = np.empty_like(metric)
    inv[:, 0, 0] = G / det
    inv[:, 0, 1] = -F / det
    inv[:, 1, 0] = -F / det
    inv[:, 1, 1] = E / det

    sqrtE = np.sqrt(E)
    xi1 = jet.x_t / sqrtE[:, None]
    u = jet.x_p - (F / E)[:, None] * jet.x_t
    u_norm = np.sqrt(det / E)
    xi2 = u / u_norm[:, None]
    a1 = 1.0 / sqrtE
    a2 = -F / (E * u_norm)
    b2 = 1.0 / u_norm
    xi1_coords = np.stack([a1, np.zeros_like(a1)], axis=-1)
    xi2_coords = np.stack([a2, b2], axis=-1)

    dn_xi1 = a1[:, None] * n_t
    dn_xi2 = a2[:, None] * n_t + b2[:, None] * n_p

    s11 = np.einsum("ni,ni->n", xi1, dn_xi1)
    s12 = np.einsum("ni,ni->n", xi1, dn_xi2)
    s21 = np.einsum("ni,ni->n", xi2, dn_xi1)
    s22 = np.einsum("ni,ni->n", xi2, dn_xi2)
    shape_op = np.stack(
        [np.stack([s11, s12], axis=-1), np.stack([s21, s22], axis=-1)], axis=-2
    )
    mean = 0.5 * (s11 + s22)
    off = 0.5 * (s12 + s21)
    disc = np.sqrt(0.25 * (s11 - s22) ** 2 + off * off)
    k1 = mean + disc
    k2 = mean - disc

    # Push-forward of the Gauss map on ambient vectors, with W n = 0.
    nd = np.stack([n_t, n_p], axis=1)  # (N, 2, 3)
    xd = np.stack([jet.x_t, jet.x_p], axis=1)
    pushforward = np.einsum("nab,nai,nbj->nij", inv, nd, xd)

    area_weight = jac * grid.param_weights
    return SurfaceSamples(
        theta=theta,
        phi=phi,
        position=jet.x,
        x_t=jet.x_t,
        x_p=jet.x_p,
        normal=n,
        n_t=n_t,
        n_p=n_p,
        xi1=xi1,
        xi2=xi2,
        xi1_coords=xi1_coords,
        xi2_coords=xi2_coords,
        dn_xi1=dn_xi1,
        dn_xi2=dn_xi2,
        shape_op=shape_op,
        k1=k1,
        k2=k2,
        jacobian=jac,
        area_weight=area_weight,
        metric=metric,
        inverse_metric=inv,
        pushforward=pushforward,
        orientation_sign=sign,
        grid=grid,
    )


def integrate(samples: SurfaceSamples, values) -> float:
    return samples.integrate(values)


def area(chart: SurfaceChart, grid: QuadratureGrid) -> float:
    """Total surface area by quadrature."""
    return sample(chart, grid).integrate(1.0)


def volume(chart: SurfaceChart, grid: QuadratureGrid) -> float:
    """Enclosed volume via the divergence theorem, (1/3) integral of x . n."""
    s = sample(chart, grid)
    return s.integrate(np.einsum("ni,ni->n", s.position, s.normal) / 3.0)


def export_mesh(chart: SurfaceChart, grid: QuadratureGrid, path) -> Path:
    """Write a triangulated sampling of the chart as an ASCII OBJ file.

    Vertices are the grid nodes plus the two pole points; rings are stitched
    with quads split into triangles and the poles closed with fans.  Faces
    use 1-based indices and outward-consistent winding.
    """
    path = Path(path)
    nt, np_ = grid.n_theta, grid.n_phi
    verts = chart.position(grid.nodes_theta, grid.nodes_phi)
    north = chart.position(np.array([0.0]), np.array([0.0]))[0]
    south = chart.position(np.array([np.pi]), np.array([0.0]))[0]
    all_verts = np.vstack([verts, north, south])

    def vid(i, j):  # 1-based OBJ index of grid vertex (theta ring i, phi j)
        return i * np_ + (j % np_) + 1

    i_north = nt * np_ + 1
    i_south = nt * np_ + 2
    faces = []
    for j in range(np_):
        faces.append((i_north, vid(0, j), vid(0, j + 1)))
    for i in range(nt - 1):
        for j in range(np_):
            faces.append((vid(i, j), vid(i + 1, j), vid(i + 1, j + 1)))
            faces.append((vid(i, j), vid(i + 1, j + 1), vid(i, j + 1)))
    for j in range(np_):
        faces.append((i_south, vid(nt - 1, j + 1), vid(nt - 1, j)))

    with path.open("w", encoding="ascii") as fh:
        fh.write(f"# tvnormal surface mesh: {len(all_verts)} vertices, {len(faces)} faces\n")
        for v in all_verts:
            fh.write(f"v {v[0]:.17g} {v[1]:.17g} {v[2]:.17g}\n")
        for f in faces:
            fh.write(f"f {f[0]} {f[1]} {f[2]}\n")
    return path


def read_mesh(path):
    """Read vertices and 0-based faces back from an ASCII OBJ file."""
    verts, faces = [], []
    for line in Path(path).read_text(encoding="ascii").splitlines():
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "v":
            verts.append([float(t) for t in parts[1:4]])
        elif parts[0] == "f":
            faces.append([int(t.split("/")[0]) - 1 for t in parts[1:4]])
    return np.asarray(verts), np.asarray(faces, dtype=int)


def mesh_area(verts: np.ndarray, faces: np.ndarray) -> float:
    """Total area of a triangle mesh."""
    p = verts[faces]
    cr = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
    return float(0.5 * np.linalg.norm(cr, axis=-1).sum())
