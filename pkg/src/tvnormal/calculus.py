"""Material and shape derivatives on sampled surfaces.

Surfaces move by perturbation of identity, ``x -> x + eps V(x)``; everything
here differentiates along such deformations at ``eps = 0``.  The module
provides the analytic derivatives (of the normal, the orthonormal tangent
frame, the Gauss-map derivative applied to the frame, and surface
integrals), the corresponding central finite-difference oracles, tangential
Stokes identity residuals, and the stationarity residuals of spheres for
the area- and volume-constrained problems.

All derivatives of surface fields are taken parametrically in (theta, phi)
through the chart and converted with the inverse metric; no ambient
extension is ever constructed except the ray extension built into the
deformation fields themselves.

Internally the field data may carry a leading batch axis (B, N, ...), which
is how the solver differentiates against a whole basis of deformation
fields at once; the public single-field entry points accept a plain
:class:`~tvnormal.fields.AmbientField` and return unbatched results.
"""

from __future__ import annotations

import numpy as np

from .charts import PerturbedChart, SurfaceChart
from .errors import FlatRegion, LostStarShape
from .fields import AmbientField, FieldEval
from .geometry import QuadratureGrid, SurfaceSamples, sample
from .functionals import tv_of_normal

__all__ = [
    "perturb_chart",
    "tangential_divergence",
    "material_normal",
    "material_frame",
    "material_dn_xi",
    "shape_derivative_surface_integral",
    "shape_derivative_surface_integral_normal_form",
    "area_shape_derivative",
    "volume_shape_derivative",
    "tv_shape_derivative",
    "tv_derivative_terms",
    "stationarity_residual",
    "volume_stationarity_residual",
    "stationarity_battery",
    "combine_stationarity",
    "fd_shape_derivative",
    "fd_material_normal",
    "fd_material_frame",
    "fd_material_dn_xi",
    "tangential_stokes_residual",
    "stokes_scalar_residual",
    "tangential_gradient_from_param",
    "field_norm",
]

_FLAT_TOL = 1e-10


# ----------------------------------------------------------------------
# helpers

def _as_batched(samples: SurfaceSamples, field_or_eval, order: int = 2):
    """Evaluate/lift a field to batched (B, N, ...) arrays."""
    if isinstance(field_or_eval, FieldEval):
        fe = field_or_eval
    else:
        fe = field_or_eval.evaluate(samples.position, order=order)
    if fe.batched:
        return fe, True
    return (
        FieldEval(
            fe.value[None],
            None if fe.jacobian is None else fe.jacobian[None],
            None if fe.hessian is None else fe.hessian[None],
        ),
        False,
    )


def _squeeze(arr, batched):
    return arr if batched else arr[0]


def _frame(samples: SurfaceSamples, frame):
    if frame is None:
        return (samples.xi1, samples.xi2), (samples.xi1_coords, samples.xi2_coords)
    xi1, xi2 = frame
    c1 = np.stack(samples.tangent_coords(xi1), axis=-1)
    c2 = np.stack(samples.tangent_coords(xi2), axis=-1)
    return (xi1, xi2), (c1, c2)


def field_norm(samples: SurfaceSamples, values) -> float:
    """L2 norm over the surface of a nodal (scalar or vector) field."""
    values = np.asarray(values)
    sq = values ** 2 if values.ndim == 1 else np.einsum("ni,ni->n", values, values)
    return float(np.sqrt(samples.integrate(sq)))


def tangential_gradient_from_param(samples: SurfaceSamples, f_t, f_p):
    """Tangential gradient of a scalar field from its parametric derivatives."""
    g = samples.inverse_metric
    u = g[:, 0, 0] * f_t + g[:, 0, 1] * f_p
    v = g[:, 1, 0] * f_t + g[:, 1, 1] * f_p
    return u[:, None] * samples.x_t + v[:, None] * samples.x_p


def _surface_divergence_from_param(samples: SurfaceSamples, c_t, c_p):
    """div_Gamma of a vector field on the surface from parametric derivatives."""
    a1, b1 = samples.xi1_coords[:, 0], samples.xi1_coords[:, 1]
    a2, b2 = samples.xi2_coords[:, 0], samples.xi2_coords[:, 1]
    d1 = a1[:, None] * c_t + b1[:, None] * c_p
    d2 = a2[:, None] * c_t + b2[:, None] * c_p
    return np.einsum("ni,ni->n", samples.xi1, d1) + np.einsum("ni,ni->n", samples.xi2, d2)


# ----------------------------------------------------------------------
# perturbation of identity

def perturb_chart(
    chart: SurfaceChart, field: AmbientField, eps: float, grid: QuadratureGrid | None = None
) -> PerturbedChart:
    """Chart with embedding ``x + eps V(x)``, optionally validated on a grid.

    With a grid given, the perturbed surface is checked to stay a positively
    oriented star-shaped graph; otherwise construction is lazy.

    Raises
    ------
    LostStarShape
        If the perturbed radius vanishes or the orientation flips anywhere.
    """
    perturbed = PerturbedChart(chart, field, eps)
    if grid is not None:
        try:
            s = sample(perturbed, grid)
        except Exception as exc:
            raise LostStarShape(f"perturbation of size {eps} degenerates the chart") from exc
        radius = np.linalg.norm(s.position, axis=-1)
        if np.any(radius <= 1e-12) or np.any(s.orientation_sign < 0):
            raise LostStarShape(f"perturbation of size {eps} loses star-shapedness")
    return perturbed


# ----------------------------------------------------------------------
# material derivatives

def tangential_divergence(samples: SurfaceSamples, field_or_eval):
    """div_Gamma V = div V - n^T (DV) n at every node."""
    fe, batched = _as_batched(samples, field_or_eval, order=1)
    DV = fe.jacobian
    n = samples.normal
    div = np.einsum("bnii->bn", DV) - np.einsum("ni,bnij,nj->bn", n, DV, n)
    return _squeeze(div, batched)


def material_normal(samples: SurfaceSamples, field_or_eval):
    """Material derivative of the outward normal, ``-(D_Gamma V)^T n``.

    The result is tangential at every node.
    """
    fe, batched = _as_batched(samples, field_or_eval, order=1)
    n = samples.normal
    t = np.einsum("bnji,nj->bni", fe.jacobian, n)
    s = np.einsum("ni,bni->bn", n, t)
    return _squeeze(-t + s[..., None] * n, batched)


def material_frame(samples: SurfaceSamples, field_or_eval, frame=None):
    """Material derivatives of the orthonormal tangent frame.

    The first vector is pushed forward and renormalized, the second
    Gram-Schmidt orthogonalized against the first, which is what makes the
    two formulas asymmetric.
    """
    fe, batched = _as_batched(samples, field_or_eval, order=1)
    (xi1, xi2), _ = _frame(samples, frame)
    DV = fe.jacobian
    D1 = np.einsum("bnij,nj->bni", DV, xi1)
    D2 = np.einsum("bnij,nj->bni", DV, xi2)
    d1 = D1 - np.einsum("ni,bni->bn", xi1, D1)[..., None] * xi1
    mixed = np.einsum("ni,bni->bn", xi1, D2) + np.einsum("ni,bni->bn", xi2, D1)
    d2 = D2 - np.einsum("ni,bni->bn", xi2, D2)[..., None] * xi2 - mixed[..., None] * xi1
    return _squeeze(d1, batched), _squeeze(d2, batched)


def _dn_field_param_derivatives(samples: SurfaceSamples, fe: FieldEval):
    """dn[V] as a surface field together with its theta/phi derivatives.

    Differentiates m = -(I - n n^T)(DV)^T n parametrically; needs the field
    Hessian and the chart's normal derivatives.
    """
    n, n_t, n_p = samples.normal, samples.n_t, samples.n_p
    DV, H = fe.jacobian, fe.hessian
    # (H_a)^T n for a in {theta, phi} via one heavy contraction with n:
    # G[i, k] = sum_j H[j, i, k] n_j, then (DV_a)^T n = G x_a.
    G = np.einsum("bnjik,nj->bnik", H, n)

    t = np.einsum("bnji,nj->bni", DV, n)
    s = np.einsum("ni,bni->bn", n, t)
    m = -t + s[..., None] * n

    def branch(x_a, n_a):
        t_a = np.einsum("bnik,nk->bni", G, x_a) + np.einsum("bnji,nj->bni", DV, n_a)
        s_a = np.einsum("ni,bni->bn", n_a, t) + np.einsum("ni,bni->bn", n, t_a)
        return -t_a + s_a[..., None] * n + s[..., None] * n_a

    return m, branch(samples.x_t, n_t), branch(samples.x_p, n_p)


def material_dn_xi(samples: SurfaceSamples, field_or_eval, frame=None, return_terms=False):
    """Material derivative of the Gauss-map derivative applied to the frame.

    Three contributions per frame vector: the tangential derivative of the
    normal's material derivative, minus the Gauss-map derivative composed
    with the deformation gradient, plus the Gauss-map derivative of the
    frame's material derivative.  With ``return_terms`` the three parts are
    returned separately (used by the sphere term-by-term checks).
    """
    fe, batched = _as_batched(samples, field_or_eval, order=2)
    (xi1, xi2), (c1, c2) = _frame(samples, frame)
    W = samples.pushforward
    DV = fe.jacobian

    m, m_t, m_p = _dn_field_param_derivatives(samples, fe)
    # fe is batched here, so the frame derivatives come back batched too
    dxi1, dxi2 = material_frame(samples, fe, frame=(xi1, xi2))

    out, terms = [], []
    for xi, coords, dxi in ((xi1, c1, dxi1), (xi2, c2, dxi2)):
        a, b = coords[..., 0], coords[..., 1]
        t1 = a[..., None] * m_t + b[..., None] * m_p
        t2 = -np.einsum("nij,bnj->bni", W, np.einsum("bnij,nj->bni", DV, xi))
        t3 = np.einsum("nij,bnj->bni", W, dxi)
        out.append(t1 + t2 + t3)
        terms.append((t1, t2, t3))
    if return_terms:
        return tuple(
            tuple(_squeeze(t, batched) for t in trio) for trio in terms
        )
    return _squeeze(out[0], batched), _squeeze(out[1], batched)


# ----------------------------------------------------------------------
# shape derivatives of integrals

def shape_derivative_surface_integral(samples: SurfaceSamples, g, dg, field_or_eval):
    """d/d(eps) of a surface integral: integral of g div_Gamma V + dg[V].

    ``g`` and ``dg`` are nodal arrays (dg possibly batched like the field).
    """
    fe, batched = _as_batched(samples, field_or_eval, order=1)
    div = tangential_divergence(samples, fe)
    g = np.asarray(g)
    dg = np.asarray(dg)
    if dg.ndim == 1:
        dg = dg[None]
    vals = np.einsum("bn,n->b", g[None] * div + dg, samples.area_weight)
    return _squeeze(vals, batched)


def shape_derivative_surface_integral_normal_form(samples, g, grad_g, g_prime, field_or_eval):
    """Same derivative in boundary form: integral of V.n [(Dg).n + (k1+k2) g] + g'.

    Valid when the local derivative ``g_prime`` exists; used as a
    cross-check of the material form.  ``grad_g`` is the ambient gradient
    of an extension of g (zero normal component for the normal-constant
    extension convention).
    """
    fe, batched = _as_batched(samples, field_or_eval, order=0)
    vn = np.einsum("bni,ni->bn", fe.value, samples.normal)
    gn = np.einsum("ni,ni->n", np.asarray(grad_g), samples.normal)
    g_prime = np.asarray(g_prime)
    if g_prime.ndim == 1:
        g_prime = g_prime[None]
    integrand = vn * (gn + samples.mean_curvature_sum * np.asarray(g))[None] + g_prime
    return _squeeze(np.einsum("bn,n->b", integrand, samples.area_weight), batched)


def area_shape_derivative(samples: SurfaceSamples, field_or_eval):
    """dArea[V] = integral of div_Gamma V."""
    fe, batched = _as_batched(samples, field_or_eval, order=1)
    div = tangential_divergence(samples, fe)  # batched fe -> (B, N)
    return _squeeze(np.einsum("bn,n->b", div, samples.area_weight), batched)


def volume_shape_derivative(samples: SurfaceSamples, field_or_eval):
    """dVolume[V] = integral of V . n."""
    fe, batched = _as_batched(samples, field_or_eval, order=0)
    vn = np.einsum("bni,ni->bn", fe.value, samples.normal)
    return _squeeze(np.einsum("bn,n->b", vn, samples.area_weight), batched)


def tv_shape_derivative(samples: SurfaceSamples, field_or_eval, eps_reg: float = 0.0):
    """Shape derivative of the total variation of the normal.

    The integrand derivative contracts the Gauss-map derivative of the frame
    with its material derivative and divides by the integrand; with
    ``eps_reg > 0`` only that reciprocal is smoothed, the integrand itself
    stays exact.

    Raises
    ------
    FlatRegion
        If ``eps_reg == 0`` and both principal curvatures vanish somewhere.
    """
    fe, batched = _as_batched(samples, field_or_eval, order=2)
    g = samples.rms_curvature
    if eps_reg == 0.0 and np.any(g <= _FLAT_TOL):
        raise FlatRegion("integrand vanishes at a node; use eps_reg > 0")
    ginv = 1.0 / (g if eps_reg == 0.0 else np.sqrt(g * g + eps_reg * eps_reg))
    dD1, dD2 = material_dn_xi(samples, fe)  # batched fe -> (B, N, 3)
    dg = ginv[None] * (
        np.einsum("ni,bni->bn", samples.dn_xi1, dD1)
        + np.einsum("ni,bni->bn", samples.dn_xi2, dD2)
    )
    div = tangential_divergence(samples, fe)
    vals = np.einsum("bn,n->b", g[None] * div + dg, samples.area_weight)
    return _squeeze(vals, batched)


def tv_derivative_terms(samples: SurfaceSamples, field: AmbientField, eps_reg: float = 0.0):
    """The three integrand-derivative integrals of the TV shape derivative.

    Splits dg[V] by the three contributions of the Gauss-map material
    derivative.  On spheres the first and third vanish and the second
    equals -(sqrt(2)/r^2) * dVolume[V] for normal fields V.
    """
    fe, _ = _as_batched(samples, field, order=2)
    g = samples.rms_curvature
    if eps_reg == 0.0 and np.any(g <= _FLAT_TOL):
        raise FlatRegion("integrand vanishes at a node; use eps_reg > 0")
    ginv = 1.0 / (g if eps_reg == 0.0 else np.sqrt(g * g + eps_reg * eps_reg))
    parts = material_dn_xi(samples, fe, return_terms=True)
    sums = []
    for k in range(3):
        integrand = ginv[None] * (
            np.einsum("ni,bni->bn", samples.dn_xi1, parts[0][k])
            + np.einsum("ni,bni->bn", samples.dn_xi2, parts[1][k])
        )
        sums.append(float(np.einsum("bn,n->b", integrand, samples.area_weight)[0]))
    return tuple(sums)


# ----------------------------------------------------------------------
# sphere stationarity

def _sphere_stationarity(radius, field, grid, mu, constraint):
    from .charts import SphereChart

    samples = sample(SphereChart(radius), grid)
    fe = field.evaluate(samples.position, order=2)
    tvd = tv_shape_derivative(samples, fe)
    if constraint == "area":
        constraint_derivative = area_shape_derivative(samples, fe)
        mu_default = -1.0 / (np.sqrt(2.0) * radius)
    else:
        constraint_derivative = volume_shape_derivative(samples, fe)
        mu_default = -np.sqrt(2.0) / radius ** 2
    mu = mu_default if mu is None else float(mu)
    dL = tvd + mu * constraint_derivative
    vnorm = field_norm(samples, fe.value)
    return abs(dL) / (1.0 + vnorm)


def stationarity_residual(radius: float, field: AmbientField, grid: QuadratureGrid, mu=None):
    """|dL| / (1 + ||V||) for the area-constrained Lagrangian on a sphere.

    With the stationarity multiplier ``mu = -1/(sqrt(2) r)`` (the default)
    the residual vanishes for every normal deformation field; passing a
    different ``mu`` gives the control experiment.
    """
    return _sphere_stationarity(radius, field, grid, mu, "area")


def volume_stationarity_residual(radius: float, field: AmbientField, grid: QuadratureGrid, mu=None):
    """Volume-constrained version; stationary multiplier ``-sqrt(2)/r^2``."""
    return _sphere_stationarity(radius, field, grid, mu, "volume")


def stationarity_battery(radius: float, fields, grid: QuadratureGrid):
    """Raw stationarity ingredients for a whole battery of fields at once.

    Samples the sphere once and differentiates against all fields in a
    single batched pass.  Returns arrays (one entry per field) of the TV
    derivative, the area and volume derivatives, and the field L2 norms;
    :func:`combine_stationarity` turns them into residuals.
    """
    from .charts import SphereChart

    samples = sample(SphereChart(radius), grid)
    evals = [f.evaluate(samples.position, order=2) for f in fields]
    fe = FieldEval(
        np.stack([e.value for e in evals]),
        np.stack([e.jacobian for e in evals]),
        np.stack([e.hessian for e in evals]),
    )
    norms = np.sqrt(
        np.einsum("bni,bni,n->b", fe.value, fe.value, samples.area_weight)
    )
    return {
        "tv_derivative": tv_shape_derivative(samples, fe),
        "area_derivative": area_shape_derivative(samples, fe),
        "volume_derivative": volume_shape_derivative(samples, fe),
        "field_norm": norms,
    }


def combine_stationarity(battery: dict, radius: float, constraint: str, mu=None):
    """Residuals |dTV + mu dConstraint| / (1 + |V|) from battery arrays."""
    if constraint == "area":
        cd = battery["area_derivative"]
        mu_default = -1.0 / (np.sqrt(2.0) * radius)
    else:
        cd = battery["volume_derivative"]
        mu_default = -np.sqrt(2.0) / radius ** 2
    mu = mu_default if mu is None else float(mu)
    return np.abs(battery["tv_derivative"] + mu * cd) / (1.0 + battery["field_norm"]), mu


# ----------------------------------------------------------------------
# finite-difference oracles

def fd_shape_derivative(chart, functional, field, eps: float, grid: QuadratureGrid):
    """Central difference (F(x + eps V) - F(x - eps V)) / (2 eps).

    ``functional`` is called as ``functional(chart, grid)``.
    """
    plus = functional(perturb_chart(chart, field, +eps, grid), grid)
    minus = functional(perturb_chart(chart, field, -eps, grid), grid)
    return (plus - minus) / (2.0 * eps)


def fd_tv(chart, grid):
    return tv_of_normal(sample(chart, grid))


def _fd_pair(chart, field, grid, eps):
    sp = sample(perturb_chart(chart, field, +eps, grid), grid)
    sm = sample(perturb_chart(chart, field, -eps, grid), grid)
    return sp, sm


def fd_material_normal(chart, field, grid, eps: float):
    """Nodewise central difference of the normal, projected tangentially."""
    base = sample(chart, grid)
    sp, sm = _fd_pair(chart, field, grid, eps)
    diff = (sp.normal - sm.normal) / (2.0 * eps)
    n = base.normal
    return diff - np.einsum("ni,ni->n", n, diff)[:, None] * n


def fd_material_frame(chart, field, grid, eps: float):
    """Central difference of the Gram-Schmidt frame at fixed parameters.

    Resampling reproduces exactly the push-forward construction of the
    perturbed frame, so this differences the right object.
    """
    sp, sm = _fd_pair(chart, field, grid, eps)
    return (
        (sp.xi1 - sm.xi1) / (2.0 * eps),
        (sp.xi2 - sm.xi2) / (2.0 * eps),
    )


def fd_material_dn_xi(chart, field, grid, eps: float):
    """Central difference of the Gauss-map derivative applied to the frame."""
    sp, sm = _fd_pair(chart, field, grid, eps)
    return (
        (sp.dn_xi1 - sm.dn_xi1) / (2.0 * eps),
        (sp.dn_xi2 - sm.dn_xi2) / (2.0 * eps),
    )


# ----------------------------------------------------------------------
# tangential Stokes identities

def stokes_scalar_residual(samples: SurfaceSamples, scalar, field: AmbientField) -> float:
    """Residual of the scalar tangential Stokes formula.

    | integral of c div_Gamma V - V.n c (k1+k2) + (D_Gamma c) . V | for a
    C^1 scalar ``c`` (an ambient scalar with a gradient, or the constant 1
    when ``scalar`` is None) and any C^1 vector field V.
    """
    fe = field.evaluate(samples.position, order=1)
    div = tangential_divergence(samples, fe)
    vn = np.einsum("ni,ni->n", fe.value, samples.normal)
    if scalar is None:
        c = np.ones(samples.n_nodes)
        tgrad = np.zeros_like(fe.value)
    else:
        c = scalar(samples.position)
        grad = scalar.gradient(samples.position)
        c_t = np.einsum("ni,ni->n", grad, samples.x_t)
        c_p = np.einsum("ni,ni->n", grad, samples.x_p)
        tgrad = tangential_gradient_from_param(samples, c_t, c_p)
    lhs = samples.integrate(c * div)
    rhs = samples.integrate(vn * c * samples.mean_curvature_sum) - samples.integrate(
        np.einsum("ni,ni->n", tgrad, fe.value)
    )
    return abs(lhs - rhs)


def tangential_stokes_residual(
    samples: SurfaceSamples, a_field: AmbientField, b_field: AmbientField, v_field: AmbientField
) -> float:
    """Residual of the tangential Stokes identity for normal fields V.

    Left side: integral of a^T (D_Gamma V) b.  Right side: integral of
    V.n [ -div_Gamma((a.n) b) + (a.n)(b.n)(k1+k2) + a^T (D_Gamma n) b ].
    Both sides are evaluated by quadrature; V must be normal along the
    surface for the identity to hold.
    """
    n, n_t, n_p = samples.normal, samples.n_t, samples.n_p
    fa = a_field.evaluate(samples.position, order=1)
    fb = b_field.evaluate(samples.position, order=1)
    fv = v_field.evaluate(samples.position, order=1)

    b_tan = fb.value - np.einsum("ni,ni->n", fb.value, n)[:, None] * n
    lhs = samples.integrate(
        np.einsum("ni,nij,nj->n", fa.value, fv.jacobian, b_tan)
    )

    an = np.einsum("ni,ni->n", fa.value, n)
    bn = np.einsum("ni,ni->n", fb.value, n)
    vn = np.einsum("ni,ni->n", fv.value, n)

    def directional(fe, direction):
        return np.einsum("nij,nj->ni", fe.jacobian, direction)

    da_t, da_p = directional(fa, samples.x_t), directional(fa, samples.x_p)
    db_t, db_p = directional(fb, samples.x_t), directional(fb, samples.x_p)
    an_t = np.einsum("ni,ni->n", da_t, n) + np.einsum("ni,ni->n", fa.value, n_t)
    an_p = np.einsum("ni,ni->n", da_p, n) + np.einsum("ni,ni->n", fa.value, n_p)
    c_t = an_t[:, None] * fb.value + an[:, None] * db_t
    c_p = an_p[:, None] * fb.value + an[:, None] * db_p
    div_c = _surface_divergence_from_param(samples, c_t, c_p)

    a_w_b = np.einsum("ni,nij,nj->n", fa.value, samples.pushforward, fb.value)
    rhs = samples.integrate(vn * (-div_c + an * bn * samples.mean_curvature_sum + a_w_b))
    return abs(lhs - rhs)
