"""Split Bregman (ADMM) minimization of loss + beta * TV of the normal.

The splitting introduces tangent-vector fields ``d = (d1, d2)`` coupled to
the Gauss-map derivative of the surface through ``d_i = (D_Gamma n) xi_i``
and scaled multipliers ``b = (b1, b2)``; all four live pointwise in the
tangent plane of the current normal.  One sweep performs

1. a few descent steps on the augmented Lagrangian over the radius
   coefficients of a star-shaped chart, with ``d, b`` passively transported
   (their material derivatives vanish),
2. parallel transport of ``d, b`` and the reference frame to the new
   normals along sphere geodesics,
3. a closed-form tangent-space shrinkage for ``d``,
4. the multiplier update ``b_i += (D_Gamma n) xi_i - d_i``.

During the inner descent the reference frame is pushed forward through the
accumulated displacement and re-orthonormalized (first vector normalized,
second Gram-Schmidt corrected), which keeps the evaluated Lagrangian the
exact function whose shape derivative the analytic formula provides;
between sweeps the frame moves by parallel transport instead, so the
tangent data never leaves the current normal's tangent plane.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import calculus
from .charts import RadialChart, SphereChart, SurfaceChart
from .errors import AntipodalPoints, DegenerateMetric, InvalidChart, LineSearchFailed, NonFinite
from .fields import AmbientField, FieldEval, RadialHarmonicBasis
from .functionals import tv_of_normal
from .geometry import QuadratureGrid, SurfaceSamples, sample
from .harmonics import harmonic_degrees
from .sphere import parallel_transport, tangent_project

__all__ = [
    "AdmmConfig",
    "SplitState",
    "LossTerm",
    "ZeroLoss",
    "AreaPenalty",
    "VolumePenalty",
    "AreaMultiplier",
    "NormalTracking",
    "frame_dn",
    "augmented_lagrangian",
    "lagrangian_shape_derivative",
    "fd_lagrangian_derivative",
    "shape_gradient_step",
    "transport_state",
    "shrinkage",
    "multiplier_update",
    "constraint_residual",
    "pushforward_frame",
    "run",
]


@dataclass(frozen=True)
class AdmmConfig:
    """Solver parameters; ``beta/lam`` is the shrinkage threshold."""

    beta: float = 0.1
    lam: float = 1.0
    shape_steps_per_sweep: int = 3
    step_size: float = 0.5
    line_search: bool = True
    max_sweeps: int = 50
    tol_residual: float = 1e-6
    tol_objective: float = 1e-8
    gradient_metric: str = "sobolev"
    sobolev_order: float = 1.0
    eps_reg: float = 1e-8
    opt_degree: int = 6
    grad_tol: float = 1e-12
    armijo_c: float = 1e-4
    max_halvings: int = 30

    def __post_init__(self):
        if self.beta < 0 or self.lam <= 0:
            raise ValueError("need beta >= 0 and lam > 0")
        if self.shape_steps_per_sweep < 1 and self.max_sweeps > 0:
            raise ValueError("need at least one shape step per sweep")
        if min(self.tol_residual, self.tol_objective) <= 0:
            raise ValueError("tolerances must be positive")
        if self.gradient_metric not in ("L2", "l2", "sobolev"):
            raise ValueError(f"unknown gradient metric {self.gradient_metric!r}")


@dataclass(frozen=True)
class SplitState:
    """Splitting fields and scaled multipliers, tangent at current normals."""

    d1: np.ndarray
    d2: np.ndarray
    b1: np.ndarray
    b2: np.ndarray
    iteration: int = 0

    @classmethod
    def zeros(cls, n_nodes: int) -> "SplitState":
        z = np.zeros((n_nodes, 3))
        return cls(z, z.copy(), z.copy(), z.copy())

    @property
    def magnitude(self) -> np.ndarray:
        """Pointwise sqrt(|d1|^2 + |d2|^2)."""
        return np.sqrt(
            np.einsum("ni,ni->n", self.d1, self.d1)
            + np.einsum("ni,ni->n", self.d2, self.d2)
        )


# ----------------------------------------------------------------------
# loss terms (stand-ins for the PDE-dependent part of the objective)

class LossTerm:
    """Shape functional with a derivative that is linear in the field."""

    def value(self, samples: SurfaceSamples) -> float:
        raise NotImplementedError

    def shape_derivative_batch(self, samples, fe: FieldEval, div: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def shape_derivative(self, samples, field: AmbientField) -> float:
        fe = field.evaluate(samples.position, order=1)
        lifted = FieldEval(fe.value[None], fe.jacobian[None])
        div = calculus.tangential_divergence(samples, lifted)
        return float(self.shape_derivative_batch(samples, lifted, div)[0])


class ZeroLoss(LossTerm):
    def value(self, samples):
        return 0.0

    def shape_derivative_batch(self, samples, fe, div):
        return np.zeros(fe.value.shape[0])


class AreaPenalty(LossTerm):
    """0.5 * weight * (area - target)^2."""

    def __init__(self, target: float, weight: float = 1.0):
        self.target = float(target)
        self.weight = float(weight)

    def value(self, samples):
        return 0.5 * self.weight * (samples.integrate(1.0) - self.target) ** 2

    def shape_derivative_batch(self, samples, fe, div):
        gap = samples.integrate(1.0) - self.target
        return self.weight * gap * np.einsum("bn,n->b", div, samples.area_weight)


class VolumePenalty(LossTerm):
    """0.5 * weight * (volume - target)^2."""

    def __init__(self, target: float, weight: float = 1.0):
        self.target = float(target)
        self.weight = float(weight)

    def _volume(self, samples):
        return samples.integrate(np.einsum("ni,ni->n", samples.position, samples.normal) / 3.0)

    def value(self, samples):
        return 0.5 * self.weight * (self._volume(samples) - self.target) ** 2

    def shape_derivative_batch(self, samples, fe, div):
        gap = self._volume(samples) - self.target
        vn = np.einsum("bni,ni->bn", fe.value, samples.normal)
        return self.weight * gap * np.einsum("bn,n->b", vn, samples.area_weight)


class AreaMultiplier(LossTerm):
    """Linear Lagrange term mu * (area - target)."""

    def __init__(self, mu: float, target: float = 0.0):
        self.mu = float(mu)
        self.target = float(target)

    def value(self, samples):
        return self.mu * (samples.integrate(1.0) - self.target)

    def shape_derivative_batch(self, samples, fe, div):
        return self.mu * np.einsum("bn,n->b", div, samples.area_weight)


class NormalTracking(LossTerm):
    """0.5 * weight * integral of |n - target(x)|^2 for an ambient target field."""

    def __init__(self, target: AmbientField, weight: float = 1.0):
        self.target = target
        self.weight = float(weight)

    def _mismatch(self, samples):
        return samples.normal - self.target(samples.position)

    def value(self, samples):
        mism = self._mismatch(samples)
        return 0.5 * self.weight * samples.integrate(np.einsum("ni,ni->n", mism, mism))

    def shape_derivative_batch(self, samples, fe, div):
        mism = self._mismatch(samples)
        sq = np.einsum("ni,ni->n", mism, mism)
        dn = calculus.material_normal(samples, fe)
        dt = np.einsum("nij,bnj->bni", self.target.jacobian(samples.position), fe.value)
        inner = np.einsum("ni,bni->bn", mism, dn - dt)
        integrand = 0.5 * div * sq[None] + inner
        return self.weight * np.einsum("bn,n->b", integrand, samples.area_weight)


# ----------------------------------------------------------------------
# Lagrangian pieces

def frame_dn(samples: SurfaceSamples, frame=None):
    """Gauss-map derivative applied to a (possibly transported) frame."""
    if frame is None:
        return samples.dn_xi1, samples.dn_xi2
    xi1, xi2 = frame
    W = samples.pushforward
    return (
        np.einsum("nij,nj->ni", W, xi1),
        np.einsum("nij,nj->ni", W, xi2),
    )


def _residuals(samples, state, frame):
    dn1, dn2 = frame_dn(samples, frame)
    return state.d1 - dn1 - state.b1, state.d2 - dn2 - state.b2


def augmented_lagrangian(samples, state: SplitState, frame, loss: LossTerm, cfg: AdmmConfig) -> float:
    """loss + beta * integral of |d| + (lam/2) * sum_i integral of |d_i - dn_i - b_i|^2."""
    r1, r2 = _residuals(samples, state, frame)
    pen = samples.integrate(
        np.einsum("ni,ni->n", r1, r1) + np.einsum("ni,ni->n", r2, r2)
    )
    return (
        loss.value(samples)
        + cfg.beta * samples.integrate(state.magnitude)
        + 0.5 * cfg.lam * pen
    )


def lagrangian_shape_derivative(samples, state, frame, loss, field_or_eval, cfg):
    """Shape derivative of the augmented Lagrangian with d, b frozen.

    Four parts: the loss derivative, the transported-TV term
    ``beta * integral(div_Gamma V |d|)``, the penalty's domain variation,
    and the cross term pairing residuals with the material derivative of
    the Gauss-map-applied frame.  Accepts a batched FieldEval and then
    returns one value per basis field.
    """
    fe, batched = calculus._as_batched(samples, field_or_eval, order=2)
    div = calculus.tangential_divergence(samples, fe)
    w = samples.area_weight

    out = loss.shape_derivative_batch(samples, fe, div)
    out = out + cfg.beta * np.einsum("bn,n->b", div, w * state.magnitude)

    r1, r2 = _residuals(samples, state, frame)
    sq = np.einsum("ni,ni->n", r1, r1) + np.einsum("ni,ni->n", r2, r2)
    out = out + 0.5 * cfg.lam * np.einsum("bn,n->b", div, w * sq)

    dD1, dD2 = calculus.material_dn_xi(samples, fe, frame=frame)
    cross = np.einsum("ni,bni->bn", r1, dD1) + np.einsum("ni,bni->bn", r2, dD2)
    out = out - cfg.lam * np.einsum("bn,n->b", cross, w)
    return out if batched else float(out[0])


def fd_lagrangian_derivative(chart, grid, state, frame, loss, cfg, field, eps):
    """Central-difference oracle for the Lagrangian shape derivative.

    Respects the passive-transport convention: d and b keep their nodal
    values, the frame is pushed forward through ``I + eps DV`` and
    re-orthonormalized, and the Lagrangian is re-evaluated on the perturbed
    chart.
    """
    base = sample(chart, grid)
    DV = field.jacobian(base.position)

    def value(side):
        perturbed = calculus.perturb_chart(chart, field, side * eps, grid)
        ps = sample(perturbed, grid)
        fr = pushforward_frame(frame, side * eps * DV)
        return augmented_lagrangian(ps, state, fr, loss, cfg)

    return (value(+1) - value(-1)) / (2.0 * eps)


def pushforward_frame(frame, displacement_jacobian):
    """Push a frame through ``I + DW`` and re-orthonormalize.

    The first vector is normalized, the second Gram-Schmidt corrected; this
    matches the convention under which the frame's material derivative
    formulas are derived, and composes across successive displacements.
    """
    xi1, xi2 = frame
    t1 = xi1 + np.einsum("nij,nj->ni", displacement_jacobian, xi1)
    t1 = t1 / np.linalg.norm(t1, axis=-1, keepdims=True)
    t2 = xi2 + np.einsum("nij,nj->ni", displacement_jacobian, xi2)
    t2 = t2 - np.einsum("ni,ni->n", t1, t2)[:, None] * t1
    t2 = t2 / np.linalg.norm(t2, axis=-1, keepdims=True)
    return t1, t2


def _metric_weights(cfg: AdmmConfig, degree: int) -> np.ndarray:
    if cfg.gradient_metric.lower() == "sobolev":
        l = harmonic_degrees(degree).astype(float)
        return 1.0 / (1.0 + l * (l + 1.0)) ** cfg.sobolev_order
    return np.ones((degree + 1) ** 2)


def shape_gradient_step(
    chart: RadialChart,
    grid: QuadratureGrid,
    samples: SurfaceSamples,
    state: SplitState,
    frame,
    loss: LossTerm,
    cfg: AdmmConfig,
    basis: RadialHarmonicBasis | None = None,
    scale: float = 1.0,
    tau_state: dict | None = None,
):
    """Descent steps on the Lagrangian over radius coefficients.

    Gradient entries are the Lagrangian shape derivatives along the radius
    basis fields; a Sobolev-type diagonal preconditioner smooths them, and
    backtracking enforces decrease of the exact passively-transported
    Lagrangian.  ``tau_state`` optionally carries the last accepted step
    length between calls so the backtracking warm-starts near it.  Returns
    the updated chart and its samples (the state is untouched; transport
    happens afterwards).
    """
    if not isinstance(chart, RadialChart):
        raise InvalidChart("shape steps need a star-shaped radial chart")
    if basis is None:
        basis = RadialHarmonicBasis(cfg.opt_degree, grid)
    if chart.degree != basis.degree:
        chart = chart.lift(basis.degree)

    c0 = chart.coeffs.copy()
    rho0 = np.linalg.norm(samples.position, axis=-1)
    frame0 = frame
    metric = _metric_weights(cfg, basis.degree)

    coeffs = c0.copy()
    cur_chart, cur_samples, cur_frame = chart, samples, frame0
    tau_max = cfg.step_size * scale
    tau_start = tau_max
    if tau_state is not None and "tau" in tau_state:
        tau_start = min(tau_state["tau"] * 2.0, tau_max)

    for _ in range(cfg.shape_steps_per_sweep):
        rho_cur = np.linalg.norm(cur_samples.position, axis=-1)
        fe_basis = basis.evaluate(rho_cur)
        grad = lagrangian_shape_derivative(cur_samples, state, cur_frame, loss, fe_basis, cfg)
        if float(np.linalg.norm(grad)) <= cfg.grad_tol:
            break
        direction = metric * grad
        descent = float(grad @ direction)

        def rebuild(c_try):
            chart_try = RadialChart(c_try)
            samples_try = sample(chart_try, grid)
            frame_try = pushforward_frame(
                frame0, basis.displacement_jacobian(c_try - c0, rho0)
            )
            return chart_try, samples_try, frame_try

        if not cfg.line_search:
            coeffs = coeffs - cfg.step_size * scale * direction
            cur_chart, cur_samples, cur_frame = rebuild(coeffs)
            continue

        l_cur = augmented_lagrangian(cur_samples, state, cur_frame, loss, cfg)
        tau = tau_start
        for _halving in range(cfg.max_halvings):
            c_try = coeffs - tau * direction
            try:
                trial = rebuild(c_try)
            except (InvalidChart, DegenerateMetric):
                tau *= 0.5
                continue
            l_try = augmented_lagrangian(trial[1], state, trial[2], loss, cfg)
            if l_try <= l_cur - cfg.armijo_c * tau * descent:
                coeffs = c_try
                cur_chart, cur_samples, cur_frame = trial
                tau_start = min(2.0 * tau, tau_max)
                if tau_state is not None:
                    tau_state["tau"] = tau
                break
            tau *= 0.5
        else:
            raise LineSearchFailed(
                f"no Lagrangian decrease after {cfg.max_halvings} halvings"
            )
    return cur_chart, cur_samples


def transport_state(state: SplitState, old_normals, new_normals, frame):
    """Parallel transport of d, b and the frame to the new normals.

    The frame is lightly re-orthonormalized afterwards so the tangency and
    orthonormality invariants hold exactly even after long runs.

    Raises
    ------
    AntipodalPoints
        If a normal flipped (nearly) half a turn at some node.
    """
    def move(v):
        moved = parallel_transport(old_normals, new_normals, v)
        return tangent_project(new_normals, moved)

    new_state = replace(
        state, d1=move(state.d1), d2=move(state.d2), b1=move(state.b1), b2=move(state.b2)
    )
    xi1 = move(frame[0])
    xi1 /= np.linalg.norm(xi1, axis=-1, keepdims=True)
    xi2 = move(frame[1])
    xi2 -= np.einsum("ni,ni->n", xi1, xi2)[:, None] * xi1
    xi2 /= np.linalg.norm(xi2, axis=-1, keepdims=True)
    return new_state, (xi1, xi2)


def shrinkage(samples, state: SplitState, frame, cfg: AdmmConfig) -> SplitState:
    """Closed-form minimizer of the d-subproblem: vectorial soft threshold.

    With q_i = (D_Gamma n) xi_i + b_i and |q| the joint norm, the update is
    d = max(|q| - beta/lam, 0) q / |q| (zero where q vanishes).
    """
    dn1, dn2 = frame_dn(samples, frame)
    q1 = dn1 + state.b1
    q2 = dn2 + state.b2
    qnorm = np.sqrt(np.einsum("ni,ni->n", q1, q1) + np.einsum("ni,ni->n", q2, q2))
    factor = np.zeros_like(qnorm)
    mask = qnorm > 0.0
    factor[mask] = np.maximum(qnorm[mask] - cfg.beta / cfg.lam, 0.0) / qnorm[mask]
    return replace(state, d1=factor[:, None] * q1, d2=factor[:, None] * q2)


def multiplier_update(samples, state: SplitState, frame) -> SplitState:
    """b_i += (D_Gamma n) xi_i - d_i (the scaled dual ascent step)."""
    dn1, dn2 = frame_dn(samples, frame)
    return replace(
        state,
        b1=state.b1 + dn1 - state.d1,
        b2=state.b2 + dn2 - state.d2,
    )


def constraint_residual(samples, state: SplitState, frame) -> float:
    """L2 norm of d - (D_Gamma n) xi over the surface."""
    dn1, dn2 = frame_dn(samples, frame)
    sq = np.einsum("ni,ni->n", state.d1 - dn1, state.d1 - dn1) + np.einsum(
        "ni,ni->n", state.d2 - dn2, state.d2 - dn2
    )
    return float(np.sqrt(samples.integrate(sq)))


def run(
    chart: SurfaceChart,
    grid: QuadratureGrid,
    loss: LossTerm,
    cfg: AdmmConfig,
    on_sweep=None,
):
    """Full split Bregman iteration from a star-shaped initial chart.

    Starts from ``d = b = 0``.  Stops after ``max_sweeps`` sweeps, or as
    soon as both the constraint residual drops below ``tol_residual`` and
    the relative Lagrangian change below ``tol_objective``.  Returns the
    final chart and a per-sweep trace (list of dicts with lagrangian, tv,
    loss, residual, area, volume).

    Raises
    ------
    NonFinite
        If any trace quantity stops being finite.
    """
    if isinstance(chart, SphereChart):
        chart = RadialChart.from_sphere(chart.radius, cfg.opt_degree)
    if not isinstance(chart, RadialChart):
        raise InvalidChart("the optimization variable is a radial chart")
    if chart.degree < cfg.opt_degree:
        chart = chart.lift(cfg.opt_degree)

    basis = RadialHarmonicBasis(max(cfg.opt_degree, chart.degree), grid)
    samples = sample(chart, grid)
    frame = (samples.xi1.copy(), samples.xi2.copy())
    state = SplitState.zeros(samples.n_nodes)
    trace: list[dict] = []
    l_prev = None
    tau_state: dict = {}

    def trace_row(sweep):
        row = {
            "sweep": sweep,
            "lagrangian": augmented_lagrangian(samples, state, frame, loss, cfg),
            "tv": tv_of_normal(samples),
            "loss": loss.value(samples),
            "residual": constraint_residual(samples, state, frame),
            "area": samples.integrate(1.0),
            "volume": samples.integrate(
                np.einsum("ni,ni->n", samples.position, samples.normal) / 3.0
            ),
        }
        if not all(math.isfinite(v) for v in row.values()):
            raise NonFinite(f"non-finite trace value at sweep {sweep}: {row}")
        return row

    if cfg.max_sweeps > 0:
        trace.append(trace_row(0))  # starting point, before any update

    for sweep in range(1, cfg.max_sweeps + 1):
        scale = 1.0
        for _attempt in range(6):
            new_chart, new_samples = shape_gradient_step(
                chart, grid, samples, state, frame, loss, cfg,
                basis=basis, scale=scale, tau_state=tau_state,
            )
            try:
                new_state, new_frame = transport_state(
                    state, samples.normal, new_samples.normal, frame
                )
                break
            except AntipodalPoints:
                # a shape step flipped some normal by ~pi; retry smaller
                scale *= 0.5
        else:
            raise AntipodalPoints("transport kept failing after step-size backoff")

        chart, samples, state, frame = new_chart, new_samples, new_state, new_frame
        state = shrinkage(samples, state, frame, cfg)
        state = multiplier_update(samples, state, frame)
        state = replace(state, iteration=sweep)

        row = trace_row(sweep)
        lagr = row["lagrangian"]
        trace.append(row)
        if on_sweep is not None:
            on_sweep(sweep, chart, row)

        if (
            l_prev is not None
            and row["residual"] < cfg.tol_residual
            and abs(lagr - l_prev) <= cfg.tol_objective * max(1.0, abs(l_prev))
        ):
            break
        l_prev = lagr

    return chart, trace
