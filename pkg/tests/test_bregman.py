import dataclasses

import numpy as np
import pytest

from tvnormal import bregman, calculus, geometry
from tvnormal.bregman import (
    AdmmConfig,
    AreaMultiplier,
    AreaPenalty,
    NormalTracking,
    SplitState,
    VolumePenalty,
    ZeroLoss,
    augmented_lagrangian,
    frame_dn,
    lagrangian_shape_derivative,
    multiplier_update,
    run,
    shape_gradient_step,
    shrinkage,
    transport_state,
)
from tvnormal.charts import RadialChart, SphereChart
from tvnormal.errors import AntipodalPoints, InvalidChart, LineSearchFailed, NonFinite
from tvnormal.fields import RadialHarmonicField, SumField, TrigPolyField
from tvnormal.functionals import total_curvature, tv_of_normal


def random_state(samples, rng, scale=0.3):
    t1 = np.cross(samples.normal, rng.normal(size=(samples.n_nodes, 3)))
    t1 *= scale / np.linalg.norm(t1, axis=-1, keepdims=True)
    t2 = np.cross(samples.normal, t1)
    t2 *= 0.6 * scale / np.linalg.norm(t2, axis=-1, keepdims=True)
    return SplitState(d1=t1, d2=t2, b1=0.4 * t2, b2=-0.25 * t1)


def matching_state(samples, frame=None):
    dn1, dn2 = frame_dn(samples, frame)
    z = np.zeros_like(dn1)
    return SplitState(d1=dn1.copy(), d2=dn2.copy(), b1=z, b2=z.copy())


class TestAugmentedLagrangian:
    def test_matching_state_leaves_tv_term(self, unit_sphere_samples):
        cfg = AdmmConfig(beta=0.7, lam=2.0)
        state = matching_state(unit_sphere_samples)
        val = augmented_lagrangian(unit_sphere_samples, state, None, ZeroLoss(), cfg)
        assert abs(val - 0.7 * tv_of_normal(unit_sphere_samples)) < 1e-10

    def test_zero_state_gives_penalized_curvature(self, unit_sphere_samples):
        cfg = AdmmConfig(beta=0.7, lam=2.0)
        state = SplitState.zeros(unit_sphere_samples.n_nodes)
        val = augmented_lagrangian(unit_sphere_samples, state, None, ZeroLoss(), cfg)
        assert abs(val - 0.5 * cfg.lam * total_curvature(unit_sphere_samples)) < 1e-10
        assert abs(val - cfg.lam * 4 * np.pi) < 1e-10

    def test_nonnegative_without_loss(self, bumpy_samples, rng):
        cfg = AdmmConfig(beta=0.2, lam=1.0)
        state = random_state(bumpy_samples, rng)
        assert augmented_lagrangian(bumpy_samples, state, None, ZeroLoss(), cfg) >= 0.0


class TestLagrangianDerivative:
    def test_zero_field(self, bumpy_samples, rng):
        cfg = AdmmConfig(beta=0.2, lam=1.0)
        state = random_state(bumpy_samples, rng)
        from tvnormal.fields import ConstantField

        val = lagrangian_shape_derivative(
            bumpy_samples, state, None, ZeroLoss(), ConstantField([0, 0, 0]), cfg
        )
        assert val == 0.0

    def test_frozen_tv_term_matches_fd(self, bumpy_chart, bumpy_samples, grid48, rng):
        # state d = (D_Gamma n) xi with b = 0 makes the penalty vanish; the
        # remaining beta-term is the frozen-transport functional
        cfg = AdmmConfig(beta=1.0, lam=1.0)
        frame = (bumpy_samples.xi1, bumpy_samples.xi2)
        state = matching_state(bumpy_samples)
        V = TrigPolyField.random(rng, 2)
        analytic = lagrangian_shape_derivative(bumpy_samples, state, frame, ZeroLoss(), V, cfg)
        mag = state.magnitude

        def frozen_functional(chart, grid):
            ss = geometry.sample(chart, grid)
            return ss.integrate(mag)  # only ds transforms; |d| is frozen

        fd = calculus.fd_shape_derivative(bumpy_chart, frozen_functional, V, 1e-4, grid48)
        # the penalty contributes at second order only when the residual is 0
        assert abs(analytic - fd) < 1e-4 * max(1.0, abs(analytic))

    def test_full_state_matches_fd(self, bumpy_chart, bumpy_samples, grid48, rng):
        cfg = AdmmConfig(beta=0.3, lam=1.2)
        frame = (bumpy_samples.xi1, bumpy_samples.xi2)
        state = random_state(bumpy_samples, rng)
        loss = AreaPenalty(target=0.9 * bumpy_samples.integrate(1.0), weight=1.5)
        V = TrigPolyField.random(rng, 3)
        analytic = lagrangian_shape_derivative(bumpy_samples, state, frame, loss, V, cfg)
        fd = bregman.fd_lagrangian_derivative(
            bumpy_chart, grid48, state, frame, loss, cfg, V, 1e-4
        )
        assert abs(analytic - fd) < 1e-4 * max(1.0, abs(analytic))

    def test_loss_derivatives_linear_in_field(self, bumpy_samples, rng):
        from tvnormal.fields import ScaledField

        losses = [
            AreaPenalty(10.0, 2.0),
            VolumePenalty(3.0, 1.0),
            AreaMultiplier(-0.3, 4.0),
            NormalTracking(RadialHarmonicField(np.array([np.sqrt(4 * np.pi)])), 2.0),
        ]
        V1 = TrigPolyField.random(rng, 2)
        V2 = TrigPolyField.random(rng, 2)
        combo = SumField(ScaledField(V1, 0.6), ScaledField(V2, -2.0))
        for loss in losses:
            lhs = loss.shape_derivative(bumpy_samples, combo)
            rhs = 0.6 * loss.shape_derivative(bumpy_samples, V1) - 2.0 * loss.shape_derivative(
                bumpy_samples, V2
            )
            assert abs(lhs - rhs) < 1e-9 * max(1.0, abs(lhs))

    def test_normal_tracking_matches_fd(self, bumpy_chart, bumpy_samples, grid48, rng):
        target = RadialHarmonicField(np.array([np.sqrt(4 * np.pi)]))  # x/|x|
        loss = NormalTracking(target, 2.0)
        V = TrigPolyField.random(rng, 2)
        analytic = loss.shape_derivative(bumpy_samples, V)

        def functional(chart, grid):
            ss = geometry.sample(chart, grid)
            return loss.value(ss)

        fd = calculus.fd_shape_derivative(bumpy_chart, functional, V, 1e-4, grid48)
        assert abs(analytic - fd) < 1e-4 * max(1.0, abs(analytic))


class TestShrinkage:
    def test_clamped_region(self, bumpy_samples, rng):
        cfg = AdmmConfig(beta=100.0, lam=1.0)  # threshold far above any |q|
        state = random_state(bumpy_samples, rng, scale=0.01)
        out = shrinkage(bumpy_samples, state, None, cfg)
        assert np.abs(out.d1).max() == 0.0 and np.abs(out.d2).max() == 0.0

    def test_beta_zero_is_assignment(self, bumpy_samples, rng):
        cfg = AdmmConfig(beta=0.0, lam=1.0)
        state = random_state(bumpy_samples, rng)
        out = shrinkage(bumpy_samples, state, None, cfg)
        dn1, dn2 = frame_dn(bumpy_samples, None)
        assert np.abs(out.d1 - (dn1 + state.b1)).max() < 1e-14
        assert np.abs(out.d2 - (dn2 + state.b2)).max() < 1e-14

    def test_against_scalar_prox_oracle(self, bumpy_samples, rng):
        from scipy.optimize import brentq

        def prox_oracle(objective, hi, h=1e-5):
            # zero of the centered-difference slope, or the boundary t = 0
            def slope(t):
                return (objective(t + h) - objective(t - h)) / (2.0 * h)

            if slope(0.0) >= 0.0:
                return 0.0
            return brentq(slope, 0.0, hi, xtol=1e-14)

        cfg = AdmmConfig(beta=0.35, lam=1.4)
        state = random_state(bumpy_samples, rng)
        out = shrinkage(bumpy_samples, state, None, cfg)
        dn1, dn2 = frame_dn(bumpy_samples, None)
        q1, q2 = dn1 + state.b1, dn2 + state.b2
        qn = np.sqrt(np.einsum("ni,ni->n", q1, q1) + np.einsum("ni,ni->n", q2, q2))
        dn_out = np.sqrt(
            np.einsum("ni,ni->n", out.d1, out.d1) + np.einsum("ni,ni->n", out.d2, out.d2)
        )
        # the minimizer direction is q/|q|, so the magnitude solves a scalar prox
        idx = rng.choice(bumpy_samples.n_nodes, size=64, replace=False)
        for i in idx:
            oracle = prox_oracle(
                lambda t: cfg.beta * t + 0.5 * cfg.lam * (t - qn[i]) ** 2,
                qn[i] + 5 * cfg.beta / cfg.lam,
            )
            assert abs(dn_out[i] - oracle) < 1e-10

    def test_tangency(self, bumpy_samples, rng):
        cfg = AdmmConfig(beta=0.1, lam=1.0)
        out = shrinkage(bumpy_samples, random_state(bumpy_samples, rng), None, cfg)
        n = bumpy_samples.normal
        assert np.abs(np.einsum("ni,ni->n", out.d1, n)).max() < 1e-10


class TestMultiplierUpdate:
    def test_matching_d_keeps_b(self, bumpy_samples, rng):
        state = matching_state(bumpy_samples)
        state = dataclasses.replace(
            state, b1=0.2 * state.d2, b2=-0.1 * state.d1
        )
        out = multiplier_update(bumpy_samples, state, None)
        assert np.abs(out.b1 - state.b1).max() < 1e-14

    def test_zero_state_absorbs_frame_derivative(self, bumpy_samples):
        state = SplitState.zeros(bumpy_samples.n_nodes)
        out = multiplier_update(bumpy_samples, state, None)
        dn1, dn2 = frame_dn(bumpy_samples, None)
        assert np.abs(out.b1 - dn1).max() == 0.0
        assert np.abs(out.b2 - dn2).max() == 0.0

    def test_result_tangent(self, bumpy_samples, rng):
        out = multiplier_update(bumpy_samples, random_state(bumpy_samples, rng), None)
        n = bumpy_samples.normal
        assert np.abs(np.einsum("ni,ni->n", out.b1, n)).max() < 1e-10
        # definitional identity: the b increment is exactly the residual
        state = random_state(bumpy_samples, rng)
        out = multiplier_update(bumpy_samples, state, None)
        dn1, _ = frame_dn(bumpy_samples, None)
        assert np.abs((out.b1 - state.b1) - (dn1 - state.d1)).max() < 1e-14


class TestTransport:
    def test_identity(self, bumpy_samples, rng):
        state = random_state(bumpy_samples, rng)
        frame = (bumpy_samples.xi1, bumpy_samples.xi2)
        out, fr = transport_state(state, bumpy_samples.normal, bumpy_samples.normal, frame)
        assert np.abs(out.d1 - state.d1).max() < 1e-14
        assert np.abs(fr[0] - frame[0]).max() < 1e-14

    def test_isometry_and_orthonormality(self, bumpy_samples, unit_sphere_samples, rng):
        state = random_state(bumpy_samples, rng)
        frame = (bumpy_samples.xi1, bumpy_samples.xi2)
        new_n = unit_sphere_samples.normal  # different normal field, same layout
        out, fr = transport_state(state, bumpy_samples.normal, new_n, frame)
        for old, new in ((state.b1, out.b1), (state.d2, out.d2)):
            assert np.abs(
                np.linalg.norm(new, axis=-1) - np.linalg.norm(old, axis=-1)
            ).max() < 1e-12
        assert np.abs(np.einsum("ni,ni->n", out.d1, new_n)).max() < 1e-10
        assert np.abs(np.einsum("ni,ni->n", fr[0], fr[1])).max() < 1e-10
        assert np.abs(np.linalg.norm(fr[0], axis=-1) - 1).max() < 1e-10
        assert np.abs(np.einsum("ni,ni->n", fr[1], new_n)).max() < 1e-10

    def test_antipodal_raises(self, bumpy_samples, rng):
        state = random_state(bumpy_samples, rng)
        frame = (bumpy_samples.xi1, bumpy_samples.xi2)
        with pytest.raises(AntipodalPoints):
            transport_state(state, bumpy_samples.normal, -bumpy_samples.normal, frame)


class TestShapeGradientStep:
    def test_stationary_sphere_with_matching_state(self, grid32):
        # with d = (D_Gamma n) xi frozen, the TV term is a weighted area with
        # constant weight sqrt(2)/r, so the matching multiplier is -sqrt(2) beta / r
        cfg = AdmmConfig(beta=0.5, lam=1.0, shape_steps_per_sweep=3, opt_degree=4)
        chart = RadialChart.from_sphere(1.0, cfg.opt_degree)
        samples = geometry.sample(chart, grid32)
        frame = (samples.xi1, samples.xi2)
        state = matching_state(samples, frame)
        loss = AreaMultiplier(mu=-np.sqrt(2.0) * cfg.beta, target=4 * np.pi)
        new_chart, _ = shape_gradient_step(chart, grid32, samples, state, frame, loss, cfg)
        assert np.abs(new_chart.coeffs - chart.coeffs).max() < 1e-6

    def test_area_penalty_shrinks_oversized_sphere(self, grid32):
        cfg = AdmmConfig(beta=0.0, lam=1e-9, shape_steps_per_sweep=1, opt_degree=2)
        chart = RadialChart.from_sphere(1.2, cfg.opt_degree)
        samples = geometry.sample(chart, grid32)
        frame = (samples.xi1, samples.xi2)
        state = matching_state(samples, frame)  # make the penalty term exactly zero
        loss = AreaPenalty(target=4 * np.pi, weight=1.0)
        new_chart, new_samples = shape_gradient_step(
            chart, grid32, samples, state, frame, loss, cfg
        )
        assert new_chart.coeffs[0] < chart.coeffs[0]
        assert new_samples.integrate(1.0) < samples.integrate(1.0)

    def test_zero_step_size_keeps_chart(self, grid32, rng):
        cfg = AdmmConfig(
            beta=0.1, lam=1.0, shape_steps_per_sweep=2, step_size=0.0,
            line_search=False, opt_degree=3,
        )
        chart = RadialChart.from_terms(1.0, [(2, 0, 0.1)], degree=3)
        samples = geometry.sample(chart, grid32)
        frame = (samples.xi1, samples.xi2)
        state = random_state(samples, rng)
        new_chart, _ = shape_gradient_step(
            chart, grid32, samples, state, frame, ZeroLoss(), cfg
        )
        assert np.abs(new_chart.coeffs - chart.lift(3).coeffs).max() == 0.0

    def test_rejects_non_radial_chart(self, grid32):
        cfg = AdmmConfig()
        samples = geometry.sample(SphereChart(1.0), grid32)
        with pytest.raises(InvalidChart):
            shape_gradient_step(
                SphereChart(1.0), grid32, samples, SplitState.zeros(samples.n_nodes),
                (samples.xi1, samples.xi2), ZeroLoss(), cfg,
            )

    def test_line_search_failure_on_inconsistent_loss(self, grid32):
        class LyingLoss(ZeroLoss):
            def shape_derivative_batch(self, samples, fe, div):
                return np.full(fe.value.shape[0], 1e8)  # bogus huge gradient

        cfg = AdmmConfig(beta=0.0, lam=1.0, shape_steps_per_sweep=1, opt_degree=2,
                         max_halvings=12)
        chart = RadialChart.from_sphere(1.0, 2)
        samples = geometry.sample(chart, grid32)
        frame = (samples.xi1, samples.xi2)
        state = matching_state(samples, frame)
        with pytest.raises(LineSearchFailed):
            shape_gradient_step(chart, grid32, samples, state, frame, LyingLoss(), cfg)


class TestRun:
    def test_zero_sweeps(self, grid32):
        cfg = AdmmConfig(max_sweeps=0)
        chart = RadialChart.from_sphere(1.0, 2)
        final, trace = run(chart, grid32, ZeroLoss(), cfg)
        assert trace == []
        assert np.abs(final.coeffs[: 1] - chart.coeffs[:1]).max() == 0.0

    def test_stationary_start_settles(self, grid32):
        cfg = AdmmConfig(
            beta=0.05, lam=0.5, max_sweeps=10, shape_steps_per_sweep=2,
            opt_degree=4, tol_residual=1e-3, tol_objective=1e-4,
        )
        final, trace = run(SphereChart(1.0), grid32, AreaPenalty(4 * np.pi, 5.0), cfg)
        assert trace[-1]["sweep"] <= 3
        assert trace[-1]["residual"] < cfg.tol_residual
        rho = final.radius(grid32.nodes_theta, grid32.nodes_phi)
        assert np.abs(rho - 1.0).max() < 1e-2

    def test_beta_zero_reduces_to_penalized_descent(self, grid32):
        cfg = AdmmConfig(
            beta=0.0, lam=1.0, max_sweeps=4, shape_steps_per_sweep=1,
            opt_degree=4, tol_residual=1e-12, tol_objective=1e-12,
        )
        chart = RadialChart.from_terms(1.0, [(2, 0, 0.1)], degree=4)
        target = geometry.area(chart, grid32)
        final, trace = run(chart, grid32, AreaPenalty(target, 2.0), cfg)
        for row in trace[1:]:
            assert row["residual"] < 1e-8  # shrinkage with beta = 0 assigns exactly

    def test_denoising_descends(self, grid32):
        chart = RadialChart.from_terms(1.0, [(2, 0, 0.15), (3, 2, 0.15)])
        target = geometry.area(chart, grid32)
        cfg = AdmmConfig(
            beta=0.1, lam=1.0, max_sweeps=25, shape_steps_per_sweep=2,
            opt_degree=6, tol_residual=5e-4, tol_objective=2e-5,
        )
        final, trace = run(chart, grid32, AreaPenalty(target, 5.0), cfg)
        assert trace[-1]["tv"] < trace[0]["tv"]
        assert all(np.isfinite(list(r.values())).all() for r in trace)

    def test_non_finite_loss_detected(self, grid32):
        class NanLoss(ZeroLoss):
            def value(self, samples):
                return float("nan")

        cfg = AdmmConfig(max_sweeps=2, opt_degree=2)
        with pytest.raises(NonFinite):
            run(RadialChart.from_sphere(1.0, 2), grid32, NanLoss(), cfg)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            AdmmConfig(beta=-1.0)
        with pytest.raises(ValueError):
            AdmmConfig(lam=0.0)
        with pytest.raises(ValueError):
            AdmmConfig(tol_residual=0.0)
        with pytest.raises(ValueError):
            AdmmConfig(gradient_metric="hyperbolic")
