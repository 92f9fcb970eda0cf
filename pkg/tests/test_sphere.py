import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose

from tvnormal import sphere
from tvnormal.errors import AntipodalPoints
from tvnormal.sphere import (
    TangentVector,
    UnitNormal,
    exp_map,
    geodesic,
    geodesic_distance,
    log_map,
    parallel_transport,
    parallel_transport_trig,
    random_unit_vectors,
    tangent_project,
)

E1, E2, E3 = np.eye(3)


def unit(v):
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


finite_vec = st.tuples(
    *([st.floats(-1.0, 1.0, allow_nan=False)] * 3)
).map(np.array).filter(lambda v: np.linalg.norm(v) > 1e-2)


class TestDistance:
    def test_coincident(self):
        n = unit([0.3, -0.5, 1.0])
        assert geodesic_distance(n, n) == 0.0

    def test_orthogonal(self):
        assert_allclose(geodesic_distance(E1, E2), np.pi / 2, atol=1e-15)

    def test_antipodal(self):
        n = unit([1.0, 2.0, -0.5])
        assert_allclose(geodesic_distance(n, -n), np.pi, atol=1e-15)

    def test_symmetric_and_bounded(self, rng):
        a = random_unit_vectors(rng, 300)
        b = random_unit_vectors(rng, 300)
        d1 = geodesic_distance(a, b)
        d2 = geodesic_distance(b, a)
        assert_allclose(d1, d2, atol=1e-15)
        assert np.all(d1 >= 0) and np.all(d1 <= np.pi)

    def test_small_angle_accuracy(self):
        # the arccos form alone would lose digits here
        n = E3
        xi = 1e-8 * E1
        other = exp_map(n, xi)
        assert_allclose(geodesic_distance(n, other), 1e-8, rtol=1e-9)


class TestGeodesicExp:
    def test_zero_velocity(self):
        n = unit([1.0, 1.0, 1.0])
        for t in (0.0, 0.5, 3.0):
            assert_allclose(geodesic(n, np.zeros(3), t), n, atol=0)

    def test_quarter_circle(self):
        assert_allclose(geodesic(E3, (np.pi / 2) * E1, 1.0), E1, atol=1e-15)
        assert_allclose(exp_map(E3, (np.pi / 2) * E1), E1, atol=1e-15)

    def test_half_circle(self):
        assert_allclose(geodesic(E3, E1, np.pi), -E3, atol=1e-15)

    def test_exp_log_roundtrip_bulk(self, rng):
        n = random_unit_vectors(rng, 2000)
        raw = rng.normal(size=(2000, 3))
        xi = tangent_project(n, raw)
        norms = np.linalg.norm(xi, axis=-1, keepdims=True)
        xi = xi / norms * rng.uniform(1e-6, np.pi - 0.01, size=(2000, 1))
        back = log_map(n, exp_map(n, xi))
        assert np.abs(back - xi).max() < 1e-10

    @settings(deadline=None, max_examples=60)
    @given(finite_vec, finite_vec)
    def test_exp_log_roundtrip_property(self, a, b):
        n = unit(a)
        xi = tangent_project(n, b)
        norm = np.linalg.norm(xi)
        if norm < 1e-12:
            return
        xi = xi / norm * min(norm, np.pi - 0.02)
        back = log_map(n, exp_map(n, xi))
        assert np.abs(back - xi).max() < 1e-10


class TestLog:
    def test_coincident_gives_zero(self):
        n = unit([0.2, 0.3, 0.9])
        assert_allclose(log_map(n, n), np.zeros(3), atol=1e-15)

    def test_quarter_circle_inverse(self):
        assert_allclose(log_map(E3, E1), (np.pi / 2) * E1, atol=1e-15)

    def test_eighth_circle(self):
        # target at 45 degrees: distance arccos(1/sqrt(2)) = pi/4, direction e1
        target = unit(E1 + E3)
        assert_allclose(log_map(E3, target), (np.pi / 4) * E1, atol=1e-15)

    def test_norm_equals_distance(self, rng):
        a = random_unit_vectors(rng, 500)
        b = random_unit_vectors(rng, 500)
        keep = 1.0 + np.einsum("ni,ni->n", a, b) > 1e-6
        a, b = a[keep], b[keep]
        assert np.abs(
            np.linalg.norm(log_map(a, b), axis=-1) - geodesic_distance(a, b)
        ).max() < 1e-12

    def test_antipodal_raises(self):
        n = unit([1.0, -1.0, 0.5])
        with pytest.raises(AntipodalPoints):
            log_map(n, -n)
        almost = -n + 1e-12 * np.array([0.0, 0.0, 1.0])
        with pytest.raises(AntipodalPoints):
            log_map(n, unit(almost))


class TestTransport:
    def test_identity(self):
        n = unit([0.1, 0.7, 0.7])
        xi = tangent_project(n, np.array([1.0, -2.0, 0.5]))
        assert_allclose(parallel_transport(n, n, xi), xi, atol=1e-14)

    def test_orthogonal_direction_unchanged(self):
        # e2 is orthogonal to the geodesic plane span(e3, e1): both formulas fix it
        xi = 0.8 * E2
        assert_allclose(parallel_transport(E3, E1, xi), xi, atol=1e-14)
        assert_allclose(parallel_transport_trig(E3, E1, xi), xi, atol=1e-14)

    def test_formulas_agree(self, rng):
        n = random_unit_vectors(rng, 800)
        m = random_unit_vectors(rng, 800)
        d = geodesic_distance(n, m)
        keep = (d > 0.01) & (d < np.pi - 0.01)
        n, m = n[keep], m[keep]
        xi = tangent_project(n, rng.normal(size=(n.shape[0], 3)))
        p1 = parallel_transport(n, m, xi)
        p2 = parallel_transport_trig(n, m, xi)
        assert np.abs(p1 - p2).max() < 1e-10

    def test_isometry_and_tangency(self, rng):
        n = random_unit_vectors(rng, 500)
        m = random_unit_vectors(rng, 500)
        keep = 1.0 + np.einsum("ni,ni->n", n, m) > 1e-6
        n, m = n[keep], m[keep]
        xi = tangent_project(n, rng.normal(size=(n.shape[0], 3)))
        out = parallel_transport(n, m, xi)
        assert np.abs(
            np.linalg.norm(out, axis=-1) - np.linalg.norm(xi, axis=-1)
        ).max() < 1e-12
        assert np.abs(np.einsum("ni,ni->n", out, m)).max() < 1e-12

    def test_preserves_inner_products(self, rng):
        n = random_unit_vectors(rng, 400)
        m = random_unit_vectors(rng, 400)
        keep = 1.0 + np.einsum("ni,ni->n", n, m) > 1e-6
        n, m = n[keep], m[keep]
        xi = tangent_project(n, rng.normal(size=(n.shape[0], 3)))
        eta = tangent_project(n, rng.normal(size=(n.shape[0], 3)))
        lhs = np.einsum(
            "ni,ni->n", parallel_transport(n, m, xi), parallel_transport(n, m, eta)
        )
        assert np.abs(lhs - np.einsum("ni,ni->n", xi, eta)).max() < 1e-12

    def test_velocity_antisymmetry(self, rng):
        n = random_unit_vectors(rng, 500)
        m = random_unit_vectors(rng, 500)
        keep = 1.0 + np.einsum("ni,ni->n", n, m) > 1e-6
        n, m = n[keep], m[keep]
        moved = parallel_transport(n, m, log_map(n, m))
        assert np.abs(moved + log_map(m, n)).max() < 1e-10

    def test_near_coincident_reprojects(self):
        n = E3
        m = unit(E3 + 1e-10 * E1)
        xi = np.array([0.3, -0.2, 0.0])
        out = parallel_transport(n, m, xi)
        assert np.abs(np.dot(out, m)) < 1e-15
        assert_allclose(out, tangent_project(m, xi), atol=1e-14)


class TestWrappers:
    def test_unit_normal_renormalizes(self):
        p = UnitNormal([3.0, 0.0, 4.0])
        assert_allclose(np.linalg.norm(p.v), 1.0, atol=1e-15)
        with pytest.raises(ValueError):
            UnitNormal([0.0, 0.0, 0.0])

    def test_tangent_vector_validates(self):
        base = UnitNormal(E3)
        with pytest.raises(ValueError):
            TangentVector(base, E3)
        tv = TangentVector.project(base, np.array([1.0, 2.0, 5.0]))
        assert abs(np.dot(tv.w, base.v)) < 1e-15

    def test_wrapper_roundtrip(self):
        base = UnitNormal([0.0, 0.6, 0.8])
        tv = TangentVector.project(base, np.array([0.9, -0.1, 0.4]))
        target = tv.exp()
        back = sphere.log_between(base, target)
        assert_allclose(back.w, tv.w, atol=1e-12)
        moved = tv.transport_to(target)
        assert abs(moved.norm - tv.norm) < 1e-14
