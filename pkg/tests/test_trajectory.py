import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from falva.trajectory import Trajectory, chebyshev_points


class TestFit:
    def test_reproduces_quadratic(self):
        th = np.linspace(0.0, 1.0, 9)
        tr = Trajectory.fit(th, th**2, 2)
        x = np.linspace(0.0, 1.0, 101)
        assert np.max(np.abs(tr(x)[0] - x**2)) <= 1e-13

    def test_constant(self):
        tr = Trajectory.fit(np.linspace(0, 1, 5), np.full(5, 3.5), 3)
        assert np.max(np.abs(tr(np.linspace(0, 1, 11)) - 3.5)) < 1e-14
        assert np.max(np.abs(tr.derivative(1)(np.linspace(0, 1, 11)))) < 1e-13

    def test_sine_at_degree_twelve(self):
        tr = Trajectory.interpolate(np.sin, (0.0, 1.0), 12)
        x = np.linspace(0.0, 1.0, 2001)
        assert np.max(np.abs(tr(x)[0] - np.sin(x))) <= 1e-9

    def test_interpolates_at_chebyshev_points(self):
        th = chebyshev_points(-1.0, 2.0, 8)
        vals = np.exp(th)
        tr = Trajectory.fit(th, vals, 7)
        np.testing.assert_allclose(tr(th)[0], vals, rtol=1e-14)

    def test_rank_deficiency(self):
        with pytest.raises(np.linalg.LinAlgError):
            Trajectory.fit([0.0, 0.5, 0.5, 1.0], [1.0, 2.0, 2.0, 3.0], 3)

    def test_vector_samples(self):
        th = np.linspace(0.0, 2.0, 6)
        tr = Trajectory.fit(th, np.column_stack([th, 1 - th**2]), 2)
        assert tr.state_dim == 2
        np.testing.assert_allclose(tr(1.5), [1.5, 1 - 2.25], atol=1e-14)


class TestDerivative:
    def test_square(self):
        tr = Trajectory.from_monomials([0.0, 0.0, 1.0], (0.0, 1.0))
        d = tr.derivative(1)
        x = np.linspace(0, 1, 7)
        np.testing.assert_allclose(d(x)[0], 2 * x, atol=1e-15)
        assert d.degree == tr.degree - 1

    def test_order_zero_is_identity(self):
        tr = Trajectory.from_monomials([1.0, 2.0, 3.0], (0.0, 1.0))
        assert tr.derivative(0) is tr

    def test_third_derivative_of_fifth_power(self):
        tr = Trajectory.from_monomials([0, 0, 0, 0, 0, 1.0], (0.0, 1.0))
        assert tr.derivative(3)(0.5)[0] == pytest.approx(15.0, abs=1e-12)

    def test_beyond_degree_is_zero(self):
        tr = Trajectory.from_monomials([1.0, -2.0, 0.5, 4.0], (-1.0, 3.0))
        zero = tr.derivative(4)
        assert np.all(zero.coeffs == 0.0)
        assert np.all(tr.derivative(9)(np.linspace(-1, 3, 5)) == 0.0)

    def test_negative_order(self):
        with pytest.raises(ValueError):
            Trajectory.constant([1.0], (0, 1)).derivative(-1)


class TestJet:
    def test_square(self):
        tr = Trajectory.from_monomials([0.0, 0.0, 1.0], (0.0, 1.0))
        jet = tr.jet_at(0.5, 2)
        assert float(jet.theta) == 0.5
        np.testing.assert_allclose(jet.q[0], [0.25, 1.0, 2.0], atol=1e-14)

    def test_trailing_zero_columns(self):
        tr = Trajectory.from_monomials([0.0, 0.0, 1.0], (0.0, 1.0))
        jet = tr.jet_at(0.3, 5)
        assert np.all(jet.q[0, 3:] == 0.0)

    def test_columns_match_derivatives(self):
        rng = np.random.default_rng(4)
        tr = Trajectory(rng.normal(size=(2, 12)), (0.0, 2.0))
        x = np.linspace(0.0, 2.0, 17)
        jet = tr.jet_at(x, 4)
        for d in range(5):
            np.testing.assert_allclose(jet.q[:, d], tr.derivative(d)(x), rtol=0, atol=1e-13 * max(1, np.abs(jet.q[:, d]).max()))

    def test_outside_interval(self):
        tr = Trajectory.constant([1.0], (0.0, 1.0))
        with pytest.raises(ValueError, match="outside"):
            tr.jet_at(1.01, 1)
        with pytest.raises(ValueError, match="outside"):
            tr(-0.5)


coeff_arrays = st.lists(st.floats(-10, 10), min_size=1, max_size=10).map(np.array)


class TestLinearity:
    @settings(max_examples=100)
    @given(coeff_arrays, coeff_arrays, st.floats(-5, 5), st.floats(0.0, 1.0))
    def test_jet_is_linear(self, c1, c2, scale, theta):
        t1, t2 = Trajectory(c1, (0.0, 1.0)), Trajectory(c2, (0.0, 1.0))
        j1, j2 = scale * t1.jet_at(theta, 3).q, t2.jet_at(theta, 3).q
        combo = (scale * t1 + t2).jet_at(theta, 3).q
        # relative to the size of each derivative column
        size = np.maximum(1.0, np.maximum(np.abs(j1), np.abs(j2)).max(axis=0))
        assert np.all(np.abs(combo - (j1 + j2)).max(axis=0) <= 1e-12 * size)

    @settings(max_examples=50)
    @given(coeff_arrays)
    def test_degree_drops_by_one(self, c):
        tr = Trajectory(c, (0.0, 1.0))
        if tr.degree > 0:
            assert tr.derivative(1).degree == tr.degree - 1
        assert np.all(tr.derivative(tr.degree + 1).coeffs == 0.0)

    def test_mismatched_intervals(self):
        with pytest.raises(ValueError):
            Trajectory.constant([1.0], (0, 1)) + Trajectory.constant([1.0], (0, 2))

    def test_immutable(self):
        tr = Trajectory.constant([1.0], (0, 1))
        with pytest.raises(AttributeError):
            tr.interval = (0, 2)
        with pytest.raises(ValueError):
            tr.coeffs[0, 0] = 2.0


class TestHelpers:
    def test_stack_and_component(self):
        a = Trajectory.from_monomials([1.0, 2.0], (0, 1))
        b = Trajectory.from_monomials([0.0, 0.0, 3.0], (0, 1))
        both = Trajectory.stack([a, b])
        assert both.state_dim == 2
        np.testing.assert_allclose(both.component(1)(0.5), b(0.5))

    def test_with_degree_preserves_values(self):
        tr = Trajectory.from_monomials([1.0, -1.0, 2.0], (0, 1))
        x = np.linspace(0, 1, 9)
        np.testing.assert_allclose(tr.with_degree(10)(x), tr(x), atol=1e-15)

    def test_chebyshev_points(self):
        pts = chebyshev_points(0.0, 2.0, 5)
        assert pts[0] == pytest.approx(0.0) and pts[-1] == pytest.approx(2.0)
        assert np.all(np.diff(pts) > 0)
