import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from falva import symexpr as sx
from falva.control import (
    ControlEliminationError,
    ControlProblem,
    Extremal,
    embed_variational,
    embedding_gaps,
    energy_rate_gap,
    extremal_table,
    hamiltonian,
    hamiltonian_rate,
    hamiltonian_values,
    induced_tuple,
    pontryagin_gaps,
    pontryagin_residuals,
    solve_shooting,
)
from falva.core import FalvaProblem, SingularPointError, action, el_residual
from falva.solvers import ConvergenceError, SolveConfig
from falva.specquad import gamma, jacobi_rule
from falva.symexpr import Jet
from falva.trajectory import Trajectory

from helpers import random_lagrangian, random_trajectory


def lq(alpha, q_a=0.0):
    return ControlProblem.from_formulas("0.5*u0^2", ["u0"], alpha, 0.0, 1.0, [q_a])


def lq_extremal(alpha, pbar, theta_f, degree):
    # u = -pbar (1-theta)^(1-alpha), q' = u, p = pbar
    interval = (0.0, theta_f)
    q = Trajectory.interpolate(lambda th: -pbar * (1 - (1 - th) ** (2 - alpha)) / (2 - alpha), interval, degree)
    u = Trajectory.interpolate(lambda th: -pbar * (1 - th) ** (1 - alpha), interval, degree)
    return Extremal(q, u, Trajectory.constant([pbar], interval))


class TestControlProblem:
    def test_rejects_derivative_slots(self):
        with pytest.raises(Exception, match="q0d1|derivative"):
            ControlProblem.from_formulas("q0d1^2", ["u0"], 0.5, 0.0, 1.0, [0.0])

    def test_rejects_costate(self):
        with pytest.raises(ValueError, match="costate"):
            ControlProblem(0.5, 0.0, 1.0, 1, 1, sx.parse("p0*u0"), (sx.parse("u0"),), [0.0])

    @pytest.mark.parametrize("alpha, a, t", [(0.0, 0.0, 1.0), (1.5, 0.0, 1.0), (0.5, 1.0, 1.0)])
    def test_parameter_ranges(self, alpha, a, t):
        with pytest.raises(ValueError):
            ControlProblem.from_formulas("0.5*u0^2", ["u0"], alpha, a, t, [0.0])

    def test_velocity_count(self):
        with pytest.raises(ValueError, match="velocity"):
            ControlProblem(0.5, 0.0, 1.0, 2, 1, sx.parse("u0^2"), (sx.parse("u0"),), [0.0, 0.0])

    def test_extremal_needs_shared_interval(self):
        with pytest.raises(ValueError, match="interval"):
            Extremal(Trajectory.constant([0.0], (0, 1)), Trajectory.constant([0.0], (0, 1)),
                     Trajectory.constant([0.0], (0, 0.5)))


class TestHamiltonian:
    def test_classical_form(self):
        assert sx.to_string(hamiltonian(lq(1.0))) == "0.5*u0^2+p0*u0"

    def test_weighted_lq(self):
        cp = lq(0.5)
        th, u, p = 0.36, np.array([1.3]), np.array([-0.4])
        vals = hamiltonian_values(cp, th, np.array([0.2]), u, p)
        assert vals["H"] == pytest.approx(0.5 * 1.3**2 / 0.8 - 0.4 * 1.3, rel=1e-14)
        # d1H = 0.5 u^2 (1-alpha) (t-theta)^(alpha-2)
        assert vals["dH_theta"] == pytest.approx(0.5 * 1.3**2 * 0.5 * 0.64**-1.5, rel=1e-14)

    def test_costate_partial_is_velocity(self):
        cp = ControlProblem.from_formulas("q0^2*u0^2+cos(theta*u1)", ["sin(q1)*u0+theta", "q0*q1-u1^3"],
                                          0.3, 0.0, 2.0, [0.0, 0.0], control_dim=2)
        rng = np.random.default_rng(3)
        th = rng.uniform(0, 1.9, 50)
        q, u, p = rng.uniform(-2, 2, (2, 50)), rng.uniform(-2, 2, (2, 50)), rng.uniform(-2, 2, (2, 50))
        got = hamiltonian_values(cp, th, q, u, p)["dH_p"]
        phi = np.array([sx.evaluate(v, Jet(th, q[:, None, :], u, p)) for v in cp.velocity])
        assert np.max(np.abs(got - phi)) <= 1e-12

    def test_singular_weight(self):
        with pytest.raises(SingularPointError):
            hamiltonian_values(lq(0.5), 1.0, [0.0], [0.0], [0.0])


class TestPontryagin:
    @pytest.mark.parametrize("alpha", [0.25, 0.5, 0.75])
    def test_lq_closed_form(self, alpha):
        pbar, th = -0.7, np.linspace(0.01, 0.99, 60)
        u = -pbar * (1 - th) ** (1 - alpha)
        q = -pbar * (1 - (1 - th) ** (2 - alpha)) / (2 - alpha)
        gaps = pontryagin_gaps(lq(alpha), th, q[None], u[None], np.full((1, th.size), pbar), u[None],
                               np.zeros((1, th.size)))
        assert max(np.max(np.abs(g)) for g in gaps.values()) <= 1e-9

    def test_classical_lq(self):
        ex = lq_extremal(1.0, -1.0, 1.0, 4)
        gaps = pontryagin_residuals(lq(1.0), ex, np.linspace(0.05, 0.95, 19))
        assert max(np.max(np.abs(g)) for g in gaps.values()) <= 1e-10

    def test_random_tuple_is_rejected(self):
        rng = np.random.default_rng(7)
        cp = lq(0.5)
        for _ in range(20):
            q, u, p, qd, pd = rng.uniform(-1, 1, 5)
            gaps = pontryagin_gaps(cp, rng.uniform(0.0, 0.9), [q], [u], [p], [qd], [pd])
            assert max(float(np.max(np.abs(g))) for g in gaps.values()) > 0.01


class TestEnergyRate:
    def test_lq_energy_not_conserved(self):
        cp, ex = lq(0.5), lq_extremal(0.5, -1.0, 0.999, 512)
        th = np.random.default_rng(1).uniform(0.01, 0.99, 40)
        assert np.max(energy_rate_gap(cp, ex, th)) <= 1e-8
        assert np.min(np.abs(hamiltonian_rate(cp, ex, th)[1])) > 1e-6

    def test_classical_conservation(self):
        cp = ControlProblem.from_formulas("0.5*u0^2+0.5*q0^2", ["u0"], 1.0, 0.0, 1.0, [0.0])
        ex = solve_shooting(cp, [1.0], SolveConfig(degree=40))
        total, explicit = hamiltonian_rate(cp, ex, np.linspace(0.02, 0.98, 49))
        assert np.all(explicit == 0.0)
        assert np.max(np.abs(total)) <= 1e-10

    def test_non_extremal_gap(self):
        cp = ControlProblem.from_formulas("0.5*u0^2+q0*u0", ["u0+q0"], 0.5, 0.0, 1.0, [0.0])
        interval = (0.0, 0.9)
        ex = Extremal(Trajectory.from_monomials([0.0, 1.0, 2.0], interval),
                      Trajectory.from_monomials([1.0, -3.0], interval),
                      Trajectory.from_monomials([0.5, 0.5, 1.0], interval))
        assert np.max(energy_rate_gap(cp, ex, np.linspace(0.1, 0.8, 8))) > 0.01

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 2**31), st.floats(0.2, 1.0))
    def test_gap_bound(self, seed, alpha):
        # total - explicit = dH/dq . dyn + stat . u' + dH/dp . adj
        rng = np.random.default_rng(seed)
        cp = ControlProblem.from_formulas("0.5*u0^2+q0^2*u0+theta*q1", ["u0-q1", "q0*u0"], alpha, 0.0, 1.0,
                                          [0.0, 0.0])
        interval = (0.0, 0.95)
        ex = Extremal(random_trajectory(rng, 2, interval, 6)[0], random_trajectory(rng, 1, interval, 6)[0],
                      random_trajectory(rng, 2, interval, 6)[0])
        th = rng.uniform(0.0, 0.95, 16)
        parts = hamiltonian_values(cp, th, ex.q(th), ex.u(th), ex.p(th))
        gaps = pontryagin_residuals(cp, ex, th)
        eps = np.max(np.abs(np.vstack(list(gaps.values()))), axis=0)
        C = (np.sum(np.abs(parts["dH_q"]), axis=0) + np.sum(np.abs(ex.u.derivative(1)(th)), axis=0)
             + np.sum(np.abs(parts["dH_p"]), axis=0))
        assert np.all(energy_rate_gap(cp, ex, th) <= C * eps * (1 + 1e-12) + 1e-12)


class TestEmbedding:
    def test_first_order(self):
        pb = FalvaProblem.from_formula("0.5*q0d1^2+theta*q0", 0.5, 0.0, 1.0, 1, initial=[0.0])
        cp = embed_variational(pb)
        assert sx.to_string(cp.lagrangian) == "0.5*u0^2+theta*q0"
        assert [sx.to_string(v) for v in cp.velocity] == ["u0"]
        assert (cp.state_dim, cp.control_dim, cp.alpha) == (1, 1, 0.5)

    def test_second_order_chain(self):
        pb = FalvaProblem.from_formula("0.5*q0d2^2+q0*q0d1", 0.5, 0.0, 1.0, 2, initial=[[0.0], [1.0]])
        cp = embed_variational(pb)
        assert sx.to_string(cp.lagrangian) == "0.5*u0^2+q0*q1"
        assert [sx.to_string(v) for v in cp.velocity] == ["q1", "u0"]
        np.testing.assert_array_equal(cp.q_a, [0.0, 1.0])

    def test_slot_layout_two_components(self):
        pb = FalvaProblem.from_formula("q0d2*q1d2+q1d1", 0.5, 0.0, 1.0, 2, state_dim=2)
        cp = embed_variational(pb)
        # slot d*n + s holds q_s^(d)
        assert sx.to_string(cp.lagrangian) == "u0*u1+q3"
        assert [sx.to_string(v) for v in cp.velocity] == ["q2", "q3", "u0", "u1"]

    @pytest.mark.parametrize("m, n", [(1, 1), (2, 1), (1, 2), (3, 1)])
    def test_round_trip_gaps(self, m, n):
        rng = np.random.default_rng(10 * m + n)
        pb = FalvaProblem.from_formula(random_lagrangian(rng, m, n), 0.6, 0.0, 1.0, m, state_dim=n)
        tr, _ = random_trajectory(rng, n, (0.0, 1.0), 3 * m + 4)
        th = np.linspace(0.05, 0.95, 13)
        gaps = embedding_gaps(pb, tr, th)
        w = (1.0 - th) ** (0.6 - 1.0)
        el = el_residual(pb, tr, th)
        scale = max(1.0, float(np.max(np.abs(w * el))))
        assert np.max(np.abs(gaps["adjoint_gap"][:n] - w * el)) <= 1e-10 * scale
        assert np.max(np.abs(gaps["adjoint_gap"][n:]), initial=0.0) <= 1e-10 * scale
        assert np.max(np.abs(gaps["stationarity_gap"])) <= 1e-10 * scale
        assert np.max(np.abs(gaps["dynamics_gap"])) <= 1e-14

    def test_free_particle_solution_is_extremal(self):
        # q' = (1-theta)^(1/2) is stationary for L = q'^2 / 2 at alpha = 1/2
        pb = FalvaProblem.from_formula("0.5*q0d1^2", 0.5, 0.0, 1.0, 1, initial=[0.0])
        tr = Trajectory.interpolate(lambda th: (1 - (1 - th) ** 1.5) / 1.5, (0.0, 0.999), 512)
        gaps = embedding_gaps(pb, tr, np.linspace(0.01, 0.99, 99))
        assert max(np.max(np.abs(g)) for g in gaps.values()) <= 1e-6

    @pytest.mark.parametrize("m", [1, 2])
    def test_action_preserved(self, m):
        rng = np.random.default_rng(m)
        pb = FalvaProblem.from_formula(random_lagrangian(rng, m, 2), 0.4, 0.0, 1.0, m, state_dim=2)
        tr, _ = random_trajectory(rng, 2, (0.0, 1.0), 5)
        rule = jacobi_rule(pb.alpha, pb.a, pb.t, 64)
        it = induced_tuple(pb, tr, rule.nodes)
        cp = it["cp"]
        values = sx.evaluate(cp.lagrangian, Jet(rule.nodes, it["q"][:, None, :], it["u"]))
        embedded = float(np.dot(rule.weights, values) / gamma(pb.alpha))
        assert embedded == pytest.approx(action(pb, tr), abs=1e-10)

    def test_rejects_observer_time(self):
        pb = FalvaProblem.from_formula("0.5*q0d1^2", 0.5, 0.0, 1.0, 1)
        with pytest.raises(SingularPointError):
            induced_tuple(pb, Trajectory.constant([0.0], (0.0, 1.0)), 1.0)


class TestShooting:
    def test_lq_fractional(self):
        alpha, pbar, tf = 0.5, -1.0, 0.999
        q_f = -pbar * (1 - (1 - tf) ** 1.5) / 1.5
        cp = lq(alpha)
        # u has a square-root layer at t; the interpolant needs a high degree to resolve it
        ex = solve_shooting(cp, [q_f], SolveConfig(degree=256))
        assert ex.info["p_a"][0] == pytest.approx(pbar, abs=1e-6)
        assert ex.info["theta_f"] == pytest.approx(tf)
        th = np.linspace(0.01, 0.99, 50)
        gaps = pontryagin_residuals(cp, ex, th)
        assert max(np.max(np.abs(g)) for g in gaps.values()) <= 1e-6
        assert np.max(energy_rate_gap(cp, ex, th)) <= 1e-6

    def test_lq_classical(self):
        ex = solve_shooting(lq(1.0), [1.0], SolveConfig(degree=8))
        x = np.linspace(0, 1, 41)
        assert ex.interval == (0.0, 1.0)
        assert np.max(np.abs(ex.q(x)[0] - x)) <= 1e-8
        assert np.max(np.abs(ex.u(x)[0] - 1.0)) <= 1e-8
        assert np.max(np.abs(ex.p(x)[0] + 1.0)) <= 1e-8

    def test_two_dimensional_linear_system(self):
        # double integrator at alpha = 1: u linear in theta, q0 cubic
        cp = ControlProblem.from_formulas("0.5*u0^2", ["q1", "u0"], 1.0, 0.0, 1.0, [0.0, 0.0])
        ex = solve_shooting(cp, [1.0, 0.0], SolveConfig(degree=12))
        x = np.linspace(0, 1, 21)
        np.testing.assert_allclose(ex.q(x)[0], 3 * x**2 - 2 * x**3, atol=1e-8)
        np.testing.assert_allclose(ex.u(x)[0], 6 - 12 * x, atol=1e-7)

    def test_starts_at_initial_state(self):
        ex = solve_shooting(lq(0.75, q_a=0.3), [1.0], SolveConfig(degree=32))
        assert ex.q(0.0)[0] == pytest.approx(0.3, abs=1e-12)
        assert ex.q(ex.interval[1])[0] == pytest.approx(1.0, abs=1e-9)

    def test_singular_control_hessian(self):
        cp = ControlProblem.from_formulas("q0", ["u0"], 0.5, 0.0, 1.0, [0.0])
        with pytest.raises(ControlEliminationError):
            solve_shooting(cp, [1.0])

    def test_iteration_budget(self):
        with pytest.raises(ConvergenceError):
            solve_shooting(lq(0.5), [1.0], SolveConfig(max_iters=1))

    def test_theta_f_past_observer_time(self):
        with pytest.raises(SingularPointError):
            solve_shooting(lq(0.5), [1.0], SolveConfig(theta_f=1.0))


class TestExtremalTable:
    def test_columns(self):
        cp = lq(0.5)
        ex = lq_extremal(0.5, -1.0, 0.999, 128)
        th = np.linspace(0.0, 0.99, 12)
        header, table = extremal_table(cp, ex, th)
        assert header == ["theta", "q0", "u0", "p0", "H", "dH_theta"]
        assert table.shape == (12, 6)
        # H = u^2/2 w + p u = -(1-theta)^(1-alpha) / 2 along the extremal
        np.testing.assert_allclose(table[:, 4], -0.5 * (1 - th) ** 0.5, atol=1e-9)
        np.testing.assert_allclose(table[:, 5], hamiltonian_rate(cp, ex, th)[1], rtol=1e-14)
