import numpy as np
import pytest

from falva.control import ControlProblem
from falva.core import FalvaProblem
from falva.problemfile import (
    ProblemFileError,
    jet_columns,
    load_problem,
    parse_problem_text,
    read_trajectory_csv,
    write_table_csv,
    write_trajectory_csv,
)
from falva.solvers import FIXED_ENDS, INITIAL_JET
from falva.symexpr import Jet
from falva.trajectory import Trajectory

VARIATIONAL = """
[problem]
alpha = 0.5
a = 0
t = 1
m = 2
lagrangian = 0.5*q0d2^2
initial = 0; 1     # q(a); q'(a)

[boundary]
values = 1; 0
"""

CONTROL = """
[problem]
kind = control
alpha = 0.75
a = 0
t = 2
lagrangian = 0.5*u0^2 + q1^2
velocity = q1; u0
initial = 1, 0

[boundary]
values = 0, 0
theta_f = 1.5

[solver]
degree = 48
"""


class TestParse:
    def test_variational(self):
        pf = parse_problem_text(VARIATIONAL)
        assert pf.kind == "variational" and isinstance(pf.problem, FalvaProblem)
        assert pf.problem.m == 2
        np.testing.assert_array_equal(pf.problem.initial, [[0.0], [1.0]])
        np.testing.assert_array_equal(pf.config.boundary_values, [[1.0], [0.0]])
        assert pf.config.boundary_mode == FIXED_ENDS
        assert pf.method == "indirect" and pf.grid == 201

    def test_control(self):
        pf = parse_problem_text(CONTROL)
        assert isinstance(pf.problem, ControlProblem)
        assert pf.problem.state_dim == 2
        np.testing.assert_array_equal(pf.problem.q_a, [1.0, 0.0])
        np.testing.assert_array_equal(pf.target, [0.0, 0.0])
        assert pf.theta_f() == 1.5

    def test_echo_includes_defaults(self):
        echo = parse_problem_text(VARIATIONAL).echo()
        assert echo["lagrangian"] == "0.5*q0d2^2"
        assert echo["initial"] == [[0.0], [1.0]]
        solver = echo["solver"]
        for key in ("degree", "quad_points", "newton_tol", "max_iters", "epsilon_rel", "boundary_mode"):
            assert solver[key] is not None
        assert solver["theta_f"] == pytest.approx(0.999)

    def test_control_echo(self):
        echo = parse_problem_text(CONTROL).echo()
        assert echo["velocity"] == ["q1", "u0"]
        assert echo["control_dim"] == 1 and echo["solver"]["degree"] == 48

    def test_load_missing_file(self, tmp_path):
        with pytest.raises(ProblemFileError, match="cannot read"):
            load_problem(tmp_path / "nope.ini")

    @pytest.mark.parametrize(
        "edit, message",
        [
            (("[boundary]", "[limits]"), "unknown section"),
            (("m = 2", "m = 2\norder = 3"), "unknown keys"),
            (("alpha = 0.5", "alpha = half"), "cannot read"),
            (("alpha = 0.5\n", ""), "missing problem.alpha"),
            (("initial = 0; 1     # q(a); q'(a)", "initial = 0"), "initial"),
            (("values = 1; 0", "values = 1, 2; 0"), "comma-separated"),
            (("0.5*q0d2^2", "0.5*q0d3^2"), "derivative order"),
            (("[boundary]", "[boundary]\nmode = shooting"), "boundary.mode"),
            (("alpha = 0.5", "alpha = 1.5"), "alpha"),
        ],
    )
    def test_schema_errors(self, edit, message):
        text = VARIATIONAL.replace(*edit)
        assert text != VARIATIONAL
        with pytest.raises(Exception, match=message):
            parse_problem_text(text)

    def test_control_needs_velocity(self):
        with pytest.raises(ProblemFileError, match="velocity"):
            parse_problem_text(CONTROL.replace("velocity = q1; u0\n", ""))

    def test_control_state_dim_mismatch(self):
        with pytest.raises(ProblemFileError, match="state_dim"):
            parse_problem_text(CONTROL.replace("kind = control", "kind = control\nstate_dim = 3"))

    def test_initial_jet_mode(self):
        pf = parse_problem_text(VARIATIONAL.replace("[boundary]", "[boundary]\nmode = initial_jet"))
        assert pf.config.boundary_mode == INITIAL_JET

    def test_solver_method(self):
        pf = parse_problem_text(VARIATIONAL + "[solver]\nmethod = cross\ngrid = 11\n")
        assert pf.method == "cross" and pf.grid == 11 and pf.config.report_points == 11
        with pytest.raises(ProblemFileError, match="solver.method"):
            parse_problem_text(VARIATIONAL + "[solver]\nmethod = shooting\n")


class TestTrajectoryCsv:
    def pb(self, m=1, n=1):
        return FalvaProblem.from_formula("0.5*q0d1^2", 0.5, 0.0, 1.0, m, state_dim=n)

    def test_columns(self):
        assert jet_columns(2, 1) == ["theta", "q0", "q1", "q0d1", "q1d1"]

    def test_full_jet_round_trip(self, tmp_path):
        tr = Trajectory.from_monomials([[0.1, 1.0, -0.5, 0.2]], (0.0, 0.999))
        x = np.linspace(0.0, 0.999, 11)
        write_trajectory_csv(tmp_path / "tr.csv", tr, x, 2)
        jet = read_trajectory_csv(tmp_path / "tr.csv", self.pb())
        assert isinstance(jet, Jet)
        np.testing.assert_array_equal(jet.theta, x)
        np.testing.assert_array_equal(jet.q, tr.jet_at(x, 2).q)

    def test_values_only_are_fitted(self, tmp_path):
        x = np.linspace(0.0, 1.0, 30)
        write_table_csv(tmp_path / "tr.csv", ["theta", "q0"], np.column_stack([x, np.sin(x)]))
        tr = read_trajectory_csv(tmp_path / "tr.csv", self.pb())
        assert isinstance(tr, Trajectory)
        assert np.max(np.abs(tr(x)[0] - np.sin(x))) <= 1e-12

    @pytest.mark.parametrize(
        "content, message",
        [
            ("theta,q0\n", "at least one data row"),
            ("theta,q1\n0,1\n0.5,2\n", "missing columns"),
            ("theta,q0,q1\n0,1,2\n", "do not match"),
            ("theta,q0\n0,abc\n", "non-numeric"),
            ("theta,q0\n0,1\n0.5\n", "ragged"),
            ("theta,q0\n0,nan\n0.5,1\n", "non-finite"),
        ],
    )
    def test_malformed(self, tmp_path, content, message):
        path = tmp_path / "bad.csv"
        path.write_text(content)
        with pytest.raises(ProblemFileError, match=message):
            read_trajectory_csv(path, self.pb())
