"""Problem files (INI sections) and trajectory CSV files.

A variational file::

    [problem]
    kind = variational
    alpha = 0.5
    a = 0
    t = 1
    m = 1
    lagrangian = 0.5*q0d1^2
    initial = 0            # rows q^(i)(a) separated by ';', components by ','

    [boundary]
    mode = initial_jet     # or fixed_ends
    values = 1

    [solver]
    degree = 384

A control file uses ``kind = control``, ``control_dim``, ``velocity``
(formulas separated by ';') and ``initial`` = q(a); ``[boundary] values``
is the target q(theta_f).
"""

from __future__ import annotations

import configparser
import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import symexpr as sx
from .control import ControlProblem
from .core import DEFAULT_EPSILON_REL, FalvaProblem
from .solvers import FIXED_ENDS, INITIAL_JET, SolveConfig
from .symexpr import Jet
from .trajectory import Trajectory

__all__ = [
    "ProblemFileError",
    "ProblemFile",
    "parse_problem_text",
    "load_problem",
    "jet_columns",
    "write_trajectory_csv",
    "read_trajectory_csv",
    "write_table_csv",
]

KINDS = ("variational", "control")
METHODS = ("indirect", "direct", "cross")

_SCHEMA = {
    "problem": {"kind", "alpha", "a", "t", "m", "state_dim", "control_dim", "lagrangian", "velocity", "initial"},
    "boundary": {"mode", "theta_f", "values"},
    "solver": {"degree", "quad_points", "newton_tol", "epsilon_rel", "max_iters", "method", "grid"},
}


class ProblemFileError(ValueError):
    """Schema violation or malformed value in a problem or trajectory file."""


@dataclass
class ProblemFile:
    kind: str
    problem: FalvaProblem | ControlProblem
    config: SolveConfig
    method: str
    grid: int
    formulas: dict

    @property
    def target(self) -> np.ndarray:
        """Final state q(theta_f) of a control file."""
        return np.asarray(self.config.boundary_values, dtype=float).ravel()

    def theta_f(self) -> float:
        cfg, pb = self.config, self.problem
        if cfg.theta_f is not None:
            return float(cfg.theta_f)
        if pb.alpha == 1.0:
            return pb.t
        return pb.margin_point(cfg.epsilon_rel)

    def echo(self) -> dict:
        """Fully resolved settings, defaults included."""
        pb = self.problem
        out = {
            "kind": self.kind,
            "alpha": pb.alpha,
            "a": pb.a,
            "t": pb.t,
            "state_dim": pb.state_dim,
            **self.formulas,
            "method": self.method,
            "grid": self.grid,
        }
        if self.kind == "variational":
            out["m"] = pb.m
            out["initial"] = np.asarray(pb.initial).tolist()
        else:
            out["control_dim"] = pb.control_dim
            out["initial"] = pb.q_a.tolist()
        solver = self.config.as_dict()
        solver["theta_f"] = self.theta_f()
        out["solver"] = solver
        return out


def _matrix(text: str, cols: int, what: str) -> np.ndarray:
    try:
        rows = [[float(v) for v in row.split(",")] for row in text.split(";") if row.strip()]
    except ValueError as exc:
        raise ProblemFileError(f"{what}: {exc}") from exc
    if not rows or any(len(r) != cols for r in rows):
        raise ProblemFileError(f"{what}: every row needs {cols} comma-separated values")
    return np.array(rows)


def _get(section, key, conv, default, what):
    if key not in section:
        return default
    raw = section[key].strip()
    try:
        return conv(raw)
    except ValueError as exc:
        raise ProblemFileError(f"{what}.{key}: cannot read {raw!r}") from exc


def parse_problem_text(text: str) -> ProblemFile:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ProblemFileError(f"malformed problem file: {exc}") from exc
    for name in cp.sections():
        if name not in _SCHEMA:
            raise ProblemFileError(f"unknown section [{name}]")
        unknown = set(cp[name]) - _SCHEMA[name]
        if unknown:
            raise ProblemFileError(f"unknown keys in [{name}]: {', '.join(sorted(unknown))}")
    if "problem" not in cp:
        raise ProblemFileError("missing [problem] section")
    sec = cp["problem"]
    bnd = cp["boundary"] if "boundary" in cp else {}
    slv = cp["solver"] if "solver" in cp else {}

    kind = sec.get("kind", "variational").strip()
    if kind not in KINDS:
        raise ProblemFileError(f"problem.kind must be one of {KINDS}, got {kind!r}")
    for key in ("alpha", "a", "t", "lagrangian"):
        if key not in sec:
            raise ProblemFileError(f"missing problem.{key}")
    alpha = _get(sec, "alpha", float, None, "problem")
    a = _get(sec, "a", float, None, "problem")
    t = _get(sec, "t", float, None, "problem")

    mode = bnd.get("mode", FIXED_ENDS).strip() if bnd else FIXED_ENDS
    if mode not in (INITIAL_JET, FIXED_ENDS):
        raise ProblemFileError(f"boundary.mode must be {INITIAL_JET} or {FIXED_ENDS}, got {mode!r}")
    method = slv.get("method", "indirect").strip() if slv else "indirect"
    if method not in METHODS:
        raise ProblemFileError(f"solver.method must be one of {METHODS}, got {method!r}")

    cfg = SolveConfig(
        degree=_get(slv, "degree", int, 64, "solver"),
        quad_points=_get(slv, "quad_points", int, None, "solver"),
        newton_tol=_get(slv, "newton_tol", float, 1e-10, "solver"),
        max_iters=_get(slv, "max_iters", int, 50, "solver"),
        boundary_mode=mode,
        theta_f=_get(bnd, "theta_f", float, None, "boundary"),
        epsilon_rel=_get(slv, "epsilon_rel", float, DEFAULT_EPSILON_REL, "solver"),
    )
    grid = _get(slv, "grid", int, 201, "solver")
    if grid < 2:
        raise ProblemFileError("solver.grid must be at least 2")
    cfg.report_points = grid

    try:
        if kind == "variational":
            m = _get(sec, "m", int, 1, "problem")
            n = _get(sec, "state_dim", int, 1, "problem")
            if "velocity" in sec or "control_dim" in sec:
                raise ProblemFileError("velocity/control_dim belong to control problems")
            if "initial" not in sec:
                raise ProblemFileError("missing problem.initial (rows q^(i)(a), i < m)")
            initial = _matrix(sec["initial"], n, "problem.initial")
            lag = sx.parse(sec["lagrangian"], state_dim=n, control_dim=0, max_deriv=m)
            pb = FalvaProblem(alpha, a, t, m, lag, n, initial)
            formulas = {"lagrangian": sx.to_string(lag)}
            if "values" not in bnd:
                raise ProblemFileError("missing boundary.values")
            cfg.boundary_values = _matrix(bnd["values"], n, "boundary.values")
            cfg.validate(pb)
        else:
            if "velocity" not in sec:
                raise ProblemFileError("missing problem.velocity")
            velocity = [v.strip() for v in sec["velocity"].split(";") if v.strip()]
            r = _get(sec, "control_dim", int, 1, "problem")
            n = _get(sec, "state_dim", int, len(velocity), "problem")
            if n != len(velocity):
                raise ProblemFileError(f"state_dim={n} but {len(velocity)} velocity formulas")
            if mode != FIXED_ENDS:
                raise ProblemFileError("control problems use boundary.mode = fixed_ends")
            q_a = _matrix(sec.get("initial", ",".join(["0"] * n)), n, "problem.initial")[0]
            pb = ControlProblem.from_formulas(sec["lagrangian"], velocity, alpha, a, t, q_a, r)
            formulas = {
                "lagrangian": sx.to_string(pb.lagrangian),
                "velocity": [sx.to_string(v) for v in pb.velocity],
            }
            if "values" not in bnd:
                raise ProblemFileError("missing boundary.values (target q(theta_f))")
            cfg.boundary_values = _matrix(bnd["values"], n, "boundary.values")[:1]
    except ProblemFileError:
        raise
    except ValueError as exc:
        raise ProblemFileError(str(exc)) from exc
    return ProblemFile(kind, pb, cfg, method, grid, formulas)


def load_problem(path: str | Path) -> ProblemFile:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ProblemFileError(f"cannot read {path}: {exc}") from exc
    return parse_problem_text(text)


# ---------------------------------------------------------------------------
# trajectory CSV


def jet_columns(state_dim: int, order: int) -> list[str]:
    """theta, q0.., q0d1.., ..., one block per derivative order."""
    cols = ["theta"]
    for d in range(order + 1):
        cols += [f"q{s}" if d == 0 else f"q{s}d{d}" for s in range(state_dim)]
    return cols


def write_trajectory_csv(path: str | Path, tr: Trajectory, nodes, order: int):
    jet = tr.jet_at(np.asarray(nodes, dtype=float), order)
    cols = [np.asarray(nodes, dtype=float)]
    for d in range(order + 1):
        cols += [jet.q[s, d] for s in range(tr.state_dim)]
    write_table_csv(path, jet_columns(tr.state_dim, order), np.column_stack(cols))


def write_table_csv(path: str | Path, header: list[str], table: np.ndarray):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in np.atleast_2d(table):
            writer.writerow([repr(float(v)) for v in row])


def read_trajectory_csv(path: str | Path, pb: FalvaProblem, degree: int | None = None) -> Jet | Trajectory:
    """Batch jet when all derivative columns up to order 2m are present,
    otherwise a Chebyshev least-squares fit of the q columns."""
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise ProblemFileError(f"cannot read {path}: {exc}") from exc
    if len(rows) < 2:
        raise ProblemFileError(f"{path}: need a header and at least one data row")
    header = [h.strip() for h in rows[0]]
    body = [row for row in rows[1:] if row]
    if any(len(row) != len(header) for row in body):
        raise ProblemFileError(f"{path}: ragged rows")
    try:
        data = np.array([[float(v) for v in row] for row in body], dtype=float)
    except ValueError as exc:
        raise ProblemFileError(f"{path}: non-numeric entry ({exc})") from exc
    index = {name: k for k, name in enumerate(header)}
    n, K = pb.state_dim, pb.jet_order
    base = jet_columns(n, 0)
    missing = [c for c in base if c not in index]
    if missing:
        raise ProblemFileError(f"{path}: missing columns {', '.join(missing)} for state_dim={n}")
    extra = [c for c in header if c.startswith("q") and c not in jet_columns(n, max(K, 8))]
    if extra:
        raise ProblemFileError(f"{path}: columns {', '.join(extra)} do not match state_dim={n}")
    theta = data[:, index["theta"]]
    if not np.all(np.isfinite(data)):
        raise ProblemFileError(f"{path}: non-finite values")
    full = jet_columns(n, K)
    if all(c in index for c in full):
        q = np.empty((n, K + 1, theta.size))
        for d in range(K + 1):
            for s in range(n):
                q[s, d] = data[:, index[full[1 + d * n + s]]]
        return Jet(theta, q)
    deg = degree if degree is not None else min(theta.size - 1, 24)
    values = data[:, [index[c] for c in base[1:]]]
    try:
        return Trajectory.fit(theta, values, deg)
    except np.linalg.LinAlgError as exc:
        raise ProblemFileError(f"{path}: cannot fit a degree-{deg} trajectory ({exc})") from exc
