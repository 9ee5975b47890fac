"""Direct (Ritz) and indirect (collocation) routes to stationary trajectories.

Both solvers expand q in Chebyshev polynomials on [a, theta_f], theta_f <= t.
The direct route makes the gradient of the discretized action vanish on the
subspace that respects the boundary data; the indirect route collocates the
Euler-Lagrange equation psi^0 = F. Agreement between the two is the main
end-to-end check of the friction force.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.linalg as sla
from numpy.polynomial import chebyshev as C

from . import core
from .core import DEFAULT_EPSILON_REL, FalvaProblem, ResidualReport, _run
from .specquad import gamma, truncated_rule
from .symexpr import Jet
from .trajectory import Trajectory

__all__ = [
    "SolveConfig",
    "SolveResult",
    "CrossValidation",
    "ConvergenceError",
    "SingularSystemError",
    "solve_direct",
    "solve_indirect",
    "cross_validate",
    "compare_trajectories",
    "basis_matrices",
]

log = logging.getLogger(__name__)

INITIAL_JET = "initial_jet"
FIXED_ENDS = "fixed_ends"


class ConvergenceError(RuntimeError):
    """Newton iteration did not converge within max_iters."""


class SingularSystemError(np.linalg.LinAlgError):
    """Singular Hessian, Jacobian or Legendre block."""


@dataclass
class SolveConfig:
    """Discretization, Newton and boundary-closure settings.

    ``boundary_values`` closes the system. For ``initial_jet`` it holds the
    rows q^(i)(a), i = m..2m-1 (the problem supplies i < m). For
    ``fixed_ends`` it holds q^(i)(theta_f), i = 0..m-1.
    """

    degree: int = 32
    quad_points: int | None = None
    newton_tol: float = 1e-10
    max_iters: int = 50
    boundary_mode: str = FIXED_ENDS
    theta_f: float | None = None
    boundary_values: np.ndarray | None = None
    epsilon_rel: float = DEFAULT_EPSILON_REL
    report_points: int = 201

    def resolved_theta_f(self, pb: FalvaProblem) -> float:
        if self.theta_f is not None:
            return float(self.theta_f)
        if pb.alpha == 1.0:
            return pb.t
        return pb.margin_point(self.epsilon_rel)

    def resolved_quad_points(self) -> int:
        return self.quad_points if self.quad_points is not None else self.degree + 16

    def validate(self, pb: FalvaProblem):
        if self.boundary_mode not in (INITIAL_JET, FIXED_ENDS):
            raise ValueError(f"unknown boundary mode {self.boundary_mode!r}")
        if self.newton_tol <= 0:
            raise ValueError("newton_tol must be positive")
        if self.degree < 2 * pb.m + 2:
            raise ValueError(f"degree must be at least 2m+2 = {2 * pb.m + 2}")
        tf = self.resolved_theta_f(pb)
        if not pb.a < tf <= pb.t:
            raise ValueError(f"theta_f={tf} must lie in (a, t]")
        if pb.initial is None:
            raise ValueError("problem has no initial data q^(i)(a)")
        if self.boundary_values is None:
            raise ValueError("boundary_values are required to close the system")
        bv = np.asarray(self.boundary_values, dtype=float).reshape(-1, pb.state_dim)
        if bv.shape[0] != pb.m:
            raise ValueError(f"boundary_values needs m={pb.m} rows, got {bv.shape[0]}")

    def as_dict(self, pb: FalvaProblem | None = None) -> dict:
        out = asdict(self)
        if self.boundary_values is not None:
            out["boundary_values"] = np.asarray(self.boundary_values, dtype=float).tolist()
        out["quad_points"] = self.resolved_quad_points()
        if pb is not None:
            out["theta_f"] = self.resolved_theta_f(pb)
        return out


@dataclass
class SolveResult:
    trajectory: Trajectory
    residual_report: ResidualReport
    converged: bool
    iterations: int
    action_value: float
    method: str
    stationarity_gap: float = float("nan")
    discretization_estimate: float = float("nan")
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        rep = self.residual_report.to_dict()
        rep.update(
            config=self.config,
            converged=bool(self.converged),
            iterations=int(self.iterations),
            method=self.method,
            action=self.action_value,
            stationarity_gap=self.stationarity_gap,
            discretization_estimate=self.discretization_estimate,
            interval=list(self.trajectory.interval),
        )
        return rep


# ---------------------------------------------------------------------------
# basis machinery


def _coeff_diff_matrix(N: int, scale: float) -> np.ndarray:
    """Matrix mapping Chebyshev coefficients to those of the derivative."""
    D = np.zeros((N + 1, N + 1))
    D[:N, :] = C.chebder(np.eye(N + 1), axis=0, scl=scale)
    return D


def basis_matrices(thetas, interval, N: int, K: int) -> np.ndarray:
    """B[d, k, j] = d^d/dtheta^d T_j at thetas[k], for d = 0..K."""
    a, b = interval
    x = (2.0 * np.asarray(thetas, dtype=float) - a - b) / (b - a)
    V = C.chebvander(x, N)
    D = _coeff_diff_matrix(N, 2.0 / (b - a))
    out = [V]
    Dk = np.eye(N + 1)
    for _ in range(K):
        Dk = D @ Dk
        out.append(V @ Dk)
    return np.array(out)


def _jet_from_coeffs(c: np.ndarray, B: np.ndarray, thetas) -> Jet:
    # c: (n, N+1), B: (K+1, M, N+1) -> q: (n, K+1, M)
    return Jet(thetas, np.einsum("sj,dkj->sdk", c, B))


def _boundary_system(pb: FalvaProblem, cfg: SolveConfig, interval, N: int):
    """Rows E (flattened over components) and targets e of the closure."""
    n, m = pb.state_dim, pb.m
    a, tf = interval
    init = np.asarray(pb.initial, dtype=float).reshape(m, n)
    extra = np.asarray(cfg.boundary_values, dtype=float).reshape(m, n)
    if cfg.boundary_mode == INITIAL_JET:
        Ba = basis_matrices([a], interval, N, 2 * m - 1)[:, 0, :]
        conds = [(Ba[i], init[i]) for i in range(m)] + [(Ba[m + i], extra[i]) for i in range(m)]
    else:
        Ba = basis_matrices([a], interval, N, m - 1)[:, 0, :]
        Bf = basis_matrices([tf], interval, N, m - 1)[:, 0, :]
        conds = [(Ba[i], init[i]) for i in range(m)] + [(Bf[i], extra[i]) for i in range(m)]
    rows, rhs = [], []
    for row, vals in conds:
        for s in range(n):
            r = np.zeros(n * (N + 1))
            r[s * (N + 1) : (s + 1) * (N + 1)] = row
            rows.append(r)
            rhs.append(vals[s])
    return np.array(rows), np.array(rhs)


def _initial_guess(E: np.ndarray, e: np.ndarray, n: int, N: int, m: int) -> np.ndarray:
    """Lowest-degree polynomial meeting the boundary data."""
    cols = [s * (N + 1) + j for s in range(n) for j in range(2 * m)]
    c = np.zeros(n * (N + 1))
    c[cols] = np.linalg.solve(E[:, cols], e)
    return c


def _report(pb: FalvaProblem, tr: Trajectory, cfg: SolveConfig) -> ResidualReport:
    nodes = core.interior_nodes(pb, tr.a, tr.b, cfg.report_points, cfg.epsilon_rel)
    return core.residual_report(pb, tr, nodes, cfg.epsilon_rel)


# ---------------------------------------------------------------------------
# indirect route


def _gauss_chebyshev(a: float, b: float, M: int) -> np.ndarray:
    x = np.cos((2 * np.arange(M) + 1) * np.pi / (2 * M))[::-1]
    return 0.5 * (a + b) + 0.5 * (b - a) * x


def solve_indirect(pb: FalvaProblem, cfg: SolveConfig) -> SolveResult:
    """Chebyshev collocation of psi^0 - F = 0 with the configured closure.

    Raises SingularSystemError when d^2L/d(q^(m))^2 is singular along the
    iterate, ConvergenceError when Newton stalls.
    """
    cfg.validate(pb)
    n, m, N = pb.state_dim, pb.m, cfg.degree
    K = pb.jet_order
    interval = (pb.a, cfg.resolved_theta_f(pb))
    E, e = _boundary_system(pb, cfg, interval, N)
    M = N + 1 - 2 * m
    nodes = _gauss_chebyshev(*interval, M)
    B = basis_matrices(nodes, interval, N, K)
    ops = pb.ops
    c = _initial_guess(E, e, n, N, m)

    def residual(cvec):
        jet = _jet_from_coeffs(cvec.reshape(n, N + 1), B, nodes)
        return _run(ops.fn_el, jet), jet  # (n, M)

    R, jet = residual(c)
    converged = False
    it = 0
    for it in range(1, cfg.max_iters + 1):
        _check_legendre(pb, jet)
        partials = _run(ops.el_jacobian, jet).reshape(n, n, K + 1, M)
        # J[(s,k),(r,j)] = sum_d partials[s,r,d,k] B[d,k,j]
        J = np.einsum("srdk,dkj->skrj", partials, B).reshape(n * M, n * (N + 1))
        A = np.vstack([E, J])
        rhs = -np.concatenate([E @ c - e, R.ravel()])
        scale = np.max(np.abs(A), axis=1)
        scale[scale == 0] = 1.0
        try:
            lu = sla.lu_factor(A / scale[:, None], check_finite=True)
            if np.min(np.abs(np.diag(lu[0]))) == 0.0:
                raise np.linalg.LinAlgError("exactly singular")
            step = sla.lu_solve(lu, rhs / scale)
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise SingularSystemError(f"collocation Jacobian is singular: {exc}") from exc
        merit0 = np.linalg.norm(rhs / scale)
        lam = 1.0
        while True:
            trial = c + lam * step
            R_trial, jet_trial = residual(trial)
            merit = np.linalg.norm(np.concatenate([E @ trial - e, R_trial.ravel()]) / scale)
            if merit <= (1 - 1e-4 * lam) * merit0 or lam < 1e-6 or merit0 == 0.0:
                break
            lam *= 0.5
        c, R, jet = trial, R_trial, jet_trial
        small_step = lam * np.max(np.abs(step)) <= cfg.newton_tol * max(1.0, np.max(np.abs(c)))
        log.debug("indirect it=%d lam=%g step=%g res=%g", it, lam, np.max(np.abs(step)), np.max(np.abs(R)))
        if small_step or np.max(np.abs(R)) <= cfg.newton_tol:
            converged = True
            break
    if not converged:
        raise ConvergenceError(f"collocation Newton did not converge in {cfg.max_iters} iterations")
    tr = Trajectory(c.reshape(n, N + 1), interval)
    report = _report(pb, tr, cfg)
    # a converged Newton iterate can still be under-resolved between nodes
    ok = report.norms["sup"] <= 10 * cfg.newton_tol
    return SolveResult(
        trajectory=tr,
        residual_report=report,
        converged=ok,
        iterations=it,
        action_value=core.action(pb, tr, cfg.resolved_quad_points()),
        method="indirect",
        stationarity_gap=report.norms["sup"],
        discretization_estimate=tr.tail_norm(),
        config=cfg.as_dict(pb),
    )


def _check_legendre(pb: FalvaProblem, jet: Jet):
    n = pb.state_dim
    block = _run(pb.ops.legendre_block, jet).reshape(n, n, -1)
    dets = np.abs(np.linalg.det(np.moveaxis(block, -1, 0)))
    norms = np.max(np.abs(block), axis=(0, 1)) ** n
    if np.any(dets <= 1e-12 * np.maximum(norms, 1e-300)):
        raise SingularSystemError("Legendre block d^2L/d(q^(m))^2 is singular along the trajectory")


# ---------------------------------------------------------------------------
# direct route


def _action_model(pb: FalvaProblem, cfg: SolveConfig, interval):
    n, m, N = pb.state_dim, pb.m, cfg.degree
    rule = truncated_rule(pb.alpha, interval[0], pb.t, interval[1], cfg.resolved_quad_points())
    B = basis_matrices(rule.nodes, interval, N, m)  # (m+1, Q, N+1)
    w = rule.weights / gamma(pb.alpha)
    ops = pb.ops

    def jet_of(cvec):
        return _jet_from_coeffs(cvec.reshape(n, N + 1), B, rule.nodes)

    def value(cvec):
        (vals,) = _run(ops.fn_lagrangian, jet_of(cvec))
        return float(np.dot(w, vals))

    def gradient(cvec):
        g = _run(ops.lagrangian_gradient, jet_of(cvec)).reshape(n, m + 1, -1)
        return np.einsum("k,sdk,dkj->sj", w, g, B).ravel()

    def hessian(cvec):
        h = _run(ops.lagrangian_hessian, jet_of(cvec)).reshape(n, m + 1, n, m + 1, -1)
        H = np.zeros((n, N + 1, n, N + 1))
        # blockwise B_d^T diag(w h) B_e; h is symmetric in (s,d) <-> (r,e)
        pairs = [(s, d) for s in range(n) for d in range(m + 1)]
        for i, (s, d) in enumerate(pairs):
            for r, e in pairs[i:]:
                blk = B[d].T @ ((w * h[s, d, r, e])[:, None] * B[e])
                H[s, :, r, :] += blk
                if (r, e) != (s, d):
                    H[r, :, s, :] += blk.T
        return H.reshape(n * (N + 1), n * (N + 1))

    return value, gradient, hessian


def solve_direct(pb: FalvaProblem, cfg: SolveConfig) -> SolveResult:
    """Ritz method: stationarize the discretized action under the closure.

    Newton on the reduced gradient Z^T grad A (Z spans the feasible
    directions). A singular reduced Hessian is reported, not regularized.
    """
    cfg.validate(pb)
    if cfg.boundary_mode != FIXED_ENDS:
        raise ValueError("the direct method needs fixed_ends boundary data")
    n, m, N = pb.state_dim, pb.m, cfg.degree
    interval = (pb.a, cfg.resolved_theta_f(pb))
    E, e = _boundary_system(pb, cfg, interval, N)
    Z = sla.null_space(E)
    c = _initial_guess(E, e, n, N, m)
    value, gradient, hessian = _action_model(pb, cfg, interval)

    converged = False
    it = 0
    for it in range(1, cfg.max_iters + 1):
        gz = Z.T @ gradient(c)
        Hz = Z.T @ hessian(c) @ Z
        try:
            # singularity is judged by the pivot test below
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", sla.LinAlgWarning)
                lu = sla.lu_factor(Hz)
            if np.min(np.abs(np.diag(lu[0]))) <= 1e-14 * np.max(np.abs(Hz)):
                raise np.linalg.LinAlgError("reduced Hessian is numerically singular")
            dy = -sla.lu_solve(lu, gz)
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise SingularSystemError(f"singular Hessian in the direct method: {exc}") from exc
        g0 = np.linalg.norm(gz)
        lam = 1.0
        while lam >= 1e-6:
            trial = c + lam * (Z @ dy)
            if np.linalg.norm(Z.T @ gradient(trial)) <= (1 - 1e-4 * lam) * g0 or g0 == 0.0:
                break
            lam *= 0.5
        c = trial
        log.debug("direct it=%d lam=%g step=%g grad=%g", it, lam, np.max(np.abs(dy)), g0)
        if lam * np.max(np.abs(dy)) <= cfg.newton_tol * max(1.0, np.max(np.abs(c))):
            converged = True
            break
    if not converged:
        raise ConvergenceError(f"Ritz Newton did not converge in {cfg.max_iters} iterations")
    gap = float(np.max(np.abs(Z.T @ gradient(c))))
    tr = Trajectory(c.reshape(n, N + 1), interval)
    return SolveResult(
        trajectory=tr,
        residual_report=_report(pb, tr, cfg),
        converged=gap <= cfg.newton_tol,
        iterations=it,
        action_value=value(c),
        method="direct",
        stationarity_gap=gap,
        discretization_estimate=tr.tail_norm(),
        config=cfg.as_dict(pb),
    )


def action_gradient(pb: FalvaProblem, cfg: SolveConfig, tr: Trajectory) -> np.ndarray:
    """Gradient of the discretized action w.r.t. the Chebyshev coefficients of ``tr``."""
    _, gradient, _ = _action_model(pb, cfg, tr.interval)
    return gradient(tr.with_degree(cfg.degree).coeffs.ravel())


def feasible_directions(pb: FalvaProblem, cfg: SolveConfig) -> np.ndarray:
    """Orthonormal basis (columns) of coefficient perturbations that keep the boundary data."""
    interval = (pb.a, cfg.resolved_theta_f(pb))
    E, _ = _boundary_system(pb, cfg, interval, cfg.degree)
    return sla.null_space(E)


# ---------------------------------------------------------------------------
# cross validation


@dataclass
class CrossValidation:
    distance: float
    action_gap: float
    threshold: float
    agree: bool
    converged: bool = True
    direct: SolveResult | None = None
    indirect: SolveResult | None = None

    def to_dict(self) -> dict:
        return {
            "distance": self.distance,
            "action_gap": self.action_gap,
            "threshold": self.threshold,
            "agree": self.agree,
            "converged": self.converged,
        }


def compare_trajectories(tr1: Trajectory, tr2: Trajectory, threshold: float, points: int = 1001) -> tuple[float, bool]:
    """Sup-norm distance on a dense grid of the common interval."""
    lo = max(tr1.a, tr2.a)
    hi = min(tr1.b, tr2.b)
    grid = np.linspace(lo, hi, points)
    dist = float(np.max(np.abs(tr1(grid) - tr2(grid))))
    return dist, dist <= threshold


def cross_validate(pb: FalvaProblem, cfg: SolveConfig) -> CrossValidation:
    """Solve with both routes and flag disagreement above
    10 max(newton_tol, discretization estimate)."""
    direct = solve_direct(pb, cfg)
    indirect = solve_indirect(pb, cfg)
    est = max(direct.discretization_estimate, indirect.discretization_estimate)
    threshold = 10.0 * max(cfg.newton_tol, est)
    dist, agree = compare_trajectories(direct.trajectory, indirect.trajectory, threshold)
    action_gap = abs(direct.action_value - indirect.action_value)
    both = direct.converged and indirect.converged
    return CrossValidation(dist, action_gap, threshold, agree, both, direct, indirect)
