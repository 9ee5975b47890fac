"""Two-time optimal control with the weight (t - theta)^(alpha-1).

Problem: stationarize 1/Gamma(alpha) * int_a^t L(theta, q, u) (t-theta)^(alpha-1) dtheta
subject to q' = phi(theta, q, u), q(a) = q_a. With

    H = L (t - theta)^(alpha-1) + p . phi

extremals satisfy q' = dH/dp, p' = -dH/dq, dH/du = 0, and along them
dH/dtheta (total) equals the explicit partial dH/dtheta, which is nonzero
for alpha < 1 even for autonomous L and phi.
"""

from __future__ import annotations

import logging
import weakref
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
from scipy.integrate import solve_ivp

from . import symexpr as sx
from .core import DEFAULT_EPSILON_REL, FalvaProblem, SingularPointError, _run
from .solvers import ConvergenceError, SolveConfig
from .symexpr import THETA, Expr, Jet, Var, control, costate, state
from .trajectory import Trajectory, chebyshev_points

__all__ = [
    "ControlProblem",
    "Extremal",
    "ControlEliminationError",
    "hamiltonian",
    "hamiltonian_values",
    "pontryagin_gaps",
    "pontryagin_residuals",
    "energy_rate_gap",
    "hamiltonian_rate",
    "embed_variational",
    "induced_tuple",
    "embedding_gaps",
    "solve_shooting",
    "extremal_table",
]

log = logging.getLogger(__name__)

ODE_RTOL = 1e-10
ODE_ATOL = 1e-12
DENSE_RTOL = 1e-12
DENSE_ATOL = 1e-14


class ControlEliminationError(RuntimeError):
    """dH/du = 0 could not be solved for u (singular d2H/du2 or no convergence)."""


@dataclass(frozen=True, eq=False)
class ControlProblem:
    """Control system q' = phi(theta, q, u) with running cost L(theta, q, u)."""

    alpha: float
    a: float
    t: float
    state_dim: int
    control_dim: int
    lagrangian: Expr
    velocity: tuple
    q_a: np.ndarray

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha}")
        if not self.a < self.t:
            raise ValueError(f"need a < t, got a={self.a}, t={self.t}")
        velocity = tuple(self.velocity)
        if len(velocity) != self.state_dim:
            raise ValueError(f"need {self.state_dim} velocity components, got {len(velocity)}")
        for e in (self.lagrangian, *velocity):
            for ref in sx.variables(e):
                if ref.kind == "p":
                    raise ValueError("L and phi may not reference the costate")
                if ref.kind == "q" and (ref.order > 0 or ref.index >= self.state_dim):
                    raise ValueError(f"{ref.name}: only order-0 state slots q0..q{self.state_dim - 1} allowed")
                if ref.kind == "u" and ref.index >= self.control_dim:
                    raise ValueError(f"{ref.name} is outside control_dim={self.control_dim}")
        q_a = np.array(self.q_a, dtype=float).reshape(self.state_dim)
        q_a.flags.writeable = False
        object.__setattr__(self, "velocity", velocity)
        object.__setattr__(self, "q_a", q_a)

    @classmethod
    def from_formulas(cls, lagrangian: str, velocity: Sequence[str], alpha: float, a: float, t: float,
                      q_a, control_dim: int = 1) -> "ControlProblem":
        n = len(velocity)

        def parse(text):
            return sx.parse(text, state_dim=n, control_dim=control_dim, max_deriv=0)

        return cls(alpha, a, t, n, control_dim, parse(lagrangian), tuple(parse(v) for v in velocity), q_a)

    def margin_point(self, epsilon_rel: float = DEFAULT_EPSILON_REL) -> float:
        return self.t - epsilon_rel * (self.t - self.a)

    @cached_property
    def ops(self) -> "_ControlOps":
        return _ControlOps(self)


class _ControlOps:
    def __init__(self, cp: ControlProblem):
        n, r = cp.state_dim, cp.control_dim
        gap = sx.sub(sx.Const(cp.t), Var(THETA))
        self.weight = sx.power(gap, sx.Const(cp.alpha - 1.0))
        pphi = sx.sum_exprs(sx.mul(Var(costate(i)), cp.velocity[i]) for i in range(n))
        self.H = sx.add(sx.mul(cp.lagrangian, self.weight), pphi)
        self.dH_theta = sx.partial(self.H, THETA)
        self.dH_q = [sx.partial(self.H, state(i)) for i in range(n)]
        self.dH_u = [sx.partial(self.H, control(j)) for j in range(r)]
        self.dH_p = [sx.partial(self.H, costate(i)) for i in range(n)]
        self.n, self.r = n, r

    @cached_property
    def fn_parts(self):
        """[H, dH/dtheta, dH/dq.., dH/du.., dH/dp..]"""
        return sx.compile_expr([self.H, self.dH_theta, *self.dH_q, *self.dH_u, *self.dH_p])

    @cached_property
    def fn_stationarity(self):
        """[dH/du.., d2H/du du (row major)]"""
        r = self.r
        hess = [sx.partial(self.dH_u[j], control(k)) for j in range(r) for k in range(r)]
        return sx.compile_expr([*self.dH_u, *hess])

    @cached_property
    def fn_flow(self):
        """[dH/dp.., dH/dq..]"""
        return sx.compile_expr([*self.dH_p, *self.dH_q])

    def split(self, vals):
        n, r = self.n, self.r
        return {
            "H": vals[0],
            "dH_theta": vals[1],
            "dH_q": vals[2 : 2 + n],
            "dH_u": vals[2 + n : 2 + n + r],
            "dH_p": vals[2 + n + r : 2 + 2 * n + r],
        }


def hamiltonian(cp: ControlProblem) -> Expr:
    """H = L (t - theta)^(alpha-1) + p . phi."""
    return cp.ops.H


@dataclass(eq=False)
class Extremal:
    """State, control and costate curves on a common interval [a, theta_end], theta_end <= t."""

    q: Trajectory
    u: Trajectory
    p: Trajectory
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (self.q.interval == self.u.interval == self.p.interval):
            raise ValueError("q, u and p must share one interval")
        if self.p.state_dim != self.q.state_dim:
            raise ValueError("costate and state dimensions differ")

    @property
    def interval(self):
        return self.q.interval


def _check_theta(cp: ControlProblem, theta):
    th = np.asarray(theta)
    if np.any(th > cp.t) or (cp.alpha < 1.0 and np.any(th >= cp.t)):
        raise SingularPointError(f"theta must stay below the observer time t={cp.t}")


def _control_jet(theta, q, u, p) -> Jet:
    q = np.asarray(q, dtype=float)
    return Jet(theta, q[:, None, ...], u, p)


def _parts(cp: ControlProblem, theta, q, u, p) -> dict:
    _check_theta(cp, theta)
    return cp.ops.split(_run(cp.ops.fn_parts, _control_jet(theta, q, u, p)))


def hamiltonian_values(cp: ControlProblem, theta, q, u, p) -> dict:
    """H and its partials (keys H, dH_theta, dH_q, dH_u, dH_p) at given values."""
    return _parts(cp, theta, q, u, p)


def pontryagin_gaps(cp: ControlProblem, theta, q, u, p, qdot, pdot) -> dict:
    """Gaps of the Hamiltonian system at given values.

    adjoint_gap = p' + dH/dq, stationarity_gap = dH/du, dynamics_gap = q' - dH/dp.
    """
    parts = _parts(cp, theta, q, u, p)
    return {
        "adjoint_gap": np.asarray(pdot) + parts["dH_q"],
        "stationarity_gap": parts["dH_u"],
        "dynamics_gap": np.asarray(qdot) - parts["dH_p"],
    }


def _values(ex: Extremal, theta):
    return (
        ex.q(theta),
        ex.u(theta),
        ex.p(theta),
        ex.q.derivative(1)(theta),
        ex.u.derivative(1)(theta),
        ex.p.derivative(1)(theta),
    )


def pontryagin_residuals(cp: ControlProblem, ex: Extremal, theta) -> dict:
    """adjoint, stationarity and dynamics gaps of ``ex`` at theta (scalar or array)."""
    q, u, p, qd, _, pd = _values(ex, theta)
    return pontryagin_gaps(cp, theta, q, u, p, qd, pd)


def hamiltonian_rate(cp: ControlProblem, ex: Extremal, theta) -> tuple[np.ndarray, np.ndarray]:
    """(total dH/dtheta along ex, explicit partial dH/dtheta)."""
    q, u, p, qd, ud, pd = _values(ex, theta)
    parts = _parts(cp, theta, q, u, p)
    total = (
        parts["dH_theta"]
        + np.sum(parts["dH_q"] * qd, axis=0)
        + np.sum(parts["dH_u"] * ud, axis=0)
        + np.sum(parts["dH_p"] * pd, axis=0)
    )
    return total, parts["dH_theta"]


def energy_rate_gap(cp: ControlProblem, ex: Extremal, theta):
    """|dH/dtheta - d1H| along ``ex``; small on extremals, raw otherwise."""
    total, explicit = hamiltonian_rate(cp, ex, theta)
    return np.abs(total - explicit)


# ---------------------------------------------------------------------------
# variational problems as control problems


def embed_variational(pb: FalvaProblem) -> ControlProblem:
    """Stack x = (q, q', ..., q^(m-1)) with control u = q^(m).

    Slot d*n + s of the stacked state holds q_s^(d).
    """
    n, m = pb.state_dim, pb.m
    mapping = {}
    for s in range(n):
        for d in range(m):
            mapping[state(s, d)] = Var(state(d * n + s))
        mapping[state(s, m)] = Var(control(s))
    lag = sx.substitute(pb.lagrangian, mapping)
    velocity = [Var(state((d + 1) * n + s)) for d in range(m - 1) for s in range(n)]
    velocity += [Var(control(s)) for s in range(n)]
    q_a = np.zeros(n * m) if pb.initial is None else np.asarray(pb.initial, dtype=float).ravel()
    return ControlProblem(pb.alpha, pb.a, pb.t, n * m, n, lag, tuple(velocity), q_a)


class _Embedding:
    """Costate induced by a variational trajectory:

        p_{d,s} = -sum_{i=0}^{m-1-d} (-1)^i D^i (w g[d+1+i]_s),  w = (t - theta)^(alpha-1),

    which zeroes the stationarity and the adjoint gaps for d >= 1 and leaves
    w * (Euler-Lagrange residual) in the d = 0 adjoint slot.
    """

    def __init__(self, pb: FalvaProblem):
        n, m = pb.state_dim, pb.m
        self.cp = embed_variational(pb)
        w = sx.power(sx.sub(sx.Const(pb.t), Var(THETA)), sx.Const(pb.alpha - 1.0))
        g = pb.ops.g
        p = []
        for d in range(m):
            for s in range(n):
                terms = []
                for i in range(m - d):
                    e = sx.mul(w, g[d + 1 + i][s])
                    for _ in range(i):
                        e = sx.total_derivative(e)
                    terms.append(e if i % 2 else sx.neg(e))
                p.append(sx.sum_exprs(terms))
        self.p = p
        self.fn = sx.compile_expr([*p, *(sx.total_derivative(e) for e in p)])


_EMBEDDINGS: "weakref.WeakKeyDictionary[FalvaProblem, _Embedding]" = weakref.WeakKeyDictionary()


def _embedding(pb: FalvaProblem) -> _Embedding:
    emb = _EMBEDDINGS.get(pb)
    if emb is None:
        emb = _EMBEDDINGS[pb] = _Embedding(pb)
    return emb


def induced_tuple(pb: FalvaProblem, tr: Trajectory, theta) -> dict:
    """(q, u, p) of the embedded problem induced by a variational trajectory,
    with q' and p', at theta (scalar or array)."""
    n, m = pb.state_dim, pb.m
    if np.any(np.asarray(theta) >= pb.t):
        raise SingularPointError(f"theta must stay below the observer time t={pb.t}")
    jet = tr.jet_at(theta, pb.jet_order)
    emb = _embedding(pb)
    vals = _run(emb.fn, jet)

    def stack(first):
        return np.concatenate([jet.q[:, d] for d in range(first, first + m)], axis=0)

    return {
        "cp": emb.cp,
        "q": stack(0),
        "u": jet.q[:, m],
        "p": vals[: n * m],
        "qdot": stack(1),
        "pdot": vals[n * m :],
    }


def embedding_gaps(pb: FalvaProblem, tr: Trajectory, theta) -> dict:
    """Pontryagin gaps of the embedded problem at the tuple induced by ``tr``."""
    it = induced_tuple(pb, tr, theta)
    return pontryagin_gaps(it["cp"], theta, it["q"], it["u"], it["p"], it["qdot"], it["pdot"])


# ---------------------------------------------------------------------------
# shooting


def _eliminate_control(cp: ControlProblem, theta, x, p, u0, tol: float = 1e-13, iters: int = 40):
    """Newton on dH/du(theta, x, u, p) = 0 from ``u0``."""
    r = cp.control_dim
    u = np.array(u0, dtype=float)
    for _ in range(iters):
        vals = _run(cp.ops.fn_stationarity, _control_jet(theta, x, u, p))
        grad, hess = vals[:r], vals[r:].reshape(r, r)
        try:
            du = np.linalg.solve(hess, -grad)
        except np.linalg.LinAlgError as exc:
            raise ControlEliminationError(f"d2H/du2 is singular at theta={theta:g}") from exc
        u = u + du
        if np.max(np.abs(du)) <= tol * max(1.0, np.max(np.abs(u))):
            return u
    raise ControlEliminationError(f"dH/du = 0 did not converge at theta={theta:g}")


def _flow(cp: ControlProblem):
    n = cp.state_dim
    memo = {"u": np.zeros(cp.control_dim)}

    def rhs(theta, y):
        x, p = y[:n], y[n:]
        u = _eliminate_control(cp, theta, x, p, memo["u"])
        memo["u"] = u
        vals = _run(cp.ops.fn_flow, _control_jet(theta, x, u, p))
        return np.concatenate([vals[:n], -vals[n:]])

    return rhs, memo


def _integrate(cp: ControlProblem, p_a, theta_f, dense=False):
    rhs, _ = _flow(cp)
    y0 = np.concatenate([cp.q_a, p_a])
    # the dense interpolant is one order lower than the stepper; tighten it for the final pass
    rtol, atol = (DENSE_RTOL, DENSE_ATOL) if dense else (ODE_RTOL, ODE_ATOL)
    sol = solve_ivp(rhs, (cp.a, theta_f), y0, method="RK45", rtol=rtol, atol=atol, dense_output=dense)
    if not sol.success:
        raise ConvergenceError(f"Hamiltonian flow integration failed: {sol.message}")
    return sol


def solve_shooting(cp: ControlProblem, q_f, cfg: SolveConfig | None = None, p_guess=None) -> Extremal:
    """Shoot on p(a) so that q(theta_f) = q_f.

    ``cfg.theta_f`` defaults to t - epsilon_rel (t - a) for alpha < 1 and to
    t for alpha = 1. The result is interpolated at ``cfg.degree + 1``
    Chebyshev points on [a, theta_f]; ``info`` holds p(a) and the iteration count.
    """
    cfg = cfg or SolveConfig()
    n = cp.state_dim
    q_f = np.asarray(q_f, dtype=float).reshape(n)
    if cfg.theta_f is not None:
        theta_f = float(cfg.theta_f)
    else:
        theta_f = cp.t if cp.alpha == 1.0 else cp.margin_point(cfg.epsilon_rel)
    if not cp.a < theta_f <= cp.t:
        raise ValueError(f"theta_f={theta_f} must lie in (a, t]")
    if cp.alpha < 1.0 and theta_f >= cp.t:
        raise SingularPointError("shooting must stop before t when alpha < 1")

    def miss(p_a):
        return _integrate(cp, p_a, theta_f).y[:n, -1] - q_f

    tol = max(cfg.newton_tol, 10 * ODE_RTOL) * max(1.0, np.max(np.abs(q_f)))
    p_a = np.zeros(n) if p_guess is None else np.asarray(p_guess, dtype=float).reshape(n)
    R = miss(p_a)
    converged = False
    it = 0
    for it in range(1, cfg.max_iters + 1):
        if np.max(np.abs(R)) <= tol:
            converged = True
            break
        J = np.empty((n, n))
        for k in range(n):
            h = 1e-6 * max(1.0, abs(p_a[k]))
            e = np.zeros(n)
            e[k] = h
            J[:, k] = (miss(p_a + e) - R) / h
        try:
            step = np.linalg.solve(J, -R)
        except np.linalg.LinAlgError as exc:
            raise ConvergenceError("shooting Jacobian is singular") from exc
        lam = 1.0
        while True:
            trial = p_a + lam * step
            R_trial = miss(trial)
            if np.linalg.norm(R_trial) < np.linalg.norm(R) or lam < 1e-4:
                break
            lam *= 0.5
        p_a, R = trial, R_trial
        log.debug("shooting it=%d lam=%g miss=%g", it, lam, np.max(np.abs(R)))
    if not converged:
        raise ConvergenceError(f"shooting did not converge in {cfg.max_iters} iterations (miss {np.max(np.abs(R)):.3g})")

    sol = _integrate(cp, p_a, theta_f, dense=True)
    nodes = chebyshev_points(cp.a, theta_f, cfg.degree + 1)
    y = sol.sol(nodes)
    y[:, 0] = sol.y[:, 0]
    y[:, -1] = sol.y[:, -1]
    u = np.empty((cp.control_dim, nodes.size))
    guess = np.zeros(cp.control_dim)
    for k, th in enumerate(nodes):
        guess = u[:, k] = _eliminate_control(cp, th, y[:n, k], y[n:, k], guess)
    interval = (cp.a, theta_f)
    return Extremal(
        Trajectory.fit(nodes, y[:n].T, cfg.degree, interval),
        Trajectory.fit(nodes, u.T, cfg.degree, interval),
        Trajectory.fit(nodes, y[n:].T, cfg.degree, interval),
        info={"p_a": p_a, "iterations": it, "miss": float(np.max(np.abs(R))), "theta_f": theta_f},
    )


def extremal_table(cp: ControlProblem, ex: Extremal, thetas) -> tuple[list[str], np.ndarray]:
    """Columns theta, q.., u.., p.., H, dH/dtheta for CSV export."""
    thetas = np.asarray(thetas, dtype=float)
    q, u, p = ex.q(thetas), ex.u(thetas), ex.p(thetas)
    parts = _parts(cp, thetas, q, u, p)
    header = (["theta"] + [f"q{i}" for i in range(cp.state_dim)] + [f"u{j}" for j in range(cp.control_dim)]
              + [f"p{i}" for i in range(cp.state_dim)] + ["H", "dH_theta"])
    table = np.column_stack([thetas, q.T, u.T, p.T, parts["H"], parts["dH_theta"]])
    return header, table
