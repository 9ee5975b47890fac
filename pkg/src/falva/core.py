"""Optimality conditions of fractional action-like variational problems.

A problem is the functional

    I[q] = 1/Gamma(alpha) * integral_a^t L(theta, q, q', ..., q^(m)) (t - theta)^(alpha-1) dtheta

with observer time ``t`` fixed. Everything here is built from the exact
symbolic partials of L and evaluated on polynomial jets, so identities
that hold algebraically are checked to rounding level.

Notation: ``g[k]`` is dL/dq^(k) (argument k+2 of L), ``D`` is the total
theta-derivative along the trajectory and

    psi^j = sum_{i=0}^{m-j} (-1)^i D^i g[i+j],   j = 0..m.

psi^0 is the Euler-Lagrange operator and psi^m = g[m].
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from . import symexpr as sx
from .specquad import binomial, gamma, gamma_ratio, truncated_rule
from .symexpr import THETA, Expr, Jet, Var, state
from .trajectory import Trajectory

__all__ = [
    "FalvaProblem",
    "ResidualReport",
    "SingularPointError",
    "action",
    "psi",
    "friction_force",
    "el_residual",
    "dr_residual",
    "el_residual_first_order",
    "el_residual_second_order",
    "friction_force_first_order",
    "friction_force_second_order",
    "verify_identities",
    "residual_report",
    "interior_nodes",
    "DEFAULT_EPSILON_REL",
]

DEFAULT_EPSILON_REL = 1e-3


class SingularPointError(ValueError):
    """Raised when a quantity is requested at theta >= t, where F has poles."""


@dataclass(frozen=True, eq=False)
class FalvaProblem:
    """Higher-order problem: alpha in (0, 1], a < t, Lagrangian of order m.

    ``initial`` holds q^(i)(a) for i = 0..m-1, one row per derivative order.
    """

    alpha: float
    a: float
    t: float
    m: int
    lagrangian: Expr
    state_dim: int = 1
    initial: np.ndarray | None = None

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha}")
        if not self.a < self.t:
            raise ValueError(f"need a < t, got a={self.a}, t={self.t}")
        if self.m < 1 or self.state_dim < 1:
            raise ValueError("need m >= 1 and state_dim >= 1")
        for ref in sx.variables(self.lagrangian):
            if ref.kind in ("u", "p"):
                raise ValueError(f"variational Lagrangian may not reference {ref.name}")
            if ref.kind == "q" and (ref.order > self.m or ref.index >= self.state_dim):
                raise ValueError(f"{ref.name} is outside order m={self.m} / state_dim={self.state_dim}")
        if self.initial is not None:
            init = np.array(self.initial, dtype=float).reshape(-1, self.state_dim)
            if init.shape[0] != self.m:
                raise ValueError(f"initial data needs exactly m={self.m} rows, got {init.shape[0]}")
            init.flags.writeable = False
            object.__setattr__(self, "initial", init)

    @classmethod
    def from_formula(cls, formula: str, alpha: float, a: float, t: float, m: int, state_dim: int = 1,
                     initial=None) -> "FalvaProblem":
        lag = sx.parse(formula, state_dim=state_dim, control_dim=0, max_deriv=m)
        return cls(alpha, a, t, m, lag, state_dim, initial)

    def replace(self, **changes) -> "FalvaProblem":
        fields = dict(alpha=self.alpha, a=self.a, t=self.t, m=self.m, lagrangian=self.lagrangian,
                      state_dim=self.state_dim, initial=self.initial)
        fields.update(changes)
        return FalvaProblem(**fields)

    @property
    def jet_order(self) -> int:
        return 2 * self.m

    def margin_point(self, epsilon_rel: float = DEFAULT_EPSILON_REL) -> float:
        """Largest admissible interior node t - epsilon_rel (t - a)."""
        return self.t - epsilon_rel * (self.t - self.a)

    @cached_property
    def ops(self) -> "_Operators":
        return _Operators(self)


class _Operators:
    """Symbolic stack of one problem, built lazily and compiled once."""

    def __init__(self, pb: FalvaProblem):
        self.pb = pb
        n, m = pb.state_dim, pb.m
        L = pb.lagrangian
        self.g = [[sx.partial(L, state(s, k)) for s in range(n)] for k in range(m + 1)]
        # Dg[k][r][s] = D^r g[k][s], r = 0..k
        self.Dg = []
        for k in range(m + 1):
            rows = [self.g[k]]
            for _ in range(k):
                rows.append([sx.total_derivative(e) for e in rows[-1]])
            self.Dg.append(rows)
        self.psi = [
            [sx.sum_exprs(self._signed(i, self.Dg[i + j][i][s]) for i in range(m - j + 1)) for s in range(n)]
            for j in range(m + 1)
        ]
        theta_gap = sx.sub(sx.Const(pb.t), Var(THETA))
        # friction force grouped by the power of 1/(t - theta)
        self.friction_groups = []
        for i in range(1, m + 1):
            comb = [
                sx.sum_exprs(
                    sx.mul(sx.Const((-1) ** (k - 1) * binomial(k, i)), self.Dg[k][k - i][s])
                    for k in range(i, m + 1)
                )
                for s in range(n)
            ]
            self.friction_groups.append((i, comb))
        self.F = [
            sx.sum_exprs(
                sx.mul(sx.Const(gamma_ratio(i, pb.alpha)), sx.div(comb[s], sx.power(theta_gap, sx.Const(i))))
                for i, comb in self.friction_groups
            )
            for s in range(n)
        ]
        self.el = [sx.sub(self.psi[0][s], self.F[s]) for s in range(n)]
        self.dL_theta = sx.partial(L, THETA)

    @staticmethod
    def _signed(i: int, e: Expr) -> Expr:
        return e if i % 2 == 0 else sx.neg(e)

    @cached_property
    def dpsi(self):
        # index 0 unused; D psi^j for j = 1..m
        return [None] + [[sx.total_derivative(e) for e in row] for row in self.psi[1:]]

    @cached_property
    def el_momentum(self):
        """g[0] - D psi^1 - F, the rewritten Euler-Lagrange form."""
        n = self.pb.state_dim
        return [sx.sub(sx.sub(self.g[0][s], self.dpsi[1][s]), self.F[s]) for s in range(n)]

    @cached_property
    def bracket(self) -> Expr:
        n, m = self.pb.state_dim, self.pb.m
        terms = [sx.mul(self.psi[j][s], Var(state(s, j))) for j in range(1, m + 1) for s in range(n)]
        return sx.sub(self.pb.lagrangian, sx.sum_exprs(terms))

    @cached_property
    def dbracket(self) -> Expr:
        return sx.total_derivative(self.bracket)

    @cached_property
    def dr(self) -> Expr:
        n = self.pb.state_dim
        force = sx.sum_exprs(sx.mul(self.F[s], Var(state(s, 1))) for s in range(n))
        return sx.sub(sx.sub(self.dbracket, self.dL_theta), force)

    # compiled bundles ------------------------------------------------

    @cached_property
    def fn_psi(self):
        return [sx.compile_expr(row) for row in self.psi]

    @cached_property
    def fn_F(self):
        return sx.compile_expr(self.F)

    @cached_property
    def fn_el(self):
        return sx.compile_expr(self.el)

    @cached_property
    def fn_el_momentum(self):
        return sx.compile_expr(self.el_momentum)

    @cached_property
    def fn_dr(self):
        return sx.compile_expr([self.dr])

    @cached_property
    def fn_identities(self):
        """psi-recursion gaps, bracket gap, flattened."""
        n, m = self.pb.state_dim, self.pb.m
        exprs = []
        for j in range(1, m + 1):
            for s in range(n):
                exprs.append(sx.add(sx.sub(self.dpsi[j][s], self.g[j - 1][s]), self.psi[j - 1][s]))
        drift = sx.sum_exprs(sx.mul(self.psi[0][s], Var(state(s, 1))) for s in range(n))
        exprs.append(sx.sub(sx.sub(self.dbracket, self.dL_theta), drift))
        return sx.compile_expr(exprs)

    @cached_property
    def fn_lagrangian(self):
        return sx.compile_expr([self.pb.lagrangian])

    @cached_property
    def el_jacobian(self):
        """d el[s] / d q_{s'}^{(d)} for d = 0..2m, compiled as one bundle."""
        n, K = self.pb.state_dim, self.pb.jet_order
        exprs = [sx.partial(self.el[s], state(r, d)) for s in range(n) for r in range(n) for d in range(K + 1)]
        return sx.compile_expr(exprs)

    @cached_property
    def lagrangian_gradient(self):
        n, m = self.pb.state_dim, self.pb.m
        return sx.compile_expr([self.g[d][s] for s in range(n) for d in range(m + 1)])

    @cached_property
    def lagrangian_hessian(self):
        n, m = self.pb.state_dim, self.pb.m
        slots = [(s, d) for s in range(n) for d in range(m + 1)]
        exprs = [sx.partial(self.g[d][s], state(r, e)) for (s, d) in slots for (r, e) in slots]
        return sx.compile_expr(exprs)

    @cached_property
    def legendre_block(self):
        """d^2 L / dq^(m) dq^(m), which must be invertible for the indirect solve."""
        n, m = self.pb.state_dim, self.pb.m
        return sx.compile_expr([sx.partial(self.g[m][s], state(r, m)) for s in range(n) for r in range(n)])


# ---------------------------------------------------------------------------
# evaluation helpers


def _run(fn, jet: Jet, dtype=float) -> np.ndarray:
    """Evaluate a compiled bundle; result shape (len(bundle), *theta.shape)."""
    try:
        with np.errstate(divide="raise", invalid="raise", over="ignore"):
            vals = fn(jet)
    except (FloatingPointError, ZeroDivisionError) as exc:
        raise sx.EvaluationError(str(exc)) from exc
    shape = np.shape(jet.theta)
    return np.array([np.broadcast_to(v, shape) for v in vals], dtype=dtype)


def _check_interior(pb: FalvaProblem, theta):
    if np.any(np.asarray(theta) >= pb.t):
        raise SingularPointError(f"theta must stay below the observer time t={pb.t}")


def _jet(pb: FalvaProblem, tr: Trajectory, theta) -> Jet:
    if tr.state_dim != pb.state_dim:
        raise ValueError(f"trajectory has state_dim {tr.state_dim}, problem has {pb.state_dim}")
    _check_interior(pb, theta)
    return tr.jet_at(theta, pb.jet_order)


def _as_jet(pb: FalvaProblem, source, theta=None) -> Jet:
    if isinstance(source, Jet):
        _check_interior(pb, source.theta)
        if source.order < pb.jet_order:
            raise ValueError(f"jet order {source.order} < required {pb.jet_order}")
        return source
    return _jet(pb, source, theta)


# ---------------------------------------------------------------------------
# public operations


def action(pb: FalvaProblem, tr: Trajectory, n: int = 64) -> float:
    """Weighted action over the trajectory's interval, divided by Gamma(alpha).

    On [a, t] this is the n-point Gauss-Jacobi value, exact when L along the
    trajectory is a polynomial of degree <= 2n-1 in theta.
    """
    if sx.max_state_order(pb.lagrangian) > pb.m:
        raise ValueError("Lagrangian references derivatives above order m")
    a, b = tr.interval
    rule = truncated_rule(pb.alpha, a, pb.t, min(b, pb.t), n)
    jet = tr.jet_at(rule.nodes, pb.m)
    (values,) = _run(pb.ops.fn_lagrangian, jet)
    return float(np.dot(rule.weights, values) / gamma(pb.alpha))


def psi(pb: FalvaProblem, tr: Trajectory | Jet, j: int, theta=None) -> np.ndarray:
    """psi^j at theta, shape (state_dim,) or (state_dim, M)."""
    if not 0 <= j <= pb.m:
        raise ValueError(f"j must lie in 0..{pb.m}")
    return _run(pb.ops.fn_psi[j], _as_jet(pb, tr, theta))


def friction_force(pb: FalvaProblem, tr: Trajectory | Jet, theta=None) -> np.ndarray:
    """The friction force F: sum over k, i of

        (-1)^(k-1) C(k, i) Gamma(i-alpha+1)/Gamma(1-alpha) (t-theta)^(-i) D^(k-i) g[k],

    1 <= i <= k <= m. Identically zero for alpha = 1.
    """
    return _run(pb.ops.fn_F, _as_jet(pb, tr, theta))


def el_residual(pb: FalvaProblem, tr: Trajectory | Jet, theta=None, form: str = "psi") -> np.ndarray:
    """Euler-Lagrange residual psi^0 - F.

    ``form="momentum"`` uses the equivalent g[0] - D psi^1 - F.
    """
    jet = _as_jet(pb, tr, theta)
    if form == "psi":
        return _run(pb.ops.fn_el, jet)
    if form == "momentum":
        return _run(pb.ops.fn_el_momentum, jet)
    raise ValueError(f"unknown form {form!r}")


def dr_residual(pb: FalvaProblem, tr: Trajectory | Jet, theta=None):
    """D{L - sum_j psi^j . q^(j)} - dL/dtheta - F . q'."""
    out = _run(pb.ops.fn_dr, _as_jet(pb, tr, theta))[0]
    return float(out) if out.ndim == 0 else out


# dedicated low-order paths, written out term by term


def friction_force_first_order(pb: FalvaProblem, tr: Trajectory | Jet, theta=None) -> np.ndarray:
    """F for m = 1: (1-alpha)/(t-theta) * dL/dq'."""
    if pb.m != 1:
        raise ValueError("first-order path needs m = 1")
    jet = _as_jet(pb, tr, theta)
    g1 = [sx.partial(pb.lagrangian, state(s, 1)) for s in range(pb.state_dim)]
    gap = pb.t - jet.theta
    return (1.0 - pb.alpha) / gap * _run(sx.compile_expr(g1), jet)


def el_residual_first_order(pb: FalvaProblem, tr: Trajectory | Jet, theta=None) -> np.ndarray:
    """dL/dq - D dL/dq' - (1-alpha)/(t-theta) dL/dq'."""
    if pb.m != 1:
        raise ValueError("first-order path needs m = 1")
    jet = _as_jet(pb, tr, theta)
    L = pb.lagrangian
    exprs = []
    for s in range(pb.state_dim):
        p_ = sx.partial(L, state(s, 1))
        exprs += [sx.partial(L, state(s, 0)), p_, sx.total_derivative(p_)]
    v = _run(sx.compile_expr(exprs), jet).reshape((pb.state_dim, 3) + np.shape(jet.theta))
    gap = pb.t - jet.theta
    return v[:, 0] - v[:, 2] - (1.0 - pb.alpha) / gap * v[:, 1]


def _second_order_parts(pb: FalvaProblem, jet: Jet):
    L = pb.lagrangian
    exprs = []
    for s in range(pb.state_dim):
        g0 = sx.partial(L, state(s, 0))
        g1 = sx.partial(L, state(s, 1))
        g2 = sx.partial(L, state(s, 2))
        dg2 = sx.total_derivative(g2)
        exprs += [g0, g1, sx.total_derivative(g1), g2, dg2, sx.total_derivative(dg2)]
    v = _run(sx.compile_expr(exprs), jet).reshape((pb.state_dim, 6) + np.shape(jet.theta))
    return v


def friction_force_second_order(pb: FalvaProblem, tr: Trajectory | Jet, theta=None) -> np.ndarray:
    """F for m = 2:

        (1-alpha)/(t-theta) (g1 - 2 D g2) - (1-alpha)(2-alpha)/(t-theta)^2 g2.
    """
    if pb.m != 2:
        raise ValueError("second-order path needs m = 2")
    jet = _as_jet(pb, tr, theta)
    v = _second_order_parts(pb, jet)
    gap = pb.t - jet.theta
    al = pb.alpha
    return (1 - al) / gap * (v[:, 1] - 2 * v[:, 4]) - (1 - al) * (2 - al) / gap**2 * v[:, 3]


def el_residual_second_order(pb: FalvaProblem, tr: Trajectory | Jet, theta=None) -> np.ndarray:
    """(g0 - D g1 + D^2 g2) - F for m = 2."""
    if pb.m != 2:
        raise ValueError("second-order path needs m = 2")
    jet = _as_jet(pb, tr, theta)
    v = _second_order_parts(pb, jet)
    return v[:, 0] - v[:, 2] + v[:, 5] - friction_force_second_order(pb, jet)


# ---------------------------------------------------------------------------
# reports


@dataclass
class ResidualReport:
    """Per-node residuals; arrays are indexed by node first."""

    nodes: np.ndarray
    el_residual: np.ndarray
    dr_residual: np.ndarray
    psi_gap: np.ndarray
    bracket_gap: np.ndarray
    coupling_gap: np.ndarray
    norms: dict = field(default_factory=dict)

    @property
    def identity_gap(self) -> np.ndarray:
        return np.maximum(np.maximum(self.psi_gap, self.bracket_gap), self.coupling_gap)

    @property
    def max_identity_gap(self) -> float:
        return float(np.max(self.identity_gap)) if self.nodes.size else 0.0

    def to_dict(self) -> dict:
        return {
            "nodes": self.nodes.tolist(),
            "el_residual": self.el_residual.tolist(),
            "dr_residual": self.dr_residual.tolist(),
            "identity_gap": self.identity_gap.tolist(),
            "identity_parts": {
                "psi_recursion": self.psi_gap.tolist(),
                "bracket": self.bracket_gap.tolist(),
                "dr_el_coupling": self.coupling_gap.tolist(),
            },
            "norms": dict(self.norms),
        }


def interior_nodes(pb: FalvaProblem, lo: float, hi: float, count: int,
                   epsilon_rel: float = DEFAULT_EPSILON_REL) -> np.ndarray:
    """Uniform nodes on [lo, min(hi, t - epsilon_rel (t - a))]."""
    hi = min(hi, pb.margin_point(epsilon_rel))
    if not lo < hi:
        raise ValueError("no interior nodes in the requested range")
    return np.linspace(lo, hi, count)


def residual_report(pb: FalvaProblem, source: Trajectory | Jet, nodes=None,
                    epsilon_rel: float = DEFAULT_EPSILON_REL) -> ResidualReport:
    """Euler-Lagrange, DuBois-Reymond and identity gaps at interior nodes.

    ``source`` is a trajectory (evaluated at ``nodes``) or a batch Jet.
    """
    if isinstance(source, Jet):
        jet = source
        nodes = np.atleast_1d(jet.theta)
        if jet.theta.ndim == 0:
            jet = Jet(nodes, jet.q[..., None])
    else:
        nodes = np.atleast_1d(np.asarray(nodes, dtype=float))
        jet = None
    limit = pb.margin_point(epsilon_rel)
    if np.any(nodes > limit + 1e-12 * (pb.t - pb.a)):
        raise SingularPointError(f"nodes must satisfy theta <= t - epsilon_rel (t - a) = {limit}")
    if jet is None:
        jet = _jet(pb, source, nodes)
    _check_interior(pb, nodes)

    el = _run(pb.ops.fn_el, jet)  # (n, M)
    dr = _run(pb.ops.fn_dr, jet)[0]
    # The identities are algebraic in the jet values. Near t the F terms grow
    # like (t-theta)^-m, so evaluate the gaps in extended precision to keep
    # cancellation in F out of them.
    xjet = Jet(jet.theta.astype(np.longdouble), jet.q.astype(np.longdouble))
    ident = _run(pb.ops.fn_identities, xjet, np.longdouble)
    psi_gap = np.max(np.abs(ident[:-1]), axis=0).astype(float)
    bracket_gap = np.abs(ident[-1]).astype(float)
    el_x = _run(pb.ops.fn_el, xjet, np.longdouble)
    dr_x = _run(pb.ops.fn_dr, xjet, np.longdouble)[0]
    coupling_gap = np.abs(dr_x - np.sum(el_x * xjet.q[:, 1], axis=0)).astype(float)

    el_abs = np.max(np.abs(el), axis=0)
    if nodes.size > 1:
        w = np.zeros(nodes.size)
        h = np.diff(nodes)
        w[:-1] += 0.5 * h
        w[1:] += 0.5 * h
    else:
        w = np.ones(1)
    w = w * (pb.t - nodes) ** (pb.alpha - 1.0) / gamma(pb.alpha)
    norms = {
        "sup": float(np.max(el_abs)),
        "l2w": float(np.sqrt(np.sum(w * np.sum(el**2, axis=0)))),
        "dr_sup": float(np.max(np.abs(dr))),
        "identity_sup": float(np.max(np.maximum(np.maximum(psi_gap, bracket_gap), coupling_gap))),
    }
    return ResidualReport(nodes, el.T.copy(), dr, psi_gap, bracket_gap, coupling_gap, norms)


def verify_identities(pb: FalvaProblem, tr: Trajectory | Jet, grid: Sequence[float] | None = None,
                      epsilon_rel: float = DEFAULT_EPSILON_REL) -> ResidualReport:
    """Check the exact identities that hold on any trajectory.

    Per node: the psi recursion D psi^j = g[j-1] - psi^(j-1), the bracket
    identity D{L - sum psi^j q^(j)} = dL/dtheta + psi^0 . q', and the coupling
    dr_residual = el_residual . q'. None of them involves F.
    """
    return residual_report(pb, tr, grid, epsilon_rel)
