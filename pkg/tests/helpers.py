"""Random problem generators and independent reference computations.

The sympy oracle works on explicit functions of theta: every slot q_s^(d)
is replaced by the d-th derivative of a concrete polynomial before any
differentiation, so total derivatives are ordinary sympy derivatives and
share no code with the package.
"""

from __future__ import annotations

import math

import mpmath
import numpy as np
import sympy as sp

from falva.trajectory import Trajectory

THETA = sp.Symbol("theta", real=True)


def slot_name(s: int, d: int) -> str:
    return f"q{s}" if d == 0 else f"q{s}d{d}"


def random_lagrangian(rng: np.random.Generator, m: int, n: int, terms: int = 4) -> str:
    """Polynomial Lagrangian with a regular top-order block and a few cross terms."""
    parts = [f"{0.5 + 0.5 * rng.random():.3f}*{slot_name(s, m)}^2" for s in range(n)]
    names = [slot_name(s, d) for s in range(n) for d in range(m + 1)] + ["theta"]
    for _ in range(terms):
        k = rng.integers(1, 4)
        factors = [names[i] for i in rng.integers(0, len(names), size=k)]
        coef = rng.uniform(-1.0, 1.0)
        parts.append(f"{coef:.3f}*" + "*".join(factors))
    text = parts[0]
    for p in parts[1:]:
        text += " - " + p[1:] if p.startswith("-") else " + " + p
    return text


def random_monomials(rng: np.random.Generator, n: int, degree: int = 10) -> np.ndarray:
    """Coefficients c_k / k!, so all derivatives stay O(1) on unit intervals."""
    fact = np.array([math.factorial(k) for k in range(degree + 1)], dtype=float)
    return rng.normal(size=(n, degree + 1)) / fact


def random_trajectory(rng, n: int, interval=(0.0, 1.0), degree: int = 10) -> tuple[Trajectory, np.ndarray]:
    coeffs = random_monomials(rng, n, degree)
    return Trajectory.from_monomials(coeffs, interval), coeffs


class SympyOracle:
    """Classical and weighted variational operators of L along explicit polynomials."""

    def __init__(self, formula: str, m: int, n: int, coeffs: np.ndarray):
        self.m, self.n = m, n
        self.slots = {slot_name(s, d): sp.Symbol(f"y_{s}_{d}") for s in range(n) for d in range(m + 1)}
        local = dict(self.slots)
        local["theta"] = THETA
        self.L = sp.sympify(formula.replace("^", "**"), locals=local)
        self.Q = [sum(sp.Float(repr(float(c)), 30) * THETA**k for k, c in enumerate(row)) for row in coeffs]
        self.along = {self.slots[slot_name(s, d)]: sp.diff(self.Q[s], THETA, d) for s in range(n) for d in range(m + 1)}

    def g(self, k: int, s: int):
        """dL/dq_s^(k) as an explicit function of theta."""
        return sp.diff(self.L, self.slots[slot_name(s, k)]).subs(self.along)

    def euler_lagrange(self, s: int):
        return sum((-1) ** i * sp.diff(self.g(i, s), THETA, i) for i in range(self.m + 1))

    def psi(self, j: int, s: int):
        return sum((-1) ** i * sp.diff(self.g(i + j, s), THETA, i) for i in range(self.m - j + 1))

    def dubois_reymond(self):
        """d/dtheta{L - sum psi^j q^(j)} - dL/dtheta, classical form."""
        bracket = self.L.subs(self.along) - sum(
            self.psi(j, s) * sp.diff(self.Q[s], THETA, j) for j in range(1, self.m + 1) for s in range(self.n)
        )
        explicit = sp.diff(self.L, THETA).subs(self.along)
        return sp.diff(bracket, THETA) - explicit

    def weighted_friction(self, s: int, alpha: float, t: float):
        """psi^0 - (1/w) sum_k (-1)^k D^k (w g_k), with w = (t - theta)^(alpha-1).

        This is the friction force read off directly from the variation of
        the weighted action, without any closed-form expansion.
        """
        w = (sp.Float(t, 30) - THETA) ** (sp.Float(alpha, 30) - 1)
        weighted = sum((-1) ** k * sp.diff(w * self.g(k, s), THETA, k) for k in range(self.m + 1))
        return self.euler_lagrange(s) - weighted / w

    @staticmethod
    def at(expr, thetas) -> np.ndarray:
        fn = sp.lambdify(THETA, expr, modules="mpmath")
        with mpmath.workdps(40):
            return np.array([float(fn(mpmath.mpf(float(th)))) for th in np.atleast_1d(thetas)])


def weighted_reference_integral(f, alpha: float, a: float, t: float, panels: int = 1_000_000) -> float:
    """int_a^t f(theta) (t - theta)^(alpha-1) dtheta by composite Simpson in s = (t - theta)^alpha.

    The substitution removes the endpoint singularity:
    integral = (1/alpha) int_0^{(t-a)^alpha} f(t - s^(1/alpha)) ds.
    """
    top = (t - a) ** alpha
    s = np.linspace(0.0, top, 2 * panels + 1)
    vals = f(t - s ** (1.0 / alpha))
    h = top / (2 * panels)
    total = vals[0] + vals[-1] + 4.0 * vals[1:-1:2].sum() + 2.0 * vals[2:-1:2].sum()
    return float(total * h / 3.0) / alpha
