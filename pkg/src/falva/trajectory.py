"""Chebyshev representation of candidate curves q(theta) on an interval."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np
from numpy.polynomial import chebyshev as C

from .symexpr import Jet

__all__ = ["Trajectory", "chebyshev_points"]


def chebyshev_points(a: float, b: float, n: int) -> np.ndarray:
    """n Chebyshev points of the second kind on [a, b], increasing."""
    if n == 1:
        return np.array([0.5 * (a + b)])
    x = -np.cos(np.pi * np.arange(n) / (n - 1))
    return 0.5 * (a + b) + 0.5 * (b - a) * x


class Trajectory:
    """Vector-valued Chebyshev polynomial on ``interval``.

    ``coeffs`` has shape ``(state_dim, degree + 1)``.
    """

    __slots__ = ("coeffs", "interval")

    def __init__(self, coeffs, interval: Sequence[float]):
        coeffs = np.array(coeffs, dtype=float)
        if coeffs.ndim == 1:
            coeffs = coeffs[None, :]
        if coeffs.ndim != 2 or coeffs.shape[1] == 0:
            raise ValueError("coeffs must have shape (state_dim, degree+1)")
        a, b = float(interval[0]), float(interval[1])
        if not a < b:
            raise ValueError(f"empty interval ({a}, {b})")
        coeffs.flags.writeable = False
        object.__setattr__(self, "coeffs", coeffs)
        object.__setattr__(self, "interval", (a, b))

    def __setattr__(self, name, value):
        raise AttributeError("Trajectory is immutable")

    # -- construction ----------------------------------------------------

    @classmethod
    def fit(cls, thetas, values, degree: int, interval: Sequence[float] | None = None) -> "Trajectory":
        """Least-squares fit; interpolatory when there are degree+1 points.

        ``values`` has shape ``(len(thetas),)`` or ``(len(thetas), state_dim)``.
        """
        thetas = np.asarray(thetas, dtype=float)
        values = np.asarray(values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if interval is None:
            interval = (thetas.min(), thetas.max())
        a, b = interval
        if len(np.unique(thetas)) < degree + 1:
            raise np.linalg.LinAlgError(
                f"rank deficient fit: {len(np.unique(thetas))} distinct points for degree {degree}"
            )
        x = (2.0 * thetas - a - b) / (b - a)
        vander = C.chebvander(x, degree)
        coef, _, rank, _ = np.linalg.lstsq(vander, values, rcond=None)
        if rank < degree + 1:
            raise np.linalg.LinAlgError("rank deficient fit")
        return cls(coef.T, (a, b))

    @classmethod
    def interpolate(cls, func: Callable, interval: Sequence[float], degree: int) -> "Trajectory":
        """Interpolate ``func`` (theta array -> values) at Chebyshev points."""
        a, b = interval
        th = chebyshev_points(a, b, degree + 1)
        vals = np.asarray(func(th), dtype=float)
        if vals.ndim == 1:
            vals = vals[None, :]
        if vals.shape[-1] != th.size:
            vals = vals.T
        return cls.fit(th, vals.T, degree, (a, b))

    @classmethod
    def from_monomials(cls, coeffs, interval: Sequence[float]) -> "Trajectory":
        """From power-series coefficients in theta, one row per component."""
        coeffs = np.atleast_2d(np.asarray(coeffs, dtype=float))
        a, b = interval
        rows = []
        for row in coeffs:
            poly = np.polynomial.Polynomial(row)
            rows.append(poly.convert(kind=np.polynomial.Chebyshev, domain=[a, b]).coef)
        width = max(len(r) for r in rows)
        return cls(np.array([np.pad(r, (0, width - len(r))) for r in rows]), (a, b))

    @classmethod
    def constant(cls, value, interval: Sequence[float]) -> "Trajectory":
        return cls(np.atleast_1d(np.asarray(value, dtype=float))[:, None], interval)

    # -- basic properties ----------------------------------------------

    @property
    def state_dim(self) -> int:
        return self.coeffs.shape[0]

    @property
    def degree(self) -> int:
        return self.coeffs.shape[1] - 1

    @property
    def a(self) -> float:
        return self.interval[0]

    @property
    def b(self) -> float:
        return self.interval[1]

    def _to_unit(self, theta):
        a, b = self.interval
        return (2.0 * np.asarray(theta, dtype=float) - a - b) / (b - a)

    def _check_domain(self, theta):
        a, b = self.interval
        slack = 1e-12 * (b - a)
        th = np.asarray(theta)
        if np.any(th < a - slack) or np.any(th > b + slack):
            raise ValueError(f"theta outside trajectory interval [{a}, {b}]")

    def __call__(self, theta):
        """Values, shape ``(state_dim,)`` or ``(state_dim, M)``."""
        self._check_domain(theta)
        return C.chebval(self._to_unit(theta), self.coeffs.T)

    def __repr__(self):
        return f"Trajectory(state_dim={self.state_dim}, degree={self.degree}, interval={self.interval})"

    # -- calculus ------------------------------------------------------

    def derivative(self, order: int = 1) -> "Trajectory":
        if order < 0:
            raise ValueError("derivative order must be non-negative")
        if order == 0:
            return self
        if order > self.degree:
            return Trajectory(np.zeros((self.state_dim, 1)), self.interval)
        a, b = self.interval
        c = C.chebder(self.coeffs, m=order, scl=2.0 / (b - a), axis=1)
        return Trajectory(c, self.interval)

    def jet_at(self, theta, K: int) -> Jet:
        """Jet with columns q, q', ..., q^(K) at theta (scalar or array)."""
        self._check_domain(theta)
        x = self._to_unit(theta)
        cols = []
        tr = self
        for _ in range(K + 1):
            cols.append(C.chebval(x, tr.coeffs.T))
            tr = tr.derivative(1)
        return Jet(theta, np.stack(cols, axis=1))

    # -- linear structure ----------------------------------------------

    def with_degree(self, degree: int) -> "Trajectory":
        """Same polynomial with coefficients padded (or truncated) to ``degree``."""
        c = self.coeffs
        if degree + 1 >= c.shape[1]:
            c = np.pad(c, ((0, 0), (0, degree + 1 - c.shape[1])))
        else:
            c = c[:, : degree + 1]
        return Trajectory(c, self.interval)

    def _binary(self, other: "Trajectory", op):
        if self.interval != other.interval or self.state_dim != other.state_dim:
            raise ValueError("trajectories must share interval and state_dim")
        deg = max(self.degree, other.degree)
        return Trajectory(op(self.with_degree(deg).coeffs, other.with_degree(deg).coeffs), self.interval)

    def __add__(self, other):
        return self._binary(other, np.add)

    def __sub__(self, other):
        return self._binary(other, np.subtract)

    def __mul__(self, scalar):
        return Trajectory(self.coeffs * float(scalar), self.interval)

    __rmul__ = __mul__

    def __neg__(self):
        return Trajectory(-self.coeffs, self.interval)

    def component(self, i: int) -> "Trajectory":
        return Trajectory(self.coeffs[i : i + 1], self.interval)

    @classmethod
    def stack(cls, parts: Sequence["Trajectory"]) -> "Trajectory":
        deg = max(p.degree for p in parts)
        return cls(np.vstack([p.with_degree(deg).coeffs for p in parts]), parts[0].interval)

    def tail_norm(self, fraction: float = 0.25) -> float:
        """Sum of |coefficients| over the top ``fraction`` of the spectrum.

        A conservative resolution estimate for smooth curves.
        """
        n = self.coeffs.shape[1]
        k = max(1, int(np.ceil(fraction * n)))
        return float(np.max(np.sum(np.abs(self.coeffs[:, n - k :]), axis=1)))
