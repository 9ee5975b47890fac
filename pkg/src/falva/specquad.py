"""Gamma function, Gamma ratios and Gauss-Jacobi rules for the weight (t-theta)^(alpha-1)."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.linalg import eigh_tridiagonal

__all__ = [
    "gamma",
    "gamma_ratio",
    "binomial",
    "QuadratureRule",
    "jacobi_rule",
    "truncated_rule",
    "integrate",
]

# Lanczos approximation, g = 7, n = 9
_LANCZOS_G = 7.0
_LANCZOS_COEF = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)


def gamma(x: float) -> float:
    """Euler Gamma function for real arguments.

    Raises ValueError at the poles (non-positive integers).
    """
    x = float(x)
    if x <= 0 and x.is_integer():
        raise ValueError(f"Gamma has a pole at {x:g}")
    if x < 0.5:
        # reflection: Gamma(x) Gamma(1-x) = pi / sin(pi x)
        return math.pi / (math.sin(math.pi * x) * gamma(1.0 - x))
    x -= 1.0
    acc = _LANCZOS_COEF[0]
    for k in range(1, len(_LANCZOS_COEF)):
        acc += _LANCZOS_COEF[k] / (x + k)
    tt = x + _LANCZOS_G + 0.5
    # split the power to delay overflow for large x
    half = tt ** ((x + 0.5) / 2.0)
    return math.sqrt(2.0 * math.pi) * half * (half * math.exp(-tt)) * acc


def gamma_ratio(i: int, alpha: float) -> float:
    """Gamma(i - alpha + 1) / Gamma(1 - alpha) as the product prod_{s=1}^{i} (s - alpha).

    The product form has no pole at alpha = 1, where it is exactly zero.
    """
    if i < 0:
        raise ValueError("gamma_ratio needs i >= 0")
    out = 1.0
    for s in range(1, i + 1):
        out *= s - alpha
    return out


def binomial(n: int, k: int) -> int:
    if k < 0 or k > n or n < 0:
        return 0
    return math.comb(n, k)


@dataclass(frozen=True)
class QuadratureRule:
    """Nodes and positive weights for integrals against (t-theta)^(alpha-1) dtheta.

    ``interval`` is the integration range; ``t`` is the location of the
    weight singularity, equal to ``interval[1]`` for a Gauss-Jacobi rule.
    """

    nodes: np.ndarray
    weights: np.ndarray
    alpha: float
    interval: tuple[float, float]
    t: float

    def __len__(self):
        return len(self.nodes)

    @property
    def total_weight(self) -> float:
        return float(np.sum(self.weights))


def _jacobi_recurrence(n: int, a: float, b: float) -> tuple[np.ndarray, np.ndarray, float]:
    """Monic Jacobi recurrence for the weight (1-x)^a (1+x)^b on [-1, 1].

    Returns diagonal, off-diagonal (sqrt of beta_k, k=1..n-1) and mu_0.
    """
    k = np.arange(n, dtype=float)
    s = 2.0 * k + a + b
    diag = np.empty(n)
    diag[0] = (b - a) / (a + b + 2.0)
    diag[1:] = (b * b - a * a) / (s[1:] * (s[1:] + 2.0))
    kk = k[1:]
    ss = s[1:]
    beta = 4.0 * kk * (kk + a) * (kk + b) * (kk + a + b) / (ss * ss * (ss + 1.0) * (ss - 1.0))
    mu0 = 2.0 ** (a + b + 1.0) * gamma(a + 1.0) * gamma(b + 1.0) / gamma(a + b + 2.0)
    return diag, np.sqrt(beta), mu0


def jacobi_rule(alpha: float, a: float, t: float, n: int) -> QuadratureRule:
    """n-point Gauss rule for the weight (t-theta)^(alpha-1) on (a, t).

    Exact for polynomials of degree <= 2n-1. Built by Golub-Welsch from the
    Jacobi weight (1-x)^(alpha-1) on [-1, 1] and mapped affinely.
    """
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    if not a < t:
        raise ValueError(f"need a < t, got a={a}, t={t}")
    if n < 1:
        raise ValueError("need at least one node")
    diag, off, mu0 = _jacobi_recurrence(n, alpha - 1.0, 0.0)
    if n == 1:
        x, vecs = diag.copy(), np.ones((1, 1))
    else:
        x, vecs = eigh_tridiagonal(diag, off)
    w = mu0 * vecs[0, :] ** 2
    half = 0.5 * (t - a)
    nodes = a + half * (x + 1.0)
    weights = w * half**alpha
    return QuadratureRule(nodes, weights, float(alpha), (float(a), float(t)), float(t))


def truncated_rule(alpha: float, a: float, t: float, b: float, n: int) -> QuadratureRule:
    """Rule for the weight (t-theta)^(alpha-1) on (a, b) with b < t.

    The weight is smooth on [a, b] but steep when b is close to t, so the
    interval is split into panels whose lengths shrink geometrically toward
    b (each panel no longer than its distance to t), with an n-point
    Gauss-Legendre rule per panel. For b == t this is ``jacobi_rule``.
    """
    if b >= t:
        return jacobi_rule(alpha, a, t, n)
    if not a < b:
        raise ValueError(f"need a < b, got a={a}, b={b}")
    breaks = [b]
    while breaks[-1] - a > 2.0 * (t - breaks[-1]) and len(breaks) < 200:
        d = t - breaks[-1]
        breaks.append(max(a, breaks[-1] - d))
        if breaks[-1] == a:
            break
    if breaks[-1] != a:
        breaks.append(a)
    breaks = np.array(breaks[::-1])
    x, w = np.polynomial.legendre.leggauss(n)
    nodes, weights = [], []
    for lo, hi in zip(breaks[:-1], breaks[1:]):
        mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
        th = mid + half * x
        nodes.append(th)
        weights.append(half * w * (t - th) ** (alpha - 1.0))
    return QuadratureRule(
        np.concatenate(nodes), np.concatenate(weights), float(alpha), (float(a), float(b)), float(t)
    )


def integrate(f: Callable[[np.ndarray], np.ndarray], rule: QuadratureRule) -> float:
    """Sum of w_i f(node_i); ``f`` receives the whole node array."""
    values = np.asarray(f(rule.nodes), dtype=float)
    if values.shape != rule.nodes.shape:
        values = np.broadcast_to(values, rule.nodes.shape)
    return float(np.dot(rule.weights, values))
