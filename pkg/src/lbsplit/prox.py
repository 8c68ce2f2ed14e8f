"""Proximal maps for the nonsmooth terms.

The workhorse is the scaled power penalty |x|^p with 0 < p <= 1.  Its
proximal map is separable; each scalar subproblem

    min_y  |y|^p + (1/(2 rho)) (y - x)^2

has the minimizer 0 whenever |x| is at or below an explicit threshold,
and otherwise a unique nonzero stationary point that is compared against
0 by objective value.  p = 1 reduces to the soft threshold.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionError, DomainError

__all__ = [
    "ProxFn",
    "LpPower",
    "BoxIndicator",
    "lp_threshold",
    "lp_nonzero_floor",
    "prox_lp_scalar",
    "prox_lp",
    "soft_threshold",
    "project_box",
    "subgrad_at_prox",
]

_NEWTON_ITERS = 50


def _check_rho(rho):
    if not rho > 0:
        raise DomainError("prox parameter rho must be positive, got %g" % rho)


def _check_p(p):
    if not (0.0 < p <= 1.0):
        raise DomainError("power p must lie in (0, 1], got %g" % p)


def lp_nonzero_floor(rho: float, p: float) -> float:
    """Smallest magnitude the nonzero prox branch can return.

    For p < 1 this is (2 rho (1-p))^(1/(2-p)); any nonzero minimizer of
    the scalar subproblem has magnitude at least this value.
    """
    _check_rho(rho)
    _check_p(p)
    if p == 1.0:
        return 0.0
    return float((2.0 * rho * (1.0 - p)) ** (1.0 / (2.0 - p)))


def lp_threshold(rho: float, p: float) -> float:
    """Input magnitude at which the zero and nonzero branches tie.

    Below this threshold the prox returns exactly 0.  For p = 1 it
    degenerates to the soft threshold level rho.
    """
    _check_rho(rho)
    _check_p(p)
    if p == 1.0:
        return float(rho)
    beta = lp_nonzero_floor(rho, p)
    return float(beta + rho * p * beta ** (p - 1.0))


def _prox_lp_magnitude(v: np.ndarray, rho: float, p: float) -> np.ndarray:
    """Prox of |.|^p for a nonnegative array of magnitudes.

    Magnitudes above the tie threshold get the larger stationary point of
    F(y) = rho p y^(p-1) + y - v, found by Newton from y = v.  F is convex
    and increasing there, so the iteration is monotone and safe.  The
    stationary point is then kept only if it beats 0 on the subproblem
    objective, which also resolves exact ties in favor of 0.
    """
    tau = lp_threshold(rho, p)
    out = np.zeros_like(v)
    mask = v > tau
    if not np.any(mask):
        return out
    vm = v[mask]
    y = vm.copy()
    for _ in range(_NEWTON_ITERS):
        grad = rho * p * y ** (p - 1.0) + y - vm
        curv = 1.0 + rho * p * (p - 1.0) * y ** (p - 2.0)
        step = grad / curv
        y_next = y - step
        if np.all(np.abs(step) <= 1e-15 * np.maximum(1.0, y)):
            y = y_next
            break
        y = y_next
    # keep the nonzero candidate only if it strictly beats y = 0
    obj_nonzero = y ** p + (y - vm) ** 2 / (2.0 * rho)
    obj_zero = vm ** 2 / (2.0 * rho)
    y = np.where(obj_nonzero < obj_zero, y, 0.0)
    out[mask] = y
    return out


def prox_lp(x: np.ndarray, rho: float, p: float) -> np.ndarray:
    """Elementwise prox of |.|^p with parameter rho (0 < p <= 1)."""
    _check_rho(rho)
    _check_p(p)
    x = np.asarray(x, dtype=np.float64)
    if p == 1.0:
        return soft_threshold(x, rho)
    mag = _prox_lp_magnitude(np.abs(x), rho, p)
    return np.sign(x) * mag


def prox_lp_scalar(x: float, rho: float, p: float) -> float:
    """Scalar convenience wrapper around prox_lp."""
    return float(prox_lp(np.array([x]), rho, p)[0])


def soft_threshold(x: np.ndarray, t: float) -> np.ndarray:
    """Shrink toward zero by t, the prox of t * |.| at parameter 1."""
    x = np.asarray(x, dtype=np.float64)
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


def project_box(x: np.ndarray, lo: float = 0.0, hi: float = 1.0) -> np.ndarray:
    """Euclidean projection onto the box [lo, hi]."""
    if lo > hi:
        raise DomainError("empty box: lo=%g > hi=%g" % (lo, hi))
    return np.clip(np.asarray(x, dtype=np.float64), lo, hi)


def subgrad_at_prox(x: np.ndarray, rho: float, u: np.ndarray) -> np.ndarray:
    """The subgradient certificate (x - u) / rho at u = prox_{rho g}(x).

    Optimality of the prox subproblem puts this vector in the
    subdifferential of g at u, whatever g was.
    """
    _check_rho(rho)
    x = np.asarray(x, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    if x.shape != u.shape:
        raise DimensionError("subgrad_at_prox: shapes %s and %s differ" % (x.shape, u.shape))
    return (x - u) / rho


class ProxFn:
    """A proper nonsmooth term with value and proximal map."""

    def value(self, x: np.ndarray) -> float:
        raise NotImplementedError

    def prox(self, x: np.ndarray, rho: float) -> np.ndarray:
        raise NotImplementedError


class LpPower(ProxFn):
    """g(x) = sum_i |x_i|^p for 0 < p <= 1."""

    def __init__(self, p: float):
        _check_p(p)
        self.p = float(p)

    def value(self, x: np.ndarray) -> float:
        return float(np.sum(np.abs(x) ** self.p))

    def prox(self, x: np.ndarray, rho: float) -> np.ndarray:
        return prox_lp(x, rho, self.p)


class BoxIndicator(ProxFn):
    """Indicator of the box [lo, hi]; prox is the projection.

    Membership is tested with a small absolute slack so that points
    produced by the projection itself always evaluate to 0.
    """

    def __init__(self, lo: float = 0.0, hi: float = 1.0, slack: float = 1e-12):
        if lo > hi:
            raise DomainError("empty box: lo=%g > hi=%g" % (lo, hi))
        self.lo = float(lo)
        self.hi = float(hi)
        self.slack = float(slack)

    def value(self, x: np.ndarray) -> float:
        x = np.asarray(x, dtype=np.float64)
        if np.all(x >= self.lo - self.slack) and np.all(x <= self.hi + self.slack):
            return 0.0
        return float("inf")

    def prox(self, x: np.ndarray, rho: float) -> np.ndarray:
        _check_rho(rho)
        return project_box(x, self.lo, self.hi)


class ZeroFn(ProxFn):
    """g identically zero; prox is the identity.  Used by toy problems."""

    def value(self, x: np.ndarray) -> float:
        return 0.0

    def prox(self, x: np.ndarray, rho: float) -> np.ndarray:
        _check_rho(rho)
        return np.asarray(x, dtype=np.float64).copy()
