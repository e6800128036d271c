"""Gaussian tail utilities and the explicit solution of Stein's equation for
the indicator test function ``h = 1_{(-inf, z]}``.

All products of the form ``exp(x**2/2) * tail(x)`` are evaluated through the
scaled complementary error function, so nothing overflows for ``|x|`` up to
the double-precision limit of the tail itself.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np
from scipy.special import erfcx, log_ndtr, ndtr

from .stats import rng_for

SQRT_2PI = math.sqrt(2.0 * math.pi)
_INV_SQRT2 = 1.0 / math.sqrt(2.0)


@dataclass(frozen=True)
class SteinThreshold:
    z: float

    def __post_init__(self):
        if not math.isfinite(self.z):
            raise ValueError(f"threshold must be finite, got {self.z}")


@dataclass(frozen=True)
class MillsBracket:
    lower: float
    upper: float


def _threshold(z) -> float:
    return z.z if isinstance(z, SteinThreshold) else SteinThreshold(float(z)).z


def normal_tail(u):
    """Standard normal tail probability P[Z > u]."""
    return ndtr(-np.asarray(u, dtype=float))


def normal_density(x):
    x = np.asarray(x, dtype=float)
    return np.exp(-0.5 * x * x) / SQRT_2PI


def log_scaled_tail(x):
    """log(exp(x**2/2) * P[Z > x]), accurate on the whole real line."""
    x = np.asarray(x, dtype=float)
    pos = np.log(0.5 * erfcx(np.abs(x) * _INV_SQRT2))
    # for x < 0 the tail is close to one and the Gaussian factor dominates
    neg = 0.5 * x * x + log_ndtr(x * -1.0)
    return np.where(x >= 0, pos, neg)


def scaled_tail(x):
    """exp(x**2/2) * P[Z > x] (the Mills ratio times the density constant)."""
    return np.exp(log_scaled_tail(x))


def mills_bounds(x: float) -> MillsBracket:
    x = float(x)
    if not x > 0:
        raise ValueError(f"mills_bounds needs x > 0, got {x}")
    dens = math.exp(-0.5 * x * x) / SQRT_2PI
    return MillsBracket(lower=x * dens / (x * x + 1.0), upper=dens / x)


def stein_solution(z, x):
    """Solution f of f'(x) - x f(x) = 1{x <= z} - P[Z <= z].

    Vectorised in ``x``.
    """
    zz = _threshold(z)
    x = np.asarray(x, dtype=float)
    left = x <= zz
    log_f = np.empty_like(x)
    log_f[left] = log_scaled_tail(-x[left]) + log_ndtr(-zz)
    log_f[~left] = log_scaled_tail(x[~left]) + log_ndtr(zz)
    return SQRT_2PI * np.exp(log_f)


def _derivative(zz: float, x: np.ndarray, left: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    xl, xr = x[left], x[~left]
    out[left] = normal_tail(zz) * (1.0 + SQRT_2PI * xl * scaled_tail(-xl))
    out[~left] = ndtr(zz) * (-1.0 + SQRT_2PI * xr * scaled_tail(xr))
    return out


def stein_derivative_left(z, x):
    """Left derivative of the Stein solution; equals f' off the jump at x = z."""
    zz = _threshold(z)
    x = np.asarray(x, dtype=float)
    return _derivative(zz, x, x <= zz)


def stein_derivative_right(z, x):
    """Right derivative of the Stein solution; equals f' off the jump at x = z."""
    zz = _threshold(z)
    x = np.asarray(x, dtype=float)
    return _derivative(zz, x, x < zz)


def stein_derivative(z, x):
    """Derivative f' of the Stein solution. Undefined (ValueError) at x = z."""
    zz = _threshold(z)
    x = np.asarray(x, dtype=float)
    if np.any(x == zz):
        raise ValueError(f"f' jumps at x = z = {zz}; use the one-sided variants")
    return stein_derivative_left(zz, x)


def stein_residual(z, x):
    """Left side minus right side of Stein's equation at x (should vanish)."""
    zz = _threshold(z)
    x = np.asarray(x, dtype=float)
    if np.any(x == zz):
        raise ValueError(f"residual undefined at the jump x = z = {zz}")
    lhs = (x <= zz).astype(float) - ndtr(zz)
    return lhs - (stein_derivative_left(zz, x) - x * stein_solution(zz, x))


@dataclass(frozen=True)
class TailIdentityResult:
    z: float
    lhs: float
    rhs: float
    se: float
    n: int
    seed: int

    @property
    def discrepancy(self) -> float:
        return abs(self.lhs - self.rhs)

    @property
    def passed(self) -> bool:
        return self.discrepancy <= 4.0 * self.se

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def tail_identity_mc(
    sampler: Callable[[np.random.Generator, int], np.ndarray],
    z: float,
    n: int,
    seed: int,
) -> TailIdentityResult:
    """Monte Carlo check of P[X > z] = tail(z) - E f'(X) + E X f(X).

    ``sampler(rng, n)`` must return ``n`` draws of X. The reported standard
    error is the larger of the standard errors of the two sides.
    """
    if n < 1000:
        raise ValueError("tail_identity_mc needs n >= 1000")
    zz = _threshold(z)
    xs = np.asarray(sampler(rng_for(seed, "tail_identity"), n), dtype=float).ravel()
    if xs.size != n:
        raise ValueError(f"sampler returned {xs.size} values, expected {n}")
    if not np.all(np.isfinite(xs)):
        raise ValueError("sampler returned non-finite values")
    if np.ptp(xs) == 0.0:
        raise ValueError("degenerate sampler: zero variance")

    exceed = (xs > zz).astype(float)
    # at x == z the equation holds with the left derivative
    rhs_terms = normal_tail(zz) - stein_derivative_left(zz, xs) + xs * stein_solution(zz, xs)
    se = max(exceed.std(ddof=1), rhs_terms.std(ddof=1)) / math.sqrt(n)
    return TailIdentityResult(
        z=zz,
        lhs=float(exceed.mean()),
        rhs=float(rhs_terms.mean()),
        se=float(se),
        n=int(n),
        seed=int(seed),
    )
