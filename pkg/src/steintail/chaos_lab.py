"""Finite Wiener-chaos calculus over a d-dimensional standard Gaussian.

A random variable is a finite Hermite expansion

    X(w) = sum_alpha c_alpha prod_i He_{alpha_i}(w_i),

with He_n the probabilists' Hermite polynomials. In these coordinates the
Malliavin derivative, the inverse Ornstein-Uhlenbeck operator and the product
of two expansions are all exact coefficient manipulations, so G = <DX, -DL^{-1}X>
is available as a polynomial rather than a sample average.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Callable, Mapping

import numpy as np
from scipy.special import roots_legendre

from .estimators import ConditionalGEstimator
from .stats import empirical_cdf_band, rng_for
from .tail_engine import Tabulated, TailReport


class CertificationError(ValueError):
    """No pointwise bound on |DX| could be certified."""


def _as_alpha(a, dim: int) -> tuple:
    alpha = tuple(int(v) for v in a)
    if len(alpha) != dim:
        raise ValueError(f"multi-index {alpha} does not have length {dim}")
    if any(v < 0 for v in alpha):
        raise ValueError(f"negative entry in multi-index {alpha}")
    return alpha


@dataclass(frozen=True)
class ChaosRV:
    """Immutable finite Hermite expansion; zero coefficients are dropped."""

    dim: int
    terms: Mapping = field(default_factory=dict)

    def __post_init__(self):
        if int(self.dim) < 1:
            raise ValueError("dim must be positive")
        clean = {}
        for a, c in dict(self.terms).items():
            alpha = _as_alpha(a, self.dim)
            c = float(c)
            if not math.isfinite(c):
                raise ValueError("coefficients must be finite")
            clean[alpha] = clean.get(alpha, 0.0) + c
        clean = {a: c for a, c in sorted(clean.items()) if c != 0.0}
        object.__setattr__(self, "dim", int(self.dim))
        object.__setattr__(self, "terms", MappingProxyType(clean))

    # construction helpers
    @classmethod
    def constant(cls, dim: int, c: float) -> "ChaosRV":
        return cls(dim, {(0,) * dim: c})

    @classmethod
    def hermite(cls, dim: int, alpha, coeff: float = 1.0) -> "ChaosRV":
        return cls(dim, {tuple(alpha): coeff})

    @classmethod
    def coordinate(cls, dim: int, i: int, degree: int = 1) -> "ChaosRV":
        alpha = [0] * dim
        alpha[i] = degree
        return cls(dim, {tuple(alpha): 1.0})

    @property
    def degree(self) -> int:
        return max((sum(a) for a in self.terms), default=0)

    @property
    def mean(self) -> float:
        return self.terms.get((0,) * self.dim, 0.0)

    @property
    def is_centered(self) -> bool:
        return self.mean == 0.0

    def orders(self) -> set:
        return {sum(a) for a in self.terms}

    def _check(self, other: "ChaosRV"):
        if not isinstance(other, ChaosRV):
            raise TypeError("expected a ChaosRV")
        if other.dim != self.dim:
            raise ValueError(f"dimension mismatch: {self.dim} vs {other.dim}")

    def add(self, other: "ChaosRV") -> "ChaosRV":
        self._check(other)
        out = dict(self.terms)
        for a, c in other.terms.items():
            out[a] = out.get(a, 0.0) + c
        return ChaosRV(self.dim, out)

    def scale(self, s: float) -> "ChaosRV":
        return ChaosRV(self.dim, {a: s * c for a, c in self.terms.items()})

    def mul(self, other: "ChaosRV") -> "ChaosRV":
        """Exact product, re-expanded in the Hermite basis."""
        self._check(other)
        out: dict = {}
        for a, ca in self.terms.items():
            for b, cb in other.terms.items():
                factors = [_linearize(m, n) for m, n in zip(a, b)]
                for combo in itertools.product(*factors):
                    weight = 1
                    for _, w in combo:
                        weight *= w
                    gamma = tuple(d for d, _ in combo)
                    out[gamma] = out.get(gamma, 0.0) + ca * cb * float(weight)
        return ChaosRV(self.dim, out)

    __add__ = add
    __mul__ = mul

    def __sub__(self, other):
        return self.add(other.scale(-1.0))

    def __call__(self, w):
        return eval_chaos(self, w)

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "terms": [{"alpha": list(a), "coeff": c} for a, c in self.terms.items()],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "ChaosRV":
        return cls(int(d["dim"]), {tuple(t["alpha"]): t["coeff"] for t in d["terms"]})


def _linearize(m: int, n: int) -> list:
    """He_m He_n = sum_k C(m,k) C(n,k) k! He_{m+n-2k}, integer weights."""
    return [
        (m + n - 2 * k, math.comb(m, k) * math.comb(n, k) * math.factorial(k))
        for k in range(min(m, n) + 1)
    ]


def hermite_table(x, degree: int) -> np.ndarray:
    """He_0..He_degree at x, stacked on a new leading axis."""
    x = np.asarray(x, dtype=float)
    out = np.empty((degree + 1,) + x.shape)
    out[0] = 1.0
    if degree >= 1:
        out[1] = x
    for n in range(1, degree):
        out[n + 1] = x * out[n] - n * out[n - 1]
    return out


def eval_chaos(rv: ChaosRV, w) -> np.ndarray:
    """Evaluate at points ``w`` of shape (d,) or (n, d)."""
    w = np.asarray(w, dtype=float)
    if w.shape[-1:] != (rv.dim,):
        raise ValueError(f"points have trailing dimension {w.shape[-1:]} but rv.dim = {rv.dim}")
    if not rv.terms:
        return np.zeros(w.shape[:-1])
    degs = [max(a[i] for a in rv.terms) for i in range(rv.dim)]
    tables = [hermite_table(w[..., i], degs[i]) for i in range(rv.dim)]
    total = np.zeros(w.shape[:-1])
    for a, c in rv.terms.items():
        term = np.full(w.shape[:-1], c)
        for i, k in enumerate(a):
            if k:
                term = term * tables[i][k]
        total = total + term
    return total


def _alpha_factorial(alpha) -> int:
    out = 1
    for k in alpha:
        out *= math.factorial(k)
    return out


def chaos_moments(rv: ChaosRV) -> tuple[float, float]:
    """Exact (mean, variance) by orthogonality of the Hermite system."""
    zero = (0,) * rv.dim
    var = sum(c * c * _alpha_factorial(a) for a, c in rv.terms.items() if a != zero)
    return rv.mean, float(var)


def chaos_inner(x: ChaosRV, y: ChaosRV) -> float:
    """E[XY] computed from coefficients."""
    x._check(y)
    return float(sum(c * y.terms.get(a, 0.0) * _alpha_factorial(a) for a, c in x.terms.items()))


@dataclass(frozen=True)
class HVector:
    """Element of H = R^d; components are numbers or ChaosRVs."""

    components: tuple

    @property
    def dim(self) -> int:
        return len(self.components)

    @property
    def is_random(self) -> bool:
        return any(isinstance(c, ChaosRV) for c in self.components)

    def evaluate(self, w) -> np.ndarray:
        """Components at points ``w``; shape (..., d)."""
        w = np.asarray(w, dtype=float)
        cols = []
        for c in self.components:
            if isinstance(c, ChaosRV):
                cols.append(eval_chaos(c, w))
            else:
                cols.append(np.full(w.shape[:-1], float(c)))
        return np.stack(cols, axis=-1)

    def inner(self, other: "HVector") -> ChaosRV:
        if other.dim != self.dim:
            raise ValueError("HVector dimension mismatch")
        d = self.components[0].dim
        total = ChaosRV(d, {})
        for a, b in zip(self.components, other.components):
            total = total.add(a.mul(b))
        return total


def malliavin_derivative(rv: ChaosRV) -> HVector:
    comps = []
    for i in range(rv.dim):
        out = {}
        for a, c in rv.terms.items():
            if a[i]:
                b = a[:i] + (a[i] - 1,) + a[i + 1 :]
                out[b] = out.get(b, 0.0) + c * a[i]
        comps.append(ChaosRV(rv.dim, out))
    return HVector(tuple(comps))


def _require_centered(rv: ChaosRV):
    if not rv.is_centered:
        raise ValueError("random variable must be centred (zero constant coefficient)")


def inverse_OU(rv: ChaosRV) -> ChaosRV:
    """-L^{-1} X: the coefficient of order n is divided by n."""
    _require_centered(rv)
    return ChaosRV(rv.dim, {a: c / sum(a) for a, c in rv.terms.items()})


def gamma_G(rv: ChaosRV) -> ChaosRV:
    """G = <DX, -DL^{-1}X> as an exact expansion."""
    _require_centered(rv)
    return malliavin_derivative(rv).inner(malliavin_derivative(inverse_OU(rv)))


def norm_DX_squared(rv: ChaosRV) -> ChaosRV:
    dx = malliavin_derivative(rv)
    return dx.inner(dx)


def sample_w(dim: int, n: int, rng: np.random.Generator) -> np.ndarray:
    return rng.standard_normal((n, dim))


def sampler(rv: ChaosRV) -> Callable[[np.random.Generator, int], np.ndarray]:
    """``(rng, n) -> n draws of X``, usable with ``tail_identity_mc``."""

    def draw(rng, n):
        return eval_chaos(rv, sample_w(rv.dim, n, rng))

    return draw


# --------------------------------------------------------------------------
# Monte Carlo verifications


@dataclass(frozen=True)
class ChaosCheck:
    lhs: float
    rhs: float
    se: float
    n: int
    seed: int
    exact_lhs: float | None = None
    exact_rhs: float | None = None

    @property
    def passed(self) -> bool:
        ok = abs(self.lhs - self.rhs) <= 4.0 * self.se
        if self.exact_lhs is not None and self.exact_rhs is not None:
            scale = max(1.0, abs(self.exact_lhs))
            ok = ok and abs(self.exact_lhs - self.exact_rhs) <= 1e-12 * scale
        return ok

    def to_dict(self) -> dict:
        return {
            "lhs": self.lhs,
            "rhs": self.rhs,
            "se": self.se,
            "n": self.n,
            "seed": self.seed,
            "exact_lhs": self.exact_lhs,
            "exact_rhs": self.exact_rhs,
            "passed": self.passed,
        }


def _paired(a: np.ndarray, b: np.ndarray, n: int, seed: int, **exact) -> ChaosCheck:
    diff = a - b
    se = float(diff.std(ddof=1) / math.sqrt(n))
    return ChaosCheck(float(a.mean()), float(b.mean()), se, int(n), int(seed), **exact)


# test functions with bounded derivative, given as (h, h')
TEST_FUNCTIONS = {
    "identity": (lambda x: x, lambda x: np.ones_like(x)),
    "tanh": (np.tanh, lambda x: 1.0 / np.cosh(np.clip(x, -350, 350)) ** 2),
    "sin": (np.sin, np.cos),
}

_GUARD_PROBES = np.concatenate([-np.logspace(-2, 8, 41)[::-1], [0.0], np.logspace(-2, 8, 41)])


def _resolve_h(h):
    if isinstance(h, str):
        if h not in TEST_FUNCTIONS:
            raise ValueError(f"unknown test function {h!r}")
        return TEST_FUNCTIONS[h]
    if isinstance(h, tuple) and len(h) == 2:
        return h
    raise TypeError("h must be a name or a (h, h_prime) pair")


def verify_lemkey(rv: ChaosRV, h, n: int, seed: int) -> ChaosCheck:
    """Check E[X h(X)] = E[h'(X) G] by Monte Carlo.

    ``h`` is a name from ``TEST_FUNCTIONS`` or a pair ``(h, h_prime)``. A
    derivative exceeding 1e6 in absolute value on probes up to |x| = 1e8 is
    treated as unbounded and rejected. For ``h = identity`` the identity is
    also checked exactly: Var[X] against E[G].
    """
    _require_centered(rv)
    if n < 100_000:
        raise ValueError("verify_lemkey needs n >= 1e5")
    fn, dfn = _resolve_h(h)
    with np.errstate(over="ignore", invalid="ignore"):
        probe = np.abs(np.asarray(dfn(_GUARD_PROBES), dtype=float))
    if not np.all(np.isfinite(probe)) or probe.max() > 1e6:
        raise ValueError("h' appears unbounded; the identity needs a bounded derivative")
    G = gamma_G(rv)
    w = sample_w(rv.dim, n, rng_for(seed, "lemkey"))
    x = eval_chaos(rv, w)
    exact = {}
    if h == "identity":
        exact = {"exact_lhs": chaos_moments(rv)[1], "exact_rhs": G.mean}
    return _paired(x * fn(x), dfn(x) * eval_chaos(G, w), n, seed, **exact)


def verify_lemsko(fn_rv: ChaosRV, Y: ChaosRV, n_mc: int, seed: int) -> ChaosCheck:
    """Check E[I_n(f_n) Y] = (1/n) E[<D I_n(f_n), DY>] for a pure n-th chaos."""
    orders = fn_rv.orders()
    if len(orders) != 1 or 0 in orders:
        raise ValueError("fn_rv must be homogeneous of a single chaos order n >= 1")
    fn_rv._check(Y)
    order = orders.pop()
    cross = malliavin_derivative(fn_rv).inner(malliavin_derivative(Y)).scale(1.0 / order)
    w = sample_w(fn_rv.dim, n_mc, rng_for(seed, "lemsko"))
    lhs = eval_chaos(fn_rv, w) * eval_chaos(Y, w)
    rhs = eval_chaos(cross, w)
    return _paired(lhs, rhs, n_mc, seed, exact_lhs=chaos_inner(fn_rv, Y), exact_rhs=cross.mean)


def _half_interval_rule(theta_nodes: int):
    """Gauss-Legendre nodes/weights on [-pi/2, 0] and [0, pi/2]."""
    if theta_nodes < 2 or theta_nodes % 2:
        raise ValueError("theta_nodes must be an even integer")
    x, wt = roots_legendre(theta_nodes // 2)
    pos = (x + 1.0) * math.pi / 4.0
    wpos = wt * math.pi / 4.0
    return np.concatenate([-pos[::-1], pos]), np.concatenate([wpos[::-1], wpos])


def quadrature_identity(n: int, theta_nodes: int = 32) -> float:
    """(1/2) int_{-pi/2}^{pi/2} sgn(theta) sin(theta) cos(theta)^n d theta."""
    th, wt = _half_interval_rule(theta_nodes)
    return float(0.5 * np.sum(wt * np.sign(th) * np.sin(th) * np.cos(th) ** n))


@dataclass(frozen=True)
class MehlerEstimate:
    w: tuple
    estimate: tuple
    se: tuple
    exact: tuple
    theta_nodes: int
    n_mc: int

    @property
    def passed(self) -> bool:
        # Gauss-Legendre is exact for the polynomial integrands up to high degree
        return all(
            abs(e - x) <= 4.0 * s + 1e-10 for e, s, x in zip(self.estimate, self.se, self.exact)
        )


def mehler_minus_DL_inv(
    rv: ChaosRV, theta_nodes: int, n_mc: int, seed: int, w=None
) -> MehlerEstimate:
    """Estimate -D L^{-1} X at the point ``w`` through the rotation formula.

    The integrand is (1/2) sgn(theta) sin(theta) E'[(dX/dw_i)(w cos + w' sin)],
    with E' averaged over ``n_mc`` draws of w' and theta integrated by
    Gauss-Legendre on each half-interval. Standard errors come from the
    spread over w' of the per-draw quadrature sums.
    """
    _require_centered(rv)
    if theta_nodes < 16:
        raise ValueError("theta_nodes must be at least 16")
    if n_mc < 2:
        raise ValueError("n_mc must be at least 2")
    w = np.zeros(rv.dim) if w is None else np.asarray(w, dtype=float)
    if w.shape != (rv.dim,):
        raise ValueError("w must have length rv.dim")
    th, wt = _half_interval_rule(theta_nodes)
    wp = sample_w(rv.dim, n_mc, rng_for(seed, "mehler"))
    grad = malliavin_derivative(rv)
    acc = np.zeros((n_mc, rv.dim))
    for theta, weight in zip(th, wt):
        pts = w[None, :] * math.cos(theta) + wp * math.sin(theta)
        acc += 0.5 * weight * abs(math.sin(theta)) * grad.evaluate(pts)
    est = acc.mean(axis=0)
    se = acc.std(axis=0, ddof=1) / math.sqrt(n_mc)
    exact = malliavin_derivative(inverse_OU(rv)).evaluate(w)
    return MehlerEstimate(
        w=tuple(float(v) for v in w),
        estimate=tuple(float(v) for v in est),
        se=tuple(float(v) for v in se),
        exact=tuple(float(v) for v in exact),
        theta_nodes=int(theta_nodes),
        n_mc=int(n_mc),
    )


def estimate_g(rv: ChaosRV, n: int, bins: int, seed: int) -> Tabulated:
    """Tabulated estimate of g(z) = E[G | X = z] by equal-count binning."""
    _require_centered(rv)
    if n < 10_000:
        raise ValueError("estimate_g needs n >= 1e4")
    if bins < 10:
        raise ValueError("estimate_g needs at least 10 bins")
    w = sample_w(rv.dim, n, rng_for(seed, "estimate_g"))
    x = eval_chaos(rv, w)
    if np.ptp(x) == 0.0:
        raise ValueError("degenerate X: constant on all samples")
    g = eval_chaos(gamma_G(rv), w)
    return ConditionalGEstimator(n_bins=bins).fit(x, g).to_spec()


def certify_sigma(rv: ChaosRV) -> float:
    """Pointwise bound on |DX|.

    |DX|^2 is a polynomial in w, and a non-constant polynomial is unbounded
    on R^d, so a finite bound exists exactly when |DX|^2 is constant.
    """
    nd = norm_DX_squared(rv)
    if nd.degree > 0:
        raise CertificationError("|DX|^2 is a non-constant polynomial, hence unbounded")
    return math.sqrt(max(nd.mean, 0.0))


def subgaussian_check(rv: ChaosRV, u_grid, n_mc: int, seed: int, level: float = 0.99) -> TailReport:
    """Empirical P[|X - EX| > u] against 2 exp(-u^2 / (2 sigma^2)).

    A violation is recorded when the lower DKW band edge exceeds the bound.
    The report's density column is not estimated and holds NaN.
    """
    sigma = certify_sigma(rv)
    if sigma == 0.0:
        raise CertificationError("X is constant; nothing to check")
    u = np.asarray(u_grid, dtype=float)
    x = eval_chaos(rv, sample_w(rv.dim, n_mc, rng_for(seed, "subgauss")))
    ecdf, band = empirical_cdf_band(np.abs(x - rv.mean), level)
    tail = ecdf.survival(u)
    bound = np.minimum(1.0, 2.0 * np.exp(-(u**2) / (2.0 * sigma**2)))
    lo = np.clip(tail - band.halfwidth, 0.0, 1.0)
    hi = np.clip(tail + band.halfwidth, 0.0, 1.0)
    violations = [("subgaussian", float(a)) for a, l, b in zip(u, lo, bound) if l > b]
    return TailReport(
        abscissae=[float(a) for a in u],
        tail=[float(v) for v in tail],
        density=[math.nan] * u.size,
        bound_envelopes={
            "subgaussian": [float(v) for v in bound],
            "dkw_lo": [float(v) for v in lo],
            "dkw_hi": [float(v) for v in hi],
        },
        violations=violations,
        meta={"sigma": sigma, "n_mc": int(n_mc), "seed": int(seed), "level": level},
    )
