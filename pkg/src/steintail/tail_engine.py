"""Densities, tails and tail bounds reconstructed from g(z) = E[G | X = z].

Given g, the density of a centred X is

    rho(z) = E|X| / (2 g(z)) * exp(-int_0^z y / g(y) dy)

and with A(x) = exp(-int_0^x y / g(y) dy) the tail is the integral of rho,
S(x) = (E|X| / 2) * int_x^inf A(y) / g(y) dy.  All integrals are computed by
adaptive quadrature; the primitive of y/g is cached on a checkpoint grid so
the nested integral behind S stays cheap.
"""

from __future__ import annotations

import bisect
import csv
import io
import json
import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from typing import ClassVar

import numpy as np
from scipy.integrate import quad

from .gaussian_stein import SQRT_2PI, normal_tail

DEFAULT_TOL = 1e-10


class SingularGError(ValueError):
    """g vanishes (or is negative) where the construction needs g > 0."""


class NonIntegrableError(ValueError):
    """The tail integral could not be truncated within the search range."""


class SupportError(ValueError):
    """Evaluation point outside the interior of the support of X."""


# --------------------------------------------------------------------------
# g specifications


@dataclass(frozen=True)
class GFunctionSpec:
    """Base class; subclasses are immutable, hashable and vectorised."""

    form: ClassVar[str] = ""

    @property
    def support_left(self) -> float:
        return -math.inf

    def breakpoints(self) -> tuple:
        return ()

    def __call__(self, y):
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError

    @staticmethod
    def from_dict(d: dict) -> "GFunctionSpec":
        d = dict(d)
        form = d.pop("form")
        cls = _FORMS.get(form)
        if cls is None:
            raise ValueError(f"unknown g form {form!r}")
        return cls._from_fields(d)

    @classmethod
    def _from_fields(cls, d):
        return cls(**d)


@dataclass(frozen=True)
class Constant(GFunctionSpec):
    c: float
    form: ClassVar[str] = "constant"

    def __post_init__(self):
        if self.c < 0:
            raise ValueError("constant g must be non-negative")

    def __call__(self, y):
        return np.full_like(np.asarray(y, dtype=float), float(self.c))

    def to_dict(self):
        return {"form": self.form, "c": self.c}


@dataclass(frozen=True)
class Affine(GFunctionSpec):
    """g(y) = alpha + beta * y, restricted to the half-line where it is positive."""

    alpha: float
    beta: float
    form: ClassVar[str] = "affine"

    @property
    def support_left(self):
        if self.beta > 0:
            return -self.alpha / self.beta
        return -math.inf

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        return self.alpha + self.beta * y

    def to_dict(self):
        return {"form": self.form, "alpha": self.alpha, "beta": self.beta}


@dataclass(frozen=True)
class Quadratic(GFunctionSpec):
    """g(y) = c * y**2 (vanishes at the origin, so A is not defined from 0)."""

    c: float
    form: ClassVar[str] = "quadratic"

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        return self.c * y * y

    def to_dict(self):
        return {"form": self.form, "c": self.c}


def _interp_const(grid, values, y):
    return np.interp(y, grid, values, left=values[0], right=values[-1])


@dataclass(frozen=True)
class Power(GFunctionSpec):
    """g(y) = c1 * y**p for y >= z0, tabulated prefix (linear) below z0.

    Without a prefix table the constant c1 * z0**p is used below z0.
    """

    c1: float
    p: float
    z0: float
    prefix_grid: tuple = ()
    prefix_values: tuple = ()
    form: ClassVar[str] = "power"

    def __post_init__(self):
        if self.z0 <= 0 or self.c1 <= 0:
            raise ValueError("power g needs z0 > 0 and c1 > 0")
        object.__setattr__(self, "prefix_grid", tuple(float(v) for v in self.prefix_grid))
        object.__setattr__(self, "prefix_values", tuple(float(v) for v in self.prefix_values))
        if len(self.prefix_grid) != len(self.prefix_values):
            raise ValueError("prefix grid and values differ in length")
        if any(v < 0 for v in self.prefix_values):
            raise ValueError("g values must be non-negative")

    def breakpoints(self):
        return tuple(self.prefix_grid) + (self.z0,)

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        tail = self.c1 * np.abs(y) ** self.p
        if self.prefix_grid:
            head = _interp_const(self.prefix_grid, self.prefix_values, y)
        else:
            head = np.full_like(y, self.c1 * self.z0**self.p)
        return np.where(y >= self.z0, tail, head)

    def to_dict(self):
        return {
            "form": self.form,
            "c1": self.c1,
            "p": self.p,
            "z0": self.z0,
            "prefix_grid": list(self.prefix_grid),
            "prefix_values": list(self.prefix_values),
        }


@dataclass(frozen=True)
class Tabulated(GFunctionSpec):
    """Linear interpolation of tabulated values, constant beyond the grid.

    Evaluating outside the grid emits a one-time ``UserWarning``.
    """

    grid: tuple
    values: tuple
    se: tuple = ()
    left: float = -math.inf
    form: ClassVar[str] = "tabulated"
    _warned: list = field(default_factory=list, compare=False, hash=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "grid", tuple(float(v) for v in self.grid))
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        object.__setattr__(self, "se", tuple(float(v) for v in self.se))
        g = np.asarray(self.grid)
        if g.size < 2 or len(self.values) != g.size:
            raise ValueError("tabulated g needs matching grid/values of length >= 2")
        if np.any(np.diff(g) <= 0):
            raise ValueError("tabulated grid must be strictly increasing")
        if min(self.values) < 0:
            raise ValueError("g values must be non-negative")

    @property
    def support_left(self):
        return self.left

    def breakpoints(self):
        return self.grid

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        if not self._warned and (np.any(y < self.grid[0]) or np.any(y > self.grid[-1])):
            self._warned.append(True)
            warnings.warn(
                "tabulated g evaluated outside its grid; extrapolating as a constant",
                stacklevel=2,
            )
        return _interp_const(self.grid, self.values, y)

    def to_dict(self):
        d = {"form": self.form, "grid": list(self.grid), "values": list(self.values)}
        if self.se:
            d["se"] = list(self.se)
        if math.isfinite(self.left):
            d["left"] = self.left
        return d


_FORMS = {cls.form: cls for cls in (Constant, Affine, Quadratic, Power, Tabulated)}


# --------------------------------------------------------------------------
# primitive of y / g(y) from 0


class _Primitive:
    """J(y) = int_0^y s / g(s) ds with cached values on a checkpoint grid."""

    step = 0.5

    def __init__(self, g: GFunctionSpec, tol: float):
        self.g = g
        self.tol = tol
        self.kinks = sorted(set(float(b) for b in g.breakpoints()))
        self.nodes = {1: [0.0], -1: [0.0]}
        self.vals = {1: [0.0], -1: [0.0]}

    def _check_positive(self, a, b):
        probe = np.linspace(a, b, 9)
        if np.any(self.g(probe) <= 0):
            bad = probe[np.argmax(self.g(probe) <= 0)]
            raise SingularGError(f"g is not positive at y = {bad:.6g}")

    def _integrand(self, s):
        gs = float(self.g(s))
        if not gs > 0:
            raise SingularGError(f"g is not positive at y = {s:.6g}")
        return s / gs

    def segment(self, a: float, b: float) -> float:
        if a == b:
            return 0.0
        self._check_positive(min(a, b), max(a, b))
        val, _ = quad(self._integrand, a, b, epsabs=self.tol * 1e-3, epsrel=1e-13, limit=200)
        return val

    def _next_node(self, last: float, sign: int) -> float:
        # fixed spacing near the origin, geometric further out
        nxt = last + sign * max(self.step, 0.25 * abs(last))
        for k in self.kinks:
            if sign * (k - last) > 0 and sign * (k - nxt) < 0:
                nxt = k if sign > 0 else max(nxt, k)
                if sign > 0:
                    break
        if sign < 0:
            inner = [k for k in self.kinks if last > k > nxt]
            if inner:
                nxt = max(inner)
        return nxt

    def __call__(self, y: float) -> float:
        y = float(y)
        sign = 1 if y >= 0 else -1
        nodes, vals = self.nodes[sign], self.vals[sign]
        while sign * nodes[-1] < sign * y:
            nxt = self._next_node(nodes[-1], sign)
            if nxt <= self.g.support_left:
                break
            vals.append(vals[-1] + self.segment(nodes[-1], nxt))
            nodes.append(nxt)
        key = [sign * v for v in nodes]
        k = bisect.bisect_right(key, sign * y) - 1
        return vals[k] + self.segment(nodes[k], y)

    def nodes_between(self, a: float, b: float) -> list:
        self(a)
        self(b)
        pts = set(self.nodes[1]) | set(self.nodes[-1])
        return sorted(p for p in pts if a < p < b)


@lru_cache(maxsize=64)
def _primitive(g: GFunctionSpec, tol: float) -> _Primitive:
    return _Primitive(g, tol)


def integral_A(g: GFunctionSpec, x: float, tol: float = DEFAULT_TOL) -> float:
    """A(x) = exp(-int_0^x y / g(y) dy) for x >= 0."""
    if x < 0:
        raise ValueError("integral_A is defined for x >= 0")
    return math.exp(-_primitive(g, tol)(x))


def _check_interior(g: GFunctionSpec, z: float):
    if not z > g.support_left:
        raise SupportError(f"z = {z} is not inside the support (left end {g.support_left})")


def density_from_g(g: GFunctionSpec, mean_abs: float, z: float, tol: float = DEFAULT_TOL) -> float:
    """(E|X| / (2 g(z))) exp(-int_0^z y / g(y) dy), evaluated pointwise.

    The density inherits the regularity of g, so a tabulated g gives a
    density with kinks at the grid points.
    """
    if mean_abs <= 0:
        raise ValueError("mean_abs must be positive")
    _check_interior(g, z)
    gz = float(g(z))
    if not gz > 0:
        raise SingularGError(f"g({z}) = {gz} is not positive")
    return mean_abs / (2.0 * gz) * math.exp(-_primitive(g, tol)(z))


def _tail_integrand(g, prim):
    def f(y):
        return math.exp(-prim(y)) / float(g(y))

    return f


def _truncation_point(g, mean_abs, x, tol, prim, cap=1e8):
    # int_Y^inf A/g = int_Y^inf (-A')/y <= A(Y)/Y for Y > 0
    width = 1.0
    start = max(x, 0.0)
    while True:
        Y = start + width
        if 0.5 * mean_abs * math.exp(-prim(Y)) / Y <= tol:
            return Y
        width *= 2.0
        if Y > cap:
            raise NonIntegrableError(
                f"A(y)/y did not fall below {tol:g} before y = {cap:g}; "
                "g grows too fast for a usable tail integral"
            )


def _integrate_pieces(f, pts, tol):
    total = 0.0
    for a, b in zip(pts[:-1], pts[1:]):
        val, _ = quad(f, a, b, epsabs=tol * 1e-3, epsrel=1e-12, limit=200)
        total += val
    return total


def tail_curve(g: GFunctionSpec, mean_abs: float, xs, tol: float = DEFAULT_TOL) -> np.ndarray:
    """S(x) = P[X > x] at every x in ``xs`` (one pass, shared truncation)."""
    if mean_abs <= 0:
        raise ValueError("mean_abs must be positive")
    xs = np.asarray(xs, dtype=float)
    flat = xs.ravel()
    if flat.size == 0:
        return xs.copy()
    for x in flat:
        _check_interior(g, float(x))
    prim = _primitive(g, tol)
    f = _tail_integrand(g, prim)
    order = np.argsort(flat)[::-1]
    top = float(flat[order[0]])
    Y = _truncation_point(g, mean_abs, top, tol, prim)

    out = np.empty_like(flat)
    acc = 0.0
    upper = Y
    for idx in order:
        lo = float(flat[idx])
        pts = [lo] + prim.nodes_between(lo, upper) + [upper]
        acc += _integrate_pieces(f, pts, tol)
        upper = lo
        out[idx] = 0.5 * mean_abs * acc
    return out.reshape(xs.shape)


def tail_from_g(g: GFunctionSpec, mean_abs: float, x: float, tol: float = DEFAULT_TOL) -> float:
    """P[X > x] from g; x may be any interior point of the support."""
    return float(tail_curve(g, mean_abs, [x], tol)[0])


def estimate_mean_abs(samples) -> tuple[float, float]:
    """Sample estimate of E|X| and its standard error."""
    a = np.abs(np.asarray(samples, dtype=float).ravel())
    if a.size < 2:
        raise ValueError("need at least two samples")
    return float(a.mean()), float(a.std(ddof=1) / math.sqrt(a.size))


# --------------------------------------------------------------------------
# named bounds


@dataclass(frozen=True)
class CorAPrefactor:
    K: float
    k_star: float
    max_ratio: float


def _check_cprime(c_prime):
    if not 0.0 < c_prime < 1.0:
        raise ValueError(f"c' must lie in (0, 1), got {c_prime}")


def cor_a_ratio(k, c_prime):
    """k -> (1 - k**(-1/c')) / k, maximised by the prefactor below."""
    k = np.asarray(k, dtype=float)
    return (1.0 - k ** (-1.0 / c_prime)) / k


def bound_corA_prefactor(c_prime: float, mean_abs: float) -> CorAPrefactor:
    _check_cprime(c_prime)
    if mean_abs <= 0:
        raise ValueError("mean_abs must be positive")
    ratio = c_prime**c_prime / (1.0 + c_prime) ** (1.0 + c_prime)
    return CorAPrefactor(
        K=0.5 * mean_abs * ratio,
        k_star=(1.0 + 1.0 / c_prime) ** c_prime,
        max_ratio=ratio,
    )


def _probe(a, b, n=400):
    return np.linspace(a, b, n)


def lower_bound_menu(
    g: GFunctionSpec,
    mean_abs: float,
    x: float,
    case: str,
    *,
    c_prime: float,
    z0: float,
    c2: float | None = None,
    c1: float | None = None,
    p: float | None = None,
    reverse: bool = False,
    tol: float = DEFAULT_TOL,
) -> float:
    """Tail bounds driven by growth comparisons of g.

    ``case`` is ``"gaussian"`` (g >= 1), ``"power"`` (g >= c2 y**2 beyond z0)
    or ``"stretched"`` (g >= c1 y**p beyond z0, p < 2). Every case also needs
    g <= c_prime y**2 beyond z0. With ``reverse=True`` the comparisons on g
    are reversed for the power and stretched cases and the returned value is
    an upper bound; its prefactor is E|X|/2, since the tail never exceeds
    (E|X|/2) A(x)/x.
    """
    if not x > z0:
        raise ValueError(f"bounds hold for x > z0 = {z0}, got x = {x}")
    pref = bound_corA_prefactor(c_prime, mean_abs)
    far = _probe(z0, pref.k_star * x)
    far = far[far > z0]
    gfar = g(far)
    atol = 1e-12
    if not reverse and np.any(gfar > c_prime * far**2 * (1 + atol)):
        raise ValueError("g exceeds c' y^2 beyond z0; the prefactor K does not apply")

    if case == "gaussian":
        if reverse:
            raise ValueError("the reversed comparison is defined for power/stretched only")
        if np.any(g(_probe(0.0, pref.k_star * x)) < 1.0 - atol):
            raise ValueError("gaussian case needs g >= 1")
        return pref.K * math.exp(-0.5 * x * x) / x

    const = 0.5 * mean_abs if reverse else pref.K
    span = _probe(z0, x)
    gspan = g(span)
    a_z0 = integral_A(g, z0, tol)
    if case == "power":
        if c2 is None or not 0.0 < c2:
            raise ValueError("power case needs c2 > 0")
        if not reverse and c2 > c_prime:
            raise ValueError("power case needs c2 <= c'")
        cmp = c2 * span**2
        bad = np.any(gspan > cmp * (1 + atol)) if reverse else np.any(gspan < cmp * (1 - atol))
        if bad:
            raise ValueError("g violates the power-case comparison on [z0, x]")
        return const * a_z0 * z0 ** (1.0 / c2) * x ** (-1.0 - 1.0 / c2)
    if case == "stretched":
        if c1 is None or p is None or not c1 > 0 or not p < 2:
            raise ValueError("stretched case needs c1 > 0 and p < 2")
        cmp = c1 * span**p
        bad = np.any(gspan > cmp * (1 + atol)) if reverse else np.any(gspan < cmp * (1 - atol))
        if bad:
            raise ValueError("g violates the stretched-case comparison on [z0, x]")
        scale = (2.0 - p) * c1
        return const * a_z0 * math.exp((z0 ** (2 - p) - x ** (2 - p)) / scale) / x
    raise ValueError(f"unknown case {case!r}")


def cor_a_lower_bound(g: GFunctionSpec, mean_abs: float, x: float, c_prime: float, tol=DEFAULT_TOL):
    """K A(x) / x, valid for x beyond the point where g <= c' y**2 starts."""
    return bound_corA_prefactor(c_prime, mean_abs).K * integral_A(g, x, tol) / x


def stein_lower_bound(z: float, c_prime: float) -> float:
    if not z > 0:
        raise ValueError("z must be positive")
    _check_cprime(c_prime)
    z2 = z * z
    return float((1.0 + z2) / (1.0 + (2.0 * c_prime + 1.0) * z2) * normal_tail(z))


def thm12_envelopes(z: float, c: float | None = None) -> dict:
    """Gaussian comparison envelopes for tails of X - E X at z > 0.

    ``upper_G`` applies when G <= 1, ``upper_DX`` when |DX| <= 1; with a finite
    moment of order ``c > 2`` and G >= 1, ``supergauss_ratio`` is the liminf
    guarantee on P[X - EX > z] / tail(z).
    """
    if not z > 0:
        raise ValueError("z must be positive")
    out = {
        "upper_G": float((1.0 + 1.0 / (z * z)) * normal_tail(z)),
        "upper_DX": math.exp(-0.5 * z * z),
    }
    if c is not None:
        if not c > 2:
            raise ValueError("moment order c must exceed 2")
        out["supergauss_ratio"] = (c - 2.0) / c
    return out


def K_u() -> float:
    """Universal lower constant for Var[X] under G >= 1 (about 0.21367)."""
    return (math.sqrt(1.0 + 2.0 * SQRT_2PI) - 1.0) ** 2 / math.pi**2


@dataclass(frozen=True)
class TailInequalityCheck:
    z: float
    lhs: float
    rhs: float
    truncated_integral: float
    remainder: float
    point2_bound: float | None = None

    @property
    def holds(self) -> bool:
        return self.lhs >= self.rhs


def tail_integral_inequality_check(xs, tail, z: float, c: float | None = None, remainder=None):
    """Evaluate S(z) >= tail(z) - (1/(1+z^2)) int_z^inf 2 x S(x) dx on a grid.

    The integral is computed by the trapezoid rule up to the last grid point
    z_max. Unless ``remainder`` is given, the part beyond z_max is bounded by
    2 S(z_max), which is exact when S decays like a Gaussian tail past z_max.
    With ``c > 2`` the companion bound ((c-2)(1+z^2)/(c-2+c z^2)) tail(z) is
    reported as well.
    """
    xs = np.asarray(xs, dtype=float)
    S = np.asarray(tail, dtype=float)
    if xs.shape != S.shape or xs.ndim != 1 or xs.size < 2:
        raise ValueError("xs and tail must be matching 1-d arrays")
    if np.any(np.diff(xs) <= 0):
        raise ValueError("grid must be increasing")
    if np.any(np.diff(S) > 1e-12):
        raise ValueError("empirical tail must be nonincreasing")
    if not xs[0] <= z <= xs[-1]:
        raise ValueError(f"grid [{xs[0]}, {xs[-1]}] does not cover z = {z}")
    Sz = float(np.interp(z, xs, S))
    keep = xs > z
    gx = np.concatenate([[z], xs[keep]])
    gs = np.concatenate([[Sz], S[keep]])
    integrand = 2.0 * gx * gs
    integral = float(np.sum(0.5 * (integrand[1:] + integrand[:-1]) * np.diff(gx)))
    rem = 2.0 * float(S[-1]) if remainder is None else float(remainder)
    rhs = float(normal_tail(z)) - (integral + rem) / (1.0 + z * z)
    p2 = None
    if c is not None:
        if not c > 2:
            raise ValueError("c must exceed 2")
        p2 = float((c - 2.0) * (1.0 + z * z) / (c - 2.0 + c * z * z) * normal_tail(z))
    return TailInequalityCheck(z, Sz, rhs, integral, rem, p2)


# --------------------------------------------------------------------------
# reports


@dataclass
class TailReport:
    abscissae: list
    tail: list
    density: list
    bound_envelopes: dict = field(default_factory=dict)
    violations: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        t = np.asarray(self.tail, dtype=float)
        if np.any(t < -1e-12) or np.any(t > 1 + 1e-12):
            raise ValueError("tail values must lie in [0, 1]")
        d = np.asarray(self.density, dtype=float)
        if np.any(d[np.isfinite(d)] < 0):
            raise ValueError("density must be non-negative")

    def violation_flags(self) -> list:
        bad = {x for _, x in self.violations}
        return [int(x in bad) for x in self.abscissae]

    def to_csv(self) -> str:
        names = sorted(self.bound_envelopes)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["x", "tail", "density", *names, "violation_flag"])
        flags = self.violation_flags()
        for i, x in enumerate(self.abscissae):
            row = [x, self.tail[i], self.density[i]]
            row += [self.bound_envelopes[n][i] for n in names]
            w.writerow([fmt(v) for v in row] + [flags[i]])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "abscissae": [float(v) for v in self.abscissae],
            "tail": [float(v) for v in self.tail],
            "density": [float(v) for v in self.density],
            "bound_envelopes": {k: [float(v) for v in vs] for k, vs in self.bound_envelopes.items()},
            "violations": [[n, float(x)] for n, x in self.violations],
            "meta": self.meta,
        }

    def to_json(self) -> str:
        return json.dumps(_json_safe(self.to_dict()), sort_keys=True, indent=1)


def fmt(v) -> str:
    """Deterministic text form of a number for CSV output."""
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    v = float(v)
    if math.isnan(v):
        return "nan"
    return repr(v)


def _json_safe(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    return obj


def build_tail_report(
    g: GFunctionSpec,
    mean_abs: float,
    xs,
    *,
    c_prime: float | None = None,
    z0: float | None = None,
    tol: float = DEFAULT_TOL,
) -> TailReport:
    """Tail, density and every applicable envelope on the grid ``xs``.

    Hypotheses are read off g on a probe grid: g >= 1 makes the lower
    envelopes binding, g <= 1 makes ``upper_G`` binding. Non-binding envelopes
    are still reported but never produce violations.
    """
    xs = np.asarray(xs, dtype=float)
    tail = tail_curve(g, mean_abs, xs, tol)
    dens = np.array([density_from_g(g, mean_abs, float(x), tol) for x in xs])
    probe = _probe(0.0, float(max(xs.max(), 1.0)) * 4.0, 800)
    gp = g(probe)
    g_ge_1 = bool(np.all(gp >= 1.0 - 1e-12))
    g_le_1 = bool(np.all(gp <= 1.0 + 1e-12))

    env = {"normal_tail": [float(normal_tail(x)) for x in xs]}
    env["upper_G"] = [thm12_envelopes(x)["upper_G"] if x > 0 else math.nan for x in xs]
    env["upper_DX"] = [thm12_envelopes(x)["upper_DX"] if x > 0 else math.nan for x in xs]
    if c_prime is not None:
        if z0 is None:
            over = probe[gp > c_prime * probe**2 * (1 + 1e-12)]
            z0 = float(over.max()) if over.size else 0.0
        pref = bound_corA_prefactor(c_prime, mean_abs)
        env["stein_lower"] = [stein_lower_bound(x, c_prime) if x > max(z0, 0) else math.nan for x in xs]
        env["corA_gaussian"] = [
            pref.K * math.exp(-0.5 * x * x) / x if x > max(z0, 0) else math.nan for x in xs
        ]
        env["corA_A"] = [
            pref.K * integral_A(g, x, tol) / x if x > max(z0, 0) else math.nan for x in xs
        ]

    violations = []
    slack = 10 * tol
    for i, x in enumerate(xs):
        if g_le_1 and x > 0 and tail[i] > env["upper_G"][i] + slack:
            violations.append(("upper_G", float(x)))
        if c_prime is not None:
            names = ["corA_A"] + (["stein_lower", "corA_gaussian"] if g_ge_1 else [])
            for name in names:
                b = env[name][i]
                if math.isfinite(b) and tail[i] < b - slack:
                    violations.append((name, float(x)))
    return TailReport(
        abscissae=[float(x) for x in xs],
        tail=[float(v) for v in tail],
        density=[float(v) for v in dens],
        bound_envelopes=env,
        violations=violations,
        meta={
            "g": g.to_dict(),
            "mean_abs": mean_abs,
            "c_prime": c_prime,
            "z0": z0,
            "tol": tol,
            "g_ge_1": g_ge_1,
            "g_le_1": g_le_1,
        },
    )
