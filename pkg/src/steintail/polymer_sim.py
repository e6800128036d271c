"""Directed polymer on the periodic lattice Z/pZ in a Gaussian environment that
is white in time and correlated in space.

The environment over one step of length dt is a vector dW ~ N(0, Q dt) on the
p sites. Paths are lazy symmetric walks started at 0 (stay with probability
1/2, move +-1 with probability 1/4 each, one step per dt, so the per-step
displacement variance is 1/2). The Hamiltonian of a path sums the field
increments it visits; its nonlinear variant applies x -> x + x|x|/t.

Everything random is drawn from named streams derived from one master seed,
one stream per (role, environment index), so results do not depend on the
number of worker threads.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp, roots_legendre

from .estimators import FluctuationExponent
from .stats import empirical_cdf_band, rng_for, sample_variance
from .tail_engine import K_u, TailReport

LINEAR = "linear"
NONLINEAR = "nonlinear_abs"
HAMILTONIANS = (LINEAR, NONLINEAR)
DEFAULT_BUDGET = 2_000_000_000
BIAS_GATE = 0.10
LD2_K = 0.9


class BudgetExceededError(RuntimeError):
    pass


# --------------------------------------------------------------------------
# covariance


@dataclass(frozen=True)
class CovarianceSpec:
    """Spatial covariance on Z/pZ.

    ``kind`` is ``"constant"`` (Q = q everywhere), ``"circle_cosine"``
    (Q(j-k) = a + b cos(2 pi (j-k)/p)) or ``"kernel"`` (explicit matrix).
    """

    kind: str
    p: int = 16
    q: float = 0.0
    a: float = 0.0
    b: float = 0.0
    matrix: tuple = ()

    @classmethod
    def constant(cls, q: float, p: int = 16):
        return cls("constant", p=p, q=q)

    @classmethod
    def circle_cosine(cls, a: float, b: float, p: int):
        return cls("circle_cosine", p=p, a=a, b=b)

    @classmethod
    def kernel(cls, matrix):
        m = np.asarray(matrix, dtype=float)
        return cls("kernel", p=m.shape[0], matrix=tuple(map(tuple, m)))

    @classmethod
    def from_dict(cls, d: dict):
        d = dict(d)
        kind = d.pop("kind")
        if kind == "constant":
            return cls.constant(d["q"], d.get("p", 16))
        if kind == "circle_cosine":
            return cls.circle_cosine(d["a"], d["b"], d["p"])
        if kind == "kernel":
            return cls.kernel(d["matrix"])
        raise ValueError(f"unknown covariance kind {kind!r}")

    def to_dict(self) -> dict:
        if self.kind == "constant":
            return {"kind": self.kind, "q": self.q, "p": self.p}
        if self.kind == "circle_cosine":
            return {"kind": self.kind, "a": self.a, "b": self.b, "p": self.p}
        return {"kind": self.kind, "matrix": [list(r) for r in self.matrix]}


@dataclass(frozen=True, eq=False)
class Covariance:
    """Materialised covariance with an exact factor Q = F F^T."""

    spec: CovarianceSpec
    Q: np.ndarray
    factor: np.ndarray
    q0: float
    qm: float

    @property
    def p(self) -> int:
        return self.Q.shape[0]

    @property
    def rank(self) -> int:
        return self.factor.shape[1]


def build_covariance(spec: CovarianceSpec, tol: float = 1e-10) -> Covariance:
    """Materialise Q and a factor F with F F^T = Q.

    Constant and cosine kernels get their exact low-rank factors (rank 1 and
    3), which keep perfect correlations exact; explicit kernels are factored
    through their eigendecomposition.
    """
    p = int(spec.p)
    if p < 2:
        raise ValueError("need at least 2 sites")
    x = np.arange(p)
    if spec.kind == "constant":
        if spec.q < 0:
            raise ValueError("constant covariance needs q >= 0")
        Q = np.full((p, p), float(spec.q))
        F = np.full((p, 1), math.sqrt(spec.q))
    elif spec.kind == "circle_cosine":
        if not spec.a >= spec.b >= 0:
            raise ValueError("circle_cosine needs a >= b >= 0")
        ang = 2.0 * math.pi * x / p
        Q = spec.a + spec.b * np.cos(2.0 * math.pi * (x[:, None] - x[None, :]) / p)
        F = np.column_stack(
            [
                np.full(p, math.sqrt(spec.a)),
                math.sqrt(spec.b) * np.cos(ang),
                math.sqrt(spec.b) * np.sin(ang),
            ]
        )
    elif spec.kind == "kernel":
        Q = np.asarray(spec.matrix, dtype=float)
        if Q.shape != (p, p):
            raise ValueError("kernel matrix must be square")
        if not np.allclose(Q, Q.T, atol=tol, rtol=0):
            raise ValueError("kernel matrix must be symmetric")
        Q = 0.5 * (Q + Q.T)
        lam, V = np.linalg.eigh(Q)
        scale = max(1.0, float(np.abs(lam).max()))
        if lam[0] < -tol * scale:
            raise ValueError(f"kernel is not positive semidefinite: eigenvalue {lam[0]:.6g}")
        keep = lam > tol * scale
        F = V[:, keep] * np.sqrt(lam[keep])
        if F.shape[1] == 0:
            F = np.zeros((p, 1))
    else:
        raise ValueError(f"unknown covariance kind {spec.kind!r}")
    return Covariance(spec, Q, F, q0=float(np.diag(Q).max()), qm=float(Q.min()))


def _as_cov(cov) -> Covariance:
    return cov if isinstance(cov, Covariance) else build_covariance(cov)


# --------------------------------------------------------------------------
# environment, paths, Hamiltonian


@dataclass(frozen=True, eq=False)
class EnvironmentSlab:
    p: int
    n_t: int
    dt: float
    factor: np.ndarray
    dW: np.ndarray

    @property
    def t(self) -> float:
        return self.n_t * self.dt


def sample_environment(cov, n_t: int, dt: float, seed: int, index: int = 0, label="environment"):
    cov = _as_cov(cov)
    if n_t < 1 or not dt > 0:
        raise ValueError("need n_t >= 1 and dt > 0")
    z = rng_for(seed, label, index).standard_normal((n_t, cov.rank))
    dW = (z * math.sqrt(dt)) @ cov.factor.T
    return EnvironmentSlab(cov.p, int(n_t), float(dt), cov.factor, dW)


@dataclass(frozen=True, eq=False)
class PathEnsemble:
    p: int
    sites: np.ndarray

    @property
    def n_b(self) -> int:
        return self.sites.shape[0]

    @property
    def n_t(self) -> int:
        return self.sites.shape[1]


_STEPS = np.array([-1, 0, 0, 1], dtype=np.int64)


def sample_paths(p: int, n_t: int, n_b: int, seed: int, index: int = 0) -> PathEnsemble:
    """Lazy walks; ``sites[:, i]`` is the position used by step i (start at 0)."""
    if n_b < 1 or n_t < 1:
        raise ValueError("need n_b >= 1 and n_t >= 1")
    rng = rng_for(seed, "paths", index)
    sites = np.zeros((n_b, n_t), dtype=np.int64)
    if n_t > 1:
        steps = _STEPS[rng.integers(0, 4, size=(n_b, n_t - 1))]
        np.cumsum(steps, axis=1, out=sites[:, 1:])
        np.mod(sites, p, out=sites)
    return PathEnsemble(int(p), sites)


def nonlinear_abs(t: float, x):
    x = np.asarray(x, dtype=float)
    return x + x * np.abs(x) / t


def _check_kind(kind: str):
    if kind not in HAMILTONIANS:
        raise ValueError(f"hamiltonian must be one of {HAMILTONIANS}, got {kind!r}")


def _linear_prefix(dW: np.ndarray, sites: np.ndarray) -> np.ndarray:
    """Cumulative field along each path, shape (n_b, n_t)."""
    n_t = sites.shape[1]
    return np.cumsum(dW[np.arange(n_t)[None, :], sites], axis=1)


def hamiltonian(env: EnvironmentSlab, path, kind: str = LINEAR):
    """H of one path (1-d sites) or many paths (2-d sites) over the full slab."""
    _check_kind(kind)
    sites = path.sites if isinstance(path, PathEnsemble) else np.asarray(path)
    if sites.shape[-1] != env.n_t:
        raise ValueError("path length does not match the environment")
    x = env.dW[np.arange(env.n_t), sites].sum(axis=-1)
    return nonlinear_abs(env.t, x) if kind == NONLINEAR else x


@dataclass(frozen=True)
class PartitionEstimate:
    u_hat: float
    log_u: float
    se_log: float
    jackknife_bias: float


def _log_u_stats(H: np.ndarray) -> PartitionEstimate:
    H = np.asarray(H, dtype=float)
    n = H.size
    if not np.any(np.isfinite(H)):
        raise ValueError("all path weights are degenerate")
    lse = logsumexp(H)
    log_u = lse - math.log(n)
    w = np.exp(H - lse)
    se = math.sqrt(np.sum((n * w - 1.0) ** 2) / (n - 1) / n)
    # leave-one-out log u; recompute the dominant path directly
    with np.errstate(divide="ignore"):
        loo = lse + np.log1p(-w)
    j = int(np.argmax(w))
    loo[j] = logsumexp(np.delete(H, j))
    loo -= math.log(n - 1)
    bias = (n - 1) * (loo.mean() - log_u)
    u_hat = math.exp(log_u) if log_u < 700 else math.inf
    return PartitionEstimate(u_hat, float(log_u), float(se), float(bias))


def partition_function(env: EnvironmentSlab, paths: PathEnsemble, kind: str = LINEAR) -> PartitionEstimate:
    """û = mean of exp H over paths, evaluated in log space."""
    if paths.n_b < 100:
        raise ValueError("partition_function needs n_b >= 100")
    return _log_u_stats(hamiltonian(env, paths, kind))


# --------------------------------------------------------------------------
# Gibbs pair averages


def _occupation_projection(factor: np.ndarray, sites: np.ndarray) -> np.ndarray:
    """F[sites] with shape (rank, n_b, n_t)."""
    return np.moveaxis(factor[sites], -1, 0)


def _pair_average(proj, qdiag_cum, w, phi, wbar, phibar, n_steps, dt, t):
    """Off-diagonal Gibbs pair average of (1/t) int Q(b_s, bbar_s) ds.

    ``w``/``wbar`` are normalised Gibbs weights for b and bbar and
    ``phi``/``phibar`` extra per-path factors; a leading batch axis is allowed
    on ``wbar``/``phibar``. Pairs j = k are left out and the weights
    renormalised over the remaining pairs.
    """
    a, abar = w * phi, wbar * phibar
    sub = proj[:, :, :n_steps]
    A = np.einsum("j,rji->ri", a, sub)
    Abar = np.einsum("...j,rji->...ri", abar, sub)
    full = np.einsum("ri,...ri->...", A, Abar) * dt / t
    diag = (abar * (a * qdiag_cum)).sum(axis=-1) * dt / t
    pair_mass = 1.0 - wbar @ w
    safe = np.where(pair_mass > 1e-12, pair_mass, 1.0)
    return np.where(pair_mass > 1e-12, (full - diag) / safe, full)


def _gibbs(H: np.ndarray) -> np.ndarray:
    w = np.exp(H - H.max(axis=-1, keepdims=True))
    return w / w.sum(axis=-1, keepdims=True)


def _phi(x, t, kind):
    if kind == NONLINEAR:
        return 1.0 + np.abs(x) / t
    return np.ones_like(x)


def replica_overlap(env: EnvironmentSlab, paths: PathEnsemble, kind: str = LINEAR) -> float:
    """Gibbs-pair estimate of (1/t) E[int_0^t Q(b_s, bbar_s) ds], i.e. |DY|^2.

    For the nonlinear Hamiltonian each replica carries the chain-rule factor
    (1 + |X|/t).
    """
    _check_kind(kind)
    if paths.n_b < 2:
        raise ValueError("replica_overlap needs at least two paths")
    Q = env.factor @ env.factor.T
    X = _linear_prefix(env.dW, paths.sites)[:, -1]
    H = nonlinear_abs(env.t, X) if kind == NONLINEAR else X
    w, phi = _gibbs(H), _phi(X, env.t, kind)
    proj = _occupation_projection(env.factor, paths.sites)
    qd = np.diag(Q)[paths.sites].sum(axis=1)
    return float(_pair_average(proj, qd, w, phi, w, phi, env.n_t, env.dt, env.t))


# --------------------------------------------------------------------------
# runs


def _steps_for(t_grid, dt) -> list:
    out = []
    for t in t_grid:
        n = int(round(t / dt))
        if n < 1 or abs(n * dt - t) > 1e-9 * max(t, 1.0):
            raise ValueError(f"t = {t} is not a positive multiple of dt = {dt}")
        out.append(n)
    return out


@dataclass
class PolymerRun:
    t_grid: list
    cov: CovarianceSpec
    hamiltonian: str
    logu: np.ndarray
    bias: np.ndarray
    overlap: np.ndarray
    mc_params: dict
    q0: float
    qm: float
    warnings: list = field(default_factory=list)

    @property
    def n_env(self) -> int:
        return self.logu.shape[0]

    @property
    def degenerate(self) -> bool:
        return bool(np.all(np.ptp(self.logu, axis=0) == 0.0))


def _one_environment(cov: Covariance, n_steps, n_b, dt, kind, seed, e):
    n_t = n_steps[-1]
    env = sample_environment(cov, n_t, dt, seed, e)
    paths = sample_paths(cov.p, n_t, n_b, seed, e)
    X = _linear_prefix(env.dW, paths.sites)
    proj = _occupation_projection(cov.factor, paths.sites)
    qdiag = np.cumsum(np.diag(cov.Q)[paths.sites], axis=1)
    logu, bias, overlap = [], [], []
    for n in n_steps:
        t = n * dt
        x = X[:, n - 1]
        H = nonlinear_abs(t, x) if kind == NONLINEAR else x
        est = _log_u_stats(H)
        logu.append(est.log_u)
        bias.append(est.jackknife_bias)
        w, phi = _gibbs(H), _phi(x, t, kind)
        overlap.append(float(_pair_average(proj, qdiag[:, n - 1], w, phi, w, phi, n, dt, t)))
    return logu, bias, overlap


def run_polymer(
    cov,
    t_grid,
    n_env: int,
    n_b: int,
    dt: float,
    kind: str = LINEAR,
    seed: int = 0,
    budget: float = DEFAULT_BUDGET,
    n_jobs: int = 1,
) -> PolymerRun:
    """log û(t) for ``n_env`` independent environments on a common time grid.

    Within one environment all t share the same field and paths (prefix
    sums), so the values at different t come from one filtration.
    """
    _check_kind(kind)
    cov = _as_cov(cov)
    t_grid = [float(t) for t in t_grid]
    if any(b <= a for a, b in zip(t_grid, t_grid[1:])) or not t_grid:
        raise ValueError("t_grid must be non-empty and strictly increasing")
    if n_env < 2:
        raise ValueError("need n_env >= 2")
    if n_b < 100:
        raise ValueError("need n_b >= 100")
    n_steps = _steps_for(t_grid, dt)
    work = float(n_env) * n_b * n_steps[-1]
    if work > budget:
        raise BudgetExceededError(f"n_env * n_b * n_t = {work:.3g} exceeds budget {budget:.3g}")
    notes = []
    if kind == NONLINEAR and cov.q0 >= 1.0 / 9.0:
        msg = f"q0 = {cov.q0:g} >= 1/9: the nonlinear upper bound is not guaranteed"
        warnings.warn(msg, stacklevel=2)
        notes.append(msg)

    def job(e):
        return _one_environment(cov, n_steps, n_b, dt, kind, seed, e)

    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(job, range(n_env)))
    else:
        results = [job(e) for e in range(n_env)]
    logu = np.array([r[0] for r in results])
    if not np.all(np.isfinite(logu)):
        raise FloatingPointError("non-finite log u encountered")
    run = PolymerRun(
        t_grid=t_grid,
        cov=cov.spec,
        hamiltonian=kind,
        logu=logu,
        bias=np.array([r[1] for r in results]),
        overlap=np.array([r[2] for r in results]),
        mc_params={"n_env": int(n_env), "n_b": int(n_b), "dt": float(dt), "seed": int(seed)},
        q0=cov.q0,
        qm=cov.qm,
        warnings=notes,
    )
    if run.degenerate:
        run.warnings.append("degenerate run: log u identical across environments")
    return run


# --------------------------------------------------------------------------
# analysis


@dataclass(frozen=True)
class VariancePoint:
    t: float
    n_env: int
    var: float
    var_se: float
    mean_bias: float


def variance_vs_t(run: PolymerRun) -> list:
    """Sample variance of log û across environments at each t."""
    if run.n_env < 2:
        raise ValueError("need at least two environments")
    if run.n_env < 30:
        warnings.warn("fewer than 30 environments: standard errors are unreliable", stacklevel=2)
    out = []
    for k, t in enumerate(run.t_grid):
        v, se = sample_variance(run.logu[:, k])
        out.append(VariancePoint(t, run.n_env, v, se, float(run.bias[:, k].mean())))
    return out


@dataclass(frozen=True)
class ExponentFit:
    chi: float
    stderr: float
    r2: float
    per_t: list
    excluded: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "chi": self.chi,
            "stderr": self.stderr,
            "r2": self.r2,
            "per_t": [list(row) for row in self.per_t],
            "excluded": list(self.excluded),
        }


def fit_chi(per_t, gate_bias: bool = True) -> ExponentFit:
    """Fit chi from (t, var, var_se) rows or ``VariancePoint`` records.

    With ``gate_bias`` a t is left out when its mean jackknife bias of log û
    exceeds 10% of the variance at that t.
    """
    rows, excluded = [], []
    for r in per_t:
        if isinstance(r, VariancePoint):
            if gate_bias and abs(r.mean_bias) > BIAS_GATE * r.var:
                excluded.append(r.t)
                continue
            rows.append((r.t, r.var, r.var_se))
        else:
            rows.append(tuple(float(v) for v in r))
    if len(rows) < 3:
        raise ValueError("fit_chi needs at least 3 usable t values")
    t = np.array([r[0] for r in rows])
    if t.max() < 10.0 * t.min():
        warnings.warn("t values span less than one decade", stacklevel=2)
    v = np.array([r[1] for r in rows])
    se = np.array([r[2] if len(r) > 2 else math.nan for r in rows])
    use_se = se if np.all(np.isfinite(se)) and np.all(se > 0) else None
    est = FluctuationExponent().fit(t, v, use_se)
    return ExponentFit(est.chi_, est.stderr_, est.r2_, rows, excluded)


@dataclass(frozen=True)
class BoundRow:
    t: float
    n_env: int
    var: float
    var_se: float
    lower_bound: float
    upper_bound: float
    violation: bool


def variance_bounds(q0: float, qm: float, t: float, kind: str = LINEAR) -> tuple[float, float]:
    """(lower, upper) bounds on Var[log u(t)].

    The nonlinear upper bound carries a factor 2 for its unquantified o(t) term.
    """
    upper = (math.pi / 2) ** 2 * q0 * t
    if kind == NONLINEAR:
        upper = 2.0 * 2**8 * (math.pi / 2) ** 2 * q0**3 * t
    lower = K_u() * qm * t if qm > 0 else 0.0
    return lower, upper


def check_variance_bounds(run: PolymerRun) -> list:
    rows = []
    for pt in variance_vs_t(run):
        lo, hi = variance_bounds(run.q0, run.qm, pt.t, run.hamiltonian)
        se = pt.var_se if math.isfinite(pt.var_se) else 0.0
        bad = pt.var < lo - 4 * se or pt.var > hi + 4 * se
        rows.append(BoundRow(pt.t, pt.n_env, pt.var, pt.var_se, lo, hi, bool(bad)))
    return rows


def ld_envelopes(a, q0: float, qm: float, K: float = LD2_K):
    """Upper and lower envelopes for P[|log u - E log u| > a sqrt(t)].

    The lower one uses the Gaussian-tail prefactor 2/sqrt(2 pi), without which
    it would exceed the exact tail of a Gaussian log u.
    """
    a = np.asarray(a, dtype=float)
    upper = np.minimum(1.0, 2.0 * math.sqrt(q0) / (a * math.sqrt(2 * math.pi)) * np.exp(-(a**2) / (2 * q0)))
    if qm > 0:
        lower = K * 2.0 * math.sqrt(qm) / (a * math.sqrt(2 * math.pi)) * np.exp(-(a**2) / (2 * qm))
    else:
        lower = np.zeros_like(a)
    return upper, lower


def empirical_tail_check(run: PolymerRun, t: float, a_grid, level: float = 0.99) -> TailReport:
    """Centred empirical tail of log û at time t against the LD envelopes.

    Violations are recorded only for the upper envelope (when the DKW lower
    edge exceeds it). Points where the DKW upper edge falls below the lower
    envelope are listed in ``meta["ld2_flags"]`` without counting as failures,
    since that envelope is only asymptotic in a.
    """
    k = run.t_grid.index(float(t))
    a = np.asarray(a_grid, dtype=float)
    if np.any(a <= 0):
        raise ValueError("a_grid must be positive")
    y = run.logu[:, k] - run.logu[:, k].mean()
    ecdf, band = empirical_cdf_band(np.abs(y) / math.sqrt(t), level)
    emp = ecdf.survival(a)
    lo = np.clip(emp - band.halfwidth, 0.0, 1.0)
    hi = np.clip(emp + band.halfwidth, 0.0, 1.0)
    upper, lower = ld_envelopes(a, run.q0, run.qm)
    violations = [("ld_upper", float(x)) for x, l, u in zip(a, lo, upper) if l > u]
    flags = [float(x) for x, h, l in zip(a, hi, lower) if h < l]
    return TailReport(
        abscissae=[float(x) for x in a],
        tail=[float(v) for v in emp],
        density=[math.nan] * a.size,
        bound_envelopes={
            "dkw_lo": [float(v) for v in lo],
            "dkw_hi": [float(v) for v in hi],
            "ld_upper": [float(v) for v in upper],
            "ld2_lower": [float(v) for v in lower],
        },
        violations=violations,
        meta={"t": float(t), "level": level, "n_env": run.n_env, "ld2_flags": flags},
    )


# --------------------------------------------------------------------------
# G through the rotation formula


@dataclass(frozen=True)
class GEstimate:
    estimate: float
    se: float
    per_env: tuple
    overlap: tuple
    t: float
    theta_nodes: int
    n_env_prime: int


def _g_one_environment(cov: Covariance, n_t, n_b, dt, kind, seed, e, n_env_prime, th, wt):
    t = n_t * dt
    env = sample_environment(cov, n_t, dt, seed, e)
    paths = sample_paths(cov.p, n_t, n_b, seed, e)
    XW = _linear_prefix(env.dW, paths.sites)[:, -1]
    HW = nonlinear_abs(t, XW) if kind == NONLINEAR else XW
    w, phi = _gibbs(HW), _phi(XW, t, kind)
    proj = _occupation_projection(cov.factor, paths.sites)
    qd = np.diag(cov.Q)[paths.sites].sum(axis=1)
    overlap = float(_pair_average(proj, qd, w, phi, w, phi, n_t, dt, t))
    c, s = np.cos(th)[:, None], np.sin(th)[:, None]
    vals = []
    for m in range(n_env_prime):
        envp = sample_environment(cov, n_t, dt, seed, m, label=f"env_prime:{e}")
        XP = _linear_prefix(envp.dW, paths.sites)[:, -1]
        Xth = c * XW[None, :] + s * XP[None, :]
        Hth = nonlinear_abs(t, Xth) if kind == NONLINEAR else Xth
        T = _pair_average(proj, qd, w, phi, _gibbs(Hth), _phi(Xth, t, kind), n_t, dt, t)
        vals.append(float(0.5 * np.sum(wt * np.abs(np.sin(th)) * T)))
    return float(np.mean(vals)), overlap, vals


def estimate_G_polymer(
    cov,
    t: float,
    n_env_prime: int,
    theta_nodes: int,
    n_b: int,
    dt: float,
    seed: int,
    kind: str = LINEAR,
    n_env: int = 1,
    budget: float = DEFAULT_BUDGET,
    n_jobs: int = 1,
) -> GEstimate:
    """Estimate G = <DY, -DL^{-1}Y> for Y = log u(t) / sqrt(t).

    Each of ``n_env`` environments (the same ones ``run_polymer`` draws for
    this seed) is paired with ``n_env_prime`` independent copies W'; the theta
    integral uses ``theta_nodes`` Gauss-Legendre nodes split evenly over the two
    half-intervals. Pair averages use the path ensemble against itself with
    the diagonal removed. The standard error is taken across environments
    when there are several, across W' copies otherwise.
    """
    _check_kind(kind)
    cov = _as_cov(cov)
    if theta_nodes < 16 or theta_nodes % 2:
        raise ValueError("theta_nodes must be an even integer >= 16")
    if n_env_prime < 8:
        raise ValueError("need at least 8 independent W' copies")
    (n_t,) = _steps_for([t], dt)
    work = float(n_env) * n_env_prime * theta_nodes * n_b * n_t * cov.rank
    if work > 50 * budget:
        raise BudgetExceededError(f"G estimate work {work:.3g} exceeds budget")
    x, w = roots_legendre(theta_nodes // 2)
    pos = (x + 1.0) * math.pi / 4.0
    wpos = w * math.pi / 4.0
    th = np.concatenate([-pos[::-1], pos])
    wt = np.concatenate([wpos[::-1], wpos])

    def job(e):
        return _g_one_environment(cov, n_t, n_b, dt, kind, seed, e, n_env_prime, th, wt)

    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            res = list(pool.map(job, range(n_env)))
    else:
        res = [job(e) for e in range(n_env)]
    per_env = np.array([r[0] for r in res])
    if n_env >= 2:
        se = per_env.std(ddof=1) / math.sqrt(n_env)
    else:
        copies = np.asarray(res[0][2])
        se = copies.std(ddof=1) / math.sqrt(copies.size)
    return GEstimate(
        estimate=float(per_env.mean()),
        se=float(se),
        per_env=tuple(float(v) for v in per_env),
        overlap=tuple(float(r[1]) for r in res),
        t=float(t),
        theta_nodes=int(theta_nodes),
        n_env_prime=int(n_env_prime),
    )
