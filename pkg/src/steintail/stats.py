"""Shared estimation utilities: jackknife variance, ECDF with DKW bands,
weighted log-log regression and reproducible RNG stream derivation."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class DkwBand:
    """Dvoretzky-Kiefer-Wolfowitz confidence band for an empirical CDF."""

    level: float
    n: int
    halfwidth: float = field(init=False)

    def __post_init__(self):
        if not 0.0 < self.level < 1.0:
            raise ValueError(f"level must lie in (0, 1), got {self.level}")
        if self.n < 1:
            raise ValueError("n must be positive")
        hw = np.sqrt(np.log(2.0 / (1.0 - self.level)) / (2.0 * self.n))
        object.__setattr__(self, "halfwidth", float(hw))


@dataclass(frozen=True)
class EmpiricalCDF:
    """Right-continuous empirical distribution function of a sample."""

    sorted_values: np.ndarray

    @property
    def n(self) -> int:
        return len(self.sorted_values)

    def __call__(self, x):
        idx = np.searchsorted(self.sorted_values, x, side="right")
        return idx / self.n

    def survival(self, x):
        """P[X > x] under the empirical law."""
        return 1.0 - self(x)


@dataclass(frozen=True)
class RngStream:
    """Identifier of one independent random stream.

    Streams with the same ``(master_seed, label, index)`` reproduce the same
    draws; distinct identifiers feed distinct ``SeedSequence`` spawn keys, which
    numpy guarantees to be statistically independent.
    """

    master_seed: int
    label: str
    index: int

    def seed_sequence(self) -> np.random.SeedSequence:
        digest = hashlib.blake2b(self.label.encode("utf-8"), digest_size=8).digest()
        label_key = int.from_bytes(digest, "little")
        return np.random.SeedSequence(
            entropy=self.master_seed & 0xFFFFFFFFFFFFFFFF,
            spawn_key=(label_key, self.index),
        )

    def generator(self) -> np.random.Generator:
        return np.random.Generator(np.random.PCG64(self.seed_sequence()))


def derive_stream(master: int, label: str, index: int = 0) -> RngStream:
    return RngStream(int(master), str(label), int(index))


def rng_for(master: int, label: str, index: int = 0) -> np.random.Generator:
    """Shortcut for ``derive_stream(master, label, index).generator()``."""
    return derive_stream(master, label, index).generator()


def sample_variance(xs) -> tuple[float, float]:
    """Unbiased sample variance and its leave-one-out jackknife standard error.

    The jackknife needs at least three points; for two points the standard
    error is returned as NaN.
    """
    x = np.asarray(xs, dtype=float).ravel()
    n = x.size
    if n < 2:
        raise ValueError("sample_variance needs at least 2 values")
    d = x - x.mean()
    ss = float(np.dot(d, d))
    var = ss / (n - 1)
    if n < 3:
        return var, float("nan")
    # closed-form leave-one-out sums of squares on centred data
    loo = (ss - d * d * n / (n - 1)) / (n - 2)
    se = np.sqrt((n - 1) / n * np.sum((loo - loo.mean()) ** 2))
    return var, float(se)


def empirical_cdf_band(xs, level: float = 0.99) -> tuple[EmpiricalCDF, DkwBand]:
    x = np.sort(np.asarray(xs, dtype=float).ravel())
    if x.size < 20:
        raise ValueError("empirical_cdf_band needs at least 20 samples")
    return EmpiricalCDF(x), DkwBand(level, x.size)


def loglog_fit(ts, values, weights=None, absolute_weights: bool = False):
    """Weighted least squares of ``log(values)`` on ``log(ts)``.

    Parameters
    ----------
    ts, values : array_like
        Strictly positive abscissae and ordinates, at least three points.
    weights : array_like, optional
        Non-negative regression weights. When ``absolute_weights`` is true they
        are read as inverse variances of ``log(values)`` and the slope standard
        error is propagated from them directly; otherwise it is scaled by the
        residual variance.

    Returns
    -------
    slope, stderr, r2
    """
    t = np.asarray(ts, dtype=float).ravel()
    v = np.asarray(values, dtype=float).ravel()
    if t.size != v.size:
        raise ValueError("ts and values differ in length")
    if t.size < 3:
        raise ValueError("loglog_fit needs at least 3 points")
    if np.any(t <= 0) or np.any(v <= 0):
        raise ValueError("loglog_fit needs strictly positive inputs")
    w = np.ones_like(t) if weights is None else np.asarray(weights, dtype=float).ravel()
    if w.size != t.size or np.any(w < 0) or not np.any(w > 0):
        raise ValueError("invalid weights")

    lx, ly = np.log(t), np.log(v)
    design = np.column_stack([np.ones_like(lx), lx])
    normal = design.T @ (w[:, None] * design)
    coef = np.linalg.solve(normal, design.T @ (w * ly))
    resid = ly - design @ coef
    cov = np.linalg.inv(normal)
    if not absolute_weights:
        dof = t.size - 2
        sigma2 = float(np.sum(w * resid**2) / dof) if dof > 0 else 0.0
        cov = cov * sigma2
    ybar = np.sum(w * ly) / np.sum(w)
    ss_tot = float(np.sum(w * (ly - ybar) ** 2))
    ss_res = float(np.sum(w * resid**2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(coef[1]), float(np.sqrt(max(cov[1, 1], 0.0))), float(r2)
