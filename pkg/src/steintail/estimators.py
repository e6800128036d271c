"""Estimators with a fit/predict interface.

Only the two pieces of the toolkit that actually learn something from data
follow the scikit-learn estimator shape: the conditional-mean estimate of
g(z) = E[G | X = z] and the log-log fit of the fluctuation exponent.
"""

from __future__ import annotations

import math

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_consistent_length, check_is_fitted, column_or_1d

from .stats import loglog_fit
from .tail_engine import Tabulated


class ConditionalGEstimator(RegressorMixin, BaseEstimator):
    """Equal-count binned estimate of z -> E[G | X = z].

    Parameters
    ----------
    n_bins : int
        Number of bins; each holds (almost) the same number of samples.
    """

    def __init__(self, n_bins: int = 20):
        self.n_bins = n_bins

    def fit(self, X, G):
        x = column_or_1d(np.asarray(X, dtype=float))
        g = column_or_1d(np.asarray(G, dtype=float))
        check_consistent_length(x, g)
        if self.n_bins < 2:
            raise ValueError("n_bins must be at least 2")
        if x.size < 2 * self.n_bins:
            raise ValueError("need at least two samples per bin")
        if np.ptp(x) == 0.0:
            raise ValueError("degenerate X: all samples equal")
        order = np.argsort(x, kind="stable")
        xs, gs = x[order], g[order]
        chunks = np.array_split(np.arange(x.size), self.n_bins)
        grid, vals, se, counts = [], [], [], []
        for idx in chunks:
            grid.append(xs[idx].mean())
            vals.append(gs[idx].mean())
            se.append(gs[idx].std(ddof=1) / math.sqrt(idx.size))
            counts.append(idx.size)
        grid = np.asarray(grid)
        if np.any(np.diff(grid) <= 0):
            raise ValueError("degenerate X: bins do not separate (too many ties)")
        self.grid_ = grid
        self.values_ = np.asarray(vals)
        self.se_ = np.asarray(se)
        self.counts_ = np.asarray(counts)
        self.support_ = (float(xs[0]), float(xs[-1]))
        return self

    def predict(self, z):
        check_is_fitted(self, "values_")
        z = np.asarray(z, dtype=float)
        return np.interp(z, self.grid_, self.values_)

    def to_spec(self, left: float = -math.inf) -> Tabulated:
        """Tabulated g for the tail engine (negative bin means clipped to 0)."""
        check_is_fitted(self, "values_")
        return Tabulated(
            grid=tuple(self.grid_),
            values=tuple(np.maximum(self.values_, 0.0)),
            se=tuple(self.se_),
            left=left,
        )


class FluctuationExponent(BaseEstimator):
    """Fit Var[log u(t)] ~ C t^(2 chi) by weighted least squares in log-log.

    Weights are inverse variances of log var, i.e. (var / var_se)^2, when
    standard errors are supplied; the reported ``stderr_`` is propagated from
    them. Without standard errors the fit is unweighted.
    """

    def fit(self, t, var, var_se=None):
        t = column_or_1d(np.asarray(t, dtype=float))
        v = column_or_1d(np.asarray(var, dtype=float))
        check_consistent_length(t, v)
        if np.unique(t).size < 3:
            raise ValueError("need at least 3 distinct t values")
        weights, absolute = None, False
        if var_se is not None:
            se = column_or_1d(np.asarray(var_se, dtype=float))
            check_consistent_length(t, se)
            if np.all(np.isfinite(se)) and np.all(se > 0):
                weights, absolute = (v / se) ** 2, True
        slope, stderr, r2 = loglog_fit(t, v, weights, absolute_weights=absolute)
        self.slope_ = slope
        self.chi_ = slope / 2.0
        self.stderr_ = stderr / 2.0
        self.r2_ = r2
        lx, ly = np.log(t), np.log(v)
        w = np.ones_like(t) if weights is None else weights
        self.intercept_ = float(np.sum(w * (ly - slope * lx)) / np.sum(w))
        return self

    def predict(self, t):
        check_is_fitted(self, "chi_")
        t = np.asarray(t, dtype=float)
        return np.exp(self.intercept_) * t**self.slope_
