"""Gaussian tail bounds through Malliavin calculus and Stein's method.

Modules
-------
gaussian_stein   normal tail helpers and the explicit Stein solution
tail_engine      densities, tails and tail bounds from g(z) = E[G | X = z]
chaos_lab        exact finite Wiener-chaos calculus and Monte Carlo checks
polymer_sim      directed polymer in a correlated Gaussian environment
estimators       fit/predict estimators for g and the fluctuation exponent
stats            jackknife, ECDF/DKW bands, log-log fits, RNG streams
cli              batch runner
"""

__version__ = "0.1.0"
