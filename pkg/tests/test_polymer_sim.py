import math

import numpy as np
import pytest

from steintail.polymer_sim import (
    NONLINEAR,
    PolymerRun,
    BudgetExceededError,
    CovarianceSpec,
    EnvironmentSlab,
    VariancePoint,
    build_covariance,
    check_variance_bounds,
    empirical_tail_check,
    estimate_G_polymer,
    fit_chi,
    hamiltonian,
    ld_envelopes,
    nonlinear_abs,
    partition_function,
    replica_overlap,
    run_polymer,
    sample_environment,
    sample_paths,
    variance_bounds,
    variance_vs_t,
)
from steintail.stats import sample_variance
from steintail.tail_engine import K_u

CIRCLE = CovarianceSpec.circle_cosine(1.0, 0.5, 16)


# --- covariance


def test_covariance_examples():
    c = build_covariance(CovarianceSpec.constant(1.0))
    assert c.q0 == c.qm == 1.0 and c.rank == 1
    c = build_covariance(CIRCLE)
    assert c.q0 == pytest.approx(1.5) and c.qm == pytest.approx(0.5)
    np.testing.assert_allclose(c.factor @ c.factor.T, c.Q, atol=1e-12)


@pytest.mark.parametrize("a, b, p", [(1.0, 0.5, 16), (0.08, 0.02, 16), (1.0, 1.0, 7), (0.3, 0.0, 5)])
def test_circle_cosine_psd_by_dft(a, b, p):
    Q = build_covariance(CovarianceSpec.circle_cosine(a, b, p)).Q
    eig = np.fft.fft(Q[0]).real
    assert eig.min() >= -1e-12
    np.testing.assert_allclose(np.sort(eig), np.linalg.eigvalsh(Q), atol=1e-10)


def test_kernel_covariance():
    Q = build_covariance(CIRCLE).Q
    k = build_covariance(CovarianceSpec.kernel(Q.tolist()))
    np.testing.assert_allclose(k.factor @ k.factor.T, Q, atol=1e-10)
    with pytest.raises(ValueError, match="eigenvalue"):
        build_covariance(CovarianceSpec.kernel([[1.0, 2.0], [2.0, 1.0]]))
    with pytest.raises(ValueError):
        build_covariance(CovarianceSpec.circle_cosine(0.5, 1.0, 8))
    with pytest.raises(ValueError):
        build_covariance(CovarianceSpec.constant(1.0, p=1))


def test_covariance_spec_roundtrip():
    for spec in [CovarianceSpec.constant(0.5, 8), CIRCLE, CovarianceSpec.kernel([[1.0, 0.2], [0.2, 1.0]])]:
        assert CovarianceSpec.from_dict(spec.to_dict()) == spec


# --- environment and paths


def test_environment_covariance():
    cov = build_covariance(CIRCLE)
    dt, n_t = 0.25, 10_000
    env = sample_environment(cov, n_t, dt, seed=3)
    S = env.dW.T @ env.dW / n_t
    target = cov.Q * dt
    d = np.diag(target)
    se = np.sqrt((np.outer(d, d) + target**2) / n_t)
    assert np.all(np.abs(S - target) <= 5 * se)


def test_environment_constant_and_determinism():
    env = sample_environment(CovarianceSpec.constant(0.7), 50, 0.5, seed=1)
    assert np.all(env.dW == env.dW[:, :1])
    again = sample_environment(CovarianceSpec.constant(0.7), 50, 0.5, seed=1)
    assert np.array_equal(env.dW, again.dW)
    assert not np.array_equal(env.dW, sample_environment(CovarianceSpec.constant(0.7), 50, 0.5, seed=2).dW)


def test_walk_steps():
    paths = sample_paths(4, 2, 1000, seed=0)
    assert set(paths.sites[:, 1]) == {3, 0, 1}
    assert np.all(paths.sites[:, 0] == 0)
    # unwrap on a large ring to see the raw increments
    steps = np.diff(sample_paths(10**6, 400, 500, seed=1).sites, axis=1)
    steps = (steps + 1) % 10**6 - 1
    assert set(np.unique(steps)) == {-1, 0, 1}
    n = steps.size
    assert abs(steps.mean()) < 4 * math.sqrt(0.5 / n)
    assert steps.var() == pytest.approx(0.5, abs=4 * math.sqrt(0.25 / n))


def test_walk_occupation_uniform():
    p, n_b = 4, 20_000
    last = sample_paths(p, 200, n_b, seed=2).sites[:, -1]
    freq = np.bincount(last, minlength=p) / n_b
    assert np.all(np.abs(freq - 1 / p) < 4 * math.sqrt(0.25 * 0.75 / n_b))


# --- Hamiltonian and partition function


def test_hamiltonian_zero_and_constant():
    paths = sample_paths(8, 20, 150, seed=0)
    zero = EnvironmentSlab(8, 20, 0.5, np.zeros((8, 1)), np.zeros((20, 8)))
    assert np.all(hamiltonian(zero, paths) == 0.0)
    assert np.all(hamiltonian(zero, paths, NONLINEAR) == 0.0)
    est = partition_function(zero, paths)
    assert est.u_hat == 1.0 and est.log_u == 0.0
    env = sample_environment(CovarianceSpec.constant(2.0, 8), 20, 0.5, seed=4)
    H = hamiltonian(env, paths)
    assert np.ptp(H) < 1e-12
    assert partition_function(env, paths).log_u == pytest.approx(H[0], abs=1e-12)
    assert partition_function(env, sample_paths(8, 20, 1000, seed=5)).log_u == pytest.approx(H[0], abs=1e-12)


def test_hamiltonian_fixed_path_variance():
    cov = build_covariance(CIRCLE)
    n_t, dt = 16, 0.25
    path = sample_paths(cov.p, n_t, 1, seed=0).sites[0]
    H = np.array([hamiltonian(sample_environment(cov, n_t, dt, seed=9, index=e), path) for e in range(4000)])
    v, se = sample_variance(H)
    assert abs(v - cov.q0 * n_t * dt) <= 4 * se


def test_nonlinear_form():
    assert float(nonlinear_abs(2.0, 0.0)) == 0.0
    assert float(nonlinear_abs(2.0, -3.0)) == pytest.approx(-3.0 - 4.5)


def test_partition_function_large_H():
    paths = sample_paths(4, 10, 200, seed=0)
    dW = np.full((10, 4), 1e3)
    dW[:, 0] = 0.0
    env = EnvironmentSlab(4, 10, 1.0, np.eye(4), dW)
    est = partition_function(env, paths)
    assert math.isfinite(est.log_u) and est.log_u <= 1e4
    with pytest.raises(ValueError):
        partition_function(env, sample_paths(4, 10, 50, seed=0))


# --- runs and analysis


def test_constant_run_variance():
    run = run_polymer(CovarianceSpec.constant(1.0), [1, 2, 4], n_env=2000, n_b=100, dt=0.25, seed=1)
    for pt in variance_vs_t(run):
        assert abs(pt.var - pt.t) <= 4 * pt.var_se
    for row in check_variance_bounds(run):
        assert not row.violation
    np.testing.assert_allclose(run.overlap, 1.0, atol=1e-12)


def test_run_determinism_and_threads():
    args = dict(n_env=6, n_b=120, dt=0.25, seed=5)
    a = run_polymer(CIRCLE, [1, 2], **args)
    b = run_polymer(CIRCLE, [1, 2], n_jobs=3, **args)
    assert np.array_equal(a.logu, b.logu) and np.array_equal(a.overlap, b.overlap)


def test_run_degenerate_and_guards():
    run = run_polymer(CovarianceSpec.constant(0.0), [1, 2], n_env=3, n_b=100, dt=0.5)
    assert run.degenerate and np.all(run.logu == 0.0)
    assert any("degenerate" in w for w in run.warnings)
    with pytest.raises(BudgetExceededError):
        run_polymer(CIRCLE, [1, 2], n_env=10, n_b=100, dt=0.5, budget=100)
    with pytest.raises(ValueError):
        run_polymer(CIRCLE, [2, 1], n_env=10, n_b=100, dt=0.5)
    with pytest.raises(ValueError):
        run_polymer(CIRCLE, [0.3], n_env=10, n_b=100, dt=0.25)
    with pytest.warns(UserWarning, match="1/9"):
        run = run_polymer(CovarianceSpec.circle_cosine(0.2, 0.05, 8), [1, 2], n_env=3, n_b=100, dt=0.5, kind=NONLINEAR)
    assert run.warnings


def test_overlap_bounds():
    cov = build_covariance(CIRCLE)
    for e in range(5):
        env = sample_environment(cov, 16, 0.25, seed=2, index=e)
        paths = sample_paths(cov.p, 16, 300, seed=2, index=e)
        ov = replica_overlap(env, paths)
        assert cov.qm - 1e-12 <= ov <= cov.q0 + 1e-12
        # the nonlinear factors (1 + |X|/t) only push the pair average up
        assert replica_overlap(env, paths, NONLINEAR) >= cov.qm - 1e-12


def test_variance_vs_t_two_samples():
    run = PolymerRun([1.0], CIRCLE, "linear", np.array([[0.0], [2.0]]), np.zeros((2, 1)), np.zeros((2, 1)), {}, 1.5, 0.5)
    with pytest.warns(UserWarning):
        (pt,) = variance_vs_t(run)
    assert pt.var == 2.0


@pytest.mark.parametrize("power, chi", [(1.0, 0.5), (4.0 / 3.0, 2.0 / 3.0)])
def test_fit_chi_exact(power, chi):
    rows = [(t, 0.3 * t**power, 0.01 * t**power) for t in (4, 8, 16, 32, 64)]
    fit = fit_chi(rows)
    assert fit.chi == pytest.approx(chi) and fit.r2 == pytest.approx(1.0)
    with pytest.raises(ValueError):
        fit_chi(rows[:2])


def test_fit_chi_bias_gate_and_decade_warning():
    pts = [VariancePoint(t, 100, t, 0.1, 0.0) for t in (1.0, 2.0, 4.0, 8.0, 16.0)]
    pts[0] = VariancePoint(1.0, 100, 1.0, 0.1, 0.5)
    with pytest.warns(UserWarning, match="decade"):
        fit = fit_chi(pts)
    assert fit.excluded == [1.0] and fit.chi == pytest.approx(0.5)
    with pytest.warns(UserWarning, match="decade"):
        fit_chi([(1, 1), (2, 2), (4, 4)])


def test_variance_bounds_constants():
    lo, hi = variance_bounds(1.0, 1.0, 1.0)
    assert lo == pytest.approx(K_u()) and hi == pytest.approx((math.pi / 2) ** 2)
    lo, hi = variance_bounds(1.5, 0.5, 1.0)
    assert lo == pytest.approx(0.1068, abs=1e-4) and hi == pytest.approx(3.701, abs=1e-3)
    _, hi = variance_bounds(0.1, 0.06, 1.0, NONLINEAR)
    assert hi == pytest.approx(2 * 2**8 * (math.pi / 2) ** 2 * 1e-3)


def test_ld_envelopes_clamp_and_constant_case():
    from scipy.stats import norm

    a = np.array([0.1, 1.0, 2.0, 3.0, 4.0, 6.0])
    up, lo = ld_envelopes(a, 1.0, 1.0)
    assert up[0] == 1.0
    # Gaussian log u with variance t: the exact tail 2 tail(a) sits under the upper envelope
    exact = 2 * norm.sf(a)
    assert np.all(exact <= up + 1e-15)
    # the lower envelope is asymptotic: above the tail at a = 2, below it from a = 4 on
    assert lo[2] > exact[2]
    assert np.all(lo[4:] <= exact[4:])
    run = run_polymer(CovarianceSpec.constant(1.0), [2.0], n_env=2000, n_b=100, dt=0.5, seed=3)
    rep = empirical_tail_check(run, 2.0, [0.5, 1.0, 1.5, 2.0, 2.5])
    assert rep.violations == []


# --- G through the rotation formula


def test_G_constant_case():
    g = estimate_G_polymer(CovarianceSpec.constant(0.8), 2.0, 8, 16, 150, 0.25, seed=1)
    assert g.estimate == pytest.approx(0.8, abs=1e-10)


def test_theta_weight_normalisation():
    from scipy.special import roots_legendre

    x, w = roots_legendre(8)
    assert 2 * 0.5 * np.sum(w * np.sin((x + 1) * math.pi / 4)) * math.pi / 4 == pytest.approx(1.0, abs=1e-12)


def test_G_general_bounds():
    cov = build_covariance(CIRCLE)
    g = estimate_G_polymer(cov, 4.0, 8, 16, 300, 0.25, seed=2, n_env=4)
    assert cov.qm - 4 * g.se <= g.estimate <= cov.q0 + 4 * g.se
    assert all(cov.qm - 1e-12 <= o <= cov.q0 + 1e-12 for o in g.overlap)
    with pytest.raises(ValueError):
        estimate_G_polymer(cov, 4.0, 4, 16, 300, 0.25, seed=2)
    with pytest.raises(ValueError):
        estimate_G_polymer(cov, 4.0, 8, 10, 300, 0.25, seed=2)
    with pytest.raises(BudgetExceededError):
        estimate_G_polymer(cov, 4.0, 8, 16, 300, 0.25, seed=2, budget=10)
