import json
import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from steintail.gaussian_stein import normal_density, normal_tail
from steintail.tail_engine import (
    Affine,
    Constant,
    GFunctionSpec,
    NonIntegrableError,
    Power,
    Quadratic,
    SingularGError,
    SupportError,
    Tabulated,
    TailReport,
    K_u,
    bound_corA_prefactor,
    build_tail_report,
    cor_a_ratio,
    density_from_g,
    integral_A,
    lower_bound_menu,
    stein_lower_bound,
    tail_curve,
    tail_from_g,
    tail_integral_inequality_check,
    thm12_envelopes,
)

NORMAL_MEAN_ABS = math.sqrt(2 / math.pi)
CHI_MEAN_ABS = 4 * math.exp(-0.5) / math.sqrt(2 * math.pi)
ONE = Constant(1.0)
SHIFTED = Affine(2.0, 2.0)

# 50-digit mpmath values of 2 tail(sqrt(1+z)) and the W^2 - 1 density
CHI_REF = {
    -0.9: (0.75182963404584930913, 1.2000389484301361264),
    0.0: (0.31731050786291410283, 0.2419707245191433498),
    2.0: (0.083264516663550401855, 0.05139344326792309227),
    10.0: (0.00091111887715371288704, 0.00049157985005762161676),
}


def test_A_gaussian():
    for x in (0.0, 0.5, 2.0, 5.0):
        assert integral_A(ONE, x) == pytest.approx(math.exp(-x * x / 2), rel=1e-12)


def test_A_shifted_chi_square():
    for z in (0.3, 1.0, 4.0, 12.0):
        assert integral_A(SHIFTED, z) == pytest.approx(math.sqrt(1 + z) * math.exp(-z / 2), rel=1e-11)


def test_A_ratio_bound_under_quadratic_domination():
    g = Power(0.5, 2.0, 1.0)
    for x, k in ((2.0, 1.5), (3.0, 2.0), (5.0, 4.0)):
        assert integral_A(g, k * x) / integral_A(g, x) <= k ** (-1 / 0.5) * (1 + 1e-10)


def test_A_singular_g():
    with pytest.raises(SingularGError):
        integral_A(Affine(1.0, -1.0), 2.0)
    with pytest.raises(SingularGError):
        integral_A(Quadratic(0.5), 1.0)
    with pytest.raises(ValueError):
        integral_A(ONE, -1.0)


def test_density_normal():
    for z in (-3.0, -0.5, 0.0, 1.0, 4.0):
        assert density_from_g(ONE, NORMAL_MEAN_ABS, z) == pytest.approx(float(normal_density(z)), abs=1e-12)


@pytest.mark.parametrize("z", sorted(CHI_REF))
def test_density_and_tail_shifted_chi_square(z):
    tail_ref, dens_ref = CHI_REF[z]
    assert density_from_g(SHIFTED, CHI_MEAN_ABS, z) == pytest.approx(dens_ref, rel=1e-9)
    assert tail_from_g(SHIFTED, CHI_MEAN_ABS, z) == pytest.approx(tail_ref, abs=1e-8)


def test_density_guards():
    with pytest.raises(SupportError):
        density_from_g(SHIFTED, CHI_MEAN_ABS, -1.0)
    with pytest.raises(SingularGError):
        density_from_g(Tabulated((0.0, 1.0), (0.0, 1.0)), 1.0, 0.0)
    with pytest.raises(ValueError):
        density_from_g(ONE, 0.0, 0.0)


@pytest.mark.parametrize("x", [0.5, 1.0, 2.0, 3.0])
def test_tail_normal(x):
    assert tail_from_g(ONE, NORMAL_MEAN_ABS, x) == pytest.approx(float(normal_tail(x)), abs=1e-8)


def test_tail_negative_abscissa_and_monotone():
    xs = np.linspace(-3, 6, 19)
    s = tail_curve(ONE, NORMAL_MEAN_ABS, xs)
    assert np.allclose(s, normal_tail(xs), atol=1e-8)
    assert np.all(np.diff(s) <= 0)


def test_density_integrates_to_one():
    tot, _ = quad(lambda z: density_from_g(ONE, NORMAL_MEAN_ABS, z), -12, 12, epsabs=1e-12)
    assert tot == pytest.approx(1.0, abs=1e-6)
    # z = -1 + s^2 removes the inverse square-root singularity at the left end
    tot, _ = quad(lambda s: 2 * s * density_from_g(SHIFTED, CHI_MEAN_ABS, -1 + s * s), 1e-9, 9.0, epsabs=1e-12, limit=200)
    assert tot == pytest.approx(1.0, abs=1e-6)


def test_tail_equals_integrated_density():
    for x in (0.2, 1.5):
        dens, _ = quad(lambda z: density_from_g(SHIFTED, CHI_MEAN_ABS, z), x, 80, epsabs=1e-13, limit=200)
        assert tail_from_g(SHIFTED, CHI_MEAN_ABS, x) == pytest.approx(dens, abs=1e-8)


def test_power_tail_slope():
    c2 = 0.5
    g = Power(c2, 2.0, 1.0)
    xs = np.array([4.0, 8.0, 16.0, 32.0])
    s = tail_curve(g, 1.0, xs)
    slope = np.polyfit(np.log(xs), np.log(s), 1)[0]
    assert slope == pytest.approx(-1 - 1 / c2, abs=0.05)


def test_non_integrable():
    # A(y) = exp(-y^2 / (2 * 1e12)) has not decayed before the search cap
    with pytest.raises(NonIntegrableError):
        tail_from_g(Constant(1e18), 1.0, 1.0)


def test_prefactor_limits_and_guards():
    pref = bound_corA_prefactor(1e-9, 2.0)
    assert pref.K == pytest.approx(1.0, rel=1e-7)
    for bad in (0.0, 1.0, 1.5):
        with pytest.raises(ValueError):
            bound_corA_prefactor(bad, 1.0)


@pytest.mark.parametrize("c", [0.1, 0.3, 0.5, 0.9])
def test_prefactor_maximiser_by_grid_search(c):
    pref = bound_corA_prefactor(c, 2.0)
    k = np.linspace(1.0 + 1e-9, 20.0, 2_000_001)
    r = cor_a_ratio(k, c)
    i = int(np.argmax(r))
    assert k[i] == pytest.approx(pref.k_star, abs=1e-5)
    assert r[i] == pytest.approx(pref.max_ratio, rel=1e-10)
    assert pref.K == pytest.approx(pref.max_ratio, rel=1e-15)


@pytest.mark.parametrize("x", [2.0, 3.0])
def test_gaussian_case_below_tail(x):
    b = lower_bound_menu(ONE, NORMAL_MEAN_ABS, x, "gaussian", c_prime=0.5, z0=math.sqrt(2))
    assert 0 < b <= tail_from_g(ONE, NORMAL_MEAN_ABS, x)


def test_power_case_brackets_tail():
    g = Power(0.5, 2.0, 1.0)
    for x in (2.0, 5.0, 10.0):
        s = tail_from_g(g, 1.0, x)
        lo = lower_bound_menu(g, 1.0, x, "power", c_prime=0.5, z0=1.0, c2=0.5)
        hi = lower_bound_menu(g, 1.0, x, "power", c_prime=0.5, z0=1.0, c2=0.5, reverse=True)
        assert lo <= s <= hi


def test_stretched_case():
    g = Power(1.0, 1.0, 1.0)
    vals = []
    for x in (3.0, 5.0, 8.0):
        b = lower_bound_menu(g, 1.0, x, "stretched", c_prime=0.5, z0=2.0, c1=1.0, p=1.0)
        assert b <= tail_from_g(g, 1.0, x)
        vals.append(b * x * math.exp(x))
        up = lower_bound_menu(g, 1.0, x, "stretched", c_prime=0.5, z0=2.0, c1=1.0, p=1.0, reverse=True)
        assert tail_from_g(g, 1.0, x) <= up
    # for p = 1, c1 = 1 the bound is a constant times exp(-x)/x
    assert np.allclose(vals, vals[0], rtol=1e-12)


def test_menu_rejects_inconsistent_parameters():
    with pytest.raises(ValueError):
        lower_bound_menu(Constant(0.5), 1.0, 3.0, "gaussian", c_prime=0.5, z0=2.0)
    with pytest.raises(ValueError):
        lower_bound_menu(ONE, 1.0, 3.0, "gaussian", c_prime=0.5, z0=2.0, reverse=True)
    with pytest.raises(ValueError):
        lower_bound_menu(Power(0.5, 2.0, 1.0), 1.0, 3.0, "power", c_prime=0.5, z0=1.0, c2=0.9)
    with pytest.raises(ValueError):
        lower_bound_menu(ONE, 1.0, 1.0, "gaussian", c_prime=0.5, z0=2.0)
    with pytest.raises(ValueError):
        lower_bound_menu(ONE, 1.0, 3.0, "cauchy", c_prime=0.5, z0=2.0)


def test_stein_lower_bound():
    assert stein_lower_bound(2.0, 0.5) == pytest.approx(5 / 9 * float(normal_tail(2.0)), rel=1e-15)
    assert stein_lower_bound(1.5, 1e-12) == pytest.approx(float(normal_tail(1.5)), rel=1e-10)
    # ratio is (1 + z^2) / (1 + 1.6 z^2), within 1e-3 of 1/1.6 at z = 30
    z = 30.0
    assert stein_lower_bound(z, 0.3) / float(normal_tail(z)) == pytest.approx(1 / 1.6, rel=1e-3)
    with pytest.raises(ValueError):
        stein_lower_bound(0.0, 0.5)


def test_gaussian_comparison_envelopes():
    env = thm12_envelopes(1.0, c=4.0)
    assert env["upper_G"] == pytest.approx(2 * float(normal_tail(1.0)))
    assert env["upper_DX"] == pytest.approx(math.exp(-0.5))
    assert env["supergauss_ratio"] == 0.5
    assert thm12_envelopes(30.0)["upper_G"] / float(normal_tail(30.0)) == pytest.approx(1.0, rel=2e-3)
    with pytest.raises(ValueError):
        thm12_envelopes(0.0)


def test_K_u():
    assert K_u() == pytest.approx(0.21367, abs=5e-5)
    assert K_u() < (math.pi / 2) ** 2
    assert 2 * math.sqrt(2 * math.pi) == pytest.approx(5.0133, abs=1e-4)


def test_tail_integral_inequality():
    xs = np.linspace(0, 12, 4001)
    chk = tail_integral_inequality_check(xs, normal_tail(xs), 1.0, c=4.0)
    assert chk.holds and chk.lhs - chk.rhs > 0.01
    assert chk.point2_bound == pytest.approx(2 * 2 / (2 + 4) * float(normal_tail(1.0)))
    # tail that drops to zero right after 1: nodes on both sides of the jump
    xs = np.concatenate([np.linspace(0, 1, 101), [1 + 2e-9], np.linspace(1.01, 12, 1100)])
    s = np.where(xs <= 1.0, normal_tail(xs), 0.0)
    chk0 = tail_integral_inequality_check(xs, s, 1.0 + 1e-9)
    assert not chk0.holds
    assert chk0.rhs == pytest.approx(float(normal_tail(1.0)), rel=1e-6)
    with pytest.raises(ValueError):
        tail_integral_inequality_check(xs, normal_tail(xs), 20.0)
    with pytest.raises(ValueError):
        tail_integral_inequality_check(xs, normal_tail(-xs), 1.0)


def test_gspec_roundtrip_and_validation():
    specs = [ONE, SHIFTED, Quadratic(0.3), Power(0.5, 2.0, 1.0, (0.0, 1.0), (1.0, 0.5)), Tabulated((0, 1, 2), (1, 2, 3), (0.1, 0.1, 0.1))]
    for s in specs:
        assert GFunctionSpec.from_dict(json.loads(json.dumps(s.to_dict()))) == s
    with pytest.raises(ValueError):
        Tabulated((0, 0), (1, 1))
    with pytest.raises(ValueError):
        Tabulated((0, 1), (1, -1))
    with pytest.raises(ValueError):
        Constant(-1.0)
    with pytest.raises(ValueError):
        GFunctionSpec.from_dict({"form": "spline"})
    assert SHIFTED.support_left == -1.0


def test_tabulated_extrapolation_warns():
    g = Tabulated((0.0, 1.0), (1.0, 1.0))
    with pytest.warns(UserWarning):
        g(np.array([2.0]))


def test_report_normal():
    rep = build_tail_report(ONE, NORMAL_MEAN_ABS, [0.5, 1.0, 2.0, 3.0, 4.0], c_prime=0.5)
    assert rep.violations == []
    assert np.allclose(rep.tail, rep.bound_envelopes["normal_tail"], atol=1e-8)
    header = rep.to_csv().splitlines()[0].split(",")
    assert header[:3] == ["x", "tail", "density"] and header[-1] == "violation_flag"
    json.loads(rep.to_json())


def test_report_flags_violation():
    rep = build_tail_report(ONE, 1.5 * NORMAL_MEAN_ABS, [1.0, 3.0])
    assert ("upper_G", 3.0) in rep.violations
    assert rep.violation_flags() == [0, 1]


def test_report_invariants():
    with pytest.raises(ValueError):
        TailReport([0.0], [1.5], [0.1])
    with pytest.raises(ValueError):
        TailReport([0.0], [0.5], [-0.1])


@settings(max_examples=25, deadline=None)
@given(st.floats(0.2, 5.0), st.floats(0.0, 3.0), st.lists(st.floats(0, 6), min_size=2, max_size=5))
def test_property_A_nonincreasing(alpha, beta, xs):
    g = Affine(alpha, beta)
    xs = sorted(xs)
    vals = [integral_A(g, x) for x in xs]
    assert vals[0] <= 1.0 + 1e-15
    assert all(b <= a + 1e-14 for a, b in zip(vals, vals[1:]))
    assert all(v > 0 for v in vals)


@settings(max_examples=15, deadline=None)
@given(st.floats(0.3, 3.0))
def test_property_constant_g_is_scaled_normal(c):
    # g = c means X ~ N(0, c), E|X| = sqrt(2c/pi)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        s = tail_from_g(Constant(c), math.sqrt(2 * c / math.pi), 1.0)
    assert s == pytest.approx(float(normal_tail(1.0 / math.sqrt(c))), abs=1e-8)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.01, 50), st.floats(0.01, 0.99))
def test_property_stein_lower_below_normal_tail(z, c):
    assert stein_lower_bound(z, c) <= float(normal_tail(z))
