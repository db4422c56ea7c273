import numpy as np
import pytest

import parajacobi as pj
from parajacobi.errors import ExtractionError, OutOfScopeError
from parajacobi.family import FamilyDescriptor, PeriodicData
from parajacobi.tempered import (
    TemperedLimits,
    d1n_diagnostic,
    estimate_limits,
    frak_S_check,
    lambda_sets,
    tau,
)

INF = float("inf")


def test_yafaev_constant_tau(yaf_2_05_0):
    fam, dec, lim = yaf_2_05_0
    # kappa + 2g - 2f = 1 at every x
    assert abs(tau(lim, -3.0) - 1.0) <= 1e-2
    assert abs(tau(lim, 5.0) - 1.0) <= 1e-2
    assert lim.t == 0
    assert abs(lim.S) <= 1e-3
    assert abs(lim.U - 1.0) <= 1e-3


def test_yafaev_negative_tau(yaf_125_1_0):
    _, _, lim = yaf_125_1_0
    assert abs(tau(lim, 0.0) - (-0.75)) <= 1e-2


def test_bd_power_linear_tau(bd15):
    fam, dec, lim = bd15
    assert lim.t == 1
    assert abs(lim.S) <= 1e-2
    assert abs(lim.U) <= 1e-6
    assert abs(tau(lim, 2.0) - (-2.0)) <= 1e-2
    assert abs(tau(lim, 0.0)) <= 1e-6
    assert abs(lim.x0) <= 1e-6


def test_bd_power_diag_defect_equals_ratio_defect():
    fam = pj.build_bd_power(1.7)
    n = np.arange(1, 4000)
    lhs = fam.periodic.beta_at(n) / fam.periodic.alpha_at(n) - fam.b_at(n) / fam.a_at(n)
    rhs = fam.periodic.alpha_at(n - 1) / fam.periodic.alpha_at(n) - fam.a_at(n - 1) / fam.a_at(n)
    np.testing.assert_allclose(lhs, rhs, rtol=1e-12)


def test_symmetric_bd_slope(symbd2):
    """The N = 2, alpha = (2, 1) symmetric birth-death family has tau = -3 x.

    -N * sum(1/alpha) = -3 is what the defining discriminant limit gives
    (cross-checked in test_evolve); the variant closed form
    -(sum alpha_{i-1}/alpha_i)(sum 1/alpha_i) = -3.75 does not match it.
    """
    fam, dec, lim = symbd2
    N = fam.periodic.N
    expected = -N * float(np.sum(1.0 / fam.periodic.alpha))
    assert expected == -3.0
    assert abs(lim.tau_slope - expected) <= 1e-2 * abs(expected)
    assert abs(lim.tau_intercept) <= 1e-2
    assert lim.t == 1
    assert lim.epsilon == 1


def test_tau_evaluation_vectorized(bd15):
    _, _, lim = bd15
    xs = np.array([-2.0, 0.5, 2.0])
    np.testing.assert_allclose(tau(lim, xs), -xs, atol=2e-2)


def test_S_nonnegative_on_catalog(bd15, bd125, yaf_2_05_0, yaf_125_1_0, symbd2):
    for _, _, lim in (bd15, bd125, yaf_2_05_0, yaf_125_1_0, symbd2):
        assert lim.S >= -1e-6


def test_x0_is_root(bd15, symbd2):
    for _, _, lim in (bd15, symbd2):
        if lim.t != 0:
            assert abs(tau(lim, lim.x0)) <= 1e-10


def _limits(slope, intercept, t=1, eps=-1):
    trd = slope / (t * eps) if t else 1.0
    return TemperedLimits(
        s=np.zeros(1), r=np.zeros(1), t=t, t_raw=float(t), u=np.array([intercept]),
        S=0.0, U=intercept, tau_slope=slope, tau_intercept=intercept,
        x0=None if slope == 0 else -intercept / slope,
        epsilon=eps, trace_derivative=trd, window={},
    )


def test_lambda_sets_shapes(bd15, yaf_2_05_0, yaf_125_1_0):
    _, _, lim = bd15
    sets = lambda_sets(lim)
    assert sets.x0 == pytest.approx(0.0, abs=1e-6)
    ((lo, hi),) = sets.lambda_minus
    assert (lo, hi) == (pytest.approx(0.0, abs=1e-6), INF)
    ((lo2, hi2),) = sets.lambda_plus
    assert (lo2, hi2) == (-INF, pytest.approx(0.0, abs=1e-6))

    _, _, limp = yaf_2_05_0
    sets = lambda_sets(limp)
    assert sets.lambda_minus == ()
    assert sets.lambda_plus == ((-INF, INF),)

    _, _, limm = yaf_125_1_0
    sets = lambda_sets(limm)
    assert sets.lambda_minus == ((-INF, INF),)
    assert sets.lambda_plus == ()


def test_lambda_sets_zero_tau_out_of_scope():
    with pytest.raises(OutOfScopeError):
        lambda_sets(_limits(0.0, 0.0, t=0))


def test_d1n_diagnostic_examples():
    assert d1n_diagnostic(lambda n: 1.0 / n, 1)["verdict"] == "pass"
    assert d1n_diagnostic(lambda n: (-1.0) ** np.asarray(n, dtype=int), 1)["verdict"] == "warn"
    assert d1n_diagnostic(lambda n: np.log(n), 1)["verdict"] == "warn"


def test_frak_S_check_small_on_catalog(bd15):
    fam, dec, lim = bd15
    assert frak_S_check(fam, lim, 10**6) <= 2e-2
    fam0 = pj.build_yafaev(2.0, 0.0, 0.0)
    dec0 = pj.decompose(fam0.periodic)
    lim0 = estimate_limits(fam0, dec0, 10**6)
    assert frak_S_check(fam0, lim0, 10**6) <= 1e-3


def test_guard_band_raises():
    # gamma/a -> 1/2 violates the two-valued limit hypothesis
    def a(n):
        return 2.0 * (n + 1.0) ** 1.5

    def b(n):
        n = np.asarray(n, dtype=float)
        return np.where(n >= 1, 2.0 * np.maximum(n, 1.0) ** 1.5, 0.0) + a(n)

    def gamma(n):
        return (n + 1.0) ** 1.5

    fam = FamilyDescriptor(a, b, gamma, PeriodicData(np.array([1.0]), np.array([2.0])),
                           "guard-band")
    dec = pj.decompose(fam.periodic)
    with pytest.raises(ExtractionError):
        estimate_limits(fam, dec, 10**5)


def test_nonconvergent_tail_raises():
    def a(n):
        return (n + 1.0) ** 1.5

    def b(n):
        n = np.asarray(n, dtype=float)
        base = np.where(n >= 1, np.maximum(n, 1.0) ** 1.5, 0.0) + a(n)
        return base + np.sin(n / 1000.0) * np.sqrt(a(n))

    fam = FamilyDescriptor(a, b, a, PeriodicData(np.array([1.0]), np.array([2.0])),
                           "wobbly")
    dec = pj.decompose(fam.periodic)
    with pytest.raises(ExtractionError):
        estimate_limits(fam, dec, 10**6)


def test_n_max_floor():
    fam = pj.build_bd_power(1.5)
    dec = pj.decompose(fam.periodic)
    with pytest.raises(ExtractionError):
        estimate_limits(fam, dec, 500)


def test_limits_json_block(bd15):
    _, _, lim = bd15
    block = lim.to_json()
    assert set(block) >= {"s", "r", "t", "u", "S", "U", "tau", "x0", "diagnostics"}
    assert block["tau"]["slope"] == pytest.approx(-1.0, abs=1e-6)
    assert isinstance(block["diagnostics"]["spreads"], dict)
