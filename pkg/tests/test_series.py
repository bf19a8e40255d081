import numpy as np
import pytest

from hardyhenon.params import derive, validate
from hardyhenon.series import (
    OutOfCase,
    SeriesCase,
    eval_origin,
    eval_touchdown,
    ode_residual_of_series,
    origin_expansion,
    second_derivative_limit,
    series_case,
    touchdown_expansion,
    validity_radius,
)


def test_case_split():
    assert series_case(-0.5) is SeriesCase.SIGMA_IN_M1_0
    assert series_case(-1.0) is SeriesCase.SIGMA_EQ_M1
    assert series_case(-1.5) is SeriesCase.SIGMA_IN_M2_M1
    with pytest.raises(OutOfCase):
        series_case(-2.0)


def test_origin_limits():
    # V -> V0 and V'(r)/r^(sigma+1) -> -V0/(N+sigma) as r -> 0
    for sigma in (-0.5, -1.0, -1.5):
        p = validate(3, 2, sigma)
        exp = origin_expansion(p, 2.0)
        r = np.array([1e-12, 1e-11])
        V, Vp = eval_origin(exp, r)
        assert V == pytest.approx(2.0, rel=1e-5)
        ratio = Vp / r ** (sigma + 1.0)
        assert ratio[0] == pytest.approx(-2.0 / (3 + sigma), rel=1e-5)


def test_sigma_minus_one_slope_example():
    # N=2, sigma=-1, m=2, V0=1: V'(r) = -1 + r + o(r)
    p = validate(2, 2, -1.0)
    exp = origin_expansion(p, 1.0)
    r = np.array([1e-3, 1e-2])
    _, Vp = eval_origin(exp, r)
    assert np.allclose(Vp, -1.0 + r, rtol=0, atol=1e-14)


def test_zero_height():
    p = validate(3, 2, -1.0)
    exp = origin_expansion(p, 0.0)
    V, Vp = eval_origin(exp, np.array([1e-4, 1e-2]))
    assert np.all(V == 0.0)
    assert np.all(Vp == 0.0)


def test_case_mismatch_raises():
    p = validate(3, 2, -0.5)
    exp = origin_expansion(p, 1.0)
    bad = type(exp)(
        case=SeriesCase.SIGMA_EQ_M1, V0=exp.V0, c1=exp.c1, c2=exp.c2,
        e1=exp.e1, e2=exp.e2, N=exp.N, m=exp.m, sigma=exp.sigma,
    )
    with pytest.raises(OutOfCase):
        eval_origin(bad, 0.01)


def test_second_derivative_examples():
    # sigma=-1, N=2, m=2, V0=1 -> V''(0) = 1/2 + 1/2 = 1
    pred = second_derivative_limit(validate(2, 2, -1.0), 1.0)
    assert pred.constant == pytest.approx(1.0, rel=1e-14)
    # sigma=-1/2, N=3, V0=1 -> leading coefficient -(1/2)/(5/2) = -1/5 on r^sigma
    pred = second_derivative_limit(validate(3, 2, -0.5), 1.0)
    coef, e = pred.terms[0]
    assert e == -0.5
    assert coef == pytest.approx(-0.2, rel=1e-14)
    # V0 = 0 -> all terms vanish
    pred = second_derivative_limit(validate(3, 2, -0.5), 0.0)
    assert pred(np.array([0.1]))[0] == 0.0


def test_second_derivative_matches_series():
    # V'' of the two-term series equals the prediction (all three cases)
    for sigma in (-0.5, -1.0, -1.5):
        p = validate(3, 2, sigma)
        V0 = 1.7
        exp = origin_expansion(p, V0)
        pred = second_derivative_limit(p, V0)
        r = np.array([1e-5, 3e-5])
        d2 = (
            -exp.c1 * exp.e1 * (exp.e1 - 1.0) * r ** (exp.e1 - 2.0)
            + exp.c2 * exp.e2 * (exp.e2 - 1.0) * r ** (exp.e2 - 2.0)
        )
        assert np.allclose(d2, pred(r), rtol=1e-12)


def test_validity_radius_rule():
    p = validate(3, 2, -1.0)
    exp = origin_expansion(p, 1.0)
    eps = validity_radius(exp)
    assert 0.0 < eps <= 1e-4
    # retained last term is at most 1e-10 * V0 there
    assert abs(exp.c2) * eps ** exp.e2 <= 1.0000001e-10 * exp.V0


def test_touchdown_values():
    der = derive(validate(3, 2, -1.0))
    exp = touchdown_expansion(der, R=2.0)
    V, Vp = eval_touchdown(exp, 2.0)
    assert V == 0.0 and Vp == 0.0
    V, Vp = eval_touchdown(exp, 1.9)
    assert V == pytest.approx((1.0 / 144.0) * 0.1 ** 4, rel=1e-13)
    assert V == pytest.approx(6.944e-7, rel=1e-3)
    assert Vp < 0.0


def test_touchdown_balance_ratio():
    # V''(r)(m-1)/V^(1/m)(r) -> 1 approaching R, via numerical differences
    for m in (1.5, 2.0, 3.0):
        p = validate(3, m, -1.0)
        der = derive(p)
        exp = touchdown_expansion(der, R=1.0)
        r = 1.0 - 1e-3
        h = 1e-7
        Vm, _ = eval_touchdown(exp, r - h)
        V0, _ = eval_touchdown(exp, r)
        Vp_, _ = eval_touchdown(exp, r + h)
        d2 = (Vm - 2 * V0 + Vp_) / h ** 2
        ratio = d2 * (m - 1.0) / V0 ** (1.0 / m)
        assert ratio == pytest.approx(1.0, rel=1e-5)


@pytest.mark.parametrize("sigma", [-0.5, -1.0, -1.5])
def test_series_residual_higher_order(sigma):
    # log-log slope of the equation residual on r in [1e-6, 1e-3] must
    # match the first omitted order, which exceeds every retained one
    N, m = 3, 2.0
    p = validate(N, m, sigma)
    exp = origin_expansion(p, 1.3)
    r = np.geomspace(1e-6, 1e-3, 31)
    res = np.abs(ode_residual_of_series(p, exp, r))
    slope = np.polyfit(np.log(r), np.log(res), 1)[0]
    if sigma == -1.0:
        expected = float(N)  # next correction after the r^(N-1) balance
    elif sigma > -1.0:
        expected = N + 2.0 * sigma + 1.0
    else:
        expected = min(N - 1.0, N + 3.0 * sigma + 3.0)
    kept_max = N - 1.0 if sigma >= -1.0 else N + 2.0 * sigma + 1.0
    assert slope > kept_max + 0.05
    assert slope == pytest.approx(expected, rel=0.05)


def test_c1_continuous_across_sigma_cases():
    # the r^(sigma+2) coefficient tends to the sigma=-1 value from both sides
    V0 = 1.7
    target = origin_expansion(validate(3, 2, -1.0), V0).c1
    for eps in (1e-3, 1e-5):
        lo = origin_expansion(validate(3, 2, -1.0 - eps), V0).c1
        hi = origin_expansion(validate(3, 2, -1.0 + eps), V0).c1
        assert lo == pytest.approx(target, rel=5 * eps)
        assert hi == pytest.approx(target, rel=5 * eps)
