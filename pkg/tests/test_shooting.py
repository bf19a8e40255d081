import numpy as np
import pytest

from hardyhenon.errors import BracketInvalid
from hardyhenon.functionals import ode_flux_residual
from hardyhenon.params import Regime, derive, validate
from hardyhenon.series import eval_origin, origin_expansion
from hardyhenon.shooting import (
    ShotKind,
    ShootControls,
    bisect_for_support,
    find_bracket,
    integrate_from,
    scan_bracket,
    tail_radius_heuristic,
)

P = validate(3, 2, -1)
DER = derive(P)


@pytest.fixture(scope="module")
def solved():
    br = find_bracket(P)
    return bisect_for_support(P, br)


def test_zero_height_degenerate():
    out = integrate_from(P, 0.0)
    assert out.kind is ShotKind.TOUCHDOWN


def test_tiny_height_rebounds():
    # absorption turns a low profile around while it is still positive:
    # V' flips sign at r of order V0^((m-1)/m), with V near V0
    out = integrate_from(P, 1e-8)
    assert out.kind is ShotKind.REBOUNDED
    assert out.V_event > 0.0


def test_large_height_crosses():
    out = integrate_from(P, 1e5)
    assert out.kind is ShotKind.CROSSED
    assert out.Vprime_event < 0.0


def test_tolerance_consistency():
    # halving tolerances moves the mid-range solution by less than
    # 10x the looser tolerance scale
    loose = integrate_from(P, 50.0, ShootControls(rtol=1e-8, atol=1e-10), dense=True)
    tight = integrate_from(P, 50.0, ShootControls(rtol=1e-10, atol=1e-12), dense=True)
    r_probe = min(loose.r_event, tight.r_event) * 0.5
    v1 = loose.sol(r_probe)[0]
    v2 = tight.sol(r_probe)[0]
    assert abs(v1 - v2) <= 10 * 1e-8 * 50.0


def test_scan_single_point():
    out = scan_bracket(P, [1.0])
    assert len(out) == 1 and out[0][1] is ShotKind.REBOUNDED


def test_scan_finds_transition():
    grid = np.geomspace(1e-6, 1e6, 25)
    scan = scan_bracket(P, grid)
    kinds = [k for _, k in scan]
    changes = sum(1 for a, b in zip(kinds[:-1], kinds[1:]) if a is not b)
    assert changes >= 1


def test_bracket_invalid():
    with pytest.raises(BracketInvalid):
        bisect_for_support(P, (1e-4, 1e-3))  # both rebound


def test_bisection_shrinkage(solved):
    # width halves per iteration from the initial decade bracket
    assert solved.bracket_width <= 100.0 * 0.5 ** (solved.n_iterations - 1)


def test_result_profile_invariants(solved):
    prof = solved.profile
    assert prof.monotone and prof.is_nonincreasing()
    assert np.all(prof.values >= 0.0)
    assert prof.support_radius == solved.R
    assert np.all(prof.values[prof.nodes >= solved.R] == 0.0)
    assert prof.values[0] == pytest.approx(solved.V0_star, rel=1e-12)
    assert solved.bracket_width <= 1e-12 * solved.V0_star


def test_ode_flux_residual(solved):
    prof = solved.profile
    eps = solved.diagnostics["eps_start"]
    inside = np.nonzero((prof.nodes >= 2 * eps) & (prof.nodes <= solved.R))[0]
    res = ode_flux_residual(P, prof, i_from=int(inside[0]))
    assert np.max(np.abs(res[inside])) < 1e-8


def test_origin_expansion_agreement(solved):
    prof = solved.profile
    eps = solved.diagnostics["eps_start"]
    exp = origin_expansion(P, solved.V0_star)
    rs = np.geomspace(eps, 100 * eps, 25)
    V_prof = prof(rs)
    V_ser, _ = eval_origin(exp, rs)
    assert np.max(np.abs(V_prof - V_ser) / V_ser) < 1e-6
    # fitted exponent of the drop matches sigma+2 within 1%
    drop = solved.V0_star - V_prof
    slope = np.polyfit(np.log(rs), np.log(drop), 1)[0]
    assert slope == pytest.approx(P.sigma + 2.0, rel=0.01)


def test_touchdown_fit(solved):
    prof = solved.profile
    s = solved.R - prof.nodes
    mask = (prof.values > 0) & (s > 0) & (prof.nodes > solved.diagnostics["r_match"])
    s_lo = np.min(s[mask])
    mask &= (s >= 1.5 * s_lo) & (s <= 15 * s_lo)
    om, lk = np.polyfit(np.log(s[mask]), np.log(prof.values[mask]), 1)
    assert om == pytest.approx(DER.omega, rel=0.02)
    assert np.exp(lk) == pytest.approx(DER.touchdown_K, rel=0.05)


def test_tail_radius_reported(solved):
    r0 = solved.r0_tail
    assert np.isfinite(r0) and 0 < r0 < solved.R
    V_r0 = solved.profile(r0)
    m = P.m
    assert r0 ** P.sigma * V_r0 ** ((m - 1) / m) <= 1.0 / (2 * (m - 1)) * (1 + 1e-9)


def test_rmax_heuristic():
    assert tail_radius_heuristic(P, 87.0) > 0


def test_probe_regime_scan():
    # sigma <= -2: no touchdown classification anywhere (recorded, not
    # asserted as a theorem; the certificate is the sign condition)
    probe = validate(3, 2, -2.0, regime=Regime.NONEXISTENCE_PROBE)
    grid = np.geomspace(1e-2, 1e2, 9)
    scan = scan_bracket(probe, grid, ShootControls(rtol=1e-8, atol=1e-10))
    assert all(k is not ShotKind.TOUCHDOWN for _, k in scan)


def test_two_sided_match_quality(solved):
    # backward edge leg and forward trajectory agree at the matching
    # radius by construction; R is then good to ~1e-10 R
    dR = abs(solved.R - solved.diagnostics["R_series_estimate"])
    assert dR < 1e-3 * solved.R
