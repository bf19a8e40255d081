import numpy as np
import pytest

from hardyhenon.certificates import (
    CertificateReport,
    certify,
    decay_and_mass_bounds,
    envelope_check,
    nonexistence_certificate,
    pohozaev_combinations,
    pohozaev_residuals,
    ratio_check,
)
from hardyhenon.errors import DegenerateProfile, WrongRegime
from hardyhenon.params import Regime, derive, validate
from hardyhenon.radial import RadialProfile
from hardyhenon.shooting import ShootControls, bisect_for_support, find_bracket

P = validate(3, 2, -1)
DER = derive(P)


@pytest.fixture(scope="module")
def solution():
    ctrl = ShootControls(eps_cap=1e-6)
    return bisect_for_support(P, find_bracket(P, ctrl), ctrl)


def test_zero_profile_residuals():
    prof = RadialProfile(nodes=[0.0, 1.0], values=[0.0, 0.0])
    rho = pohozaev_residuals(P, prof)
    assert rho == (0.0, 0.0, 0.0)


def test_recombination_identity():
    # the elimination: combo3 == combo1 + (N+sigma)/2 * combo2, exactly,
    # for arbitrary (not necessarily solution) profiles
    rng = np.random.default_rng(5)
    for _ in range(20):
        D, L, W = rng.uniform(0.1, 10.0, size=3)
        c1, c2, c3 = pohozaev_combinations(P, D, L, W)
        assert c3 == pytest.approx(c1 + (P.N + P.sigma) / 2.0 * c2, rel=1e-14)


def test_converged_profile_residuals(solution):
    rho1, rho2, rho3 = pohozaev_residuals(P, solution.profile)
    assert rho1 <= 1e-6 and rho2 <= 1e-6 and rho3 <= 1e-6


def test_ratio_check(solution):
    ratio, predicted, err = ratio_check(P, solution.profile)
    assert predicted == pytest.approx(2.0)
    assert err <= 1e-5
    with pytest.raises(DegenerateProfile):
        ratio_check(P, RadialProfile(nodes=[0.0, 1.0], values=[0.0, 0.0]))


def test_envelope_on_solution(solution):
    env, violation = envelope_check(P, solution.profile, DER)
    assert violation <= 1e-12 * solution.V0_star
    m = P.m
    # admissibility and contact conditions of the envelope pair
    assert env.r0 ** P.sigma * env.M0 ** ((m - 1) / m) <= 1 / (2 * (m - 1)) * (1 + 1e-12)
    assert env.b * (env.b * env.r0 ** 2 + env.M0 ** ((m - 1) / (2 * m))) <= (m - 1) / (
        4 * m * (m + 1)
    )
    assert (env.a - env.b * env.r0 ** 2) ** DER.omega == pytest.approx(env.M0, rel=1e-12)


def test_envelope_is_supersolution_shape(solution):
    # the envelope itself, fed back as a profile, touches at r0 and
    # dominates itself (violation 0 by construction)
    env, _ = envelope_check(P, solution.profile, DER)
    r = np.linspace(0.0, env.outer_radius * 1.05, 800)
    vals = np.maximum(env.a - env.b * r ** 2, 0.0) ** DER.omega
    prof = RadialProfile(nodes=r, values=vals, monotone=True)
    env2, violation2 = envelope_check(P, prof, DER)
    assert violation2 <= 1e-12 * vals[0]


def test_envelope_detects_violation(solution):
    # scaling the tail up must produce a detected violation
    prof = solution.profile
    vals = prof.values.copy()
    env, _ = envelope_check(P, prof, DER)
    tail = prof.nodes >= env.r0
    vals[tail] *= 1.5
    vals = np.minimum.accumulate(vals)
    bumped = RadialProfile(nodes=prof.nodes, values=vals, monotone=True)
    _, violation = envelope_check(P, bumped, DER)
    assert violation > 0.0


def test_decay_bounds(solution):
    margins = decay_and_mass_bounds(P, solution.profile)
    assert margins["moment_bound"] >= 0.0
    assert margins["l2_bound"] >= 0.0
    zero = RadialProfile(nodes=[0.0, 1.0], values=[0.0, 0.0])
    assert decay_and_mass_bounds(P, zero)["moment_bound"] == float("inf")


def test_decay_bound_unit_step_closed_form():
    # V == 1 on [0,1], N=3, m=2: bound (i) reduces to r^-2, satisfied
    nodes = np.linspace(0, 1, 200)
    prof = RadialProfile(nodes=nodes, values=np.ones(200))
    L = (4.0 / 3.0) * np.pi  # int of 1^mu over the unit ball
    bound_at = lambda r: (L / P.unit_ball_volume) ** (2.0 / 3.0) * r ** -2.0
    assert bound_at(1.0) == pytest.approx(1.0, rel=1e-12)
    margins = decay_and_mass_bounds(P, prof)
    assert margins["moment_bound"] >= -1e-12


def test_nonexistence_certificate():
    probe = validate(3, 2, -2.0, regime=Regime.NONEXISTENCE_PROBE)
    out = nonexistence_certificate(probe)
    assert out["signs_certified"]
    assert out["coef_dirichlet"] == 0.0
    assert out["coef_absorption"] < 0.0
    probe3 = validate(3, 2, -3.0, regime=Regime.NONEXISTENCE_PROBE)
    out3 = nonexistence_certificate(probe3)
    assert out3["coef_dirichlet"] == -0.5
    assert out3["coef_absorption"] == -2.0
    # a nontrivial profile exhibits the strictly negative witness
    nodes = np.linspace(0, 2, 101)
    prof = RadialProfile(nodes=nodes, values=np.maximum(1 - nodes / 2, 0.0), monotone=True)
    w = nonexistence_certificate(probe3, prof)
    assert w["poh3_combination"] < 0.0
    assert w["witness_strictly_negative"]
    with pytest.raises(WrongRegime):
        nonexistence_certificate(P)


def test_certify_full_report(solution):
    rep = certify(P, solution.profile)
    assert isinstance(rep, CertificateReport)
    assert rep.all_pass, rep.verdicts
    assert rep.verdicts["poh1"] == "pass"
    assert rep.verdicts["second_derivative"] == "pass"  # sigma = -1 case
    assert rep.verdicts["touchdown_exponent"] == "pass"
    assert rep.verdicts["ode_flux"] == "pass"
    assert "refinement" in rep.diagnostics
    d = rep.as_dict()
    assert set(d["tolerances"]) >= {"poh1", "energy_ratio", "envelope_rel"}


def test_certify_probe_regime():
    probe = validate(3, 2, -2.5, regime=Regime.NONEXISTENCE_PROBE)
    nodes = np.linspace(0, 2, 51)
    prof = RadialProfile(nodes=nodes, values=np.maximum(1 - nodes / 2, 0.0), monotone=True)
    rep = certify(probe, prof)
    assert rep.verdicts == {"nonexistence_signs": "pass"}
    assert rep.diagnostics["nonexistence"]["witness_strictly_negative"]
