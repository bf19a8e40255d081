"""Shooting solver for the radial profile equation.

Integrates the flux system

    V' = W / r^(N-1),   W' = r^(N-1) [ max(V,0)^(1/m)/(m-1) - r^sigma V ]

from a series-initialized start near r = 0, classifies each trajectory
(Crossed / Rebounded / Touchdown), and bisects on the initial height
V(0) to locate the compactly supported solution and its support radius.
Small heights rebound (absorption turns the profile around while it is
still positive); large heights cross zero (the singular potential wins);
the solution sits at the threshold.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np
from scipy.integrate import solve_ivp

from .errors import BracketInvalid, IntegratorStall, NonConvergence
from .params import ProblemParams, Regime, derive
from .radial import RadialProfile
from .series import eval_origin, eval_touchdown, origin_expansion, touchdown_expansion, validity_radius

log = logging.getLogger(__name__)


class ShotKind(Enum):
    CROSSED = "Crossed"
    REBOUNDED = "Rebounded"
    TOUCHDOWN = "Touchdown"


@dataclass(frozen=True)
class ShotOutcome:
    kind: ShotKind
    V0: float
    r_event: float
    V_event: float
    Vprime_event: float
    hit_rmax: bool = False
    sol: object = None  # scipy OdeSolution when dense output was requested
    r_start: float = 0.0


@dataclass(frozen=True)
class ShootControls:
    rtol: float = 1e-10
    atol: float = 1e-12
    eps_cap: float = 1e-4
    series_tol: float = 1e-10
    r_max: float | None = None
    r_max_factor: float = 50.0
    r_max_cap: float = 1e5
    touch_tol: float = 1e-12    # |V| <= touch_tol * V0 at touchdown
    slope_tol: float = 1e-12    # |V'| <= slope_tol * V0 at touchdown
    max_iter: int = 200
    bracket_rtol: float = 1e-13
    graft_rel: float = 1e-15
    n_profile: int = 4000
    grid_margin: float = 1.15
    fit_window: tuple = (1e-9, 1e-6)  # V/V0 range used to seed the R estimate
    match_level: float = 1e-4   # V/V0 level where backward meets forward
    back_start_rel: float = 1e-16  # V/V0 at the backward start radius


@dataclass(frozen=True)
class ShootingResult:
    V0_star: float
    R: float
    profile: RadialProfile
    bracket_width: float
    integrator_tolerance: float
    r0_tail: float
    n_iterations: int
    diagnostics: dict = field(default_factory=dict)


def tail_radius_heuristic(params: ProblemParams, V0: float) -> float:
    """Radius where the tail smallness condition holds if V <= V0:
    r^sigma V^((m-1)/m) <= 1/(2(m-1))."""
    m, s = params.m, params.sigma
    return (2.0 * (m - 1.0) * max(V0, 1e-300) ** ((m - 1.0) / m)) ** (-1.0 / s)


def _default_r_max(params: ProblemParams, V0: float, controls: ShootControls) -> float:
    if controls.r_max is not None:
        return controls.r_max
    r0 = tail_radius_heuristic(params, V0)
    return float(min(max(controls.r_max_factor * r0, 10.0), controls.r_max_cap))


def _probe_start(params: ProblemParams, V0: float, eps: float):
    """Formal start for sigma <= -2 probes: V(eps)=V0 and the flux from
    integrating the right side with V frozen at V0 (the origin series
    does not exist in this regime; classification only)."""
    N, m, s = params.N, params.m, params.sigma
    W = V0 ** (1.0 / m) * eps ** N / (N * (m - 1.0)) - V0 * eps ** (N + s) / (N + s)
    return V0, W


def integrate_from(
    params: ProblemParams,
    V0: float,
    controls: ShootControls = ShootControls(),
    dense: bool = False,
) -> ShotOutcome:
    """Integrate one shot and classify the first terminal event."""
    N, m, s = params.N, params.m, params.sigma
    if V0 == 0.0:
        return ShotOutcome(ShotKind.TOUCHDOWN, 0.0, controls.eps_cap, 0.0, 0.0)
    if params.regime is Regime.ADMISSIBLE:
        exp = origin_expansion(params, V0)
        eps = validity_radius(exp, rel_tol=controls.series_tol, cap=controls.eps_cap)
        Ve, Vpe = eval_origin(exp, eps)
        We = eps ** (N - 1) * Vpe
    else:
        eps = controls.eps_cap
        Ve, We = _probe_start(params, V0, eps)
    if We >= 0.0:
        # profile already turning at the start: rebound at tiny radius
        return ShotOutcome(ShotKind.REBOUNDED, V0, eps, float(Ve), 0.0, r_start=eps)

    r_max = _default_r_max(params, V0, controls)
    nm1 = N - 1
    inv_m1 = 1.0 / (m - 1.0)
    pw = 1.0 / m

    def rhs(r, y):
        V, W = y
        rn = r ** nm1
        Vp = W / rn
        Wp = rn * (max(V, 0.0) ** pw * inv_m1 - r ** s * V)
        return (Vp, Wp)

    def ev_cross(r, y):
        return y[0]

    ev_cross.terminal = True
    ev_cross.direction = -1.0

    def ev_rebound(r, y):
        return y[1]

    ev_rebound.terminal = True
    ev_rebound.direction = 1.0

    sol = solve_ivp(
        rhs,
        (eps, r_max),
        np.array([Ve, We]),
        method="DOP853",
        rtol=controls.rtol,
        atol=controls.atol,
        events=(ev_cross, ev_rebound),
        dense_output=dense,
    )
    if sol.status == -1:
        raise IntegratorStall(sol.message)

    if sol.status == 1:
        crossed = len(sol.t_events[0]) > 0
        r_e = float(sol.t_events[0][0] if crossed else sol.t_events[1][0])
        y_e = sol.y_events[0][0] if crossed else sol.y_events[1][0]
        V_e = float(y_e[0])
        Vp_e = float(y_e[1] / r_e ** nm1)
        if abs(V_e) <= controls.touch_tol * V0 and abs(Vp_e) <= controls.slope_tol * V0:
            kind = ShotKind.TOUCHDOWN
        elif crossed:
            kind = ShotKind.CROSSED
        else:
            kind = ShotKind.REBOUNDED
        return ShotOutcome(kind, V0, r_e, V_e, Vp_e, sol=sol.sol if dense else None, r_start=eps)
    # no event up to r_max: report as rebound-like with the flag set
    V_e = float(sol.y[0, -1])
    Vp_e = float(sol.y[1, -1] / sol.t[-1] ** nm1)
    return ShotOutcome(
        ShotKind.REBOUNDED, V0, float(sol.t[-1]), V_e, Vp_e, hit_rmax=True,
        sol=sol.sol if dense else None, r_start=eps,
    )


def scan_bracket(params: ProblemParams, V0_grid, controls: ShootControls = ShootControls()):
    """Classify each height; used to locate sign-change brackets.

    Classification only needs the event sign, so the scan runs at
    loosened tolerances; the bisection re-integrates at full accuracy."""
    out = []
    scan_controls = replace(controls, rtol=max(controls.rtol, 1e-8), atol=max(controls.atol, 1e-10))
    for V0 in np.atleast_1d(np.asarray(V0_grid, dtype=float)):
        out.append((float(V0), integrate_from(params, float(V0), scan_controls).kind))
    kinds = [k for _, k in out]
    changes = [
        i for i in range(len(kinds) - 1)
        if kinds[i] is not kinds[i + 1]
    ]
    if len(changes) > 1:
        log.warning(
            "non-monotone shot classification: %d brackets found at %s",
            len(changes),
            [(out[i][0], out[i + 1][0]) for i in changes],
        )
    return out


def find_bracket(
    params: ProblemParams,
    controls: ShootControls = ShootControls(),
    lo: float = 1e-6,
    hi: float = 1e6,
    per_decade: int = 2,
):
    """Geometric scan for an adjacent (Crossed, Rebounded) pair."""
    ndec = int(np.ceil(np.log10(hi / lo)))
    grid = np.geomspace(lo, hi, per_decade * ndec + 1)
    scan = scan_bracket(params, grid, controls)
    for (v_a, k_a), (v_b, k_b) in zip(scan[:-1], scan[1:]):
        if {k_a, k_b} == {ShotKind.CROSSED, ShotKind.REBOUNDED}:
            return (v_a, v_b)
        if ShotKind.TOUCHDOWN in (k_a, k_b):
            return (v_a, v_b)
    raise BracketInvalid(
        f"no classification change on [{lo}, {hi}]: all shots {scan[0][1].value}"
    )


def _touchdown_a1(params: ProblemParams, R: float) -> float:
    """First correction of the contact series V = K s^w (1 + a1 s)."""
    m = params.m
    return (params.N - 1.0) * m / ((3.0 * m + 1.0) * max(R, 1e-300))


def _estimate_R(params, der, sol, r_lo, r_hi, V0, controls):
    """Support radius from trusted trajectory points via the two-term
    contact series, using V and V' jointly."""
    K, w = der.touchdown_K, der.omega
    rs = np.linspace(r_lo, r_hi, 64)
    ys = sol(rs)
    V = ys[0]
    Vp = ys[1] / rs ** (params.N - 1)
    good = (V > 0) & (Vp < 0)
    v_lo, v_hi = controls.fit_window
    good &= (V >= v_lo * V0 * 1e-1) & (V <= v_hi * V0 * 1e2)
    if not np.any(good):
        good = (V > 0) & (Vp < 0)
    rs, V, Vp = rs[good], V[good], Vp[good]
    rho = -V / Vp
    s = w * rho  # leading-order distance to the edge
    R_est = np.median(rs + s)
    for _ in range(2):
        a1 = _touchdown_a1(params, R_est)
        # rho (w + (w+1) a1 s) = s (1 + a1 s)  ->  quadratic in s
        A = a1 * np.ones_like(rho)
        B = 1.0 - (w + 1.0) * a1 * rho
        C = -w * rho
        disc = np.maximum(B * B - 4 * A * C, 0.0)
        s = np.where(A > 0, (-B + np.sqrt(disc)) / (2 * A), -C / B)
        R_est = float(np.median(rs + s))
    return R_est


def _rhs_factory(params: ProblemParams):
    nm1 = params.N - 1
    inv_m1 = 1.0 / (params.m - 1.0)
    pw = 1.0 / params.m
    s = params.sigma

    def rhs(r, y):
        V, W = y
        rn = r ** nm1
        return (W / rn, rn * (max(V, 0.0) ** pw * inv_m1 - r ** s * V))

    return rhs


def _integrate_back_from_edge(params, der, R, r_match, v_start, rtol, dense=True):
    """Integrate from the support edge inward, starting on the contact
    series at the radius where V = v_start. The edge is the attracting
    direction of the backward flow, so this leg is clean to any depth."""
    K, w = der.touchdown_K, der.omega
    s0 = max((v_start / K) ** (1.0 / w), 1e-280)
    a1 = _touchdown_a1(params, R)
    Vs = K * s0 ** w * (1.0 + a1 * s0)
    Vps = -K * s0 ** (w - 1.0) * (w + (w + 1.0) * a1 * s0)
    r0 = R - s0
    y0 = np.array([Vs, r0 ** (params.N - 1) * Vps])
    sol = solve_ivp(
        _rhs_factory(params),
        (r0, r_match),
        y0,
        method="DOP853",
        rtol=rtol,
        atol=1e-6 * v_start,
        dense_output=dense,
        first_step=s0 / 8.0,
    )
    if sol.status != 0:
        raise IntegratorStall(f"backward leg failed: {sol.message}")
    return sol


def _refine_R_by_matching(params, der, sol_fwd, R0, V0, controls):
    """Choose R so the backward edge solution lands on the forward
    trajectory: root of the log-height mismatch at the matching radius."""
    # matching radius: where the forward height crosses match_level * V0
    rs = np.linspace(sol_fwd.t_min, sol_fwd.t_max, 4000)
    Vf = sol_fwd(rs)[0]
    lvl = controls.match_level * V0
    below = np.nonzero(Vf <= lvl)[0]
    r_match = float(rs[below[0]]) if len(below) else float(rs[-1] - 0.05 * (rs[-1] - rs[0]))
    V_target = float(sol_fwd(r_match)[0])
    if V_target <= 0.0:
        return R0, r_match
    v_start = controls.back_start_rel * V0

    def mismatch(R):
        sol_b = _integrate_back_from_edge(
            params, der, R, r_match, v_start, controls.rtol, dense=False
        )
        Vb = float(sol_b.y[0, -1])
        if Vb <= 0.0:
            return -50.0
        return float(np.log(Vb) - np.log(V_target))

    from scipy.optimize import brentq

    delta = max(1e-4 * R0, 1e-10)
    lo, hi = R0 - delta, R0 + delta
    flo, fhi = mismatch(lo), mismatch(hi)
    grow = 0
    while flo * fhi > 0.0 and grow < 12:
        delta *= 4.0
        lo, hi = R0 - delta, R0 + delta
        flo, fhi = mismatch(lo), mismatch(hi)
        grow += 1
    if flo * fhi > 0.0:
        log.warning("edge matching failed to bracket R; keeping series estimate")
        return R0, r_match
    R = brentq(mismatch, lo, hi, xtol=1e-13 * max(R0, 1.0), rtol=1e-15)
    return float(R), r_match


def bisect_for_support(
    params: ProblemParams,
    bracket,
    controls: ShootControls = ShootControls(),
) -> ShootingResult:
    """Bisect the initial height between a crossing and a rebounding shot
    until the bracket is resolved, then assemble the final profile with
    the origin series below the start radius and the touchdown series
    grafted near the support radius."""
    der = derive(params)
    v_a, v_b = float(bracket[0]), float(bracket[1])
    k_a = integrate_from(params, v_a, controls).kind
    k_b = integrate_from(params, v_b, controls).kind
    direct = None
    if k_a is ShotKind.TOUCHDOWN:
        direct, width = v_a, abs(v_b - v_a)
    elif k_b is ShotKind.TOUCHDOWN:
        direct, width = v_b, abs(v_b - v_a)
    elif k_a is k_b:
        raise BracketInvalid(f"both endpoints classify as {k_a.value}")

    n_it = 0
    if direct is None:
        if k_a is ShotKind.REBOUNDED:
            v_cross, v_reb = v_b, v_a
        else:
            v_cross, v_reb = v_a, v_b
        for n_it in range(1, controls.max_iter + 1):
            width = abs(v_cross - v_reb)
            if width <= controls.bracket_rtol * max(v_cross, v_reb):
                break
            mid = 0.5 * (v_cross + v_reb)
            out = integrate_from(params, mid, controls)
            if out.kind is ShotKind.TOUCHDOWN:
                direct = mid
                break
            if out.kind is ShotKind.CROSSED:
                v_cross = mid
            else:
                v_reb = mid
        else:
            raise NonConvergence(
                f"bisection did not resolve the bracket in {controls.max_iter} iterations"
            )
        V0_star = direct if direct is not None else 0.5 * (v_cross + v_reb)
        width = abs(v_cross - v_reb)
    else:
        V0_star = direct

    final = integrate_from(params, V0_star, controls, dense=True)
    if final.sol is None:
        raise IntegratorStall("no dense output on the final trajectory")
    R0 = _estimate_R(
        params, der, final.sol,
        *_trust_range(params, final, V0_star, controls), V0_star, controls,
    )
    R, r_match = _refine_R_by_matching(params, der, final.sol, R0, V0_star, controls)
    sol_back = _integrate_back_from_edge(
        params, der, R, r_match, controls.back_start_rel * V0_star, controls.rtol
    )
    profile = _assemble_profile(
        params, der, final, sol_back, r_match, V0_star, R, controls
    )
    r0_tail = _tail_radius_on_profile(params, profile)
    return ShootingResult(
        V0_star=V0_star,
        R=R,
        profile=profile,
        bracket_width=width,
        integrator_tolerance=controls.rtol,
        r0_tail=r0_tail,
        n_iterations=n_it,
        diagnostics={
            "final_kind": final.kind.value,
            "r_event": final.r_event,
            "eps_start": final.r_start,
            "R_series_estimate": R0,
            "r_match": r_match,
        },
    )


def _trust_range(params, outcome, V0, controls):
    """Radii whose V values sit in the R-fit window on the final shot."""
    sol = outcome.sol
    v_lo, v_hi = controls.fit_window
    rs = np.linspace(sol.t_min, sol.t_max, 2000)
    V = sol(rs)[0]
    mask = (V >= v_lo * V0) & (V <= v_hi * V0)
    if not np.any(mask):
        # fall back to the last descending stretch
        return 0.95 * sol.t_max, sol.t_max
    return float(rs[mask][0]), float(rs[mask][-1])


def _tail_radius_on_profile(params: ProblemParams, profile: RadialProfile) -> float:
    m, s = params.m, params.sigma
    r = profile.nodes[1:]
    V = profile.values[1:]
    ok = np.nonzero(r ** s * V ** ((m - 1.0) / m) <= 1.0 / (2.0 * (m - 1.0)))[0]
    return float(r[ok[0]]) if len(ok) else float("nan")


def _assemble_profile(params, der, outcome, sol_back, r_match, V0, R, controls) -> RadialProfile:
    """Final profile: origin series on [0, eps], forward trajectory up to
    the matching radius, backward edge leg beyond it, touchdown series
    where V < graft_rel * V0, zero beyond R."""
    N = params.N
    sol = outcome.sol
    eps = outcome.r_start
    exp0 = origin_expansion(params, V0)
    tdexp = touchdown_expansion(der, R)

    # graft radius: V(r_graft) = graft_rel * V0 by the contact series;
    # must stay inside the backward leg's range [r_match, R - s0]
    s_graft = (controls.graft_rel * V0 / der.touchdown_K) ** (1.0 / der.omega)
    s_back0 = R - float(np.max(sol_back.t))
    r_graft = R - max(s_graft, s_back0, 1e-14 * R)

    n = controls.n_profile
    n_series = max(16, n // 80)
    n_td = max(80, n // 10)
    n_tail = max(8, n // 200)
    n_log = max(80, n // 10)
    n_mid = max(50, n - n_series - n_td - n_tail - n_log - 2)

    r_series = np.concatenate([[0.0], np.geomspace(eps * 1e-3, eps, n_series)])
    r_log_hi = min(0.1 * R, 0.5 * r_match)
    r_log = np.geomspace(eps, r_log_hi, n_log + 1)[1:]
    s_mid_end = max(R - r_match, 1e-3 * R)
    r_mid = np.linspace(r_log_hi, R - s_mid_end, n_mid + 1)[1:]
    # edge region resolved logarithmically in distance to the boundary
    r_td = R - np.geomspace(max(s_graft, 1e-14 * R), s_mid_end, n_td)[::-1][1:]
    r_beyond = np.linspace(R, controls.grid_margin * R, n_tail + 1)

    nodes = np.unique(np.concatenate([r_series, r_log, r_mid, r_td, r_beyond]))

    V = np.empty_like(nodes)
    D = np.empty_like(nodes)

    m_series = nodes <= eps
    Vs, Ds = eval_origin(exp0, nodes[m_series])
    V[m_series] = Vs
    D[m_series] = Ds
    if nodes[0] == 0.0:
        V[0] = V0
        if not np.isfinite(D[0]):
            # sigma < -1: the true slope diverges at the origin; a finite
            # stand-in on the ~1e-8 R first cell is below roundoff in
            # every functional
            D[0] = 0.0

    m_fwd = (nodes > eps) & (nodes <= r_match)
    ys = sol(nodes[m_fwd])
    V[m_fwd] = ys[0]
    D[m_fwd] = ys[1] / nodes[m_fwd] ** (N - 1)

    m_back = (nodes > r_match) & (nodes <= r_graft)
    yb = sol_back.sol(nodes[m_back])
    V[m_back] = yb[0]
    D[m_back] = yb[1] / nodes[m_back] ** (N - 1)

    m_td = nodes > r_graft
    Vt, Dt = eval_touchdown(tdexp, nodes[m_td])
    V[m_td] = Vt
    D[m_td] = Dt

    V = np.maximum(V, 0.0)
    V[nodes >= R] = 0.0
    D[nodes >= R] = 0.0
    # guard against interpolation-level wiggles from the dense output
    V = np.minimum.accumulate(V)

    return RadialProfile(
        nodes=nodes, values=V, derivs=D, support_radius=R, monotone=True
    )
