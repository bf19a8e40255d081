"""Constrained variational route.

Minimizes the discrete energy

    J_h(V) = V^T K V / 2 + m/(m^2-1) sum_i M_i V_i^mu

over non-negative non-increasing nodal profiles with the weighted
constraint sum_i Msig_i V_i^2 = 1, by projected descent: the step moves
along the constraint-tangential representative of the first variation in
the current-Hessian metric (a tridiagonal solve), followed by clip to
>= 0, weighted isotonic projection, and constraint normalization, with
monotone Armijo backtracking, coarse-to-fine grid continuation, and a
terminal Newton polish of the stationarity system. The converged profile
is rescaled by the multiplier into a solution of the unconstrained
equation, and the sharp-constant bookkeeping is evaluated on it.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import ConsistencyFailure, DegenerateProfile, NonConvergence
from .functionals import (
    dirichlet_energy,
    lmu_norm_pow,
    quotient_S,
    weighted_norm_sq,
)
from .params import DerivedConstants, ProblemParams, derive
from .quadrature import integrate_poly_cells
from .radial import RadialProfile, graded_grid

log = logging.getLogger(__name__)


@njit(cache=True)
def pava_nonincreasing(y, w):
    """Weighted least-squares projection onto non-increasing vectors
    (pool adjacent violators, O(n))."""
    n = y.shape[0]
    vals = np.empty(n)
    wts = np.empty(n)
    cnt = np.empty(n, np.int64)
    k = -1
    for i in range(n):
        k += 1
        vals[k] = y[i]
        wts[k] = w[i]
        cnt[k] = 1
        while k > 0 and vals[k - 1] < vals[k]:
            tot = wts[k - 1] + wts[k]
            vals[k - 1] = (wts[k - 1] * vals[k - 1] + wts[k] * vals[k]) / tot
            wts[k - 1] = tot
            cnt[k - 1] += cnt[k]
            k -= 1
    out = np.empty(n)
    idx = 0
    for b in range(k + 1):
        for _ in range(cnt[b]):
            out[idx] = vals[b]
            idx += 1
    return out


class DiscreteOperators:
    """P1 stiffness and lumped masses on a fixed radial grid, with exact
    power-weight cell integrals; defines the discrete J, its exact
    gradient, the weighted constraint, and the Hessian-metric solve
    (tridiagonal, so O(n) per application)."""

    def __init__(self, params: ProblemParams, nodes: np.ndarray):
        self.params = params
        self.nodes = np.asarray(nodes, dtype=float)
        n = len(self.nodes)
        h = np.diff(self.nodes)
        geom = params.sphere_factor
        s_cell = geom * integrate_poly_cells(params.N - 1, self.nodes, np.ones((n - 1, 1)))
        self.k_off = s_cell / h ** 2  # -k_off couples neighbors
        # lumped masses: int phi_i r^(N-1) dr (and the sigma-weighted one)
        up = np.stack([np.zeros(n - 1), np.ones(n - 1)], axis=1)      # t
        dn = np.stack([np.ones(n - 1), -np.ones(n - 1)], axis=1)      # 1-t
        for alpha, attr in ((params.N - 1, "mass"), (params.N - 1 + params.sigma, "mass_sig")):
            lo = geom * integrate_poly_cells(alpha, self.nodes, dn)
            hi = geom * integrate_poly_cells(alpha, self.nodes, up)
            mvec = np.zeros(n)
            mvec[:-1] += lo
            mvec[1:] += hi
            setattr(self, attr, mvec)
        self.h = h
        self._kdiag = np.zeros(n)
        self._kdiag[:-1] += self.k_off
        self._kdiag[1:] += self.k_off

    def metric_solve(self, V: np.ndarray, rhs_list, v_floor: float):
        """Solve (K + diag of the absorption curvature) x = rhs for each
        rhs. The curvature M V^(1/m-1)/(m(m-1)) is the exact Hessian of
        the discrete J; it is floored at v_floor so fully degenerate
        nodes keep a finite (large) weight."""
        from scipy.linalg import cho_solve_banded, cholesky_banded

        m = self.params.m
        curv = self.mass * np.maximum(V, v_floor) ** (1.0 / m - 1.0) / (m * (m - 1.0))
        n = len(V)
        ab = np.zeros((2, n))
        ab[0, 1:] = -self.k_off
        ab[1, :] = self._kdiag + curv
        cho = cholesky_banded(ab, lower=False)
        return [cho_solve_banded((cho, False), r) for r in rhs_list]

    def stiffness_apply(self, V: np.ndarray) -> np.ndarray:
        dV = np.diff(V)
        flux = self.k_off * dV
        out = np.zeros_like(V)
        out[:-1] -= flux
        out[1:] += flux
        return out

    def dirichlet(self, V: np.ndarray) -> float:
        return float(np.sum(self.k_off * np.diff(V) ** 2))

    def lmu(self, V: np.ndarray) -> float:
        return float(np.dot(self.mass, V ** self.params.mu))

    def J(self, V: np.ndarray) -> float:
        m = self.params.m
        return 0.5 * self.dirichlet(V) + m / (m * m - 1.0) * self.lmu(V)

    def grad_J(self, V: np.ndarray) -> np.ndarray:
        """Exact gradient of the discrete J: stiffness applied to V plus
        the mass-weighted V^(1/m)/(m-1) absorption term."""
        m = self.params.m
        return self.stiffness_apply(V) + self.mass * V ** (1.0 / m) / (m - 1.0)

    def constraint(self, V: np.ndarray) -> float:
        return float(np.dot(self.mass_sig, V * V))

    def constraint_grad(self, V: np.ndarray) -> np.ndarray:
        return 2.0 * self.mass_sig * V

    def normalize(self, V: np.ndarray) -> np.ndarray:
        c = self.constraint(V)
        if c <= 0.0:
            raise DegenerateProfile("constraint norm vanished")
        return V / math.sqrt(c)

    def multiplier_closed(self, V: np.ndarray) -> float:
        m = self.params.m
        return (self.dirichlet(V) + self.lmu(V) / (m - 1.0)) / self.constraint(V)

    def multiplier_lsq(self, V: np.ndarray) -> float:
        """Least-squares multiplier of the stationarity system in the
        equation's convention: grad J = lam * Msig V (so that
        lam = D + L/(m-1) on the unit constraint sphere)."""
        g = self.grad_J(V)
        c = self.mass_sig * V
        free = V > 0.0
        winv = 1.0 / np.maximum(self.mass, 1e-300)
        num = float(np.sum(g[free] * c[free] * winv[free]))
        den = float(np.sum(c[free] * c[free] * winv[free]))
        return num / den if den > 0 else float("nan")

    def kkt_residual(self, V: np.ndarray, lam: float | None = None) -> float:
        """Dual (inverse-mass weighted) norm of the projected gradient on
        the free nodes, pooled over isotonic blocks."""
        if lam is None:
            lam = self.multiplier_lsq(V)
        g = self.grad_J(V) - lam * self.mass_sig * V
        free = V > 0.0
        # pool residuals over flat (active monotone constraint) blocks
        blocks = np.concatenate([[0], np.cumsum(np.diff(V) != 0.0)])
        nb = blocks[-1] + 1
        gb = np.bincount(blocks[free], weights=g[free], minlength=nb)
        mb = np.bincount(blocks[free], weights=self.mass[free], minlength=nb)
        ok = mb > 0
        return float(np.sqrt(np.sum(gb[ok] ** 2 / mb[ok])))


def project_constraint(params: ProblemParams, profile: RadialProfile) -> RadialProfile:
    """Scale a profile onto the unit weighted sphere (report quadrature)."""
    w = weighted_norm_sq(params, profile, params.sigma)
    if w <= 0.0:
        raise DegenerateProfile("weighted norm vanishes")
    return RadialProfile(
        nodes=profile.nodes,
        values=profile.values / math.sqrt(w),
        derivs=None if profile.derivs is None else profile.derivs / math.sqrt(w),
        support_radius=profile.support_radius,
        monotone=profile.monotone,
    )


def gradient_J(params: ProblemParams, profile: RadialProfile) -> np.ndarray:
    """Nodal gradient of the discrete J on the profile's own grid."""
    ops = DiscreteOperators(params, profile.nodes)
    return ops.grad_J(profile.values)


@dataclass
class MinimizerState:
    profile: RadialProfile
    J_value: float
    iteration: int
    step_size: float
    kkt_residual: float
    converged: bool
    multiplier_closed: float
    multiplier_lsq: float
    grid_size: int


@dataclass
class ScalingReport:
    lam: float
    A_w: float
    B_w: float
    lambda_opt: float
    J_value: float
    J_star: float
    K_star: float
    S_of_minimizer: float
    dirichlet: float
    lmu: float
    constraint: float
    lambda_discrete: float
    lambda_lsq: float
    multiplier_gap: float
    quadrature_bias: float

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass(frozen=True)
class MinimizeControls:
    grid_size: int = 2048
    coarse_size: int = 256
    r_max: float | None = None
    kkt_tol: float = 1e-8
    max_iter: int = 100_000
    armijo_factor: float = 0.5
    armijo_decrease: float = 1e-4
    tau_init: float | None = None
    multiplier_tol: float = 1e-6
    shoot_rtol: float = 1e-6
    # first-cell size (relative to r_max) on the final level: the origin
    # value converges like c1 h1^(sigma+2), so the deep boundary layer is
    # what makes the nodal V(0) trustworthy
    min_cell_rel: float = 1e-10


def _descent_level(ops: DiscreteOperators, V, controls, budget):
    """Projected descent on one grid level.

    The trial step moves along the representative of the first variation
    in the current-Hessian metric of J (a banded solve; the bare nodal
    covector stalls at O(h^-2) stiffness conditioning and the edge
    nodes' V^(1/m-1) curvature), projected tangent to the constraint
    sphere, then clip -> weighted isotonic projection -> constraint
    projection with monotone Armijo backtracking from t = 1."""
    mass = ops.mass

    def tangent_dir(Vc):
        g = ops.grad_J(Vc)
        c = ops.mass_sig * Vc
        v_floor = 1e-10 * float(np.max(Vc))
        rg, rc = ops.metric_solve(Vc, (g, c), v_floor)
        lam = float(np.dot(c, rg)) / float(np.dot(c, rc))
        return g, rg - lam * rc

    V = ops.normalize(pava_nonincreasing(np.maximum(V, 0.0), mass))
    J = ops.J(V)
    J_mark = J
    g, d = tangent_dir(V)
    kkt = np.inf
    it = 0
    t = 1.0
    fails = 0
    while it < budget:
        it += 1
        accepted = False
        t = 1.0
        for _ in range(60):
            trial = np.maximum(V - t * d, 0.0)
            trial = pava_nonincreasing(trial, mass)
            try:
                trial = ops.normalize(trial)
            except DegenerateProfile:
                t *= controls.armijo_factor
                continue
            J_t = ops.J(trial)
            desc = float(np.dot(g, trial - V))
            if J_t <= J + controls.armijo_decrease * min(desc, 0.0):
                accepted = True
                break
            t *= controls.armijo_factor
        if not accepted:
            fails += 1
            if fails >= 2:
                break
            continue
        fails = 0
        V, J = trial, J_t
        g, d = tangent_dir(V)
        if it % 5 == 0 or it <= 3:
            kkt = ops.kkt_residual(V)
            if kkt <= controls.kkt_tol:
                break
        if it % 50 == 0:
            if J_mark - J < 1e-14 * max(J, 1.0):
                break  # stagnated; the stationarity polish takes over
            J_mark = J
    kkt = ops.kkt_residual(V)
    return V, {"iterations": it, "kkt": kkt, "tau": t, "J": J}


def _polish_stationarity(ops: DiscreteOperators, V, controls, max_newton=10):
    """Newton on the stationarity system (free nodes + multiplier) with
    the active set frozen: solves the bordered tridiagonal KKT system.
    Accepted only if it keeps the iterate feasible (non-negative,
    non-increasing, unit constraint) and does not increase J beyond
    roundoff."""
    from scipy.linalg import solve_banded

    m = ops.params.m
    J0 = ops.J(V)
    V = V.copy()
    lam = ops.multiplier_lsq(V)
    best_V, best_kkt = V, ops.kkt_residual(V, lam)
    for _ in range(max_newton):
        free = V > 0.0
        nf = int(np.sum(free))
        if nf < 3:
            break
        idx = np.nonzero(free)[0]
        g = ops.grad_J(V) - lam * ops.mass_sig * V
        r1 = g[idx]
        r2 = ops.constraint(V) - 1.0
        curv = ops.mass[idx] * np.maximum(V[idx], 1e-300) ** (1.0 / m - 1.0) / (m * (m - 1.0))
        diag = ops._kdiag[idx] + curv - lam * ops.mass_sig[idx]
        # off-diagonals only couple consecutive grid nodes
        ab = np.zeros((3, nf))
        ab[1, :] = diag
        consec = np.diff(idx) == 1
        ab[0, 1:][consec] = -ops.k_off[idx[:-1][consec]]
        ab[2, :-1][consec] = -ops.k_off[idx[:-1][consec]]
        b_col = ops.mass_sig[idx] * V[idx]
        try:
            x1 = solve_banded((1, 1), ab, r1)
            x2 = solve_banded((1, 1), ab, b_col)
        except Exception:
            break
        denom = float(np.dot(2.0 * b_col, x2))
        if denom == 0.0:
            break
        dlam = (float(np.dot(2.0 * b_col, x1)) - r2) / denom
        dV = x1 - dlam * x2
        step = 1.0
        improved = False
        for _ in range(20):
            Vn = V.copy()
            Vn[idx] = V[idx] - step * dV
            Vn = pava_nonincreasing(np.maximum(Vn, 0.0), ops.mass)
            try:
                Vn = ops.normalize(Vn)
            except DegenerateProfile:
                step *= 0.5
                continue
            lam_n = ops.multiplier_lsq(Vn)
            kkt_n = ops.kkt_residual(Vn, lam_n)
            if kkt_n < best_kkt and ops.J(Vn) <= J0 * (1.0 + 1e-12):
                V, lam = Vn, lam_n
                best_V, best_kkt = V, kkt_n
                improved = True
                break
            step *= 0.5
        if not improved:
            break
        if best_kkt <= 1e-13:
            break
    return best_V, best_kkt


def default_initial(params: ProblemParams, der: DerivedConstants, controls: MinimizeControls):
    """Truncated parabola power profile with the radius scale taken from
    a coarse shooting pre-run mapped through the multiplier rescaling."""
    from .shooting import ShootControls, bisect_for_support, find_bracket

    sc = ShootControls(rtol=controls.shoot_rtol, atol=controls.shoot_rtol * 1e-2,
                       bracket_rtol=1e-6, n_profile=600)
    try:
        br = find_bracket(params, sc)
        res = bisect_for_support(params, br, sc)
        prof_v = res.profile
        W_v = weighted_norm_sq(params, prof_v, params.sigma)
        amp = der.lambda_amp_exp
        lam_est = W_v ** (1.0 / (2.0 * amp + (params.N + params.sigma) * der.lambda_space_exp))
        R_w = res.R * lam_est ** (-der.lambda_space_exp)
    except Exception as exc:  # pragma: no cover - fallback scale
        log.warning("coarse shooting pre-run failed (%s); using unit scale", exc)
        R_w = 2.0
    r_max = controls.r_max or 1.4 * R_w
    nodes = graded_grid(r_max, controls.grid_size)
    vals = np.maximum(1.0 - (nodes / R_w) ** 2, 0.0) ** der.omega
    prof = RadialProfile(nodes=nodes, values=vals, monotone=True, support_radius=None)
    return project_constraint(params, prof)


def minimize(
    params: ProblemParams,
    initial: RadialProfile | None = None,
    controls: MinimizeControls = MinimizeControls(),
    der: DerivedConstants | None = None,
    strict: bool = False,
):
    """Run the constrained descent; returns (MinimizerState, ScalingReport)."""
    if der is None:
        der = derive(params)
    if initial is None:
        initial = default_initial(params, der, controls)
    if np.max(initial.values) <= 0.0:
        raise DegenerateProfile("initial profile is zero")

    n_target = controls.grid_size
    sizes = []
    n = controls.coarse_size
    while n < n_target:
        sizes.append(n)
        n *= 2
    sizes.append(n_target)

    r_max = initial.r_max
    V = None
    total_it = 0
    info = {"kkt": np.inf, "J": np.nan, "tau": np.nan}
    for k, n in enumerate(sizes):
        # geometric grading near the origin resolves the r^(sigma+2) cusp
        # that a uniform mesh would only capture at first order; the deep
        # layer is only needed on the final level
        mcr = controls.min_cell_rel if n == n_target else max(1e-6, controls.min_cell_rel)
        nodes = graded_grid(r_max, n, min_cell_rel=mcr)
        if V is None:
            Vn = np.interp(nodes, initial.nodes, initial.values)
        else:
            Vn = np.interp(nodes, prev_nodes, V)
        ops = DiscreteOperators(params, nodes)
        budget = max(500, (controls.max_iter - total_it) // max(1, (len(sizes) - k)))
        V, info = _descent_level(ops, Vn, controls, budget)
        if info["kkt"] > controls.kkt_tol:
            V, kkt_pol = _polish_stationarity(ops, V, controls)
            info["kkt"] = kkt_pol
            info["J"] = ops.J(V)
        total_it += info["iterations"]
        prev_nodes = nodes
        log.info("level n=%d: %d iterations, kkt=%.3e, J=%.12g", n, info["iterations"], info["kkt"], info["J"])

    converged = info["kkt"] <= controls.kkt_tol
    lam_closed = ops.multiplier_closed(V)
    lam_lsq = ops.multiplier_lsq(V)
    gap = abs(lam_closed - lam_lsq) / max(abs(lam_closed), 1e-300)

    profile = RadialProfile(nodes=prev_nodes, values=V, monotone=True)
    profile = project_constraint(params, profile)  # report-quadrature norm
    state = MinimizerState(
        profile=profile,
        J_value=info["J"],
        iteration=total_it,
        step_size=info["tau"],
        kkt_residual=info["kkt"],
        converged=converged,
        multiplier_closed=lam_closed,
        multiplier_lsq=lam_lsq,
        grid_size=n_target,
    )
    report = scaling_report(params, der, profile, lam_closed, lam_lsq)
    if strict and not converged:
        raise NonConvergence(
            f"kkt residual {info['kkt']:.3e} above {controls.kkt_tol} after {total_it} iterations",
            state=state,
        )
    if gap > controls.multiplier_tol:
        log.warning("discrete multiplier estimates disagree: %.3e", gap)
    return state, report


def scaling_report(params, der, profile, lam_discrete=np.nan, lam_lsq=np.nan) -> ScalingReport:
    """All scaling quantities, evaluated with the report quadrature on
    the constraint-normalized profile."""
    N, m, s = params.N, params.m, params.sigma
    D = dirichlet_energy(params, profile)
    L = lmu_norm_pow(params, profile)
    W = weighted_norm_sq(params, profile, s)
    J = 0.5 * D + m / (m * m - 1.0) * L
    lam = D + L / (m - 1.0)
    a, b = der.a_exp, der.b_exp
    A = W ** (2.0 / (N + s)) * 0.5 * D / J
    B = m / (m * m - 1.0) * L / J
    lambda_opt = (b * B / (a * A)) ** (1.0 / (a + b))
    E = N * (m - 1.0) + 2.0 * (m + 1.0)
    J_star = (J / (a + b)) ** (a + b) * (a * (m * m - 1.0) / m) ** a * (2.0 * b) ** b
    K_star = J_star ** (m * (N + s) / E)
    S_min = quotient_S(params, profile, der, dirichlet=D, lmu=L, wsig=W)
    return ScalingReport(
        lam=lam,
        A_w=A,
        B_w=B,
        lambda_opt=lambda_opt,
        J_value=J,
        J_star=J_star,
        K_star=K_star,
        S_of_minimizer=S_min,
        dirichlet=D,
        lmu=L,
        constraint=W,
        lambda_discrete=lam_discrete,
        lambda_lsq=lam_lsq,
        multiplier_gap=abs(lam_discrete - lam_lsq) / max(abs(lam_discrete), 1e-300),
        quadrature_bias=abs(lam - lam_discrete) / max(abs(lam), 1e-300),
    )


def rescale_to_solution(
    profile: RadialProfile, lam: float, der: DerivedConstants
) -> RadialProfile:
    """Map the constrained minimizer to a solution of the unconstrained
    equation: v(x) = lam^amp w(lam^(-1/(sigma+2)) x)."""
    if lam <= 0.0:
        raise ValueError("multiplier must be positive")
    space = lam ** der.lambda_space_exp
    amp = lam ** der.lambda_amp_exp
    return RadialProfile(
        nodes=profile.nodes * space,
        values=profile.values * amp,
        derivs=None if profile.derivs is None else profile.derivs * (amp / space),
        support_radius=None if profile.support_radius is None else profile.support_radius * space,
        monotone=profile.monotone,
    )


def ckn_constant(
    params: ProblemParams,
    der: DerivedConstants,
    report: ScalingReport,
    tol: float = 1e-4,
) -> float:
    """The sharp-constant value, with the S(v_*) = K_* identity enforced
    and the one-parameter rescaling map checked around its optimum."""
    K = report.K_star
    if not np.isfinite(K) or K <= 0:
        raise ConsistencyFailure("sharp constant is not finite")
    rel = abs(report.S_of_minimizer - K) / K
    if rel > tol:
        raise ConsistencyFailure(
            f"quotient at the minimizer disagrees with the sharp constant: {rel:.3e}"
        )
    a, b = der.a_exp, der.b_exp
    A, B = report.A_w, report.B_w

    def scaled_J(lam):
        return A * lam ** a + B * lam ** (-b)

    for lam in (0.25, 0.5, 2.0, 4.0):
        if scaled_J(lam) < scaled_J(report.lambda_opt) - 1e-12:
            raise ConsistencyFailure("rescaling map dips below its closed-form optimum")
    # closed-form optimum vs dense sampling
    grid = np.exp(np.linspace(np.log(report.lambda_opt / 2), np.log(report.lambda_opt * 2), 20001))
    lam_hat = grid[np.argmin(scaled_J(grid))]
    if abs(lam_hat - report.lambda_opt) / report.lambda_opt > 1e-4:
        raise ConsistencyFailure("sampled optimum of the rescaling map is off the closed form")
    return K


def random_monotone_profiles(params, rng, n_profiles, r_max, n_grid=320):
    """Random non-increasing compactly supported test profiles: truncated
    powers, gaussian-type bumps, and piecewise-linear staircases."""
    nodes = np.linspace(0.0, r_max, n_grid + 1)
    for _ in range(n_profiles):
        kind = rng.integers(0, 3)
        amp = 10.0 ** rng.uniform(-2, 2)
        if kind == 0:
            R = rng.uniform(0.2, 1.0) * r_max
            q = rng.uniform(1.0, 6.0)
            vals = amp * np.maximum(1.0 - (nodes / R) ** 2, 0.0) ** q
        elif kind == 1:
            c = rng.uniform(0.5, 40.0) / r_max ** 2
            vals = amp * np.exp(-c * nodes ** 2)
            vals = vals - vals[-1]
        else:
            steps = rng.random(n_grid + 1) * rng.random() ** 2
            vals = np.cumsum(steps[::-1])[::-1]
            vals = amp * (vals - vals[-1]) / max(vals[0], 1e-12)
        vals = np.maximum(vals, 0.0)
        if np.max(vals) <= 0:
            continue
        yield RadialProfile(nodes=nodes, values=vals, monotone=True)


def sharpness_suite(params, der, K_star, n_profiles=1000, seed=0, r_max=None):
    """Evaluate the quotient on random monotone profiles; returns min S.
    Every value must sit above the sharp constant."""
    rng = np.random.default_rng(seed)
    if r_max is None:
        r_max = 4.0
    s_min = np.inf
    for prof in random_monotone_profiles(params, rng, n_profiles, r_max):
        try:
            s_val = quotient_S(params, prof, der)
        except DegenerateProfile:
            continue
        s_min = min(s_min, s_val)
    return s_min
