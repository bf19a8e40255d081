"""Integral functionals of radial profiles.

All full-space integrals reduce to N*omega_N * int_0^rM r^(N-1) (...) dr.
The reconstruction underlying every functional is the profile's own
(linear or cubic Hermite), so the reported quantities are consistent
with a single H^1 function.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateProfile, NonIntegrable
from .params import DerivedConstants, ProblemParams, derive, quotient_exponents
from .quadrature import (
    hermite_cells,
    integrate_fractional_power_cells,
    integrate_poly_cells,
    linear_cells,
    poly_deriv_r,
    poly_product,
)
from .radial import RadialProfile


def _value_cells(profile: RadialProfile) -> np.ndarray:
    if profile.derivs is None:
        return linear_cells(profile.values)
    return hermite_cells(profile.values, profile.derivs, profile.cell_widths)


def weighted_norm_sq(params: ProblemParams, profile: RadialProfile, tau: float) -> float:
    """N_tau^2(v) = int |x|^tau v^2 dx over R^N."""
    if tau <= -params.N and profile.values[0] > 0.0:
        raise NonIntegrable(f"tau={tau} <= -N={-params.N} with V(0) > 0")
    cells = _value_cells(profile)
    sq = poly_product(cells, cells)
    alpha = params.N - 1 + tau
    return params.sphere_factor * float(
        np.sum(integrate_poly_cells(alpha, profile.nodes, sq))
    )


def dirichlet_energy(params: ProblemParams, profile: RadialProfile) -> float:
    """||grad v||_2^2 from the profile's own reconstruction."""
    h = profile.cell_widths
    if profile.derivs is None:
        slopes = np.diff(profile.values) / h
        dp = slopes[:, None]
    else:
        dp = poly_deriv_r(_value_cells(profile), h)
    sq = poly_product(dp, dp)
    return params.sphere_factor * float(
        np.sum(integrate_poly_cells(params.N - 1, profile.nodes, sq))
    )


def lp_norm_pow(params: ProblemParams, profile: RadialProfile, p: float) -> float:
    """int v^p dx (the p-th power of the L^p norm), any real p > 0."""
    cells = _value_cells(profile)
    if p == round(p) and p >= 1:
        poly = cells
        for _ in range(int(round(p)) - 1):
            poly = poly_product(poly, cells)
        vals = integrate_poly_cells(params.N - 1, profile.nodes, poly)
    else:
        vals = integrate_fractional_power_cells(params.N - 1, profile.nodes, cells, p)
    return params.sphere_factor * float(np.sum(vals))


def lmu_norm_pow(params: ProblemParams, profile: RadialProfile) -> float:
    """||v||_mu^mu with mu = (m+1)/m."""
    return lp_norm_pow(params, profile, params.mu)


def functional_J(params: ProblemParams, profile: RadialProfile) -> float:
    """J(v) = ||grad v||_2^2 / 2 + m/(m^2-1) ||v||_mu^mu."""
    m = params.m
    return 0.5 * dirichlet_energy(params, profile) + m / (m * m - 1.0) * lmu_norm_pow(
        params, profile
    )


def quotient_S(
    params: ProblemParams,
    profile: RadialProfile,
    der: DerivedConstants | None = None,
    *,
    dirichlet: float | None = None,
    lmu: float | None = None,
    wsig: float | None = None,
) -> float:
    """The scale- and dilation-free quotient whose infimum is the sharp
    interpolation constant. Raises DegenerateProfile on the zero profile."""
    if der is None:
        der = derive(params)
    D = dirichlet_energy(params, profile) if dirichlet is None else dirichlet
    L = lmu_norm_pow(params, profile) if lmu is None else lmu
    W = weighted_norm_sq(params, profile, params.sigma) if wsig is None else wsig
    if W <= 0.0:
        raise DegenerateProfile("weighted norm vanishes; quotient undefined")
    e_grad, e_mu = quotient_exponents(params)
    return D ** (e_grad / 2.0) * L ** (e_mu / der.mu) / W


@dataclass
class FunctionalReport:
    """Every integral quantity of a profile used downstream."""

    dirichlet: float
    lmu: float
    weighted: dict = field(default_factory=dict)  # tau -> N_tau^2
    J: float = 0.0
    S: float = float("nan")
    lp: dict = field(default_factory=dict)  # p -> ||v||_p

    def as_dict(self) -> dict:
        return {
            "dirichlet": self.dirichlet,
            "lmu": self.lmu,
            "weighted": {str(k): v for k, v in self.weighted.items()},
            "J": self.J,
            "S": self.S,
            "lp": {str(k): v for k, v in self.lp.items()},
        }


def functional_report(
    params: ProblemParams,
    profile: RadialProfile,
    der: DerivedConstants | None = None,
    taus: tuple = (),
    ps: tuple = (2.0,),
) -> FunctionalReport:
    if der is None:
        der = derive(params)
    D = dirichlet_energy(params, profile)
    L = lmu_norm_pow(params, profile)
    weighted = {params.sigma: weighted_norm_sq(params, profile, params.sigma)}
    for tau in taus:
        weighted.setdefault(tau, weighted_norm_sq(params, profile, tau))
    m = params.m
    J = 0.5 * D + m / (m * m - 1.0) * L
    wsig = weighted[params.sigma]
    S = float("nan")
    if wsig > 0.0:
        S = quotient_S(params, profile, der, dirichlet=D, lmu=L, wsig=wsig)
    lp = {p: lp_norm_pow(params, profile, p) ** (1.0 / p) for p in ps}
    return FunctionalReport(dirichlet=D, lmu=L, weighted=weighted, J=J, S=S, lp=lp)


def flux_integral_cells(params: ProblemParams, profile: RadialProfile) -> np.ndarray:
    """Per-cell integrals of s^(N-1) V^(1/m)/(m-1) - s^(N-1+sigma) V.

    Cumulative sums of these give the exact flux change predicted by the
    radial equation between any two nodes.
    """
    cells = _value_cells(profile)
    absorb = integrate_fractional_power_cells(
        params.N - 1, profile.nodes, cells, 1.0 / params.m
    ) / (params.m - 1.0)
    source = integrate_poly_cells(params.N - 1 + params.sigma, profile.nodes, cells)
    return absorb - source


def flux_values(params: ProblemParams, profile: RadialProfile) -> np.ndarray:
    """Nodal flux W = r^(N-1) V' (needs derivatives)."""
    d = profile.deriv_values()
    return profile.nodes ** (params.N - 1) * d


def ode_flux_residual(params: ProblemParams, profile: RadialProfile, i_from: int = 0) -> np.ndarray:
    """Residual of the radial equation in integral (flux) form.

    res_i = W(r_i) - W(r_a) - int_{r_a}^{r_i} (s^(N-1) V^(1/m)/(m-1)
            - s^(N-1+sigma) V) ds, normalized by max(1, |W(r_i)|).
    Zero (to quadrature and solver accuracy) on a true solution.
    """
    W = flux_values(params, profile)
    cells = flux_integral_cells(params, profile)
    cum = np.concatenate([[0.0], np.cumsum(cells)])
    res = W - W[i_from] - (cum - cum[i_from])
    return res / np.maximum(1.0, np.abs(W))
