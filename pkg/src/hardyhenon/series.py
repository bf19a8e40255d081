"""Local expansions of the profile near r = 0 and near the support edge.

Near the origin the profile behaves like

    V(r) = V0 - c1 r^(sigma+2) + c2 r^(e2) + o(r^(e2)),

with the three sigma-cases carrying different second terms. Near the
support radius the contact is V ~ K (R-r)^omega with omega = 2m/(m-1)
and K the dominant-balance prefactor of params.touchdown_K.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .params import DerivedConstants, ProblemParams


class SeriesCase(Enum):
    SIGMA_IN_M1_0 = "SigmaInMinus1To0"
    SIGMA_EQ_M1 = "SigmaEqMinus1"
    SIGMA_IN_M2_M1 = "SigmaInMinus2ToMinus1"


class OutOfCase(ValueError):
    """sigma does not match the expansion's case split."""


def series_case(sigma: float) -> SeriesCase:
    if sigma == -1.0:
        return SeriesCase.SIGMA_EQ_M1
    if -1.0 < sigma < 0.0:
        return SeriesCase.SIGMA_IN_M1_0
    if -2.0 < sigma < -1.0:
        return SeriesCase.SIGMA_IN_M2_M1
    raise OutOfCase(f"no origin expansion for sigma={sigma}")


@dataclass(frozen=True)
class OriginExpansion:
    case: SeriesCase
    V0: float
    c1: float
    c2: float
    e1: float
    e2: float
    N: int
    m: float
    sigma: float


def origin_expansion(params: ProblemParams, V0: float) -> OriginExpansion:
    N, m, sigma = params.N, params.m, params.sigma
    case = series_case(sigma)
    if case is SeriesCase.SIGMA_EQ_M1 and N < 2:
        raise OutOfCase("sigma = -1 requires N >= 2")
    c1 = V0 / ((N + sigma) * (sigma + 2.0))
    if case is SeriesCase.SIGMA_IN_M1_0:
        e2 = 2.0
        c2 = V0 ** (1.0 / m) / (2.0 * N * (m - 1.0))
    elif case is SeriesCase.SIGMA_EQ_M1:
        e2 = 2.0
        c2 = (V0 / (N - 1.0) + V0 ** (1.0 / m) / (m - 1.0)) / (2.0 * N)
    else:
        e2 = 2.0 * sigma + 4.0
        c2 = V0 / ((N + sigma) * (sigma + 2.0) * (N + 2.0 * sigma + 2.0) * (2.0 * sigma + 4.0))
    return OriginExpansion(
        case=case, V0=V0, c1=c1, c2=c2, e1=sigma + 2.0, e2=e2, N=N, m=m, sigma=sigma
    )


def eval_origin(exp: OriginExpansion, r):
    """V and V' of the two-term expansion; vectorized in r. At r = 0 the
    slope is infinite when sigma < -1; the caller decides how to handle it."""
    if exp.case is not series_case(exp.sigma):
        raise OutOfCase(f"sigma={exp.sigma} does not match case {exp.case}")
    r = np.asarray(r, dtype=float)
    with np.errstate(divide="ignore"):
        V = exp.V0 - exp.c1 * r ** exp.e1 + exp.c2 * r ** exp.e2
        Vp = -exp.c1 * exp.e1 * r ** (exp.e1 - 1.0) + exp.c2 * exp.e2 * r ** (exp.e2 - 1.0)
    return V, Vp


def validity_radius(exp: OriginExpansion, rel_tol: float = 1e-10, cap: float = 1e-4) -> float:
    """Radius where the last retained term is rel_tol * V0."""
    if exp.V0 <= 0.0 or exp.c2 == 0.0:
        return cap
    return float(min(cap, (rel_tol * exp.V0 / abs(exp.c2)) ** (1.0 / exp.e2)))


@dataclass(frozen=True)
class ExpansionPrediction:
    """Predicted small-r behavior of V'' as sum of coef * r^exponent."""

    terms: tuple  # ((coef, exponent), ...)

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        out = np.zeros_like(r)
        for coef, e in self.terms:
            out = out + (coef * np.ones_like(r) if e == 0.0 else coef * r ** e)
        return out

    @property
    def constant(self) -> float:
        for coef, e in self.terms:
            if e == 0.0:
                return coef
        return 0.0


def second_derivative_limit(params: ProblemParams, V0: float) -> ExpansionPrediction:
    """Leading behavior of V'' as r -> 0 in the three sigma-cases."""
    N, m, s = params.N, params.m, params.sigma
    if V0 == 0.0:
        return ExpansionPrediction(terms=((0.0, 0.0),))
    case = series_case(s)
    if case is SeriesCase.SIGMA_IN_M1_0:
        return ExpansionPrediction(
            terms=(
                (-(s + 1.0) / (s + N) * V0, s),
                (V0 ** (1.0 / m) / (N * (m - 1.0)), 0.0),
            )
        )
    if case is SeriesCase.SIGMA_EQ_M1:
        return ExpansionPrediction(
            terms=(
                (V0 / (N * (N - 1.0)) + V0 ** (1.0 / m) / (N * (m - 1.0)), 0.0),
            )
        )
    return ExpansionPrediction(
        terms=(
            (-(s + 1.0) / (s + N) * V0, s),
            (
                (2.0 * s + 3.0) / ((s + 2.0) * (N + 2.0 * s + 2.0) * (s + N)) * V0,
                2.0 * (s + 1.0),
            ),
        )
    )


@dataclass(frozen=True)
class TouchdownExpansion:
    R: float
    K: float
    omega: float


def touchdown_expansion(der: DerivedConstants, R: float) -> TouchdownExpansion:
    return TouchdownExpansion(R=R, K=der.touchdown_K, omega=der.omega)


def eval_touchdown(exp: TouchdownExpansion, r):
    """V = K (R-r)^omega and its derivative; zero at and beyond R."""
    r = np.asarray(r, dtype=float)
    s = np.maximum(exp.R - r, 0.0)
    V = exp.K * s ** exp.omega
    Vp = -exp.K * exp.omega * s ** (exp.omega - 1.0)
    Vp = np.where(s > 0.0, Vp, 0.0)
    return V, Vp


def ode_residual_of_series(params: ProblemParams, exp: OriginExpansion, r):
    """Residual of the radial equation on the two-term origin series.

    residual(r) = (r^(N-1) V')' - r^(N-1) V^(1/m)/(m-1) + r^(N-1+sigma) V,
    with the flux derivative taken in closed form. Substituting the
    series must leave a residual of strictly higher order than the
    retained terms.
    """
    N, m, s = params.N, params.m, params.sigma
    r = np.asarray(r, dtype=float)
    V, _ = eval_origin(exp, r)
    # (r^(N-1) V')' for V' = -c1 e1 r^(e1-1) + c2 e2 r^(e2-1)
    flux_deriv = -exp.c1 * exp.e1 * (N + exp.e1 - 2.0) * r ** (N + exp.e1 - 3.0) + (
        exp.c2 * exp.e2 * (N + exp.e2 - 2.0) * r ** (N + exp.e2 - 3.0)
    )
    rhs = r ** (N - 1.0) * np.maximum(V, 0.0) ** (1.0 / m) / (m - 1.0) - r ** (
        N - 1.0 + s
    ) * V
    return flux_deriv - rhs
