"""Parameter validation and derived constants.

Every exponent and constant used by the solvers and certificates is
computed here, once, from (N, m, sigma). Downstream modules never
re-derive exponent algebra.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum


class Regime(Enum):
    ADMISSIBLE = "Admissible"
    NONEXISTENCE_PROBE = "NonexistenceProbe"


class InvalidParameter(ValueError):
    """Raised when (N, m, sigma) violates the admissible window."""


@dataclass(frozen=True)
class ProblemParams:
    """Dimension N, absorption exponent m and potential exponent sigma.

    Admissible means m > 1 and max(-2, -N) < sigma < 0; the probe regime
    (sigma <= -2) is accepted only for non-existence certification.
    """

    N: int
    m: float
    sigma: float
    regime: Regime = Regime.ADMISSIBLE

    def __post_init__(self):
        if self.regime is Regime.ADMISSIBLE:
            lo = max(-2.0, -float(self.N))
            if not (lo < self.sigma < 0.0):
                raise InvalidParameter(
                    f"admissible regime needs max(-2,-N)={lo} < sigma < 0, got sigma={self.sigma}"
                )
        else:
            if not self.sigma <= -2.0:
                raise InvalidParameter(
                    f"nonexistence probe needs sigma <= -2, got sigma={self.sigma}"
                )
        if not self.m > 1.0:
            raise InvalidParameter(f"m > 1 required, got m={self.m}")

    @property
    def mu(self) -> float:
        return (self.m + 1.0) / self.m

    @property
    def unit_ball_volume(self) -> float:
        """Lebesgue measure of the unit ball in R^N."""
        return math.pi ** (self.N / 2.0) / math.gamma(self.N / 2.0 + 1.0)

    @property
    def sphere_factor(self) -> float:
        """N * omega_N, the surface measure of the unit sphere."""
        return self.N * self.unit_ball_volume


def validate(N, m, sigma, regime: str | Regime = Regime.ADMISSIBLE) -> ProblemParams:
    """Check the parameter window and return a typed ProblemParams.

    Rejections name the violated inequality. sigma <= -2 is only
    accepted when the NonexistenceProbe regime is requested explicitly;
    the open regime N = 1 with sigma in (-2, -1] is always rejected.
    """
    if isinstance(regime, str):
        try:
            regime = Regime(regime)
        except ValueError:
            raise InvalidParameter(f"unknown regime {regime!r}") from None
    if int(N) != N or N < 1:
        raise InvalidParameter(f"N must be an integer >= 1, got {N}")
    N = int(N)
    m = float(m)
    sigma = float(sigma)
    if not m > 1.0:
        raise InvalidParameter(f"m > 1 required, got m={m}")
    if sigma >= 0.0:
        raise InvalidParameter(f"sigma < 0 required, got sigma={sigma}")

    lo = max(-2.0, -float(N))
    if regime is Regime.NONEXISTENCE_PROBE:
        if sigma > -2.0:
            raise InvalidParameter(
                f"NonexistenceProbe needs sigma <= -2, got sigma={sigma}"
            )
        return ProblemParams(N, m, sigma, Regime.NONEXISTENCE_PROBE)
    if sigma <= lo:
        if sigma <= -2.0:
            raise InvalidParameter(
                f"sigma={sigma} <= -2: outside the existence window "
                f"max(-2,-N)={lo} < sigma < 0 (request NonexistenceProbe to certify non-existence)"
            )
        raise InvalidParameter(
            f"sigma={sigma} <= max(-2,-N)={lo}: unsupported (open regime for N={N})"
        )
    return ProblemParams(N, m, sigma, Regime.ADMISSIBLE)


@dataclass(frozen=True)
class DerivedConstants:
    """Closed-form exponents and constants derived from (N, m, sigma).

    theta            interpolation exponent, in (0, 1)
    mu               (m+1)/m, the absorption integrand power
    omega            2m/(m-1), the touchdown power (> 2)
    a_exp, b_exp     powers of the two-parameter rescaling family
    lambda_space_exp 1/(sigma+2), spatial multiplier rescaling power
    lambda_amp_exp   2m/((m-1)(sigma+2)), amplitude rescaling power
    touchdown_K      ((m-1)/(2m(m+1)))^(m/(m-1)), prefactor of the
                     (R-r)^omega contact at the support boundary
    """

    theta: float
    mu: float
    omega: float
    a_exp: float
    b_exp: float
    lambda_space_exp: float
    lambda_amp_exp: float
    touchdown_K: float


def derive(params: ProblemParams) -> DerivedConstants:
    """Fill every derived constant from its closed form."""
    N, m, sigma = params.N, params.m, params.sigma
    E = N * (m - 1.0) + 2.0 * (m + 1.0)
    theta = N * (m - 1.0) / E
    mu = (m + 1.0) / m
    omega = 2.0 * m / (m - 1.0)
    a_exp = 2.0 * (sigma + 2.0) / (N + sigma)
    b_exp = (N * (m - 1.0) - sigma * (m + 1.0)) / (m * (N + sigma))
    lambda_space_exp = 1.0 / (sigma + 2.0)
    lambda_amp_exp = 2.0 * m / ((m - 1.0) * (sigma + 2.0))
    touchdown_K = ((m - 1.0) / (2.0 * m * (m + 1.0))) ** (m / (m - 1.0))
    return DerivedConstants(
        theta=theta,
        mu=mu,
        omega=omega,
        a_exp=a_exp,
        b_exp=b_exp,
        lambda_space_exp=lambda_space_exp,
        lambda_amp_exp=lambda_amp_exp,
        touchdown_K=touchdown_K,
    )


def quotient_exponents(params: ProblemParams) -> tuple[float, float]:
    """Exponents (on ||grad v||_2 and ||v||_mu) of the sharp quotient."""
    c = derive(params)
    s = params.sigma
    return (s + 2.0) * c.theta - s, (s + 2.0) * (1.0 - c.theta)


def pohozaev_ratio(params: ProblemParams) -> float:
    """Dirichlet-to-absorption energy ratio forced on every solution.

    D/L = (N(m-1) - sigma(m+1)) / ((m^2-1)(sigma+2)).
    """
    N, m, s = params.N, params.m, params.sigma
    return (N * (m - 1.0) - s * (m + 1.0)) / ((m * m - 1.0) * (s + 2.0))
