"""Estimators, exact variances, privacy budgets and optimal designs.

All functions are pure.  Variances are those of the unbiased estimator of the
sensitive proportion ``pi_a`` when the whole population of ``N`` respondents
is surveyed (sampling without replacement).  Design operations work at a
fixed privacy budget and, for the Christofides family, with ``L = 3`` cards
whose middle proportion ``p2`` is treated as given.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidAux, InvalidParameter, UnboundedBudget, Unsupported
from .mechanisms import (
    CHRISTOFIDES,
    IMPROVED_CHRISTOFIDES,
    KINDS,
    SIMMONS,
    WARNER,
    CardDistribution,
    Christofides,
    ImprovedChristofides,
    MechanismSpec,
    SimmonsParams,
    WarnerParams,
)

TIE_RTOL = 1e-12


class PrivacyBudget(float):
    """A strictly positive epsilon."""

    def __new__(cls, epsilon):
        value = float(epsilon)
        if not (value > 0 and math.isfinite(value)):
            raise InvalidParameter(f"epsilon must be positive and finite, got {epsilon}")
        return super().__new__(cls, value)

    @property
    def epsilon(self) -> float:
        return float(self)

    def __repr__(self):
        return f"PrivacyBudget({float(self)!r})"


def _check_kind(kind: str) -> str:
    if kind not in KINDS:
        raise InvalidParameter(f"unknown mechanism {kind!r}; expected one of {KINDS}")
    return kind


def _check_n(n: int) -> None:
    if n < 2:
        raise InvalidParameter(f"N must be at least 2, got {n}")


def _check_pi(pi_a: float) -> None:
    if not 0.0 <= pi_a <= 1.0:
        raise InvalidParameter(f"pi_a must lie in [0, 1], got {pi_a}")


def _yes_fraction(responses) -> float:
    r = np.asarray(responses)
    if r.size == 0:
        raise InvalidParameter("no responses")
    return float(r.sum()) / r.size


# --- estimators -------------------------------------------------------------

def estimator_affine(mech: MechanismSpec) -> tuple[float, float]:
    """``(offset, scale)`` with ``estimate = (mean response - offset) / scale``."""
    if isinstance(mech, WarnerParams):
        return 1 - mech.p, 2 * mech.p - 1
    if isinstance(mech, SimmonsParams):
        return (1 - mech.p) * mech.pi_b, mech.p
    ey = mech.dist.mean()
    return ey, mech.dist.L + 1 - 2 * ey


def warner_estimate(responses, params: WarnerParams) -> float:
    offset, scale = estimator_affine(params)
    return (_yes_fraction(responses) - offset) / scale


def simmons_estimate(responses, params: SimmonsParams) -> float:
    offset, scale = estimator_affine(params)
    return (_yes_fraction(responses) - offset) / scale


def christofides_estimate(responses, dist: CardDistribution) -> float:
    """Estimate shared by both Christofides variants.

    For the improved variant pass the deck's realized distribution.
    """
    r = np.asarray(responses)
    if r.size == 0:
        raise InvalidParameter("no responses")
    if r.min() < 1 or r.max() > dist.L:
        raise InvalidParameter(f"responses must lie in 1..{dist.L}")
    offset, scale = estimator_affine(Christofides(dist))
    return (float(r.sum()) / r.size - offset) / scale


def estimate(responses, mech: MechanismSpec) -> float:
    if isinstance(mech, WarnerParams):
        return warner_estimate(responses, mech)
    if isinstance(mech, SimmonsParams):
        return simmons_estimate(responses, mech)
    return christofides_estimate(responses, mech.dist)


def clamped(estimate_value: float) -> float:
    """Estimate projected onto [0, 1]; unbiasedness holds only for the raw value."""
    return min(1.0, max(0.0, estimate_value))


# --- moments and variances --------------------------------------------------

def card_moments(dist: CardDistribution) -> tuple[float, float]:
    """``(E[Y], Var[Y])`` of the card value."""
    return dist.mean(), dist.variance()


def variance_theoretical(mech: MechanismSpec, n: int, pi_a: float) -> float:
    """Exact variance of the estimator under a full-population survey."""
    _check_n(n)
    _check_pi(pi_a)
    if isinstance(mech, WarnerParams):
        p = mech.p
        return p * (1 - p) / (n * (2 * p - 1) ** 2)
    if isinstance(mech, SimmonsParams):
        p, pi_b = mech.p, mech.pi_b
        return (pi_b * (1 - p) - pi_b**2 * (1 - p) ** 2) / (n * p**2) + pi_a * (
            1 - p - 2 * pi_b * (1 - p)
        ) / (n * p)
    ey, var_y = card_moments(mech.dist)
    scale = (mech.dist.L + 1 - 2 * ey) ** 2
    if isinstance(mech, Christofides):
        return var_y / (n * scale)
    if isinstance(mech, ImprovedChristofides):
        return 4 * pi_a * (1 - pi_a) * var_y / ((n - 1) * scale)
    raise InvalidParameter(f"not a mechanism spec: {mech!r}")


def variance_with_replacement(mech: MechanismSpec, n: int, pi_a: float) -> float:
    """Variance of the original designs, which sample respondents with replacement."""
    if isinstance(mech, ImprovedChristofides):
        raise Unsupported("improved Christofides has no with-replacement counterpart")
    return variance_theoretical(mech, n, pi_a) + pi_a * (1 - pi_a) / n


# --- privacy budgets --------------------------------------------------------

def epsilon_of(mech: MechanismSpec) -> PrivacyBudget:
    if isinstance(mech, WarnerParams):
        return PrivacyBudget(math.log((1 - mech.p) / mech.p))
    if isinstance(mech, SimmonsParams):
        p = mech.p
        b = mech.pi_b if mech.pi_b <= 0.5 else 1 - mech.pi_b
        return PrivacyBudget(math.log((p + (1 - p) * b) / ((1 - p) * b)))
    props = mech.dist.proportions
    L = len(props)
    worst = -math.inf
    for k in range(L):
        num, den = props[L - 1 - k], props[k]
        if num == 0:
            continue
        if den == 0:
            raise UnboundedBudget(
                f"card {L - k} can only be reported by one group; epsilon is infinite"
            )
        worst = max(worst, math.log(num / den))
    return PrivacyBudget(worst)


def _check_p2(p2: float) -> None:
    if not 0.0 <= p2 < 1.0:
        raise InvalidAux(f"p2 must lie in [0, 1), got {p2}")


def optimal_card_distribution(eps: float, p2: float) -> CardDistribution:
    """Minimum-variance three-card design at budget ``eps`` (low-p1 boundary)."""
    _check_p2(p2)
    e = math.exp(eps)
    return CardDistribution(((1 - p2) / (e + 1), p2, e * (1 - p2) / (e + 1)))


def params_from_epsilon(kind: str, eps: float, *, pi_b: float = 0.5, p2: float = 0.0) -> MechanismSpec:
    """Mechanism achieving exactly ``eps`` with the minimum-variance design."""
    kind = _check_kind(kind)
    eps = PrivacyBudget(eps)
    e = math.exp(eps)
    if kind == WARNER:
        return WarnerParams(1 / (1 + e))
    if kind == SIMMONS:
        if not 0.0 < pi_b < 1.0:
            raise InvalidAux(f"pi_b must lie in (0, 1), got {pi_b}")
        b = pi_b if pi_b <= 0.5 else 1 - pi_b
        return SimmonsParams(b * (e - 1) / (1 + b * (e - 1)), pi_b)
    dist = optimal_card_distribution(eps, p2)
    return Christofides(dist) if kind == CHRISTOFIDES else ImprovedChristofides(dist)


def _bracket(eps: float, p2: float) -> float:
    e = math.exp(eps)
    return (e + 1) ** 2 / ((e - 1) ** 2 * (1 - p2)) - 1


def min_variance_at_epsilon(kind: str, eps: float, n: int, pi_a: float | None = None, p2: float = 0.0) -> float:
    """Smallest achievable variance at budget ``eps``.

    ``pi_a`` matters only for improved Christofides.
    """
    kind = _check_kind(kind)
    eps = PrivacyBudget(eps)
    _check_n(n)
    if kind in (WARNER, SIMMONS):
        e = math.exp(eps)
        return e / (n * (e - 1) ** 2)
    _check_p2(p2)
    if kind == CHRISTOFIDES:
        return _bracket(eps, p2) / (4 * n)
    if pi_a is None:
        raise InvalidParameter("improved Christofides variance needs pi_a")
    _check_pi(pi_a)
    return pi_a * (1 - pi_a) / (n - 1) * _bracket(eps, p2)


# --- regimes ----------------------------------------------------------------

def ic_mc_crossover(n: int) -> tuple[float, float]:
    """Open interval of ``pi_a`` where modified Christofides beats improved."""
    _check_n(n)
    half = 1 / (2 * math.sqrt(n))
    return 0.5 - half, 0.5 + half


def regime_thresholds(n: int, eps: float, p2: float) -> tuple[float, float]:
    """Boundaries of the ``pi_a`` band where Warner/Simmons beats improved Christofides."""
    _check_n(n)
    eps = PrivacyBudget(eps)
    _check_p2(p2)
    d = math.exp(eps) + math.exp(-eps) - 2
    radicand = 1 - (n - 1) / n * (1 - p2) / (1 + p2 * d / 4)
    half = 0.5 * math.sqrt(max(radicand, 0.0))
    return 0.5 - half, 0.5 + half


IC, MWMS, MC = "IC", "MW/MS", "MC"


@dataclass(frozen=True)
class RegimeReport:
    pi_a1: float
    pi_a2: float
    icmc_lo: float
    icmc_hi: float
    ordering: tuple[tuple[str, ...], ...]
    variances: dict

    def describe(self) -> str:
        return " < ".join(" = ".join(group) for group in self.ordering)


def _rank(variances: dict) -> tuple[tuple[str, ...], ...]:
    groups: list[list[str]] = []
    for name, v in sorted(variances.items(), key=lambda kv: kv[1]):
        if groups and math.isclose(variances[groups[-1][0]], v, rel_tol=TIE_RTOL, abs_tol=0.0):
            groups[-1].append(name)
        else:
            groups.append([name])
    return tuple(tuple(g) for g in groups)


def classify_regime(pi_a: float, n: int, eps: float, p2: float) -> RegimeReport:
    """Rank IC, MW/MS and MC by directly evaluating their minimum variances."""
    if not 0.0 < pi_a < 1.0:
        raise InvalidParameter(f"pi_a must lie in (0, 1), got {pi_a}")
    variances = {
        IC: min_variance_at_epsilon(IMPROVED_CHRISTOFIDES, eps, n, pi_a, p2),
        MWMS: min_variance_at_epsilon(WARNER, eps, n),
        MC: min_variance_at_epsilon(CHRISTOFIDES, eps, n, p2=p2),
    }
    lo1, hi1 = regime_thresholds(n, eps, p2)
    lo2, hi2 = ic_mc_crossover(n)
    return RegimeReport(lo1, hi1, lo2, hi2, _rank(variances), variances)


# --- sample size ------------------------------------------------------------

def min_sample_size(
    kind: str,
    eps: float,
    var_target: float,
    *,
    pi_a: float | None = None,
    p2: float = 0.0,
    worst_case: bool = False,
) -> int:
    """Smallest ``N >= 2`` whose minimum variance at ``eps`` is at most ``var_target``.

    Improved Christofides needs ``pi_a`` unless ``worst_case`` is set, which
    uses the variance-maximizing ``pi_a = 1/2``.
    """
    kind = _check_kind(kind)
    if not var_target > 0:
        raise InvalidParameter(f"variance target must be positive, got {var_target}")
    if kind == IMPROVED_CHRISTOFIDES and worst_case:
        pi_a = 0.5
    if kind == IMPROVED_CHRISTOFIDES and pi_a is None:
        raise InvalidParameter("improved Christofides sample size needs pi_a or worst_case")

    def var_at(n):
        return min_variance_at_epsilon(kind, eps, n, pi_a, p2)

    # every formula is c / N or c / (N - 1)
    offset = 1 if kind == IMPROVED_CHRISTOFIDES else 0
    c = var_at(2) * (2 - offset)
    n = max(2, math.ceil(c / var_target) + offset)
    while var_at(n) > var_target:
        n += 1
    while n > 2 and var_at(n - 1) <= var_target:
        n -= 1
    return n


def variance_ratio_ic_mc(n: int, pi_a: float) -> float:
    """Improved over modified Christofides variance at the same card design."""
    _check_n(n)
    _check_pi(pi_a)
    return 4 * n * pi_a * (1 - pi_a) / (n - 1)
