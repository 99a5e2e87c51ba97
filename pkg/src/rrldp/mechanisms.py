"""Respondent-side randomization for the four randomized-response mechanisms.

Each respondent holds a sensitive bit ``x`` (1 means member of group A).  The
mechanisms turn that bit into a released response:

* modified Warner: the true bit with probability ``p``, its complement otherwise;
* modified Simmons: the true bit with probability ``p``, otherwise an
  independent Bernoulli(``pi_b``) answer to an innocuous question;
* modified Christofides: a card ``k`` is drawn with replacement and the
  respondent reports ``k`` (non-member) or ``L + 1 - k`` (member);
* improved Christofides: as above, but the cards come from a finite deck of
  exactly ``N`` cards and are not put back.

Randomness is always injected.  Any object with a ``random()`` method
returning floats in ``[0, 1)`` works as a random source; a
:class:`numpy.random.Generator` is the normal choice (see :func:`make_rng`).
Every respondent consumes a fixed number of uniforms regardless of the branch
taken (Warner 1, Simmons 2, Christofides 1, improved Christofides 1), so the
stream stays aligned and surveys replay exactly.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from itertools import accumulate
from typing import Protocol, Union

import numpy as np

from .errors import DeckExhausted, InvalidParameter, RealizedDistributionInvalid

PROPORTION_TOL = 1e-12

WARNER = "warner"
SIMMONS = "simmons"
CHRISTOFIDES = "christofides"
IMPROVED_CHRISTOFIDES = "improved-christofides"
KINDS = (WARNER, SIMMONS, CHRISTOFIDES, IMPROVED_CHRISTOFIDES)


class RandomSource(Protocol):
    def random(self, size=None): ...


def make_rng(seed: int) -> np.random.Generator:
    """Deterministic random source for a 64-bit seed."""
    if seed < 0 or seed >= 2**64:
        raise InvalidParameter(f"seed must fit in 64 unsigned bits, got {seed}")
    return np.random.Generator(np.random.PCG64(seed))


@dataclass(frozen=True, eq=False)
class Population:
    """Sensitive bits of every respondent, in survey order."""

    bits: np.ndarray

    def __post_init__(self):
        bits = np.asarray(self.bits)
        if bits.ndim != 1:
            raise InvalidParameter("population bits must be one-dimensional")
        if bits.size < 2:
            raise InvalidParameter(f"population needs at least 2 respondents, got {bits.size}")
        if not np.isin(bits, (0, 1)).all():
            raise InvalidParameter("population bits must be 0 or 1")
        bits = bits.astype(np.int8)
        bits.setflags(write=False)
        object.__setattr__(self, "bits", bits)

    @classmethod
    def from_proportion(cls, n: int, pi_a: float) -> Population:
        """Population of ``n`` respondents whose first ``n * pi_a`` are members of A.

        ``n * pi_a`` must be an integer (up to float noise).
        """
        if not 0.0 <= pi_a <= 1.0:
            raise InvalidParameter(f"pi_a must lie in [0, 1], got {pi_a}")
        ones = n * pi_a
        m = round(ones)
        if abs(ones - m) > 1e-9:
            raise InvalidParameter(f"n * pi_a = {ones} is not an integer")
        bits = np.zeros(n, dtype=np.int8)
        bits[:m] = 1
        return cls(bits)

    @property
    def n(self) -> int:
        return int(self.bits.size)

    @property
    def members(self) -> int:
        return int(self.bits.sum())

    def true_proportion(self) -> float:
        return self.members / self.n

    def __eq__(self, other):
        return isinstance(other, Population) and np.array_equal(self.bits, other.bits)

    def __hash__(self):
        return hash(self.bits.tobytes())


@dataclass(frozen=True)
class WarnerParams:
    p: float

    def __post_init__(self):
        if not 0.0 < self.p < 0.5:
            raise InvalidParameter(f"Warner p must lie in (0, 1/2), got {self.p}")

    kind = WARNER


@dataclass(frozen=True)
class SimmonsParams:
    p: float
    pi_b: float

    def __post_init__(self):
        if not 0.0 < self.p < 1.0:
            raise InvalidParameter(f"Simmons p must lie in (0, 1), got {self.p}")
        if not 0.0 < self.pi_b < 1.0:
            raise InvalidParameter(f"Simmons pi_b must lie in (0, 1), got {self.pi_b}")

    kind = SIMMONS


@dataclass(frozen=True)
class CardDistribution:
    """Law of the card value ``Y`` on ``1..L``."""

    proportions: tuple[float, ...]
    _cdf: tuple[float, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        props = tuple(float(q) for q in self.proportions)
        object.__setattr__(self, "proportions", props)
        if len(props) < 2:
            raise InvalidParameter("a card distribution needs L >= 2 values")
        if any(q < 0 or not math.isfinite(q) for q in props):
            raise InvalidParameter(f"proportions must be finite and nonnegative: {props}")
        if abs(math.fsum(props) - 1.0) > PROPORTION_TOL:
            raise InvalidParameter(f"proportions must sum to 1, got {math.fsum(props)!r}")
        if max(props) - min(props) <= PROPORTION_TOL:
            raise InvalidParameter("proportions must not all be equal")
        if abs(self.denominator) <= PROPORTION_TOL:
            raise InvalidParameter(
                f"L + 1 - 2 E[Y] = 0 for {props}; the estimator is undefined"
            )
        object.__setattr__(self, "_cdf", tuple(accumulate(props)))

    @property
    def L(self) -> int:
        return len(self.proportions)

    def mean(self) -> float:
        return math.fsum(k * q for k, q in enumerate(self.proportions, start=1))

    def variance(self) -> float:
        ey = self.mean()
        return math.fsum(q * (k - ey) ** 2 for k, q in enumerate(self.proportions, start=1))

    @property
    def denominator(self) -> float:
        """``L + 1 - 2 E[Y]``, the estimator's scale factor."""
        return self.L + 1 - 2 * self.mean()

    @property
    def _top(self) -> int:
        # index of the highest card with positive mass
        return max(i for i, q in enumerate(self.proportions) if q > 0)

    def card_for(self, u: float) -> int:
        """Card value (1-based) selected by the uniform variate ``u``."""
        return min(bisect.bisect_right(self._cdf, u), self._top) + 1

    def cards_for(self, u: np.ndarray) -> np.ndarray:
        idx = np.searchsorted(np.asarray(self._cdf), u, side="right")
        return np.minimum(idx, self._top) + 1


@dataclass(frozen=True)
class Christofides:
    """Modified Christofides mechanism: cards drawn with replacement."""

    dist: CardDistribution
    kind = CHRISTOFIDES


@dataclass(frozen=True)
class ImprovedChristofides:
    """Improved Christofides mechanism: a deck of ``N`` cards, no replacement.

    ``dist`` is the design distribution.  A concrete survey uses the deck built
    by :meth:`Deck.build`, whose realized proportions may differ slightly.
    """

    dist: CardDistribution
    kind = IMPROVED_CHRISTOFIDES


MechanismSpec = Union[WarnerParams, SimmonsParams, Christofides, ImprovedChristofides]


def largest_remainder(n: int, proportions) -> list[int]:
    """Apportion ``n`` items by the largest-remainder rule; ties go to the lower index."""
    quotas = []
    for q in proportions:
        quota = n * q
        nearest = round(quota)
        # absorb float noise such as 10 * 0.3 = 3.0000000000000004
        quotas.append(float(nearest) if abs(quota - nearest) < 1e-9 else quota)
    counts = [int(math.floor(q)) for q in quotas]
    short = n - sum(counts)
    order = sorted(range(len(quotas)), key=lambda k: (-(quotas[k] - counts[k]), k))
    for k in order[:short]:
        counts[k] += 1
    return counts


class Deck:
    """Finite multiset of cards, consumed one draw at a time.

    ``initial`` keeps the composition at construction; analytics for a
    concrete survey use :meth:`realized_distribution`.
    """

    def __init__(self, counts):
        counts = [int(c) for c in counts]
        if len(counts) < 2 or any(c < 0 for c in counts):
            raise InvalidParameter(f"deck counts must be L >= 2 nonnegative integers: {counts}")
        self.initial = tuple(counts)
        self.counts = counts
        self.remaining = sum(counts)

    @classmethod
    def build(cls, n: int, dist: CardDistribution) -> Deck:
        if n < 2:
            raise InvalidParameter(f"a deck needs at least 2 cards, got {n}")
        deck = cls(largest_remainder(n, dist.proportions))
        deck.realized_distribution()
        return deck

    @property
    def L(self) -> int:
        return len(self.counts)

    @property
    def size(self) -> int:
        return sum(self.initial)

    def realized_distribution(self) -> CardDistribution:
        total = self.size
        if total == 0:
            raise RealizedDistributionInvalid("empty deck has no distribution")
        try:
            return CardDistribution(tuple(c / total for c in self.initial))
        except InvalidParameter as exc:
            raise RealizedDistributionInvalid(
                f"deck {self.initial} does not realize a usable distribution: {exc}"
            ) from None

    def copy(self) -> Deck:
        new = Deck(self.initial)
        new.counts = list(self.counts)
        new.remaining = self.remaining
        return new

    def draw(self, u: float) -> int:
        """Remove and return the card picked by uniform ``u`` among those remaining."""
        if self.remaining == 0:
            raise DeckExhausted("the deck has no cards left")
        j = min(int(u * self.remaining), self.remaining - 1)
        cum = 0
        for k, c in enumerate(self.counts):
            cum += c
            if j < cum:
                self.counts[k] -= 1
                self.remaining -= 1
                return k + 1
        raise AssertionError("unreachable: card index beyond deck")

    def __repr__(self):
        return f"Deck(initial={self.initial}, counts={tuple(self.counts)})"


def report(x: int, card: int, L: int) -> int:
    """Christofides response: ``L + 1 - card`` for members of A, ``card`` otherwise."""
    return L + 1 - card if x else card


def warner_perturb(x: int, params: WarnerParams, rand: RandomSource) -> int:
    u = rand.random()
    return x if u < params.p else 1 - x


def simmons_perturb(x: int, params: SimmonsParams, rand: RandomSource) -> int:
    u = rand.random()
    v = rand.random()
    if u < params.p:
        return x
    return int(v < params.pi_b)


def christofides_perturb(x: int, dist: CardDistribution, rand: RandomSource) -> int:
    return report(x, dist.card_for(rand.random()), dist.L)


def improved_christofides_perturb(x: int, deck: Deck, rand: RandomSource) -> int:
    if deck.remaining == 0:
        raise DeckExhausted("the deck has no cards left")
    return report(x, deck.draw(rand.random()), deck.L)


def variates_per_respondent(mech) -> int:
    return 2 if isinstance(mech, SimmonsParams) else 1


def deck_for(mech, n: int) -> Deck:
    """Fresh deck of ``n`` cards for an improved Christofides spec."""
    if isinstance(mech, Deck):
        return mech.copy()
    return Deck.build(n, mech.dist)


def perturb_block(bits: np.ndarray, mech, uniforms: np.ndarray, deck: Deck | None = None) -> np.ndarray:
    """Run the mechanism for every row of a block of replicate surveys.

    ``uniforms`` has shape ``(rows, N)`` or ``(rows, N, 2)`` for Simmons, laid
    out exactly as the sequential per-respondent stream would consume them.
    For improved Christofides each row starts from a copy of ``deck``.
    """
    x = bits[np.newaxis, :]
    if isinstance(mech, WarnerParams):
        return np.where(uniforms < mech.p, x, 1 - x).astype(np.int64)
    if isinstance(mech, SimmonsParams):
        unrelated = (uniforms[..., 1] < mech.pi_b).astype(np.int64)
        return np.where(uniforms[..., 0] < mech.p, x, unrelated)
    if isinstance(mech, CardDistribution):
        mech = Christofides(mech)
    if isinstance(mech, Christofides):
        cards = mech.dist.cards_for(uniforms)
        return np.where(x == 1, mech.dist.L + 1 - cards, cards)
    if deck is None:
        raise InvalidParameter("improved Christofides needs a deck")
    rows, n = uniforms.shape
    if n > deck.remaining:
        raise DeckExhausted(f"{n} respondents but only {deck.remaining} cards")
    counts = np.tile(np.asarray(deck.counts, dtype=np.int64), (rows, 1))
    cards = np.empty((rows, n), dtype=np.int64)
    ar = np.arange(rows)
    for i in range(n):
        remaining = deck.remaining - i
        j = np.minimum((uniforms[:, i] * remaining).astype(np.int64), remaining - 1)
        k = np.argmax(np.cumsum(counts, axis=1) > j[:, np.newaxis], axis=1)
        counts[ar, k] -= 1
        cards[:, i] = k + 1
    return np.where(x == 1, deck.L + 1 - cards, cards)


def survey_run(pop: Population, mech, rand: RandomSource) -> np.ndarray:
    """Collect one response per respondent, in population order.

    ``mech`` is a mechanism spec, a bare :class:`CardDistribution` (modified
    Christofides) or a :class:`Deck` (improved Christofides, consumed in
    place).  An :class:`ImprovedChristofides` spec builds a fresh ``N``-card
    deck.
    """
    n = pop.n
    if isinstance(mech, (ImprovedChristofides, Deck)):
        deck = mech if isinstance(mech, Deck) else Deck.build(n, mech.dist)
        out = np.empty(n, dtype=np.int64)
        for i, x in enumerate(pop.bits.tolist()):
            out[i] = improved_christofides_perturb(x, deck, rand)
        return out
    shape = (1, n, 2) if isinstance(mech, SimmonsParams) else (1, n)
    return perturb_block(pop.bits, mech, rand.random(shape))[0]


def realize(mech: MechanismSpec, n: int) -> MechanismSpec:
    """Spec whose analytics describe an actual survey of ``n`` respondents.

    Only improved Christofides changes: its distribution becomes the realized
    deck composition.
    """
    if isinstance(mech, ImprovedChristofides):
        return ImprovedChristofides(Deck.build(n, mech.dist).realized_distribution())
    return mech
