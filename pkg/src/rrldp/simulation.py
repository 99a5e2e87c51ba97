"""Monte Carlo harness and exact enumeration oracle.

The Monte Carlo side replays whole surveys many times and compares the
empirical spread of the estimator with its closed-form variance.  Seeds are
derived from ``(master seed, cell index, block index)`` through
:class:`numpy.random.SeedSequence`.  A block is a fixed run of
``BLOCK_SIZE`` consecutive replicates, so results do not depend on worker
count or scheduling.

The oracle enumerates every random outcome of a small survey with its exact
probability and returns the estimator's true mean and variance.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import analytics
from .errors import InstanceTooLarge, InvalidParameter
from .mechanisms import (
    CHRISTOFIDES,
    IMPROVED_CHRISTOFIDES,
    KINDS,
    CardDistribution,
    Christofides,
    Deck,
    ImprovedChristofides,
    Population,
    SimmonsParams,
    WarnerParams,
    perturb_block,
    report,
)

BLOCK_SIZE = 1024
ENGINES = ("respondent", "aggregate")
# cap on uniforms materialized at once by the respondent engine
_CHUNK_VARIATES = 1 << 21


@dataclass(frozen=True)
class SimConfig:
    """One Monte Carlo (or analytic) sweep over mechanisms and budgets.

    ``replications == 0`` means analytic-only: theoretical variances at the
    nominal designs, no population or deck is built.

    With ``align_designs`` every mechanism at a grid point is evaluated at
    the design realized by the ``N``-card deck (its epsilon and ``p2``), so
    all four compete at exactly the same privacy budget.  Otherwise each
    mechanism uses its nominal design and only improved Christofides is
    rounded to its deck.
    """

    mechanisms: tuple[str, ...]
    epsilons: tuple[float, ...]
    n: int
    pi_a: float
    replications: int
    seed: int
    p2: float = 0.0
    pi_b: float = 0.5
    engine: str = "respondent"
    align_designs: bool = True

    def __post_init__(self):
        object.__setattr__(self, "mechanisms", tuple(self.mechanisms))
        object.__setattr__(self, "epsilons", tuple(float(e) for e in self.epsilons))
        for kind in self.mechanisms:
            if kind not in KINDS:
                raise InvalidParameter(f"unknown mechanism {kind!r}")
        if not self.mechanisms or not self.epsilons:
            raise InvalidParameter("need at least one mechanism and one epsilon")
        if self.replications < 0:
            raise InvalidParameter("replications must be >= 0")
        if self.engine not in ENGINES:
            raise InvalidParameter(f"engine must be one of {ENGINES}")
        if self.n < 2:
            raise InvalidParameter("N must be at least 2")
        if self.replications > 0:
            Population.from_proportion(self.n, self.pi_a)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["mechanisms"] = list(self.mechanisms)
        d["epsilons"] = list(self.epsilons)
        return d


@dataclass(frozen=True)
class Cell:
    mechanism: str
    epsilon: float
    var_theoretical: float
    var_empirical: float | None
    bias: float | None
    replications: int
    n: int
    pi_a: float
    p2: float | None

    @property
    def mean(self) -> float | None:
        return None if self.bias is None else self.pi_a + self.bias


@dataclass(frozen=True)
class SimulationReport:
    cells: tuple[Cell, ...]
    config: dict = field(default_factory=dict)

    def cell(self, mechanism: str, index: int = 0) -> Cell:
        return [c for c in self.cells if c.mechanism == mechanism][index]

    def series(self, mechanism: str) -> list[Cell]:
        return [c for c in self.cells if c.mechanism == mechanism]


@dataclass(frozen=True)
class ExactResult:
    mean: float
    variance: float
    outcomes: int


# --- designs ----------------------------------------------------------------

def _design_for(kind, eps, config: SimConfig, deck: Deck | None):
    """Mechanism spec (and deck for improved Christofides) at one grid point."""
    if deck is not None and config.align_designs:
        realized = deck.realized_distribution()
        eps = float(analytics.epsilon_of(Christofides(realized)))
        if kind == CHRISTOFIDES:
            return Christofides(realized), None
        if kind == IMPROVED_CHRISTOFIDES:
            return ImprovedChristofides(realized), deck
        return analytics.params_from_epsilon(kind, eps, pi_b=config.pi_b), None
    spec = analytics.params_from_epsilon(kind, eps, pi_b=config.pi_b, p2=config.p2)
    if kind == IMPROVED_CHRISTOFIDES and deck is not None:
        return ImprovedChristofides(deck.realized_distribution()), deck
    return spec, None


def _cell_designs(config: SimConfig):
    """List of ``(kind, spec, deck)`` in cell order (mechanism-major)."""
    christofides_family = {CHRISTOFIDES, IMPROVED_CHRISTOFIDES} & set(config.mechanisms)
    decks = []
    for eps in config.epsilons:
        if config.replications > 0 and christofides_family:
            dist = analytics.optimal_card_distribution(eps, config.p2)
            decks.append(Deck.build(config.n, dist))
        else:
            decks.append(None)
    designs = []
    for kind in config.mechanisms:
        for eps, deck in zip(config.epsilons, decks):
            spec, d = _design_for(kind, eps, config, deck)
            if kind != IMPROVED_CHRISTOFIDES:
                d = None
            designs.append((kind, spec, d))
    return designs


# --- replicate engines ------------------------------------------------------

def _block_rng(seed: int, cell_index: int, block_index: int) -> np.random.Generator:
    ss = np.random.SeedSequence(seed, spawn_key=(cell_index, block_index))
    return np.random.Generator(np.random.PCG64(ss))


def _respondent_block(pop: Population, spec, deck, rows: int, rng) -> np.ndarray:
    n = pop.n
    per = 2 if isinstance(spec, SimmonsParams) else 1
    mech = deck if isinstance(spec, ImprovedChristofides) else spec
    chunk = max(1, _CHUNK_VARIATES // (n * per))
    offset, scale = analytics.estimator_affine(spec)
    out = np.empty(rows)
    for start in range(0, rows, chunk):
        k = min(chunk, rows - start)
        shape = (k, n, 2) if per == 2 else (k, n)
        if isinstance(mech, Deck):
            responses = perturb_block(pop.bits, spec, rng.random(shape), deck=mech)
        else:
            responses = perturb_block(pop.bits, mech, rng.random(shape))
        out[start:start + k] = (responses.sum(axis=1) / n - offset) / scale
    return out


def _aggregate_block(pop: Population, spec, deck, rows: int, rng) -> np.ndarray:
    """Sample the sufficient statistic directly; same law as a full survey."""
    n, m = pop.n, pop.members
    offset, scale = analytics.estimator_affine(spec)
    if isinstance(spec, WarnerParams):
        total = rng.binomial(m, spec.p, rows) + rng.binomial(n - m, 1 - spec.p, rows)
    elif isinstance(spec, SimmonsParams):
        q0 = (1 - spec.p) * spec.pi_b
        total = rng.binomial(m, spec.p + q0, rows) + rng.binomial(n - m, q0, rows)
    else:
        L = spec.dist.L
        values = np.arange(1, L + 1)
        if isinstance(spec, Christofides):
            props = np.asarray(spec.dist.proportions)
            in_a = rng.multinomial(m, props, rows)
            rest = rng.multinomial(n - m, props, rows)
        else:
            colors = np.asarray(deck.initial, dtype=np.int64)
            in_a = rng.multivariate_hypergeometric(colors, m, rows)
            rest = colors[np.newaxis, :] - in_a
        total = in_a @ (L + 1 - values) + rest @ values
    return (total / n - offset) / scale


def _run_block(args):
    seed, cell_index, block_index, rows, engine, bits, spec, deck = args
    pop = Population(bits)
    rng = _block_rng(seed, cell_index, block_index)
    fn = _respondent_block if engine == "respondent" else _aggregate_block
    return fn(pop, spec, deck, rows, rng)


def _population(config: SimConfig, population: Population | None) -> Population:
    if population is None:
        return Population.from_proportion(config.n, config.pi_a)
    if population.n != config.n or population.members != round(config.n * config.pi_a):
        raise InvalidParameter("population does not match the config's N and pi_a")
    return population


def replicate_estimates(config: SimConfig, cell_index: int, spec, deck=None, workers: int = 1,
                        population: Population | None = None) -> np.ndarray:
    """Estimator values of every replicate of one cell, in replicate order."""
    pop = _population(config, population)
    r = config.replications
    tasks = [
        (config.seed, cell_index, b, min(BLOCK_SIZE, r - b * BLOCK_SIZE),
         config.engine, pop.bits, spec, deck)
        for b in range(math.ceil(r / BLOCK_SIZE))
    ]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_run_block, tasks))
    else:
        parts = [_run_block(t) for t in tasks]
    return np.concatenate(parts)


def _p2_of(spec):
    if isinstance(spec, (Christofides, ImprovedChristofides)) and spec.dist.L == 3:
        return spec.dist.proportions[1]
    return None


def monte_carlo(config: SimConfig, workers: int = 1,
                population: Population | None = None) -> SimulationReport:
    """Replicate each (mechanism, epsilon) cell and summarize the estimator.

    ``population`` overrides the default one (members first) built from
    ``config.n`` and ``config.pi_a``, e.g. with an ingested dataset.
    Empirical variance divides by ``R`` (the target is the spread around the
    estimator's own mean); one replicate gives variance 0.
    """
    if config.replications < 1:
        raise InvalidParameter("monte_carlo needs at least one replication")
    cells = []
    for index, (kind, spec, deck) in enumerate(_cell_designs(config)):
        est = replicate_estimates(config, index, spec, deck, workers, population)
        mean = float(np.mean(est))
        cells.append(Cell(
            mechanism=kind,
            epsilon=float(analytics.epsilon_of(spec)),
            var_theoretical=analytics.variance_theoretical(spec, config.n, config.pi_a),
            var_empirical=float(np.mean((est - mean) ** 2)),
            bias=mean - config.pi_a,
            replications=config.replications,
            n=config.n,
            pi_a=config.pi_a,
            p2=_p2_of(spec),
        ))
    return SimulationReport(tuple(cells), config.to_dict())


def sweep_epsilon(config: SimConfig, workers: int = 1) -> SimulationReport:
    """Variance-versus-epsilon data: theoretical variance per cell, plus Monte Carlo when ``R > 0``."""
    if config.replications > 0:
        return monte_carlo(config, workers)
    cells = []
    for kind, spec, _ in _cell_designs(config):
        cells.append(Cell(
            mechanism=kind,
            epsilon=float(analytics.epsilon_of(spec)),
            var_theoretical=analytics.variance_theoretical(spec, config.n, config.pi_a),
            var_empirical=None,
            bias=None,
            replications=0,
            n=config.n,
            pi_a=config.pi_a,
            p2=_p2_of(spec),
        ))
    return SimulationReport(tuple(cells), config.to_dict())


PRESET_EPSILONS = {
    "n100": (0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0),
    "n9-rare": (0.5, 1.0, 1.5, 2.0),
    "census": (0.05, 0.1, 0.2, 0.3, 0.4, 0.5),
}
PRESET_EPSILONS["n9-mid"] = PRESET_EPSILONS["n9-near-half"] = PRESET_EPSILONS["n9-rare"]

_PRESETS = {
    "n100": dict(n=100, pi_a=0.1, p2=0.5),
    "n9-rare": dict(n=9, pi_a=1 / 9, p2=0.36),
    "n9-mid": dict(n=9, pi_a=2 / 9, p2=0.36),
    "n9-near-half": dict(n=9, pi_a=4 / 9, p2=0.36),
    "census": dict(n=3252599, pi_a=0.0778, p2=0.01),
}
PRESETS = tuple(_PRESETS)


def preset_config(name: str, replications: int = 0, seed: int = 0, engine: str = "respondent",
                  epsilons=None) -> SimConfig:
    """Preset variance-versus-epsilon sweep.

    ``census`` (N = 3,252,599) is analytic-only; the others support Monte Carlo.
    """
    if name not in _PRESETS:
        raise InvalidParameter(f"unknown preset {name!r}; expected one of {PRESETS}")
    if name == "census" and replications:
        raise InvalidParameter("census is analytic-only (use replications=0)")
    return SimConfig(
        mechanisms=KINDS,
        epsilons=tuple(epsilons or PRESET_EPSILONS[name]),
        replications=replications,
        seed=seed,
        pi_b=0.5,
        engine=engine,
        **_PRESETS[name],
    )


# --- exact oracle -----------------------------------------------------------

def _respondent_outcomes(spec, x: int):
    """Branch outcomes of one respondent as ``(response, probability)`` pairs."""
    if isinstance(spec, WarnerParams):
        return [(x, spec.p), (1 - x, 1 - spec.p)]
    if isinstance(spec, SimmonsParams):
        p, b = spec.p, spec.pi_b
        return [(x, p), (1, (1 - p) * b), (0, (1 - p) * (1 - b))]
    dist = spec.dist
    return [(report(x, k, dist.L), q) for k, q in enumerate(dist.proportions, start=1) if q > 0]


def _moments(pairs) -> tuple[float, float]:
    mean = math.fsum(w * v for v, w in pairs)
    var = math.fsum(w * (v - mean) ** 2 for v, w in pairs)
    return mean, var


def _enumerate_product(per_draw, n: int, spec) -> ExactResult:
    offset, scale = analytics.estimator_affine(spec)
    pairs = []
    for combo in itertools.product(*per_draw):
        w = math.prod(q for _, q in combo)
        total = sum(r for r, _ in combo)
        pairs.append(((total / n - offset) / scale, w))
    mean, var = _moments(pairs)
    return ExactResult(mean, var, len(pairs))


def _improved_oracle(deck: Deck, pop: Population) -> ExactResult:
    realized = deck.realized_distribution()
    offset, scale = analytics.estimator_affine(Christofides(realized))
    counts = deck.initial
    L, n, m = deck.L, deck.size, pop.members
    values = range(1, L + 1)
    norm = math.comb(n, m)
    pairs = []
    for in_a in itertools.product(*(range(c + 1) for c in counts)):
        if sum(in_a) != m:
            continue
        w = math.prod(math.comb(c, a) for c, a in zip(counts, in_a)) / norm
        total = sum(a * (L + 1 - k) + (c - a) * k for k, c, a in zip(values, counts, in_a))
        pairs.append(((total / n - offset) / scale, w))
    mean, var = _moments(pairs)
    return ExactResult(mean, var, len(pairs))


def exact_oracle(mech, pop: Population, *, max_n: int = 8, sampling: str = "without") -> ExactResult:
    """Exact mean and variance of the estimator by full enumeration.

    ``mech`` is a spec or, for improved Christofides, a :class:`Deck` of
    ``N`` cards (a spec is turned into its largest-remainder deck; the
    estimator then uses the realized proportions).  The improved variant is
    enumerated over the multivariate-hypergeometric allocation of cards to
    group A, which is all the estimator depends on.

    ``sampling="with"`` models the original designs instead: ``N`` draws of
    respondents with replacement, each answering independently.
    """
    n = pop.n
    if n > max_n:
        raise InstanceTooLarge(f"N = {n} exceeds the enumeration cap {max_n}")
    if sampling not in ("without", "with"):
        raise InvalidParameter("sampling must be 'without' or 'with'")
    if isinstance(mech, CardDistribution):
        mech = Christofides(mech)
    if isinstance(mech, (Deck, ImprovedChristofides)):
        if sampling == "with":
            raise InvalidParameter("improved Christofides has no with-replacement form")
        deck = mech if isinstance(mech, Deck) else Deck.build(n, mech.dist)
        if deck.size != n:
            raise InvalidParameter(f"deck has {deck.size} cards for {n} respondents")
        return _improved_oracle(deck, pop)
    bits = pop.bits.tolist()
    if sampling == "without":
        per_draw = [_respondent_outcomes(mech, x) for x in bits]
    else:
        mixture: dict[int, float] = {}
        for x in bits:
            for r, q in _respondent_outcomes(mech, x):
                mixture[r] = mixture.get(r, 0.0) + q / n
        per_draw = [sorted(mixture.items())] * n
    return _enumerate_product(per_draw, n, mech)


def permutation_oracle(deck: Deck, pop: Population) -> ExactResult:
    """Improved Christofides by brute force over every card order (tiny ``N`` only)."""
    n = pop.n
    if n > 7:
        raise InstanceTooLarge("permutation enumeration is limited to N <= 7")
    cards = [k + 1 for k, c in enumerate(deck.initial) for _ in range(c)]
    realized = deck.realized_distribution()
    offset, scale = analytics.estimator_affine(Christofides(realized))
    bits = pop.bits.tolist()
    w = 1 / math.factorial(n)
    pairs = []
    for order in itertools.permutations(cards):
        total = sum(report(x, k, deck.L) for x, k in zip(bits, order))
        pairs.append(((total / n - offset) / scale, w))
    mean, var = _moments(pairs)
    return ExactResult(mean, var, len(pairs))
