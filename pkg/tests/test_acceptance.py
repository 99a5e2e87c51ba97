"""Acceptance criteria, each at its stated tolerance and runtime bound.

Every criterion records one PASS/FAIL line, printed at the end of the
pytest run.  Run alone with ``pytest tests/test_acceptance.py`` or
``python3 tests/test_acceptance.py``.
"""

import contextlib
import io
import itertools
import subprocess
import sys
import time

import pytest

from rrldp import analytics as A
from rrldp import simulation as S
from rrldp.cli import main
from rrldp.errors import RealizedDistributionInvalid
from rrldp.io import ingest_csv, synthesize_hcovany
from rrldp.mechanisms import (
    CHRISTOFIDES,
    IMPROVED_CHRISTOFIDES,
    KINDS,
    SIMMONS,
    WARNER,
    CardDistribution,
    Christofides,
    Deck,
    ImprovedChristofides,
    Population,
    SimmonsParams,
    WarnerParams,
)

pytestmark = pytest.mark.acceptance


def rel(a, b):
    return abs(a - b) / max(abs(a), abs(b))


class Criterion:
    """Collects failures and timing for one criterion, then records a verdict."""

    def __init__(self, sink, number, title, budget=None):
        self.sink, self.number, self.title, self.budget = sink, number, title, budget
        self.failures = []
        self.notes = []

    def check(self, ok, message):
        if not ok:
            self.failures.append(message)

    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb):
        seconds = time.perf_counter() - self.start
        if exc is not None:
            self.failures.append(f"{exc_type.__name__}: {exc}")
        if self.budget is not None and seconds >= self.budget:
            self.failures.append(f"runtime {seconds:.2f} s exceeds {self.budget} s")
        passed = not self.failures
        detail = "; ".join(self.notes) if passed else "; ".join(self.failures[:5])
        self.sink.append((self.number, self.title, passed, seconds, detail))
        assert passed, detail
        return False


def cli_stdout(*argv):
    buf = io.StringIO()
    with contextlib.redirect_stdout(buf):
        status = main(list(argv))
    assert status == 0
    return buf.getvalue()


# --- 1 ----------------------------------------------------------------------

REFERENCE_EPS = (0.01, 0.05, 0.25, 0.5)
REFERENCE_SAMPLE_SIZES = {
    WARNER: (100000, 4000, 160, 40),
    SIMMONS: (100000, 4000, 160, 40),
    IMPROVED_CHRISTOFIDES: (36365, 1456, 59, 16),
    CHRISTOFIDES: (101011, 4040, 161, 40),
}


def test_reference_sample_sizes(acceptance):
    with Criterion(acceptance, 1, "sample-size table", budget=1.0) as c:
        for kind, expected in REFERENCE_SAMPLE_SIZES.items():
            for eps, want in zip(REFERENCE_EPS, expected):
                got = int(cli_stdout("sample-size", "--mechanism", kind, "--epsilon", str(eps),
                                     "--pi-a", "0.1", "--p2", "0.01", "--var", "0.1"))
                if kind == CHRISTOFIDES:
                    c.check(abs(got - want) <= 1e-4 * want, f"{kind} eps={eps}: {got} vs {want} (>0.01%)")
                else:
                    c.check(abs(got - want) <= 2, f"{kind} eps={eps}: {got} vs {want} (>±2)")
        c.notes.append("16 cells within tolerance")


# --- 2 ----------------------------------------------------------------------

REFERENCE_INTERVALS = {0.01: (0.100, 0.101, 0.101, 0.104), 0.05: (0.224, 0.224, 0.225, 0.230)}


def test_reference_interval_lengths(acceptance):
    with Criterion(acceptance, 2, "regime interval lengths", budget=1.0) as c:
        worst = 0.0
        for p2, row in REFERENCE_INTERVALS.items():
            for eps, want in zip(REFERENCE_EPS, row):
                lo, hi = A.regime_thresholds(10**4, eps, p2)
                worst = max(worst, abs(hi - lo - want))
                c.check(abs(hi - lo - want) <= 0.001, f"p2={p2} eps={eps}: {hi - lo:.5f} vs {want}")
        c.notes.append(f"8 cells, max |diff| = {worst:.5f}")


# --- 3 ----------------------------------------------------------------------

def test_census_variance_ratio(acceptance, tmp_path):
    with Criterion(acceptance, 3, "IC/MC variance ratio, analytic and synthetic end-to-end", budget=120) as c:
        ratio = A.variance_ratio_ic_mc(3252599, 0.0778)
        c.check(abs(ratio - 0.287) <= 5e-4, f"analytic ratio {ratio:.6f}")
        n = 10**5
        synthesize_hcovany(tmp_path / "hcovany.csv", n, seed=2024)
        pop = ingest_csv(tmp_path / "hcovany.csv")
        cfg = S.SimConfig(mechanisms=(CHRISTOFIDES, IMPROVED_CHRISTOFIDES), epsilons=(0.25,), n=n,
                          pi_a=pop.true_proportion(), replications=10**4, seed=2024, p2=0.01,
                          engine="aggregate")
        rep = S.monte_carlo(cfg, population=pop)
        empirical = rep.cell(IMPROVED_CHRISTOFIDES).var_empirical / rep.cell(CHRISTOFIDES).var_empirical
        c.check(abs(empirical / 0.287 - 1) <= 0.15, f"empirical ratio {empirical:.4f}")
        c.notes.append(f"analytic {ratio:.6f}, empirical {empirical:.4f} (pi_A={pop.true_proportion()})")


# --- 4 ----------------------------------------------------------------------

ORACLE_SPECS = {
    WARNER: [WarnerParams(0.1), WarnerParams(0.25), WarnerParams(0.4)],
    SIMMONS: [SimmonsParams(0.3, 0.7), SimmonsParams(0.6, 0.2), SimmonsParams(0.5, 0.5)],
    CHRISTOFIDES: [
        Christofides(CardDistribution((0.2, 0.5, 0.3))),
        Christofides(CardDistribution((0.05, 0.36, 0.59))),
        Christofides(CardDistribution((0.6, 0.1, 0.2, 0.1))),
    ],
}


def valid_decks(n, L=3):
    for counts in itertools.product(range(n + 1), repeat=L):
        if sum(counts) != n:
            continue
        deck = Deck(counts)
        try:
            deck.realized_distribution()
        except RealizedDistributionInvalid:
            continue
        yield deck


def test_oracle_exactness(acceptance):
    with Criterion(acceptance, 4, "exact enumeration vs closed forms", budget=30) as c:
        checked = 0
        worst = 0.0
        for n in range(2, 7):
            designs = [(kind, spec) for kind, specs in ORACLE_SPECS.items() for spec in specs]
            decks = list(valid_decks(n))
            c.check(len(decks) >= 3, f"N={n}: only {len(decks)} valid decks")
            designs += [(IMPROVED_CHRISTOFIDES, deck) for deck in decks]
            for m in range(n + 1):
                pop = Population.from_proportion(n, m / n)
                for kind, mech in designs:
                    res = S.exact_oracle(mech, pop)
                    if kind == IMPROVED_CHRISTOFIDES:
                        spec = ImprovedChristofides(mech.realized_distribution())
                    else:
                        spec = mech
                    closed = A.variance_theoretical(spec, n, m / n)
                    err = max(abs(res.mean - m / n), abs(res.variance - closed))
                    worst = max(worst, err)
                    c.check(err <= 1e-12, f"{kind} {mech} N={n} m={m}: error {err:.2e}")
                    checked += 1
        c.notes.append(f"{checked} (design, N, pi_A) cases, max error {worst:.1e}")


# --- 5 ----------------------------------------------------------------------

def test_n100_monte_carlo(acceptance):
    with Criterion(acceptance, 5, "N=100 Monte Carlo vs theory", budget=60) as c:
        cfg = S.preset_config("n100", replications=10**4, seed=2, epsilons=(0.25, 0.5, 1.0, 2.0))
        rep = S.monte_carlo(cfg)
        worst = 0.0
        for kind in KINDS:
            series = rep.series(kind)
            for cell in series:
                r = abs(cell.var_empirical / cell.var_theoretical - 1)
                worst = max(worst, r)
                c.check(r <= 0.05, f"{kind} eps={cell.epsilon:.4f}: rel error {r:.3f}")
            for name in ("var_theoretical", "var_empirical"):
                values = [getattr(cell, name) for cell in series]
                c.check(all(a > b for a, b in zip(values, values[1:])), f"{kind} {name} not decreasing")
        c.notes.append(f"16 cells, max rel error {worst:.3f}, all strictly decreasing")


# --- 6 ----------------------------------------------------------------------

LABEL = {WARNER: "MW/MS", SIMMONS: "MW/MS", CHRISTOFIDES: "MC", IMPROVED_CHRISTOFIDES: "IC"}


def test_small_population_orderings(acceptance):
    with Criterion(acceptance, 6, "N=9 regime orderings (theory and Monte Carlo)", budget=120) as c:
        compared = 0
        regimes = []
        for name in ("n9-rare", "n9-mid", "n9-near-half"):
            cfg = S.preset_config(name, replications=10**5, seed=6)
            rep = S.monte_carlo(cfg)
            for i in range(len(cfg.epsilons)):
                cells = {kind: rep.series(kind)[i] for kind in KINDS}
                ic = cells[IMPROVED_CHRISTOFIDES]
                regime = A.classify_regime(cfg.pi_a, cfg.n, ic.epsilon, ic.p2)
                rank = {label: r for r, group in enumerate(regime.ordering) for label in group}
                regimes.append(regime.describe())
                c.check(rel(cells[WARNER].var_theoretical, cells[SIMMONS].var_theoretical) <= 1e-12,
                        f"{name}: Simmons differs from Warner")
                for a, b in itertools.combinations(KINDS, 2):
                    va, vb = cells[a].var_theoretical, cells[b].var_theoretical
                    if LABEL[a] != LABEL[b]:
                        c.check((va < vb) == (rank[LABEL[a]] < rank[LABEL[b]]),
                                f"{name} eps={ic.epsilon:.3f}: theory {a} vs {b} disagrees with regime")
                    if max(va, vb) >= 1.1 * min(va, vb):
                        ea, eb = cells[a].var_empirical, cells[b].var_empirical
                        c.check((ea < eb) == (va < vb), f"{name} eps={ic.epsilon:.3f}: MC {a} vs {b}")
                        compared += 1
        c.notes.append(f"regimes {sorted(set(regimes))}; {compared} separated pairs agree")


# --- 7 ----------------------------------------------------------------------

EPS_GRID = sorted(set(REFERENCE_EPS) | set(itertools.chain(*S.PRESET_EPSILONS.values())))


def test_round_trip_and_reductions(acceptance):
    with Criterion(acceptance, 7, "epsilon round trip and reductions", budget=1.0) as c:
        worst = 0.0
        for eps in EPS_GRID:
            for kind, aux in [(WARNER, {}), (SIMMONS, dict(pi_b=0.5)), (SIMMONS, dict(pi_b=0.2)),
                              (CHRISTOFIDES, dict(p2=0.36)), (IMPROVED_CHRISTOFIDES, dict(p2=0.01))]:
                back = float(A.epsilon_of(A.params_from_epsilon(kind, eps, **aux)))
                worst = max(worst, abs(back - eps))
                c.check(abs(back - eps) <= 1e-12, f"{kind} {aux} eps={eps}: {back!r}")
            for n in (9, 100, 10**4):
                mw = A.min_variance_at_epsilon(WARNER, eps, n)
                mc = A.min_variance_at_epsilon(CHRISTOFIDES, eps, n, p2=0.0)
                designed_mc = A.variance_theoretical(A.params_from_epsilon(CHRISTOFIDES, eps, p2=0.0), n, 0.1)
                ms = A.variance_theoretical(A.params_from_epsilon(SIMMONS, eps, pi_b=0.5), n, 0.1)
                for label, v in (("MC p2=0", mc), ("MC design p2=0", designed_mc), ("MS pi_B=1/2", ms)):
                    c.check(rel(v, mw) <= 1e-12, f"{label} eps={eps} N={n}: rel {rel(v, mw):.1e}")
        c.notes.append(f"{len(EPS_GRID)} budgets, max round-trip error {worst:.1e}")


# --- 8 ----------------------------------------------------------------------

def run_cli(*argv):
    proc = subprocess.run([sys.executable, "-m", "rrldp", *argv], capture_output=True)
    assert proc.returncode == 0, proc.stderr.decode()
    return proc


def test_simulate_determinism(acceptance, tmp_path):
    with Criterion(acceptance, 8, "simulate byte-identical across repeats, workers and replay") as c:
        base = ["simulate", "--epsilon", "0.5", "--epsilon", "1.0", "--n", "50", "--pi-a", "0.2",
                "--p2", "0.2", "--reps", "5000", "--seed", "8"]
        for fmt in ("csv", "json"):
            outs = []
            for tag, workers in (("a", 1), ("b", 1), ("c", 4)):
                path = tmp_path / f"{tag}.{fmt}"
                run_cli(*base, "--workers", str(workers), "--format", fmt, "--out", str(path))
                outs.append(path.read_bytes())
            replayed = tmp_path / f"replay.{fmt}"
            run_cli("replay", str(tmp_path / f"a.{fmt}.manifest.json"), "--out", str(replayed))
            outs.append(replayed.read_bytes())
            stdout = run_cli(*base, "--workers", "2", "--format", fmt).stdout
            outs.append(stdout)
            c.check(len(set(outs)) == 1, f"{fmt}: {len(set(outs))} distinct payloads")
        c.notes.append("csv and json identical over 2 repeats, 4 workers, replay and stdout")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
