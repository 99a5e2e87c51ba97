"""Command-line entry point: ``rrldp <subcommand> ...``."""

from __future__ import annotations

import argparse
import json
import sys

from . import analytics, simulation
from .errors import RRError
from .io import (
    HCOVANY_PI_A,
    DatasetCoding,
    RunManifest,
    emit_report,
    ingest_csv,
    resolve_output,
    synthesize_hcovany,
)
from .mechanisms import (
    KINDS,
    Christofides,
    Deck,
    ImprovedChristofides,
    Population,
    SimmonsParams,
    WarnerParams,
    make_rng,
    realize,
    survey_run,
)

# health-insurance style data that could cause material harm if disclosed
SENSITIVITY_LEVELS = {
    "material-harm": (0.05, 0.1, 0.2, 0.3, 0.4, 0.5),
}


def _add_output(p):
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--out", help="output file (default: stdout); relative paths honor $RRLDP_OUTPUT_DIR")


def _add_design(p, multiple=False):
    if multiple:
        p.add_argument("--mechanism", action="append", choices=KINDS,
                       help="repeatable; default: all four")
        p.add_argument("--epsilon", action="append", type=float, help="repeatable")
        p.add_argument("--sensitivity-level", choices=sorted(SENSITIVITY_LEVELS),
                       help="use a preset epsilon grid instead of --epsilon")
    else:
        p.add_argument("--mechanism", required=True, choices=KINDS)
        p.add_argument("--epsilon", required=True, type=float)
    p.add_argument("--p2", type=float, default=0.0, help="middle card proportion (Christofides family)")
    p.add_argument("--pi-b", type=float, default=0.5, help="unrelated-question proportion (Simmons)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rrldp", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="Monte Carlo variance of the estimators")
    _add_design(p, multiple=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--pi-a", type=float, required=True)
    p.add_argument("--reps", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--engine", choices=simulation.ENGINES, default="respondent")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--no-align", action="store_true",
                   help="keep nominal designs instead of the deck-realized ones")
    _add_output(p)

    p = sub.add_parser("sweep", help="variance-versus-epsilon curves")
    p.add_argument("--preset", choices=simulation.PRESETS)
    _add_design(p, multiple=True)
    p.add_argument("--n", type=int)
    p.add_argument("--pi-a", type=float)
    p.add_argument("--reps", type=int, default=0, help="0 = analytic only")
    p.add_argument("--seed", type=int)
    p.add_argument("--engine", choices=simulation.ENGINES, default="respondent")
    p.add_argument("--workers", type=int, default=1)
    _add_output(p)

    p = sub.add_parser("compare", help="regime thresholds and mechanism ranking")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--p2", type=float, required=True)
    p.add_argument("--pi-a", type=float)
    p.add_argument("--seed", type=int, help="accepted for uniformity; unused")

    p = sub.add_parser("sample-size", help="minimum population size for a variance target")
    p.add_argument("--mechanism", required=True, choices=KINDS)
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--var", type=float, required=True)
    p.add_argument("--pi-a", type=float)
    p.add_argument("--p2", type=float, default=0.0)
    p.add_argument("--worst-case", action="store_true", help="assume pi_a = 1/2")
    p.add_argument("--seed", type=int, help="accepted for uniformity; unused")

    p = sub.add_parser("ingest", help="load a coded CSV and optionally survey it")
    p.add_argument("path")
    p.add_argument("--column", default="HCOVANY")
    p.add_argument("--codes", default="1=1,2=0",
                   help="code=bit pairs; default is the HCOVANY coding (1 uninsured = sensitive)")
    p.add_argument("--mechanism", choices=KINDS, help="also run a privatized survey")
    p.add_argument("--epsilon", type=float)
    p.add_argument("--p2", type=float, default=0.0)
    p.add_argument("--pi-b", type=float, default=0.5)
    p.add_argument("--seed", type=int)

    p = sub.add_parser("synth", help="write a synthetic HCOVANY-style CSV")
    p.add_argument("path")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--pi-a", type=float, default=HCOVANY_PI_A)
    p.add_argument("--seed", type=int, required=True)

    p = sub.add_parser("design", help="mechanism parameters for a privacy budget")
    _add_design(p)
    p.add_argument("--n", type=int, help="also show the N-card deck")
    p.add_argument("--seed", type=int, help="accepted for uniformity; unused")

    p = sub.add_parser("oracle", help="exact mean and variance by enumeration")
    _add_design(p)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--pi-a", type=float, required=True)
    p.add_argument("--sampling", choices=("without", "with"), default="without")
    p.add_argument("--max-n", type=int, default=8)
    p.add_argument("--seed", type=int, help="accepted for uniformity; unused")

    p = sub.add_parser("replay", help="re-run the command recorded in a manifest")
    p.add_argument("manifest")
    p.add_argument("--out")
    return parser


def _write(args, payload: bytes, manifest: RunManifest | None) -> None:
    if args.out:
        path = resolve_output(args.out)
        path.write_bytes(payload)
        if manifest is not None:
            path.with_name(path.name + ".manifest.json").write_text(manifest.to_json(), encoding="utf-8")
    else:
        sys.stdout.buffer.write(payload)
        sys.stdout.flush()
        if manifest is not None:
            print("# manifest: " + json.dumps(json.loads(manifest.to_json()), sort_keys=True),
                  file=sys.stderr)


def _epsilons(args):
    if args.sensitivity_level:
        return SENSITIVITY_LEVELS[args.sensitivity_level]
    return tuple(args.epsilon or ())


def _manifest(args, argv) -> RunManifest:
    params = {k: v for k, v in vars(args).items() if k not in ("func", "out")}
    params["argv"] = _strip_out(argv)
    return RunManifest.create(args.command, params, getattr(args, "seed", None))


def _strip_out(argv):
    out, skip = [], False
    for a in argv:
        if skip:
            skip = False
            continue
        if a == "--out":
            skip = True
            continue
        if a.startswith("--out="):
            continue
        out.append(a)
    return out


def cmd_simulate(args, argv):
    eps = _epsilons(args)
    if not eps:
        raise RRError("simulate needs --epsilon or --sensitivity-level")
    config = simulation.SimConfig(
        mechanisms=tuple(args.mechanism or KINDS), epsilons=eps, n=args.n, pi_a=args.pi_a,
        replications=args.reps, seed=args.seed, p2=args.p2, pi_b=args.pi_b,
        engine=args.engine, align_designs=not args.no_align,
    )
    if args.reps < 1:
        raise RRError("simulate needs --reps >= 1")
    manifest = _manifest(args, argv)
    report = simulation.monte_carlo(config, workers=args.workers)
    _write(args, emit_report(report, args.format, manifest), manifest)


def cmd_sweep(args, argv):
    eps = _epsilons(args) or None
    if args.reps > 0 and args.seed is None:
        raise RRError("sweep with --reps > 0 needs --seed")
    seed = args.seed if args.seed is not None else 0
    if args.preset:
        config = simulation.preset_config(args.preset, args.reps, seed, args.engine, eps)
    else:
        if args.n is None or args.pi_a is None or not eps:
            raise RRError("sweep needs --preset, or --n, --pi-a and --epsilon")
        config = simulation.SimConfig(
            mechanisms=tuple(args.mechanism or KINDS), epsilons=eps, n=args.n, pi_a=args.pi_a,
            replications=args.reps, seed=seed, p2=args.p2, pi_b=args.pi_b, engine=args.engine,
        )
    manifest = _manifest(args, argv)
    report = simulation.sweep_epsilon(config, workers=args.workers)
    _write(args, emit_report(report, args.format, manifest), manifest)


def cmd_compare(args, argv):
    lo, hi = analytics.regime_thresholds(args.n, args.epsilon, args.p2)
    c_lo, c_hi = analytics.ic_mc_crossover(args.n)
    print(f"pi_A1 = {lo:.6f}")
    print(f"pi_A2 = {hi:.6f}")
    print(f"interval_length = {hi - lo:.6f}")
    print(f"ic_mc_crossover = ({c_lo:.6f}, {c_hi:.6f})")
    if args.pi_a is not None:
        rep = analytics.classify_regime(args.pi_a, args.n, args.epsilon, args.p2)
        print(f"ordering = {rep.describe()}")
        for name, v in rep.variances.items():
            print(f"var[{name}] = {v!r}")


def cmd_sample_size(args, argv):
    n = analytics.min_sample_size(args.mechanism, args.epsilon, args.var, pi_a=args.pi_a,
                                  p2=args.p2, worst_case=args.worst_case)
    print(n)


def _parse_codes(text: str) -> dict:
    mapping = {}
    for part in text.split(","):
        code, _, bit = part.partition("=")
        if not bit or bit.strip() not in ("0", "1"):
            raise RRError(f"bad --codes entry {part!r}; expected code=0 or code=1")
        mapping[code.strip()] = int(bit)
    return mapping


def cmd_ingest(args, argv):
    column = int(args.column) if args.column.isdigit() else args.column
    pop = ingest_csv(args.path, DatasetCoding(column, _parse_codes(args.codes)))
    print(f"N = {pop.n}")
    print(f"pi_A = {pop.true_proportion()!r}")
    if args.mechanism is None:
        return
    if args.epsilon is None or args.seed is None:
        raise RRError("surveying needs --epsilon and --seed")
    spec = analytics.params_from_epsilon(args.mechanism, args.epsilon, pi_b=args.pi_b, p2=args.p2)
    spec = realize(spec, pop.n)
    rng = make_rng(args.seed)
    mech = Deck.build(pop.n, spec.dist) if isinstance(spec, ImprovedChristofides) else spec
    responses = survey_run(pop, mech, rng)
    est = analytics.estimate(responses, spec)
    var = analytics.variance_theoretical(spec, pop.n, pop.true_proportion())
    print(f"estimate = {est!r}")
    print(f"estimate_clamped = {analytics.clamped(est)!r}")
    print(f"epsilon = {float(analytics.epsilon_of(spec))!r}")
    print(f"var_theoretical = {var!r}")


def cmd_synth(args, argv):
    pop = synthesize_hcovany(resolve_output(args.path), args.n, args.seed, args.pi_a)
    print(f"wrote {pop.n} rows, pi_A = {pop.true_proportion()!r}")


def _describe(spec) -> str:
    if isinstance(spec, WarnerParams):
        return f"p = {spec.p!r}"
    if isinstance(spec, SimmonsParams):
        return f"p = {spec.p!r}\npi_B = {spec.pi_b!r}"
    return "proportions = " + ", ".join(repr(q) for q in spec.dist.proportions)


def cmd_design(args, argv):
    spec = analytics.params_from_epsilon(args.mechanism, args.epsilon, pi_b=args.pi_b, p2=args.p2)
    print(f"mechanism = {args.mechanism}")
    print(_describe(spec))
    print(f"epsilon = {float(analytics.epsilon_of(spec))!r}")
    if args.n is not None and isinstance(spec, (Christofides, ImprovedChristofides)):
        deck = Deck.build(args.n, spec.dist)
        realized = deck.realized_distribution()
        print("deck_counts = " + ", ".join(str(c) for c in deck.initial))
        print(f"realized_epsilon = {float(analytics.epsilon_of(Christofides(realized)))!r}")


def cmd_oracle(args, argv):
    spec = analytics.params_from_epsilon(args.mechanism, args.epsilon, pi_b=args.pi_b, p2=args.p2)
    pop = Population.from_proportion(args.n, args.pi_a)
    result = simulation.exact_oracle(spec, pop, max_n=args.max_n, sampling=args.sampling)
    analytic = realize(spec, args.n)
    if args.sampling == "with":
        closed = analytics.variance_with_replacement(analytic, args.n, args.pi_a)
    else:
        closed = analytics.variance_theoretical(analytic, args.n, args.pi_a)
    print(f"outcomes = {result.outcomes}")
    print(f"mean = {result.mean!r}")
    print(f"variance = {result.variance!r}")
    print(f"closed_form = {closed!r}")
    print(f"abs_diff = {abs(result.variance - closed)!r}")


def cmd_replay(args, argv):
    with open(args.manifest, encoding="utf-8") as fh:
        manifest = RunManifest.from_json(fh.read())
    again = list(manifest.params["argv"])
    if args.out:
        again += ["--out", args.out]
    return main(again)


COMMANDS = {
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "compare": cmd_compare,
    "sample-size": cmd_sample_size,
    "ingest": cmd_ingest,
    "synth": cmd_synth,
    "design": cmd_design,
    "oracle": cmd_oracle,
    "replay": cmd_replay,
}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    try:
        status = COMMANDS[args.command](args, argv)
    except (RRError, OSError) as exc:
        print(f"rrldp {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return status or 0


if __name__ == "__main__":
    sys.exit(main())
