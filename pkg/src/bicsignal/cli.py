"""Command line entry point: ``bicsignal {run,generate,census,baselines,verify}``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .baselines import METHODS, run_baselines
from .dataset import ReportFormatError, SchemaError, select_events
from .evaluation import ReferenceSet, eligibility_census, rank_methods, score_signals
from .pipeline import (
    ConfigError,
    OutputSet,
    RunConfig,
    baselines_csv,
    census_csv,
    load_data,
    metrics_csv,
    run,
    verify_manifest,
)
from .search import ChainConfig
from .synthetic import SyntheticSpec, generate_synthetic

THREADS_ENV = "BICSIGNAL_THREADS"

log = logging.getLogger("bicsignal")


def _event_list(text: str | None) -> list[str]:
    return [e.strip() for e in text.split(",") if e.strip()] if text else []


def _threads(arg: int | None) -> int:
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            value = int(env)
        except ValueError:
            raise ConfigError(f"{THREADS_ENV} must be an integer, got {env!r}") from None
    else:
        value = arg if arg is not None else (os.cpu_count() or 1)
    if value < 1:
        raise ConfigError("thread budget must be >= 1")
    return value


def _add_input_args(p: argparse.ArgumentParser):
    p.add_argument("--reports", type=Path, help="report file (single-file format)")
    p.add_argument("--drug-triplets", type=Path, help="report_id,drug_id[,value] CSV (two-file mode)")
    p.add_argument("--event-triplets", type=Path, help="report_id,event_id[,value] CSV (two-file mode)")
    p.add_argument("--events", help="comma-separated event ids (default: all declared events)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bicsignal", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="search, signals, baselines, metrics and figures")
    _add_input_args(p)
    p.add_argument("--reference", type=Path, help="event_id,drug_id,label CSV")
    p.add_argument("--alpha", type=int, default=5, help="max Hamming radius of proposals")
    p.add_argument("--iters", type=int, default=5000, help="iterations per chain")
    p.add_argument("--restarts", type=int, default=100, help="number of chains")
    p.add_argument("--exhaustive-cutoff", type=int, default=12,
                   help="enumerate all models when at most this many drugs are eligible")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--trace", action="store_true", help="write per-iteration chain traces")
    p.add_argument("--no-baselines", action="store_true")
    p.add_argument("--no-figures", action="store_true")

    g = sub.add_parser("generate", help="write a synthetic report file with a planted model")
    g.add_argument("--out", type=Path, required=True, help="report file to write")
    g.add_argument("--spec", type=Path, help="JSON file with SyntheticSpec fields")
    g.add_argument("--n", type=int, default=5000)
    g.add_argument("--p", type=int, default=10)
    g.add_argument("--beta0", type=float, default=-2.0)
    g.add_argument("--coef", action="append", default=[], metavar="J=BETA",
                   help="planted coefficient for drug index J (repeatable)")
    g.add_argument("--prevalence", type=float, default=0.1)
    g.add_argument("--pair", action="append", default=[], metavar="A,B,RHO",
                   help="sample drugs A and B jointly with correlation RHO (repeatable)")
    g.add_argument("--event-id", default="E1")
    g.add_argument("--seed", type=int, required=True)

    c = sub.add_parser("census", help="headcount and eligible-drug count per event")
    _add_input_args(c)
    c.add_argument("--out", type=Path, required=True, help="output directory")
    c.add_argument("--no-figures", action="store_true")

    b = sub.add_parser("baselines", help="PRR, ROR and Fisher mid-p for every drug-event pair")
    _add_input_args(b)
    b.add_argument("--reference", type=Path, help="if given, also write metrics.csv")
    b.add_argument("--out", type=Path, required=True, help="output directory")

    v = sub.add_parser("verify", help="check output files against the run manifest")
    v.add_argument("--out", type=Path, required=True)
    return parser


def _input_config(args, **extra) -> RunConfig:
    return RunConfig(
        out=args.out,
        reports=args.reports,
        drug_triplets=args.drug_triplets,
        event_triplets=args.event_triplets,
        events=_event_list(args.events),
        **extra,
    )


def cmd_run(args) -> int:
    chain = ChainConfig(
        alpha=args.alpha,
        iters=args.iters,
        restarts=args.restarts,
        seed=args.seed,
        exhaustive_cutoff=args.exhaustive_cutoff,
        threads=_threads(args.threads),
    )
    cfg = _input_config(
        args,
        reference=args.reference,
        chain=chain,
        baselines=not args.no_baselines,
        trace=args.trace,
        figures=not args.no_figures,
    )
    manifest = run(cfg)
    for ev in manifest["events"]:
        print(
            f"{ev['event_id']}: {ev['p_eligible']} eligible drugs, {ev['method']}, "
            f"hits {ev['hit_count']}/{ev['restarts']}, {ev['n_signals']} signals"
        )
    return 0


def _parse_pair(text: str) -> tuple[int, int, float]:
    a, b, rho = text.split(",")
    return int(a), int(b), float(rho)


def _parse_coef(text: str) -> tuple[int, float]:
    j, beta = text.split("=")
    return int(j), float(beta)


def cmd_generate(args) -> int:
    if args.spec is not None:
        fields = json.loads(args.spec.read_text(encoding="utf-8"))
        fields["correlated_pairs"] = [tuple(t) for t in fields.get("correlated_pairs", [])]
        spec = SyntheticSpec(**fields)
    else:
        spec = SyntheticSpec(
            n=args.n,
            p=args.p,
            beta0=args.beta0,
            coefficients=dict(_parse_coef(c) for c in args.coef),
            prevalence=args.prevalence,
            correlated_pairs=[_parse_pair(t) for t in args.pair],
            event_id=args.event_id,
        )
    args.out.parent.mkdir(parents=True, exist_ok=True)
    path, sidecar = generate_synthetic(spec, args.seed, args.out)
    print(f"wrote {path} and {sidecar}")
    return 0


def cmd_census(args) -> int:
    cfg = _input_config(args, baselines=False)
    cfg.validate()
    x, events = load_data(cfg)
    rows = eligibility_census(x, select_events(events, cfg.events))
    files = OutputSet(Path(args.out))
    try:
        files.write("census.csv", census_csv(rows))
        if not args.no_figures:
            from .plotting import plot_census

            files.track(plot_census(rows, files.root / "figures" / "census.png"))
    except BaseException:
        files.rollback()
        raise
    return 0


def cmd_baselines(args) -> int:
    cfg = _input_config(args, reference=args.reference, baselines=False)
    cfg.validate()
    x, events = load_data(cfg)
    events = select_events(events, cfg.events)
    records = run_baselines(x, events)
    files = OutputSet(Path(args.out))
    try:
        files.write("baselines.csv", baselines_csv(records))
        if args.reference is not None:
            ref = ReferenceSet.load(args.reference)
            rows = [
                score_signals(
                    [(r["event"], r["drug"]) for r in records if r["method"] == m and r["signaled"]], ref, m
                )
                for m in METHODS
            ]
            files.write("metrics.csv", metrics_csv(rank_methods(rows)))
    except BaseException:
        files.rollback()
        raise
    return 0


def cmd_verify(args) -> int:
    bad = verify_manifest(args.out)
    for name in bad:
        print(f"mismatch: {name}", file=sys.stderr)
    if not bad:
        print("all files match the manifest")
    return 1 if bad else 0


COMMANDS = {
    "run": cmd_run,
    "generate": cmd_generate,
    "census": cmd_census,
    "baselines": cmd_baselines,
    "verify": cmd_verify,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return COMMANDS[args.command](args)
    except ConfigError as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return 2
    except (ReportFormatError, SchemaError, ValueError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
