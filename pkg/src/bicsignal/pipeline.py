"""End-to-end runs: ingest, per-event search, signals, baselines, metrics, report files."""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import logging
import math
import platform
import time
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy

from . import __version__
from .baselines import METHODS, run_baselines
from .dataset import EventVector, ReportMatrix, load_reports, load_triplets, select_events
from .evaluation import (
    CensusRow,
    MetricsRow,
    ReferenceSet,
    SignalRow,
    eligibility_census,
    rank_methods,
    score_signals,
    signal_rows,
)
from .logistic import signal_coefficients
from .search import ChainConfig, SearchProblem, TraceRow, search

log = logging.getLogger(__name__)

BIC_METHOD = "Logistic BIC"
MANIFEST = "manifest.json"


class ConfigError(ValueError):
    """The run configuration is unusable; raised before any computation."""


@dataclass
class RunConfig:
    out: Path
    reports: Path | None = None
    drug_triplets: Path | None = None
    event_triplets: Path | None = None
    reference: Path | None = None
    events: list[str] = field(default_factory=list)
    chain: ChainConfig = field(default_factory=ChainConfig)
    baselines: bool = True
    trace: bool = False
    figures: bool = True

    def validate(self):
        if self.reports is None and (self.drug_triplets is None or self.event_triplets is None):
            raise ConfigError("give --reports, or both --drug-triplets and --event-triplets")
        if self.reports is not None and (self.drug_triplets or self.event_triplets):
            raise ConfigError("--reports and the two-file triplet mode are exclusive")
        for name in ("reports", "drug_triplets", "event_triplets", "reference"):
            path = getattr(self, name)
            if path is not None and not Path(path).is_file():
                raise ConfigError(f"{name.replace('_', ' ')} file not found: {path}")
        if self.baselines and self.reference is None:
            raise ConfigError("baselines are enabled but no reference set was given (--reference)")

    def echo(self) -> dict:
        out = {}
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if isinstance(v, ChainConfig):
                v = dataclasses.asdict(v)
            elif isinstance(v, Path):
                v = str(v)
            out[f.name] = v
        return out


@dataclass
class EventOutcome:
    event_id: str
    headcount: int
    p_eligible: int
    method: str
    hit_count: int
    restarts: int
    best_bic: float
    model_size: int
    converged: bool
    models_evaluated: int
    signals: list[SignalRow]
    trace: list[TraceRow]
    warning: str | None
    seconds: float


def load_data(cfg: RunConfig) -> tuple[ReportMatrix, list[EventVector]]:
    if cfg.reports is not None:
        return load_reports(cfg.reports)
    return load_triplets(cfg.drug_triplets, cfg.event_triplets)


def event_seed(seed: int, event_id: str) -> int:
    """Per-event seed independent of which other events are analysed."""
    ss = np.random.SeedSequence([seed, zlib.crc32(event_id.encode("utf-8"))])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def analyze_event(
    x: ReportMatrix,
    event: EventVector,
    chain: ChainConfig,
    ref: ReferenceSet | None = None,
    record_trace: bool = False,
) -> EventOutcome:
    start = time.perf_counter()
    problem = SearchProblem(x, event)
    cfg = dataclasses.replace(chain, seed=event_seed(chain.seed, event.event_id))
    report = search(problem, cfg, record_trace=record_trace)
    fit = report.best_fit
    signals: list[SignalRow] = []
    if fit.converged:
        pairs = signal_coefficients(fit, report.best_model)
        original = [(int(problem.drug_indices[j]), b) for j, b in pairs]
        signals = signal_rows(x, event, original, ref)
    warning = report.warning
    if not fit.converged:
        warning = (warning + "; " if warning else "") + "selected model did not converge"
    return EventOutcome(
        event_id=event.event_id,
        headcount=event.headcount,
        p_eligible=problem.p,
        method=report.method,
        hit_count=report.hit_count,
        restarts=report.restarts,
        best_bic=fit.bic,
        model_size=report.best_model.size,
        converged=fit.converged,
        models_evaluated=report.evaluated,
        signals=signals,
        trace=report.trace,
        warning=warning,
        seconds=time.perf_counter() - start,
    )


# ------------------------------------------------------------------ writers


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return f"{v:.10g}"
    return str(v)


def _csv_bytes(header: Sequence[str], rows) -> bytes:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue().encode("utf-8")


def signals_csv(rows: Sequence[SignalRow]) -> bytes:
    ordered = sorted(rows, key=lambda r: (-r.beta, r.event, r.drug))
    return _csv_bytes(
        ["event", "drug", "headcount", "beta", "label"],
        ((r.event, r.drug, r.headcount, f"{r.beta:.6f}", r.label) for r in ordered),
    )


def metrics_csv(rows: Sequence[MetricsRow]) -> bytes:
    return _csv_bytes(
        ["method", "ns", "rpc", "rnc", "rus"],
        ((r.method, r.ns, f"{r.rpc:.4f}", f"{r.rnc:.4f}", f"{r.rus:.4f}") for r in rows),
    )


def census_csv(rows: Sequence[CensusRow]) -> bytes:
    return _csv_bytes(["event_id", "headcount", "p_eligible"], ((r.event_id, r.headcount, r.p_eligible) for r in rows))


def baselines_csv(records: Sequence[dict]) -> bytes:
    cols = ["event", "drug", "method", "statistic", "pvalue", "signaled"]
    return _csv_bytes(cols, ([rec[c] for c in cols] for rec in records))


def sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


class OutputSet:
    """Files written by one run; removed again if the run fails."""

    def __init__(self, root: Path):
        self.root = root
        self.written: list[Path] = []

    def write(self, name: str, data: bytes) -> Path:
        path = self.root / name
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(data)
        self.written.append(path)
        return path

    def track(self, path: Path) -> Path:
        self.written.append(path)
        return path

    def rollback(self):
        for path in self.written:
            path.unlink(missing_ok=True)
        self.written.clear()

    def hashes(self) -> dict[str, str]:
        return {p.relative_to(self.root).as_posix(): sha256(p) for p in sorted(self.written)}


def _versions() -> dict:
    return {
        "bicsignal": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
    }


def run(cfg: RunConfig) -> dict:
    """Full analysis. Returns the manifest; raises on error after removing partial outputs."""
    cfg.validate()
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    files = OutputSet(out)
    try:
        manifest = _run(cfg, files)
    except BaseException:
        files.rollback()
        (out / MANIFEST).unlink(missing_ok=True)
        raise
    return manifest


def _run(cfg: RunConfig, files: OutputSet) -> dict:
    x, all_events = load_data(cfg)
    events = select_events(all_events, cfg.events)
    ref = ReferenceSet.load(cfg.reference) if cfg.reference is not None else ReferenceSet()
    if x.n == 0:
        raise ValueError("empty dataset")

    census = eligibility_census(x, events)
    outcomes = []
    for ev in events:
        log.info("event %s: searching", ev.event_id)
        outcomes.append(analyze_event(x, ev, cfg.chain, ref, record_trace=cfg.trace))

    all_signals = [s for o in outcomes for s in o.signals]
    metrics = [score_signals([(s.event, s.drug) for s in all_signals], ref, BIC_METHOD)]

    files.write("signals.csv", signals_csv(all_signals))
    files.write("census.csv", census_csv(census))
    if cfg.baselines:
        records = run_baselines(x, events)
        files.write("baselines.csv", baselines_csv(records))
        for method in METHODS:
            flagged = [(r["event"], r["drug"]) for r in records if r["method"] == method and r["signaled"]]
            metrics.append(score_signals(flagged, ref, method))
    files.write("metrics.csv", metrics_csv(rank_methods(metrics)))
    if cfg.trace:
        body = _csv_bytes(
            ["event", *TraceRow._fields], ((o.event_id, *r) for o in outcomes for r in o.trace)
        )
        files.write("trace.csv", body)
    if cfg.figures:
        from .plotting import plot_census, plot_trace, safe_name

        files.track(plot_census(census, files.root / "figures" / "census.png"))
        if cfg.trace:
            for o in outcomes:
                if o.trace:
                    path = files.root / "figures" / f"trace_{safe_name(o.event_id)}.png"
                    files.track(plot_trace(o.trace, path, title=o.event_id))

    manifest = {
        "versions": _versions(),
        "config": cfg.echo(),
        "seed": cfg.chain.seed,
        "events": [
            {
                "event_id": o.event_id,
                "event_seed": event_seed(cfg.chain.seed, o.event_id),
                "headcount": o.headcount,
                "p_eligible": o.p_eligible,
                "method": o.method,
                "hit_count": o.hit_count,
                "restarts": o.restarts,
                "best_bic": o.best_bic if math.isfinite(o.best_bic) else None,
                "model_size": o.model_size,
                "converged": o.converged,
                "models_evaluated": o.models_evaluated,
                "n_signals": len(o.signals),
                "warning": o.warning,
            }
            for o in outcomes
        ],
        "timings_seconds": {o.event_id: round(o.seconds, 3) for o in outcomes},
        "reference_out_of_universe": [
            list(t) for t in ref.out_of_universe([e.event_id for e in events], x.drug_ids)
        ],
        "files": files.hashes(),
    }
    (files.root / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return manifest


def verify_manifest(out) -> list[str]:
    """Names of files whose content no longer matches the manifest hash (or are missing)."""
    out = Path(out)
    manifest = json.loads((out / MANIFEST).read_text(encoding="utf-8"))
    bad = []
    for name, digest in manifest["files"].items():
        path = out / name
        if not path.is_file() or sha256(path) != digest:
            bad.append(name)
    return bad
