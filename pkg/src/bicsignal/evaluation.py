"""Scoring detected signals against a labelled reference set, and the eligibility census."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

from .dataset import EventVector, ReportFormatError, ReportMatrix, SchemaError, eligibility_mask

LABELS = ("positive", "negative", "unknown")


@dataclass
class ReferenceSet:
    """Labelled (event_id, drug_id) pairs. Pairs not listed are unknown."""

    entries: dict[tuple[str, str], str] = field(default_factory=dict)

    def label(self, event_id: str, drug_id: str) -> str:
        return self.entries.get((event_id, drug_id), "unknown")

    def out_of_universe(self, event_ids: Iterable[str], drug_ids: Iterable[str]) -> list[tuple[str, str, str]]:
        """Reference pairs whose event or drug is absent from the analysed data."""
        events, drugs = set(event_ids), set(drug_ids)
        return sorted(
            (e, d, lab) for (e, d), lab in self.entries.items() if e not in events or d not in drugs
        )

    @classmethod
    def load(cls, path) -> "ReferenceSet":
        entries: dict[tuple[str, str], str] = {}
        with open(path, encoding="utf-8", newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or not {"event_id", "drug_id", "label"} <= set(reader.fieldnames):
                raise ReportFormatError("header must be event_id,drug_id,label", 1, str(path))
            for lineno, rec in enumerate(reader, start=2):
                key = (rec["event_id"].strip(), rec["drug_id"].strip())
                label = rec["label"].strip().lower()
                if label not in LABELS:
                    raise ReportFormatError(f"unknown label {rec['label']!r}", lineno, str(path))
                if key in entries:
                    raise SchemaError(f"{path}:{lineno}: duplicate reference pair {key}")
                entries[key] = label
        return cls(entries)


@dataclass(frozen=True)
class MetricsRow:
    method: str
    ns: int
    rpc: float
    rnc: float
    rus: float
    empty: bool = False


def score_signals(signals: Sequence[tuple[str, str]], ref: ReferenceSet, method: str = "") -> MetricsRow:
    """Count signals and the share of each reference label among them."""
    ns = len(signals)
    if ns == 0:
        return MetricsRow(method, 0, 0.0, 0.0, 0.0, empty=True)
    counts = {lab: 0 for lab in LABELS}
    for event_id, drug_id in signals:
        counts[ref.label(event_id, drug_id)] += 1
    rates = [Fraction(counts[lab], ns) for lab in LABELS]
    return MetricsRow(method, ns, *(float(r) for r in rates))


def rank_methods(rows: Iterable[MetricsRow]) -> list[MetricsRow]:
    """Order by rate of positive controls, best first; ties by fewer negatives, then name."""
    return sorted(rows, key=lambda r: (-r.rpc, r.rnc, r.method))


@dataclass(frozen=True)
class CensusRow:
    event_id: str
    headcount: int
    p_eligible: int


def eligibility_census(x: ReportMatrix, events: Sequence[EventVector]) -> list[CensusRow]:
    """Per event: number of reports with the event and number of drugs passing the filter."""
    return [CensusRow(ev.event_id, ev.headcount, eligibility_mask(x, ev).p_eligible) for ev in events]


@dataclass(frozen=True)
class SignalRow:
    event: str
    drug: str
    headcount: int  # reports with both the drug and the event
    beta: float
    label: str


def signal_rows(
    x: ReportMatrix,
    event: EventVector,
    signals: Sequence[tuple[int, float]],
    ref: ReferenceSet | None = None,
) -> list[SignalRow]:
    """Turn (drug index, coefficient) pairs into table rows. Drug indices refer to ``x``."""
    ref = ref or ReferenceSet()
    out = []
    for j, beta in signals:
        col = x.column(j)
        headcount = int((col & event.y).sum())
        drug_id = x.drug_ids[j]
        out.append(SignalRow(event.event_id, drug_id, headcount, beta, ref.label(event.event_id, drug_id)))
    return out
