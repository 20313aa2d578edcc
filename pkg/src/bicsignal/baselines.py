"""Disproportionality baselines on 2x2 drug x event projections.

PRR and ROR use the usual normal approximation on the log statistic, tested
one-sided against 1. RFET is the one-sided Fisher exact test with a mid-p
correction. Each method signals when its p-value is below 0.05 and the
drug-event co-occurrence count reaches the method's minimum (3, 3 and 1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .dataset import EventVector, ReportMatrix, contingency_counts

THRESHOLD = 0.05
MIN_COUNT = {"PRR": 3, "ROR": 3, "RFET": 1}
METHODS = ("PRR", "ROR", "RFET")


@dataclass(frozen=True)
class ContingencyTable:
    a: int  # drug and event
    b: int  # drug, no event
    c: int  # event, no drug
    d: int  # neither

    def __post_init__(self):
        if min(self.a, self.b, self.c, self.d) < 0:
            raise ValueError("contingency cells must be non-negative")

    @property
    def n(self) -> int:
        return self.a + self.b + self.c + self.d


@dataclass(frozen=True)
class BaselineResult:
    method: str
    statistic: float
    pvalue: float
    signaled: bool


def project(x: ReportMatrix, y: EventVector, drug: int) -> ContingencyTable:
    if not 0 <= drug < x.p:
        raise IndexError(f"drug index {drug} outside [0, {x.p})")
    col = x.column(drug).astype(bool)
    ev = y.y.astype(bool)
    a = int(np.sum(col & ev))
    b = int(np.sum(col & ~ev))
    c = int(np.sum(~col & ev))
    return ContingencyTable(a, b, c, x.n - a - b - c)


def project_all(x: ReportMatrix, y: EventVector) -> list[ContingencyTable]:
    return [ContingencyTable(*map(int, row)) for row in contingency_counts(x, y)]


def _ratio(num: float, den: float) -> float:
    if den == 0:
        return math.inf if num > 0 else math.nan
    return num / den


def prr_ror(t: ContingencyTable) -> tuple[float, float]:
    """Point estimates, with +inf (or nan for 0/0) when a denominator vanishes."""
    prr = _ratio(_ratio(t.a, t.a + t.b), _ratio(t.c, t.c + t.d))
    ror = _ratio(t.a * t.d, t.b * t.c)
    return prr, ror


def _haldane(t: ContingencyTable) -> tuple[float, float, float, float]:
    if min(t.a, t.b, t.c, t.d) == 0:
        return t.a + 0.5, t.b + 0.5, t.c + 0.5, t.d + 0.5
    return float(t.a), float(t.b), float(t.c), float(t.d)


def _upper_normal_p(z: float) -> float:
    return float(ndtr(-z))


def prr_pvalue(t: ContingencyTable) -> float:
    a, b, c, d = _haldane(t)
    log_prr = math.log((a / (a + b)) / (c / (c + d)))
    se = math.sqrt(1 / a - 1 / (a + b) + 1 / c - 1 / (c + d))
    return _upper_normal_p(log_prr / se)


def ror_pvalue(t: ContingencyTable) -> float:
    a, b, c, d = _haldane(t)
    log_ror = math.log((a * d) / (b * c))
    se = math.sqrt(1 / a + 1 / b + 1 / c + 1 / d)
    return _upper_normal_p(log_ror / se)


def _hypergeom_weights(t: ContingencyTable) -> tuple[int, np.ndarray]:
    """Unnormalised hypergeometric pmf of the drug-and-event cell given the margins.

    Built by the ratio recurrence outward from the mode, so the largest weight is
    1 and no factorials are ever formed. Returns (lowest support value, weights).
    """
    n = t.n
    drug = t.a + t.b
    event = t.a + t.c
    lo = max(0, drug + event - n)
    hi = min(drug, event)
    mode = min(hi, max(lo, (drug + 1) * (event + 1) // (n + 2)))
    w = np.empty(hi - lo + 1)
    w[mode - lo] = 1.0
    v = 1.0
    for k in range(mode, hi):
        v *= (drug - k) * (event - k) / ((k + 1) * (n - drug - event + k + 1))
        w[k + 1 - lo] = v
    v = 1.0
    for k in range(mode, lo, -1):
        v *= k * (n - drug - event + k) / ((drug - k + 1) * (event - k + 1))
        w[k - 1 - lo] = v
    return lo, w


def fisher_mid_p(t: ContingencyTable) -> float:
    """One-sided mid-p: P(A > a) + P(A = a) / 2 under the hypergeometric null."""
    lo, w = _hypergeom_weights(t)
    i = t.a - lo
    total = math.fsum(w)
    upper = math.fsum(w[i + 1:]) + 0.5 * w[i]
    return min(1.0, max(0.0, float(upper / total)))


def evaluate_table(t: ContingencyTable, threshold: float = THRESHOLD) -> list[BaselineResult]:
    prr, ror = prr_ror(t)
    out = []
    for method, stat, pval in (
        ("PRR", prr, prr_pvalue(t)),
        ("ROR", ror, ror_pvalue(t)),
        ("RFET", fisher_mid_p_statistic(t), fisher_mid_p(t)),
    ):
        signaled = t.a >= MIN_COUNT[method] and pval < threshold
        if method != "RFET" and not math.isfinite(stat):
            signaled = False
        out.append(BaselineResult(method, stat, pval, signaled))
    return out


def fisher_mid_p_statistic(t: ContingencyTable) -> float:
    """Observed-to-expected ratio of the co-occurrence cell, reported alongside the mid-p."""
    expected = (t.a + t.b) * (t.a + t.c) / t.n if t.n else 0.0
    return _ratio(t.a, expected)


def run_baselines(x: ReportMatrix, events, threshold: float = THRESHOLD) -> list[dict]:
    """One record per (event, drug, method), in event then drug order."""
    rows = []
    for ev in events:
        for j, table in enumerate(project_all(x, ev)):
            for res in evaluate_table(table, threshold):
                rows.append(
                    {
                        "event": ev.event_id,
                        "drug": x.drug_ids[j],
                        "method": res.method,
                        "statistic": res.statistic,
                        "pvalue": res.pvalue,
                        "signaled": res.signaled,
                    }
                )
    return rows
