"""Planted-truth report databases for verification runs."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.special import expit

from .dataset import EventVector, ReportMatrix, write_reports


@dataclass
class SyntheticSpec:
    """n reports over p drugs, one event drawn from a sparse logistic model.

    ``coefficients`` maps drug index to its true log-odds effect.
    ``prevalence`` is a scalar or one marginal probability per drug.
    ``correlated_pairs`` lists (drug_a, drug_b, correlation): the two drugs
    are sampled jointly with the given Pearson correlation.
    """

    n: int
    p: int
    beta0: float = -2.0
    coefficients: dict[int, float] = field(default_factory=dict)
    prevalence: float | Sequence[float] = 0.1
    correlated_pairs: Sequence[tuple[int, int, float]] = ()
    event_id: str = "E1"

    def __post_init__(self):
        self.coefficients = {int(k): float(v) for k, v in self.coefficients.items()}
        if self.n < 0 or self.p < 0:
            raise ValueError("n and p must be non-negative")
        prev = self.prevalences()
        if np.any((prev <= 0) | (prev >= 1)):
            raise ValueError("prevalences must lie in (0, 1)")
        for j in self.coefficients:
            if not 0 <= j < self.p:
                raise ValueError(f"support index {j} outside [0, {self.p})")
        used: set[int] = set()
        for a, b, rho in self.correlated_pairs:
            if a == b or {a, b} & used:
                raise ValueError("correlated pairs must be disjoint")
            used |= {a, b}
            self._joint(a, b, rho)

    def prevalences(self) -> np.ndarray:
        prev = np.broadcast_to(np.asarray(self.prevalence, dtype=float), (self.p,))
        return prev.copy()

    def _joint(self, a: int, b: int, rho: float) -> np.ndarray:
        prev = self.prevalences()
        pa, pb = prev[a], prev[b]
        p11 = pa * pb + rho * math.sqrt(pa * (1 - pa) * pb * (1 - pb))
        cells = np.array([1 - pa - pb + p11, pb - p11, pa - p11, p11])  # 00, 01, 10, 11
        if np.any(cells < 0):
            raise ValueError(f"correlation {rho} infeasible for prevalences {pa:.3g}, {pb:.3g}")
        return cells

    def drug_ids(self) -> list[str]:
        width = max(3, len(str(max(self.p - 1, 0))))
        return [f"D{j:0{width}d}" for j in range(self.p)]

    def linear_predictor(self, x: np.ndarray) -> np.ndarray:
        beta = np.zeros(self.p)
        for j, b in self.coefficients.items():
            beta[j] = b
        return self.beta0 + x.astype(float) @ beta


def sample_design(spec: SyntheticSpec, rng: np.random.Generator) -> np.ndarray:
    prev = spec.prevalences()
    x = (rng.random((spec.n, spec.p)) < prev).astype(np.uint8)
    for a, b, rho in spec.correlated_pairs:
        cells = spec._joint(a, b, rho)
        cell = rng.choice(4, size=spec.n, p=cells)
        x[:, a] = cell >= 2
        x[:, b] = cell % 2
    return x


def sample(spec: SyntheticSpec, seed) -> tuple[ReportMatrix, EventVector]:
    """Draw drug consumptions, then y ~ Bernoulli(logistic(beta0 + x beta))."""
    rng = np.random.default_rng(seed)
    x = sample_design(spec, rng)
    y = (rng.random(spec.n) < expit(spec.linear_predictor(x))).astype(np.uint8)
    reports = ReportMatrix.from_dense(x, spec.drug_ids(), [f"r{i + 1}" for i in range(spec.n)])
    return reports, EventVector(spec.event_id, y)


def truth_record(spec: SyntheticSpec, seed) -> dict:
    ids = spec.drug_ids()
    gamma = [int(j in spec.coefficients) for j in range(spec.p)]
    return {
        "seed": seed,
        "event": spec.event_id,
        "beta0": spec.beta0,
        "gamma": gamma,
        "beta": {ids[j]: b for j, b in sorted(spec.coefficients.items())},
        "spec": {**asdict(spec), "coefficients": {str(k): v for k, v in sorted(spec.coefficients.items())}},
    }


def generate_synthetic(spec: SyntheticSpec, seed: int, path) -> tuple[Path, Path]:
    """Write a report file plus a ``<stem>.truth.json`` sidecar with the planted model."""
    path = Path(path)
    x, ev = sample(spec, seed)
    write_reports(path, x, [ev])
    sidecar = path.with_name(path.stem + ".truth.json")
    prev = spec.prevalence
    record = truth_record(spec, seed)
    if not np.isscalar(prev):
        record["spec"]["prevalence"] = [float(v) for v in prev]
    sidecar.write_text(json.dumps(record, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path, sidecar


def planted_spec(
    rng: np.random.Generator,
    n: int,
    p: int,
    support_size: int,
    *,
    beta0: float = -2.0,
    magnitude: tuple[float, float] | float = 1.5,
    negative_fraction: float = 0.0,
    prevalence: tuple[float, float] | float = 0.1,
) -> SyntheticSpec:
    """Random sparse truth: ``support_size`` drugs with effects drawn from ``magnitude``."""
    support = np.sort(rng.choice(p, size=support_size, replace=False))
    if np.isscalar(magnitude):
        mags = np.full(support_size, float(magnitude))
    else:
        mags = rng.uniform(*magnitude, size=support_size)
    signs = np.where(rng.random(support_size) < negative_fraction, -1.0, 1.0)
    if np.isscalar(prevalence):
        prev = float(prevalence)
    else:
        prev = rng.uniform(*prevalence, size=p).tolist()
    coefs = {int(j): float(s * m) for j, s, m in zip(support, signs, mags)}
    return SyntheticSpec(n=n, p=p, beta0=beta0, coefficients=coefs, prevalence=prev)
