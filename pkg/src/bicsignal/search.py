"""BIC model search: Metropolis-Hastings random walk over inclusion vectors,
with exhaustive enumeration when few drugs are eligible.

Models are handled internally as Python ints whose bit ``j`` is the inclusion
flag of eligible drug ``j``. :class:`ModelVector` is the public boolean view.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .dataset import (
    EligibilityMask,
    EventVector,
    ProfileTable,
    ReportMatrix,
    coarsen,
    compress_matrix,
    eligibility_mask,
)
from .logistic import FitResult, fit_mle

log = logging.getLogger(__name__)

EXHAUSTIVE_HARD_CAP = 25
INIT_REDRAWS = 100


def _key_from_bits(bits) -> int:
    bits = np.asarray(bits, dtype=bool)
    return int.from_bytes(np.packbits(bits, bitorder="little").tobytes(), "little")


def _bits_from_key(key: int, p: int) -> np.ndarray:
    return np.array([(key >> j) & 1 for j in range(p)], dtype=bool)


@dataclass
class ModelVector:
    """Inclusion vector over the eligible drugs, with an optional cached BIC."""

    gamma: np.ndarray
    score: float | None = None

    def __post_init__(self):
        self.gamma = np.asarray(self.gamma, dtype=bool)

    @property
    def size(self) -> int:
        return int(self.gamma.sum())

    @property
    def nu(self) -> int:
        return 1 + self.size

    @property
    def key(self) -> int:
        return _key_from_bits(self.gamma)

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.gamma)

    @classmethod
    def from_key(cls, key: int, p: int, score: float | None = None) -> "ModelVector":
        return cls(_bits_from_key(key, p), score)

    @classmethod
    def empty(cls, p: int) -> "ModelVector":
        return cls(np.zeros(p, dtype=bool))

    def __eq__(self, other):
        if not isinstance(other, ModelVector):
            return NotImplemented
        return np.array_equal(self.gamma, other.gamma)

    def __hash__(self):
        return hash((self.gamma.size, self.key))


@dataclass(frozen=True)
class ChainConfig:
    alpha: int = 5
    iters: int = 5000
    restarts: int = 100
    seed: int = 0
    exhaustive_cutoff: int = 12
    threads: int = 1

    def __post_init__(self):
        if self.alpha < 1:
            raise ValueError("alpha must be >= 1")
        if self.iters < 1:
            raise ValueError("iters must be >= 1")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")


class SearchProblem:
    """One adverse event restricted to its eligible drugs, with a shared BIC cache.

    The full eligible block is compressed once; every model's profile table is
    obtained by coarsening it, so a fit costs O(m) rather than O(n).
    """

    def __init__(self, x: ReportMatrix, y: EventVector, mask: EligibilityMask | None = None):
        if len(y) != x.n:
            raise ValueError("report matrix and event vector disagree on n")
        self.x = x
        self.event = y
        self.mask = eligibility_mask(x, y) if mask is None else mask
        self.drug_indices = self.mask.indices
        self.n = x.n
        self.base: ProfileTable = compress_matrix(x.dense(self.drug_indices), y.y, columns=np.arange(self.p))
        self._cache: dict[int, float] = {}

    @classmethod
    def from_dense(cls, x, y, drug_ids=None) -> "SearchProblem":
        return cls(ReportMatrix.from_dense(x, drug_ids), EventVector("event", np.asarray(y)))

    @property
    def p(self) -> int:
        return int(self.drug_indices.size)

    @property
    def evaluated(self) -> int:
        return len(self._cache)

    def columns(self, key: int) -> np.ndarray:
        return np.array([j for j in range(self.p) if (key >> j) & 1], dtype=np.int64)

    def profiles(self, key: int) -> ProfileTable:
        return coarsen(self.base, self.columns(key))

    def fit(self, key: int) -> FitResult:
        res = fit_mle(self.profiles(key), self.n)
        self._cache[key] = res.bic
        return res

    def bic(self, key: int) -> float:
        score = self._cache.get(key)
        if score is None:
            score = self.fit(key).bic
        return score


def _as_problem(data) -> SearchProblem:
    if isinstance(data, SearchProblem):
        return data
    return SearchProblem(*data)


def _lex_key(key: int, p: int) -> tuple[int, ...]:
    return tuple((key >> j) & 1 for j in range(p))


def _prefer(key_a: int, bic_a: float, key_b: int, bic_b: float, p: int) -> bool:
    """True when model a beats model b: higher BIC, then fewer drugs, then lexicographically smaller."""
    if bic_a != bic_b:
        return bic_a > bic_b
    if key_a == key_b:
        return False
    nu_a, nu_b = key_a.bit_count(), key_b.bit_count()
    if nu_a != nu_b:
        return nu_a < nu_b
    return _lex_key(key_a, p) < _lex_key(key_b, p)


# ------------------------------------------------------------------ proposal


def _flip_count_probs(p: int, alpha: int) -> np.ndarray:
    kmax = min(alpha, p)
    weights = np.array([math.comb(p, k) for k in range(kmax + 1)], dtype=float)
    return weights / weights.sum()


def hamming_ball_size(p: int, alpha: int) -> int:
    return sum(math.comb(p, k) for k in range(min(alpha, p) + 1))


def _draw_flip_masks(rng: np.random.Generator, p: int, alpha: int, size: int) -> list[int]:
    """Uniform draws from the Hamming ball of radius alpha, as XOR masks."""
    probs = _flip_count_probs(p, alpha)
    ks = rng.choice(probs.size, size=size, p=probs)
    # the k coordinates with the smallest uniforms form a uniform k-subset
    ranks = rng.random((size, p)).argsort(axis=1).argsort(axis=1)
    flips = ranks < ks[:, None]
    packed = np.packbits(flips, axis=1, bitorder="little")
    return [int.from_bytes(row.tobytes(), "little") for row in packed]


def propose_neighbor(gamma: ModelVector, alpha: int, rng: np.random.Generator) -> ModelVector:
    """Draw uniformly from {g : Hamming(g, gamma) <= alpha}."""
    if alpha < 1:
        raise ValueError("alpha must be >= 1")
    p = gamma.gamma.size
    mask = _draw_flip_masks(rng, p, alpha, 1)[0]
    return ModelVector.from_key(gamma.key ^ mask, p)


def acceptance_prob(bic_candidate: float, bic_current: float) -> float:
    """min(1, exp(BIC(candidate) - BIC(current))); zero for invalid candidates."""
    if bic_current == -math.inf:
        raise ValueError("current chain state must have a finite BIC")
    if bic_candidate == -math.inf:
        return 0.0
    delta = bic_candidate - bic_current
    return 1.0 if delta >= 0 else math.exp(delta)


# --------------------------------------------------------------------- chains


class TraceRow(NamedTuple):
    chain: int
    iter: int
    bic_current: float
    bic_best: float
    accepted: bool


class ChainResult(NamedTuple):
    model: ModelVector
    fit: FitResult
    trace: list[TraceRow]


def _initial_state(problem: SearchProblem, rng: np.random.Generator) -> tuple[int, float]:
    p = problem.p
    for _ in range(INIT_REDRAWS):
        key = _key_from_bits(rng.integers(0, 2, size=p))
        score = problem.bic(key)
        if score > -math.inf:
            return key, score
    log.warning("no valid initial model after %d draws; starting from the empty model", INIT_REDRAWS)
    return 0, problem.bic(0)


def run_chain(data, cfg: ChainConfig, chain_seed, *, chain_id: int = 0, record_trace: bool = False) -> ChainResult:
    """One Metropolis-Hastings chain. Returns the best model visited, not the last one."""
    problem = _as_problem(data)
    p = problem.p
    if p < 1:
        raise ValueError("run_chain needs at least one eligible drug")
    rng = np.random.default_rng(chain_seed)
    cur, b_cur = _initial_state(problem, rng)
    flips = _draw_flip_masks(rng, p, cfg.alpha, cfg.iters)
    with np.errstate(divide="ignore"):
        log_u = np.log(rng.random(cfg.iters)).tolist()

    best, b_best = cur, b_cur
    trace: list[TraceRow] = []
    if record_trace:
        trace.append(TraceRow(chain_id, 0, b_cur, b_best, True))
    cache = problem._cache
    score = problem.bic
    neg_inf = -math.inf
    for r in range(cfg.iters):
        cand = cur ^ flips[r]
        b_cand = cache.get(cand)
        if b_cand is None:
            b_cand = score(cand)
        accepted = b_cand != neg_inf and (b_cand >= b_cur or log_u[r] < b_cand - b_cur)
        if accepted:
            cur, b_cur = cand, b_cand
            if b_cur >= b_best and _prefer(cur, b_cur, best, b_best, p):
                best, b_best = cur, b_cur
        if record_trace:
            trace.append(TraceRow(chain_id, r + 1, b_cur, b_best, accepted))

    fit = problem.fit(best)
    return ChainResult(ModelVector.from_key(best, p, fit.bic), fit, trace)


def exhaustive_search(data, *, cap: int = EXHAUSTIVE_HARD_CAP) -> tuple[ModelVector, FitResult]:
    """Score every model over the eligible drugs and return the BIC argmax."""
    problem = _as_problem(data)
    p = problem.p
    if p > cap:
        raise ValueError(f"exhaustive search refused: {p} eligible drugs exceeds the cap of {cap}")
    best, b_best = 0, problem.bic(0)
    for key in range(1, 1 << p):
        b = problem.bic(key)
        if b >= b_best and _prefer(key, b, best, b_best, p):
            best, b_best = key, b
    fit = problem.fit(best)
    return ModelVector.from_key(best, p, fit.bic), fit


@dataclass
class SearchReport:
    best_model: ModelVector
    best_fit: FitResult
    per_chain_best: list[tuple[int, float]]
    hit_count: int
    restarts: int
    method: str
    warning: str | None = None
    evaluated: int = 0
    trace: list[TraceRow] = field(default_factory=list)


def chain_seeds(seed: int, restarts: int) -> list[np.random.SeedSequence]:
    return np.random.SeedSequence(seed).spawn(restarts)


def search(data, cfg: ChainConfig = ChainConfig(), *, record_trace: bool = False) -> SearchReport:
    """Exhaustive search at or below the cutoff, otherwise ``cfg.restarts`` MH chains."""
    problem = _as_problem(data)
    p = problem.p
    if p <= cfg.exhaustive_cutoff:
        model, fit = exhaustive_search(problem)
        warning = "no eligible drugs; intercept-only model" if p == 0 else None
        return SearchReport(
            best_model=model,
            best_fit=fit,
            per_chain_best=[],
            hit_count=cfg.restarts,
            restarts=cfg.restarts,
            method="exhaustive",
            warning=warning,
            evaluated=problem.evaluated,
        )

    seeds = chain_seeds(cfg.seed, cfg.restarts)

    def one(i: int) -> ChainResult:
        return run_chain(problem, cfg, seeds[i], chain_id=i, record_trace=record_trace)

    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            results = list(pool.map(one, range(cfg.restarts)))
    else:
        results = [one(i) for i in range(cfg.restarts)]

    best_i = 0
    for i in range(1, len(results)):
        a, b = results[i].model, results[best_i].model
        if _prefer(a.key, a.score, b.key, b.score, p):
            best_i = i
    best = results[best_i]
    hits = sum(1 for r in results if r.model == best.model)
    trace = [row for r in results for row in r.trace]
    return SearchReport(
        best_model=best.model,
        best_fit=best.fit,
        per_chain_best=[(i, r.model.score) for i, r in enumerate(results)],
        hit_count=hits,
        restarts=cfg.restarts,
        method="mh",
        evaluated=problem.evaluated,
        trace=trace,
    )
