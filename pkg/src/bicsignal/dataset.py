"""Spontaneous-report data: loading, the MLE-existence filter and profile compression.

A report file looks like::

    #drugs: L03AB07,N02CC03,M01AH01
    #events: AMI
    r0001,L03AB07;M01AH01,AMI
    r0002,N02CC03,
    r0003,,AMI

Each report line is ``report_id,drug;drug;...,event;event;...``. Either list
may be empty.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np
from scipy import sparse

# Keys up to this width are packed into one int64 (one bit is kept for the outcome).
_MAX_PACKED_BITS = 62


class ReportFormatError(ValueError):
    """A line of a report file could not be parsed."""

    def __init__(self, message: str, lineno: int | None = None, path: str | None = None):
        self.lineno = lineno
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}:"
        if lineno is not None:
            where += f"{lineno}:"
        super().__init__(f"{where} {message}" if where else message)


class SchemaError(ValueError):
    """The file parses but refers to undeclared or duplicated identifiers."""


@dataclass(frozen=True)
class ReportMatrix:
    """Sparse binary n x p drug-consumption matrix.

    ``rows[i]`` holds the sorted drug indices consumed in report ``i``.
    """

    rows: tuple[np.ndarray, ...]
    drug_ids: tuple[str, ...]
    report_ids: tuple[str, ...] = ()

    def __post_init__(self):
        p = len(self.drug_ids)
        if len(set(self.drug_ids)) != p:
            raise SchemaError("drug identifiers must be unique")
        if self.report_ids and len(self.report_ids) != len(self.rows):
            raise SchemaError("report_ids and rows differ in length")
        for i, row in enumerate(self.rows):
            if row.size == 0:
                continue
            if row.min() < 0 or row.max() >= p:
                raise SchemaError(f"row {i} has a drug index outside [0, {p})")
            if np.unique(row).size != row.size:
                raise SchemaError(f"row {i} lists a drug twice")

    @property
    def n(self) -> int:
        return len(self.rows)

    @property
    def p(self) -> int:
        return len(self.drug_ids)

    @cached_property
    def csc(self) -> sparse.csc_matrix:
        """The matrix as a scipy CSC matrix of int8 ones."""
        lengths = np.fromiter((r.size for r in self.rows), dtype=np.int64, count=self.n)
        indptr = np.concatenate([[0], np.cumsum(lengths)])
        indices = np.concatenate(self.rows) if self.n and indptr[-1] else np.zeros(0, np.int64)
        data = np.ones(indices.size, dtype=np.int8)
        csr = sparse.csr_matrix((data, indices, indptr), shape=(self.n, self.p))
        return csr.tocsc()

    @cached_property
    def drug_counts(self) -> np.ndarray:
        """Number of reports mentioning each drug."""
        return np.asarray(self.csc.sum(axis=0), dtype=np.int64).ravel()

    def column(self, j: int) -> np.ndarray:
        col = np.zeros(self.n, dtype=np.uint8)
        csc = self.csc
        col[csc.indices[csc.indptr[j]:csc.indptr[j + 1]]] = 1
        return col

    def dense(self, columns: Sequence[int] | np.ndarray | None = None) -> np.ndarray:
        """Dense uint8 block of the requested columns (all by default)."""
        csc = self.csc if columns is None else self.csc[:, np.asarray(columns, dtype=np.int64)]
        return csc.toarray().astype(np.uint8, copy=False)

    def drug_index(self, drug_id: str) -> int:
        return self._drug_lookup[drug_id]

    @cached_property
    def _drug_lookup(self) -> dict[str, int]:
        return {d: j for j, d in enumerate(self.drug_ids)}

    @classmethod
    def from_dense(cls, x, drug_ids: Sequence[str] | None = None, report_ids: Sequence[str] = ()):
        x = np.asarray(x)
        if x.ndim != 2:
            raise ValueError("expected a 2-d array")
        if drug_ids is None:
            drug_ids = [f"D{j}" for j in range(x.shape[1])]
        rows = tuple(np.flatnonzero(r).astype(np.int64) for r in x)
        return cls(rows=rows, drug_ids=tuple(drug_ids), report_ids=tuple(report_ids))


@dataclass(frozen=True)
class EventVector:
    event_id: str
    y: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.y)
        if y.ndim != 1:
            raise ValueError("event vector must be 1-d")
        if y.size and not np.isin(y, (0, 1)).all():
            raise ValueError(f"event {self.event_id!r} has entries outside {{0, 1}}")
        object.__setattr__(self, "y", y.astype(np.uint8))

    @property
    def headcount(self) -> int:
        return int(self.y.sum())

    def __len__(self):
        return self.y.size


@dataclass(frozen=True)
class EligibilityMask:
    eligible: np.ndarray

    @property
    def p_eligible(self) -> int:
        return int(self.eligible.sum())

    @property
    def indices(self) -> np.ndarray:
        """Original drug indices of the eligible drugs, ascending."""
        return np.flatnonzero(self.eligible)


@dataclass(frozen=True)
class ProfileTable:
    """Unique (restricted covariate vector, outcome) pairs with multiplicities."""

    x: np.ndarray  # m x k, uint8
    y: np.ndarray  # m, uint8
    weights: np.ndarray  # m, int64, all > 0
    columns: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))

    @property
    def m(self) -> int:
        return self.weights.size

    @property
    def k(self) -> int:
        return self.x.shape[1]

    @property
    def n(self) -> int:
        return int(self.weights.sum())

    def expand(self) -> tuple[np.ndarray, np.ndarray]:
        """Undo the compression: repeat each profile weight-many times."""
        return np.repeat(self.x, self.weights, axis=0), np.repeat(self.y, self.weights)


def _check_lengths(x: ReportMatrix, y: EventVector):
    if len(y) != x.n:
        raise ValueError(f"event vector has length {len(y)}, report matrix has n={x.n}")


def contingency_counts(x: ReportMatrix, y: EventVector) -> np.ndarray:
    """Per-drug 2x2 counts as a p x 4 array of (a, b, c, d).

    a: drug and event, b: drug without event, c: event without drug, d: neither.
    """
    _check_lengths(x, y)
    a = np.asarray(x.csc.T @ y.y.astype(np.int64)).ravel().astype(np.int64)
    b = x.drug_counts - a
    n_event = int(y.y.sum())
    c = n_event - a
    d = x.n - n_event - b
    return np.column_stack([a, b, c, d])


def eligibility_mask(x: ReportMatrix, y: EventVector) -> EligibilityMask:
    """Drugs for which all four (outcome, consumption) cells are witnessed."""
    counts = contingency_counts(x, y)
    return EligibilityMask(eligible=(counts > 0).all(axis=1))


def _group_rows(x: np.ndarray, y: np.ndarray, weights: np.ndarray | None):
    """Group identical (x row, y) pairs. Returns (representative index, inverse, weights)."""
    k = x.shape[1]
    if k <= _MAX_PACKED_BITS:
        powers = np.left_shift(np.int64(1), np.arange(1, k + 1, dtype=np.int64))
        keys = y.astype(np.int64) + (x.astype(np.int64) @ powers if k else 0)
        _, first, inverse = np.unique(keys, return_index=True, return_inverse=True)
    else:
        packed = np.packbits(x.astype(np.uint8), axis=1, bitorder="little")
        stacked = np.column_stack([packed, y.astype(np.uint8)])
        _, first, inverse = np.unique(stacked, axis=0, return_index=True, return_inverse=True)
    inverse = inverse.ravel()
    if weights is None:
        w = np.bincount(inverse, minlength=first.size)
    else:
        w = np.bincount(inverse, weights=weights, minlength=first.size)
    return first, inverse, np.rint(w).astype(np.int64)


def compress_matrix(x: np.ndarray, y: np.ndarray, columns=None) -> ProfileTable:
    """Compress a dense n x k binary block and outcome vector into unique profiles."""
    x = np.asarray(x, dtype=np.uint8)
    y = np.asarray(y, dtype=np.uint8)
    if x.ndim != 2 or x.shape[0] != y.size:
        raise ValueError("x must be n x k with n == len(y)")
    first, _, w = _group_rows(x, y, None)
    cols = np.arange(x.shape[1]) if columns is None else np.asarray(columns, dtype=np.int64)
    return ProfileTable(x=x[first], y=y[first], weights=w, columns=cols)


def coarsen(pt: ProfileTable, keep) -> ProfileTable:
    """Restrict a profile table to a subset of its columns and regroup.

    ``keep`` indexes the table's own columns. Restricting the table built for a
    model to a sub-model gives the same profiles as compressing the raw rows.
    """
    keep = np.asarray(keep, dtype=np.int64)
    sub = pt.x[:, keep]
    first, _, w = _group_rows(sub, pt.y, pt.weights)
    return ProfileTable(x=sub[first], y=pt.y[first], weights=w, columns=pt.columns[keep])


def _model_columns(x: ReportMatrix, gamma, mask: EligibilityMask | None) -> np.ndarray:
    gamma = np.asarray(getattr(gamma, "gamma", gamma), dtype=bool)
    universe = mask.indices if mask is not None else np.arange(x.p)
    if gamma.size != universe.size:
        raise ValueError(f"model has length {gamma.size}, expected {universe.size}")
    return universe[gamma]


def compress_profiles(x: ReportMatrix, y: EventVector, gamma, mask: EligibilityMask | None = None) -> ProfileTable:
    """Weighted unique profiles of (x_i restricted to the model's drugs, y_i).

    ``gamma`` is a boolean inclusion vector (or a ModelVector). When ``mask`` is
    given it indexes the eligible drugs; otherwise all p drugs.
    """
    _check_lengths(x, y)
    cols = _model_columns(x, gamma, mask)
    return compress_matrix(x.dense(cols), y.y, columns=cols)


# --------------------------------------------------------------------- I/O


def _split_ids(field_: str) -> list[str]:
    return [t.strip() for t in field_.split(";") if t.strip()]


def _parse_header(line: str, lineno: int, path: str) -> tuple[str, list[str]]:
    name, _, rest = line[1:].partition(":")
    ids = [t.strip() for t in rest.split(",") if t.strip()]
    if len(set(ids)) != len(ids):
        raise SchemaError(f"{path}:{lineno}: duplicate identifier in #{name.strip()} header")
    return name.strip().lower(), ids


def load_reports(path) -> tuple[ReportMatrix, list[EventVector]]:
    """Read a report file. Returns the drug matrix and one EventVector per declared event."""
    path = str(path)
    drug_ids: list[str] | None = None
    event_ids: list[str] | None = None
    report_ids: list[str] = []
    rows: list[np.ndarray] = []
    event_rows: list[list[int]] = []
    seen: set[str] = set()
    drug_lookup: dict[str, int] = {}
    event_lookup: dict[str, int] = {}

    with open(path, encoding="utf-8", newline="") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                name, ids = _parse_header(line, lineno, path)
                if rows:
                    raise ReportFormatError("header after report lines", lineno, path)
                if name == "drugs":
                    drug_ids = ids
                    drug_lookup = {d: j for j, d in enumerate(ids)}
                elif name == "events":
                    event_ids = ids
                    event_lookup = {e: k for k, e in enumerate(ids)}
                continue
            if drug_ids is None or event_ids is None:
                raise ReportFormatError("report line before #drugs/#events headers", lineno, path)
            fields = next(csv.reader([line]))
            if len(fields) != 3:
                raise ReportFormatError(f"expected 3 fields, got {len(fields)}", lineno, path)
            rid = fields[0].strip()
            if not rid:
                raise ReportFormatError("empty report id", lineno, path)
            if rid in seen:
                raise SchemaError(f"{path}:{lineno}: duplicate report id {rid!r}")
            seen.add(rid)
            try:
                drugs = sorted({drug_lookup[d] for d in _split_ids(fields[1])})
            except KeyError as err:
                raise SchemaError(f"{path}:{lineno}: undeclared drug {err.args[0]!r}") from None
            try:
                events = sorted({event_lookup[e] for e in _split_ids(fields[2])})
            except KeyError as err:
                raise SchemaError(f"{path}:{lineno}: undeclared event {err.args[0]!r}") from None
            report_ids.append(rid)
            rows.append(np.asarray(drugs, dtype=np.int64))
            event_rows.append(events)

    if drug_ids is None or event_ids is None:
        raise ReportFormatError("missing #drugs or #events header", None, path)
    x = ReportMatrix(rows=tuple(rows), drug_ids=tuple(drug_ids), report_ids=tuple(report_ids))
    return x, _event_vectors(event_ids, event_rows)


def _event_vectors(event_ids: Sequence[str], event_rows: Sequence[Iterable[int]]) -> list[EventVector]:
    n = len(event_rows)
    ys = np.zeros((len(event_ids), n), dtype=np.uint8)
    for i, evs in enumerate(event_rows):
        for e in evs:
            ys[e, i] = 1
    return [EventVector(event_id=e, y=ys[k]) for k, e in enumerate(event_ids)]


def _read_triplets(path: str, id_column: str) -> list[tuple[str, str]]:
    out = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        needed = {"report_id", id_column}
        if reader.fieldnames is None or not needed <= set(reader.fieldnames):
            raise ReportFormatError(f"header must contain {sorted(needed)}", 1, path)
        for lineno, rec in enumerate(reader, start=2):
            rid, item = (rec.get("report_id") or "").strip(), (rec.get(id_column) or "").strip()
            if not rid or not item:
                raise ReportFormatError("empty report or item id", lineno, path)
            value = (rec.get("value") or "1").strip()
            if value not in ("0", "1"):
                raise ReportFormatError(f"value must be 0 or 1, got {value!r}", lineno, path)
            if value == "1":
                out.append((rid, item))
    return out


def load_triplets(drugs_path, events_path) -> tuple[ReportMatrix, list[EventVector]]:
    """Two-file ingest: ``report_id,drug_id[,value]`` and ``report_id,event_id[,value]`` CSVs.

    Drug and event universes are the identifiers seen, in order of first appearance.
    Reports appearing in either file are included.
    """
    drug_trip = _read_triplets(str(drugs_path), "drug_id")
    event_trip = _read_triplets(str(events_path), "event_id")
    report_index: dict[str, int] = {}
    drug_index: dict[str, int] = {}
    event_index: dict[str, int] = {}
    for rid, d in drug_trip:
        report_index.setdefault(rid, len(report_index))
        drug_index.setdefault(d, len(drug_index))
    for rid, e in event_trip:
        report_index.setdefault(rid, len(report_index))
        event_index.setdefault(e, len(event_index))
    drug_sets: list[set[int]] = [set() for _ in report_index]
    event_sets: list[set[int]] = [set() for _ in report_index]
    for rid, d in drug_trip:
        drug_sets[report_index[rid]].add(drug_index[d])
    for rid, e in event_trip:
        event_sets[report_index[rid]].add(event_index[e])
    rows = tuple(np.asarray(sorted(s), dtype=np.int64) for s in drug_sets)
    x = ReportMatrix(rows=rows, drug_ids=tuple(drug_index), report_ids=tuple(report_index))
    return x, _event_vectors(list(event_index), event_sets)


def write_reports(path, x: ReportMatrix, events: Sequence[EventVector]) -> None:
    """Write the single-file report format read by :func:`load_reports`."""
    for ev in events:
        _check_lengths(x, ev)
    report_ids = x.report_ids or tuple(f"r{i + 1}" for i in range(x.n))
    ys = np.array([ev.y for ev in events], dtype=np.uint8).reshape(len(events), x.n)
    event_ids = [ev.event_id for ev in events]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("#drugs: " + ",".join(x.drug_ids) + "\n")
        fh.write("#events: " + ",".join(event_ids) + "\n")
        for i, rid in enumerate(report_ids):
            drugs = ";".join(x.drug_ids[j] for j in x.rows[i])
            evs = ";".join(event_ids[k] for k in np.flatnonzero(ys[:, i]))
            fh.write(f"{rid},{drugs},{evs}\n")


def select_events(events: Sequence[EventVector], wanted: Sequence[str] | None) -> list[EventVector]:
    if not wanted:
        return list(events)
    by_id = {ev.event_id: ev for ev in events}
    missing = [e for e in wanted if e not in by_id]
    if missing:
        raise SchemaError(f"unknown event(s): {', '.join(missing)}")
    return [by_id[e] for e in wanted]
