import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bicsignal.dataset import (
    EventVector,
    ReportFormatError,
    ReportMatrix,
    SchemaError,
    coarsen,
    compress_matrix,
    compress_profiles,
    eligibility_mask,
    load_reports,
    load_triplets,
    write_reports,
)


def _write(tmp_path, text, name="reports.csv"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


FOUR_REPORTS = """#drugs: A01,B02
#events: E1
r1,A01,E1
r2,A01;B02,
r3,,E1
r4,B02,
"""


class TestLoadReports:
    def test_four_reports(self, tmp_path):
        x, events = load_reports(_write(tmp_path, FOUR_REPORTS))
        assert (x.n, x.p) == (4, 2)
        assert len(events) == 1 and len(events[0]) == 4
        assert events[0].y.tolist() == [1, 0, 1, 0]
        assert x.dense().tolist() == [[1, 0], [1, 1], [0, 0], [0, 1]]
        assert x.report_ids == ("r1", "r2", "r3", "r4")

    def test_empty_report_section(self, tmp_path):
        x, events = load_reports(_write(tmp_path, "#drugs: A\n#events: E\n"))
        assert x.n == 0
        assert len(events[0]) == 0

    def test_unknown_drug_named(self, tmp_path):
        with pytest.raises(SchemaError, match="X99"):
            load_reports(_write(tmp_path, "#drugs: A\n#events: E\nr1,X99,E\n"))

    def test_unknown_event_named(self, tmp_path):
        with pytest.raises(SchemaError, match="E7"):
            load_reports(_write(tmp_path, "#drugs: A\n#events: E\nr1,A,E7\n"))

    def test_duplicate_report_id(self, tmp_path):
        with pytest.raises(SchemaError, match="duplicate report id"):
            load_reports(_write(tmp_path, "#drugs: A\n#events: E\nr1,A,E\nr1,,\n"))

    def test_malformed_line_has_line_number(self, tmp_path):
        with pytest.raises(ReportFormatError) as info:
            load_reports(_write(tmp_path, "#drugs: A\n#events: E\nr1,A,E\nr2;A\n"))
        assert info.value.lineno == 4

    def test_missing_headers(self, tmp_path):
        with pytest.raises(ReportFormatError):
            load_reports(_write(tmp_path, "r1,A,E\n"))

    def test_roundtrip_write(self, tmp_path):
        x, events = load_reports(_write(tmp_path, FOUR_REPORTS))
        out = tmp_path / "again.csv"
        write_reports(out, x, events)
        x2, events2 = load_reports(out)
        assert x2.drug_ids == x.drug_ids
        np.testing.assert_array_equal(x2.dense(), x.dense())
        np.testing.assert_array_equal(events2[0].y, events[0].y)


def test_load_triplets(tmp_path):
    drugs = _write(tmp_path, "report_id,drug_id,value\nr1,A,1\nr2,B,1\nr2,A,0\nr3,A,1\n", "d.csv")
    events = _write(tmp_path, "report_id,event_id\nr1,E\nr4,E\n", "e.csv")
    x, evs = load_triplets(drugs, events)
    assert x.report_ids == ("r1", "r2", "r3", "r4")
    assert x.dense().tolist() == [[1, 0], [0, 1], [1, 0], [0, 0]]
    assert evs[0].y.tolist() == [1, 0, 0, 1]


def test_report_matrix_invariants():
    with pytest.raises(SchemaError):
        ReportMatrix(rows=(np.array([0, 2]),), drug_ids=("a", "b"))
    with pytest.raises(SchemaError):
        ReportMatrix(rows=(np.array([1, 1]),), drug_ids=("a", "b"))
    with pytest.raises(SchemaError):
        ReportMatrix(rows=(), drug_ids=("a", "a"))


def test_event_vector_rejects_non_binary():
    with pytest.raises(ValueError):
        EventVector("E", np.array([0, 2]))


class TestEligibility:
    def test_four_cells_witnessed(self):
        # y=[1,0,1,0], x=[1,0,0,1]: each outcome stratum holds both a 0 and a 1
        x = ReportMatrix.from_dense(np.array([[1], [0], [0], [1]]))
        mask = eligibility_mask(x, EventVector("E", np.array([1, 0, 1, 0])))
        assert mask.eligible.tolist() == [True]
        assert mask.p_eligible == 1

    def test_zero_column(self):
        x = ReportMatrix.from_dense(np.zeros((4, 1), dtype=int))
        assert eligibility_mask(x, EventVector("E", np.array([1, 0, 1, 0]))).p_eligible == 0

    def test_constant_outcome(self):
        x = ReportMatrix.from_dense(np.array([[1, 0], [0, 1], [1, 1], [0, 0]]))
        mask = eligibility_mask(x, EventVector("E", np.ones(4, dtype=int)))
        assert mask.eligible.tolist() == [False, False]

    @settings(max_examples=60, deadline=None)
    @given(st.integers(1, 40), st.integers(1, 8), st.integers(0, 2**32 - 1))
    def test_soundness_by_scan(self, n, p, seed):
        rng = np.random.default_rng(seed)
        dense = (rng.random((n, p)) < rng.uniform(0.1, 0.9)).astype(int)
        y = (rng.random(n) < 0.5).astype(int)
        mask = eligibility_mask(ReportMatrix.from_dense(dense), EventVector("E", y))
        for j in range(p):
            with_event = {dense[i, j] for i in range(n) if y[i] == 1}
            without = {dense[i, j] for i in range(n) if y[i] == 0}
            assert mask.eligible[j] == (with_event == {0, 1} and without == {0, 1})


class TestCompression:
    def test_duplicate_grouping(self):
        x = ReportMatrix.from_dense(np.array([[1, 0], [1, 1], [0, 0], [0, 1]]))
        ev = EventVector("E", np.array([1, 1, 0, 0]))
        pt = compress_profiles(x, ev, np.array([True, False]))
        assert pt.m == 2
        assert sorted(pt.weights.tolist()) == [2, 2]
        assert {(int(r[0]), int(o)) for r, o in zip(pt.x, pt.y)} == {(1, 1), (0, 0)}

    def test_intercept_only(self):
        x = ReportMatrix.from_dense(np.eye(5, dtype=int))
        ev = EventVector("E", np.array([1, 0, 0, 1, 0]))
        pt = compress_profiles(x, ev, np.zeros(5, dtype=bool))
        assert pt.k == 0
        assert dict(zip(pt.y.tolist(), pt.weights.tolist())) == {0: 3, 1: 2}

    def test_wide_model_uses_row_grouping(self):
        rng = np.random.default_rng(3)
        base = (rng.random((6, 70)) < 0.5).astype(np.uint8)
        x = np.repeat(base, [1, 2, 3, 1, 2, 3], axis=0)
        y = np.zeros(x.shape[0], dtype=np.uint8)
        pt = compress_matrix(x, y)
        assert pt.m == 6
        assert sorted(pt.weights.tolist()) == [1, 1, 2, 2, 3, 3]

    @settings(max_examples=60, deadline=None)
    @given(st.integers(1, 200), st.integers(1, 10), st.integers(0, 2**32 - 1))
    def test_properties(self, n, p, seed):
        rng = np.random.default_rng(seed)
        dense = (rng.random((n, p)) < 0.3).astype(np.uint8)
        y = (rng.random(n) < 0.4).astype(np.uint8)
        x = ReportMatrix.from_dense(dense)
        ev = EventVector("E", y)
        gamma = rng.random(p) < 0.5
        pt = compress_profiles(x, ev, gamma)
        k = int(gamma.sum())
        # weight conservation and size bound
        assert pt.n == n
        assert pt.m <= min(n, 2 ** (k + 1))
        assert pt.k == k
        # profiles are distinct
        keys = {(tuple(r.tolist()), int(o)) for r, o in zip(pt.x, pt.y)}
        assert len(keys) == pt.m
        # round trip recovers the multiset of restricted rows
        xe, ye = pt.expand()
        expected = sorted((tuple(r), int(o)) for r, o in zip(dense[:, gamma].tolist(), y))
        assert sorted((tuple(r), int(o)) for r, o in zip(xe.tolist(), ye)) == expected
        # refinement: a superset model never has fewer profiles
        wider = gamma | (rng.random(p) < 0.5)
        assert compress_profiles(x, ev, wider).m >= pt.m
        # coarsening the full table equals compressing from raw rows
        full = compress_profiles(x, ev, np.ones(p, dtype=bool))
        sub = coarsen(full, np.flatnonzero(gamma))
        assert sorted(zip(map(tuple, sub.x.tolist()), sub.y, sub.weights)) == sorted(
            zip(map(tuple, pt.x.tolist()), pt.y, pt.weights)
        )


def test_dimension_mismatch():
    x = ReportMatrix.from_dense(np.zeros((3, 2), dtype=int))
    with pytest.raises(ValueError):
        compress_profiles(x, EventVector("E", np.zeros(4, dtype=int)), np.array([True, False]))
    with pytest.raises(ValueError):
        compress_profiles(x, EventVector("E", np.zeros(3, dtype=int)), np.array([True]))
