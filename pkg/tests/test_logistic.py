import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bicsignal.dataset import EventVector, ReportMatrix, compress_matrix, compress_profiles, eligibility_mask
from bicsignal.logistic import (
    CoefficientVector,
    FitResult,
    bic,
    fit_mle,
    gradient_weighted,
    loglik_rows,
    loglik_weighted,
    signal_coefficients,
)


def plain_loglik(dense, y, gamma, beta0, beta_compact):
    """Row-by-row sum over all n reports, no compression."""
    cols = np.flatnonzero(gamma)
    total = 0.0
    for i in range(dense.shape[0]):
        eta = beta0 + sum(b * dense[i, j] for b, j in zip(beta_compact, cols))
        total += y[i] * eta - math.log1p(math.exp(eta)) if eta < 30 else y[i] * eta - eta - math.log1p(math.exp(-eta))
    return total


def _table(y, x=None):
    y = np.asarray(y, dtype=np.uint8)
    x = np.zeros((y.size, 0), dtype=np.uint8) if x is None else np.asarray(x, dtype=np.uint8)
    return compress_matrix(x, y)


class TestLoglik:
    def test_intercept_only_half(self):
        pt = _table([1, 1, 0, 0])
        assert loglik_weighted(pt, CoefficientVector.zeros(0)) == pytest.approx(-2.772588722239781, abs=1e-12)

    def test_zero_beta_gives_n_log_half(self):
        rng = np.random.default_rng(0)
        x = (rng.random((37, 4)) < 0.5).astype(np.uint8)
        pt = _table(rng.random(37) < 0.2, x)
        assert loglik_weighted(pt, CoefficientVector.zeros(4)) == pytest.approx(-37 * math.log(2), abs=1e-10)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(1, 300), st.integers(1, 12), st.integers(0, 2**32 - 1))
    def test_weighted_equals_plain(self, n, p, seed):
        rng = np.random.default_rng(seed)
        dense = (rng.random((n, p)) < 0.3).astype(np.uint8)
        y = (rng.random(n) < 0.4).astype(np.uint8)
        gamma = rng.random(p) < 0.5
        pt = compress_profiles(ReportMatrix.from_dense(dense), EventVector("E", y), gamma)
        beta = CoefficientVector(float(rng.normal()), rng.normal(size=int(gamma.sum())))
        assert loglik_weighted(pt, beta) == pytest.approx(
            plain_loglik(dense, y, gamma, beta.beta0, beta.beta), abs=1e-10
        )
        assert loglik_weighted(pt, beta) == pytest.approx(loglik_rows(dense[:, gamma], y, beta), abs=1e-9)

    def test_dimension_mismatch(self):
        pt = _table([1, 0], [[1], [0]])
        with pytest.raises(ValueError):
            loglik_weighted(pt, CoefficientVector.zeros(2))

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_gradient_matches_central_differences(self, seed):
        rng = np.random.default_rng(seed)
        n, k = int(rng.integers(20, 200)), int(rng.integers(1, 6))
        x = (rng.random((n, k)) < 0.4).astype(np.uint8)
        pt = _table(rng.random(n) < 0.3, x)
        theta = rng.normal(scale=0.8, size=k + 1)
        grad = gradient_weighted(pt, CoefficientVector.from_array(theta))
        h = 1e-5
        for i in range(k + 1):
            up, dn = theta.copy(), theta.copy()
            up[i] += h
            dn[i] -= h
            fd = (loglik_weighted(pt, CoefficientVector.from_array(up))
                  - loglik_weighted(pt, CoefficientVector.from_array(dn))) / (2 * h)
            assert fd == pytest.approx(grad[i], rel=1e-5, abs=1e-6)


class TestBic:
    def test_arithmetic(self):
        assert bic(-2.772588722239781, 1, 4) == pytest.approx(-3.465735902799727, abs=1e-12)

    def test_n_one(self):
        assert bic(-1.25, 7, 1) == -1.25

    def test_invalid(self):
        with pytest.raises(ValueError):
            bic(0.0, 0, 10)


class TestFit:
    def test_symmetric_intercept(self):
        fit = fit_mle(_table([1, 1, 0, 0]))
        assert fit.converged
        assert fit.beta_hat.beta0 == pytest.approx(0.0, abs=1e-12)
        assert fit.bic == pytest.approx(-3.465735902799727, abs=1e-9)
        assert fit.nu == 1

    def test_intercept_is_logit_of_mean(self):
        fit = fit_mle(_table([1, 1, 1] + [0] * 7))
        assert fit.beta_hat.beta0 == pytest.approx(math.log(3 / 7), abs=1e-8)

    def test_bic_decomposition(self):
        rng = np.random.default_rng(5)
        x = (rng.random((400, 3)) < 0.3).astype(np.uint8)
        y = (rng.random(400) < 0.2 + 0.3 * x[:, 0]).astype(np.uint8)
        fit = fit_mle(_table(y, x))
        assert fit.converged and fit.nu == 4
        assert fit.bic == fit.loglik - (4 / 2) * math.log(400)
        assert fit.loglik <= 0

    def test_separation_detected(self):
        # y = majority(A, B, C): every drug passes the marginal four-cell filter,
        # yet the three together separate y perfectly
        patterns = np.array([[(k >> j) & 1 for j in range(3)] for k in range(8)])
        x = np.repeat(patterns, 3, axis=0)
        y = (x.sum(axis=1) >= 2).astype(int)
        ev = EventVector("E", y)
        rm = ReportMatrix.from_dense(x)
        assert eligibility_mask(rm, ev).p_eligible == 3
        fit = fit_mle(compress_profiles(rm, ev, np.array([True, True, True])))
        assert not fit.converged
        assert fit.bic == -math.inf
        assert fit_mle(compress_profiles(rm, ev, np.array([True, False, False]))).converged

    def test_collinear_columns_are_damped(self):
        rng = np.random.default_rng(2)
        a = (rng.random(300) < 0.3).astype(np.uint8)
        x = np.column_stack([a, a])
        y = (rng.random(300) < 0.2 + 0.3 * a).astype(np.uint8)
        fit = fit_mle(_table(y, x))
        single = fit_mle(_table(y, x[:, :1]))
        assert fit.converged
        assert fit.loglik == pytest.approx(single.loglik, abs=1e-8)

    def test_empty_dataset(self):
        with pytest.raises(ValueError, match="empty dataset"):
            fit_mle(_table([]))

    def test_monotone_ascent(self):
        rng = np.random.default_rng(11)
        x = (rng.random((2000, 6)) < 0.2).astype(np.uint8)
        eta = -2 + x @ np.array([2.0, -1.0, 1.5, 0, 0, 0.5])
        y = (rng.random(2000) < 1 / (1 + np.exp(-eta))).astype(np.uint8)
        path = []
        fit = fit_mle(_table(y, x), record_path=path)
        assert fit.converged
        assert all(b >= a for a, b in zip(path, path[1:]))

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_nested_models_dominate(self, seed):
        rng = np.random.default_rng(seed)
        n, p = 500, 6
        dense = (rng.random((n, p)) < 0.3).astype(np.uint8)
        y = (rng.random(n) < 0.3).astype(np.uint8)
        rm, ev = ReportMatrix.from_dense(dense), EventVector("E", y)
        small = rng.random(p) < 0.4
        big = small | (rng.random(p) < 0.4)
        f_small = fit_mle(compress_profiles(rm, ev, small))
        f_big = fit_mle(compress_profiles(rm, ev, big))
        if f_small.converged and f_big.converged:
            assert f_big.loglik >= f_small.loglik - 1e-8


class TestSignals:
    def _fit(self, beta0, beta, converged=True):
        return FitResult(CoefficientVector(beta0, np.array(beta)), -1.0, -2.0, converged, 3, len(beta) + 1, 10)

    def test_positive_only_sorted(self):
        fit = self._fit(0.5, [2.1, -0.3])
        assert signal_coefficients(fit, np.array([True, True, False])) == [(0, 2.1)]

    def test_ordering(self):
        fit = self._fit(0.0, [0.4, 1.9, 0.7])
        assert signal_coefficients(fit, np.array([True, False, True, True])) == [(2, 1.9), (3, 0.7), (0, 0.4)]

    def test_all_negative(self):
        assert signal_coefficients(self._fit(0.0, [-1.0, -0.2]), np.array([True, True])) == []

    def test_unconverged(self):
        with pytest.raises(ValueError):
            signal_coefficients(self._fit(0.0, [1.0], converged=False), np.array([True]))

    def test_expand(self):
        full = CoefficientVector(0.1, np.array([2.0, 3.0])).expand(np.array([False, True, False, True]))
        assert full.beta.tolist() == [0.0, 2.0, 0.0, 3.0]
