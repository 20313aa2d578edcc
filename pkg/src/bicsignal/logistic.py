"""Constrained logistic regression on compressed profiles, scored by BIC."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .dataset import ProfileTable

NEWTON_TOL = 1e-8
NEWTON_MAX_ITER = 50
COEF_CAP = 30.0
STALL_TOL = 1e-12
MAX_HALVINGS = 20
DAMPING_START = 1e-6
DAMPING_MAX = 1e2


@dataclass(frozen=True)
class CoefficientVector:
    """Intercept plus one coefficient per column of the design it belongs to."""

    beta0: float
    beta: np.ndarray

    @classmethod
    def zeros(cls, k: int) -> "CoefficientVector":
        return cls(0.0, np.zeros(k))

    def as_array(self) -> np.ndarray:
        return np.concatenate([[self.beta0], self.beta])

    @classmethod
    def from_array(cls, theta) -> "CoefficientVector":
        theta = np.asarray(theta, dtype=float)
        return cls(float(theta[0]), theta[1:].copy())

    def expand(self, gamma) -> "CoefficientVector":
        """Full-length vector over the model's universe, zero outside the support."""
        gamma = np.asarray(gamma, dtype=bool)
        if gamma.sum() != self.beta.size:
            raise ValueError("support size does not match coefficient count")
        full = np.zeros(gamma.size)
        full[gamma] = self.beta
        return CoefficientVector(self.beta0, full)


@dataclass(frozen=True)
class FitResult:
    beta_hat: CoefficientVector  # compacted: one entry per included drug
    loglik: float
    bic: float
    converged: bool
    iterations: int
    nu: int
    n: int

    @property
    def is_valid(self) -> bool:
        return self.converged and math.isfinite(self.bic)


def _design(pt: ProfileTable) -> np.ndarray:
    return np.column_stack([np.ones(pt.m), pt.x.astype(float)])


def _check_beta(pt: ProfileTable, beta: CoefficientVector):
    if beta.beta.size != pt.k:
        raise ValueError(f"coefficient vector has {beta.beta.size} entries, profiles have {pt.k} columns")


def _loglik_theta(z: np.ndarray, y: np.ndarray, w: np.ndarray, theta: np.ndarray) -> float:
    eta = z @ theta
    terms = w * (y * eta - np.logaddexp(0.0, eta))
    # fixed left-to-right order keeps results bit-reproducible
    return math.fsum(terms.tolist())


def loglik_weighted(pt: ProfileTable, beta: CoefficientVector) -> float:
    """Sum over profiles of w * (y * eta - log(1 + exp(eta)))."""
    _check_beta(pt, beta)
    return _loglik_theta(_design(pt), pt.y.astype(float), pt.weights.astype(float), beta.as_array())


def gradient_weighted(pt: ProfileTable, beta: CoefficientVector) -> np.ndarray:
    """Gradient of :func:`loglik_weighted` w.r.t. (beta0, beta)."""
    _check_beta(pt, beta)
    z = _design(pt)
    resid = pt.weights * (pt.y - expit(z @ beta.as_array()))
    return z.T @ resid


def loglik_rows(x: np.ndarray, y: np.ndarray, beta: CoefficientVector) -> float:
    """Uncompressed log-likelihood over all n rows of a dense design block."""
    eta = beta.beta0 + np.asarray(x, dtype=float) @ beta.beta
    return float(np.sum(y * eta - np.logaddexp(0.0, eta)))


def bic(loglik: float, nu: int, n: int) -> float:
    if n < 1 or nu < 1:
        raise ValueError("bic needs n >= 1 and nu >= 1")
    return loglik - (nu / 2.0) * math.log(n)


def _newton_direction(hess: np.ndarray, grad: np.ndarray) -> np.ndarray | None:
    """Solve (H + lam I) d = g with H the (positive) observed information."""
    try:
        chol = np.linalg.cholesky(hess)
        return _chol_solve(chol, grad)
    except np.linalg.LinAlgError:
        pass
    lam = DAMPING_START
    eye = np.eye(hess.shape[0])
    while lam <= DAMPING_MAX:
        try:
            chol = np.linalg.cholesky(hess + lam * eye)
            return _chol_solve(chol, grad)
        except np.linalg.LinAlgError:
            lam *= 2.0
    return None


def _chol_solve(chol: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    tmp = np.linalg.solve(chol, rhs)
    return np.linalg.solve(chol.T, tmp)


def fit_mle(
    pt: ProfileTable,
    n: int | None = None,
    *,
    tol: float = NEWTON_TOL,
    max_iter: int = NEWTON_MAX_ITER,
    coef_cap: float = COEF_CAP,
    record_path: list | None = None,
) -> FitResult:
    """Maximum likelihood by Newton-Raphson with step halving.

    Starts at zero. Stops when the gradient max-norm drops to ``tol`` or the
    line search can no longer improve the log-likelihood by more than 1e-12.
    Any |coefficient| above ``coef_cap`` marks the fit as divergent
    (quasi-separation): converged=False and bic=-inf.

    If ``record_path`` is a list, the log-likelihood after every iteration is
    appended to it.
    """
    n_total = pt.n if n is None else int(n)
    if n_total < 1 or pt.m == 0:
        raise ValueError("empty dataset")
    k = pt.k
    nu = k + 1
    z = _design(pt)
    y = pt.y.astype(float)
    w = pt.weights.astype(float)

    theta = np.zeros(k + 1)
    ll = _loglik_theta(z, y, w, theta)
    if record_path is not None:
        record_path.append(ll)
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        prob = expit(z @ theta)
        grad = z.T @ (w * (y - prob))
        if np.max(np.abs(grad)) <= tol:
            converged = True
            iterations -= 1
            break
        info = (z * (w * prob * (1.0 - prob))[:, None]).T @ z
        step = _newton_direction(info, grad)
        if step is None:
            break
        scale = 1.0
        for _ in range(MAX_HALVINGS + 1):
            cand = theta + scale * step
            ll_new = _loglik_theta(z, y, w, cand)
            if ll_new >= ll:
                break
            scale *= 0.5
        else:
            # no ascent possible along the Newton direction: rounding floor
            converged = bool(np.max(np.abs(grad)) <= max(tol, 1e-6))
            break
        improvement = ll_new - ll
        theta, ll = cand, ll_new
        if record_path is not None:
            record_path.append(ll)
        if np.max(np.abs(theta)) > coef_cap:
            break
        if improvement <= STALL_TOL:
            prob = expit(z @ theta)
            grad = z.T @ (w * (y - prob))
            converged = bool(np.max(np.abs(grad)) <= max(tol, 1e-6))
            if converged:
                break
    else:
        prob = expit(z @ theta)
        grad = z.T @ (w * (y - prob))
        converged = bool(np.max(np.abs(grad)) <= tol)

    if np.max(np.abs(theta)) > coef_cap or not np.all(np.isfinite(theta)):
        converged = False
    score = bic(ll, nu, n_total) if converged else -math.inf
    return FitResult(
        beta_hat=CoefficientVector.from_array(theta),
        loglik=ll,
        bic=score,
        converged=converged,
        iterations=iterations,
        nu=nu,
        n=n_total,
    )


def signal_coefficients(fit: FitResult, gamma) -> list[tuple[int, float]]:
    """Included drugs with a strictly positive coefficient, largest first.

    Indices refer to positions in ``gamma``.
    """
    if not fit.converged:
        raise ValueError("signals are only defined for a converged fit")
    gamma = np.asarray(getattr(gamma, "gamma", gamma), dtype=bool)
    support = np.flatnonzero(gamma)
    if support.size != fit.beta_hat.beta.size:
        raise ValueError("model support does not match the fitted coefficients")
    pairs = [(int(j), float(b)) for j, b in zip(support, fit.beta_hat.beta) if b > 0]
    pairs.sort(key=lambda t: (-t[1], t[0]))
    return pairs
