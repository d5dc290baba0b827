"""Gaussian mixture fitting of RGB pixel populations by expectation-maximization."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import logsumexp

log = logging.getLogger(__name__)

COV_RIDGE = 1e-4


@dataclass
class GmmModel:
    """Mixture of full-covariance Gaussians over colour vectors."""

    weights: np.ndarray      # (K,), >= 0, sums to 1
    means: np.ndarray        # (K, D)
    covariances: np.ndarray  # (K, D, D), symmetric positive definite
    fit_log_likelihoods: list[float] | None = None  # per-iteration trace from fit_gmm

    def __post_init__(self) -> None:
        if abs(self.weights.sum() - 1.0) > 1e-9:
            raise ValueError(f"weights sum to {self.weights.sum()}, expected 1")
        if np.any(self.weights < 0):
            raise ValueError("negative mixture weight")
        for c in self.covariances:
            np.linalg.cholesky(c)  # raises if not SPD

    @property
    def n_components(self) -> int:
        return len(self.weights)

    def component_log_pdf(self, x: np.ndarray) -> np.ndarray:
        """(N, K) log densities of each sample under each component."""
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        n, d = x.shape
        out = np.empty((n, self.n_components))
        for k in range(self.n_components):
            chol = np.linalg.cholesky(self.covariances[k])
            diff = x - self.means[k]
            sol = solve_triangular(chol, diff.T, lower=True)
            maha = (sol ** 2).sum(axis=0)
            logdet = 2.0 * np.log(np.diag(chol)).sum()
            out[:, k] = -0.5 * (maha + logdet + d * np.log(2.0 * np.pi))
        return out

    def log_pdf(self, x: np.ndarray) -> np.ndarray:
        """(N,) log mixture densities."""
        with np.errstate(divide="ignore"):
            logw = np.log(self.weights)
        return logsumexp(self.component_log_pdf(x) + logw, axis=1)

    def log_likelihood(self, x: np.ndarray) -> float:
        return float(self.log_pdf(x).sum())


def _kmeans_pp(x: np.ndarray, k: int, rng: np.random.Generator, n_iter: int = 10) -> np.ndarray:
    """Seeded k-means++ centres followed by a few Lloyd iterations."""
    n = len(x)
    centres = np.empty((k, x.shape[1]))
    centres[0] = x[rng.integers(n)]
    d2 = ((x - centres[0]) ** 2).sum(axis=1)
    for i in range(1, k):
        total = d2.sum()
        if total <= 0:
            centres[i:] = x[rng.integers(n, size=k - i)]
            break
        centres[i] = x[rng.choice(n, p=d2 / total)]
        d2 = np.minimum(d2, ((x - centres[i]) ** 2).sum(axis=1))
    for _ in range(n_iter):
        d2 = ((x[:, None, :] - centres[None]) ** 2).sum(axis=2)
        assign = d2.argmin(axis=1)
        for i in range(k):
            sel = assign == i
            if sel.any():
                centres[i] = x[sel].mean(axis=0)
    return centres


def fit_gmm(pixels: np.ndarray, k: int = 5, seed: int | np.random.Generator = 0,
            max_iter: int = 100, tol: float = 1e-4, ridge: float = COV_RIDGE) -> GmmModel:
    """Fit a k-component GMM to (N, D) samples.

    Initialization is k-means++; EM runs until the relative log-likelihood
    improvement drops below tol or max_iter is reached. Covariances carry a
    ridge of ridge*I, which keeps them positive definite even for degenerate
    data. With fewer than k samples the component count is reduced (warning).
    """
    x = np.atleast_2d(np.asarray(pixels, dtype=np.float64))
    n, d = x.shape
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if n == 0:
        raise ValueError("cannot fit a mixture to zero samples")
    if n < k:
        log.warning("only %d samples for %d components, reducing to %d", n, k, n)
        k = n

    rng = np.random.default_rng(seed)
    means = _kmeans_pp(x, k, rng)
    weights = np.full(k, 1.0 / k)
    covariances = np.empty((k, d, d))
    d2 = ((x[:, None, :] - means[None]) ** 2).sum(axis=2)
    assign = d2.argmin(axis=1)
    for i in range(k):
        sel = x[assign == i]
        covariances[i] = (np.cov(sel.T) if len(sel) > 1 else np.zeros((d, d))) + ridge * np.eye(d)

    model = GmmModel(weights, means, covariances)
    trace: list[float] = []
    prev_ll = -np.inf
    for _ in range(max_iter):
        with np.errstate(divide="ignore"):
            log_joint = model.component_log_pdf(x) + np.log(model.weights)
        log_norm = logsumexp(log_joint, axis=1)
        ll = float(log_norm.sum())
        trace.append(ll)
        resp = np.exp(log_joint - log_norm[:, None])

        nk = resp.sum(axis=0)
        safe_nk = np.maximum(nk, 1e-12)
        weights = nk / n
        weights = weights / weights.sum()
        means = (resp.T @ x) / safe_nk[:, None]
        covariances = np.empty((k, d, d))
        for i in range(k):
            diff = x - means[i]
            covariances[i] = (resp[:, i, None] * diff).T @ diff / safe_nk[i] + ridge * np.eye(d)
        model = GmmModel(weights, means, covariances)

        if np.isfinite(prev_ll) and ll - prev_ll < tol * abs(prev_ll):
            break
        prev_ll = ll
    model.fit_log_likelihoods = trace
    return model
