"""Gaussian mixture primitives shared by the backbone models and the
synthetic-data oracles."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cholesky, solve_triangular
from scipy.special import logsumexp

from .core import DataError, DimensionError

_LOG_2PI = np.log(2.0 * np.pi)


def chol_lower(cov: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor; raises np.linalg.LinAlgError on failure."""
    return np.linalg.cholesky(cov)


def mvn_logpdf(x: np.ndarray, mean: np.ndarray, chol: np.ndarray) -> np.ndarray:
    """Log density of N(mean, L L^T) at rows of x (shape (..., dim))."""
    x = np.atleast_2d(x)
    dim = mean.shape[0]
    dev = (x - mean).T
    sol = solve_triangular(chol, dev, lower=True)
    maha = np.sum(sol * sol, axis=0)
    logdet = 2.0 * np.sum(np.log(np.diag(chol)))
    return -0.5 * (dim * _LOG_2PI + logdet + maha)


@dataclass(frozen=True)
class GaussianMixture:
    """Finite mixture of full-covariance Gaussians over R^d."""

    weights: np.ndarray
    means: np.ndarray
    covs: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        m = np.asarray(self.means, dtype=float)
        c = np.asarray(self.covs, dtype=float)
        if m.ndim != 2 or c.ndim != 3 or w.ndim != 1:
            raise DimensionError("expected weights (M,), means (M,d), covs (M,d,d)")
        if not (len(w) == len(m) == len(c)):
            raise DimensionError("component count mismatch")
        if np.any(w < -1e-12) or abs(w.sum() - 1.0) > 1e-9:
            raise DataError("mixture weights must be nonnegative and sum to 1")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", m)
        object.__setattr__(self, "covs", c)
        chols = np.empty_like(c)
        for i in range(len(c)):
            chols[i] = chol_lower(c[i])
        object.__setattr__(self, "_chols", chols)

    @property
    def n_components(self) -> int:
        return len(self.weights)

    @property
    def d(self) -> int:
        return self.means.shape[1]

    def log_density(self, ys) -> np.ndarray:
        ys = np.atleast_2d(np.asarray(ys, dtype=float))
        logs = np.full((ys.shape[0], self.n_components), -np.inf)
        for m in range(self.n_components):
            if self.weights[m] > 0:
                logs[:, m] = np.log(self.weights[m]) + mvn_logpdf(
                    ys, self.means[m], self._chols[m]
                )
        return logsumexp(logs, axis=1)

    def density(self, ys) -> np.ndarray:
        return np.exp(self.log_density(ys))

    def sample(self, k: int, rng: np.random.Generator) -> np.ndarray:
        comps = rng.choice(self.n_components, size=k, p=self.weights)
        eps = rng.standard_normal((k, self.d))
        out = np.empty((k, self.d))
        for m in range(self.n_components):
            mask = comps == m
            if np.any(mask):
                out[mask] = self.means[m] + eps[mask] @ self._chols[m].T
        return out

    def cdf_1d(self, t) -> np.ndarray:
        """Mixture CDF for scalar mixtures."""
        if self.d != 1:
            raise DimensionError("cdf_1d requires d = 1")
        from scipy.special import ndtr

        t = np.asarray(t, dtype=float)
        sds = np.sqrt(self.covs[:, 0, 0])
        z = (t[..., None] - self.means[:, 0]) / sds
        return np.sum(self.weights * ndtr(z), axis=-1)
