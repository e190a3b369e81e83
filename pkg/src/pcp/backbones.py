"""Conditional generative samplers: an EM-fit joint Gaussian mixture with
exact conditionals, a density-free k-NN resampler, and a line-JSON bridge
client for external model processes."""

from __future__ import annotations

import json
import math
import shlex
import subprocess
import threading
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import logsumexp

from .core import (
    CapabilityError,
    ConfigurationError,
    DataError,
    DimensionError,
    LabeledDataset,
    SampleBatch,
)
from .gaussians import GaussianMixture, chol_lower, mvn_logpdf

_LOG_2PI = np.log(2.0 * np.pi)

DEFAULT_COMPONENT_GRID = (1, 2, 4, 8)
BRIDGE_PROTOCOL_VERSION = 1


class DegenerateComponentError(RuntimeError):
    """A mixture component covariance stayed singular after jitter."""


class BridgeProtocolError(RuntimeError):
    """The bridge child violated the line-JSON protocol."""


def _safe_cholesky(cov: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Cholesky with diagonal jitter on failure; returns (cov, chol)."""
    q = cov.shape[0]
    jitter = 1e-6 * np.trace(cov) / q
    for attempt in range(8):
        try:
            return cov, chol_lower(cov)
        except np.linalg.LinAlgError:
            if jitter <= 0:
                break
            cov = cov + jitter * np.eye(q)
            jitter *= 10.0
    raise DegenerateComponentError("covariance not positive-definite after jitter")


def _kmeanspp_centers(data: np.ndarray, m: int, rng: np.random.Generator) -> np.ndarray:
    n = data.shape[0]
    centers = [data[rng.integers(n)]]
    for _ in range(1, m):
        d2 = np.min(
            np.sum((data[:, None, :] - np.asarray(centers)[None, :, :]) ** 2, axis=2),
            axis=1,
        )
        total = d2.sum()
        probs = d2 / total if total > 0 else np.full(n, 1.0 / n)
        centers.append(data[rng.choice(n, p=probs)])
    return np.asarray(centers)


def _em_fit(data, components, rng, max_iter, tol):
    """One EM run; returns (weights, means, covs, loglik_trace)."""
    n, q = data.shape
    means = _kmeanspp_centers(data, components, rng)
    base_cov, _ = _safe_cholesky(np.cov(data, rowvar=False).reshape(q, q))
    covs = np.repeat(base_cov[None, :, :], components, axis=0)
    weights = np.full(components, 1.0 / components)
    chols = np.array([_safe_cholesky(c)[1] for c in covs])

    trace = []
    prev_ll = -np.inf
    for _ in range(max_iter):
        log_resp = np.empty((n, components))
        for m in range(components):
            log_resp[:, m] = np.log(weights[m]) + mvn_logpdf(data, means[m], chols[m])
        norm = logsumexp(log_resp, axis=1)
        ll = float(norm.sum())
        trace.append(ll)
        resp = np.exp(log_resp - norm[:, None])

        nk = resp.sum(axis=0)
        if np.any(nk < 1e-12):
            raise DegenerateComponentError("empty mixture component")
        weights = nk / n
        means = (resp.T @ data) / nk[:, None]
        new_covs = np.empty_like(covs)
        new_chols = np.empty_like(chols)
        for m in range(components):
            dev = data - means[m]
            cov = (resp[:, m][:, None] * dev).T @ dev / nk[m]
            new_covs[m], new_chols[m] = _safe_cholesky(cov)
        covs, chols = new_covs, new_chols

        if ll - prev_ll < tol and len(trace) > 1:
            break
        prev_ll = ll
    return weights, means, covs, np.asarray(trace)


@dataclass(frozen=True)
class JointGmmModel:
    """Gaussian mixture over the joint (x, y) space with cached block
    partitions for exact conditioning."""

    weights: np.ndarray
    means: np.ndarray
    covs: np.ndarray
    p: int
    d: int
    loglik_trace: np.ndarray = None

    def __post_init__(self):
        q = self.p + self.d
        if self.means.shape[1] != q or self.covs.shape[1:] != (q, q):
            raise DimensionError("mean/covariance shapes inconsistent with (p, d)")
        if abs(self.weights.sum() - 1.0) > 1e-9 or np.any(self.weights < 0):
            raise DataError("weights must be nonnegative and sum to 1")
        p = self.p
        sxx = self.covs[:, :p, :p]
        sxy = self.covs[:, :p, p:]
        syx = self.covs[:, p:, :p]
        syy = self.covs[:, p:, p:]
        m = len(self.weights)
        regress = np.empty((m, self.d, p))
        cond_covs = np.empty((m, self.d, self.d))
        chol_xx = np.empty((m, p, p))
        chol_cond = np.empty((m, self.d, self.d))
        for i in range(m):
            _, lxx = _safe_cholesky(sxx[i])
            chol_xx[i] = lxx
            # A = Syx Sxx^-1 via two triangular solves
            tmp = solve_triangular(lxx, sxy[i], lower=True)
            regress[i] = solve_triangular(lxx.T, tmp, lower=False).T
            cov = syy[i] - regress[i] @ sxy[i]
            cov = 0.5 * (cov + cov.T)
            cond_covs[i], chol_cond[i] = _safe_cholesky(cov)
        object.__setattr__(self, "_regress", regress)
        object.__setattr__(self, "_cond_covs", cond_covs)
        object.__setattr__(self, "_chol_xx", chol_xx)
        object.__setattr__(self, "_chol_cond", chol_cond)

    @property
    def n_components(self) -> int:
        return len(self.weights)

    def conditional_params(self, xs: np.ndarray):
        """Per-covariate conditional mixture weights and means.

        Returns (weights (n, M), means (n, M, d)); conditional covariances
        do not depend on x and are available as cond_covs (M, d, d).
        """
        xs = np.atleast_2d(np.asarray(xs, dtype=float))
        if xs.shape[1] != self.p:
            raise DimensionError(f"x must have length {self.p}")
        n, m = xs.shape[0], self.n_components
        logw = np.full((n, m), -np.inf)
        for i in range(m):
            if self.weights[i] > 0:
                logw[:, i] = np.log(self.weights[i]) + mvn_logpdf(
                    xs, self.means[i, : self.p], self._chol_xx[i]
                )
        norm = logsumexp(logw, axis=1)
        weights = np.where(
            np.isfinite(norm)[:, None],
            np.exp(logw - np.where(np.isfinite(norm), norm, 0.0)[:, None]),
            1.0 / m,
        )
        mu_y = self.means[:, self.p:]
        mu_x = self.means[:, : self.p]
        means = mu_y[None, :, :] + np.einsum(
            "mdp,nmp->nmd", self._regress, xs[:, None, :] - mu_x[None, :, :]
        )
        return weights, means

    @property
    def cond_covs(self) -> np.ndarray:
        return self._cond_covs

    @property
    def cond_chols(self) -> np.ndarray:
        return self._chol_cond

    def log_loglik(self, data: np.ndarray) -> float:
        """Total log-likelihood of joint rows under the mixture."""
        n = data.shape[0]
        logs = np.full((n, self.n_components), -np.inf)
        chols = [_safe_cholesky(c)[1] for c in self.covs]
        for i in range(self.n_components):
            if self.weights[i] > 0:
                logs[:, i] = np.log(self.weights[i]) + mvn_logpdf(
                    data, self.means[i], chols[i]
                )
        return float(logsumexp(logs, axis=1).sum())


def fit_gmm(
    data: np.ndarray,
    components: int,
    seed: int = 0,
    max_iter: int = 200,
    tol: float = 1e-6,
    p: int | None = None,
) -> JointGmmModel:
    """EM fit on joint rows (n, p+d); falls back to fewer components when a
    component degenerates, and raises if a single component cannot be fit."""
    data = np.atleast_2d(np.asarray(data, dtype=float))
    if components < 1:
        raise ConfigurationError("components must be at least 1")
    if data.shape[0] < components:
        raise ConfigurationError("training size must be at least the component count")
    if p is None:
        p = data.shape[1] - 1
    d = data.shape[1] - p
    m = components
    while True:
        rng = np.random.default_rng(seed)
        try:
            weights, means, covs, trace = _em_fit(data, m, rng, max_iter, tol)
            return JointGmmModel(weights, means, covs, p=p, d=d, loglik_trace=trace)
        except DegenerateComponentError:
            if m == 1:
                raise
            m -= 1


def gmm_conditional(model: JointGmmModel, x) -> GaussianMixture:
    """Exact conditional p(y | x) of a joint Gaussian mixture."""
    weights, means = model.conditional_params(np.asarray(x, dtype=float)[None, :])
    return GaussianMixture(weights[0], means[0], model.cond_covs)


class Backbone:
    """Minimal sampler interface: sample() and, when explicit, density()."""

    has_density = False
    p: int
    d: int

    def sample(self, x, k: int, rng: np.random.Generator) -> SampleBatch:
        raise NotImplementedError

    def sample_many(self, xs, k: int, rng: np.random.Generator):
        """Batched sampling: (samples (n, k, d), densities (n, k) or None).

        Consumes the stream in point-index order, so results are
        deterministic for a given generator state.
        """
        xs = np.atleast_2d(np.asarray(xs, dtype=float))
        out = np.empty((xs.shape[0], k, self.d))
        dens = np.empty((xs.shape[0], k)) if self.has_density else None
        for i, x in enumerate(xs):
            batch = self.sample(x, k, rng)
            out[i] = batch.samples
            if dens is not None:
                dens[i] = batch.densities
        return out, dens

    def density(self, x, ys) -> np.ndarray:
        raise CapabilityError("backbone has no explicit density")


class GmmBackbone(Backbone):
    """Explicit-density backbone: joint GMM fit on the training fold with
    component count chosen by validation log-likelihood."""

    has_density = True

    def __init__(self, model: JointGmmModel, x_loc, x_scale, y_loc, y_scale):
        self.model = model
        self.p = model.p
        self.d = model.d
        self.x_loc = np.asarray(x_loc, dtype=float)
        self.x_scale = np.asarray(x_scale, dtype=float)
        self.y_loc = np.asarray(y_loc, dtype=float)
        self.y_scale = np.asarray(y_scale, dtype=float)
        self._log_jac = float(np.sum(np.log(self.y_scale)))

    @classmethod
    def fit(
        cls,
        dataset: LabeledDataset,
        components: int | None = None,
        seed: int = 0,
        max_iter: int = 200,
        tol: float = 1e-6,
        component_grid=DEFAULT_COMPONENT_GRID,
        standardize: bool = True,
    ) -> "GmmBackbone":
        x_tr, y_tr = dataset.fold("train")
        if x_tr.shape[0] == 0:
            raise DataError("training fold is empty")
        if standardize:
            x_loc, x_scale = x_tr.mean(axis=0), x_tr.std(axis=0)
            y_loc, y_scale = y_tr.mean(axis=0), y_tr.std(axis=0)
            x_scale = np.where(x_scale > 0, x_scale, 1.0)
            y_scale = np.where(y_scale > 0, y_scale, 1.0)
        else:
            x_loc = np.zeros(dataset.p)
            x_scale = np.ones(dataset.p)
            y_loc = np.zeros(dataset.d)
            y_scale = np.ones(dataset.d)
        joint_tr = np.hstack([(x_tr - x_loc) / x_scale, (y_tr - y_loc) / y_scale])
        p = dataset.p
        if components is not None:
            model = fit_gmm(joint_tr, components, seed=seed, max_iter=max_iter, tol=tol, p=p)
            return cls(model, x_loc, x_scale, y_loc, y_scale)
        x_val, y_val = dataset.fold("val")
        joint_val = (
            np.hstack([(x_val - x_loc) / x_scale, (y_val - y_loc) / y_scale])
            if x_val.shape[0]
            else joint_tr
        )
        best = None
        for m in component_grid:
            if m > joint_tr.shape[0]:
                continue
            model = fit_gmm(joint_tr, m, seed=seed, max_iter=max_iter, tol=tol, p=p)
            val_ll = model.log_loglik(joint_val)
            if best is None or val_ll > best[0]:
                best = (val_ll, model)
        if best is None:
            raise ConfigurationError("component grid empty after size cap")
        return cls(best[1], x_loc, x_scale, y_loc, y_scale)

    def conditional(self, x) -> GaussianMixture:
        """Conditional mixture of y given x, in original target units."""
        x_std = (np.asarray(x, dtype=float) - self.x_loc) / self.x_scale
        mix = gmm_conditional(self.model, x_std)
        scale = np.diag(self.y_scale)
        means = self.y_loc + mix.means * self.y_scale
        covs = np.einsum("ij,mjk,kl->mil", scale, mix.covs, scale)
        return GaussianMixture(mix.weights, means, covs)

    def sample(self, x, k: int, rng: np.random.Generator) -> SampleBatch:
        samples, dens = self.sample_many(np.asarray(x, dtype=float)[None, :], k, rng)
        return SampleBatch(samples[0], dens[0])

    def sample_many(self, xs, k: int, rng: np.random.Generator):
        xs = np.atleast_2d(np.asarray(xs, dtype=float))
        xs_std = (xs - self.x_loc) / self.x_scale
        weights, means = self.model.conditional_params(xs_std)
        n, m = weights.shape
        d = self.d
        cum = np.cumsum(weights, axis=1)
        cum[:, -1] = 1.0
        u = rng.random((n, k))
        comps = np.sum(u[:, :, None] > cum[:, None, :], axis=2)
        eps = rng.standard_normal((n, k, d))
        chols = self.model.cond_chols
        picked_means = means[np.arange(n)[:, None], comps]
        picked_chols = chols[comps]
        y_std = picked_means + np.einsum("nkij,nkj->nki", picked_chols, eps)
        dens = self._density_std(weights, means, y_std)
        return self.y_loc + y_std * self.y_scale, dens

    def _density_std(self, weights, means, y_std):
        """Mixture density of standardized samples, in original y units."""
        n, k, d = y_std.shape
        m = weights.shape[1]
        logs = np.full((n, k, m), -np.inf)
        chols = self.model.cond_chols
        for i in range(m):
            dev = y_std - means[:, None, i, :]
            sol = solve_triangular(chols[i], dev.reshape(-1, d).T, lower=True)
            maha = np.sum(sol * sol, axis=0).reshape(n, k)
            logdet = 2.0 * np.sum(np.log(np.diag(chols[i])))
            w = weights[:, i]
            with np.errstate(divide="ignore"):
                logs[:, :, i] = np.log(w)[:, None] - 0.5 * (
                    d * _LOG_2PI + logdet + maha
                )
        return np.exp(logsumexp(logs, axis=2) - self._log_jac)

    def density(self, x, ys) -> np.ndarray:
        return self.conditional(x).density(np.atleast_2d(ys))


class KnnResampler(Backbone):
    """Density-free backbone: resamples targets of the k nearest training
    covariates with Gaussian jitter."""

    has_density = False

    def __init__(self, x_train, y_train, k_nn: int = 10, h: float = 0.0):
        self.x_train = np.atleast_2d(np.asarray(x_train, dtype=float))
        self.y_train = np.atleast_2d(np.asarray(y_train, dtype=float))
        if not 1 <= k_nn <= self.x_train.shape[0]:
            raise ConfigurationError("k_nn must lie in [1, training size]")
        if not math.isfinite(h) or h < 0:
            raise ConfigurationError("jitter bandwidth must be finite and nonnegative")
        self.k_nn = k_nn
        self.h = h
        self.p = self.x_train.shape[1]
        self.d = self.y_train.shape[1]

    @classmethod
    def fit(cls, dataset: LabeledDataset, k_nn: int = 10, h: float = 0.0):
        x_tr, y_tr = dataset.fold("train")
        return cls(x_tr, y_tr, k_nn=min(k_nn, len(x_tr)), h=h)

    def sample(self, x, k: int, rng: np.random.Generator) -> SampleBatch:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.p,):
            raise DimensionError(f"x must have length {self.p}")
        d2 = np.sum((self.x_train - x) ** 2, axis=1)
        nbrs = np.argpartition(d2, self.k_nn - 1)[: self.k_nn]
        nbrs = nbrs[np.argsort(d2[nbrs], kind="stable")]
        picks = nbrs[rng.integers(self.k_nn, size=k)]
        samples = self.y_train[picks]
        if self.h > 0:
            samples = samples + rng.standard_normal((k, self.d)) * self.h
        return SampleBatch(samples)


class BridgeBackbone(Backbone):
    """Client for an external sampler child process speaking one JSON
    message per line over stdin/stdout."""

    def __init__(self, command, timeout: float = 60.0):
        if isinstance(command, str):
            command = shlex.split(command)
        self.command = list(command)
        self.timeout = timeout
        self._lock = threading.Lock()
        self._proc = subprocess.Popen(
            self.command,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            stderr=subprocess.PIPE,
            text=True,
            bufsize=1,
        )
        try:
            hello = self._roundtrip({"op": "hello", "version": BRIDGE_PROTOCOL_VERSION})
        except BridgeProtocolError:
            self._kill()
            raise
        if not (hello.get("ok") is True and "p" in hello and "d" in hello):
            self._kill()
            raise BridgeProtocolError(f"bad handshake reply: {hello!r}")
        self.has_density = bool(hello.get("has_density", False))
        self.p = int(hello["p"])
        self.d = int(hello["d"])

    def _stderr_tail(self) -> str:
        try:
            self._proc.kill()
            _, err = self._proc.communicate(timeout=5)
            return (err or "")[-2000:]
        except Exception:
            return "<stderr unavailable>"

    def _kill(self):
        try:
            self._proc.kill()
        except Exception:
            pass

    def _roundtrip(self, request: dict) -> dict:
        with self._lock:
            if self._proc.poll() is not None:
                raise BridgeProtocolError("bridge child exited prematurely")
            try:
                self._proc.stdin.write(json.dumps(request) + "\n")
                self._proc.stdin.flush()
                line = self._proc.stdout.readline()
            except (BrokenPipeError, OSError) as exc:
                raise BridgeProtocolError(
                    f"bridge transport failure: {exc}; stderr: {self._stderr_tail()}"
                ) from exc
            if not line:
                raise BridgeProtocolError(
                    f"bridge closed the pipe; stderr: {self._stderr_tail()}"
                )
            try:
                reply = json.loads(line)
            except json.JSONDecodeError as exc:
                raise BridgeProtocolError(f"malformed bridge reply: {line!r}") from exc
            if not isinstance(reply, dict):
                raise BridgeProtocolError(f"malformed bridge reply: {line!r}")
            return reply

    def sample(self, x, k: int, rng: np.random.Generator | None = None, seed: int | None = None) -> SampleBatch:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.p,):
            raise DimensionError(f"x must have length {self.p}")
        if seed is None:
            if rng is None:
                raise ConfigurationError("sample needs an rng or an explicit seed")
            seed = int(rng.integers(2**31 - 1))
        reply = self._roundtrip(
            {"op": "sample", "x": [float(v) for v in x], "k": int(k), "seed": int(seed)}
        )
        if reply.get("ok") is False or "samples" not in reply:
            raise BridgeProtocolError(f"bridge sample error: {reply!r}")
        samples = np.asarray(reply["samples"], dtype=float)
        if samples.shape != (k, self.d):
            raise BridgeProtocolError(
                f"bridge returned shape {samples.shape}, expected {(k, self.d)}"
            )
        densities = None
        if self.has_density:
            if "densities" not in reply:
                raise BridgeProtocolError("density-capable bridge omitted densities")
            densities = np.asarray(reply["densities"], dtype=float)
        return SampleBatch(samples, densities)

    def close(self):
        if self._proc.poll() is None:
            try:
                self._roundtrip({"op": "bye"})
            except BridgeProtocolError:
                pass
            try:
                self._proc.stdin.close()
                self._proc.wait(timeout=5)
            except Exception:
                self._kill()
        for stream in (self._proc.stdout, self._proc.stderr):
            try:
                stream.close()
            except Exception:
                pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False


def sample(backbone: Backbone, x, k: int, rng: np.random.Generator) -> SampleBatch:
    """Draw K samples from a backbone at covariate x."""
    if k < 1:
        raise ConfigurationError("k must be at least 1")
    return backbone.sample(x, k, rng)


def density(backbone: Backbone, x, y) -> float:
    """Conditional density q(y | x) of an explicit backbone."""
    if not backbone.has_density:
        raise CapabilityError("backbone has no explicit density")
    return float(np.asarray(backbone.density(x, np.atleast_2d(y))).ravel()[0])
