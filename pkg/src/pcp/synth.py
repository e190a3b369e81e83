"""Synthetic dataset generators: classic 2-D toy shapes plus the
multi-target bi-modal Gaussian design, with exact conditional oracles."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import (
    CapabilityError,
    ConfigurationError,
    DEFAULT_SPLIT_FRACTIONS,
    LabeledDataset,
    make_splits,
)
from .gaussians import GaussianMixture

SYNTH_NAMES = (
    "s_curve",
    "half_moons",
    "gaussians_25",
    "gaussians_8",
    "circle",
    "swiss_roll",
    "bimodal_multitarget",
)

TOY_NOISE = 0.1
BIMODAL_VARIANCE = 10.0
BIMODAL_COVARIATE_DIM = 5


@dataclass(frozen=True)
class SynthSpec:
    """Name, size, seed and family-specific parameters of one generator."""

    name: str
    n: int
    seed: int = 0
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.name not in SYNTH_NAMES:
            raise ConfigurationError(
                f"unknown synthetic family {self.name!r}; choose one of {SYNTH_NAMES}"
            )
        if self.n < 1:
            raise ConfigurationError("n must be at least 1")
        if self.name == "bimodal_multitarget":
            rho = float(self.params.get("rho", 0.0))
            if abs(rho) >= BIMODAL_VARIANCE:
                raise ConfigurationError(
                    f"|rho| must be below {BIMODAL_VARIANCE} for a positive-definite covariance"
                )


def _gaussians_8_centers() -> np.ndarray:
    angles = np.arange(8) * (2 * np.pi / 8)
    return 2.0 * np.stack([np.cos(angles), np.sin(angles)], axis=1)


def _gaussians_25_centers() -> np.ndarray:
    grid = np.arange(-2.0, 2.5, 1.0)
    xx, yy = np.meshgrid(grid, grid, indexing="ij")
    return np.stack([xx.ravel(), yy.ravel()], axis=1)


def _toy_points(name: str, n: int, rng: np.random.Generator) -> np.ndarray:
    """2-D point cloud; the first coordinate is the covariate."""
    noise = TOY_NOISE * rng.standard_normal((n, 2))
    if name == "s_curve":
        t = 3.0 * np.pi * (rng.random(n) - 0.5)
        pts = np.stack([np.sin(t), np.sign(t) * (np.cos(t) - 1.0)], axis=1)
        return pts + noise
    if name == "half_moons":
        upper = rng.random(n) < 0.5
        theta = np.pi * rng.random(n)
        x = np.where(upper, np.cos(theta), 1.0 - np.cos(theta))
        y = np.where(upper, np.sin(theta), 0.5 - np.sin(theta))
        return np.stack([x, y], axis=1) + noise
    if name == "circle":
        theta = 2.0 * np.pi * rng.random(n)
        return np.stack([np.cos(theta), np.sin(theta)], axis=1) + noise
    if name == "swiss_roll":
        t = 1.5 * np.pi * (1.0 + 2.0 * rng.random(n))
        pts = np.stack([t * np.cos(t), t * np.sin(t)], axis=1) / (3.0 * np.pi)
        return pts + noise
    if name in ("gaussians_8", "gaussians_25"):
        centers = _gaussians_8_centers() if name == "gaussians_8" else _gaussians_25_centers()
        picks = rng.integers(len(centers), size=n)
        return centers[picks] + noise
    raise ConfigurationError(f"unknown toy family {name!r}")


class BimodalTargetPopulation:
    """Multi-target design: X ~ N(0, I_5), Y an even two-mode Gaussian
    mixture whose mode means are fixed linear functions of (x, 1)."""

    def __init__(self, rho: float = 0.0, d: int = 2, coef_seed: int = 0):
        if d not in (1, 2):
            raise ConfigurationError("target dimension must be 1 or 2")
        if d == 1 and rho != 0.0:
            raise ConfigurationError("rho is only meaningful for d = 2")
        self.rho = float(rho)
        self.d = d
        self.p = BIMODAL_COVARIATE_DIM
        coef_rng = np.random.default_rng(coef_seed)
        self.coef = coef_rng.standard_normal((2, self.p + 1, d))
        cov = np.full((d, d), self.rho) + np.eye(d) * (BIMODAL_VARIANCE - self.rho)
        if d == 1:
            cov = np.array([[BIMODAL_VARIANCE]])
        self.cov = cov
        self._chol = np.linalg.cholesky(cov)

    def mode_means(self, x: np.ndarray) -> np.ndarray:
        """Mode means for covariate rows x: shape (n, 2, d)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        xb = np.hstack([x, np.ones((x.shape[0], 1))])
        return np.einsum("nq,mqd->nmd", xb, self.coef)

    def draw(self, n: int, rng: np.random.Generator):
        x = rng.standard_normal((n, self.p))
        means = self.mode_means(x)
        modes = rng.integers(2, size=n)
        eps = rng.standard_normal((n, self.d))
        y = means[np.arange(n), modes] + eps @ self._chol.T
        return x, y

    def conditional(self, x) -> GaussianMixture:
        means = self.mode_means(np.asarray(x, dtype=float)[None, :])[0]
        covs = np.repeat(self.cov[None, :, :], 2, axis=0)
        return GaussianMixture(np.array([0.5, 0.5]), means, covs)


class TwoModePopulation:
    """Scalar target with two symmetric modes; used for sharpness studies."""

    def __init__(self, gap: float = 10.0, sigma: float = 0.5, p: int = 1):
        self.gap = float(gap)
        self.sigma = float(sigma)
        self.p = p
        self.d = 1

    def draw(self, n: int, rng: np.random.Generator):
        x = rng.standard_normal((n, self.p))
        modes = np.where(rng.random(n) < 0.5, -0.5, 0.5) * self.gap
        y = modes + self.sigma * rng.standard_normal(n)
        return x, y[:, None]

    def conditional(self, x) -> GaussianMixture:
        half = 0.5 * self.gap
        return GaussianMixture(
            np.array([0.5, 0.5]),
            np.array([[-half], [half]]),
            np.full((2, 1, 1), self.sigma**2),
        )


def _bimodal_population(spec: SynthSpec) -> BimodalTargetPopulation:
    params = spec.params
    return BimodalTargetPopulation(
        rho=float(params.get("rho", 0.0)),
        d=int(params.get("d", 2)),
        coef_seed=int(params.get("coef_seed", 0)),
    )


def generate(spec: SynthSpec, fractions=DEFAULT_SPLIT_FRACTIONS) -> LabeledDataset:
    """Deterministic dataset for one spec; identical spec, identical bytes."""
    rng = np.random.default_rng(spec.seed)
    if spec.name == "bimodal_multitarget":
        pop = _bimodal_population(spec)
        x, y = pop.draw(spec.n, rng)
    else:
        pts = _toy_points(spec.name, spec.n, rng)
        x, y = pts[:, :1], pts[:, 1:]
    return LabeledDataset(x, y, make_splits(spec.n, spec.seed, fractions), spec.seed)


def conditional_truth(spec: SynthSpec, x) -> GaussianMixture:
    """Exact conditional law p(Y | X = x) for the families that have one."""
    if spec.name == "bimodal_multitarget":
        return _bimodal_population(spec).conditional(x)
    if spec.name in ("gaussians_8", "gaussians_25"):
        centers = (
            _gaussians_8_centers() if spec.name == "gaussians_8" else _gaussians_25_centers()
        )
        x0 = float(np.asarray(x, dtype=float).ravel()[0])
        # p(component | x) from the Gaussian x-marginals of the clusters
        logw = -0.5 * ((x0 - centers[:, 0]) / TOY_NOISE) ** 2
        logw -= logw.max()
        w = np.exp(logw)
        w /= w.sum()
        covs = np.repeat((TOY_NOISE**2 * np.eye(1))[None, :, :], len(centers), axis=0)
        return GaussianMixture(w, centers[:, 1:], covs)
    raise CapabilityError(f"no conditional oracle for family {spec.name!r}")
