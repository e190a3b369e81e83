"""Shared domain types: datasets, sample batches, predictive sets, configs."""

from __future__ import annotations

import csv
import enum
import json
import math
from dataclasses import dataclass, field

import numpy as np

DEFAULT_SPLIT_FRACTIONS = (0.4, 0.2, 0.2, 0.2)


class DimensionError(ValueError):
    """Vector lengths or target dimensions do not agree."""


class ConfigurationError(ValueError):
    """Invalid configuration value or combination."""


class DataError(ValueError):
    """Malformed or non-finite input data."""


class CapabilityError(RuntimeError):
    """Operation requires a capability the backbone does not have."""


class NormKind(enum.Enum):
    L2 = "l2"
    LINF = "linf"
    L1 = "l1"


class QuantileMode(enum.Enum):
    INFLATED = "inflated"
    PLAIN = "plain"
    CORRECTED = "corrected"


def _as_float_array(a, name="array"):
    arr = np.asarray(a, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DataError(f"{name} contains non-finite entries")
    return arr


def distance(a, b, norm: NormKind = NormKind.L2) -> float:
    """Norm of (a - b) for two target vectors."""
    a = _as_float_array(a, "a")
    b = _as_float_array(b, "b")
    if a.shape != b.shape:
        raise DimensionError(f"length mismatch: {a.shape} vs {b.shape}")
    return float(_norms(a - b, norm))


def _norms(diff: np.ndarray, norm: NormKind) -> np.ndarray:
    """Norms along the last axis."""
    if norm is NormKind.L2:
        return np.sqrt(np.sum(diff * diff, axis=-1))
    if norm is NormKind.LINF:
        return np.max(np.abs(diff), axis=-1)
    if norm is NormKind.L1:
        return np.sum(np.abs(diff), axis=-1)
    raise ConfigurationError(f"unknown norm {norm!r}")


def distances_to(y, samples, norm: NormKind = NormKind.L2) -> np.ndarray:
    """Distances from a single target vector to each row of samples."""
    y = _as_float_array(y, "y")
    samples = _as_float_array(samples, "samples")
    if samples.ndim != 2 or samples.shape[1] != y.shape[-1]:
        raise DimensionError(
            f"samples shape {samples.shape} incompatible with target length {y.shape[-1]}"
        )
    return _norms(samples - y[None, :], norm)


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=float, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class LabeledPoint:
    """One covariate/target pair."""

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = _as_float_array(self.x, "x")
        y = _as_float_array(self.y, "y")
        if x.ndim != 1 or x.size < 1:
            raise DimensionError("x must be a vector with at least one entry")
        if y.ndim != 1 or y.size < 1:
            raise DimensionError("y must be a vector with at least one entry")
        object.__setattr__(self, "x", _freeze(x))
        object.__setattr__(self, "y", _freeze(y))


@dataclass(frozen=True)
class Splits:
    """Disjoint train/val/cal/test index lists over one dataset."""

    train: np.ndarray
    val: np.ndarray
    cal: np.ndarray
    test: np.ndarray

    def __post_init__(self):
        for name in ("train", "val", "cal", "test"):
            idx = np.asarray(getattr(self, name), dtype=int)
            idx.setflags(write=False)
            object.__setattr__(self, name, idx)
        allidx = np.concatenate([self.train, self.val, self.cal, self.test])
        if allidx.size and len(np.unique(allidx)) != allidx.size:
            raise DataError("split indices are not disjoint")
        if allidx.size and allidx.min() < 0:
            raise DataError("negative split index")

    def validate_range(self, n: int):
        for name in ("train", "val", "cal", "test"):
            idx = getattr(self, name)
            if idx.size and idx.max() >= n:
                raise DataError(f"{name} split index out of range for n={n}")


def make_splits(n: int, seed: int, fractions=DEFAULT_SPLIT_FRACTIONS) -> Splits:
    """Deterministic random split; pure function of (n, seed, fractions)."""
    if len(fractions) != 4:
        raise ConfigurationError("need four split fractions (train, val, cal, test)")
    if any(f < 0 for f in fractions) or sum(fractions) > 1 + 1e-9:
        raise ConfigurationError(f"invalid split fractions {fractions}")
    perm = np.random.default_rng(seed).permutation(n)
    n_val = int(n * fractions[1])
    n_cal = int(n * fractions[2])
    n_test = int(n * fractions[3])
    n_train = min(int(math.ceil(n * fractions[0])), n - n_val - n_cal - n_test)
    ofs = np.cumsum([0, n_train, n_val, n_cal, n_test])
    return Splits(
        train=perm[ofs[0]:ofs[1]],
        val=perm[ofs[1]:ofs[2]],
        cal=perm[ofs[2]:ofs[3]],
        test=perm[ofs[3]:ofs[4]],
    )


@dataclass(frozen=True)
class LabeledDataset:
    """Covariate matrix (n, p), target matrix (n, d) and deterministic splits."""

    x: np.ndarray
    y: np.ndarray
    splits: Splits
    seed: int

    def __post_init__(self):
        x = _as_float_array(self.x, "x")
        y = _as_float_array(self.y, "y")
        if x.ndim != 2 or y.ndim != 2:
            raise DimensionError("x and y must be 2-D arrays")
        if x.shape[0] != y.shape[0]:
            raise DimensionError("x and y must have the same number of rows")
        if x.shape[1] < 1 or y.shape[1] < 1:
            raise DimensionError("p and d must both be at least 1")
        object.__setattr__(self, "x", _freeze(x))
        object.__setattr__(self, "y", _freeze(y))
        self.splits.validate_range(x.shape[0])

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]

    @property
    def d(self) -> int:
        return self.y.shape[1]

    def fold(self, name: str):
        """(x, y) restricted to one split fold."""
        idx = getattr(self.splits, name)
        return self.x[idx], self.y[idx]

    def resplit(self, seed: int, fractions=DEFAULT_SPLIT_FRACTIONS) -> "LabeledDataset":
        return LabeledDataset(self.x, self.y, make_splits(self.n, seed, fractions), seed)


def from_arrays(x, y, seed: int, fractions=DEFAULT_SPLIT_FRACTIONS) -> LabeledDataset:
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.asarray(y, dtype=float)
    if y.ndim == 1:
        y = y[:, None]
    return LabeledDataset(x, y, make_splits(x.shape[0], seed, fractions), seed)


@dataclass(frozen=True)
class SampleBatch:
    """K generated target samples for one covariate, optionally with densities."""

    samples: np.ndarray
    densities: np.ndarray | None = None

    def __post_init__(self):
        samples = _as_float_array(self.samples, "samples")
        if samples.ndim != 2 or samples.shape[0] < 1:
            raise DimensionError("samples must be a nonempty (K, d) array")
        object.__setattr__(self, "samples", _freeze(samples))
        if self.densities is not None:
            dens = _as_float_array(self.densities, "densities")
            if dens.shape != (samples.shape[0],):
                raise DimensionError("densities must have one entry per sample")
            if np.any(dens < 0):
                raise DataError("densities must be nonnegative")
            object.__setattr__(self, "densities", _freeze(dens))

    @property
    def k(self) -> int:
        return self.samples.shape[0]

    @property
    def d(self) -> int:
        return self.samples.shape[1]


@dataclass(frozen=True)
class PcpConfig:
    """Run configuration: miscoverage, sample count, filtering and quantile mode.

    beta may be a single filter fraction in [0, 1) or a grid of candidates.
    quantile_mode None means: corrected when alpha >= 1/(n_cal+1), else inflated.
    """

    alpha: float = 0.1
    k_samples: int = 40
    beta: float | tuple = 0.0
    norm: NormKind = NormKind.L2
    quantile_mode: QuantileMode | None = None
    seed: int = 0
    beta_fold: str = "cal"

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ConfigurationError(f"alpha must be in (0, 1), got {self.alpha}")
        if self.k_samples < 1:
            raise ConfigurationError("k_samples must be positive")
        betas = self.beta if isinstance(self.beta, (tuple, list)) else (self.beta,)
        for b in betas:
            if not 0.0 <= b < 1.0:
                raise ConfigurationError(f"beta values must lie in [0, 1), got {b}")
        if isinstance(self.beta, list):
            object.__setattr__(self, "beta", tuple(self.beta))
        if self.beta_fold not in ("cal", "val"):
            raise ConfigurationError("beta_fold must be 'cal' or 'val'")


@dataclass(frozen=True)
class BallUnionSet:
    """Union of equal-radius norm balls around K centers."""

    centers: np.ndarray
    radius: float
    norm: NormKind = NormKind.L2

    def __post_init__(self):
        centers = _as_float_array(self.centers, "centers")
        if centers.ndim != 2 or centers.shape[0] < 1:
            raise DimensionError("centers must be a nonempty (K, d) array")
        object.__setattr__(self, "centers", _freeze(centers))
        if not (self.radius >= 0 or math.isinf(self.radius)):
            raise DataError(f"radius must be nonnegative, got {self.radius}")

    @property
    def d(self) -> int:
        return self.centers.shape[1]

    @property
    def is_infinite(self) -> bool:
        return math.isinf(self.radius)

    def intervals(self) -> list[tuple[float, float]]:
        """Merged interval representation; only defined for scalar targets."""
        if self.d != 1:
            raise DimensionError("interval representation requires d = 1")
        if self.is_infinite:
            raise DataError("infinite radius has no finite interval representation")
        lo = np.sort(self.centers[:, 0]) - self.radius
        hi = lo + 2 * self.radius
        merged = [(lo[0], hi[0])]
        for a, b in zip(lo[1:], hi[1:]):
            la, lb = merged[-1]
            if a <= lb:
                merged[-1] = (la, max(lb, b))
            else:
                merged.append((a, b))
        return merged

    def to_json_dict(self) -> dict:
        out = {
            "centers": self.centers.tolist(),
            "radius": "inf" if self.is_infinite else self.radius,
            "norm": self.norm.value,
        }
        if self.d == 1 and not self.is_infinite:
            out["intervals"] = [list(iv) for iv in self.intervals()]
        return out

    @classmethod
    def from_json_dict(cls, obj: dict) -> "BallUnionSet":
        radius = obj["radius"]
        radius = math.inf if radius == "inf" else float(radius)
        return cls(np.asarray(obj["centers"], dtype=float), radius, NormKind(obj["norm"]))


@dataclass(frozen=True)
class CalibratedPredictor:
    """Frozen backbone plus calibrated radius and the scores that produced it."""

    backbone: object
    radius: float
    config: PcpConfig
    n_cal: int
    cal_scores: np.ndarray = field(repr=False, default=None)
    selected_beta: float | None = None
    quantile_mode: QuantileMode | None = None

    def __post_init__(self):
        if self.cal_scores is not None:
            object.__setattr__(self, "cal_scores", _freeze(self.cal_scores))


@dataclass(frozen=True)
class CoverageReport:
    """Coverage and sharpness metrics over one test fold."""

    marginal_coverage: float
    conditional_coverage: float
    mean_set_size: float
    set_size_stderr: float
    n_test: int
    n_infinite: int = 0

    def __post_init__(self):
        if not 0.0 <= self.marginal_coverage <= 1.0:
            raise DataError("marginal coverage must lie in [0, 1]")
        if not (math.isnan(self.conditional_coverage) or 0.0 <= self.conditional_coverage <= 1.0):
            raise DataError("conditional coverage must lie in [0, 1]")
        if self.set_size_stderr < 0:
            raise DataError("stderr must be nonnegative")

    def to_json_dict(self) -> dict:
        return {
            "marginal_coverage": self.marginal_coverage,
            "conditional_coverage": self.conditional_coverage,
            "mean_set_size": "inf" if math.isinf(self.mean_set_size) else self.mean_set_size,
            "set_size_stderr": self.set_size_stderr,
            "n_test": self.n_test,
            "n_infinite": self.n_infinite,
        }


CSV_COLUMNS_DOC = "header x0..x{p-1}, y0..y{d-1}; decimal-point reals; UTF-8"


def save_csv(path, x, y):
    """Write a dataset in the x0..x{p-1}, y0..y{d-1} column format."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.atleast_2d(np.asarray(y, dtype=float))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            [f"x{j}" for j in range(x.shape[1])] + [f"y{j}" for j in range(y.shape[1])]
        )
        for xi, yi in zip(x, y):
            writer.writerow([repr(float(v)) for v in xi] + [repr(float(v)) for v in yi])


def load_csv(path):
    """Read a dataset in the core CSV format; rejects non-finite rows."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        x_cols = [i for i, h in enumerate(header) if h.startswith("x")]
        y_cols = [i for i, h in enumerate(header) if h.startswith("y")]
        if not x_cols or not y_cols:
            raise DataError(f"{path}: header must contain x* and y* columns")
        xs, ys = [], []
        for row in reader:
            if not row:
                continue
            try:
                vals = [float(v) for v in row]
            except ValueError as exc:
                raise DataError(f"{path}: non-numeric entry in row {row}") from exc
            if not all(math.isfinite(v) for v in vals):
                raise DataError(f"{path}: non-finite entry in row {row}")
            xs.append([vals[i] for i in x_cols])
            ys.append([vals[i] for i in y_cols])
    if not xs:
        raise DataError(f"{path}: no data rows")
    return np.asarray(xs), np.asarray(ys)


def radius_to_json(radius: float):
    return "inf" if math.isinf(radius) else radius


def dump_json(obj, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")
