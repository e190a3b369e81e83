"""Config-driven experiment runner: generate/load data, fit a backbone,
calibrate, predict, evaluate; plus naive interval baselines and a
repeated-trial coverage harness."""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field, asdict

import numpy as np

from . import geometry
from .backbones import BridgeBackbone, GmmBackbone, KnnResampler
from .calibrate import calibrated_radius, resolve_quantile_mode, scores_from_arrays
from .core import (
    BallUnionSet,
    ConfigurationError,
    CoverageReport,
    DataError,
    DEFAULT_SPLIT_FRACTIONS,
    LabeledDataset,
    NormKind,
    PcpConfig,
    QuantileMode,
    load_csv,
    make_splits,
)
from .evaluation import (
    WscConfig,
    bonferroni_level,
    marginal_coverage,
    set_size_stats,
    worst_slab_coverage,
)
from .predict import (
    BetaGrid,
    DEFAULT_BETA_GRID,
    _beta_objective,
    filter_many,
    oversample_count,
    predict_many,
)
from .synth import SynthSpec, generate

METHODS = ("pcp", "hdpcp", "naive_interval", "bonferroni_naive")


def _derive_seed(*parts) -> int:
    return int(np.random.SeedSequence(tuple(int(p) for p in parts)).generate_state(1)[0])


@dataclass
class ExperimentConfig:
    """Everything needed to reproduce one experiment run."""

    data: dict
    outdir: str
    method: str = "pcp"
    backbone: dict = field(default_factory=lambda: {"kind": "gmm"})
    split_fractions: tuple = DEFAULT_SPLIT_FRACTIONS
    split_seed: int = 0
    pcp: dict = field(default_factory=dict)
    repetitions: int = 5
    wsc: dict = field(default_factory=dict)
    measure: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigurationError(f"method must be one of {METHODS}")
        if self.repetitions < 1:
            raise ConfigurationError("repetitions must be at least 1")
        self.split_fractions = tuple(float(f) for f in self.split_fractions)
        if sum(self.split_fractions) > 1 + 1e-9:
            raise ConfigurationError("split fractions must sum to at most 1")
        if not isinstance(self.data, dict) or not ({"synth", "csv"} & set(self.data)):
            raise ConfigurationError("data must specify either 'synth' or 'csv'")
        kind = self.backbone.get("kind", "gmm")
        if kind not in ("gmm", "knn", "bridge"):
            raise ConfigurationError("backbone.kind must be gmm, knn or bridge")

    def pcp_config(self) -> PcpConfig:
        opts = dict(self.pcp)
        if "norm" in opts:
            opts["norm"] = NormKind(opts["norm"])
        if "quantile_mode" in opts and opts["quantile_mode"] is not None:
            opts["quantile_mode"] = QuantileMode(opts["quantile_mode"])
        if "beta" in opts and isinstance(opts["beta"], list):
            opts["beta"] = tuple(opts["beta"])
        return PcpConfig(**opts)

    def wsc_config(self, seed: int) -> WscConfig:
        opts = dict(self.wsc)
        opts.setdefault("n_directions", 100)
        opts.setdefault("seed", seed)
        return WscConfig(**opts)

    def to_json_dict(self) -> dict:
        out = asdict(self)
        out["split_fractions"] = list(self.split_fractions)
        return out

    @classmethod
    def from_dict(cls, obj: dict) -> "ExperimentConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(obj) - known
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        return cls(**obj)

    @classmethod
    def from_file(cls, path: str) -> "ExperimentConfig":
        text = open(path, "rb").read()
        if str(path).endswith(".toml"):
            try:
                import tomllib
            except ImportError:
                import tomli as tomllib

            obj = tomllib.loads(text.decode("utf-8"))
        else:
            obj = json.loads(text)
        return cls.from_dict(obj)


def load_dataset(cfg: ExperimentConfig) -> LabeledDataset:
    if "synth" in cfg.data:
        s = dict(cfg.data["synth"])
        spec = SynthSpec(
            name=s["name"],
            n=int(s.get("n", 2000)),
            seed=int(s.get("seed", 0)),
            params=dict(s.get("params", {})),
        )
        return generate(spec, cfg.split_fractions)
    x, y = load_csv(cfg.data["csv"])
    return LabeledDataset(
        x, y, make_splits(x.shape[0], cfg.split_seed, cfg.split_fractions), cfg.split_seed
    )


def fit_backbone(cfg: ExperimentConfig, dataset: LabeledDataset, seed: int):
    opts = dict(cfg.backbone)
    kind = opts.pop("kind", "gmm")
    if kind == "gmm":
        return GmmBackbone.fit(dataset, seed=seed, **opts)
    if kind == "knn":
        return KnnResampler.fit(dataset, **opts)
    if kind == "bridge":
        return BridgeBackbone(opts["command"])
    raise ConfigurationError(f"unknown backbone kind {kind!r}")


# ---------------------------------------------------------------------------
# naive per-dimension interval baselines


def _band(samples: np.ndarray, level: float):
    """Per-dimension (lo, hi) empirical band of a (k, d) batch."""
    k = samples.shape[0]
    lo_idx = max(1, int(math.ceil(k * (level / 2) - 1e-9)))
    hi_idx = max(1, int(math.ceil(k * (1 - level / 2) - 1e-9)))
    srt = np.sort(samples, axis=0)
    return srt[lo_idx - 1], srt[hi_idx - 1]


def _band_scores(ys, sample_stack, level):
    """Signed distance of each y outside its per-dimension band; max over dims."""
    n = ys.shape[0]
    scores = np.empty(n)
    bands = np.empty((n, 2, ys.shape[1]))
    for i in range(n):
        lo, hi = _band(sample_stack[i], level)
        bands[i, 0], bands[i, 1] = lo, hi
        scores[i] = np.max(np.maximum(lo - ys[i], ys[i] - hi))
    return scores, bands


def _naive_run(backbone, dataset, config: PcpConfig, alpha_dim: float | None = None):
    """Conformalized per-dimension interval band; returns per-test-point
    (contains flag, measure). alpha_dim None means the joint band at alpha."""
    x_cal, y_cal = dataset.fold("cal")
    x_test, y_test = dataset.fold("test")
    rng = np.random.default_rng(config.seed)
    k = config.k_samples
    cal_samples, _ = backbone.sample_many(x_cal, k, rng)
    test_samples, _ = backbone.sample_many(x_test, k, rng)
    d = y_cal.shape[1]

    if alpha_dim is None:
        levels = [config.alpha]
        dims = [slice(None)]
    else:
        levels = [alpha_dim] * d
        dims = [slice(j, j + 1) for j in range(d)]

    n_test = x_test.shape[0]
    inside = np.ones(n_test, dtype=bool)
    lengths = np.ones(n_test)
    for level, dim in zip(levels, dims):
        scores, _ = _band_scores(y_cal[:, dim], cal_samples[:, :, dim], level)
        mode = resolve_quantile_mode(config.quantile_mode, level, scores.size)
        radius = calibrated_radius(np.maximum(scores, 0.0), level, mode)
        t_scores, t_bands = _band_scores(y_test[:, dim], test_samples[:, :, dim], level)
        inside &= t_scores <= radius
        span = np.clip(t_bands[:, 1] - t_bands[:, 0] + 2 * radius, 0.0, None)
        lengths *= np.prod(span, axis=1)
    return inside, lengths


# ---------------------------------------------------------------------------
# experiment driver


def _set_measure(ball_set: BallUnionSet, cfg: ExperimentConfig, rng) -> float:
    opts = dict(cfg.measure)
    estimator = opts.get("estimator", "auto")
    cells = int(opts.get("cells_per_dim", geometry.GRID_DEFAULT_CELLS))
    n_points = int(opts.get("n_points", geometry.MC_DEFAULT_POINTS))
    if ball_set.is_infinite:
        return math.inf
    if estimator == "grid" and ball_set.d > 1:
        return geometry.measure_grid(ball_set, cells_per_dim=cells)
    if estimator == "mc" and ball_set.d > 1:
        return geometry.measure_mc(ball_set, n_points=n_points, rng=rng)[0]
    return geometry.measure_auto(ball_set, cells_per_dim=cells, n_points=n_points, rng=rng)


def run_repetition(cfg: ExperimentConfig, dataset: LabeledDataset, rep: int):
    """One repetition: fresh split, fresh backbone fit, calibrate, evaluate."""
    from .predict import hdpcp_calibrate, pcp_calibrate

    split_seed = _derive_seed(cfg.split_seed, rep)
    ds = dataset.resplit(split_seed, cfg.split_fractions)
    backbone = fit_backbone(cfg, ds, seed=split_seed)
    base = cfg.pcp_config()
    config = PcpConfig(
        alpha=base.alpha,
        k_samples=base.k_samples,
        beta=base.beta,
        norm=base.norm,
        quantile_mode=base.quantile_mode,
        seed=_derive_seed(base.seed, rep),
        beta_fold=base.beta_fold,
    )
    x_test, y_test = ds.fold("test")
    if x_test.shape[0] == 0:
        raise DataError("test fold is empty")
    rng_pred = np.random.default_rng(_derive_seed(config.seed, 1))
    selected_beta = None
    radius = None
    sets = None

    if cfg.method in ("pcp", "hdpcp"):
        if cfg.method == "pcp":
            predictor = pcp_calibrate(backbone, ds, config)
        else:
            if not isinstance(config.beta, tuple) and config.beta == 0.0:
                config = PcpConfig(
                    alpha=config.alpha,
                    k_samples=config.k_samples,
                    beta=DEFAULT_BETA_GRID,
                    norm=config.norm,
                    quantile_mode=config.quantile_mode,
                    seed=config.seed,
                    beta_fold=config.beta_fold,
                )
            predictor = hdpcp_calibrate(backbone, ds, config)
        selected_beta = predictor.selected_beta
        radius = predictor.radius
        sets = predict_many(predictor, x_test, rng_pred)
        flags = np.array(
            [
                np.min(scores_from_arrays(y_test[i:i + 1], s.centers[None], config.norm))
                <= predictor.radius
                for i, s in enumerate(sets)
            ]
        )
        rng_meas = np.random.default_rng(_derive_seed(config.seed, 2))
        measures = np.array([_set_measure(s, cfg, rng_meas) for s in sets])
    elif cfg.method == "naive_interval":
        flags, measures = _naive_run(backbone, ds, config)
    else:
        flags, measures = _naive_run(
            backbone, ds, config, alpha_dim=bonferroni_level(config.alpha, ds.d)
        )

    finite = np.isfinite(measures)
    mean_size, stderr = (
        set_size_stats(measures[finite]) if np.any(finite) else (math.inf, 0.0)
    )
    try:
        cond = worst_slab_coverage(x_test, flags, cfg.wsc_config(split_seed))
    except DataError:
        cond = float("nan")
    report = CoverageReport(
        marginal_coverage=marginal_coverage(flags),
        conditional_coverage=cond,
        mean_set_size=mean_size,
        set_size_stderr=stderr,
        n_test=int(x_test.shape[0]),
        n_infinite=int(np.count_nonzero(~finite)),
    )
    extras = {
        "radius": radius,
        "selected_beta": selected_beta,
        "sets": sets,
        "test_x": x_test,
        "test_y": y_test,
        "flags": flags,
    }
    return report, extras


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        if math.isinf(v):
            return "inf"
        if math.isnan(v):
            return "nan"
        return repr(v)
    return str(v)


REPORT_COLUMNS = (
    "rep",
    "marginal_coverage",
    "conditional_coverage",
    "mean_set_size",
    "set_size_stderr",
    "n_test",
    "n_infinite",
    "radius",
    "selected_beta",
)


def _atomic_write(path: str, text: str):
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


def run_experiment(cfg: ExperimentConfig):
    """All repetitions plus the aggregate row; results written atomically."""
    os.makedirs(cfg.outdir, exist_ok=True)
    dataset = load_dataset(cfg)
    reports = []
    rows = []
    first_extras = None
    for rep in range(cfg.repetitions):
        report, extras = run_repetition(cfg, dataset, rep)
        reports.append(report)
        if rep == 0:
            first_extras = extras
        rows.append(
            {
                "rep": rep,
                **report.to_json_dict(),
                "mean_set_size": report.mean_set_size,
                "radius": extras["radius"],
                "selected_beta": extras["selected_beta"],
            }
        )

    _atomic_write(
        os.path.join(cfg.outdir, "config_echo.json"),
        json.dumps(cfg.to_json_dict(), indent=2, sort_keys=True) + "\n",
    )
    lines = [",".join(REPORT_COLUMNS)]
    for row in rows:
        lines.append(",".join(_fmt(row[c]) for c in REPORT_COLUMNS))
    _atomic_write(os.path.join(cfg.outdir, "reports.csv"), "\n".join(lines) + "\n")

    agg_metrics = (
        "marginal_coverage",
        "conditional_coverage",
        "mean_set_size",
        "set_size_stderr",
    )
    agg_lines = ["metric,mean,stderr"]
    for metric in agg_metrics:
        vals = np.array([float(r[metric]) for r in rows])
        ok = np.isfinite(vals)
        if np.any(ok):
            mean = float(vals[ok].mean())
            stderr = float(vals[ok].std(ddof=1) / math.sqrt(ok.sum())) if ok.sum() > 1 else 0.0
        else:
            mean, stderr = math.inf, 0.0
        agg_lines.append(f"{metric},{_fmt(float(mean))},{_fmt(float(stderr))}")
    _atomic_write(os.path.join(cfg.outdir, "aggregate.csv"), "\n".join(agg_lines) + "\n")

    if first_extras is not None and first_extras["sets"] is not None:
        sets_dir = os.path.join(cfg.outdir, "sets")
        os.makedirs(sets_dir, exist_ok=True)
        for i, s in enumerate(first_extras["sets"][:100]):
            _atomic_write(
                os.path.join(sets_dir, f"rep0_point{i:04d}.json"),
                json.dumps(s.to_json_dict(), sort_keys=True) + "\n",
            )
    if first_extras is not None:
        from .core import save_csv

        save_csv(
            os.path.join(cfg.outdir, "test_points.csv"),
            first_extras["test_x"],
            first_extras["test_y"],
        )
    return reports


# ---------------------------------------------------------------------------
# repeated coverage trials (fixed backbone, fresh calibration/test data)


def run_coverage_trials(
    backbone,
    population,
    n_trials: int,
    n_cal: int,
    n_test: int,
    config: PcpConfig,
    seed: int = 0,
    method: str = "pcp",
):
    """Pooled empirical coverage over repeated calibrate-then-test trials.

    The backbone stays fixed; each trial draws fresh calibration and test
    pairs from the population and recalibrates the radius.
    """
    if method not in ("pcp", "hdpcp"):
        raise ConfigurationError("coverage trials support pcp and hdpcp only")
    hits = 0
    total = 0
    per_trial = np.empty(n_trials)
    grid = None
    if method == "hdpcp":
        grid = BetaGrid(config.beta if isinstance(config.beta, tuple) else (config.beta,))
    for t in range(n_trials):
        rng = np.random.default_rng(np.random.SeedSequence((seed, t)))
        x_cal, y_cal = population.draw(n_cal, rng)
        x_test, y_test = population.draw(n_test, rng)
        k = config.k_samples
        if method == "pcp":
            cal_samples, _ = backbone.sample_many(x_cal, k, rng)
            test_samples, _ = backbone.sample_many(x_test, k, rng)
            cal_centers, test_centers = cal_samples, test_samples
        else:
            m_max = oversample_count(k, grid.max_beta)
            if config.beta_fold == "val":
                # independent selection draw keeps cal/test scores exchangeable
                x_sel, y_sel = population.draw(n_cal, rng)
                samples_max, dens_max = backbone.sample_many(x_sel, m_max, rng)
                totals, _ = _beta_objective(
                    x_sel, y_sel, samples_max, dens_max, grid, config, rng
                )
                beta0 = grid.values[int(np.argmin(totals))]
                m0 = oversample_count(k, beta0)
                c_samples, c_dens = backbone.sample_many(x_cal, m0, rng)
                cal_centers = filter_many(c_samples, c_dens, k)
            else:
                samples_max, dens_max = backbone.sample_many(x_cal, m_max, rng)
                totals, _ = _beta_objective(
                    x_cal, y_cal, samples_max, dens_max, grid, config, rng
                )
                beta0 = grid.values[int(np.argmin(totals))]
                m0 = oversample_count(k, beta0)
                cal_centers = filter_many(samples_max[:, :m0], dens_max[:, :m0], k)
            t_samples, t_dens = backbone.sample_many(x_test, m0, rng)
            test_centers = filter_many(t_samples, t_dens, k)
        scores = scores_from_arrays(y_cal, cal_centers, config.norm)
        mode = resolve_quantile_mode(config.quantile_mode, config.alpha, scores.size)
        radius = calibrated_radius(scores, config.alpha, mode)
        test_scores = scores_from_arrays(y_test, test_centers, config.norm)
        covered = test_scores <= radius
        hits += int(np.count_nonzero(covered))
        total += n_test
        per_trial[t] = covered.mean()
    return {"pooled_coverage": hits / total, "per_trial": per_trial}
