"""Sample-based conformal prediction: ball-union predictive sets around
generated samples, with exact finite-sample coverage calibration."""

from .core import (
    BallUnionSet,
    CalibratedPredictor,
    CapabilityError,
    ConfigurationError,
    CoverageReport,
    DataError,
    DimensionError,
    LabeledDataset,
    LabeledPoint,
    NormKind,
    PcpConfig,
    QuantileMode,
    SampleBatch,
    Splits,
    from_arrays,
    load_csv,
    make_splits,
    save_csv,
)
from .calibrate import (
    ScoreVector,
    calibrated_radius,
    compute_scores,
    empirical_quantile,
    resolve_quantile_mode,
    score,
)
from .predict import (
    BetaGrid,
    hdpcp_calibrate,
    hdpcp_filter,
    hdpcp_select_beta,
    oversample_count,
    pcp_calibrate,
    pcp_predict,
    predict_many,
)
from .geometry import contains, contains_many, measure_auto, measure_grid, measure_mc, measure_1d
from .evaluation import WscConfig, marginal_coverage, set_size_stats, worst_slab_coverage
from .backbones import (
    Backbone,
    BridgeBackbone,
    BridgeProtocolError,
    GmmBackbone,
    KnnResampler,
)
from .synth import SynthSpec, generate
from .experiment import ExperimentConfig, run_experiment

__version__ = "0.1.0"

__all__ = [
    "BallUnionSet",
    "Backbone",
    "BetaGrid",
    "BridgeBackbone",
    "BridgeProtocolError",
    "CalibratedPredictor",
    "CapabilityError",
    "ConfigurationError",
    "CoverageReport",
    "DataError",
    "DimensionError",
    "ExperimentConfig",
    "GmmBackbone",
    "KnnResampler",
    "LabeledDataset",
    "LabeledPoint",
    "NormKind",
    "PcpConfig",
    "QuantileMode",
    "SampleBatch",
    "ScoreVector",
    "Splits",
    "SynthSpec",
    "WscConfig",
    "calibrated_radius",
    "compute_scores",
    "contains",
    "contains_many",
    "empirical_quantile",
    "from_arrays",
    "generate",
    "hdpcp_calibrate",
    "hdpcp_filter",
    "hdpcp_select_beta",
    "load_csv",
    "make_splits",
    "marginal_coverage",
    "measure_1d",
    "measure_auto",
    "measure_grid",
    "measure_mc",
    "oversample_count",
    "pcp_calibrate",
    "pcp_predict",
    "predict_many",
    "resolve_quantile_mode",
    "run_experiment",
    "save_csv",
    "score",
    "set_size_stats",
    "worst_slab_coverage",
]
