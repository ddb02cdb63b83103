"""Horizon-free popularity forecasts from self-excited point-process models."""

from .hawkes_core import (
    INF,
    Cascade,
    DomainError,
    HawkesExpParams,
    PowerLawKernelParams,
    conditional_variance_exp,
    count_bounds,
    expected_count_exp,
    residual_mass,
)
from .simulation import SimConfig, make_rng, simulate, simulate_batch
from .estimators import VelocityTracker, alpha_mean, alpha_quantile
from .features import DAY, HOUR, FeatureSchema, ItemState, extract_features
from .forecaster import (
    ForecastModel,
    build_training_set,
    fit,
    predict_arithmetic,
    predict_geometric,
    predict_single,
    relative_growth_decision,
)

__all__ = [
    "INF", "Cascade", "DomainError", "HawkesExpParams", "PowerLawKernelParams",
    "conditional_variance_exp", "count_bounds", "expected_count_exp", "residual_mass",
    "SimConfig", "make_rng", "simulate", "simulate_batch",
    "VelocityTracker", "alpha_mean", "alpha_quantile",
    "DAY", "HOUR", "FeatureSchema", "ItemState", "extract_features",
    "ForecastModel", "build_training_set", "fit", "predict_arithmetic", "predict_geometric",
    "predict_single", "relative_growth_decision",
]

__version__ = "0.1.0"
