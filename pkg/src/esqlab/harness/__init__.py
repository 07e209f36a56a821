"""Experiment orchestration: configuration, replicas, estimators, reports."""

from .config import ConfigError, ExperimentConfig, Observable, dump_config, load_config, parse_config
from .experiments import (
    DecorrelationReport,
    DensityRouteReport,
    ExcessiveFailureError,
    ReductionReport,
    TrendReport,
    WeightedSample,
    boundary_covariance_exact,
    run_cutoff_removal_trend,
    run_decorrelation_probe,
    run_density_route_check,
    run_reduction_experiment,
    run_replicas,
)
from .stats import RatioEstimate, weighted_ratio

__all__ = [
    "ConfigError",
    "DecorrelationReport",
    "DensityRouteReport",
    "ExcessiveFailureError",
    "ExperimentConfig",
    "Observable",
    "RatioEstimate",
    "ReductionReport",
    "TrendReport",
    "WeightedSample",
    "boundary_covariance_exact",
    "dump_config",
    "load_config",
    "parse_config",
    "run_cutoff_removal_trend",
    "run_decorrelation_probe",
    "run_density_route_check",
    "run_reduction_experiment",
    "run_replicas",
    "weighted_ratio",
]
