"""Experiment configuration, drivers, fitting and result persistence."""
from .config import KINDS, ConfigError, ExperimentConfig, load_config, parse_config
from .experiments import EXPERIMENTS, StageError, run
from .fitting import SlopeFit, fit_loglog_slope, slope_fit
from .results import ResultTable, Row

__all__ = ["KINDS", "ConfigError", "ExperimentConfig", "load_config", "parse_config", "EXPERIMENTS",
           "StageError", "run", "SlopeFit", "fit_loglog_slope", "slope_fit", "ResultTable", "Row"]
