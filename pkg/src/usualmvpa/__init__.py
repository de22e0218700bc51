"""Bout detection, a Bayesian two-part measurement-error model for daily MVPA
bouts, and usual-activity guideline compliance."""

__version__ = "0.1.0"

from .bouts import BoutDetector, DayObservation, detect_bouts, find_bouts
from .ingest import DesignEncoder, MinuteSeries, build_design, load_covariates, load_minutes
from .mcmc import (
    PRIOR_PRESETS,
    ChainConfig,
    NumericError,
    PanelData,
    ParamState,
    PosteriorDraws,
    PriorConfig,
    run_chains,
)
from .model import TwoPartBoutModel

__all__ = [
    "BoutDetector", "ChainConfig", "DayObservation", "DesignEncoder", "MinuteSeries",
    "NumericError", "PRIOR_PRESETS", "PanelData", "ParamState", "PosteriorDraws", "PriorConfig",
    "TwoPartBoutModel", "build_design", "detect_bouts", "find_bouts", "load_covariates",
    "load_minutes", "run_chains",
]
