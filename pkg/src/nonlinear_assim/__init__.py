"""Bayesian filtering (UKF, EnKF, UPF) for small stochastic climate models."""

__version__ = "0.1.0"

from .core import (
    GaussianBelief,
    ModelDims,
    NoiseSpec,
    ObservationSelector,
    RngStream,
    StateSpaceModel,
    TimeSeries,
    cholesky_psd,
)
from .climate_models import (
    Coupled2DParams,
    EBMParams,
    make_coupled_model,
    make_ebm_model,
    simulate_ensemble,
)
from .filters import FilterResult, enkf_run, initial_belief, ukf_run, upf_run
from .resampling import ResamplingKind
from .unscented import UTParams

__all__ = [
    "__version__",
    "GaussianBelief",
    "ModelDims",
    "NoiseSpec",
    "ObservationSelector",
    "RngStream",
    "StateSpaceModel",
    "TimeSeries",
    "cholesky_psd",
    "Coupled2DParams",
    "EBMParams",
    "make_coupled_model",
    "make_ebm_model",
    "simulate_ensemble",
    "FilterResult",
    "enkf_run",
    "initial_belief",
    "ukf_run",
    "upf_run",
    "ResamplingKind",
    "UTParams",
]
