"""Event-type-conditioned hidden Markov models for time-interval biometrics."""

from ._backend import BACKEND
from .emissions import EmissionParams, log_density, weighted_mle
from .estimation import FitConfig, FitReport, dof, em_step, fit, init_params, smooth
from .event_chain import EventAlphabet, EventChain, event_frequencies, fit_event_chain
from .gof import GofResult, area_statistic, marginal_cdf, marginal_density, monte_carlo_gof
from .model import (
    NumericalError,
    ObservationSequence,
    PohmmParams,
    PosteriorTables,
    backward,
    forward,
    forward_increments,
    load,
    marginalize,
    posteriors,
    predict_states,
    sample,
    save,
    sequence_loglik,
    to_marginal_hmm,
)

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "EmissionParams",
    "EventAlphabet",
    "EventChain",
    "FitConfig",
    "FitReport",
    "GofResult",
    "NumericalError",
    "ObservationSequence",
    "PohmmParams",
    "PosteriorTables",
    "area_statistic",
    "backward",
    "dof",
    "em_step",
    "event_frequencies",
    "fit",
    "fit_event_chain",
    "forward",
    "forward_increments",
    "init_params",
    "load",
    "log_density",
    "marginal_cdf",
    "marginal_density",
    "marginalize",
    "monte_carlo_gof",
    "posteriors",
    "predict_states",
    "sample",
    "save",
    "sequence_loglik",
    "smooth",
    "to_marginal_hmm",
    "weighted_mle",
]
