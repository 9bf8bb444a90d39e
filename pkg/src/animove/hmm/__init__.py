"""Discrete-time hidden Markov models over step-length / turning-angle series."""

from .fitting import OptimizerSettings, central_gradient, fit_mle
from .inference import (BRUTEFORCE_LIMIT, PseudoResiduals, emission_log_matrix,
                        log_likelihood_bruteforce, log_likelihood_forward, pseudo_residuals,
                        state_probabilities, transition_matrix_at, viterbi)
from .model import FittedHmm, HmmSpec, TransitionModel, stationary_distribution
from .selection import SelectionReport, SelectionStep, select_covariates_forward
from .simulate import simulate_hmm

__all__ = [
    "TransitionModel", "HmmSpec", "FittedHmm", "stationary_distribution",
    "transition_matrix_at", "emission_log_matrix", "log_likelihood_forward",
    "log_likelihood_bruteforce", "viterbi", "state_probabilities", "pseudo_residuals",
    "PseudoResiduals", "BRUTEFORCE_LIMIT", "OptimizerSettings", "fit_mle", "central_gradient",
    "simulate_hmm", "select_covariates_forward", "SelectionReport", "SelectionStep",
]
