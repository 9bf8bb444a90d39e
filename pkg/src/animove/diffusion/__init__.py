"""Continuous-time movement models: Brownian motion, OU processes, CTMCs, switching diffusions, Euler SDEs."""

from .brownian import (BrownianSpec, as_times_positions, bm_log_likelihood, bm_variance_mle,
                       brownian_bridge_marginal, sample_bridge_path, simulate_bm)
from .ctmc import (CtmcSufficientStats, GeneratorMatrix, bundled_generator_path, ctmc_log_likelihood,
                   ctmc_mle, ctmc_stationary, ctmc_views, load_generator, matrix_exponential,
                   stats_from_path, transition_probabilities)
from .ou import (GaussianMoments, OuFit, OuParams, fit_ou_isotropic, integrated_ou_transition,
                 ou_conditional, ou_equilibrium, ou_log_likelihood, phi, simulate_integrated_ou, simulate_ou)
from .sde import SdeSpec, euler_log_likelihood, euler_simulate, euler_transition, numeric_gradient
from .switching import (SwitchingPath, expected_occupancy, infill_path, occupancy_fractions,
                        ou_bridge_moments, propagate, simulate_switching_diffusion,
                        simulate_switching_replicates)

__all__ = [
    "BrownianSpec", "as_times_positions", "bm_log_likelihood", "bm_variance_mle",
    "brownian_bridge_marginal", "sample_bridge_path", "simulate_bm",
    "CtmcSufficientStats", "GeneratorMatrix", "bundled_generator_path", "ctmc_log_likelihood",
    "ctmc_mle", "ctmc_stationary", "ctmc_views", "load_generator", "matrix_exponential",
    "stats_from_path", "transition_probabilities",
    "GaussianMoments", "OuFit", "OuParams", "fit_ou_isotropic", "integrated_ou_transition",
    "ou_conditional", "ou_equilibrium", "ou_log_likelihood", "phi", "simulate_integrated_ou", "simulate_ou",
    "SdeSpec", "euler_log_likelihood", "euler_simulate", "euler_transition", "numeric_gradient",
    "SwitchingPath", "expected_occupancy", "infill_path", "occupancy_fractions", "ou_bridge_moments",
    "propagate", "simulate_switching_diffusion", "simulate_switching_replicates",
]
