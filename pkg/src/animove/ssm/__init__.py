"""State-space models with measurement error and their inference back-ends."""

from .diagnostics import effective_sample_size, split_rhat
from .kalman import KalmanResult, SmootherResult, kalman_filter, kalman_smoother
from .laplace import (LaplaceDivergenceError, LaplaceFit, LaplaceResult, fit_laplace,
                      joint_log_density, laplace_marginal)
from .mcmc import (McmcResult, SwitchingRwSpec, gibbs_state_update, mcmc_ssm, mh_location_update,
                   switching_rw_loglik)
from .particle import (ParticleDegeneracyError, ParticleFilterResult, ParticleSet,
                       bootstrap_particle_filter, hmm_as_generic_ssm, linear_gaussian_as_generic)
from .specs import (GenericSsmSpec, HeavyTailSsmSpec, LinearGaussianSsmSpec, observation_mask,
                    psd_sqrt, simulate_heavy_tail, simulate_linear_gaussian)

__all__ = [
    "LinearGaussianSsmSpec", "HeavyTailSsmSpec", "GenericSsmSpec", "observation_mask", "psd_sqrt",
    "simulate_linear_gaussian", "simulate_heavy_tail",
    "KalmanResult", "SmootherResult", "kalman_filter", "kalman_smoother",
    "LaplaceResult", "LaplaceFit", "LaplaceDivergenceError", "laplace_marginal", "joint_log_density",
    "fit_laplace",
    "ParticleSet", "ParticleFilterResult", "ParticleDegeneracyError", "bootstrap_particle_filter",
    "linear_gaussian_as_generic", "hmm_as_generic_ssm",
    "SwitchingRwSpec", "McmcResult", "gibbs_state_update", "mh_location_update", "mcmc_ssm",
    "switching_rw_loglik", "effective_sample_size", "split_rhat",
]
