"""Statistical models for individual animal movement tracks.

Subpackages
-----------
trajectory
    Track ingestion, step lengths / turning angles, regular-grid helpers.
distributions
    Emission and error distributions.
hmm
    Discrete-time hidden Markov models over step/turn series.
ssm
    State-space models: Kalman, Laplace, particle filter, MCMC.
diffusion
    Brownian motion, Ornstein-Uhlenbeck, CTMC and switching diffusions, SDEs.
"""

__version__ = "0.1.0"

from .kernels import BACKEND  # noqa: E402

__all__ = ["BACKEND", "__version__"]
