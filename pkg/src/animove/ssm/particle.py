"""Bootstrap particle filter."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .specs import GenericSsmSpec, LinearGaussianSsmSpec, psd_sqrt

__all__ = ["ParticleSet", "ParticleFilterResult", "ParticleDegeneracyError",
           "bootstrap_particle_filter", "linear_gaussian_as_generic", "hmm_as_generic_ssm"]


class ParticleDegeneracyError(RuntimeError):
    """All particle weights vanished at ``step``."""

    def __init__(self, step):
        super().__init__(f"all particle weights are zero at step {step}")
        self.step = step


@dataclass(frozen=True)
class ParticleSet:
    particles: np.ndarray
    weights: np.ndarray
    ess: float
    log_increment: float


@dataclass(frozen=True)
class ParticleFilterResult:
    log_evidence: float
    log_increments: np.ndarray
    ess: np.ndarray
    filtered_means: np.ndarray | None
    state_probs: np.ndarray | None
    final: ParticleSet

    def to_rows(self):
        """Rows ``(t, mean..., ess, loglik_increment)`` for CSV export."""
        T = self.log_increments.size
        rows = []
        for t in range(T):
            mean = [] if self.filtered_means is None else list(np.atleast_1d(self.filtered_means[t]))
            rows.append([t] + mean + [float(self.ess[t]), float(self.log_increments[t])])
        return rows


def _resample(w, rng, method):
    n = w.size
    if method == "multinomial":
        return rng.choice(n, size=n, replace=True, p=w)
    if method == "systematic":
        pos = (rng.random() + np.arange(n)) / n
        idx = np.searchsorted(np.cumsum(w), pos, side="right")
        return np.minimum(idx, n - 1)
    raise ValueError(f"unknown resampling method {method!r}")


def bootstrap_particle_filter(spec: GenericSsmSpec, obs, n: int, rng, *,
                              resampling: str = "multinomial") -> ParticleFilterResult:
    """Propagate, weight by the observation density, resample; every step.

    ``obs`` is a sequence indexed by time (rows containing NaN are missing and
    skip weighting and resampling). The incremental log-evidence at an
    observed step is the log of the mean unnormalized weight.
    """
    if n < 2:
        raise ValueError("need at least 2 particles")
    obs = np.asarray(obs, dtype=float)
    if obs.ndim == 1:
        obs = obs[:, None]
    T = obs.shape[0]
    inc = np.zeros(T)
    ess = np.full(T, float(n))
    means = None
    probs = np.zeros((T, spec.n_behaviors)) if spec.state_index is not None else None
    x = None
    w = np.full(n, 1.0 / n)
    for t in range(T):
        x = spec.init_sampler(rng, n) if t == 0 else spec.transition_sampler(x, t, rng)
        w = np.full(n, 1.0 / n)
        if not np.isnan(obs[t]).any():
            lw = np.asarray(spec.obs_logpdf(obs[t], x, t), dtype=float)
            m = lw.max()
            if not np.isfinite(m):
                raise ParticleDegeneracyError(t)
            u = np.exp(lw - m)
            s = u.sum()
            inc[t] = m + math.log(s / n)
            w = u / s
            ess[t] = 1.0 / float(w @ w)
        if means is None and np.issubdtype(np.asarray(x).dtype, np.floating):
            means = np.zeros((T,) + np.asarray(x).shape[1:])
        if means is not None:
            means[t] = np.tensordot(w, x, axes=1)
        if probs is not None:
            probs[t] = np.bincount(spec.state_index(x), weights=w, minlength=spec.n_behaviors)
        # the final weighted set is returned as is
        if t < T - 1 and not np.isnan(obs[t]).any():
            x = x[_resample(w, rng, resampling)]
    final = ParticleSet(x, w, float(ess[-1]), float(inc[-1]))
    return ParticleFilterResult(float(math.fsum(inc)), inc, ess, means, probs, final)


def linear_gaussian_as_generic(spec: LinearGaussianSsmSpec) -> GenericSsmSpec:
    """Express a linear-Gaussian model through samplers and an observation density."""
    F, c, H = spec.transition, spec.offset, spec.obs_matrix
    lq, lp = psd_sqrt(spec.proc_cov), psd_sqrt(spec.init_cov)
    R = spec.obs_cov
    Ri = np.linalg.inv(R)
    _, ld = np.linalg.slogdet(R)
    const = -0.5 * (R.shape[0] * math.log(2 * math.pi) + ld)
    d = spec.dim

    def init(rng, n):
        return spec.init_mean + rng.standard_normal((n, d)) @ lp.T

    def step(x, t, rng):
        return x @ F.T + c + rng.standard_normal(x.shape) @ lq.T

    def logpdf(y, x, t):
        r = y - x @ H.T
        return const - 0.5 * np.einsum("ni,ij,nj->n", r, Ri, r)

    return GenericSsmSpec(init, step, logpdf)


def hmm_as_generic_ssm(spec, series, covs=None) -> GenericSsmSpec:
    """A step/turn HMM written as a particle model whose particles are state labels.

    Observations passed to the filter should be the time index array
    ``np.arange(T)``; the observation density looks up the emission of the
    series at that index (invalid entries contribute 0).
    """
    from ..hmm.inference import _chain, _tracks, emission_log_matrix

    (s, x), = _tracks(spec, series, None if covs is None else [covs])
    delta, gammas = _chain(spec, x)
    le = emission_log_matrix(spec, s)
    cum = np.cumsum(gammas, axis=2)
    n_states = spec.n_states

    def init(rng, n):
        return np.minimum(np.searchsorted(np.cumsum(delta), rng.random(n) * delta.sum(), side="right"),
                          n_states - 1)

    def step(states, t, rng):
        rows = cum[0 if cum.shape[0] == 1 else t - 1][states]
        u = rng.random(states.size)[:, None] * rows[:, -1:]
        return np.minimum((rows <= u).sum(axis=1), n_states - 1)

    def logpdf(y, states, t):
        return le[int(y[0]), states]

    return GenericSsmSpec(init, step, logpdf, state_index=lambda st: st, n_behaviors=n_states,
                          gamma=gammas[0])
