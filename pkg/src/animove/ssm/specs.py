"""State-space model specifications.

Time index 0 is the first latent state; ``init_mean``/``init_cov`` are the
prior of ``z_0`` (no prediction step precedes it). Observation sequences are
``(T, m)`` arrays in which a row containing NaN is treated as missing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = ["LinearGaussianSsmSpec", "HeavyTailSsmSpec", "GenericSsmSpec", "observation_mask",
           "simulate_linear_gaussian", "simulate_heavy_tail", "psd_sqrt"]


def _psd(name, a, tol=1e-12):
    a = np.atleast_2d(np.asarray(a, dtype=float))
    if a.shape[0] != a.shape[1] or not np.allclose(a, a.T, atol=1e-12):
        raise ValueError(f"{name} must be a symmetric square matrix")
    ev = np.linalg.eigvalsh(a)
    if ev.min() < -tol * max(1.0, abs(ev.max())):
        raise ValueError(f"{name} is not positive semi-definite (min eigenvalue {ev.min():.3g})")
    return a


def _frozen(a):
    a = np.array(a, dtype=float)
    a.flags.writeable = False
    return a


def observation_mask(obs, mask=None):
    """Return ``(obs as (T, m) float array, observed flags)``."""
    y = np.asarray(obs, dtype=float)
    if y.ndim == 1:
        y = y[:, None]
    observed = ~np.isnan(y).any(axis=1)
    if mask is not None:
        observed &= ~np.asarray(mask, dtype=bool)
    return y, observed


@dataclass(frozen=True)
class LinearGaussianSsmSpec:
    """``z_t = F z_{t-1} + c + eta_t``, ``y_t = H z_t + eps_t`` with Gaussian noise."""

    transition: np.ndarray
    offset: np.ndarray
    proc_cov: np.ndarray
    obs_matrix: np.ndarray
    obs_cov: np.ndarray
    init_mean: np.ndarray
    init_cov: np.ndarray

    def __post_init__(self):
        F = np.atleast_2d(np.asarray(self.transition, dtype=float))
        d = F.shape[0]
        if F.shape != (d, d):
            raise ValueError("transition matrix must be square")
        H = np.atleast_2d(np.asarray(self.obs_matrix, dtype=float))
        if H.shape[1] != d:
            raise ValueError("observation matrix columns must match the state dimension")
        m = H.shape[0]
        Q, R, P0 = _psd("proc_cov", self.proc_cov), _psd("obs_cov", self.obs_cov), _psd("init_cov", self.init_cov)
        c = np.asarray(self.offset, dtype=float).reshape(-1)
        m0 = np.asarray(self.init_mean, dtype=float).reshape(-1)
        if Q.shape != (d, d) or P0.shape != (d, d) or R.shape != (m, m) or c.size != d or m0.size != d:
            raise ValueError("inconsistent dimensions in linear-Gaussian spec")
        for name, v in (("transition", F), ("offset", c), ("proc_cov", Q), ("obs_matrix", H),
                        ("obs_cov", R), ("init_mean", m0), ("init_cov", P0)):
            object.__setattr__(self, name, _frozen(v))

    @property
    def dim(self):
        return self.transition.shape[0]

    @property
    def obs_dim(self):
        return self.obs_matrix.shape[0]

    @classmethod
    def random_walk(cls, d=1, sigma_z=1.0, sigma_y=1.0, init_mean=None, init_var=None):
        """Isotropic random walk observed with isotropic Gaussian error.

        The prior of ``z_0`` defaults to ``N(0, sigma_z**2 I)``.
        """
        eye = np.eye(d)
        m0 = np.zeros(d) if init_mean is None else init_mean
        p0 = sigma_z ** 2 if init_var is None else init_var
        return cls(eye, np.zeros(d), sigma_z ** 2 * eye, eye, sigma_y ** 2 * eye, m0, p0 * eye)

    def to_dict(self):
        return {k: np.asarray(getattr(self, k)).tolist() for k in
                ("transition", "offset", "proc_cov", "obs_matrix", "obs_cov", "init_mean", "init_cov")}

    @classmethod
    def from_dict(cls, obj):
        return cls(**obj)


@dataclass(frozen=True)
class HeavyTailSsmSpec:
    """Linear-Gaussian process with independent Student-t observation errors.

    Each observed coordinate has error ``obs_scale * t_df``. ``df = inf``
    selects the exact Gaussian branch with variance ``obs_scale**2``. The
    ``obs_cov`` of ``core`` is ignored.
    """

    core: LinearGaussianSsmSpec
    df: float
    obs_scale: float

    def __post_init__(self):
        if not (self.df > 0):
            raise ValueError("df must be > 0")
        if not (self.obs_scale > 0 and math.isfinite(self.obs_scale)):
            raise ValueError("obs_scale must be positive")

    @property
    def dim(self):
        return self.core.dim

    @property
    def gaussian(self):
        return math.isinf(self.df)

    @classmethod
    def random_walk(cls, d=1, sigma_z=1.0, sigma_y=1.0, df=5.0, init_mean=None, init_var=None):
        core = LinearGaussianSsmSpec.random_walk(d, sigma_z, sigma_y, init_mean, init_var)
        return cls(core, float(df), float(sigma_y))

    def with_params(self, sigma_z, sigma_y, df):
        """Isotropic copy with new ``(sigma_z, sigma_y, df)``; the prior of ``z_0`` is kept."""
        c = self.core
        core = LinearGaussianSsmSpec(c.transition, c.offset, sigma_z ** 2 * np.eye(c.dim), c.obs_matrix,
                                     sigma_y ** 2 * np.eye(c.obs_dim), c.init_mean, c.init_cov)
        return HeavyTailSsmSpec(core, float(df), float(sigma_y))

    def to_dict(self):
        return {"core": self.core.to_dict(), "df": self.df, "obs_scale": self.obs_scale}


@dataclass(frozen=True)
class GenericSsmSpec:
    """Simulation-defined state-space model for the bootstrap particle filter.

    ``init_sampler(rng, n)`` returns an ``(n, ...)`` array of initial
    particles, ``transition_sampler(particles, t, rng)`` propagates them into
    time ``t`` and ``obs_logpdf(y_t, particles, t)`` returns an ``(n,)`` array
    of observation log-densities. Particles may carry a discrete behavior
    component; ``state_index`` extracts it as integer labels (used for
    filtered state probabilities) and ``n_behaviors`` gives the count.
    """

    init_sampler: Callable
    transition_sampler: Callable
    obs_logpdf: Callable
    state_index: Callable | None = None
    n_behaviors: int = 0
    gamma: np.ndarray | None = None


def psd_sqrt(a):
    """Matrix ``L`` with ``L @ L.T == a`` for a symmetric PSD ``a`` (singular allowed)."""
    w, v = np.linalg.eigh(np.asarray(a, dtype=float))
    return v * np.sqrt(np.clip(w, 0.0, None))


def simulate_linear_gaussian(spec: LinearGaussianSsmSpec, T, rng):
    """Return ``(states, observations)`` of length ``T``."""
    d, m = spec.dim, spec.obs_dim
    z = np.empty((T, d))
    lq, lr, lp = psd_sqrt(spec.proc_cov), psd_sqrt(spec.obs_cov), psd_sqrt(spec.init_cov)
    z[0] = spec.init_mean + lp @ rng.standard_normal(d)
    for t in range(1, T):
        z[t] = spec.transition @ z[t - 1] + spec.offset + lq @ rng.standard_normal(d)
    y = z @ spec.obs_matrix.T + rng.standard_normal((T, m)) @ lr.T
    return z, y


def simulate_heavy_tail(spec: HeavyTailSsmSpec, T, rng, missing_frac=0.0):
    """Return ``(states, observations)``; a ``missing_frac`` share of rows is set to NaN."""
    core = spec.core
    z, _ = simulate_linear_gaussian(LinearGaussianSsmSpec(core.transition, core.offset, core.proc_cov,
                                                          core.obs_matrix, np.zeros((core.obs_dim,) * 2),
                                                          core.init_mean, core.init_cov), T, rng)
    mean = z @ core.obs_matrix.T
    if spec.gaussian:
        err = rng.standard_normal(mean.shape)
    else:
        err = rng.standard_t(spec.df, mean.shape)
    y = mean + spec.obs_scale * err
    if missing_frac > 0:
        n_miss = int(round(missing_frac * T))
        y[rng.choice(T, n_miss, replace=False)] = np.nan
    return z, y
