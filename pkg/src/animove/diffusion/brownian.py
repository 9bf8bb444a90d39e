"""Brownian motion likelihood and Brownian bridges."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..trajectory import Trajectory

__all__ = ["BrownianSpec", "bm_log_likelihood", "brownian_bridge_marginal", "sample_bridge_path",
           "simulate_bm", "as_times_positions", "bm_variance_mle"]

LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class BrownianSpec:
    """Brownian motion with covariance rate ``cov`` (increment over dt is N(0, dt * cov))."""

    cov: np.ndarray

    def __post_init__(self):
        c = np.atleast_2d(np.asarray(self.cov, dtype=float))
        if c.shape[0] != c.shape[1] or not np.allclose(c, c.T):
            raise ValueError("covariance rate must be a symmetric matrix")
        if np.linalg.eigvalsh(c).min() < -1e-12:
            raise ValueError("covariance rate must be positive semi-definite")
        c.flags.writeable = False
        object.__setattr__(self, "cov", c)

    @classmethod
    def isotropic(cls, sigma2, d=1):
        return cls(float(sigma2) * np.eye(d))

    @property
    def dim(self):
        return self.cov.shape[0]

    def to_dict(self):
        return {"type": "brownian", "cov": self.cov.tolist()}


def as_times_positions(traj):
    """Accept a `Trajectory` (observed rows) or a ``(times, positions)`` pair."""
    if isinstance(traj, Trajectory):
        t, x = traj.observed()
    else:
        t, x = traj
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if t.shape[0] != x.shape[0]:
        raise ValueError("times and positions differ in length")
    return t, x


def bm_log_likelihood(spec: BrownianSpec, traj) -> float:
    """Sum of Gaussian log-densities of the increments, covariance ``dt * cov``."""
    t, x = as_times_positions(traj)
    if t.size < 2:
        raise ValueError("need at least two positions")
    dt = np.diff(t)
    if np.any(dt <= 0):
        raise ValueError("time steps must be positive")
    dx = np.diff(x, axis=0)
    d = x.shape[1]
    if d != spec.dim:
        raise ValueError(f"positions are {d}-dimensional, spec is {spec.dim}-dimensional")
    L = np.linalg.cholesky(spec.cov)
    logdet = 2.0 * np.log(np.diag(L)).sum()
    sol = np.linalg.solve(L, dx.T)
    quad = (sol ** 2).sum(axis=0) / dt
    return float(-0.5 * (dt.size * d * LOG_2PI + d * np.log(dt).sum() + dt.size * logdet + quad.sum()))


def bm_variance_mle(traj) -> float:
    """Closed-form MLE of an isotropic variance rate."""
    t, x = as_times_positions(traj)
    dt = np.diff(t)
    dx = np.diff(x, axis=0)
    return float(((dx ** 2).sum(axis=1) / dt).sum() / (dt.size * x.shape[1]))


def brownian_bridge_marginal(a, b, t1, t2, sigma2, t):
    """Mean and variance of a Brownian bridge from ``(t1, a)`` to ``(t2, b)`` at time ``t``.

    ``sigma2`` may be a scalar or a covariance-rate matrix.
    """
    if not t2 > t1:
        raise ValueError("t2 must exceed t1")
    if t < t1 or t > t2:
        raise ValueError(f"t={t} lies outside [{t1}, {t2}]")
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    frac = (t - t1) / (t2 - t1)
    mean = a + frac * (b - a)
    var = np.asarray(sigma2, dtype=float) * (t2 - t) * (t - t1) / (t2 - t1)
    return mean, var


def _draw(mean, var, rng):
    var = np.asarray(var, dtype=float)
    mean = np.asarray(mean, dtype=float)
    if var.ndim == 2:
        w, v = np.linalg.eigh(var)
        return mean + (v * np.sqrt(np.clip(w, 0, None))) @ rng.standard_normal(mean.shape)
    return mean + np.sqrt(max(float(var), 0.0)) * rng.standard_normal(mean.shape)


def sample_bridge_path(a, b, t1, t2, sigma2, query_times, rng):
    """Sample the bridge at ascending ``query_times`` sequentially.

    Each point is drawn from the bridge between the previously sampled point
    and the right endpoint, which reproduces the joint law of the bridge.
    """
    q = np.asarray(query_times, dtype=float).reshape(-1)
    a = np.atleast_1d(np.asarray(a, dtype=float))
    if q.size == 0:
        return np.zeros((0,) + a.shape)
    if np.any(np.diff(q) < 0):
        raise ValueError("query times must be ascending")
    if q[0] < t1 or q[-1] > t2:
        raise ValueError("query times must lie inside [t1, t2]")
    out = np.empty((q.size,) + a.shape)
    left_t, left_x = t1, a
    for k, tq in enumerate(q):
        if tq == left_t:
            out[k] = left_x
            continue
        mean, var = brownian_bridge_marginal(left_x, b, left_t, t2, sigma2, tq)
        out[k] = _draw(mean, var, rng)
        left_t, left_x = tq, out[k]
    return out


def simulate_bm(spec: BrownianSpec, times, x0, rng):
    """Brownian positions at ``times`` starting from ``x0`` at ``times[0]``."""
    times = np.asarray(times, dtype=float)
    d = spec.dim
    x = np.empty((times.size, d))
    x[0] = np.broadcast_to(np.asarray(x0, dtype=float), (d,))
    if times.size > 1:
        dt = np.diff(times)
        if np.any(dt <= 0):
            raise ValueError("times must be strictly increasing")
        w, v = np.linalg.eigh(spec.cov)
        L = v * np.sqrt(np.clip(w, 0, None))
        steps = rng.standard_normal((dt.size, d)) @ L.T * np.sqrt(dt)[:, None]
        x[1:] = x[0] + np.cumsum(steps, axis=0)
    return x
