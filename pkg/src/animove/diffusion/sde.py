"""Euler (normal) approximation for general movement SDEs ``dX = A(t, X) dt + B(t, X) dW``."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .brownian import as_times_positions

__all__ = ["SdeSpec", "euler_transition", "euler_simulate", "euler_log_likelihood", "numeric_gradient"]

LOG_2PI = math.log(2.0 * math.pi)


def numeric_gradient(f, x, h=1e-6):
    """Central-difference gradient of a scalar function."""
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for i in range(x.size):
        step = h * (1.0 + abs(x[i]))
        e = np.zeros_like(x)
        e[i] = step
        g[i] = (f(x + e) - f(x - e)) / (2.0 * step)
    return g


@dataclass(frozen=True)
class SdeSpec:
    """Drift ``A(t, x)`` (d-vector) and diffusion coefficient ``B(t, x)`` (d x m matrix)."""

    drift: Callable
    diffusion: Callable
    potential: Optional[Callable] = None

    @classmethod
    def from_potential(cls, potential, diffusion, gradient=None):
        """Drift equal to minus the gradient of ``potential(x)``.

        ``gradient`` may supply the analytic gradient; otherwise a central
        finite difference is used. ``diffusion`` is a callable ``B(t, x)`` or a
        constant matrix/scalar.
        """
        if not callable(diffusion):
            const = np.atleast_2d(np.asarray(diffusion, dtype=float))

            def diffusion(t, x, _c=const):
                return _c if _c.shape != (1, 1) else _c[0, 0] * np.eye(np.size(x))

        if gradient is None:
            def drift(t, x):
                return -numeric_gradient(potential, x)
        else:
            def drift(t, x):
                return -np.asarray(gradient(x), dtype=float)

        return cls(drift, diffusion, potential)

    @classmethod
    def constant(cls, drift_vector, diffusion_matrix):
        a = np.atleast_1d(np.asarray(drift_vector, dtype=float))
        b = np.atleast_2d(np.asarray(diffusion_matrix, dtype=float))
        return cls(lambda t, x: a, lambda t, x: b)


def euler_transition(spec: SdeSpec, t, x, dt):
    """Mean ``x + A dt`` and covariance ``B B' dt`` of one Euler step."""
    if dt <= 0:
        raise ValueError("time step must be positive")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    a = np.atleast_1d(np.asarray(spec.drift(t, x), dtype=float))
    b = np.atleast_2d(np.asarray(spec.diffusion(t, x), dtype=float))
    return x + a * dt, (b @ b.T) * dt


def euler_simulate(spec: SdeSpec, x0, times, rng):
    """Euler-Maruyama path on the grid ``times`` starting at ``x0``."""
    times = np.asarray(times, dtype=float)
    x = np.atleast_1d(np.asarray(x0, dtype=float))
    out = np.empty((times.size, x.size))
    out[0] = x
    for k in range(1, times.size):
        dt = times[k] - times[k - 1]
        if dt <= 0:
            raise ValueError("time grid must be strictly increasing")
        a = np.atleast_1d(np.asarray(spec.drift(times[k - 1], x), dtype=float))
        b = np.atleast_2d(np.asarray(spec.diffusion(times[k - 1], x), dtype=float))
        x = x + a * dt + math.sqrt(dt) * (b @ rng.standard_normal(b.shape[1]))
        out[k] = x
    return out


def euler_log_likelihood(spec: SdeSpec, traj) -> float:
    """Sum over observed increments of the Euler Gaussian log-density."""
    t, x = as_times_positions(traj)
    if t.size < 2:
        raise ValueError("need at least two positions")
    total = 0.0
    d = x.shape[1]
    for k in range(t.size - 1):
        mean, cov = euler_transition(spec, t[k], x[k], t[k + 1] - t[k])
        L = np.linalg.cholesky(cov)
        sol = np.linalg.solve(L, x[k + 1] - mean)
        total += -0.5 * (d * LOG_2PI + 2.0 * np.log(np.diag(L)).sum() + sol @ sol)
    return float(total)
