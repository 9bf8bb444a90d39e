"""Switching diffusions: movement parameters jump with a continuous-time behavior chain."""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .brownian import BrownianSpec, sample_bridge_path
from .ctmc import GeneratorMatrix, ctmc_stationary, ctmc_views, matrix_exponential
from .ou import GaussianMoments, OuParams, ou_conditional

__all__ = ["SwitchingPath", "propagate", "simulate_switching_diffusion", "simulate_switching_replicates",
           "infill_path", "occupancy_fractions", "expected_occupancy", "ou_bridge_moments"]


def propagate(model, x, dt, rng):
    """Advance a Brownian or OU-position model from ``x`` over ``dt``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if isinstance(model, BrownianSpec):
        w, v = np.linalg.eigh(model.cov * dt)
        return x + (v * np.sqrt(np.clip(w, 0, None))) @ rng.standard_normal(x.size)
    if isinstance(model, OuParams):
        return ou_conditional(model, x, dt).sample(rng)
    raise TypeError(f"unsupported movement model {type(model).__name__}")


@dataclass(frozen=True)
class SwitchingPath:
    """Event records ``(time, state, location)`` from ``(t0, s0, x0)`` to the terminal record at ``T``.

    ``states`` are 0-based; ``states[k]`` holds on ``[times[k], times[k+1])``.
    Locations are stored at switch times and at ``T`` only.
    """

    times: np.ndarray
    states: np.ndarray
    positions: np.ndarray
    models: tuple

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        s = np.asarray(self.states, dtype=int)
        x = np.asarray(self.positions, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if not (t.size == s.size == x.shape[0]) or t.size < 2:
            raise ValueError("a switching path needs matching times, states and positions (>= 2 records)")
        if np.any(np.diff(t) <= 0):
            raise ValueError("event times must be strictly increasing")
        if np.any(s[1:-1] == s[:-2]):
            raise ValueError("consecutive events must differ in state (except the terminal record)")
        if s[-1] != s[-2]:
            raise ValueError("terminal record must repeat the last state")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "states", s)
        object.__setattr__(self, "positions", x)
        object.__setattr__(self, "models", tuple(self.models))

    @property
    def n_switches(self):
        return self.times.size - 2

    @property
    def dim(self):
        return self.positions.shape[1]

    def state_at(self, t):
        k = np.searchsorted(self.times, t, side="right") - 1
        return self.states[np.clip(k, 0, self.states.size - 1)]

    def rows(self):
        """Rows ``(time, state, x[, y])`` with 1-based states."""
        return [[float(t), int(s) + 1] + [float(v) for v in x]
                for t, s, x in zip(self.times, self.states, self.positions)]

    def header(self):
        return ["time", "state"] + ["x", "y", "z"][: self.dim] if self.dim <= 3 else \
            ["time", "state"] + [f"x{i}" for i in range(self.dim)]

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.header())
            for r in self.rows():
                w.writerow([repr(v) if isinstance(v, float) else v for v in r])


def simulate_switching_diffusion(G: GeneratorMatrix, models, x0, s0: int, t0: float, T: float,
                                 rng) -> SwitchingPath:
    """Simulate a switching diffusion by exponential holding times and jumps.

    From state ``s`` a holding time ``t* ~ Exp(-g_ss)`` is drawn. While
    ``t + t* < T`` the movement model of ``s`` is propagated over ``t*``, the
    next state is drawn with probabilities ``g_sj / -g_ss`` and the switch is
    recorded. The last segment runs for ``T - t`` and its end is recorded.
    An absorbing state (``g_ss = 0``) produces a single terminal segment.
    """
    lam, Q = ctmc_views(G)
    n = G.n_states
    if len(models) != n:
        raise ValueError(f"need one movement model per state ({n}), got {len(models)}")
    if not T > t0:
        raise ValueError("T must exceed t0")
    if not 0 <= s0 < n:
        raise ValueError(f"initial state {s0} out of range")
    x = np.atleast_1d(np.asarray(x0, dtype=float))
    t, s = float(t0), int(s0)
    times, states, pos = [t], [s], [x]

    def holding(state):
        return rng.exponential(1.0 / lam[state]) if lam[state] > 0 else np.inf

    tstar = holding(s)
    while t + tstar < T:
        x = propagate(models[s], x, tstar, rng)
        s = int(rng.choice(n, p=Q[s]))
        t += tstar
        times.append(t)
        states.append(s)
        pos.append(x)
        tstar = holding(s)
    x = propagate(models[s], x, T - t, rng)
    times.append(float(T))
    states.append(s)
    pos.append(x)
    return SwitchingPath(np.array(times), np.array(states), np.array(pos), tuple(models))


def simulate_switching_replicates(G, models, x0, s0, t0, T, seed: int, n: int, workers: int = 1):
    """``n`` independent paths; replicate ``i`` uses ``default_rng([seed, i])``.

    ``s0="stationary"`` draws the initial state from the stationary law of ``G``
    with that replicate's generator.
    """
    pi = ctmc_stationary(G)

    def one(i):
        rng = np.random.default_rng([seed, i])
        start = int(rng.choice(G.n_states, p=pi)) if isinstance(s0, str) and s0 == "stationary" else int(s0)
        return simulate_switching_diffusion(G, models, x0, start, t0, T, rng)

    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            return list(ex.map(one, range(n)))
    return [one(i) for i in range(n)]


def occupancy_fractions(path: SwitchingPath, n_states: int) -> np.ndarray:
    """Fraction of ``[t0, T]`` spent in each state."""
    h = np.zeros(n_states)
    np.add.at(h, path.states[:-1], np.diff(path.times))
    return h / (path.times[-1] - path.times[0])


def expected_occupancy(G: GeneratorMatrix, s0: int, T: float) -> np.ndarray:
    """``(1/T) * integral_0^T e^{G t} dt`` row ``s0`` via an augmented matrix exponential."""
    n = G.n_states
    A = np.zeros((2 * n, 2 * n))
    A[:n, :n] = G.G
    A[:n, n:] = np.eye(n)
    integral = matrix_exponential(A, T)[:n, n:]
    return integral[s0] / T


def ou_bridge_moments(p: OuParams, x_left, t_left, x_right, t_right, t) -> GaussianMoments:
    """OU position at ``t`` conditioned on both endpoints."""
    if not t_left <= t <= t_right or t_right <= t_left:
        raise ValueError("t must lie inside [t_left, t_right] with t_right > t_left")
    prior = ou_conditional(p, x_left, t - t_left)
    E2 = p.expm(t_right - t)
    C2 = p.Lambda - E2 @ p.Lambda @ E2.T
    S = E2 @ prior.cov @ E2.T + C2
    K = np.linalg.solve(S, E2 @ prior.cov).T
    resid = np.atleast_1d(x_right) - (E2 @ prior.mean + p.mu - E2 @ p.mu)
    cov = prior.cov - K @ E2 @ prior.cov
    return GaussianMoments(prior.mean + K @ resid, 0.5 * (cov + cov.T))


def infill_path(path: SwitchingPath, query_times, rng):
    """Positions at ascending ``query_times`` inside ``[t0, T]``.

    Within each segment the position is drawn sequentially from the bridge of
    that segment's movement model (Brownian bridge or OU bridge), conditioned
    on the previous draw and the segment's right endpoint.
    Returns ``(positions, states)`` with 0-based states.
    """
    q = np.asarray(query_times, dtype=float).reshape(-1)
    if np.any(np.diff(q) < 0):
        raise ValueError("query times must be ascending")
    if q.size and (q[0] < path.times[0] or q[-1] > path.times[-1]):
        raise ValueError("query times must lie inside the path's time span")
    out = np.empty((q.size, path.dim))
    seg = np.clip(np.searchsorted(path.times, q, side="right") - 1, 0, path.times.size - 2)
    for k in np.unique(seg):
        idx = np.nonzero(seg == k)[0]
        t1, t2 = path.times[k], path.times[k + 1]
        a, b = path.positions[k], path.positions[k + 1]
        model = path.models[path.states[k]]
        if isinstance(model, BrownianSpec):
            out[idx] = sample_bridge_path(a, b, t1, t2, model.cov, q[idx], rng)
            continue
        left_t, left_x = t1, a
        for i in idx:
            if q[i] == left_t:
                out[i] = left_x
            elif q[i] == t2:
                out[i] = b
            else:
                out[i] = ou_bridge_moments(model, left_x, left_t, b, t2, q[i]).sample(rng)
            left_t, left_x = q[i], out[i]
    return out, path.states[seg]
