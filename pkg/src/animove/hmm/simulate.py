"""Simulation from a step/turn HMM."""

from __future__ import annotations

import numpy as np

from ..trajectory import StepTurnSeries
from .model import HmmSpec

__all__ = ["simulate_hmm"]


def simulate_hmm(spec: HmmSpec, T: int, covs=None, rng=None, initial_state=None,
                 covariate_names=None):
    """Draw ``(states, series)`` of length ``T``.

    The first state comes from the model's initial distribution unless
    ``initial_state`` (0-based) is given. ``covs`` is a ``(T, p)`` array whose
    columns follow ``spec.covariate_names``; it is attached to the returned
    series.
    """
    if T < 1:
        raise ValueError("T must be >= 1")
    rng = np.random.default_rng() if rng is None else rng
    tm = spec.transition
    n, p = spec.n_states, tm.n_covariates
    if p:
        if covs is None:
            raise ValueError("covariates required for a covariate-dependent model")
        covs = np.asarray(covs, dtype=float).reshape(T, p)
        gammas = tm.matrices(covs)
        delta = tm.initial_distribution()
    else:
        gammas = tm.matrices()
        delta = tm.initial_distribution(gammas[0])
    cum = np.cumsum(gammas, axis=2)
    u = rng.random(T)
    states = np.empty(T, dtype=np.int64)
    states[0] = initial_state if initial_state is not None else min(
        int(np.searchsorted(np.cumsum(delta), u[0] * delta.sum(), side="right")), n - 1)
    for t in range(1, T):
        row = cum[0 if p == 0 else t, states[t - 1]]
        states[t] = min(int(np.searchsorted(row, u[t] * row[-1], side="right")), n - 1)
    steps = np.empty(T)
    turns = np.zeros(T)
    for j in range(n):
        idx = np.flatnonzero(states == j)
        if idx.size:
            steps[idx] = spec.step_dists[j].sample(rng, idx.size)
            if spec.turn_dists is not None:
                turns[idx] = spec.turn_dists[j].sample(rng, idx.size)
    names = spec.covariate_names if covariate_names is None else covariate_names
    cov_map = {name: covs[:, k] for k, name in enumerate(names)} if p else {}
    has_turns = spec.turn_dists is not None
    series = StepTurnSeries(steps, turns, np.ones(T, bool), np.full(T, has_turns),
                            covariates=cov_map, id="sim")
    return states, series
