"""Continuous-time Markov chains: generators, views, stationary law and likelihood."""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import linalg

__all__ = ["GeneratorMatrix", "CtmcSufficientStats", "ctmc_views", "ctmc_stationary",
           "ctmc_log_likelihood", "ctmc_mle", "stats_from_path", "matrix_exponential",
           "transition_probabilities", "load_generator", "bundled_generator_path"]

_DATA = Path(__file__).resolve().parent.parent / "data"


def matrix_exponential(M, t=1.0, check: bool = False, tol: float = 1e-12):
    """``exp(M t)`` by scaling and squaring with a Padé core.

    With ``check=True`` the result is compared against an eigendecomposition
    when ``M`` is diagonalizable (condition number of the eigenvectors below
    1e8); a mismatch above ``tol`` times that condition number, relative to
    the largest entry, raises ``ArithmeticError``.
    """
    M = np.asarray(M, dtype=float)
    E = linalg.expm(M * t)
    if check:
        w, V = np.linalg.eig(M * t)
        cond = np.linalg.cond(V)
        if cond < 1e8:
            E2 = (V * np.exp(w)) @ np.linalg.inv(V)
            bound = tol * max(1.0, float(np.abs(E).max())) * max(cond, 10.0)
            if np.abs(E2 - E).max() > bound:
                raise ArithmeticError("matrix exponential disagrees with eigendecomposition")
    return E


@dataclass(frozen=True)
class GeneratorMatrix:
    """Rate matrix ``G`` with nonnegative off-diagonals and zero row sums."""

    G: np.ndarray

    def __post_init__(self):
        G = np.atleast_2d(np.asarray(self.G, dtype=float))
        n = G.shape[0]
        if G.shape != (n, n):
            raise ValueError("generator must be square")
        off = G[~np.eye(n, dtype=bool)]
        if np.any(off < 0):
            raise ValueError("generator off-diagonal entries must be nonnegative")
        if np.any(np.abs(G.sum(axis=1)) > 1e-12):
            raise ValueError("generator rows must sum to zero")
        G.flags.writeable = False
        object.__setattr__(self, "G", G)

    @property
    def n_states(self):
        return self.G.shape[0]

    def to_dict(self):
        return {"generator": self.G.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["generator"], dtype=float))


def bundled_generator_path() -> Path:
    return _DATA / "genmatrix.json"


def load_generator(path=None) -> GeneratorMatrix:
    """Load a generator JSON (``{"generator": [[...], ...]}``); default is the bundled 3-state example."""
    with open(path or bundled_generator_path(), encoding="utf-8") as fh:
        return GeneratorMatrix.from_dict(json.load(fh))


def ctmc_views(G: GeneratorMatrix):
    """Exit rates ``lam_i = -g_ii`` and jump matrix ``q_ij = g_ij / lam_i`` (zero row when absorbing)."""
    g = G.G
    lam = -np.diag(g).copy()
    lam[lam == 0] = 0.0
    Q = np.zeros_like(g)
    live = lam > 0
    Q[live] = g[live] / lam[live, None]
    np.fill_diagonal(Q, 0.0)
    return lam, Q


def ctmc_stationary(G: GeneratorMatrix) -> np.ndarray:
    """Solve ``pi G = 0`` with ``sum(pi) = 1`` by replacing one balance equation with the normalization."""
    g = G.G
    n = g.shape[0]
    A = g.T.copy()
    A[-1] = 1.0
    b = np.zeros(n)
    b[-1] = 1.0
    try:
        pi = np.linalg.solve(A, b)
    except np.linalg.LinAlgError:
        pi = np.linalg.lstsq(A, b, rcond=None)[0]
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()


def transition_probabilities(G: GeneratorMatrix, t: float) -> np.ndarray:
    """``P(t) = exp(G t)``."""
    return matrix_exponential(G.G, t)


@dataclass(frozen=True)
class CtmcSufficientStats:
    """Total holding time per state and transition counts (zero diagonal)."""

    holding: np.ndarray
    counts: np.ndarray

    def __post_init__(self):
        h = np.asarray(self.holding, dtype=float)
        c = np.asarray(self.counts)
        if c.shape != (h.size, h.size):
            raise ValueError("counts must be N x N for N holding times")
        if np.any(h < 0):
            raise ValueError("holding times must be nonnegative")
        if np.any(c < 0) or not np.all(np.equal(np.mod(c, 1), 0)):
            raise ValueError("transition counts must be nonnegative integers")
        if np.any(np.diag(c) != 0):
            raise ValueError("self-transition counts must be zero")
        object.__setattr__(self, "holding", h)
        object.__setattr__(self, "counts", c.astype(np.int64))


def ctmc_log_likelihood(lam, Q, stats: CtmcSufficientStats) -> float:
    """``sum_i -lam_i t_i + sum_{i != j} n_ij log(q_ij lam_i)``.

    A positive count on an impossible transition gives ``-inf`` with a warning.
    """
    lam = np.asarray(lam, dtype=float)
    Q = np.asarray(Q, dtype=float)
    n = stats.counts
    total = -float(lam @ stats.holding)
    rate = Q * lam[:, None]
    pos = n > 0
    if np.any(rate[pos] <= 0):
        i, j = np.argwhere(pos & (rate <= 0))[0]
        warnings.warn(f"observed transition {i}->{j} has zero rate", RuntimeWarning, stacklevel=2)
        return -math.inf
    return total + float((n[pos] * np.log(rate[pos])).sum())


def ctmc_mle(stats: CtmcSufficientStats):
    """Closed-form maximizer: ``lam_i = sum_j n_ij / t_i``, ``q_ij = n_ij / sum_j n_ij``."""
    n = stats.counts.astype(float)
    out = n.sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        lam = np.where(stats.holding > 0, out / stats.holding, 0.0)
        Q = np.where(out[:, None] > 0, n / out[:, None], 0.0)
    return lam, Q


def stats_from_path(times, states, n_states: int) -> CtmcSufficientStats:
    """Sufficient statistics of a piecewise-constant path.

    ``times`` are the event times (the last one is the end of observation)
    and ``states[k]`` holds on ``[times[k], times[k+1])``. The final state
    entry adds no holding time; any change between consecutive entries counts
    as a transition.
    """
    times = np.asarray(times, dtype=float)
    states = np.asarray(states, dtype=int)
    h = np.zeros(n_states)
    np.add.at(h, states[:-1], np.diff(times))
    c = np.zeros((n_states, n_states), dtype=np.int64)
    a, b = states[:-1], states[1:]
    move = a != b
    np.add.at(c, (a[move], b[move]), 1)
    return CtmcSufficientStats(h, c)
