"""Likelihood evaluation, decoding and residuals for step/turn HMMs.

``data`` arguments accept a single `StepTurnSeries` or a sequence of them
(one per animal). Tracks share all parameters and their log-likelihoods are
summed in track order. ``covs`` is either ``None`` (covariates are taken from
each series by name) or a ``(T, p)`` array / list of arrays matching ``data``.

The transition into time ``t`` uses the covariate row ``t``.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import special
from scipy.special import logsumexp

from .. import kernels
from ..trajectory import StepTurnSeries
from .model import FittedHmm, HmmSpec, TransitionModel

__all__ = [
    "transition_matrix_at",
    "emission_log_matrix",
    "log_likelihood_forward",
    "log_likelihood_bruteforce",
    "viterbi",
    "state_probabilities",
    "pseudo_residuals",
    "PseudoResiduals",
    "BRUTEFORCE_LIMIT",
]

BRUTEFORCE_LIMIT = 10 ** 7


def transition_matrix_at(tm: TransitionModel, covs=()) -> np.ndarray:
    """Transition matrix for one covariate vector of length p."""
    covs = np.asarray(covs, dtype=float).reshape(-1)
    if covs.size != tm.n_covariates:
        raise ValueError(f"expected {tm.n_covariates} covariates, got {covs.size}")
    return tm.matrices(covs[None] if tm.n_covariates else None)[0]


def _spec_of(model):
    return model.spec if isinstance(model, FittedHmm) else model


def _tracks(spec: HmmSpec, data, covs):
    """Normalize ``data``/``covs`` into a list of (series, covariate matrix) pairs."""
    if isinstance(data, StepTurnSeries):
        series = [data]
        covs = None if covs is None else [covs]
    else:
        series = list(data)
        if covs is not None and len(covs) != len(series):
            raise ValueError("need one covariate matrix per track")
    names = spec.covariate_names
    out = []
    for i, s in enumerate(series):
        if len(s) < 1:
            raise ValueError(f"track {i} is empty")
        if covs is None:
            x = s.covariate_matrix(names)
        else:
            x = np.asarray(covs[i], dtype=float).reshape(len(s), -1)
            if x.shape[1] != len(names):
                raise ValueError(f"covariate matrix has {x.shape[1]} columns, model expects {len(names)}")
        out.append((s, x))
    return out


def emission_log_matrix(spec: HmmSpec, series: StepTurnSeries) -> np.ndarray:
    """``(T, N)`` log emission densities; invalid entries contribute 0."""
    T, n = len(series), spec.n_states
    out = np.zeros((T, n))
    sv, tv = series.step_valid, series.turn_valid
    steps = np.where(sv, series.steps, 1.0)
    turns = np.where(tv, series.turns, 0.0)
    for j in range(n):
        out[:, j] = np.where(sv, spec.step_dists[j].logpdf(steps), 0.0)
        if spec.turn_dists is not None:
            out[:, j] += np.where(tv, spec.turn_dists[j].logpdf(turns), 0.0)
    if np.isnan(out).any():
        raise ValueError("non-finite emission parameters produced NaN densities")
    return out


def _chain(spec: HmmSpec, x):
    tm = spec.transition
    if tm.n_covariates == 0:
        gammas = tm.matrices()
        delta = tm.initial_distribution(gammas[0])
    else:
        gammas = tm.matrices(x[1:]) if x.shape[0] > 1 else tm.matrices(x[:1])
        delta = tm.initial_distribution()
    return np.ascontiguousarray(delta), np.ascontiguousarray(gammas)


def _track_loglik(spec, s, x):
    delta, gammas = _chain(spec, x)
    return kernels.hmm_forward_loglik(delta, gammas, emission_log_matrix(spec, s))


def log_likelihood_forward(model, data, covs=None, workers: int = 1) -> float:
    """Log-likelihood via the scaled forward recursion, summed over tracks."""
    spec = _spec_of(model)
    tracks = _tracks(spec, data, covs)
    if workers > 1 and len(tracks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(lambda sx: _track_loglik(spec, *sx), tracks))
    else:
        parts = [_track_loglik(spec, s, x) for s, x in tracks]
    return float(math.fsum(parts))


def _enumerate_log_joint(delta, gammas, log_emis, chunk=1 << 16):
    """Yield log joint densities of every state sequence, in chunks."""
    T, n = log_emis.shape
    with np.errstate(divide="ignore"):
        ld, lg = np.log(delta), np.log(gammas)
    total = n ** T
    for start in range(0, total, chunk):
        idx = np.arange(start, min(total, start + chunk))
        seq = np.empty((idx.size, T), dtype=np.int64)
        rem = idx.copy()
        for t in range(T - 1, -1, -1):
            seq[:, t] = rem % n
            rem //= n
        lj = ld[seq[:, 0]] + log_emis[0, seq[:, 0]]
        for t in range(1, T):
            g = lg[0] if lg.shape[0] == 1 else lg[t - 1]
            lj = lj + g[seq[:, t - 1], seq[:, t]] + log_emis[t, seq[:, t]]
        yield seq, lj


def log_likelihood_bruteforce(model, data, covs=None) -> float:
    """Log-likelihood by summing over all ``N**T`` state sequences.

    Raises ``ValueError`` when any track has more than ``BRUTEFORCE_LIMIT``
    sequences.
    """
    spec = _spec_of(model)
    total = 0.0
    for s, x in _tracks(spec, data, covs):
        if spec.n_states ** len(s) > BRUTEFORCE_LIMIT:
            raise ValueError(f"N**T = {spec.n_states}**{len(s)} exceeds the enumeration limit")
        delta, gammas = _chain(spec, x)
        le = emission_log_matrix(spec, s)
        total += logsumexp([logsumexp(lj) for _, lj in _enumerate_log_joint(delta, gammas, le)])
    return float(total)


def viterbi(model, data, covs=None):
    """Most likely state sequence (0-based states); a list when ``data`` is a list."""
    spec = _spec_of(model)
    paths = []
    for s, x in _tracks(spec, data, covs):
        delta, gammas = _chain(spec, x)
        with np.errstate(divide="ignore"):
            paths.append(kernels.hmm_viterbi(np.log(delta), np.ascontiguousarray(np.log(gammas)),
                                             emission_log_matrix(spec, s)))
    return paths[0] if isinstance(data, StepTurnSeries) else paths


def _posterior(spec, s, x):
    delta, gammas = _chain(spec, x)
    le = emission_log_matrix(spec, s)
    la, ll = kernels.hmm_forward(delta, gammas, le)
    lb = kernels.hmm_backward(gammas, le)
    lp = la + lb - ll
    p = np.exp(lp - lp.max(axis=1, keepdims=True))
    return p / p.sum(axis=1, keepdims=True)


def state_probabilities(model, data, covs=None):
    """Smoothed ``P(s_t = j | all observations)`` as a ``(T, N)`` array per track."""
    spec = _spec_of(model)
    out = [_posterior(spec, s, x) for s, x in _tracks(spec, data, covs)]
    return out[0] if isinstance(data, StepTurnSeries) else out


@dataclass(frozen=True)
class PseudoResiduals:
    """Normal pseudo-residuals; NaN where the observation is invalid."""

    steps: np.ndarray
    turns: np.ndarray

    def flag_outliers(self, threshold=3.0):
        """Fraction of valid residuals with ``|r| > threshold`` for steps and turns."""
        out = {}
        for name, r in (("steps", self.steps), ("turns", self.turns)):
            v = r[np.isfinite(r)]
            out[name] = float(np.mean(np.abs(v) > threshold)) if v.size else 0.0
        return out


def _forecast_probs(spec, s, x):
    """``P(s_t = j | observations before t)`` for each t."""
    delta, gammas = _chain(spec, x)
    le = emission_log_matrix(spec, s)
    la, _ = kernels.hmm_forward(delta, gammas, le)
    T, n = le.shape
    out = np.empty((T, n))
    out[0] = delta
    if T > 1:
        filt = np.exp(la[:-1] - la[:-1].max(axis=1, keepdims=True))
        filt /= filt.sum(axis=1, keepdims=True)
        if gammas.shape[0] == 1:
            out[1:] = filt @ gammas[0]
        else:
            out[1:] = np.einsum("ti,tij->tj", filt, gammas)
    return out


def pseudo_residuals(model, data, covs=None, rng=None):
    """One-step-ahead forecast pseudo-residuals for steps and turns.

    At atoms (zero steps of a zero-inflated distribution) the forecast cdf
    value is drawn uniformly within the jump using ``rng`` (a
    ``numpy.random.Generator``; seed 0 when omitted).
    """
    spec = _spec_of(model)
    rng = np.random.default_rng(0) if rng is None else rng
    out = []
    eps = 1e-15
    for s, x in _tracks(spec, data, covs):
        w = _forecast_probs(spec, s, x)
        T = len(s)
        steps = np.where(s.step_valid, s.steps, 1.0)
        hi = sum(w[:, j] * spec.step_dists[j].cdf(steps) for j in range(spec.n_states))
        lo = sum(w[:, j] * spec.step_dists[j].cdf_left(steps) for j in range(spec.n_states))
        u = lo + rng.random(T) * (hi - lo)
        r_step = np.where(s.step_valid, special.ndtri(np.clip(u, eps, 1 - eps)), np.nan)
        r_turn = np.full(T, np.nan)
        if spec.turn_dists is not None:
            turns = np.where(s.turn_valid, s.turns, 0.0)
            c = sum(w[:, j] * spec.turn_dists[j].cdf(turns) for j in range(spec.n_states))
            r_turn = np.where(s.turn_valid, special.ndtri(np.clip(c, eps, 1 - eps)), np.nan)
        out.append(PseudoResiduals(r_step, r_turn))
    return out[0] if isinstance(data, StepTurnSeries) else out
