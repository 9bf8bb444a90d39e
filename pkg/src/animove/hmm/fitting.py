"""Maximum-likelihood fitting of step/turn HMMs."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .inference import _tracks, emission_log_matrix, log_likelihood_forward
from .model import FittedHmm, HmmSpec
from .. import kernels

__all__ = ["OptimizerSettings", "fit_mle", "central_gradient"]

_BAD = 1e10


@dataclass(frozen=True)
class OptimizerSettings:
    """BFGS settings for `fit_mle`.

    ``start_sd`` is the standard deviation of the Gaussian perturbation of
    the working parameters used to generate restarts beyond the first.
    """

    n_starts: int = 10
    seed: int = 0
    maxiter: int = 500
    gtol: float = 1e-5
    start_sd: float = 0.5
    workers: int = 1


def central_gradient(f, x):
    """Central finite differences with step ``1e-6 * (1 + |x_i|)``."""
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for i in range(x.size):
        h = 1e-6 * (1.0 + abs(x[i]))
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        g[i] = (f(xp) - f(xm)) / (xp[i] - xm[i])
    return g


class _Objective:
    """Negative log-likelihood over working parameters, tracks pre-normalized.

    Finite-difference gradients move one coordinate at a time, so the
    emission matrices and the transition matrices are each cached on their
    own slice of the working vector (one entry each).
    """

    def __init__(self, spec, tracks):
        self.spec = spec
        self.tracks = tracks
        self.n_emis = spec.n_params - spec.transition.n_working
        self._emis = (None, None)
        self._chain = (None, None)

    def _emissions(self, spec, key):
        cached = self._emis  # one read: the objective is shared across worker threads
        if cached[0] != key:
            cached = (key, [emission_log_matrix(spec, s) for s, _ in self.tracks])
            self._emis = cached
        return cached[1]

    def _chains(self, tm, key):
        cached = self._chain
        if cached[0] != key:
            out = []
            for _, x in self.tracks:
                if tm.n_covariates == 0:
                    gammas = tm.matrices()
                    delta = tm.initial_distribution(gammas[0])
                else:
                    gammas = tm.matrices(x[1:] if x.shape[0] > 1 else x[:1])
                    delta = tm.initial_distribution()
                out.append((np.ascontiguousarray(delta), np.ascontiguousarray(gammas)))
            cached = (key, out)
            self._chain = cached
        return cached[1]

    def __call__(self, theta):
        theta = np.asarray(theta, dtype=float)
        try:
            spec = self.spec.from_working(theta)
        except ValueError:
            return _BAD
        try:
            emis = self._emissions(spec, theta[:self.n_emis].tobytes())
        except ValueError:
            return _BAD
        chains = self._chains(spec.transition, theta[self.n_emis:].tobytes())
        total = 0.0
        for (delta, gammas), le in zip(chains, emis):
            total += kernels.hmm_forward_loglik(delta, gammas, le)
        return -total if math.isfinite(total) else _BAD

    def grad(self, theta):
        return central_gradient(self, theta)


def _relabel(spec: HmmSpec) -> HmmSpec:
    order = np.argsort(spec.step_means(), kind="stable")
    return spec if np.all(order == np.arange(spec.n_states)) else spec.permuted(order)


def _run_start(obj, theta0, settings):
    res = optimize.minimize(obj, theta0, jac=obj.grad, method="BFGS",
                            options={"maxiter": settings.maxiter, "gtol": settings.gtol})
    return res


def fit_mle(init: HmmSpec, data, covs=None, settings: OptimizerSettings | None = None,
            **overrides) -> FittedHmm:
    """Maximize the forward log-likelihood over working parameters.

    The first start is ``init`` itself; the remaining ``n_starts - 1`` are
    seeded Gaussian perturbations of its working vector. The best start is
    returned, with states relabeled by increasing mean step length. A
    non-converged best start is returned with ``converged=False``.
    """
    settings = settings or OptimizerSettings()
    if overrides:
        settings = OptimizerSettings(**{**settings.__dict__, **overrides})
    tracks = _tracks(init, data, covs)
    obj = _Objective(init, tracks)
    theta0 = init.to_working()
    f0 = obj(theta0)
    if f0 >= _BAD:
        raise ValueError("log-likelihood is not finite at the initial parameters")
    rng = np.random.default_rng(settings.seed)
    starts = [theta0] + [theta0 + settings.start_sd * rng.standard_normal(theta0.size)
                         for _ in range(max(settings.n_starts, 1) - 1)]
    if settings.workers > 1:
        with ThreadPoolExecutor(max_workers=settings.workers) as ex:
            results = list(ex.map(lambda t: _run_start(obj, t, settings), starts))
    else:
        results = [_run_start(obj, t, settings) for t in starts]
    best = min(range(len(results)), key=lambda i: (results[i].fun, i))
    res = results[best]
    spec = _relabel(init.from_working(res.x))
    theta = spec.to_working()
    spec = spec.from_working(theta)
    ll = log_likelihood_forward(spec, data, covs)
    grad = _Objective(spec, tracks).grad(theta)
    start_lls = [-float(r.fun) if r.fun < _BAD else -math.inf for r in results]
    report = {
        "success": bool(res.success),
        "message": str(res.message),
        "iterations": int(res.nit),
        "grad_max_norm": float(np.max(np.abs(grad))) if grad.size else 0.0,
        "best_start": int(best),
        "start_logliks": start_lls,
        "n_starts_converged": int(sum(r.success for r in results)),
    }
    converged = bool(res.success) or report["grad_max_norm"] < 1e-3
    return FittedHmm(spec, ll, theta, converged, report)
