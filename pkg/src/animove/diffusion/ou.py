"""Ornstein-Uhlenbeck position and velocity processes.

Parametrization: ``dU = B (U - mu) dt + dW`` with stable ``B`` and
equilibrium covariance ``Lambda``. The transition over time ``t`` is
Gaussian with mean ``e^{Bt} u + (I - e^{Bt}) mu`` and covariance
``Lambda - e^{Bt} Lambda e^{B't}``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .brownian import as_times_positions
from .ctmc import matrix_exponential

__all__ = ["OuParams", "GaussianMoments", "ou_equilibrium", "ou_conditional", "ou_log_likelihood",
           "simulate_ou", "simulate_integrated_ou", "integrated_ou_transition", "phi",
           "fit_ou_isotropic", "OuFit"]

LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class GaussianMoments:
    """Mean and (possibly singular) covariance of a Gaussian."""

    mean: np.ndarray
    cov: np.ndarray

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        r = x - self.mean
        L = np.linalg.cholesky(self.cov)
        sol = np.linalg.solve(L, r.reshape(-1, self.mean.size).T)
        logdet = 2.0 * np.log(np.diag(L)).sum()
        out = -0.5 * (self.mean.size * LOG_2PI + logdet + (sol ** 2).sum(axis=0))
        return float(out[0]) if x.ndim == 1 else out

    def sample(self, rng, size=None):
        w, v = np.linalg.eigh(self.cov)
        L = v * np.sqrt(np.clip(w, 0.0, None))
        n = 1 if size is None else size
        out = self.mean + rng.standard_normal((n, self.mean.size)) @ L.T
        return out[0] if size is None else out


@dataclass(frozen=True)
class OuParams:
    """Center ``mu``, attraction ``B`` and equilibrium covariance ``Lambda``.

    ``B`` must be isotropic (``b * I``) unless ``expert=True``; it must be
    stable (all eigenvalues with negative real part) in every case, and
    ``-(B Lambda + Lambda B')`` must be positive semidefinite so that
    ``Lambda`` is reachable as an equilibrium.
    """

    mu: np.ndarray
    B: np.ndarray
    Lambda: np.ndarray
    expert: bool = False

    def __post_init__(self):
        mu = np.atleast_1d(np.asarray(self.mu, dtype=float))
        d = mu.size
        B = np.atleast_2d(np.asarray(self.B, dtype=float))
        lam = np.atleast_2d(np.asarray(self.Lambda, dtype=float))
        if B.shape != (d, d) or lam.shape != (d, d):
            raise ValueError("B and Lambda must be d x d with d = len(mu)")
        if not self.expert and not np.allclose(B, B[0, 0] * np.eye(d)):
            raise ValueError("non-isotropic attraction matrix requires expert=True")
        if np.max(np.linalg.eigvals(B).real) >= 0:
            raise ValueError("attraction matrix must be stable (eigenvalues with negative real part)")
        if not np.allclose(lam, lam.T) or np.linalg.eigvalsh(lam).min() <= 0:
            raise ValueError("Lambda must be symmetric positive definite")
        # Lambda must be the equilibrium of some diffusion: -(B Lambda + Lambda B') PSD
        sigma = -(B @ lam + lam @ B.T)
        if np.linalg.eigvalsh(0.5 * (sigma + sigma.T)).min() < -1e-10 * np.abs(sigma).max():
            raise ValueError("Lambda is not an equilibrium covariance for B (implied diffusion not PSD)")
        for name, v in (("mu", mu), ("B", B), ("Lambda", lam)):
            v.flags.writeable = False
            object.__setattr__(self, name, v)

    @classmethod
    def isotropic(cls, mu, b, lam):
        """``B = b I`` (``b < 0``) and ``Lambda = lam I`` (or a full matrix)."""
        mu = np.atleast_1d(np.asarray(mu, dtype=float))
        d = mu.size
        lam = np.asarray(lam, dtype=float)
        L = lam * np.eye(d) if lam.ndim == 0 else lam
        return cls(mu, b * np.eye(d), L)

    @property
    def dim(self):
        return self.mu.size

    def expm(self, t):
        return matrix_exponential(self.B, t)

    def to_dict(self):
        return {"type": "ou", "mu": self.mu.tolist(), "B": self.B.tolist(),
                "Lambda": self.Lambda.tolist(), "expert": self.expert}


def ou_equilibrium(p: OuParams) -> GaussianMoments:
    return GaussianMoments(p.mu.copy(), p.Lambda.copy())


def ou_conditional(p: OuParams, u_s, t) -> GaussianMoments:
    """Distribution of ``U(s + t)`` given ``U(s) = u_s``."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    E = p.expm(t)
    u = np.atleast_1d(np.asarray(u_s, dtype=float))
    mean = E @ u + (np.eye(p.dim) - E) @ p.mu
    cov = p.Lambda - E @ p.Lambda @ E.T
    return GaussianMoments(mean, 0.5 * (cov + cov.T))


def phi(p: OuParams) -> np.ndarray:
    """Conditional covariance over unit time (used to order behavioral states)."""
    return ou_conditional(p, p.mu, 1.0).cov


def ou_log_likelihood(p: OuParams, traj, first_obs: str = "condition") -> float:
    """Sum of transition log-densities; ``"equilibrium"`` adds the first point's equilibrium term."""
    if first_obs not in ("condition", "equilibrium"):
        raise ValueError("first_obs must be 'condition' or 'equilibrium'")
    t, x = as_times_positions(traj)
    if t.size < 2:
        raise ValueError("need at least two positions")
    dt = np.diff(t)
    if np.any(dt <= 0):
        raise ValueError("time steps must be positive")
    total = 0.0
    cache = {}
    for k in range(dt.size):
        key = float(dt[k])
        if key not in cache:
            E = p.expm(key)
            C = p.Lambda - E @ p.Lambda @ E.T
            L = np.linalg.cholesky(0.5 * (C + C.T))
            cache[key] = (E, L, 2.0 * np.log(np.diag(L)).sum())
        E, L, logdet = cache[key]
        mean = E @ x[k] + p.mu - E @ p.mu
        sol = np.linalg.solve(L, x[k + 1] - mean)
        total += -0.5 * (p.dim * LOG_2PI + logdet + sol @ sol)
    if first_obs == "equilibrium":
        total += ou_equilibrium(p).logpdf(x[0])
    return float(total)


def simulate_ou(p: OuParams, times, x0, rng):
    """Exact OU positions at ``times``, starting at ``x0`` at ``times[0]``."""
    times = np.asarray(times, dtype=float)
    x = np.empty((times.size, p.dim))
    x[0] = np.broadcast_to(np.asarray(x0, dtype=float), (p.dim,))
    for k in range(1, times.size):
        dt = times[k] - times[k - 1]
        if dt <= 0:
            raise ValueError("times must be strictly increasing")
        x[k] = ou_conditional(p, x[k - 1], dt).sample(rng)
    return x


def integrated_ou_transition(b, lam, mu_v, dt):
    """Exact transition of (position, velocity) for one coordinate.

    Velocity is a 1-D OU with rate ``-b`` (``b < 0``), equilibrium variance
    ``lam`` and mean ``mu_v``; position integrates velocity. Returns
    ``(A, c, C)`` such that ``(x', v') = A (x, v) + c + N(0, C)``.
    """
    th = -b
    e1 = math.exp(-th * dt)
    e2 = math.exp(-2 * th * dt)
    s2 = 2.0 * th * lam  # diffusion coefficient of the velocity
    g = (1.0 - e1) / th
    A = np.array([[1.0, g], [0.0, e1]])
    c = np.array([mu_v * (dt - g), mu_v * (1.0 - e1)])
    vxx = s2 / th ** 2 * (dt - 2.0 * (1.0 - e1) / th + (1.0 - e2) / (2.0 * th))
    vxv = s2 / (2.0 * th ** 2) * (1.0 - e1) ** 2
    vvv = lam * (1.0 - e2)
    C = np.array([[vxx, vxv], [vxv, vvv]])
    return A, c, C


def simulate_integrated_ou(vel: OuParams, x0, v0, times, rng):
    """Positions and velocities of an integrated OU process (independent coordinates).

    ``vel`` must have diagonal ``B`` and ``Lambda``; each coordinate uses its
    own diagonal entries. Returns ``(positions, velocities)``.
    """
    d = vel.dim
    if not (np.allclose(vel.B, np.diag(np.diag(vel.B))) and np.allclose(vel.Lambda, np.diag(np.diag(vel.Lambda)))):
        raise ValueError("integrated OU requires independent coordinates (diagonal B and Lambda)")
    times = np.asarray(times, dtype=float)
    x = np.empty((times.size, d))
    v = np.empty((times.size, d))
    x[0] = np.broadcast_to(np.asarray(x0, dtype=float), (d,))
    v[0] = np.broadcast_to(np.asarray(v0, dtype=float), (d,))
    for k in range(1, times.size):
        dt = times[k] - times[k - 1]
        if dt <= 0:
            raise ValueError("times must be strictly increasing")
        for j in range(d):
            A, c, C = integrated_ou_transition(vel.B[j, j], vel.Lambda[j, j], vel.mu[j], dt)
            w, vec = np.linalg.eigh(C)
            L = vec * np.sqrt(np.clip(w, 0, None))
            st = A @ np.array([x[k - 1, j], v[k - 1, j]]) + c + L @ rng.standard_normal(2)
            x[k, j], v[k, j] = st
    return x, v


@dataclass(frozen=True)
class OuFit:
    params: OuParams
    loglik: float
    converged: bool


def fit_ou_isotropic(traj, first_obs="condition") -> OuFit:
    """MLE of ``(mu, b, lam)`` for ``B = b I``, ``Lambda = lam I``."""
    t, x = as_times_positions(traj)
    d = x.shape[1]
    dt = np.diff(t)
    dx = np.diff(x, axis=0)
    # start: lag-1 regression for the rate, sample variance for lam
    xc = x - x.mean(axis=0)
    r = float((xc[1:] * xc[:-1]).sum() / max((xc[:-1] ** 2).sum(), 1e-300))
    r = min(max(r, 1e-3), 0.999)
    b0 = math.log(r) / float(np.median(dt))
    lam0 = float(xc.var()) if xc.var() > 0 else float((dx ** 2).mean())
    w0 = np.concatenate([x.mean(axis=0), [math.log(-b0), math.log(lam0)]])

    def negll(w):
        p = OuParams.isotropic(w[:d], -math.exp(np.clip(w[d], -30, 30)), math.exp(np.clip(w[d + 1], -30, 30)))
        return -ou_log_likelihood(p, (t, x), first_obs)

    res = optimize.minimize(negll, w0, method="L-BFGS-B")
    w = res.x
    p = OuParams.isotropic(w[:d], -math.exp(w[d]), math.exp(w[d + 1]))
    return OuFit(p, -float(res.fun), bool(res.success))
