"""MH-within-Gibbs sampling for a switching random-walk state-space model.

Model::

    s_t ~ Markov(Gamma), s_0 ~ delta
    z_t = z_{t-1} + eta_t,   eta_t ~ N(0, proc_sd[s_{t-1}]**2 I)
    y_t = z_t + eps_t,       eps_t ~ N(0, obs_sd**2 I) or obs_sd * t_df

with prior ``z_0 ~ N(init_mean, init_var I)`` (flat when ``init_var`` is
infinite). Each sweep updates the parameters one at a time by random-walk
MH on their working scale (flat prior there), then each location by
random-walk MH and each state by its exact multinomial conditional. In the
marginalized mode the states are summed out with the forward algorithm and
never sampled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import special

from .. import kernels
from ..hmm.model import stationary_distribution
from .diagnostics import effective_sample_size, split_rhat
from .specs import observation_mask

__all__ = ["SwitchingRwSpec", "McmcResult", "gibbs_state_update", "mh_location_update",
           "mcmc_ssm", "switching_rw_loglik"]

LOG_2PI = math.log(2.0 * math.pi)


def gibbs_state_update(log_prev, log_next, rng):
    """Draw ``s_t`` with ``p_i`` proportional to ``exp(log_prev[i] + log_next[i])``.

    ``log_prev[i] = log f(z_t, s_t=i | z_{t-1}, s_{t-1})`` and
    ``log_next[i] = log f(z_{t+1}, s_{t+1} | z_t, s_t=i)``. Returns
    ``(state, probabilities)``.
    """
    lp = np.asarray(log_prev, dtype=float) + np.asarray(log_next, dtype=float)
    m = lp.max()
    if not np.isfinite(m):
        raise ValueError("all state probabilities are zero")
    p = np.exp(lp - m)
    p /= p.sum()
    u = rng.random()
    return min(int(np.searchsorted(np.cumsum(p), u, side="right")), p.size - 1), p


def _norm_logpdf(x, mean, var):
    r = np.atleast_1d(np.asarray(x, dtype=float) - mean)
    return -0.5 * (r.size * (LOG_2PI + math.log(var)) + float(r @ r) / var)


def mh_location_update(z_t, z_prev, z_next, var_prev, var_next, rng, proposal_scale=1.0, *,
                       y_t=None, obs_var=1.0, obs_df=math.inf, proposal=None):
    """Random-walk MH update of one location.

    ``log A = log f(v|z_prev) + log f(z_next|v) + log g(y_t|v)
    - [same terms at z_t] + log q(z_t|v) - log q(v|z_t)``; the proposal
    q-terms cancel for the symmetric Gaussian random walk used here. Pass
    ``z_prev=None`` or ``z_next=None`` at the ends of the series to drop the
    missing factor, and ``y_t=None`` when unobserved. ``proposal`` overrides
    the random draw. Returns ``(new z_t, accepted, log A)``.
    """
    z_t = np.atleast_1d(np.asarray(z_t, dtype=float))
    v = z_t + proposal_scale * rng.standard_normal(z_t.shape) if proposal is None \
        else np.atleast_1d(np.asarray(proposal, dtype=float))

    def logp(x):
        out = 0.0
        if z_prev is not None:
            out += _norm_logpdf(x, z_prev, var_prev)
        if z_next is not None:
            out += _norm_logpdf(z_next, x, var_next)
        if y_t is not None:
            r = np.atleast_1d(np.asarray(y_t, dtype=float)) - x
            if math.isinf(obs_df):
                out += -0.5 * float(r @ r) / obs_var
            else:
                out += float(-0.5 * (obs_df + 1) * np.log1p(r * r / (obs_df * obs_var)).sum())
        return out

    log_q_ratio = 0.0  # symmetric proposal
    log_a = logp(v) - logp(z_t) + log_q_ratio
    accepted = bool(math.log(rng.random()) < log_a) if log_a < 0 else True
    return (v if accepted else z_t), accepted, log_a


@dataclass(frozen=True)
class SwitchingRwSpec:
    """Parameters of the switching random walk (see module docstring)."""

    proc_sd: tuple
    gamma: np.ndarray
    obs_sd: float
    obs_df: float = math.inf
    init_mean: np.ndarray | float = 0.0
    init_var: float = math.inf

    def __post_init__(self):
        sd = tuple(float(v) for v in np.atleast_1d(self.proc_sd))
        g = np.atleast_2d(np.asarray(self.gamma, dtype=float))
        if g.shape != (len(sd), len(sd)) or np.any(g < 0) or not np.allclose(g.sum(axis=1), 1.0):
            raise ValueError("gamma must be a row-stochastic matrix matching proc_sd")
        if any(v <= 0 for v in sd) or not self.obs_sd > 0:
            raise ValueError("standard deviations must be positive")
        object.__setattr__(self, "proc_sd", sd)
        object.__setattr__(self, "gamma", g)

    @property
    def n_states(self):
        return len(self.proc_sd)

    def delta(self):
        return stationary_distribution(self.gamma)

    def param_names(self, estimate_obs=True):
        n = self.n_states
        names = [f"proc_sd[{i + 1}]" for i in range(n)]
        if estimate_obs:
            names.append("obs_sd")
        names += [f"gamma[{i + 1},{j + 1}]" for i in range(n) for j in range(n) if i != j]
        return names

    def to_working(self, estimate_obs=True):
        n = self.n_states
        w = [math.log(v) for v in self.proc_sd]
        if estimate_obs:
            w.append(math.log(self.obs_sd))
        g = np.clip(self.gamma, 1e-300, None)
        w += [math.log(g[i, j] / g[i, i]) for i in range(n) for j in range(n) if i != j]
        return np.array(w)

    def from_working(self, w, estimate_obs=True):
        n = self.n_states
        w = np.clip(np.asarray(w, dtype=float), -30, 30)
        sd = tuple(np.exp(w[:n]))
        k = n
        obs_sd = self.obs_sd
        if estimate_obs:
            obs_sd = float(math.exp(w[k]))
            k += 1
        eta = np.zeros((n, n))
        off = ~np.eye(n, dtype=bool)
        eta[off] = w[k:k + n * (n - 1)]
        return replace(self, proc_sd=sd, gamma=special.softmax(eta, axis=1), obs_sd=obs_sd)

    def natural(self, estimate_obs=True):
        n = self.n_states
        vals = list(self.proc_sd) + ([self.obs_sd] if estimate_obs else [])
        vals += [self.gamma[i, j] for i in range(n) for j in range(n) if i != j]
        return np.array(vals)


def _inc_logpdf(z, spec):
    """``(T-1, N)`` log densities of each increment under each state."""
    dz = np.diff(z, axis=0)
    ss = (dz * dz).sum(axis=1)
    d = z.shape[1]
    var = np.square(spec.proc_sd)
    return -0.5 * (d * (LOG_2PI + np.log(var))[None, :] + ss[:, None] / var[None, :])


def _obs_loglik(z, y, observed, spec):
    r = (y - z)[observed]
    v = spec.obs_sd ** 2
    if math.isinf(spec.obs_df):
        return float(-0.5 * (r.size * (LOG_2PI + math.log(v)) + (r * r).sum() / v))
    nu = spec.obs_df
    c = special.gammaln(0.5 * (nu + 1)) - special.gammaln(0.5 * nu) - 0.5 * math.log(nu * math.pi * v)
    return float(r.size * c - 0.5 * (nu + 1) * np.log1p(r * r / (nu * v)).sum())


def _init_logpdf(z0, spec):
    if not math.isfinite(spec.init_var) or spec.init_var <= 0:
        return 0.0
    return _norm_logpdf(z0, spec.init_mean, spec.init_var)


def switching_rw_loglik(spec: SwitchingRwSpec, z, y=None, observed=None, states=None):
    """Log density of the latent path (and observations), states given or summed out."""
    z = np.asarray(z, dtype=float).reshape(len(z), -1)
    out = _init_logpdf(z[0], spec)
    if z.shape[0] > 1:
        li = _inc_logpdf(z, spec)
        if states is None:
            gam = np.ascontiguousarray(spec.gamma[None])
            # increment t+1 is emitted by s_t; the final state emits nothing
            le = np.vstack([li, np.zeros((1, spec.n_states))])
            out += kernels.hmm_forward_loglik(spec.delta(), gam, le)
        else:
            s = np.asarray(states)
            with np.errstate(divide="ignore"):
                lg = np.log(spec.gamma)
                out += float(np.log(spec.delta()[s[0]]) + lg[s[:-1], s[1:]].sum())
            out += float(li[np.arange(len(s) - 1), s[:-1]].sum())
    elif states is not None:
        out += float(np.log(spec.delta()[np.asarray(states)[0]]))
    if y is not None:
        y = np.asarray(y, dtype=float).reshape(z.shape)
        obs = ~np.isnan(y).any(axis=1) if observed is None else observed
        out += _obs_loglik(z, y, obs, spec)
    return float(out)


@dataclass(frozen=True)
class McmcResult:
    param_names: list
    theta: np.ndarray
    z_mean: np.ndarray
    z_var: np.ndarray
    state_freq: np.ndarray | None
    accept_rates: dict
    diagnostics: dict = field(default_factory=dict)
    z_trace: np.ndarray | None = None

    def summary(self):
        out = {}
        for k, name in enumerate(self.param_names):
            col = self.theta[:, k] if self.theta.size else np.zeros(0)
            out[name] = {"mean": float(col.mean()) if col.size else math.nan,
                         "sd": float(col.std()) if col.size else math.nan,
                         **self.diagnostics.get(name, {})}
        return out


def mcmc_ssm(spec: SwitchingRwSpec, obs, iterations: int, burn_in: int, rng, *,
             update_theta: bool = True, estimate_obs: bool = True, marginalize_states: bool = False,
             proposal_scale: float = 1.0, theta_step: float = 0.1, init_z=None, init_states=None,
             trace_sites=None, block: int = 256) -> McmcResult:
    """Run one MH-within-Gibbs chain; ``burn_in`` sweeps are discarded.

    ``trace_sites`` lists time indices whose location draws are kept (for
    diagnostics); running means/variances are kept for all locations.
    Parameter chains are diagnosed with ESS and split R-hat.
    """
    if iterations <= burn_in:
        raise ValueError("iterations must exceed burn_in")
    y, observed = observation_mask(obs)
    T, d = y.shape
    n = spec.n_states
    if init_z is None:
        z = y.copy()
        if not observed.all():
            idx = np.flatnonzero(observed)
            if idx.size == 0:
                z[:] = np.asarray(spec.init_mean, dtype=float)
            else:
                for k in range(d):
                    z[:, k] = np.interp(np.arange(T), idx, y[idx, k])
    else:
        z = np.array(init_z, dtype=float).reshape(T, d)
    z = np.ascontiguousarray(z)
    y_filled = np.ascontiguousarray(np.where(np.isnan(y), 0.0, y))
    obs_u8 = np.ascontiguousarray(observed.astype(np.uint8))
    init_mean = np.ascontiguousarray(np.broadcast_to(np.asarray(spec.init_mean, dtype=float), (d,)))
    s = None
    if not marginalize_states:
        s = np.zeros(T, dtype=np.int64) if init_states is None else np.array(init_states, dtype=np.int64)
    cur = spec
    names = cur.param_names(estimate_obs) if update_theta else []
    n_keep = iterations - burn_in
    theta = np.empty((n_keep, len(names)))
    zsum = np.zeros((T, d))
    zsq = np.zeros((T, d))
    sfreq = np.zeros((T, n)) if s is not None else None
    sites = [] if trace_sites is None else list(trace_sites)
    ztrace = np.empty((n_keep, len(sites), d)) if sites else None
    acc_z = acc_th = tries_th = 0
    obs_df = 0.0 if math.isinf(cur.obs_df) else cur.obs_df

    def target(sp):
        return switching_rw_loglik(sp, z, y, observed, None if marginalize_states else s)

    lt = target(cur) if update_theta else 0.0
    done = 0
    while done < iterations:
        m = min(block, iterations - done)
        noise = proposal_scale * rng.standard_normal((m, T, d))
        log_u = np.log(rng.random((m, T)))
        u_s = rng.random((m, T)) if s is not None else None
        for b in range(m):
            it = done + b
            if update_theta:
                w = cur.to_working(estimate_obs)
                steps = theta_step * rng.standard_normal(w.size)
                lu = np.log(rng.random(w.size))
                for k in range(w.size):
                    wp = w.copy()
                    wp[k] += steps[k]
                    prop = cur.from_working(wp, estimate_obs)
                    lp = target(prop)
                    tries_th += 1
                    if lu[k] < lp - lt:
                        cur, lt, w = prop, lp, wp
                        acc_th += 1
            var = np.square(cur.proc_sd)
            if marginalize_states:
                acc_z += _marginal_location_sweep(z, y, observed, cur, noise[b], log_u[b])
            else:
                proc_var = np.ascontiguousarray(var[s[:-1]] if T > 1 else np.zeros(0))
                acc_z += kernels.rw_mh_sweep(z, y_filled, obs_u8, proc_var, cur.obs_sd ** 2, obs_df,
                                             init_mean, float(cur.init_var), noise[b], log_u[b])
                if n > 1:
                    log_inc = np.ascontiguousarray(
                        np.vstack([_inc_logpdf(z, cur), np.zeros((1, n))]) if T > 1 else np.zeros((1, n)))
                    with np.errstate(divide="ignore"):
                        kernels.gibbs_state_sweep(s, log_inc, np.ascontiguousarray(np.log(cur.gamma)),
                                                  np.log(cur.delta()), u_s[b])
            if update_theta:
                lt = target(cur)
            if it >= burn_in:
                k = it - burn_in
                if names:
                    theta[k] = cur.natural(estimate_obs)
                zsum += z
                zsq += z * z
                if sfreq is not None:
                    sfreq[np.arange(T), s] += 1
                if ztrace is not None:
                    ztrace[k] = z[sites]
        done += m
    zmean = zsum / n_keep
    zvar = np.maximum(zsq / n_keep - zmean ** 2, 0.0)
    diags = {}
    for k, name in enumerate(names):
        diags[name] = {"ess": effective_sample_size(theta[:, k]), "rhat": split_rhat(theta[:, k])}
    for j, t in enumerate(sites):
        for c in range(d):
            diags[f"z[{t},{c}]"] = {"ess": effective_sample_size(ztrace[:, j, c]),
                                     "rhat": split_rhat(ztrace[:, j, c])}
    rates = {"z": acc_z / (iterations * T)}
    if tries_th:
        rates["theta"] = acc_th / tries_th
    return McmcResult(names, theta, zmean, zvar, None if sfreq is None else sfreq / n_keep,
                      rates, diags, ztrace)


def _marginal_location_sweep(z, y, observed, spec, noise, log_u):
    """Location MH with the states summed out (full forward pass per site)."""
    acc = 0
    cur = switching_rw_loglik(spec, z, y, observed)
    for t in range(z.shape[0]):
        old = z[t].copy()
        z[t] = old + noise[t]
        new = switching_rw_loglik(spec, z, y, observed)
        if log_u[t] < new - cur:
            cur = new
            acc += 1
        else:
            z[t] = old
    return acc
