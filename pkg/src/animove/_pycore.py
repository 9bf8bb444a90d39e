"""Pure-Python (numpy) kernels.

These are the reference implementations of the hot loops. ``animove._core``
(Cython) exposes the same functions with the same signatures; `animove.kernels`
picks one at import time.

Conventions shared by both backends
-----------------------------------
``gammas`` has shape ``(G, N, N)``. ``G == 1`` means a homogeneous chain,
otherwise ``G == T - 1`` and ``gammas[t - 1]`` drives the transition into
time ``t``. ``log_emis`` has shape ``(T, N)``.
"""

import math

import numpy as np


def _gamma_at(gammas, t):
    return gammas[0] if gammas.shape[0] == 1 else gammas[t - 1]


def hmm_forward_loglik(delta, gammas, log_emis):
    T, N = log_emis.shape
    m = log_emis[0].max()
    if not np.isfinite(m):
        return -math.inf
    a = delta * np.exp(log_emis[0] - m)
    s = a.sum()
    if s <= 0.0:
        return -math.inf
    ll = m + math.log(s)
    a = a / s
    for t in range(1, T):
        m = log_emis[t].max()
        if not np.isfinite(m):
            return -math.inf
        b = (a @ _gamma_at(gammas, t)) * np.exp(log_emis[t] - m)
        s = b.sum()
        if s <= 0.0:
            return -math.inf
        ll += m + math.log(s)
        a = b / s
    return ll


def hmm_forward(delta, gammas, log_emis):
    """Return ``(log_alpha, loglik)``; ``log_alpha[t, j] = log f(z_1..z_t, s_t=j)``."""
    T, N = log_emis.shape
    log_alpha = np.empty((T, N))
    with np.errstate(divide="ignore"):
        m = log_emis[0].max()
        a = delta * np.exp(log_emis[0] - m) if np.isfinite(m) else np.zeros(N)
        s = a.sum()
        if not (s > 0.0):
            log_alpha[:] = -np.inf
            return log_alpha, -math.inf
        c = m + math.log(s)
        a = a / s
        log_alpha[0] = np.log(a) + c
        for t in range(1, T):
            m = log_emis[t].max()
            if not np.isfinite(m):
                log_alpha[t:] = -np.inf
                return log_alpha, -math.inf
            b = (a @ _gamma_at(gammas, t)) * np.exp(log_emis[t] - m)
            s = b.sum()
            if not (s > 0.0):
                log_alpha[t:] = -np.inf
                return log_alpha, -math.inf
            c += m + math.log(s)
            a = b / s
            log_alpha[t] = np.log(a) + c
    return log_alpha, c


def hmm_backward(gammas, log_emis):
    """Return ``log_beta`` with ``log_beta[t, i] = log f(z_{t+1}..z_T | s_t=i)``."""
    T, N = log_emis.shape
    log_beta = np.zeros((T, N))
    b = np.ones(N)
    c = 0.0
    with np.errstate(divide="ignore"):
        for t in range(T - 2, -1, -1):
            m = log_emis[t + 1].max()
            if not np.isfinite(m):
                log_beta[: t + 1] = -np.inf
                return log_beta
            v = _gamma_at(gammas, t + 1) @ (np.exp(log_emis[t + 1] - m) * b)
            s = v.sum()
            if not (s > 0.0):
                log_beta[: t + 1] = -np.inf
                return log_beta
            c += m + math.log(s)
            b = v / s
            log_beta[t] = np.log(b) + c
    return log_beta


def hmm_viterbi(log_delta, log_gammas, log_emis):
    T, N = log_emis.shape
    back = np.zeros((T, N), dtype=np.int64)
    v = log_delta + log_emis[0]
    for t in range(1, T):
        lg = _gamma_at(log_gammas, t)
        nv = np.empty(N)
        for j in range(N):
            best = v[0] + lg[0, j]
            arg = 0
            for i in range(1, N):
                cand = v[i] + lg[i, j]
                if cand > best:
                    best = cand
                    arg = i
            nv[j] = best + log_emis[t, j]
            back[t, j] = arg
        v = nv
    path = np.empty(T, dtype=np.int64)
    best = v[0]
    arg = 0
    for j in range(1, N):
        if v[j] > best:
            best = v[j]
            arg = j
    path[T - 1] = arg
    for t in range(T - 1, 0, -1):
        path[t - 1] = back[t, path[t]]
    return path


def _obs_term(y, x, obs_var, obs_df):
    if obs_df <= 0.0:
        r = y - x
        return -0.5 * float(r @ r) / obs_var
    out = 0.0
    for k in range(y.shape[0]):
        r = y[k] - x[k]
        out -= 0.5 * (obs_df + 1.0) * math.log1p(r * r / (obs_df * obs_var))
    return out


def rw_mh_sweep(z, y, observed, proc_var, obs_var, obs_df, init_mean, init_var,
                noise, log_u):
    """One systematic-scan sweep of random-walk MH over the latent locations.

    ``z`` is updated in place; returns the number of accepted proposals.
    """
    T = z.shape[0]
    accepted = 0
    has_prior = init_var > 0.0 and math.isfinite(init_var)
    for t in range(T):
        cur = z[t].copy()
        prop = cur + noise[t]
        log_a = 0.0
        if t == 0:
            if has_prior:
                dp = prop - init_mean
                dc = cur - init_mean
                log_a -= 0.5 * (float(dp @ dp) - float(dc @ dc)) / init_var
        else:
            dp = prop - z[t - 1]
            dc = cur - z[t - 1]
            log_a -= 0.5 * (float(dp @ dp) - float(dc @ dc)) / proc_var[t - 1]
        if t < T - 1:
            dp = z[t + 1] - prop
            dc = z[t + 1] - cur
            log_a -= 0.5 * (float(dp @ dp) - float(dc @ dc)) / proc_var[t]
        if observed[t]:
            log_a += _obs_term(y[t], prop, obs_var, obs_df) - _obs_term(y[t], cur, obs_var, obs_df)
        if log_u[t] < log_a:
            z[t] = prop
            accepted += 1
    return accepted


def gibbs_state_sweep(s, log_inc, log_gamma, log_delta, u):
    """Systematic-scan Gibbs update of the discrete states, in place.

    ``log_inc[t, i]`` is ``log f(z_{t+1} | z_t, s_t = i)``.
    """
    T = s.shape[0]
    N = log_gamma.shape[0]
    for t in range(T):
        if t == 0:
            lp = log_delta.copy()
        else:
            lp = log_gamma[s[t - 1]].copy()
        if t < T - 1:
            lp = lp + log_inc[t] + log_gamma[:, s[t + 1]]
        m = lp.max()
        p = np.exp(lp - m)
        total = p.sum()
        target = u[t] * total
        acc = 0.0
        choice = N - 1
        for i in range(N):
            acc += p[i]
            if target < acc:
                choice = i
                break
        s[t] = choice
