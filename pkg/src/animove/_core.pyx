# cython: language_level=3
"""Compiled kernels; same contracts as :mod:`animove._pycore`."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, log1p, INFINITY, isfinite

cnp.import_array()


cdef inline double _rowmax(const double[:, ::1] a, Py_ssize_t t, Py_ssize_t n) noexcept nogil:
    cdef double m = a[t, 0]
    cdef Py_ssize_t j
    for j in range(1, n):
        if a[t, j] > m:
            m = a[t, j]
    return m


cdef double _forward_loglik(const double[::1] delta, const double[:, :, ::1] gammas,
                            const double[:, ::1] log_emis, double[::1] a,
                            double[::1] b) noexcept nogil:
    cdef Py_ssize_t T = log_emis.shape[0], N = log_emis.shape[1]
    cdef Py_ssize_t t, i, j, g
    cdef double m, s, ll, acc
    cdef bint homog = gammas.shape[0] == 1
    m = _rowmax(log_emis, 0, N)
    if not isfinite(m):
        return -INFINITY
    s = 0.0
    for j in range(N):
        a[j] = delta[j] * exp(log_emis[0, j] - m)
        s += a[j]
    if not (s > 0.0):
        return -INFINITY
    ll = m + log(s)
    for j in range(N):
        a[j] /= s
    for t in range(1, T):
        g = 0 if homog else t - 1
        m = _rowmax(log_emis, t, N)
        if not isfinite(m):
            return -INFINITY
        s = 0.0
        for j in range(N):
            acc = 0.0
            for i in range(N):
                acc += a[i] * gammas[g, i, j]
            b[j] = acc * exp(log_emis[t, j] - m)
            s += b[j]
        if not (s > 0.0):
            return -INFINITY
        ll += m + log(s)
        for j in range(N):
            a[j] = b[j] / s
    return ll


def hmm_forward_loglik(const double[::1] delta, const double[:, :, ::1] gammas,
                       const double[:, ::1] log_emis):
    cdef Py_ssize_t N = log_emis.shape[1]
    cdef double[::1] a = np.empty(N)
    cdef double[::1] b = np.empty(N)
    cdef double ll
    with nogil:
        ll = _forward_loglik(delta, gammas, log_emis, a, b)
    return ll


def hmm_forward(const double[::1] delta, const double[:, :, ::1] gammas,
                const double[:, ::1] log_emis):
    cdef Py_ssize_t T = log_emis.shape[0], N = log_emis.shape[1]
    cdef Py_ssize_t t, i, j, g, k
    cdef double m, s, c, acc
    cdef double[::1] a = np.empty(N)
    cdef double[::1] b = np.empty(N)
    out = np.empty((T, N))
    cdef double[:, ::1] la = out
    cdef bint homog = gammas.shape[0] == 1
    cdef bint dead = False
    with nogil:
        m = _rowmax(log_emis, 0, N)
        s = 0.0
        if isfinite(m):
            for j in range(N):
                a[j] = delta[j] * exp(log_emis[0, j] - m)
                s += a[j]
        if not (s > 0.0):
            dead = True
            for k in range(T):
                for j in range(N):
                    la[k, j] = -INFINITY
        else:
            c = m + log(s)
            for j in range(N):
                a[j] /= s
                la[0, j] = (log(a[j]) if a[j] > 0.0 else -INFINITY) + c
            for t in range(1, T):
                g = 0 if homog else t - 1
                m = _rowmax(log_emis, t, N)
                s = 0.0
                if isfinite(m):
                    for j in range(N):
                        acc = 0.0
                        for i in range(N):
                            acc += a[i] * gammas[g, i, j]
                        b[j] = acc * exp(log_emis[t, j] - m)
                        s += b[j]
                if not (s > 0.0):
                    dead = True
                    for k in range(t, T):
                        for j in range(N):
                            la[k, j] = -INFINITY
                    break
                c += m + log(s)
                for j in range(N):
                    a[j] = b[j] / s
                    la[t, j] = (log(a[j]) if a[j] > 0.0 else -INFINITY) + c
    if dead:
        return out, -np.inf
    return out, c


def hmm_backward(const double[:, :, ::1] gammas, const double[:, ::1] log_emis):
    cdef Py_ssize_t T = log_emis.shape[0], N = log_emis.shape[1]
    cdef Py_ssize_t t, i, j, g, k
    cdef double m, s, c = 0.0, acc
    cdef double[::1] b = np.ones(N)
    cdef double[::1] e = np.empty(N)
    cdef double[::1] v = np.empty(N)
    out = np.zeros((T, N))
    cdef double[:, ::1] lb = out
    cdef bint homog = gammas.shape[0] == 1
    with nogil:
        t = T - 2
        while t >= 0:
            g = 0 if homog else t
            m = _rowmax(log_emis, t + 1, N)
            s = 0.0
            if isfinite(m):
                for j in range(N):
                    e[j] = exp(log_emis[t + 1, j] - m) * b[j]
                for i in range(N):
                    acc = 0.0
                    for j in range(N):
                        acc += gammas[g, i, j] * e[j]
                    v[i] = acc
                    s += acc
            if not (s > 0.0):
                for k in range(t + 1):
                    for j in range(N):
                        lb[k, j] = -INFINITY
                break
            c += m + log(s)
            for i in range(N):
                b[i] = v[i] / s
                lb[t, i] = (log(b[i]) if b[i] > 0.0 else -INFINITY) + c
            t -= 1
    return out


def hmm_viterbi(const double[::1] log_delta, const double[:, :, ::1] log_gammas,
                const double[:, ::1] log_emis):
    cdef Py_ssize_t T = log_emis.shape[0], N = log_emis.shape[1]
    cdef Py_ssize_t t, i, j, g, arg
    cdef double best, cand
    cdef double[::1] v = np.empty(N)
    cdef double[::1] nv = np.empty(N)
    back_arr = np.zeros((T, N), dtype=np.int64)
    cdef cnp.int64_t[:, ::1] back = back_arr
    path_arr = np.empty(T, dtype=np.int64)
    cdef cnp.int64_t[::1] path = path_arr
    cdef bint homog = log_gammas.shape[0] == 1
    with nogil:
        for j in range(N):
            v[j] = log_delta[j] + log_emis[0, j]
        for t in range(1, T):
            g = 0 if homog else t - 1
            for j in range(N):
                best = v[0] + log_gammas[g, 0, j]
                arg = 0
                for i in range(1, N):
                    cand = v[i] + log_gammas[g, i, j]
                    if cand > best:
                        best = cand
                        arg = i
                nv[j] = best + log_emis[t, j]
                back[t, j] = arg
            for j in range(N):
                v[j] = nv[j]
        best = v[0]
        arg = 0
        for j in range(1, N):
            if v[j] > best:
                best = v[j]
                arg = j
        path[T - 1] = arg
        t = T - 1
        while t > 0:
            path[t - 1] = back[t, path[t]]
            t -= 1
    return path_arr


cdef inline double _obs_term(const double[:, ::1] y, Py_ssize_t t, double* x, Py_ssize_t d,
                             double obs_var, double obs_df) noexcept nogil:
    cdef double out = 0.0, r
    cdef Py_ssize_t k
    if obs_df <= 0.0:
        for k in range(d):
            r = y[t, k] - x[k]
            out += r * r
        return -0.5 * out / obs_var
    for k in range(d):
        r = y[t, k] - x[k]
        out -= 0.5 * (obs_df + 1.0) * log1p(r * r / (obs_df * obs_var))
    return out


def rw_mh_sweep(double[:, ::1] z, const double[:, ::1] y, const cnp.uint8_t[::1] observed,
                const double[::1] proc_var, double obs_var, double obs_df,
                const double[::1] init_mean, double init_var,
                const double[:, ::1] noise, const double[::1] log_u):
    cdef Py_ssize_t T = z.shape[0], d = z.shape[1]
    cdef Py_ssize_t t, k
    cdef double log_a, sp, sc, dp, dc
    cdef long accepted = 0
    cdef bint has_prior = init_var > 0.0 and isfinite(init_var)
    cdef double[::1] cur = np.empty(d)
    cdef double[::1] prop = np.empty(d)
    with nogil:
        for t in range(T):
            for k in range(d):
                cur[k] = z[t, k]
                prop[k] = z[t, k] + noise[t, k]
            log_a = 0.0
            if t == 0:
                if has_prior:
                    sp = 0.0
                    sc = 0.0
                    for k in range(d):
                        dp = prop[k] - init_mean[k]
                        dc = cur[k] - init_mean[k]
                        sp += dp * dp
                        sc += dc * dc
                    log_a -= 0.5 * (sp - sc) / init_var
            else:
                sp = 0.0
                sc = 0.0
                for k in range(d):
                    dp = prop[k] - z[t - 1, k]
                    dc = cur[k] - z[t - 1, k]
                    sp += dp * dp
                    sc += dc * dc
                log_a -= 0.5 * (sp - sc) / proc_var[t - 1]
            if t < T - 1:
                sp = 0.0
                sc = 0.0
                for k in range(d):
                    dp = z[t + 1, k] - prop[k]
                    dc = z[t + 1, k] - cur[k]
                    sp += dp * dp
                    sc += dc * dc
                log_a -= 0.5 * (sp - sc) / proc_var[t]
            if observed[t]:
                log_a += (_obs_term(y, t, &prop[0], d, obs_var, obs_df)
                          - _obs_term(y, t, &cur[0], d, obs_var, obs_df))
            if log_u[t] < log_a:
                for k in range(d):
                    z[t, k] = prop[k]
                accepted += 1
    return accepted


def gibbs_state_sweep(cnp.int64_t[::1] s, const double[:, ::1] log_inc,
                      const double[:, ::1] log_gamma, const double[::1] log_delta,
                      const double[::1] u):
    cdef Py_ssize_t T = s.shape[0], N = log_gamma.shape[0]
    cdef Py_ssize_t t, i, choice
    cdef double m, total, target, acc
    cdef double[::1] lp = np.empty(N)
    cdef double[::1] p = np.empty(N)
    with nogil:
        for t in range(T):
            for i in range(N):
                if t == 0:
                    lp[i] = log_delta[i]
                else:
                    lp[i] = log_gamma[s[t - 1], i]
                if t < T - 1:
                    lp[i] = lp[i] + log_inc[t, i] + log_gamma[i, s[t + 1]]
            m = lp[0]
            for i in range(1, N):
                if lp[i] > m:
                    m = lp[i]
            total = 0.0
            for i in range(N):
                p[i] = exp(lp[i] - m)
                total += p[i]
            target = u[t] * total
            acc = 0.0
            choice = N - 1
            for i in range(N):
                acc += p[i]
                if target < acc:
                    choice = i
                    break
            s[t] = choice
