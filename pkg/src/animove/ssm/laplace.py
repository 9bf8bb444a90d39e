"""Laplace-approximated marginal likelihood for heavy-tailed observation errors.

The latent path ``z`` is integrated out by a Gaussian approximation at the
mode ``z_hat`` of the joint log-density ``l(z, y)``::

    l_M = l(z_hat, y) - 0.5 * log det(-H) + (n / 2) * log(2 pi)

where ``H`` is the Hessian of ``l`` at the mode and ``n`` the number of
latent coordinates. The Hessian is block tridiagonal, so the inner Newton
iterations and the log-determinant use a banded Cholesky factorization and
cost O(T).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, optimize, special

from .kalman import kalman_filter, kalman_smoother
from .specs import HeavyTailSsmSpec, LinearGaussianSsmSpec, observation_mask

__all__ = ["LaplaceResult", "LaplaceDivergenceError", "laplace_marginal", "joint_log_density",
           "LaplaceFit", "fit_laplace"]

LOG_2PI = math.log(2.0 * math.pi)


class LaplaceDivergenceError(RuntimeError):
    """Inner Newton optimization failed; ``trace`` holds (iteration, objective, max|grad|)."""

    def __init__(self, msg, trace):
        super().__init__(msg)
        self.trace = trace


@dataclass(frozen=True)
class LaplaceResult:
    loglik: float
    mode: np.ndarray
    joint_at_mode: float
    logdet: float
    iterations: int
    trace: list = field(default_factory=list)


class _Model:
    """Joint log-density pieces for one spec/observation set."""

    def __init__(self, spec: HeavyTailSsmSpec, obs, mask=None):
        core = spec.core
        y, observed = observation_mask(obs, mask)
        if y.shape[0] == 0:
            raise ValueError("observation sequence is empty")
        if y.shape[1] != core.obs_dim:
            raise ValueError(f"observations have {y.shape[1]} columns, spec expects {core.obs_dim}")
        self.spec, self.y, self.obs = spec, y, observed
        self.T, self.d = y.shape[0], core.dim
        self.F, self.c, self.H = core.transition, core.offset, core.obs_matrix
        self.Qi = linalg.inv(core.proc_cov)
        self.P0i = linalg.inv(core.init_cov)
        _, self.ld_Q = np.linalg.slogdet(core.proc_cov)
        _, self.ld_P0 = np.linalg.slogdet(core.init_cov)
        nu, s = spec.df, spec.obs_scale
        self.nu, self.s2 = nu, s * s
        m = core.obs_dim
        n_obs = int(observed.sum()) * m
        if spec.gaussian:
            self.obs_const = -0.5 * n_obs * (LOG_2PI + math.log(self.s2))
        else:
            c = special.gammaln(0.5 * (nu + 1)) - special.gammaln(0.5 * nu) - 0.5 * math.log(nu * math.pi * self.s2)
            self.obs_const = n_obs * c
        # prior precision blocks (constant in z)
        d, T, F, Qi = self.d, self.T, self.F, self.Qi
        diag = np.empty((T, d, d))
        diag[0] = self.P0i
        diag[1:] = Qi
        diag[:-1] += F.T @ Qi @ F
        self.prior_diag = diag
        self.prior_off = -F.T @ Qi  # block (t, t+1)

    def _resid(self, z):
        r = np.empty_like(z)
        r[0] = z[0] - self.spec.core.init_mean
        r[1:] = z[1:] - z[:-1] @ self.F.T - self.c
        return r

    def _obs_err(self, z):
        return (self.y - z @ self.H.T)[self.obs]

    def joint(self, z):
        r = self._resid(z)
        lp = -0.5 * (r[0] @ self.P0i @ r[0] + self.ld_P0 + self.d * LOG_2PI)
        if self.T > 1:
            rr = r[1:]
            lp -= 0.5 * (np.einsum("ti,ij,tj->", rr, self.Qi, rr) + (self.T - 1) * (self.ld_Q + self.d * LOG_2PI))
        e = self._obs_err(z)
        if self.spec.gaussian:
            lo = -0.5 * (e * e).sum() / self.s2
        else:
            lo = -0.5 * (self.nu + 1) * np.log1p(e * e / (self.nu * self.s2)).sum()
        return float(lp + lo + self.obs_const)

    def grad_hess(self, z, clip=False):
        """Gradient of ``-l`` and the banded ``-Hessian`` (upper form)."""
        d, T = self.d, self.T
        r = self._resid(z)
        g = np.empty_like(z)
        g[0] = self.P0i @ r[0]
        g[1:] = r[1:] @ self.Qi
        g[:-1] -= r[1:] @ self.Qi @ self.F
        e = self._obs_err(z)
        if self.spec.gaussian:
            psi = -e / self.s2
            curv = np.full_like(e, 1.0 / self.s2)
        else:
            den = self.nu * self.s2 + e * e
            psi = -(self.nu + 1) * e / den
            curv = (self.nu + 1) * (self.nu * self.s2 - e * e) / (den * den)
        if clip:
            curv = np.maximum(curv, 0.0)
        H = self.H
        g[self.obs] += psi @ H
        diag = self.prior_diag.copy()
        diag[self.obs] += np.einsum("ki,tk,kj->tij", H, curv, H)
        return g, _to_band(diag, self.prior_off, T, d)


def _to_band(diag, off, T, d):
    """Upper banded storage of a symmetric block-tridiagonal matrix."""
    u = 2 * d - 1
    n = T * d
    ab = np.zeros((u + 1, n))
    for a in range(d):
        for b in range(a, d):
            k = b - a
            ab[u - k, np.arange(T) * d + b] = diag[:, a, b]
    if T > 1:
        for a in range(d):
            for b in range(d):
                k = d + b - a
                if k <= u:
                    cols = np.arange(1, T) * d + b
                    ab[u - k, cols] = off[a, b]
    return ab


def _logdet_band(ab):
    cb = linalg.cholesky_banded(ab, lower=False)
    return 2.0 * np.log(cb[-1]).sum(), cb


def _initial_path(spec: HeavyTailSsmSpec, y, observed):
    core = spec.core
    var = spec.obs_scale ** 2
    if not spec.gaussian and spec.df > 2:
        var *= spec.df / (spec.df - 2)
    g = LinearGaussianSsmSpec(core.transition, core.offset, core.proc_cov, core.obs_matrix,
                              var * np.eye(core.obs_dim), core.init_mean, core.init_cov)
    return kalman_smoother(kalman_filter(g, y, ~observed)).means


def laplace_marginal(spec: HeavyTailSsmSpec, obs, mask=None, *, z0=None, tol=1e-8,
                     max_iter=100) -> LaplaceResult:
    """Laplace-approximated marginal log-likelihood ``l_M``.

    Newton iterations stop when ``max|grad| < tol``. Where the Hessian of the
    Student-t terms is not negative definite, negative curvature is clipped
    to zero for the step direction and a backtracking line search keeps the
    objective increasing. The log-determinant uses the exact Hessian.
    """
    m = _Model(spec, obs, mask)
    z = _initial_path(spec, m.y, m.obs) if z0 is None else np.array(z0, dtype=float).reshape(m.T, m.d)
    f = -m.joint(z)
    trace = []
    for it in range(max_iter + 1):
        g, ab = m.grad_hess(z)
        gmax = float(np.abs(g).max())
        trace.append((it, f, gmax))
        if gmax < tol:
            break
        if it == max_iter:
            raise LaplaceDivergenceError(f"inner Newton did not converge in {max_iter} iterations", trace)
        try:
            cb = linalg.cholesky_banded(ab, lower=False)
        except linalg.LinAlgError:
            _, ab = m.grad_hess(z, clip=True)
            cb = linalg.cholesky_banded(ab, lower=False)
        step = linalg.cho_solve_banded((cb, False), g.reshape(-1)).reshape(z.shape)
        a = 1.0
        slope = float(g.reshape(-1) @ step.reshape(-1))
        noise = 1e-12 * max(1.0, abs(f))  # objective changes below this are roundoff
        while True:
            zn = z - a * step
            fn = -m.joint(zn)
            if fn <= f - 1e-4 * a * slope or fn - f <= noise or a < 1e-10:
                break
            a *= 0.5
        if not np.isfinite(fn):
            raise LaplaceDivergenceError("non-finite joint density during inner Newton", trace)
        if a < 1e-10 and fn > f:
            # no descent possible at machine precision; accept if gradient is tiny in relative terms
            if gmax < 1e-6 * max(1.0, abs(f)):
                break
            raise LaplaceDivergenceError("line search failed in inner Newton", trace)
        z, f = zn, fn
    try:
        logdet, _ = _logdet_band(ab)
    except linalg.LinAlgError:
        raise LaplaceDivergenceError("Hessian at the mode is not negative definite", trace) from None
    n = m.T * m.d
    joint = -f
    ll = joint - 0.5 * logdet + 0.5 * n * LOG_2PI
    return LaplaceResult(float(ll), z, joint, float(logdet), len(trace) - 1, trace)


def joint_log_density(spec: HeavyTailSsmSpec, obs, z, mask=None) -> float:
    """``l(z, y)``: log prior of the latent path plus observation log-densities."""
    m = _Model(spec, obs, mask)
    return m.joint(np.asarray(z, dtype=float).reshape(m.T, m.d))


@dataclass(frozen=True)
class LaplaceFit:
    sigma_z: float
    sigma_y: float
    df: float
    loglik: float
    se: dict
    converged: bool
    message: str
    spec: HeavyTailSsmSpec

    def to_dict(self):
        return {"sigma_z": self.sigma_z, "sigma_y": self.sigma_y, "df": self.df,
                "loglik": self.loglik, "se": self.se, "converged": self.converged,
                "message": self.message}


def _fd_hessian(f, x):
    n = x.size
    h = 1e-4 * (1.0 + np.abs(x))
    Hm = np.empty((n, n))
    f0 = f(x)
    for i in range(n):
        for j in range(i, n):
            if i == j:
                xp, xm = x.copy(), x.copy()
                xp[i] += h[i]
                xm[i] -= h[i]
                Hm[i, i] = (f(xp) - 2 * f0 + f(xm)) / (h[i] ** 2)
            else:
                v = []
                for si, sj in ((1, 1), (1, -1), (-1, 1), (-1, -1)):
                    xx = x.copy()
                    xx[i] += si * h[i]
                    xx[j] += sj * h[j]
                    v.append(f(xx))
                Hm[i, j] = Hm[j, i] = (v[0] - v[1] - v[2] + v[3]) / (4 * h[i] * h[j])
    return Hm


def fit_laplace(template: HeavyTailSsmSpec, obs, init=(1.0, 1.0, 5.0), mask=None, *,
                fix_df: bool = False, maxiter: int = 200) -> LaplaceFit:
    """Maximize ``l_M`` over ``(sigma_z, sigma_y, df)`` on the log scale.

    ``fix_df`` holds ``df`` at ``init[2]`` (use ``inf`` for Gaussian errors).
    Standard errors come from the inverse finite-difference Hessian of
    ``-l_M`` in working coordinates, mapped by the delta method.
    """
    y, observed = observation_mask(obs, mask)
    if y.shape[0] == 0:
        raise ValueError("observation sequence is empty")
    cache = {"z": None}
    df_fixed = float(init[2])

    def unpack(w):
        w = np.clip(w, -20, 20)
        df = df_fixed if fix_df else math.exp(w[2])
        return math.exp(w[0]), math.exp(w[1]), df

    def negll(w):
        sz, sy, df = unpack(w)
        try:
            res = laplace_marginal(template.with_params(sz, sy, df), y, ~observed, z0=cache["z"])
        except (LaplaceDivergenceError, linalg.LinAlgError, ValueError):
            return 1e10
        cache["z"] = res.mode
        return -res.loglik

    def grad(w):
        g = np.empty_like(w)
        for i in range(w.size):
            h = 1e-6 * (1.0 + abs(w[i]))
            wp, wm = w.copy(), w.copy()
            wp[i] += h
            wm[i] -= h
            g[i] = (negll(wp) - negll(wm)) / (2 * h)
        return g

    w0 = np.log(np.asarray(init[:2] if fix_df else init, dtype=float))
    res = optimize.minimize(negll, w0, jac=grad, method="BFGS",
                            options={"maxiter": maxiter, "gtol": 1e-4})
    w = res.x
    sz, sy, df = unpack(w)
    ll = -negll(w)
    names = ["sigma_z", "sigma_y"] + ([] if fix_df else ["df"])
    se = {k: math.nan for k in names}
    try:
        cov = np.linalg.inv(_fd_hessian(negll, w))
        nat = np.exp(w)
        for i, k in enumerate(names):
            if cov[i, i] > 0:
                se[k] = float(nat[i] * math.sqrt(cov[i, i]))
    except np.linalg.LinAlgError:
        pass
    converged = bool(res.success) or float(np.abs(grad(w)).max()) < 1e-3
    return LaplaceFit(sz, sy, df, float(ll), se, converged, str(res.message),
                      template.with_params(sz, sy, df))
