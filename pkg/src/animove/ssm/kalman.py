"""Kalman filter and Rauch-Tung-Striebel smoother."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .specs import LinearGaussianSsmSpec, observation_mask

__all__ = ["KalmanResult", "SmootherResult", "kalman_filter", "kalman_smoother"]

LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class KalmanResult:
    """Per-time predicted and filtered moments.

    ``pred_*[t]`` are the moments of ``z_t`` given ``y_0..y_{t-1}`` (the prior
    at t = 0); ``filt_*[t]`` condition additionally on ``y_t``.
    """

    spec: LinearGaussianSsmSpec
    pred_means: np.ndarray
    pred_covs: np.ndarray
    filt_means: np.ndarray
    filt_covs: np.ndarray
    loglik_increments: np.ndarray
    observed: np.ndarray

    @property
    def loglik(self):
        return float(math.fsum(self.loglik_increments))


@dataclass(frozen=True)
class SmootherResult:
    means: np.ndarray
    covs: np.ndarray


def kalman_filter(spec: LinearGaussianSsmSpec, obs, mask=None) -> KalmanResult:
    """Exact Gaussian filtering; missing rows skip the update step."""
    y, observed = observation_mask(obs, mask)
    if y.shape[1] != spec.obs_dim:
        raise ValueError(f"observations have {y.shape[1]} columns, spec expects {spec.obs_dim}")
    T, d = y.shape[0], spec.dim
    F, c, Q, H, R = spec.transition, spec.offset, spec.proc_cov, spec.obs_matrix, spec.obs_cov
    eye = np.eye(d)
    pm, pc = np.empty((T, d)), np.empty((T, d, d))
    fm, fc = np.empty((T, d)), np.empty((T, d, d))
    inc = np.zeros(T)
    m, P = spec.init_mean.copy(), spec.init_cov.copy()
    for t in range(T):
        if t > 0:
            m = F @ fm[t - 1] + c
            P = F @ fc[t - 1] @ F.T + Q
            P = 0.5 * (P + P.T)
        pm[t], pc[t] = m, P
        if observed[t]:
            v = y[t] - H @ m
            S = H @ P @ H.T + R
            cf = linalg.cho_factor(S, lower=True)
            K = linalg.cho_solve(cf, H @ P).T
            m = m + K @ v
            A = eye - K @ H
            P = A @ P @ A.T + K @ R @ K.T
            P = 0.5 * (P + P.T)
            logdet = 2.0 * np.log(np.diag(cf[0])).sum()
            inc[t] = -0.5 * (v.size * LOG_2PI + logdet + v @ linalg.cho_solve(cf, v))
        fm[t], fc[t] = m, P
    return KalmanResult(spec, pm, pc, fm, fc, inc, observed)


def kalman_smoother(res: KalmanResult) -> SmootherResult:
    """Backward RTS recursion over a complete filter result."""
    F = res.spec.transition
    T = res.filt_means.shape[0]
    sm, sc = res.filt_means.copy(), res.filt_covs.copy()
    for t in range(T - 2, -1, -1):
        Pp = res.pred_covs[t + 1]
        C = linalg.solve(Pp, F @ res.filt_covs[t], assume_a="sym").T
        sm[t] = res.filt_means[t] + C @ (sm[t + 1] - res.pred_means[t + 1])
        P = res.filt_covs[t] + C @ (sc[t + 1] - Pp) @ C.T
        sc[t] = 0.5 * (P + P.T)
    return SmootherResult(sm, sc)
