"""HMM model types and their working-parameter maps."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import special

from ..distributions import Distribution, Gamma, Weibull, ZeroInflated, dist_from_dict

__all__ = ["TransitionModel", "HmmSpec", "FittedHmm", "stationary_distribution"]

INITIAL_MODES = ("auto", "stationary", "uniform", "estimated")

# working-scale clamp keeping exp() and softmax finite during optimization
_WCLIP = 30.0


def stationary_distribution(gamma) -> np.ndarray:
    """Stationary distribution of a row-stochastic matrix (solves dG = d, sum d = 1)."""
    gamma = np.asarray(gamma, dtype=float)
    n = gamma.shape[0]
    a = np.vstack([(gamma.T - np.eye(n)), np.ones((1, n))])
    b = np.zeros(n + 1)
    b[-1] = 1.0
    d = np.linalg.lstsq(a, b, rcond=None)[0]
    d = np.clip(d, 0.0, None)
    return d / d.sum()


@dataclass(frozen=True)
class TransitionModel:
    """Covariate-linked transition probabilities via the multinomial logit link.

    ``eta_ij = beta0[i, j] + sum_l covs[l] * beta[l, i, j]`` for ``i != j`` and
    ``eta_ii = 0``; row ``i`` of the matrix is the softmax of ``eta_i.``.
    Diagonal entries of ``beta0`` and ``beta`` are ignored. Off-diagonal
    ``beta0`` may be ``-inf`` (transition forbidden).

    ``initial`` selects the initial distribution: ``"stationary"`` (of the
    matrix at zero covariates), ``"uniform"``, ``"estimated"`` (the vector
    ``delta``, a free parameter when fitting) or ``"auto"`` (stationary when
    there are no covariates, uniform otherwise).
    """

    n_states: int
    beta0: np.ndarray | None = None
    beta: np.ndarray | None = None
    covariate_names: tuple = ()
    initial: str = "auto"
    delta: np.ndarray | None = None

    def __post_init__(self):
        n = int(self.n_states)
        if n < 1:
            raise ValueError("n_states must be >= 1")
        names = tuple(self.covariate_names)
        p = len(names)
        b0 = np.zeros((n, n)) if self.beta0 is None else np.array(self.beta0, dtype=float)
        b = np.zeros((p, n, n)) if self.beta is None else np.array(self.beta, dtype=float).reshape(p, n, n)
        if b0.shape != (n, n):
            raise ValueError(f"beta0 must be {n}x{n}")
        off = ~np.eye(n, dtype=bool)
        if np.any(np.isnan(b0)) or np.any(b0[off] == np.inf) or not np.all(np.isfinite(b)):
            raise ValueError("transition coefficients must be finite (beta0 may be -inf)")
        np.fill_diagonal(b0, 0.0)
        for l in range(p):
            np.fill_diagonal(b[l], 0.0)
        if self.initial not in INITIAL_MODES:
            raise ValueError(f"initial must be one of {INITIAL_MODES}")
        delta = None
        if self.initial == "estimated":
            delta = np.full(n, 1.0 / n) if self.delta is None else np.array(self.delta, dtype=float)
            if delta.shape != (n,) or np.any(delta < 0) or abs(delta.sum() - 1) > 1e-9:
                raise ValueError("delta must be a probability vector of length n_states")
        for a in (b0, b) + ((delta,) if delta is not None else ()):
            a.flags.writeable = False
        object.__setattr__(self, "n_states", n)
        object.__setattr__(self, "beta0", b0)
        object.__setattr__(self, "beta", b)
        object.__setattr__(self, "covariate_names", names)
        object.__setattr__(self, "delta", delta)

    @property
    def n_covariates(self):
        return len(self.covariate_names)

    def matrices(self, covs=None) -> np.ndarray:
        """Transition matrices for each row of ``covs`` (shape ``(T, p)``) as ``(T, N, N)``.

        With no covariates a single ``(1, N, N)`` matrix is returned.
        """
        n = self.n_states
        if self.n_covariates == 0 or covs is None:
            eta = self.beta0[None]
        else:
            covs = np.asarray(covs, dtype=float).reshape(-1, self.n_covariates)
            eta = self.beta0[None] + np.einsum("tl,lij->tij", covs, self.beta)
        eta = np.array(eta)
        idx = np.arange(n)
        eta[:, idx, idx] = 0.0
        # row-wise softmax; looping over the N columns beats axis reductions for small N
        m = eta[..., 0].copy()
        for j in range(1, n):
            np.maximum(m, eta[..., j], out=m)
        eta -= m[..., None]
        np.exp(eta, out=eta)
        tot = eta[..., 0].copy()
        for j in range(1, n):
            tot += eta[..., j]
        eta /= tot[..., None]
        return eta

    def initial_distribution(self, gamma0=None) -> np.ndarray:
        """Initial state distribution; ``gamma0`` is the matrix at zero covariates."""
        n = self.n_states
        mode = self.initial
        if mode == "auto":
            mode = "stationary" if self.n_covariates == 0 else "uniform"
        if mode == "uniform":
            return np.full(n, 1.0 / n)
        if mode == "estimated":
            return np.array(self.delta)
        if gamma0 is None:
            gamma0 = self.matrices(np.zeros((1, self.n_covariates)))[0]
        return stationary_distribution(gamma0)

    @property
    def n_working(self):
        n, p = self.n_states, self.n_covariates
        k = (p + 1) * n * (n - 1)
        return k + (n - 1 if self.initial == "estimated" else 0)

    def to_working(self):
        n = self.n_states
        off = ~np.eye(n, dtype=bool)
        parts = [np.clip(self.beta0[off], -_WCLIP, _WCLIP)]
        parts += [self.beta[l][off] for l in range(self.n_covariates)]
        if self.initial == "estimated":
            d = np.clip(self.delta, 1e-12, None)
            parts.append(np.log(d[1:]) - np.log(d[0]))
        return np.concatenate(parts) if parts else np.zeros(0)

    def from_working(self, w):
        n, p = self.n_states, self.n_covariates
        off = ~np.eye(n, dtype=bool)
        m = n * (n - 1)
        b0 = np.zeros((n, n))
        b0[off] = np.clip(w[:m], -_WCLIP, _WCLIP)
        b = np.zeros((p, n, n))
        for l in range(p):
            b[l][off] = w[m * (l + 1): m * (l + 2)]
        delta = None
        if self.initial == "estimated":
            z = np.concatenate([[0.0], np.clip(w[m * (p + 1):], -_WCLIP, _WCLIP)])
            delta = special.softmax(z)
        return TransitionModel(n, b0, b, self.covariate_names, self.initial, delta)

    def with_covariate(self, name):
        """Copy with one extra covariate whose slopes start at zero.

        An ``"auto"`` initial mode on a covariate-free model is pinned to
        ``"stationary"`` (at zero covariates) so the extended model nests the
        original one.
        """
        n = self.n_states
        beta = np.concatenate([self.beta, np.zeros((1, n, n))])
        initial = self.initial
        if initial == "auto" and self.n_covariates == 0:
            initial = "stationary"
        return TransitionModel(n, self.beta0, beta, self.covariate_names + (name,),
                               initial, self.delta)

    def permuted(self, perm):
        """Relabel states so new state ``a`` is old state ``perm[a]``."""
        perm = np.asarray(perm)
        b0 = self.beta0[np.ix_(perm, perm)]
        b = self.beta[:, perm][:, :, perm]
        delta = None if self.delta is None else self.delta[perm]
        return TransitionModel(self.n_states, b0, b, self.covariate_names, self.initial, delta)

    def to_dict(self):
        out = {"n_states": self.n_states,
               "beta0": [[_json_float(v) for v in row] for row in self.beta0],
               "beta": self.beta.tolist(),
               "covariate_names": list(self.covariate_names),
               "initial": self.initial}
        if self.delta is not None:
            out["delta"] = self.delta.tolist()
        return out

    @classmethod
    def from_dict(cls, obj):
        b0 = obj.get("beta0")
        if b0 is not None:
            b0 = [[-np.inf if v in ("-inf", "-Infinity") else v for v in row] for row in b0]
        return cls(int(obj["n_states"]), b0, obj.get("beta"), tuple(obj.get("covariate_names", ())),
                   obj.get("initial", "auto"), obj.get("delta"))


def _json_float(v):
    return "-inf" if v == -np.inf else float(v)


_STEP_TYPES = (Gamma, Weibull, ZeroInflated)


@dataclass(frozen=True)
class HmmSpec:
    """Transition model plus per-state step and (optional) turn distributions."""

    transition: TransitionModel
    step_dists: tuple
    turn_dists: tuple | None = None

    def __post_init__(self):
        n = self.transition.n_states
        steps = tuple(self.step_dists)
        if len(steps) != n:
            raise ValueError(f"need {n} step distributions, got {len(steps)}")
        if not all(isinstance(d, _STEP_TYPES) for d in steps):
            raise ValueError("step distributions must be supported on [0, inf)")
        turns = None
        if self.turn_dists is not None:
            turns = tuple(self.turn_dists)
            if len(turns) != n:
                raise ValueError(f"need {n} turn distributions, got {len(turns)}")
            if not all(isinstance(d, Distribution) and d.circular for d in turns):
                raise ValueError("turn distributions must be circular")
        object.__setattr__(self, "step_dists", steps)
        object.__setattr__(self, "turn_dists", turns)

    @property
    def n_states(self):
        return self.transition.n_states

    @property
    def covariate_names(self):
        return self.transition.covariate_names

    def _dists(self):
        return self.step_dists + (self.turn_dists or ())

    @property
    def n_params(self):
        """Number of free parameters (length of the working vector)."""
        return sum(d.n_working for d in self._dists()) + self.transition.n_working

    def to_working(self) -> np.ndarray:
        parts = [d.to_working() for d in self._dists()] + [self.transition.to_working()]
        return np.concatenate(parts)

    def from_working(self, theta) -> "HmmSpec":
        theta = np.asarray(theta, dtype=float)
        out, k = [], 0
        for d in self._dists():
            m = d.n_working
            w = np.clip(theta[k:k + m], -_WCLIP, _WCLIP)
            out.append(type(d).from_working(w, template=d))
            k += m
        n = self.n_states
        tm = self.transition.from_working(theta[k:])
        turns = tuple(out[n:]) if self.turn_dists is not None else None
        return HmmSpec(tm, tuple(out[:n]), turns)

    def step_means(self):
        return np.array([d.mean() for d in self.step_dists])

    def permuted(self, perm):
        perm = list(perm)
        turns = None if self.turn_dists is None else tuple(self.turn_dists[i] for i in perm)
        return HmmSpec(self.transition.permuted(perm), tuple(self.step_dists[i] for i in perm), turns)

    def with_transition(self, tm: TransitionModel) -> "HmmSpec":
        return HmmSpec(tm, self.step_dists, self.turn_dists)

    def to_dict(self):
        out = {"transition": self.transition.to_dict(),
               "step_dists": [d.to_dict() for d in self.step_dists]}
        if self.turn_dists is not None:
            out["turn_dists"] = [d.to_dict() for d in self.turn_dists]
        return out

    @classmethod
    def from_dict(cls, obj):
        try:
            tm = TransitionModel.from_dict(obj["transition"])
            steps = tuple(dist_from_dict(d) for d in obj["step_dists"])
            turns = obj.get("turn_dists")
            turns = None if turns is None else tuple(dist_from_dict(d) for d in turns)
        except KeyError as e:
            raise ValueError(f"HMM spec missing field {e}") from None
        return cls(tm, steps, turns)


@dataclass(frozen=True)
class FittedHmm:
    """Result of maximum-likelihood fitting."""

    spec: HmmSpec
    loglik: float
    theta: np.ndarray
    converged: bool
    report: dict = field(default_factory=dict)

    @property
    def n_params(self):
        return self.spec.n_params

    @property
    def aic(self):
        return -2.0 * self.loglik + 2.0 * self.n_params

    def to_dict(self):
        return {"spec": self.spec.to_dict(), "loglik": self.loglik, "n_params": self.n_params,
                "aic": self.aic, "converged": self.converged,
                "theta": np.asarray(self.theta).tolist(),
                "step_means": self.spec.step_means().tolist(), "report": self.report}
