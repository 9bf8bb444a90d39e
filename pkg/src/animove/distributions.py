"""Emission and error distributions.

Every distribution is an immutable dataclass with vectorised ``logpdf`` and
(univariate only) ``cdf``. Parameters are checked on construction, so the
density code can assume a valid object.

Each class also knows how to map itself to and from an unconstrained
"working" vector (logs for positive scalars, logits for probabilities, raw
angles wrapped on the way back). The HMM fitter relies on this.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np
from scipy import special
from scipy.stats import vonmises as _sp_vonmises

from .trajectory import wrap_angle

__all__ = [
    "Distribution",
    "Gamma",
    "Weibull",
    "ZeroInflated",
    "VonMises",
    "WrappedCauchy",
    "Gaussian",
    "MultivariateGaussian",
    "StudentT",
    "log_density",
    "sample",
    "cdf",
    "dist_from_dict",
]

LOG_2PI = math.log(2.0 * math.pi)


def _logit(p):
    return math.log(p) - math.log1p(-p)


def _expit(x):
    return float(special.expit(x))


class Distribution:
    """Common interface. Subclasses are frozen dataclasses."""

    type_name: str = ""
    circular = False
    univariate = True

    def logpdf(self, x):
        raise NotImplementedError

    def cdf(self, x):
        raise NotImplementedError

    def cdf_left(self, x):
        """Left limit ``P(X < x)``; differs from `cdf` only at atoms."""
        return self.cdf(x)

    def sample(self, rng, size=None):
        raise NotImplementedError

    def mean(self):
        raise NotImplementedError

    def to_working(self) -> np.ndarray:
        raise NotImplementedError

    @classmethod
    def from_working(cls, w, template=None):
        raise NotImplementedError

    @property
    def n_working(self):
        return len(self.to_working())

    def to_dict(self):
        return {"type": self.type_name,
                "params": {f.name: float(getattr(self, f.name)) for f in fields(self)}}


def _positive(name, v):
    if not (np.isfinite(v) and v > 0):
        raise ValueError(f"{name} must be positive and finite, got {v}")


@dataclass(frozen=True)
class Gamma(Distribution):
    shape: float
    scale: float
    type_name = "gamma"

    def __post_init__(self):
        _positive("shape", self.shape)
        _positive("scale", self.scale)

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        k, th = self.shape, self.scale
        with np.errstate(divide="ignore", invalid="ignore"):
            out = (k - 1.0) * np.log(x) - x / th - special.gammaln(k) - k * math.log(th)
        return np.where(x > 0, out, -np.inf)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x > 0, special.gammainc(self.shape, np.maximum(x, 0) / self.scale), 0.0)

    def sample(self, rng, size=None):
        return rng.gamma(self.shape, self.scale, size)

    def mean(self):
        return self.shape * self.scale

    def to_working(self):
        return np.array([math.log(self.shape), math.log(self.scale)])

    @classmethod
    def from_working(cls, w, template=None):
        return cls(math.exp(w[0]), math.exp(w[1]))

    @classmethod
    def from_mean_sd(cls, mean, sd):
        k = (mean / sd) ** 2
        return cls(k, mean / k)


@dataclass(frozen=True)
class Weibull(Distribution):
    shape: float
    scale: float
    type_name = "weibull"

    def __post_init__(self):
        _positive("shape", self.shape)
        _positive("scale", self.scale)

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        k, lam = self.shape, self.scale
        with np.errstate(divide="ignore", invalid="ignore"):
            z = x / lam
            out = math.log(k / lam) + (k - 1.0) * np.log(z) - z ** k
        return np.where(x > 0, out, -np.inf)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        z = np.maximum(x, 0) / self.scale
        return np.where(x > 0, -np.expm1(-(z ** self.shape)), 0.0)

    def sample(self, rng, size=None):
        return self.scale * rng.weibull(self.shape, size)

    def mean(self):
        return self.scale * math.gamma(1.0 + 1.0 / self.shape)

    def to_working(self):
        return np.array([math.log(self.shape), math.log(self.scale)])

    @classmethod
    def from_working(cls, w, template=None):
        return cls(math.exp(w[0]), math.exp(w[1]))


@dataclass(frozen=True)
class ZeroInflated(Distribution):
    """Point mass ``zero_mass`` at 0 mixed with a strictly positive ``inner``."""

    zero_mass: float
    inner: Distribution
    type_name = "zero_inflated"

    def __post_init__(self):
        if not (0.0 <= self.zero_mass <= 1.0):
            raise ValueError(f"zero_mass must lie in [0, 1], got {self.zero_mass}")
        if not isinstance(self.inner, (Gamma, Weibull)):
            raise ValueError("inner distribution must be positive-valued (gamma or Weibull)")

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        p0 = self.zero_mass
        with np.errstate(divide="ignore"):
            at0 = math.log(p0) if p0 > 0 else -math.inf
            pos = (math.log1p(-p0) if p0 < 1 else -math.inf) + self.inner.logpdf(x)
        return np.where(x == 0, at0, np.where(x > 0, pos, -np.inf))

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        p0 = self.zero_mass
        return np.where(x >= 0, p0 + (1.0 - p0) * self.inner.cdf(x), 0.0)

    def cdf_left(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x > 0, self.cdf(x), 0.0)

    def sample(self, rng, size=None):
        zero = rng.random(size) < self.zero_mass
        draw = self.inner.sample(rng, size)
        return np.where(zero, 0.0, draw) if size is not None else (0.0 if zero else float(draw))

    def mean(self):
        return (1.0 - self.zero_mass) * self.inner.mean()

    def to_working(self):
        p = min(max(self.zero_mass, 1e-12), 1 - 1e-12)
        return np.concatenate([[_logit(p)], self.inner.to_working()])

    @classmethod
    def from_working(cls, w, template=None):
        inner_cls = type(template.inner) if template is not None else Gamma
        return cls(_expit(w[0]), inner_cls.from_working(w[1:]))

    def to_dict(self):
        return {"type": self.type_name,
                "params": {"zero_mass": float(self.zero_mass), "inner": self.inner.to_dict()}}


class _Circular(Distribution):
    circular = True

    def _centered_cdf(self, x):
        raise NotImplementedError

    def _centered_sf(self, x):
        return 1.0 - self._centered_cdf(x)

    def cdf(self, x):
        """``P(-pi < X <= x)`` for x in ``(-pi, pi]``.

        In centered coordinates the arc from ``-pi`` to ``x`` runs from ``a``
        to ``u``; when it wraps past ``pi`` the mass is ``sf(a) + F(u)``.
        """
        x = np.asarray(x, dtype=float)
        a = np.asarray(wrap_angle(-math.pi - self.mu))
        u = np.asarray(wrap_angle(x - self.mu))
        fu = self._centered_cdf(u)
        out = np.where(u >= a, fu - self._centered_cdf(a), self._centered_sf(a) + fu)
        out = np.clip(out, 0.0, 1.0)
        out = np.where(x >= math.pi, 1.0, out)
        return np.where(x <= -math.pi, 0.0, out)

    def mean(self):
        return self.mu


@dataclass(frozen=True)
class VonMises(_Circular):
    mu: float
    kappa: float
    type_name = "von_mises"

    def __post_init__(self):
        if not (np.isfinite(self.kappa) and self.kappa >= 0):
            raise ValueError(f"kappa must be >= 0, got {self.kappa}")
        if not np.isfinite(self.mu):
            raise ValueError("mu must be finite")
        object.__setattr__(self, "mu", float(wrap_angle(self.mu)))

    def log_normalizer(self):
        # log(2 pi I0(kappa)), overflow-free via the scaled Bessel function
        return LOG_2PI + math.log(special.i0e(self.kappa)) + self.kappa

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        return self.kappa * np.cos(x - self.mu) - self.log_normalizer()

    def _centered_cdf(self, x):
        if self.kappa == 0:
            return (x + math.pi) / (2 * math.pi)
        return _sp_vonmises.cdf(x, self.kappa)

    def _centered_sf(self, x):
        if self.kappa == 0:
            return (math.pi - x) / (2 * math.pi)
        return _sp_vonmises.sf(x, self.kappa)

    def sample(self, rng, size=None):
        return wrap_angle(rng.vonmises(self.mu, self.kappa, size))

    def to_working(self):
        return np.array([self.mu, math.log(max(self.kappa, 1e-12))])

    @classmethod
    def from_working(cls, w, template=None):
        return cls(float(wrap_angle(w[0])), math.exp(w[1]))


@dataclass(frozen=True)
class WrappedCauchy(_Circular):
    mu: float
    rho: float
    type_name = "wrapped_cauchy"

    def __post_init__(self):
        if not (0.0 <= self.rho < 1.0):
            raise ValueError(f"rho must lie in [0, 1), got {self.rho}")
        object.__setattr__(self, "mu", float(wrap_angle(self.mu)))

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        r = self.rho
        return math.log1p(-r * r) - LOG_2PI - np.log1p(r * r - 2 * r * np.cos(x - self.mu))

    def _centered_cdf(self, x):
        c = (1 + self.rho) / (1 - self.rho)
        with np.errstate(over="ignore"):
            return 0.5 + np.arctan(c * np.tan(x / 2.0)) / math.pi

    def _centered_sf(self, x):
        c = (1 + self.rho) / (1 - self.rho)
        with np.errstate(over="ignore"):
            return 0.5 - np.arctan(c * np.tan(x / 2.0)) / math.pi

    def sample(self, rng, size=None):
        if self.rho == 0:
            return rng.uniform(-math.pi, math.pi, size)
        gam = -math.log(self.rho)
        return wrap_angle(self.mu + gam * rng.standard_cauchy(size))

    def to_working(self):
        return np.array([self.mu, _logit(min(max(self.rho, 1e-12), 1 - 1e-12))])

    @classmethod
    def from_working(cls, w, template=None):
        return cls(float(wrap_angle(w[0])), min(_expit(w[1]), 1 - 1e-15))


@dataclass(frozen=True)
class Gaussian(Distribution):
    mean_: float
    var: float
    type_name = "gaussian"

    def __post_init__(self):
        _positive("var", self.var)

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        return -0.5 * (LOG_2PI + math.log(self.var) + (x - self.mean_) ** 2 / self.var)

    def cdf(self, x):
        return special.ndtr((np.asarray(x, dtype=float) - self.mean_) / math.sqrt(self.var))

    def sample(self, rng, size=None):
        return rng.normal(self.mean_, math.sqrt(self.var), size)

    def mean(self):
        return self.mean_

    def to_working(self):
        return np.array([self.mean_, math.log(self.var)])

    @classmethod
    def from_working(cls, w, template=None):
        return cls(float(w[0]), math.exp(w[1]))

    def to_dict(self):
        return {"type": self.type_name, "params": {"mean": float(self.mean_), "var": float(self.var)}}


@dataclass(frozen=True)
class MultivariateGaussian(Distribution):
    mean_: np.ndarray
    cov: np.ndarray
    type_name = "mvn"
    univariate = False

    def __post_init__(self):
        m = np.atleast_1d(np.array(self.mean_, dtype=float))
        c = np.atleast_2d(np.array(self.cov, dtype=float))
        if c.shape != (m.size, m.size) or not np.allclose(c, c.T):
            raise ValueError("covariance must be a symmetric matrix matching the mean")
        try:
            chol = np.linalg.cholesky(c)
        except np.linalg.LinAlgError:
            raise ValueError("covariance must be positive definite") from None
        m.flags.writeable = False
        c.flags.writeable = False
        object.__setattr__(self, "mean_", m)
        object.__setattr__(self, "cov", c)
        object.__setattr__(self, "_chol", chol)

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        d = self.mean_.size
        r = (x - self.mean_).reshape(-1, d)
        sol = np.linalg.solve(self._chol, r.T)
        logdet = 2.0 * np.log(np.diag(self._chol)).sum()
        out = -0.5 * (d * LOG_2PI + logdet + (sol ** 2).sum(axis=0))
        return out.reshape(x.shape[:-1]) if x.ndim > 1 else float(out[0])

    def cdf(self, x):
        raise TypeError("cdf is only defined for univariate distributions")

    def sample(self, rng, size=None):
        n = 1 if size is None else size
        z = rng.standard_normal((n, self.mean_.size))
        out = self.mean_ + z @ self._chol.T
        return out[0] if size is None else out

    def mean(self):
        return self.mean_.copy()

    def to_dict(self):
        return {"type": self.type_name,
                "params": {"mean": self.mean_.tolist(), "cov": self.cov.tolist()}}


@dataclass(frozen=True)
class StudentT(Distribution):
    loc: float
    scale: float
    df: float
    type_name = "student_t"

    def __post_init__(self):
        _positive("scale", self.scale)
        _positive("df", self.df)

    def logpdf(self, x):
        z = (np.asarray(x, dtype=float) - self.loc) / self.scale
        nu = self.df
        c = special.gammaln(0.5 * (nu + 1)) - special.gammaln(0.5 * nu) - 0.5 * math.log(nu * math.pi)
        return c - math.log(self.scale) - 0.5 * (nu + 1) * np.log1p(z * z / nu)

    def cdf(self, x):
        return special.stdtr(self.df, (np.asarray(x, dtype=float) - self.loc) / self.scale)

    def sample(self, rng, size=None):
        return self.loc + self.scale * rng.standard_t(self.df, size)

    def mean(self):
        return self.loc if self.df > 1 else math.nan

    def to_working(self):
        return np.array([self.loc, math.log(self.scale), math.log(self.df)])

    @classmethod
    def from_working(cls, w, template=None):
        return cls(float(w[0]), math.exp(w[1]), math.exp(w[2]))


_REGISTRY = {c.type_name: c for c in (Gamma, Weibull, ZeroInflated, VonMises, WrappedCauchy,
                                      Gaussian, MultivariateGaussian, StudentT)}


def dist_from_dict(obj) -> Distribution:
    """Inverse of ``Distribution.to_dict``."""
    try:
        kind = obj["type"]
        params = dict(obj.get("params", {}))
    except (TypeError, KeyError):
        raise ValueError(f"distribution spec must be {{type, params}}, got {obj!r}") from None
    if kind not in _REGISTRY:
        raise ValueError(f"unknown distribution type {kind!r}; expected one of {sorted(_REGISTRY)}")
    if kind == "zero_inflated":
        return ZeroInflated(float(params["zero_mass"]), dist_from_dict(params["inner"]))
    if kind in ("gaussian", "mvn"):
        params["mean_"] = params.pop("mean")
    return _REGISTRY[kind](**params)


def log_density(d: Distribution, x):
    return d.logpdf(x)


def sample(d: Distribution, rng, size=None):
    return d.sample(rng, size)


def cdf(d: Distribution, x):
    if not d.univariate:
        raise TypeError("cdf is only defined for univariate distributions")
    return d.cdf(x)
