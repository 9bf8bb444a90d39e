"""AIC-based forward selection of transition covariates."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..trajectory import StepTurnSeries
from .fitting import OptimizerSettings, fit_mle
from .model import FittedHmm, HmmSpec

__all__ = ["SelectionStep", "SelectionReport", "select_covariates_forward", "MAX_CANDIDATES"]

MAX_CANDIDATES = 32


@dataclass(frozen=True)
class SelectionStep:
    covariate: str
    aic: float
    delta_aic: float
    loglik: float
    candidate_aics: dict


@dataclass(frozen=True)
class SelectionReport:
    base_aic: float
    steps: list
    selected: tuple
    fit: FittedHmm
    base_fit: FittedHmm
    standardization: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "base_aic": self.base_aic,
            "selected": list(self.selected),
            "steps": [s.__dict__ for s in self.steps],
            "standardization": self.standardization,
            "final_fit": self.fit.to_dict(),
        }


def _standardized(series_list, names):
    stats = {}
    for name in names:
        col = np.concatenate([s.covariates[name] for s in series_list])
        sd = float(col.std())
        stats[name] = {"mean": float(col.mean()), "sd": sd if sd > 0 else 1.0}
    out = []
    for s in series_list:
        covs = dict(s.covariates)
        for name in names:
            covs[name] = (covs[name] - stats[name]["mean"]) / stats[name]["sd"]
        out.append(StepTurnSeries(s.steps, s.turns, s.step_valid, s.turn_valid, s.times, covs, s.id))
    return out, stats


def select_covariates_forward(base: HmmSpec, candidates, data, *, standardize=True,
                              base_fit: FittedHmm | None = None,
                              settings: OptimizerSettings | None = None,
                              candidate_settings: OptimizerSettings | None = None) -> SelectionReport:
    """Greedy forward selection on AIC.

    Each round refits every remaining candidate added to the current model,
    warm-started from the current fit with slopes at zero. The best candidate
    is accepted when it strictly lowers AIC; ties go to the first listed.
    Covariates are z-scored across all tracks when ``standardize`` is set.
    """
    candidates = list(candidates)
    if len(candidates) > MAX_CANDIDATES:
        raise ValueError(f"at most {MAX_CANDIDATES} candidate covariates are supported")
    if len(set(candidates)) != len(candidates):
        raise ValueError("duplicate candidate covariates")
    if base.covariate_names:
        raise ValueError("base model must not already contain covariates")
    series = [data] if isinstance(data, StepTurnSeries) else list(data)
    for name in candidates:
        for s in series:
            if name not in s.covariates:
                raise KeyError(f"covariate {name!r} missing from track {s.id!r}")
    stats = {}
    if standardize and candidates:
        series, stats = _standardized(series, candidates)
    settings = settings or OptimizerSettings()
    candidate_settings = candidate_settings or OptimizerSettings(n_starts=1, seed=settings.seed,
                                                                 maxiter=settings.maxiter,
                                                                 gtol=settings.gtol)
    if base_fit is None:
        base_fit = fit_mle(base, series, settings=settings)
    current = base_fit
    base_aic = current.aic
    remaining = list(candidates)
    steps = []
    while remaining:
        trial = {}
        fits = {}
        for name in remaining:
            spec = current.spec.with_transition(current.spec.transition.with_covariate(name))
            fits[name] = fit_mle(spec, series, settings=candidate_settings)
            trial[name] = fits[name].aic
        best = min(remaining, key=lambda n: (trial[n], remaining.index(n)))
        if not trial[best] < current.aic:
            break
        steps.append(SelectionStep(best, trial[best], current.aic - trial[best],
                                   fits[best].loglik, trial))
        current = fits[best]
        remaining.remove(best)
    return SelectionReport(base_aic, steps, tuple(s.covariate for s in steps), current,
                           base_fit, stats)
