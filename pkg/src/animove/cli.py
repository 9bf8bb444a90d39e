"""Command-line front end.

Every run writes its artifacts to a staging directory that is moved into the
output directory only when the run finishes, so a failed run leaves no
partial files. Exit codes: 0 success, 1 input error, 2 numerical
non-convergence (artifacts are still written, with the status recorded).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import shutil
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__, kernels

EXIT_OK, EXIT_INPUT, EXIT_NONCONVERGED = 0, 1, 2
OUT_ENV = "ANIMOVE_OUT_DIR"
DATA_DIR = Path(__file__).resolve().parent / "data"

__all__ = ["main", "build_parser", "InputError"]


class InputError(Exception):
    """Bad or missing input; maps to exit code 1."""


# ---------------------------------------------------------------- helpers

def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return "" if math.isnan(v) else repr(float(v))
    if isinstance(v, (np.integer,)):
        return int(v)
    return v


def _write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def _write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def _load_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON: {exc}") from None


def _parse_overrides(items):
    out = {}
    for item in items or ():
        if "=" not in item:
            raise InputError(f"--tol-override expects KEY=VAL, got {item!r}")
        k, v = item.split("=", 1)
        try:
            val = json.loads(v)
        except json.JSONDecodeError:
            val = v
        out[k.strip()] = val
    return out


def _require_seed(args):
    if args.seed is None:
        raise InputError(f"{args.command} is stochastic: --seed is required")
    return int(args.seed)


def _require(args, name):
    v = getattr(args, name)
    if v is None:
        raise InputError(f"{args.command} requires --{name.replace('_', '-')}")
    return v


def _time_grid(cfg):
    if "times" in cfg:
        t = np.asarray(cfg["times"], dtype=float)
    else:
        t0 = float(cfg.get("t0", 0.0))
        T = float(cfg.get("T", 100.0))
        dt = float(cfg.get("dt", 1.0))
        n = int(round((T - t0) / dt))
        t = t0 + dt * np.arange(n + 1)
    if t.ndim != 1 or t.size < 1 or np.any(np.diff(t) <= 0):
        raise InputError("time grid must be a non-empty strictly increasing list")
    return t


def _config_hash(cfg):
    blob = json.dumps(cfg, sort_keys=True, default=_json_default).encode()
    return hashlib.sha256(blob).hexdigest()


def _load_tracks(path):
    from .trajectory import load_trajectory
    return load_trajectory(path)


def _read_obs_csv(path):
    """Observations for filtering.

    Either a trajectory CSV (columns ``id, time, x, y``; one track) or a plain
    ``time, y1, ..., yd`` table. Empty or NaN cells mark missing observations.
    """
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from None
    if len(rows) < 2:
        raise InputError(f"{path}: no data rows")
    header = [h.strip() for h in rows[0]]
    if {"x", "y"} <= set(header) and "id" in header:
        tracks = _load_tracks(path)
        if len(tracks) != 1:
            raise InputError(f"{path}: filtering takes one track, found {len(tracks)}")
        tr = tracks[0]
        return np.asarray(tr.times), np.where(tr.mask[:, None], np.nan, tr.positions)
    if header[0] not in ("time", "t"):
        raise InputError(f"{path}: first column must be 'time' (or use a trajectory CSV with id, time, x, y)")
    vals = []
    for i, r in enumerate(rows[1:], start=2):
        if not r:
            continue
        if len(r) != len(header):
            raise InputError(f"{path}: row {i}: expected {len(header)} fields, got {len(r)}")
        try:
            vals.append([float(c) if c.strip() else math.nan for c in r])
        except ValueError:
            raise InputError(f"{path}: row {i}: non-numeric value") from None
    a = np.array(vals)
    return a[:, 0], a[:, 1:]


# ---------------------------------------------------------------- subcommands

def cmd_derive(args, cfg, out):
    from .trajectory import derive_steps_turns, write_steps_turns_csv
    tracks = _load_tracks(_require(args, "input"))
    names = []
    for tr in tracks:
        name = "steps_turns.csv" if len(tracks) == 1 else f"steps_turns_{tr.id}.csv"
        write_steps_turns_csv(derive_steps_turns(tr), out / name)
        names.append(name)
    return {"files": names}, EXIT_OK


def _hmm_inputs(args):
    from .hmm import HmmSpec
    from .trajectory import derive_steps_turns
    tracks = _load_tracks(_require(args, "input"))
    spec_path = args.spec or DATA_DIR / "hmm_2state.json"
    try:
        spec = HmmSpec.from_dict(_load_json(spec_path))
    except (TypeError, ValueError) as exc:
        raise InputError(f"{spec_path}: {exc}") from None
    series = [derive_steps_turns(tr) for tr in tracks]
    return spec, series


def _settings(args, over):
    from .hmm import OptimizerSettings
    keys = {"n_starts", "maxiter", "gtol", "start_sd"}
    kw = {k: over[k] for k in keys & over.keys()}
    return OptimizerSettings(seed=_require_seed(args), workers=args.workers, **kw)


def cmd_fit_hmm(args, cfg, out):
    from .hmm import fit_mle, pseudo_residuals, state_probabilities, viterbi
    spec, series = _hmm_inputs(args)
    settings = _settings(args, cfg["overrides"])
    missing = [n for n in spec.covariate_names for s in series if n not in s.covariates]
    if missing:
        raise InputError(f"trajectory lacks covariate column(s) {sorted(set(missing))}")
    fit = fit_mle(spec, series, settings=settings)
    paths = viterbi(fit, series)
    probs = state_probabilities(fit, series)
    res = pseudo_residuals(fit, series, rng=np.random.default_rng([settings.seed, 1]))
    n = fit.spec.n_states
    _write_json(out / "fit.json", {**fit.to_dict(), "status": "converged" if fit.converged else "not_converged"})
    _write_csv(out / "states.csv", ["id", "t", "state"],
               [[s.id, s.times[i], int(p[i]) + 1] for s, p in zip(series, paths) for i in range(len(s))])
    _write_csv(out / "state_probs.csv", ["id", "t"] + [f"p{j + 1}" for j in range(n)],
               [[s.id, s.times[i], *pr[i]] for s, pr in zip(series, probs) for i in range(len(s))])
    _write_csv(out / "pseudo_residuals.csv", ["id", "t", "step_residual", "turn_residual"],
               [[s.id, s.times[i], r.steps[i], r.turns[i]] for s, r in zip(series, res) for i in range(len(s))])
    summary = {"loglik": fit.loglik, "aic": fit.aic, "converged": fit.converged,
               "step_means": fit.spec.step_means().tolist()}
    return summary, EXIT_OK if fit.converged else EXIT_NONCONVERGED


def cmd_select_covariates(args, cfg, out):
    from .hmm import select_covariates_forward
    spec, series = _hmm_inputs(args)
    settings = _settings(args, cfg["overrides"])
    if args.candidates:
        cands = [c.strip() for c in args.candidates.split(",") if c.strip()]
    else:
        cands = sorted(set.intersection(*(set(s.covariates) for s in series)))
    if not cands:
        raise InputError("no candidate covariates (use --candidates or add covariate columns)")
    for c in cands:
        if any(c not in s.covariates for s in series):
            raise InputError(f"candidate covariate {c!r} missing from the trajectory file")
    rep = select_covariates_forward(spec, cands, series, settings=settings)
    _write_json(out / "selection.json", rep.to_dict())
    ok = rep.fit.converged and rep.base_fit.converged
    return {"selected": list(rep.selected), "base_aic": rep.base_aic}, EXIT_OK if ok else EXIT_NONCONVERGED


def _ssm_spec(cfg_spec):
    from .ssm import HeavyTailSsmSpec, LinearGaussianSsmSpec
    kind = cfg_spec.get("type", "linear_gaussian")
    try:
        if kind == "linear_gaussian":
            body = {k: v for k, v in cfg_spec.items() if k != "type"}
            return LinearGaussianSsmSpec.from_dict(body)
        if kind == "random_walk":
            d = int(cfg_spec.get("d", 1))
            df = float(cfg_spec.get("df", math.inf))
            return HeavyTailSsmSpec.random_walk(d, float(cfg_spec["sigma_z"]), float(cfg_spec["sigma_y"]), df,
                                                cfg_spec.get("init_mean"), cfg_spec.get("init_var"))
        if kind == "heavy_tail":
            core = LinearGaussianSsmSpec.from_dict(cfg_spec["core"])
            return HeavyTailSsmSpec(core, float(cfg_spec["df"]), float(cfg_spec["obs_scale"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"invalid state-space spec: {exc}") from None
    raise InputError(f"unknown state-space spec type {kind!r}")


def _as_linear(spec):
    from .ssm import HeavyTailSsmSpec
    if isinstance(spec, HeavyTailSsmSpec):
        if not spec.gaussian:
            raise InputError("the kalman backend needs Gaussian observation errors (df = inf)")
        return spec.core
    return spec


def _as_heavy(spec):
    from .ssm import HeavyTailSsmSpec
    if isinstance(spec, HeavyTailSsmSpec):
        return spec
    c = spec
    if not np.allclose(c.obs_cov, c.obs_cov[0, 0] * np.eye(c.obs_dim)):
        raise InputError("the laplace backend needs isotropic observation noise")
    return HeavyTailSsmSpec(c, math.inf, float(np.sqrt(c.obs_cov[0, 0])))


def cmd_filter(args, cfg, out):
    from .ssm import (SwitchingRwSpec, bootstrap_particle_filter, kalman_filter, kalman_smoother,
                      laplace_marginal, linear_gaussian_as_generic, mcmc_ssm)
    from .ssm.laplace import LaplaceDivergenceError
    from .ssm.particle import ParticleDegeneracyError
    backend = args.backend or "kalman"
    times, y = _read_obs_csv(_require(args, "input"))
    spec_cfg = _load_json(_require(args, "spec"))
    over = cfg["overrides"]
    d = y.shape[1]
    code = EXIT_OK
    if backend == "kalman":
        spec = _as_linear(_ssm_spec(spec_cfg))
        kf = kalman_filter(spec, y)
        sm = kalman_smoother(kf)
        dz = spec.dim
        _write_csv(out / "filter.csv",
                   ["time"] + [f"filt_mean{i + 1}" for i in range(dz)] + [f"filt_var{i + 1}" for i in range(dz)]
                   + [f"smooth_mean{i + 1}" for i in range(dz)] + [f"smooth_var{i + 1}" for i in range(dz)]
                   + ["loglik_increment"],
                   [[times[t], *kf.filt_means[t], *np.diag(kf.filt_covs[t]), *sm.means[t], *np.diag(sm.covs[t]),
                     kf.loglik_increments[t]] for t in range(times.size)])
        result = {"backend": "kalman", "loglik": kf.loglik}
    elif backend == "laplace":
        spec = _as_heavy(_ssm_spec(spec_cfg))
        try:
            lr = laplace_marginal(spec, y, tol=float(over.get("tol", 1e-8)),
                                  max_iter=int(over.get("max_iter", 100)))
        except LaplaceDivergenceError as exc:
            _write_json(out / "loglik.json", {"backend": "laplace", "status": "diverged", "message": str(exc)})
            return {"backend": "laplace", "status": "diverged"}, EXIT_NONCONVERGED
        _write_csv(out / "filter.csv", ["time"] + [f"mode{i + 1}" for i in range(spec.dim)],
                   [[times[t], *lr.mode[t]] for t in range(times.size)])
        result = {"backend": "laplace", "loglik": lr.loglik, "iterations": lr.iterations,
                  "logdet": lr.logdet, "joint_at_mode": lr.joint_at_mode}
    elif backend == "particle":
        seed = _require_seed(args)
        spec = _as_linear(_ssm_spec(spec_cfg))
        n = int(over.get("n_particles", 2000))
        method = str(over.get("resampling", "multinomial"))
        try:
            pf = bootstrap_particle_filter(linear_gaussian_as_generic(spec), y, n, np.random.default_rng(seed),
                                           resampling=method)
        except ParticleDegeneracyError as exc:
            _write_json(out / "loglik.json", {"backend": "particle", "status": "degenerate", "step": exc.step})
            return {"backend": "particle", "status": "degenerate"}, EXIT_NONCONVERGED
        dz = spec.dim
        _write_csv(out / "filter.csv", ["time"] + [f"mean{i + 1}" for i in range(dz)] + ["ess", "loglik_increment"],
                   [[times[t], *r[1:]] for t, r in enumerate(pf.to_rows())])
        result = {"backend": "particle", "loglik": pf.log_evidence, "n_particles": n, "resampling": method}
    elif backend == "mcmc":
        seed = _require_seed(args)
        try:
            rw = SwitchingRwSpec(np.asarray(spec_cfg["proc_sd"], float), np.asarray(spec_cfg.get("gamma", [[1.0]]), float),
                                 float(spec_cfg["obs_sd"]), float(spec_cfg.get("obs_df", math.inf)),
                                 spec_cfg.get("init_mean", 0.0), float(spec_cfg.get("init_var", math.inf)))
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"invalid switching random-walk spec: {exc}") from None
        iters = int(over.get("iterations", 20000))
        burn = int(over.get("burn_in", iters // 5))
        mc = mcmc_ssm(rw, y, iters, burn, np.random.default_rng(seed),
                      update_theta=bool(over.get("update_theta", True)),
                      estimate_obs=bool(over.get("estimate_obs", True)),
                      marginalize_states=bool(over.get("marginalize_states", False)),
                      proposal_scale=float(over.get("proposal_scale", 1.0)))
        header = ["time"] + [f"z_mean{i + 1}" for i in range(d)] + [f"z_var{i + 1}" for i in range(d)]
        freq = mc.state_freq
        if freq is not None:
            header += [f"p{j + 1}" for j in range(freq.shape[1])]
        _write_csv(out / "filter.csv", header,
                   [[times[t], *mc.z_mean[t], *mc.z_var[t], *(freq[t] if freq is not None else ())]
                    for t in range(times.size)])
        _write_csv(out / "chains.csv", ["iteration", "parameter", "value"],
                   [[burn + i, name, mc.theta[i, k]] for i in range(mc.theta.shape[0])
                    for k, name in enumerate(mc.param_names)])
        result = {"backend": "mcmc", "iterations": iters, "burn_in": burn, "params": mc.summary(),
                  "accept_rates": mc.accept_rates}
    else:
        raise InputError(f"unknown filter backend {backend!r}")
    _write_json(out / "loglik.json", result)
    return result, code


def _movement_model(m):
    from .diffusion import BrownianSpec, OuParams
    kind = m.get("type", "brownian")
    if kind == "brownian":
        if "cov" in m:
            return BrownianSpec(np.asarray(m["cov"], dtype=float))
        return BrownianSpec.isotropic(float(m.get("sigma2", 1.0)), int(m.get("d", 1)))
    if kind == "ou":
        mu = np.atleast_1d(np.asarray(m.get("mu", [0.0]), dtype=float))
        if "B" in m:
            return OuParams(mu, np.asarray(m["B"], float), np.asarray(m["Lambda"], float), bool(m.get("expert", False)))
        return OuParams.isotropic(mu, float(m.get("b", -1.0)), np.asarray(m.get("Lambda", 1.0), float))
    raise InputError(f"unknown movement model type {kind!r}")


def cmd_simulate(args, cfg, out):
    from . import diffusion as dif
    seed = _require_seed(args)
    rng = np.random.default_rng(seed)
    model = args.model or "hmm"
    spec_cfg = _load_json(args.spec) if args.spec else {}
    spec_cfg = {**spec_cfg, **cfg["overrides"]}
    try:
        if model == "hmm":
            from .hmm import HmmSpec, simulate_hmm
            if not args.spec:
                spec_cfg = {**_load_json(DATA_DIR / "hmm_2state.json"), **cfg["overrides"]}
            spec = HmmSpec.from_dict(spec_cfg)
            T = int(spec_cfg.get("T", 1000))
            covs = spec_cfg.get("covariates")
            states, series = simulate_hmm(spec, T, None if covs is None else np.asarray(covs, float), rng)
            rows = [[i, int(states[i]) + 1, series.steps[i], series.turns[i] if series.turn_valid[i] else math.nan]
                    for i in range(T)]
            _write_csv(out / "path.csv", ["t", "state", "step", "turn"], rows)
            return {"model": "hmm", "T": T}, EXIT_OK
        if model == "switching":
            G = dif.GeneratorMatrix(np.asarray(spec_cfg["generator"], float)) if "generator" in spec_cfg \
                else dif.load_generator()
            if "models" in spec_cfg:
                models = [_movement_model(m) for m in spec_cfg["models"]]
            else:
                rates = spec_cfg.get("variance_rates") or _load_json(dif.bundled_generator_path())["variance_rates"]
                models = [dif.BrownianSpec.isotropic(v, int(spec_cfg.get("d", 1))) for v in rates]
            s0 = int(spec_cfg.get("s0", 1)) - 1
            path = dif.simulate_switching_diffusion(G, models, spec_cfg.get("x0", 0.0), s0,
                                                    float(spec_cfg.get("t0", 0.0)), float(spec_cfg.get("T", 100.0)),
                                                    rng)
            path.to_csv(out / "path.csv")
            if "infill_dt" in spec_cfg:
                q = np.arange(path.times[0], path.times[-1] + 1e-12, float(spec_cfg["infill_dt"]))
                pos, st = dif.infill_path(path, q, rng)
                _write_csv(out / "infill.csv", path.header(), [[q[i], int(st[i]) + 1, *pos[i]] for i in range(q.size)])
            return {"model": "switching", "n_switches": path.n_switches}, EXIT_OK
        times = _time_grid(spec_cfg)
        if model == "bm":
            m = _movement_model({**spec_cfg, "type": "brownian"})
            x = dif.simulate_bm(m, times, spec_cfg.get("x0", 0.0), rng)
        elif model == "ou":
            m = _movement_model({**spec_cfg, "type": "ou"})
            x = dif.simulate_ou(m, times, spec_cfg.get("x0", m.mu), rng)
        elif model == "iou":
            m = _movement_model({**spec_cfg, "type": "ou"})
            x, v = dif.simulate_integrated_ou(m, spec_cfg.get("x0", 0.0), spec_cfg.get("v0", 0.0), times, rng)
            d = x.shape[1]
            _write_csv(out / "path.csv", ["time"] + [f"x{i + 1}" for i in range(d)] + [f"v{i + 1}" for i in range(d)],
                       [[times[k], *x[k], *v[k]] for k in range(times.size)])
            return {"model": "iou", "n": int(times.size)}, EXIT_OK
        elif model == "sde":
            pot = spec_cfg.get("potential", {"type": "quadratic", "a": 1.0, "mu": [0.0]})
            if pot.get("type") != "quadratic":
                raise InputError("only quadratic potentials can be given in JSON")
            a = float(pot["a"])
            mu = np.atleast_1d(np.asarray(pot.get("mu", [0.0]), float))
            sde = dif.SdeSpec.from_potential(lambda z: 0.5 * a * float(np.sum((z - mu) ** 2)),
                                             float(spec_cfg.get("sigma", 1.0)), gradient=lambda z: a * (z - mu))
            x = dif.euler_simulate(sde, np.broadcast_to(np.asarray(spec_cfg.get("x0", mu), float), mu.shape),
                                   times, rng)
        else:
            raise InputError(f"unknown simulation model {model!r}")
    except (KeyError, TypeError) as exc:
        raise InputError(f"invalid {model} spec: missing or malformed {exc}") from None
    d = x.shape[1]
    _write_csv(out / "path.csv", ["time"] + (["x", "y", "z"][:d] if d <= 3 else [f"x{i + 1}" for i in range(d)]),
               [[times[k], *x[k]] for k in range(times.size)])
    return {"model": model, "n": int(times.size)}, EXIT_OK


def cmd_bridge(args, cfg, out):
    from .diffusion import bm_variance_mle, brownian_bridge_marginal, sample_bridge_path
    seed = _require_seed(args)
    rng = np.random.default_rng(seed)
    spec_cfg = {**(_load_json(args.spec) if args.spec else {}), **cfg["overrides"]}
    rows = []
    if args.input:
        tracks = _load_tracks(args.input)
        if "dt" not in spec_cfg and "times" not in spec_cfg:
            raise InputError("bridge on a trajectory needs 'dt' or 'times'")
        for tr in tracks:
            t, x = tr.observed()
            if t.size < 2:
                raise InputError(f"track {tr.id!r} has fewer than two observed positions")
            s2 = float(spec_cfg.get("sigma2", bm_variance_mle((t, x))))
            q = np.asarray(spec_cfg["times"], float) if "times" in spec_cfg else \
                np.arange(t[0], t[-1] + 1e-12, float(spec_cfg["dt"]))
            q = q[(q >= t[0]) & (q <= t[-1])]
            seg = np.clip(np.searchsorted(t, q, side="right") - 1, 0, t.size - 2)
            for k in np.unique(seg):
                idx = np.nonzero(seg == k)[0]
                draws = sample_bridge_path(x[k], x[k + 1], t[k], t[k + 1], s2, q[idx], rng)
                for j, i in enumerate(idx):
                    m, v = brownian_bridge_marginal(x[k], x[k + 1], t[k], t[k + 1], s2, q[i])
                    rows.append([tr.id, q[i], *m, float(v), *draws[j]])
        d = tracks[0].dim
    else:
        try:
            a = np.atleast_1d(np.asarray(spec_cfg["a"], float))
            b = np.atleast_1d(np.asarray(spec_cfg["b"], float))
            t1, t2, s2 = float(spec_cfg["t1"]), float(spec_cfg["t2"]), float(spec_cfg.get("sigma2", 1.0))
            q = np.asarray(spec_cfg["times"], float)
        except KeyError as exc:
            raise InputError(f"bridge spec missing {exc}") from None
        try:
            draws = sample_bridge_path(a, b, t1, t2, s2, q, rng)
            for i, tq in enumerate(q):
                m, v = brownian_bridge_marginal(a, b, t1, t2, s2, tq)
                rows.append(["", tq, *m, float(v), *draws[i]])
        except ValueError as exc:
            raise InputError(str(exc)) from None
        d = a.size
    coords = ["x", "y", "z"][:d] if d <= 3 else [f"x{i + 1}" for i in range(d)]
    _write_csv(out / "bridge.csv", ["id", "time"] + [f"mean_{c}" for c in coords] + ["var"]
               + [f"sample_{c}" for c in coords], rows)
    return {"n": len(rows)}, EXIT_OK


COMMANDS = {
    "fit-hmm": cmd_fit_hmm,
    "select-covariates": cmd_select_covariates,
    "filter": cmd_filter,
    "simulate": cmd_simulate,
    "bridge": cmd_bridge,
    "derive": cmd_derive,
}


def build_parser():
    p = argparse.ArgumentParser(prog="animove", description="Statistical models of animal movement.")
    p.add_argument("--version", action="version", version=f"animove {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    helps = {
        "fit-hmm": "fit a step/turn HMM, decode states, export probabilities and residuals",
        "select-covariates": "forward AIC selection of transition covariates",
        "filter": "state-space filtering: kalman, laplace, particle or mcmc",
        "simulate": "simulate hmm, bm, ou, iou, switching or sde paths",
        "bridge": "Brownian-bridge interpolation with per-time mean and variance",
        "derive": "derive step lengths and turning angles from a trajectory CSV",
    }
    for name, text in helps.items():
        sp = sub.add_parser(name, help=text)
        sp.add_argument("--input", help="input CSV")
        sp.add_argument("--spec", help="model spec JSON")
        sp.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./animove-out)")
        sp.add_argument("--seed", type=int, help="random seed (required for stochastic commands)")
        sp.add_argument("--workers", type=int, default=1, help="worker threads")
        sp.add_argument("--backend", help="filter backend: kalman, laplace, particle, mcmc")
        sp.add_argument("--model", help="simulation model: hmm, bm, ou, iou, switching, sde")
        sp.add_argument("--tol-override", action="append", metavar="KEY=VAL", default=[],
                        help="override a numeric setting (repeatable)")
        if name == "select-covariates":
            sp.add_argument("--candidates", help="comma-separated candidate covariate names")
    return p


def _output_dir(args):
    if args.out:
        return Path(args.out)
    return Path(os.environ.get(OUT_ENV) or "animove-out")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.workers < 1:
        print("error: --workers must be >= 1", file=sys.stderr)
        return EXIT_INPUT
    out = _output_dir(args)
    try:
        cfg = {
            "command": args.command, "input": args.input, "spec": args.spec, "seed": args.seed,
            "workers": args.workers, "backend": args.backend, "model": args.model,
            "candidates": getattr(args, "candidates", None),
            "overrides": _parse_overrides(args.tol_override),
        }
        for p in (args.input, args.spec):
            if p is not None and not Path(p).is_file():
                raise InputError(f"no such file: {p}")
        out.mkdir(parents=True, exist_ok=True)
        staging = Path(tempfile.mkdtemp(prefix=".animove-", dir=out))
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"error: cannot use output directory {out}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    try:
        summary, code = COMMANDS[args.command](args, cfg, staging)
        meta = {"version": __version__, "config_hash": _config_hash(cfg), "seed": args.seed,
                "kernel_backend": kernels.BACKEND, "config": cfg, "exit_code": code, "summary": summary}
        _write_json(staging / "meta.json", meta)
        for f in sorted(staging.iterdir()):
            os.replace(f, out / f.name)
        if code == EXIT_NONCONVERGED:
            print("warning: numerical non-convergence; artifacts written with status", file=sys.stderr)
        return code
    except (InputError, ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    finally:
        shutil.rmtree(staging, ignore_errors=True)


if __name__ == "__main__":
    sys.exit(main())
