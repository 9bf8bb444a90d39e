"""Trajectories, step lengths and turning angles, and regular-grid utilities.

Coordinates are planar (already projected). Turning angles are measured
counterclockwise-positive and wrapped to ``(-pi, pi]``.
"""

from __future__ import annotations

import csv
import math
import statistics
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

__all__ = [
    "Trajectory",
    "StepTurnSeries",
    "TrajectoryError",
    "CsvParseError",
    "MissingColumnError",
    "DuplicateTimeError",
    "EmptySeriesError",
    "RegularityReport",
    "wrap_angle",
    "load_trajectory",
    "derive_steps_turns",
    "reconstruct_path",
    "interpolate_to_grid",
    "regularity_report",
    "write_steps_turns_csv",
]

DEFAULT_SCHEMA = {"id": "id", "time": "time", "x": "x", "y": "y"}


class TrajectoryError(ValueError):
    """Base class for trajectory input problems."""


class CsvParseError(TrajectoryError):
    pass


class MissingColumnError(TrajectoryError):
    pass


class DuplicateTimeError(TrajectoryError):
    pass


class EmptySeriesError(TrajectoryError):
    pass


def wrap_angle(a):
    """Wrap angles to ``(-pi, pi]``."""
    a = np.asarray(a, dtype=float)
    w = np.mod(a + np.pi, 2.0 * np.pi) - np.pi
    w = np.where(w == -np.pi, np.pi, w)
    return w if w.ndim else float(w)


def _freeze(a):
    a = np.array(a, dtype=float, copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class Trajectory:
    """Timestamped planar positions of one animal.

    ``mask[i]`` is True when position ``i`` is missing; masked rows may hold NaN.
    Covariate columns are aligned with ``times``.
    """

    id: str
    times: np.ndarray
    positions: np.ndarray
    covariates: Mapping[str, np.ndarray] = field(default_factory=dict)
    mask: np.ndarray | None = None

    def __post_init__(self):
        times = _freeze(self.times)
        pos = np.array(self.positions, dtype=float, copy=True)
        if pos.ndim == 1:
            pos = pos[:, None]
        n = times.shape[0]
        if pos.shape[0] != n:
            raise TrajectoryError(f"{self.id}: {pos.shape[0]} positions for {n} times")
        if n > 1 and not np.all(np.diff(times) > 0):
            raise TrajectoryError(f"{self.id}: times must be strictly increasing")
        mask = np.zeros(n, bool) if self.mask is None else np.array(self.mask, dtype=bool)
        if mask.shape != (n,):
            raise TrajectoryError(f"{self.id}: mask length {mask.shape} != {n}")
        mask = mask | np.isnan(pos).any(axis=1)
        covs = {}
        for name, col in dict(self.covariates).items():
            col = _freeze(col)
            if col.shape != (n,):
                raise TrajectoryError(f"{self.id}: covariate {name!r} has length {col.shape[0]}, expected {n}")
            covs[name] = col
        pos.flags.writeable = False
        mask.flags.writeable = False
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "covariates", covs)

    def __len__(self):
        return self.times.shape[0]

    @property
    def dim(self):
        return self.positions.shape[1]

    def observed(self):
        """Return ``(times, positions)`` restricted to unmasked rows."""
        keep = ~self.mask
        return self.times[keep], self.positions[keep]


@dataclass(frozen=True)
class StepTurnSeries:
    """Step lengths and turning angles derived from a track.

    Entry ``t`` describes the step from position ``t`` to ``t+1`` and the
    turn made at position ``t``. ``turns[0]`` is always flagged invalid for
    derived series. Covariates are taken at the step's starting position.
    """

    steps: np.ndarray
    turns: np.ndarray
    step_valid: np.ndarray
    turn_valid: np.ndarray
    times: np.ndarray | None = None
    covariates: Mapping[str, np.ndarray] = field(default_factory=dict)
    id: str = ""

    def __post_init__(self):
        steps = np.array(self.steps, dtype=float)
        turns = np.array(self.turns, dtype=float)
        n = steps.shape[0]
        sv = np.array(self.step_valid, dtype=bool) & np.isfinite(steps)
        tv = np.array(self.turn_valid, dtype=bool) & np.isfinite(turns)
        if turns.shape != (n,) or sv.shape != (n,) or tv.shape != (n,):
            raise TrajectoryError("steps, turns and validity flags must have equal length")
        if np.any(steps[sv] < 0):
            raise TrajectoryError("step lengths must be nonnegative")
        turns = np.where(tv, wrap_angle(np.where(tv, turns, 0.0)), turns)
        times = np.arange(n, dtype=float) if self.times is None else np.array(self.times, dtype=float)
        covs = {k: np.array(v, dtype=float) for k, v in dict(self.covariates).items()}
        for k, v in covs.items():
            if v.shape != (n,):
                raise TrajectoryError(f"covariate {k!r} misaligned with series")
        for a in (steps, turns, sv, tv, times, *covs.values()):
            a.flags.writeable = False
        object.__setattr__(self, "steps", steps)
        object.__setattr__(self, "turns", turns)
        object.__setattr__(self, "step_valid", sv)
        object.__setattr__(self, "turn_valid", tv)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "covariates", covs)

    def __len__(self):
        return self.steps.shape[0]

    def covariate_matrix(self, names):
        """Stack named covariates into a ``(T, p)`` array."""
        if not names:
            return np.zeros((len(self), 0))
        missing = [n for n in names if n not in self.covariates]
        if missing:
            raise KeyError(f"covariates not present in series {self.id!r}: {missing}")
        return np.column_stack([self.covariates[n] for n in names])


def _parse_float(text, row, col, path):
    text = text.strip()
    if text == "" or text.upper() in ("NA", "NAN"):
        return math.nan
    try:
        return float(text)
    except ValueError:
        raise CsvParseError(f"{path}: row {row}: column {col!r}: cannot parse {text!r} as a number") from None


def load_trajectory(path, schema: Mapping[str, str | None] | None = None,
                    covariates: list[str] | None = None) -> list[Trajectory]:
    """Read a CSV of relocations into one `Trajectory` per animal id.

    Parameters
    ----------
    path : path-like
        CSV file with a header row.
    schema : mapping, optional
        Maps the logical columns ``id``, ``time``, ``x``, ``y`` to header
        names. ``time`` may map to None, in which case rows are numbered
        0, 1, 2, ... within each id in file order.
    covariates : list of str, optional
        Covariate columns to keep. By default every other numeric column.

    Rows are sorted by time within each id; duplicate timestamps are an
    error. Empty cells in ``x``/``y`` mark missing positions.
    """
    path = Path(path)
    sch = dict(DEFAULT_SCHEMA)
    if schema:
        sch.update(schema)
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise TrajectoryError(f"cannot open {path}: {exc}") from exc
    with fh:
        sample = fh.read(4096)
        fh.seek(0)
        try:
            dialect = csv.Sniffer().sniff(sample, delimiters=",;\t")
        except csv.Error:
            dialect = csv.excel
        reader = csv.reader(fh, dialect)
        try:
            header = [h.strip().strip('"') for h in next(reader)]
        except StopIteration:
            raise CsvParseError(f"{path}: empty file") from None
        except csv.Error as exc:
            raise CsvParseError(f"{path}: row 1: {exc}") from None
        required = [sch[k] for k in ("id", "time", "x", "y") if sch[k] is not None]
        missing = [c for c in required if c not in header]
        if missing:
            raise MissingColumnError(f"{path}: missing required column(s) {missing}; header is {header}")
        idx = {name: i for i, name in enumerate(header)}
        reserved = set(required)
        cov_names = covariates if covariates is not None else [h for h in header if h not in reserved]
        for c in cov_names:
            if c not in idx:
                raise MissingColumnError(f"{path}: covariate column {c!r} not found")
        rows: dict[str, list] = {}
        numeric_cov = {c: True for c in cov_names}
        try:
            for lineno, rec in enumerate(reader, start=2):
                if not rec or all(not f.strip() for f in rec):
                    continue
                if len(rec) != len(header):
                    raise CsvParseError(f"{path}: row {lineno}: expected {len(header)} fields, got {len(rec)}")
                tid = rec[idx[sch["id"]]].strip() if sch["id"] is not None else ""
                if sch["time"] is None:
                    t = float(len(rows.get(tid, ())))
                else:
                    t = _parse_float(rec[idx[sch["time"]]], lineno, sch["time"], path)
                    if math.isnan(t):
                        raise CsvParseError(f"{path}: row {lineno}: missing time")
                x = _parse_float(rec[idx[sch["x"]]], lineno, sch["x"], path)
                y = _parse_float(rec[idx[sch["y"]]], lineno, sch["y"], path)
                cv = []
                for c in cov_names:
                    try:
                        cv.append(_parse_float(rec[idx[c]], lineno, c, path))
                    except CsvParseError:
                        if covariates is not None:
                            raise
                        numeric_cov[c] = False
                        cv.append(math.nan)
                rows.setdefault(tid, []).append((t, x, y, cv, lineno))
        except csv.Error as exc:
            raise CsvParseError(f"{path}: row {reader.line_num}: {exc}") from None
    keep = [i for i, c in enumerate(cov_names) if numeric_cov[c]]
    out = []
    for tid, recs in rows.items():
        recs.sort(key=lambda r: r[0])
        for a, b in zip(recs, recs[1:]):
            if a[0] == b[0]:
                raise DuplicateTimeError(
                    f"{path}: id {tid!r}: duplicate time {a[0]} at rows {a[4]} and {b[4]}")
        times = np.array([r[0] for r in recs])
        pos = np.array([[r[1], r[2]] for r in recs])
        covs = {cov_names[i]: np.array([r[3][i] for r in recs]) for i in keep}
        out.append(Trajectory(id=tid, times=times, positions=pos, covariates=covs))
    if not out:
        raise CsvParseError(f"{path}: no data rows")
    return out


def derive_steps_turns(traj: Trajectory) -> StepTurnSeries:
    """Step lengths and turning angles from consecutive positions.

    A turn is invalid when either adjoining step is missing or has zero
    length, since the heading is then undefined.
    """
    n = len(traj)
    if n < 2:
        raise EmptySeriesError(f"{traj.id}: need at least 2 positions, got {n}")
    p = np.asarray(traj.positions, dtype=float)[:, :2]
    d = np.diff(p, axis=0)
    steps = np.hypot(d[:, 0], d[:, 1])
    step_ok = ~traj.mask[:-1] & ~traj.mask[1:]
    heading = np.arctan2(d[:, 1], d[:, 0])
    turns = np.full(n - 1, np.nan)
    moving = step_ok & (steps > 0)
    turn_ok = np.zeros(n - 1, bool)
    turn_ok[1:] = moving[1:] & moving[:-1]
    turns[1:] = np.where(turn_ok[1:], wrap_angle(np.where(turn_ok[1:], heading[1:] - heading[:-1], 0.0)), np.nan)
    steps = np.where(step_ok, steps, np.nan)
    covs = {k: v[:-1] for k, v in traj.covariates.items()}
    return StepTurnSeries(steps=steps, turns=turns, step_valid=step_ok, turn_valid=turn_ok,
                          times=traj.times[:-1], covariates=covs, id=traj.id)


def reconstruct_path(start, heading0, steps, turns):
    """Rebuild positions from a start point, initial heading, steps and turns.

    ``turns[0]`` is ignored; ``heading0`` is the direction of the first step.
    """
    steps = np.asarray(steps, dtype=float)
    turns = np.asarray(turns, dtype=float)
    headings = heading0 + np.concatenate([[0.0], np.cumsum(turns[1:])])
    inc = np.column_stack([steps * np.cos(headings), steps * np.sin(headings)])
    return np.vstack([np.asarray(start, dtype=float)[None, :2], start + np.cumsum(inc, axis=0)])


def interpolate_to_grid(traj: Trajectory, dt: float) -> Trajectory:
    """Linearly interpolate positions onto ``t0, t0 + dt, ...``.

    Grid points outside the span of observed positions are masked. Covariates
    take the value at the nearest original time.
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    t_obs, p_obs = traj.observed()
    if t_obs.shape[0] < 2:
        raise TrajectoryError(f"{traj.id}: need at least 2 observed positions to interpolate")
    t0, t1 = traj.times[0], traj.times[-1]
    k = int(math.floor((t1 - t0) / dt + 1e-9))
    grid = t0 + dt * np.arange(k + 1)
    inside = (grid >= t_obs[0] - 1e-12 * abs(dt)) & (grid <= t_obs[-1] + 1e-12 * abs(dt))
    pos = np.full((grid.shape[0], p_obs.shape[1]), np.nan)
    for j in range(p_obs.shape[1]):
        pos[inside, j] = np.interp(grid[inside], t_obs, p_obs[:, j])
    # exact copies at coincident times avoid rounding from interp
    hit = np.searchsorted(t_obs, grid)
    hit = np.clip(hit, 0, t_obs.shape[0] - 1)
    same = inside & (t_obs[hit] == grid)
    pos[same] = p_obs[hit[same]]
    covs = {}
    if traj.covariates:
        near = np.abs(grid[:, None] - traj.times[None, :]).argmin(axis=1)
        covs = {k: v[near] for k, v in traj.covariates.items()}
    return Trajectory(id=traj.id, times=grid, positions=pos, covariates=covs, mask=~inside)


@dataclass(frozen=True)
class RegularityReport:
    n_positions: int
    n_gaps: int
    median_dt: float
    regular_fraction: float
    missing: int


def regularity_report(traj: Trajectory, rel_tol: float = 0.05) -> RegularityReport:
    """Summarise the sampling pattern of a track.

    A gap counts as regular when it is within ``rel_tol`` (relative) of the
    median gap; the lower median is used so that the reference is an actual
    observed interval.
    """
    gaps = np.diff(traj.times)
    missing = int(traj.mask.sum())
    if gaps.size == 0:
        return RegularityReport(len(traj), 0, math.nan, 1.0, missing)
    med = float(statistics.median_low(gaps.tolist()))
    frac = float(np.mean(np.abs(gaps - med) <= rel_tol * med))
    return RegularityReport(len(traj), int(gaps.size), med, frac, missing)


def write_steps_turns_csv(series: StepTurnSeries, path) -> None:
    """Write ``t, step, turn, valid`` rows (``valid`` is 1 when both entries are usable)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "t", "step", "turn", "step_valid", "turn_valid", "valid"])
        for i in range(len(series)):
            sv, tv = bool(series.step_valid[i]), bool(series.turn_valid[i])
            w.writerow([
                series.id, repr(float(series.times[i])),
                repr(float(series.steps[i])) if sv else "",
                repr(float(series.turns[i])) if tv else "",
                int(sv), int(tv), int(sv and tv),
            ])
