"""Pullback limits: start at time -T on the same realization and observe at time 0."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .cocycle import CocycleSystem, CylinderPoint
from .noise import WienerPath, to_cells

DEFAULT_HORIZONS = (5.0, 10.0, 15.0, 20.0, 30.0, 40.0)
ERROR_FLOOR = 1e-13  # differences below this are roundoff and carry no rate information


@dataclass(frozen=True)
class PullbackReport:
    horizons: list[float]
    states: list[np.ndarray]  # fiber value at time 0 per horizon
    errors: list[float]  # distance between consecutive terminal states
    rate_estimate: float
    converged: bool
    tolerance: float
    angles: list[float] = None  # lifted angle at time 0 per horizon

    def as_dict(self) -> dict:
        return {
            "horizons": list(self.horizons),
            "states": [np.asarray(x).tolist() for x in self.states],
            "errors": list(self.errors),
            "rate_estimate": None if math.isnan(self.rate_estimate) else self.rate_estimate,
            "converged": self.converged,
            "tolerance": self.tolerance,
        }


def decay_rate(horizons, errors, floor: float = ERROR_FLOOR) -> float:
    """Least-squares slope of log(error) against horizon; nan with fewer than two usable points."""
    h = np.asarray(horizons, dtype=float)
    e = np.asarray(errors, dtype=float)
    keep = e > floor
    if keep.sum() < 2:
        return math.nan
    return float(np.polyfit(h[keep], np.log(e[keep]), 1)[0])


def pullback_point(system: CocycleSystem, path: WienerPath, z0: CylinderPoint, horizons=DEFAULT_HORIZONS,
                   tolerance: float = 1e-6, stop_early: bool = True) -> PullbackReport:
    """Flow ``z0`` from time -T to 0 for each horizon T, all on one realization.

    The error attached to horizon T_k is the fiber distance between the
    terminal states for T_k and T_{k-1}; the rate is fitted against T_{k-1},
    the horizon that dominates that difference.  With ``stop_early`` the
    schedule stops once two successive errors are within ``tolerance``.
    """
    horizons = [float(T) for T in horizons]
    if not horizons:
        raise ValueError("need at least one horizon")
    if any(b <= a for a, b in zip(horizons, horizons[1:])) or horizons[0] < 0:
        raise ValueError("horizons must be nonnegative and strictly increasing")
    for T in horizons:
        to_cells(T, path.dt)
    system.check_state(z0.y)
    path = system.prepare(path, -horizons[-1], 0.0)
    used, states, angles, errors = [], [], [], []
    converged = False
    for T in horizons:
        s1, y1 = system.flow_batch(path, -T, 0.0, np.array([z0.s]), z0.y[None, :])
        used.append(T)
        states.append(y1[0])
        angles.append(float(s1[0]))
        if len(states) > 1:
            errors.append(float(np.linalg.norm(states[-1] - states[-2])))
        converged = len(errors) >= 2 and errors[-1] <= tolerance and errors[-2] <= tolerance
        if converged and stop_early:
            break
    rate = decay_rate(used[:-1], errors) if errors else math.nan
    return PullbackReport(used, states, errors, rate, converged, tolerance, angles)


@dataclass(frozen=True)
class CurveSample:
    """Fiber values over a list of angles at time 0 for one realization."""

    s_grid: np.ndarray
    values: np.ndarray  # (len(s_grid), d)
    horizon: float


def pullback_curve(system: CocycleSystem, path: WienerPath, s_grid, T: float, y_init) -> CurveSample:
    """Pull the points (s, y_init) back over horizon T so they arrive over each s at time 0."""
    s_grid = np.asarray(s_grid, dtype=float)
    y_init = np.atleast_1d(np.asarray(y_init, dtype=float))
    system.check_state(y_init)
    y0 = np.broadcast_to(y_init, (len(s_grid), system.dim)).copy()
    if T == 0:
        return CurveSample(s_grid, y0, 0.0)
    to_cells(T, path.dt)
    path = system.prepare(path, -T, 0.0)
    if system.rotation_time is not None:
        advance = np.full(len(s_grid), T / system.rotation_time)
    else:
        s_probe, _ = system.flow_batch(path, -T, 0.0, s_grid, y0)
        advance = s_probe - s_grid
    s_start = s_grid - advance
    s1, y1 = system.flow_batch(path, -T, 0.0, s_start, y0)
    miss = float(np.max(np.abs(s1 - s_grid)))
    if miss > 1e-6:
        raise ValueError(f"angle advance depends on the start angle (miss {miss:.3g}); cannot aim the pullback")
    return CurveSample(s_grid, y1, float(T))


def write_curve_csv(fname, sample: CurveSample) -> None:
    d = sample.values.shape[1]
    with open(fname, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["s"] + [f"y_{i}" for i in range(1, d + 1)])
        for s, v in zip(sample.s_grid, sample.values):
            w.writerow([repr(float(s))] + [repr(float(x)) for x in v])
