"""Fixed-step Stratonovich Heun integration driven by stored path increments."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .noise import WienerPath

BLOWUP = 1e12
_CHECK_EVERY = 64

Field = Callable[[float, np.ndarray], np.ndarray]


class BlowUpError(FloatingPointError):
    """The integrated state left every sensible bound."""


@dataclass(frozen=True)
class SdeSpec:
    """dx = drift(t, x) dt + diffusion(t, x) o dW with one scalar noise channel.

    ``drift`` and ``diffusion`` map arrays of shape ``(..., n)`` to the same
    shape.  The optional Jacobians map ``(..., n)`` to ``(..., n, n)``; when
    absent they are approximated by central differences.
    """

    dim: int
    drift: Field
    diffusion: Field
    drift_jac: Field | None = None
    diffusion_jac: Field | None = None

    def jacobians(self, t: float, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        a = self.drift_jac(t, x) if self.drift_jac else fd_jacobian(self.drift, t, x)
        b = self.diffusion_jac(t, x) if self.diffusion_jac else fd_jacobian(self.diffusion, t, x)
        return a, b


@dataclass(frozen=True)
class TangentState:
    base: np.ndarray
    jacobian: np.ndarray


def fd_jacobian(f: Field, t: float, x: np.ndarray) -> np.ndarray:
    """Central-difference Jacobian with step 1e-6 * max(1, |x|)."""
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    h = 1e-6 * np.maximum(1.0, np.linalg.norm(x, axis=-1, keepdims=True))
    cols = []
    for j in range(n):
        e = np.zeros(n)
        e[j] = 1.0
        cols.append((f(t, x + h * e) - f(t, x - h * e)) / (2 * h))
    return np.stack(cols, axis=-1)


def heun_step(spec: SdeSpec, state, t: float, dt: float, dW) -> np.ndarray:
    """One predictor-corrector step in the Stratonovich sense."""
    x = np.asarray(state, dtype=float)
    dW = np.asarray(dW, dtype=float)[..., None]
    f0, g0 = spec.drift(t, x), spec.diffusion(t, x)
    xp = x + f0 * dt + g0 * dW
    f1, g1 = spec.drift(t + dt, xp), spec.diffusion(t + dt, xp)
    return x + 0.5 * (f0 + f1) * dt + 0.5 * (g0 + g1) * dW


def _check(x: np.ndarray, t: float) -> None:
    m = np.max(np.abs(x)) if x.size else 0.0
    if not np.isfinite(m) or m > BLOWUP:
        raise BlowUpError(f"state left |x| <= {BLOWUP:g} near t={t:.6g} (max |x| = {m:.3g})")


def _as_batch(x0, dim: int) -> tuple[np.ndarray, bool]:
    x = np.array(x0, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[-1] != dim:
        raise ValueError(f"state dimension {x.shape[-1]} != system dimension {dim}")
    return x, single


def integrate(spec: SdeSpec, path: WienerPath, t0: float, t1: float, x0):
    """Integrate from ``t0`` to ``t1`` consuming the path increments in order.

    Returns ``(times, states)``; ``states`` has shape ``(steps+1, n)`` for a
    single initial condition or ``(steps+1, N, n)`` for a batch.
    """
    if t1 < t0:
        raise ValueError("only forward integration is supported")
    dW = path.window(t0, t1)
    x, single = _as_batch(x0, spec.dim)
    dt = path.dt
    out = [x]
    t = t0
    for k, d in enumerate(dW):
        x = heun_step(spec, x, t, dt, d)
        t = t0 + (k + 1) * dt
        if k % _CHECK_EVERY == 0:
            _check(x, t)
        out.append(x)
    _check(x, t1)
    states = np.stack(out)
    times = t0 + dt * np.arange(len(out))
    return times, states[:, 0] if single else states


def integrate_final(spec: SdeSpec, path: WienerPath, t0: float, t1: float, x0) -> np.ndarray:
    """Like :func:`integrate` but keeps only the terminal state."""
    dW = path.window(t0, t1)
    x, single = _as_batch(x0, spec.dim)
    dt = path.dt
    for k, d in enumerate(dW):
        x = heun_step(spec, x, t0 + k * dt, dt, d)
        if k % _CHECK_EVERY == 0:
            _check(x, t0 + k * dt)
    _check(x, t1)
    return x[0] if single else x


def tangent_integrate(spec: SdeSpec, path: WienerPath, t0: float, t1: float, x0) -> TangentState:
    """Heun on the state augmented with its variational equation.

    The base part performs exactly the operations of :func:`heun_step`, so it
    is bit-identical to :func:`integrate_final`; the Jacobian is the exact
    derivative of the discrete Heun map.
    """
    dW = path.window(t0, t1)
    x, single = _as_batch(x0, spec.dim)
    n = spec.dim
    J = np.broadcast_to(np.eye(n), x.shape[:-1] + (n, n)).copy()
    dt = path.dt
    for k, d in enumerate(dW):
        t = t0 + k * dt
        dd = np.asarray(d, dtype=float)[..., None]
        f0, g0 = spec.drift(t, x), spec.diffusion(t, x)
        a0, b0 = spec.jacobians(t, x)
        xp = x + f0 * dt + g0 * dd
        Jp = J + (a0 @ J) * dt + (b0 @ J) * dd[..., None]
        f1, g1 = spec.drift(t + dt, xp), spec.diffusion(t + dt, xp)
        a1, b1 = spec.jacobians(t + dt, xp)
        x_new = x + 0.5 * (f0 + f1) * dt + 0.5 * (g0 + g1) * dd
        J = J + 0.5 * (a0 @ J + a1 @ Jp) * dt + 0.5 * (b0 @ J + b1 @ Jp) * dd[..., None]
        x = x_new
        if k % _CHECK_EVERY == 0:
            _check(x, t)
    _check(x, t1)
    if single:
        return TangentState(x[0], J[0])
    return TangentState(x, J)


def write_trajectory_csv(fname: str | Path, times, states, cylinder: bool = True) -> None:
    """Columns ``t, s_lift, y_1..y_d`` (cylinder) or ``t, y_1..y_n``."""
    states = np.asarray(states)
    n = states.shape[-1]
    if cylinder:
        header = ["t", "s_lift"] + [f"y_{i}" for i in range(1, n)]
    else:
        header = ["t"] + [f"y_{i}" for i in range(1, n + 1)]
    with open(fname, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for t, x in zip(times, states):
            w.writerow([repr(float(t))] + [repr(float(v)) for v in x])
