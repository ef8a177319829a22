"""The planar noisy limit-cycle system in Cartesian, polar and closed form.

    dx = (x - y - x(x^2+y^2)) dt + x o dW
    dy = (x + y - y(x^2+y^2)) dt + y o dW

In polar coordinates x = rho cos(2 pi alpha), y = rho sin(2 pi alpha) this is
d rho = (rho - rho^3) dt + rho o dW, d alpha = dt / (2 pi), and the radial
equation has an explicit solution and an explicit stationary radius rho*.
The angle is handled analytically throughout.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .cocycle import CocycleSystem
from .integrate import BLOWUP, BlowUpError, SdeSpec
from .noise import WienerPath, shift
from .winding import RandomCurve

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class PolarState:
    alpha: float
    rho: float


def to_polar(x: float, y: float) -> PolarState:
    rho = math.hypot(x, y)
    if rho == 0.0:
        return PolarState(0.0, 0.0)
    return PolarState((math.atan2(y, x) / TWO_PI) % 1.0, rho)


def to_cartesian(p: PolarState) -> tuple[float, float]:
    a = TWO_PI * p.alpha
    return p.rho * math.cos(a), p.rho * math.sin(a)


def cartesian_spec(noise_scale: float = 1.0) -> SdeSpec:
    sig = float(noise_scale)

    def drift(t, z):
        x, y = z[..., 0], z[..., 1]
        r2 = x * x + y * y
        return np.stack([x - y - x * r2, x + y - y * r2], axis=-1)

    def diffusion(t, z):
        return sig * z

    def drift_jac(t, z):
        x, y = z[..., 0], z[..., 1]
        r2 = x * x + y * y
        row0 = np.stack([1 - r2 - 2 * x * x, -1 - 2 * x * y], axis=-1)
        row1 = np.stack([1 - 2 * x * y, 1 - r2 - 2 * y * y], axis=-1)
        return np.stack([row0, row1], axis=-2)

    def diffusion_jac(t, z):
        return np.broadcast_to(sig * np.eye(2), z.shape[:-1] + (2, 2)).copy()

    return SdeSpec(2, drift, diffusion, drift_jac, diffusion_jac)


def polar_spec(noise_scale: float = 1.0) -> SdeSpec:
    """State ``(alpha, rho)``; the angular part has constant drift 1/(2 pi)."""
    sig = float(noise_scale)

    def drift(t, z):
        r = z[..., 1]
        return np.stack([np.full_like(r, 1.0 / TWO_PI), r - r * r * r], axis=-1)

    def diffusion(t, z):
        r = z[..., 1]
        return np.stack([np.zeros_like(r), sig * r], axis=-1)

    def drift_jac(t, z):
        r = z[..., 1]
        zero = np.zeros_like(r)
        return np.stack(
            [np.stack([zero, zero], axis=-1), np.stack([zero, 1 - 3 * r * r], axis=-1)], axis=-2
        )

    def diffusion_jac(t, z):
        r = z[..., 1]
        zero = np.zeros_like(r)
        return np.stack(
            [np.stack([zero, zero], axis=-1), np.stack([zero, np.full_like(r, sig)], axis=-1)],
            axis=-2,
        )

    return SdeSpec(2, drift, diffusion, drift_jac, diffusion_jac)


@njit(cache=True)
def _radial_heun(rho0, dW, dt, sig):
    # Same arithmetic, in the same order, as integrate.heun_step on polar_spec.
    n = rho0.shape[0]
    steps, m = dW.shape
    out = np.empty(n)
    jac = np.empty(n)
    for i in range(n):
        col = i if m > 1 else 0
        x = rho0[i]
        j = 1.0
        for k in range(steps):
            d = dW[k, col]
            f0 = x - x * x * x
            g0 = sig * x
            a0 = 1.0 - 3.0 * x * x
            xp = x + f0 * dt + g0 * d
            jp = j + (a0 * j) * dt + (sig * j) * d
            f1 = xp - xp * xp * xp
            g1 = sig * xp
            a1 = 1.0 - 3.0 * xp * xp
            x = x + 0.5 * (f0 + f1) * dt + 0.5 * (g0 + g1) * d
            j = j + 0.5 * (a0 * j + a1 * jp) * dt + 0.5 * (sig * j + sig * jp) * d
            if not abs(x) <= 1e12:
                out[i] = np.nan
                jac[i] = np.nan
                break
        else:
            out[i] = x
            jac[i] = j
    return out, jac


def radial_flow(rho0, dW, dt: float, noise_scale: float = 1.0):
    """Heun for the radial equation on raw increments.

    ``dW`` has shape (steps,) for one shared path or (steps, N) with one
    column per initial radius.  Returns ``(rho, d rho / d rho0)``.
    """
    rho0 = np.atleast_1d(np.asarray(rho0, dtype=float))
    dW = np.asarray(dW, dtype=float)
    if dW.ndim == 1:
        dW = dW[:, None]
    rho, jac = _radial_heun(rho0, np.ascontiguousarray(dW), float(dt), float(noise_scale))
    if not np.all(np.isfinite(rho)):
        raise BlowUpError(f"radial state left |rho| <= {BLOWUP:g}")
    return rho, jac


@njit(cache=True)
def _linearization_integral(rho0, dW, dt, sig):
    x = rho0
    acc = 0.0
    for k in range(dW.shape[0]):
        d = dW[k]
        f0 = x - x * x * x
        g0 = sig * x
        xp = x + f0 * dt + g0 * d
        f1 = xp - xp * xp * xp
        g1 = sig * xp
        x_new = x + 0.5 * (f0 + f1) * dt + 0.5 * (g0 + g1) * d
        acc += 0.5 * ((1.0 - 3.0 * x * x) + (1.0 - 3.0 * x_new * x_new)) * dt
        x = x_new
    return acc


def linearization_average(path: WienerPath, rho0: float, T: float, noise_scale: float = 1.0) -> float:
    """Time average of 1 - 3 rho(t)^2 over [0, T] along the Heun trajectory.

    For a stationary trajectory this equals the fiber Lyapunov exponent, which
    gives a check on the tangent computation that never touches a derivative.
    """
    path = path.ensure(0.0, T)
    return _linearization_integral(float(rho0), path.window(0.0, T), path.dt, float(noise_scale)) / T


class ExampleSystem(CocycleSystem):
    """The polar system on the cylinder, angle exact, radius by Heun."""

    dim = 1
    rotation_time = TWO_PI
    name = "example"

    def __init__(self, noise_scale: float = 1.0):
        if noise_scale < 0:
            raise ValueError("noise_scale must be >= 0")
        self.noise_scale = float(noise_scale)
        self.seed_box = (np.array([0.1]), np.array([5.0]))

    def __repr__(self):
        return f"ExampleSystem(noise_scale={self.noise_scale})"

    def check_state(self, y):
        # the origin is a fixed point that never reaches the limit cycle
        if not np.all(np.asarray(y) > 0):
            raise ValueError("initial radius must be > 0; rho0 = 0 stays at the origin forever")

    def flow_batch(self, path, t0, t1, s, y):
        s = np.atleast_1d(np.asarray(s, dtype=float))
        y = np.asarray(y, dtype=float).reshape(len(s), 1)
        if t1 == t0:
            return s.copy(), y.copy()
        rho, _ = radial_flow(y[:, 0], path.window(t0, t1), path.dt, self.noise_scale)
        return s + (t1 - t0) / TWO_PI, rho[:, None]

    def fiber_jacobian(self, path, t0, t1, s, y):
        s = np.atleast_1d(np.asarray(s, dtype=float))
        y = np.asarray(y, dtype=float).reshape(len(s), 1)
        if t1 == t0:
            return s.copy(), y.copy(), np.ones((len(s), 1, 1))
        rho, jac = radial_flow(y[:, 0], path.window(t0, t1), path.dt, self.noise_scale)
        return s + (t1 - t0) / TWO_PI, rho[:, None], jac[:, None, None]


def _exp_integral(path: WienerPath, a: float, b: float, sig: float, ref: float) -> float:
    """Trapezoidal value of int_a^b exp(2(s + sig W_s) - ref) ds on the grid."""
    i0, i1 = path.index(a), path.index(b)
    if i1 == i0:
        return 0.0
    s = path.times[i0 : i1 + 1]
    w = path.W[i0 : i1 + 1]
    f = np.exp(2.0 * (s + sig * w) - ref)
    return float(path.dt * (0.5 * f[0] + f[1:-1].sum() + 0.5 * f[-1]))


def closed_form_rho(path: WienerPath, t: float, rho0: float, noise_scale: float = 1.0) -> float:
    """rho0 e^{t+W_t} / (1 + 2 rho0^2 int_0^t e^{2(s+W_s)} ds)^{1/2}, evaluated stably."""
    if t < 0 or rho0 < 0:
        raise ValueError("need t >= 0 and rho0 >= 0")
    if rho0 == 0:
        return 0.0
    sig = noise_scale
    e = 2.0 * (t + sig * path(t))
    integral = _exp_integral(path, 0.0, t, sig, e)
    return rho0 / math.sqrt(math.exp(-e) + 2.0 * rho0 * rho0 * integral)


def closed_form_series(path: WienerPath, t_max: float, rho0: float, noise_scale: float = 1.0):
    """Closed-form radius at every grid time in ``[0, t_max]``."""
    i0, i1 = path.index(0.0), path.index(t_max)
    s = path.times[i0 : i1 + 1]
    w = path.W[i0 : i1 + 1]
    e = 2.0 * (s + noise_scale * w)
    f = np.exp(e)
    cum = np.concatenate(([0.0], np.cumsum(0.5 * (f[1:] + f[:-1]) * path.dt)))
    if rho0 == 0:
        return s, np.zeros_like(s)
    return s, rho0 / np.sqrt(np.exp(-e) + 2.0 * rho0 * rho0 * cum * np.exp(-e))


@dataclass(frozen=True)
class StationaryRadius:
    value: float
    truncation: float
    change: float  # |rho*_T - rho*_{T/2}|


def stationary_rho_report(path: WienerPath, truncation: float | None = None, noise_scale: float = 1.0,
                          target: float = 1e-8, max_truncation: float = 960.0) -> StationaryRadius:
    """(2 int_{-T}^0 e^{2s + 2W_s} ds)^{-1/2} with a truncation diagnostic.

    The truncation is rounded to the nearest grid time.  With
    ``truncation=None`` the window starts at 30 and doubles (extending
    the path) until the last doubling changes the value by less than ``target``.
    """
    def value(p: WienerPath, T: float) -> float:
        return (2.0 * _exp_integral(p, -T, 0.0, noise_scale, 0.0)) ** -0.5

    if truncation is not None:
        if not truncation > 0:
            raise ValueError("truncation must be positive")
        T = round(truncation / path.dt) * path.dt  # nearest grid time
        path = path.ensure(-T, 0.0)
        v = value(path, T)
        return StationaryRadius(v, T, abs(v - value(path, round(T / 2 / path.dt) * path.dt)))
    T = 30.0
    while True:
        T_grid = round(T / path.dt) * path.dt
        path = path.ensure(-T_grid, 0.0)
        v = value(path, T_grid)
        change = abs(v - value(path, round(T_grid / 2 / path.dt) * path.dt))
        if change < target or T >= max_truncation:
            return StationaryRadius(v, T_grid, change)
        T *= 2


def stationary_rho(path: WienerPath, truncation: float | None = 30.0, noise_scale: float = 1.0) -> float:
    return stationary_rho_report(path, truncation, noise_scale).value


def example_periodic_curve(path: WienerPath, truncation: float | None = 30.0, noise_scale: float = 1.0,
                           resolution: int = 256) -> RandomCurve:
    """The flat invariant curve at height rho*(omega); winding number 1."""
    r = stationary_rho(path, truncation, noise_scale)
    s = np.arange(resolution) / resolution
    return RandomCurve(1, s, np.full((resolution, 1), r))


def stationarity_residuals(path: WienerPath, times, truncation: float = 30.0, noise_scale: float = 1.0,
                           system: ExampleSystem | None = None) -> list[float]:
    """|rho(t, rho*(omega), omega) - rho*(theta_t omega)| with rho by Heun."""
    system = system or ExampleSystem(noise_scale)
    path = path.ensure(-truncation, max(times))
    r0 = stationary_rho(path, truncation, noise_scale)
    out = []
    for t in times:
        _, y = system.flow_batch(path, 0.0, t, np.zeros(1), np.array([[r0]]))
        target = stationary_rho(shift(path, t), truncation, noise_scale)
        out.append(abs(float(y[0, 0]) - target))
    return out
