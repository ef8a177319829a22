"""Two-sided Brownian paths that can be replayed, shifted, extended and refined.

A path is a pure function of ``(seed, base_dt, refinement factors)`` evaluated
on a window of the uniform grid.  Values are stored anchored at the absolute
grid index 0 of the generating realization; shifting only moves the local
origin, so ``shift`` composes exactly.  Random numbers are drawn per block of
grid cells from a ``SeedSequence`` keyed by the absolute block index, which
makes extension and refinement independent of the order of calls.
"""
from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

BLOCK = 1024
GRID_TOL = 1e-6  # in units of cells


class GridError(ValueError):
    """A time or span does not sit on the path grid."""


class PathDomainError(ValueError):
    """A requested time interval lies outside the stored window."""


def _float_key(x: float) -> int:
    return struct.unpack("<Q", struct.pack("<d", float(x)))[0]


def _zigzag(k: int) -> int:
    return 2 * k if k >= 0 else -2 * k - 1


def _prime_factors(n: int) -> list[int]:
    out, p = [], 2
    while p * p <= n:
        while n % p == 0:
            out.append(p)
            n //= p
        p += 1
    if n > 1:
        out.append(n)
    return out


def to_cells(t: float, dt: float) -> int:
    """Return ``t/dt`` as an integer, raising GridError if ``t`` is off grid."""
    x = t / dt
    k = round(x)
    if abs(x - k) > GRID_TOL:
        raise GridError(f"time {t!r} is not a multiple of dt={dt!r}")
    return int(k)


def _block_normals(key: list[int], shape: tuple[int, ...]) -> np.ndarray:
    rng = np.random.default_rng(np.random.SeedSequence(key))
    return rng.standard_normal(shape)


def _base_increments(seed: int | None, base_dt: float, c_lo: int, c_hi: int) -> np.ndarray:
    """Gaussian increments for absolute base cells ``c_lo .. c_hi-1``."""
    n = c_hi - c_lo
    if seed is None or n == 0:
        return np.zeros(n)
    b_lo, b_hi = c_lo // BLOCK, (c_hi - 1) // BLOCK
    sd = math.sqrt(base_dt)
    chunks = [
        _block_normals([seed, 0, _float_key(base_dt), _zigzag(b)], (BLOCK,))
        for b in range(b_lo, b_hi + 1)
    ]
    z = np.concatenate(chunks)[c_lo - b_lo * BLOCK : c_hi - b_lo * BLOCK]
    return z * sd


def _anchored_values(inc: np.ndarray, c_lo: int) -> np.ndarray:
    """Cumulative path values over cells ``c_lo..`` with value 0 at absolute index 0.

    Both half-lines are accumulated outward from 0 so that growing the window
    never changes previously computed values.
    """
    n_neg = -c_lo
    pos = np.concatenate(([0.0], np.cumsum(inc[n_neg:])))
    neg = -np.cumsum(inc[:n_neg][::-1])
    return np.concatenate((neg[::-1], pos))


def _bridge_refine(
    seed: int | None, level: int, p: int, dt_coarse: float, c_lo: int, v: np.ndarray
) -> np.ndarray:
    """Insert ``p-1`` Brownian-bridge points in every cell of ``v``.

    ``v`` holds values at coarse indices ``c_lo .. c_lo+len(v)-1``.  The
    returned array holds values at fine indices ``p*c_lo .. p*(c_lo+len(v)-1)``;
    every coarse value is copied unchanged.
    """
    n_cells = len(v) - 1
    fine = np.empty(n_cells * p + 1)
    fine[::p] = v
    if n_cells == 0:
        return fine
    if seed is None:
        z = np.zeros((n_cells, p - 1))
    else:
        c_hi = c_lo + n_cells
        b_lo, b_hi = c_lo // BLOCK, (c_hi - 1) // BLOCK
        chunks = [
            _block_normals(
                [seed, 1, level, p, _float_key(dt_coarse), _zigzag(b)], (BLOCK, p - 1)
            )
            for b in range(b_lo, b_hi + 1)
        ]
        z = np.concatenate(chunks)[c_lo - b_lo * BLOCK : c_hi - b_lo * BLOCK]
    h = dt_coarse / p
    left, right = v[:-1].copy(), v[1:]
    for j in range(1, p):
        remaining = dt_coarse - (j - 1) * h
        mean = left + (right - left) * (h / remaining)
        var = h * (remaining - h) / remaining
        left = mean + math.sqrt(var) * z[:, j - 1]
        fine[j::p][:n_cells] = left
    return fine


def _generate(
    seed: int | None, base_dt: float, factors: tuple[int, ...], a_lo: int, a_hi: int
) -> np.ndarray:
    """Values at absolute fine indices ``a_lo..a_hi`` (window must contain 0)."""
    total = math.prod(factors)
    c_lo = a_lo // total
    c_hi = -((-a_hi) // total)
    v = _anchored_values(_base_increments(seed, base_dt, c_lo, c_hi), c_lo)
    lo, dt_level = c_lo, base_dt
    for level, p in enumerate(factors):
        v = _bridge_refine(seed, level, p, dt_level, lo, v)
        lo *= p
        dt_level /= p
    return v[a_lo - lo : a_hi - lo + 1]


@dataclass(frozen=True, eq=False)
class WienerPath:
    """A discretised two-sided Wiener path, i.e. one realization omega.

    ``seed=None`` denotes the identically zero path.
    """

    seed: int | None
    base_dt: float
    factors: tuple[int, ...]
    start: int  # absolute grid index of values[0]
    values: np.ndarray  # anchored so that the absolute index 0 carries 0.0
    origin: int  # absolute grid index of local time 0

    def __post_init__(self):
        self.values.flags.writeable = False

    @property
    def dt(self) -> float:
        return self.base_dt / math.prod(self.factors)

    @property
    def stop(self) -> int:
        return self.start + len(self.values) - 1

    @property
    def t_min(self) -> float:
        return (self.start - self.origin) * self.dt

    @property
    def t_max(self) -> float:
        return (self.stop - self.origin) * self.dt

    @property
    def origin_offset(self) -> int:
        return self.origin - self.start

    @property
    def increments(self) -> np.ndarray:
        return np.diff(self.values)

    @property
    def times(self) -> np.ndarray:
        return (np.arange(self.start, self.stop + 1) - self.origin) * self.dt

    @property
    def W(self) -> np.ndarray:
        """Local path values on the whole window; exactly 0 at the origin."""
        return self.values - self.values[self.origin_offset]

    def index(self, t: float) -> int:
        """Array index of grid time ``t``."""
        k = self.origin_offset + to_cells(t, self.dt)
        if not 0 <= k < len(self.values):
            raise PathDomainError(f"t={t} outside [{self.t_min}, {self.t_max}]")
        return k

    def __call__(self, t: float) -> float:
        return float(self.values[self.index(t)] - self.values[self.origin_offset])

    def window(self, t0: float, t1: float) -> np.ndarray:
        """Increments over the cells spanning ``[t0, t1]``."""
        i0, i1 = self.index(t0), self.index(t1)
        return np.diff(self.values[i0 : i1 + 1])

    def covers(self, t0: float, t1: float) -> bool:
        return self.t_min <= t0 + 0.5 * self.dt and t1 - 0.5 * self.dt <= self.t_max

    def ensure(self, t0: float, t1: float) -> WienerPath:
        """Return a path covering ``[t0, t1]``, extending on either side as needed."""
        if self.covers(t0, t1):
            return self
        lo = min(self.start, self.origin + to_cells(t0, self.dt))
        hi = max(self.stop, self.origin + to_cells(t1, self.dt))
        return self._regrid(lo, hi)

    def with_seed(self, seed: int | None) -> WienerPath:
        """Same grid and window, different realization."""
        return self._regrid(self.start, self.stop, seed=seed)

    def _regrid(self, lo: int, hi: int, seed=..., factors=None, scale: int = 1) -> WienerPath:
        seed = self.seed if seed is ... else seed
        factors = self.factors if factors is None else factors
        lo, hi = min(lo, 0), max(hi, 0)
        vals = _generate(seed, self.base_dt, factors, lo, hi)
        return WienerPath(seed, self.base_dt, factors, lo, vals, self.origin * scale)


def generate_path(seed: int | None, t_min: float, t_max: float, dt: float) -> WienerPath:
    """Generate the realization ``seed`` on the grid ``k*dt`` covering ``[t_min, t_max]``.

    Window ends that fall between grid points are widened to the next point out.
    """
    if not dt > 0:
        raise GridError(f"dt must be positive, got {dt!r}")
    if not t_min <= 0 <= t_max:
        raise GridError("need t_min <= 0 <= t_max")
    lo = math.floor(t_min / dt + GRID_TOL)
    hi = math.ceil(t_max / dt - GRID_TOL)
    vals = _generate(seed, float(dt), (), lo, hi)
    return WienerPath(seed, float(dt), (), lo, vals, 0)


def zero_path(t_min: float, t_max: float, dt: float) -> WienerPath:
    """The path W == 0 on the given grid."""
    return generate_path(None, t_min, t_max, dt)


def shift(path: WienerPath, t: float) -> WienerPath:
    """theta_t: the path ``s -> W(t+s) - W(t)``, extending the window if needed."""
    k = to_cells(t, path.dt)
    if k == 0:
        return path
    origin = path.origin + k
    p = path
    if not path.start <= origin <= path.stop:
        p = path._regrid(min(path.start, origin), max(path.stop, origin))
    return replace(p, origin=origin)


def extend_left(path: WienerPath, new_t_min: float) -> WienerPath:
    """Extend the window to start at ``new_t_min``; stored values are unchanged."""
    k = to_cells(new_t_min, path.dt)
    lo = path.origin + k
    if lo >= path.start:
        return path
    return path._regrid(lo, path.stop)


def extend_right(path: WienerPath, new_t_max: float) -> WienerPath:
    k = to_cells(new_t_max, path.dt)
    hi = path.origin + k
    if hi <= path.stop:
        return path
    return path._regrid(path.start, hi)


def refine(path: WienerPath, factor: int) -> WienerPath:
    """Subdivide every cell into ``factor`` cells by Brownian-bridge sampling.

    The factor is applied as its ascending prime factors, so refining by 2
    twice gives exactly the same path as refining by 4 once.
    """
    if int(factor) != factor or factor < 2:
        raise ValueError(f"refinement factor must be an integer >= 2, got {factor!r}")
    factor = int(factor)
    factors = path.factors + tuple(_prime_factors(factor))
    return path._regrid(path.start * factor, path.stop * factor, factors=factors, scale=factor)


def write_csv(path: WienerPath, fname: str | Path) -> None:
    with open(fname, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "W"])
        for t, x in zip(path.times, path.W):
            w.writerow([repr(float(t)), repr(float(x))])


def read_csv(fname: str | Path) -> WienerPath:
    """Load a path written by :func:`write_csv`.

    Lines starting with ``#`` are skipped.  The loaded path has no seed, so it cannot be extended or refined; the
    grid must contain t=0.
    """
    with open(fname, newline="") as fh:
        rows = list(csv.reader(line for line in fh if not line.startswith("#")))
    if not rows or [c.strip() for c in rows[0]] != ["t", "W"]:
        raise ValueError("path CSV must start with the header row 't,W'")
    data = np.array([[float(a), float(b)] for a, b in rows[1:]])
    t, w = data[:, 0], data[:, 1]
    dt = float(np.median(np.diff(t)))
    if not np.allclose(np.diff(t), dt, rtol=1e-9, atol=1e-12):
        raise GridError("path CSV times are not uniformly spaced")
    lo = to_cells(t[0], dt)
    if to_cells(t[-1], dt) - lo != len(t) - 1:
        raise GridError("path CSV times are not in grid order")
    if not lo <= 0 <= lo + len(t) - 1:
        raise GridError("path CSV must contain t=0")
    vals = w - w[-lo]
    return _LoadedPath(None, dt, (), lo, vals, 0)


class _LoadedPath(WienerPath):
    """A path read from disk: fixed window, no generator behind it."""

    def _regrid(self, lo, hi, seed=..., factors=None, scale=1):
        if seed is not ... or factors is not None or lo < self.start or hi > self.stop:
            raise PathDomainError("a path loaded from CSV cannot be extended, reseeded or refined")
        return self
