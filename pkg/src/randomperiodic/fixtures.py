"""Closed-form cocycles whose periodic curves are known exactly.

All of them turn once per unit time (t1 = 1), so path grids with 1/dt an
integer keep every turn on the grid.  The fiber motion is an affine
contraction towards a noise-dependent offset

    B(t, s) = c(t) b(s),   c(t) = amplitude * tanh(W(t) - W(t-1)),

so the curves move with the realization while staying exactly computable.
"""
from __future__ import annotations

import math

import numpy as np

from .cocycle import CocycleSystem
from .noise import WienerPath
from .winding import RandomCurve

TWO_PI = 2.0 * math.pi


def _rot(angle):
    """Stack of 2x2 rotations, shape (N, 2, 2)."""
    c, s = np.cos(angle), np.sin(angle)
    return np.stack([np.stack([c, -s], axis=-1), np.stack([s, c], axis=-1)], axis=-2)


class OffsetFixture(CocycleSystem):
    """y = B(t, s) + (rotated) w with w contracting at rate ``contraction`` per turn.

    bistable   -- w_1 is attracted to +1 or -1 (its sign), giving two branches.
    half_twist -- (d = 2 only) w is expressed in a frame turning by pi per
                  turn, so the two branches swap after one turn and form a
                  single curve that closes after two.
    """

    rotation_time = 1.0
    lookback = 1.0

    def __init__(self, dim=1, contraction=0.5, bistable=True, half_twist=False, amplitude=0.25, box=2.0,
                 name="offset"):
        if half_twist and dim != 2:
            raise ValueError("the half-twist frame needs a two-dimensional fiber")
        if not 0 < contraction < 1:
            raise ValueError("contraction must lie in (0, 1)")
        self.dim = dim
        self.contraction = float(contraction)
        self.bistable = bistable
        self.half_twist = half_twist
        self.amplitude = float(amplitude)
        self.seed_box = (-box * np.ones(dim), box * np.ones(dim))
        self.name = name

    def __repr__(self):
        return (f"OffsetFixture(dim={self.dim}, contraction={self.contraction}, bistable={self.bistable}, "
                f"half_twist={self.half_twist})")

    def profile(self, s):
        s = np.asarray(s, dtype=float)
        if self.dim == 1:
            return (np.sin(TWO_PI * s) + 0.5)[..., None]
        cols = [np.cos(TWO_PI * s) + 0.3, np.sin(TWO_PI * s) + 0.2]
        cols += [np.cos(TWO_PI * (k + 1) * s) for k in range(self.dim - 2)]
        return np.stack(cols, axis=-1)

    def strength(self, path: WienerPath, t: float) -> float:
        return self.amplitude * math.tanh(path(t) - path(t - 1.0))

    def offset(self, path, t, s):
        return self.strength(path, t) * self.profile(s)

    def _frame(self, s):
        return _rot(math.pi * np.asarray(s, dtype=float))

    def flow_batch(self, path, t0, t1, s, y):
        s = np.atleast_1d(np.asarray(s, dtype=float))
        y = np.asarray(y, dtype=float).reshape(len(s), self.dim)
        if t1 == t0:
            return s.copy(), y.copy()
        tau = t1 - t0
        q = self.contraction**tau
        w = y - self.offset(path, t0, s)
        if self.half_twist:
            w = np.einsum("nji,nj->ni", self._frame(s), w)  # inverse rotation
        target = np.zeros_like(w)
        if self.bistable:
            target[:, 0] = np.sign(w[:, 0])
        w = target + q * (w - target)
        s1 = s + tau
        if self.half_twist:
            w = np.einsum("nij,nj->ni", self._frame(s1), w)
        return s1, w + self.offset(path, t1, s1)

    def fiber_jacobian(self, path, t0, t1, s, y):
        s1, y1 = self.flow_batch(path, t0, t1, s, y)
        q = self.contraction ** (t1 - t0)
        if self.half_twist:
            jac = q * _rot(math.pi * (s1 - np.atleast_1d(s)))
        else:
            jac = np.broadcast_to(q * np.eye(self.dim), (len(s1), self.dim, self.dim)).copy()
        return s1, y1, jac

    def invariant_curves(self, path: WienerPath, t: float = 0.0, resolution: int = 256) -> list[RandomCurve]:
        """The exact periodic curves at local time ``t``, labelled as extraction labels them."""
        if self.half_twist and self.bistable:
            s = np.arange(2 * resolution) / resolution
            e1 = np.zeros((len(s), 2))
            e1[:, 0] = 1.0
            branch = np.einsum("nij,nj->ni", self._frame(s), e1)
            values = self.offset(path, t, s) + branch
            if tuple(values[resolution]) < tuple(values[0]):
                values = np.roll(values, -resolution, axis=0)
            return [RandomCurve(2, s, values)]
        s = np.arange(resolution) / resolution
        base = self.offset(path, t, s)
        if not self.bistable:
            return [RandomCurve(1, s, base)]
        shift = np.zeros(self.dim)
        shift[0] = 1.0
        return [RandomCurve(1, s, base - shift, curve_id=0), RandomCurve(1, s, base + shift, curve_id=1)]


class LinearForcedFixture(CocycleSystem):
    """Deterministic y' = -kappa y + q(s) with the period map g(s, y) = lam0 y + sin(2 pi s).

    The flow over time tau from angle s is
        lam0^tau y + (sin 2pi(s + tau) - lam0^tau sin 2pi s) / (1 - lam0).
    """

    dim = 1
    rotation_time = 1.0
    name = "linear"

    def __init__(self, lam0=0.5):
        if not 0 < lam0 < 1:
            raise ValueError("lam0 must lie in (0, 1)")
        self.lam0 = float(lam0)
        self.seed_box = (np.array([-2.0]), np.array([2.0]))

    def flow_batch(self, path, t0, t1, s, y):
        s = np.atleast_1d(np.asarray(s, dtype=float))
        y = np.asarray(y, dtype=float).reshape(len(s), 1)
        tau = t1 - t0
        q = self.lam0**tau
        forced = (np.sin(TWO_PI * (s + tau)) - q * np.sin(TWO_PI * s)) / (1 - self.lam0)
        return s + tau, q * y + forced[:, None]

    def fiber_jacobian(self, path, t0, t1, s, y):
        s1, y1 = self.flow_batch(path, t0, t1, s, y)
        return s1, y1, np.full((len(s1), 1, 1), self.lam0 ** (t1 - t0))

    def invariant_curve(self, resolution: int = 256) -> RandomCurve:
        s = np.arange(resolution) / resolution
        return RandomCurve(1, s, (np.sin(TWO_PI * s) / (1 - self.lam0))[:, None])


class ZeroDynamicsFixture(CocycleSystem):
    """Unit-speed rotation with a frozen fiber."""

    rotation_time = 1.0
    name = "zero"

    def __init__(self, dim=1):
        self.dim = dim
        self.seed_box = (-np.ones(dim), np.ones(dim))

    def flow_batch(self, path, t0, t1, s, y):
        s = np.atleast_1d(np.asarray(s, dtype=float))
        return s + (t1 - t0), np.asarray(y, dtype=float).reshape(len(s), self.dim).copy()

    def fiber_jacobian(self, path, t0, t1, s, y):
        s1, y1 = self.flow_batch(path, t0, t1, s, y)
        return s1, y1, np.broadcast_to(np.eye(self.dim), (len(s1), self.dim, self.dim)).copy()


def two_curve_fixture(contraction=0.5) -> OffsetFixture:
    return OffsetFixture(1, contraction, bistable=True, name="two-curve")


def winding_two_fixture(contraction=0.5) -> OffsetFixture:
    return OffsetFixture(2, contraction, bistable=True, half_twist=True, box=1.75, name="winding-2")


def single_curve_fixture(contraction=0.5) -> OffsetFixture:
    return OffsetFixture(1, contraction, bistable=False, name="single-curve")


FIXTURES = {
    "two-curve": two_curve_fixture,
    "winding-2": winding_two_fixture,
    "single-curve": single_curve_fixture,
    "linear": LinearForcedFixture,
    "zero": ZeroDynamicsFixture,
}
