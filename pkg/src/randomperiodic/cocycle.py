"""States on the cylinder S^1 x R^d and the cocycle interface.

Every flow carries the *lifted* angle (no reduction mod 1) so that winding can
be read off afterwards; reduction only happens at presentation boundaries.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .integrate import SdeSpec, integrate_final, tangent_integrate
from .noise import WienerPath, shift


class ConditionViolation(RuntimeError):
    """A numerical condition the construction relies on does not hold."""


@dataclass(frozen=True)
class CylinderPoint:
    s: float
    y: np.ndarray = field(default_factory=lambda: np.zeros(1))

    def __post_init__(self):
        object.__setattr__(self, "s", float(self.s) % 1.0)
        object.__setattr__(self, "y", np.atleast_1d(np.asarray(self.y, dtype=float)))

    def lift(self) -> LiftedPoint:
        return LiftedPoint(self.s, self.y)


@dataclass(frozen=True)
class LiftedPoint:
    s_lift: float
    y: np.ndarray = field(default_factory=lambda: np.zeros(1))

    def __post_init__(self):
        object.__setattr__(self, "s_lift", float(self.s_lift))
        object.__setattr__(self, "y", np.atleast_1d(np.asarray(self.y, dtype=float)))

    def reduce(self) -> CylinderPoint:
        return CylinderPoint(self.s_lift % 1.0, self.y)


class CocycleSystem:
    """A random dynamical system on S^1 x R^d driven by one Wiener path.

    Subclasses implement :meth:`flow_batch`.  Systems must be autonomous: the
    only time dependence enters through the path, which is what makes the
    flow a cocycle over the shift.

    Attributes
    ----------
    dim : fiber dimension d.
    rotation_time : the time for one full turn when known a priori, else None.
    seed_box : (lo, hi) corners of a fiber box inside the absorbing region.
    lookback : how much path history before ``t0`` a flow reads.
    """

    dim: int = 1
    rotation_time: float | None = None
    seed_box: tuple[np.ndarray, np.ndarray] = (np.array([-1.0]), np.array([1.0]))
    lookback: float = 0.0
    name: str = "system"

    def flow_batch(self, path: WienerPath, t0: float, t1: float, s, y) -> tuple[np.ndarray, np.ndarray]:
        """Flow ``N`` lifted states; ``s`` has shape (N,), ``y`` shape (N, d)."""
        raise NotImplementedError

    def fiber_jacobian(self, path: WienerPath, t0: float, t1: float, s, y):
        """Return ``(s1, y1, D_y)`` with ``D_y`` of shape (N, d, d).

        The default uses central differences in y with step 1e-6*max(1, |y|).
        """
        s = np.asarray(s, dtype=float)
        y = np.asarray(y, dtype=float)
        s1, y1 = self.flow_batch(path, t0, t1, s, y)
        h = 1e-6 * np.maximum(1.0, np.linalg.norm(y, axis=-1, keepdims=True))
        cols = []
        for j in range(self.dim):
            e = np.zeros(self.dim)
            e[j] = 1.0
            _, yp = self.flow_batch(path, t0, t1, s, y + h * e)
            _, ym = self.flow_batch(path, t0, t1, s, y - h * e)
            cols.append((yp - ym) / (2 * h))
        return s1, y1, np.stack(cols, axis=-1)

    def check_state(self, y: np.ndarray) -> None:
        """Reject initial fiber states the system cannot start from."""

    def prepare(self, path: WienerPath, t0: float, t1: float) -> WienerPath:
        """Extend ``path`` so that a flow over ``[t0, t1]`` can run on it."""
        return path.ensure(t0 - self.lookback, t1)

    def seeds(self, count: int) -> np.ndarray:
        """``count`` fiber points spread over :attr:`seed_box` (a tensor grid)."""
        lo, hi = (np.atleast_1d(np.asarray(v, dtype=float)) for v in self.seed_box)
        per_axis = max(2, int(round(count ** (1.0 / self.dim))))
        axes = [np.linspace(a, b, per_axis) for a, b in zip(lo, hi)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)


class SdeCocycle(CocycleSystem):
    """A cocycle generated by a Stratonovich SDE on the lifted state (s, y)."""

    def __init__(self, spec: SdeSpec, seed_box=None, rotation_time=None, name="sde"):
        if spec.dim < 2:
            raise ValueError("an SDE on the cylinder needs state (s, y_1..y_d), dim >= 2")
        self.spec = spec
        self.dim = spec.dim - 1
        self.rotation_time = rotation_time
        self.name = name
        if seed_box is not None:
            self.seed_box = tuple(np.atleast_1d(np.asarray(v, dtype=float)) for v in seed_box)
        else:
            self.seed_box = (-np.ones(self.dim), np.ones(self.dim))

    def flow_batch(self, path, t0, t1, s, y):
        s = np.atleast_1d(np.asarray(s, dtype=float))
        y = np.asarray(y, dtype=float).reshape(len(s), self.dim)
        if t1 == t0:
            return s.copy(), y.copy()
        x = integrate_final(self.spec, path, t0, t1, np.column_stack([s, y]))
        return x[:, 0], x[:, 1:]

    def fiber_jacobian(self, path, t0, t1, s, y):
        s = np.atleast_1d(np.asarray(s, dtype=float))
        y = np.asarray(y, dtype=float).reshape(len(s), self.dim)
        ts = tangent_integrate(self.spec, path, t0, t1, np.column_stack([s, y]))
        return ts.base[:, 0], ts.base[:, 1:], ts.jacobian[:, 1:, 1:]


def flow(system: CocycleSystem, path: WienerPath, t0: float, t1: float, z0: LiftedPoint) -> LiftedPoint:
    """gamma^{theta_{t0} omega}(t1 - t0) applied to ``z0``, angle kept lifted."""
    if t1 < t0:
        raise ValueError("only forward flows are supported")
    if t1 == t0:
        return z0
    s, y = system.flow_batch(path, t0, t1, np.array([z0.s_lift]), z0.y[None, :])
    return LiftedPoint(s[0], y[0])


def verify_cocycle(system: CocycleSystem, path: WienerPath, t_a: float, t_b: float, z: LiftedPoint) -> float:
    """Residual of the composition law over the shift.

    Compares the flow over ``[0, t_a+t_b]`` with the flow over ``[0, t_a]``
    followed by the flow over ``[0, t_b]`` on the ``theta_{t_a}``-shifted path.
    """
    path = system.prepare(path, 0.0, t_a + t_b)
    direct = flow(system, path, 0.0, t_a + t_b, z)
    mid = flow(system, path, 0.0, t_a, z)
    composed = flow(system, shift(path, t_a), 0.0, t_b, mid)
    return float(max(abs(direct.s_lift - composed.s_lift), np.max(np.abs(direct.y - composed.y), initial=0.0)))
