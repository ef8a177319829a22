"""Contraction data of the period map and the top fiber Lyapunov exponent."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .cocycle import ConditionViolation, CylinderPoint
from .winding import RandomCurve, WindingSystem

DEFAULT_SEEDS = tuple(range(16))
S_STEP = 1e-4


@dataclass(frozen=True)
class ContractionReport:
    n0: int
    lambda_hat: float
    c_hat: float
    L_derived: float
    N_bound: int | None
    b_star: float | None
    gap: float | None
    sample_count: int
    seeds_used: list = field(default_factory=list)


class ContractionFailure(ConditionViolation):
    def __init__(self, report: ContractionReport):
        super().__init__(
            f"lambda_hat={report.lambda_hat:.4g} >= 1 at n0={report.n0}; "
            "the fiber map does not contract over this block, try a larger n0"
        )
        self.report = report


def operator_norm(mats: np.ndarray, iterations: int = 20) -> np.ndarray:
    """Spectral norms of a stack of square matrices, shape (..., d, d) -> (...)."""
    mats = np.asarray(mats, dtype=float)
    d = mats.shape[-1]
    if d <= 3:
        return np.linalg.norm(mats, ord=2, axis=(-2, -1))
    gram = np.swapaxes(mats, -1, -2) @ mats
    v = np.ones(mats.shape[:-1]) / math.sqrt(d)
    for _ in range(iterations):
        w = np.einsum("...ij,...j->...i", gram, v)
        v = w / np.maximum(np.linalg.norm(w, axis=-1, keepdims=True), 1e-300)
    return np.sqrt(np.einsum("...i,...ij,...j->...", v, gram, v))


def depth_bound(lambda_hat: float, b_star: float, gap: float, cap: int = 10_000) -> int | None:
    """Smallest N >= 0 with 2 lambda^N b* < gap, or None if there is none."""
    if not lambda_hat < 1 and 2 * b_star >= gap:
        return None
    n = 0
    while not 2 * lambda_hat**n * b_star < gap:
        n += 1
        if n > cap:
            return None
    return n


def estimate_contraction(ws: WindingSystem, region_samples, n0: int | None = None, seeds=DEFAULT_SEEDS,
                         b_star: float | None = None, gap: float | None = None,
                         raise_on_failure: bool = True) -> ContractionReport:
    """Sampled sup of the fiber Jacobian norm and of the angle derivative over n0 turns.

    ``seeds=None`` uses the realization of ``ws`` only; otherwise the same
    window is regenerated for each listed seed.
    """
    n0 = ws.n0 if n0 is None else int(n0)
    if n0 < 1:
        raise ValueError("n0 must be >= 1")
    samples = list(region_samples)
    if not samples:
        raise ValueError("need at least one region sample")
    s = np.array([p.s for p in samples], dtype=float)
    y = np.array([p.y for p in samples], dtype=float).reshape(len(s), ws.dim)
    span = n0 * ws.t1
    base = ws.base.prepare(ws.path, 0.0, span)
    paths = [base] if seeds is None else [base.with_seed(k) for k in seeds]
    lam, c = 0.0, 0.0
    for p in paths:
        _, _, jac = ws.base.fiber_jacobian(p, 0.0, span, s, y)
        lam = max(lam, float(np.max(operator_norm(jac))))
        _, yp = ws.base.flow_batch(p, 0.0, span, s + S_STEP, y)
        _, ym = ws.base.flow_batch(p, 0.0, span, s - S_STEP, y)
        c = max(c, float(np.max(np.linalg.norm((yp - ym) / (2 * S_STEP), axis=-1))))
    L = c / (1 - lam) if lam < 1 else math.inf
    N = depth_bound(lam, b_star, gap) if b_star is not None and gap is not None else None
    report = ContractionReport(n0, lam, c, L, N, b_star, gap, len(samples),
                               [ws.path.seed] if seeds is None else list(seeds))
    if raise_on_failure and not lam < 1:
        raise ContractionFailure(report)
    return report


def tube_samples(curves: list[RandomCurve], radius: float, per_curve: int = 8) -> list[CylinderPoint]:
    """Points on and around each curve: the curve itself plus +-radius along each axis."""
    out = []
    for c in curves:
        idx = np.linspace(0, len(c.s_grid), per_curve, endpoint=False).astype(int)
        for i in idx:
            s, v = float(c.s_grid[i]) % 1.0, c.values[i]
            out.append(CylinderPoint(s, v))
            for a in range(c.dim):
                for sign in (-1.0, 1.0):
                    w = v.copy()
                    w[a] += sign * radius
                    out.append(CylinderPoint(s, w))
    return out


def lyapunov_exponent(ws: WindingSystem, z0: CylinderPoint, T: float = 1e3, cadence_turns: int = 1) -> float:
    """(1/T) log of the fiber tangent growth, renormalized every ``cadence_turns`` turns.

    Renormalizing only at whole turns keeps the fiber block of the tangent
    map closed under composition, because a full turn does not depend on y.
    """
    if cadence_turns < 1:
        raise ValueError("cadence must be at least one turn")
    dt = ws.path.dt
    total = round(T / dt)
    if total < 1:
        raise ValueError("T must cover at least one step")
    T = total * dt
    block = cadence_turns * round(ws.t1 / dt)
    path = ws.base.prepare(ws.path, 0.0, T)
    ws.base.check_state(z0.y)
    s = np.array([z0.s])
    y = z0.y[None, :].astype(float)
    v = np.ones(ws.dim) / math.sqrt(ws.dim)
    acc = 0.0
    done = 0
    while done < total:
        n = min(block, total - done)
        s, y, jac = ws.base.fiber_jacobian(path, done * dt, (done + n) * dt, s, y)
        v = jac[0] @ v
        norm = float(np.linalg.norm(v))
        if norm == 0.0 or not math.isfinite(norm):
            raise ConditionViolation(f"tangent vector degenerated (norm {norm}) near t={done * dt:.4g}")
        acc += math.log(norm)
        v /= norm
        done += n
    return acc / T
