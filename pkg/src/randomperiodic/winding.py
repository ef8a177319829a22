"""Random periodic curves of a cocycle on the cylinder via its time-t1 skew product.

The period map H(s, y) = (s + 1, g(s, y)) is the cocycle over one full turn.
Invariant fibers over an angle are sampled by pulling a set of seeds back
through many turns; the surviving clusters are the points where the periodic
curves cross that fiber.  Following the clusters once around the circle gives
a permutation of them, and each cycle of that permutation is one curve whose
winding number is the cycle length.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.cluster.hierarchy import fcluster, linkage
from scipy.spatial.distance import cdist, pdist

from .cocycle import CocycleSystem, ConditionViolation, CylinderPoint, LiftedPoint, flow
from .noise import GridError, WienerPath, shift, to_cells

ANGLE_TOL = 1e-9


class GridAlignmentError(ConditionViolation):
    """The rotation time is not a whole number of path steps."""


class FiberUnresolved(ConditionViolation):
    """Pulled-back fiber points have not separated into clean clusters."""


class AmbiguousMatch(ConditionViolation):
    """A point is close to more than one cluster, or to none."""


# ---------------------------------------------------------------- data types


@dataclass(frozen=True)
class WindingSystem:
    base: CocycleSystem
    path: WienerPath
    t1: float
    n0: int = 1

    def __post_init__(self):
        if not self.t1 > 0:
            raise ValueError("rotation time must be positive")
        if int(self.n0) != self.n0 or self.n0 < 1:
            raise ValueError("n0 must be a positive integer")

    @property
    def dim(self) -> int:
        return self.base.dim

    def covering(self, k_lo: float, k_hi: float) -> WindingSystem:
        """Same realization with the path covering turns ``k_lo .. k_hi``."""
        p = self.base.prepare(self.path, k_lo * self.t1, k_hi * self.t1)
        return self if p is self.path else replace(self, path=p)

    def shifted(self, k: int) -> WindingSystem:
        """The system for the realization shifted by ``k`` whole turns."""
        return replace(self, path=shift(self.path, k * self.t1))


@dataclass(frozen=True)
class FiberSample:
    s_star: float
    points: np.ndarray  # (N, d)
    components: tuple[np.ndarray, ...]  # index arrays, lexicographic by mean
    gap: float  # smallest distance between two clusters (inf for one cluster)
    diameter_bound: float  # largest cluster diameter
    cutoff: float
    m: int

    @property
    def r(self) -> int:
        return len(self.components)

    def representatives(self) -> np.ndarray:
        return np.array([self.points[c].mean(axis=0) for c in self.components])


@dataclass(frozen=True)
class PermutationTrace:
    m: int
    mapping: tuple[int, ...]  # earlier cluster i lands in current cluster mapping[i]

    def is_bijection(self) -> bool:
        return sorted(self.mapping) == list(range(len(self.mapping)))

    def compose(self, other: PermutationTrace) -> PermutationTrace:
        """``self`` after ``other`` (apply ``other`` first)."""
        return PermutationTrace(self.m + other.m, tuple(self.mapping[j] for j in other.mapping))


@dataclass(frozen=True, eq=False)
class RandomCurve:
    """One periodic curve sampled on a uniform grid over ``[0, tau)``."""

    tau: int
    s_grid: np.ndarray
    values: np.ndarray  # (len(s_grid), d)
    closure_gap: float = 0.0  # mismatch where the curve closes up at s = tau
    curve_id: int = 0
    lipschitz_estimate: float = field(init=False)

    def __post_init__(self):
        if int(self.tau) != self.tau or self.tau < 1:
            raise ValueError("winding number must be a positive integer")
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        s = np.asarray(self.s_grid, dtype=float)
        if len(s) != len(values) or len(s) < 2:
            raise ValueError("s_grid and values must have the same length >= 2")
        h = np.diff(np.append(s, s[0] + self.tau))
        if not np.allclose(h, h[0], rtol=1e-9, atol=1e-12) or abs(s[0]) > 1e-12:
            raise ValueError("s_grid must be uniform on [0, tau)")
        object.__setattr__(self, "tau", int(self.tau))
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "s_grid", s)
        jumps = np.linalg.norm(np.roll(values, -1, axis=0) - values, axis=1)
        object.__setattr__(self, "lipschitz_estimate", float(np.max(jumps / h[0])))

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def resolution(self) -> int:
        """Grid points per unit angle."""
        return len(self.s_grid) // self.tau

    def __call__(self, s) -> np.ndarray:
        """Periodic piecewise-linear evaluation; shape (..., d)."""
        s = np.asarray(s, dtype=float)
        n = len(self.s_grid)
        x = np.mod(s, self.tau) * (n / self.tau)
        i = np.floor(x).astype(int) % n
        w = (x - np.floor(x))[..., None]
        return (1 - w) * self.values[i] + w * self.values[(i + 1) % n]

    def shift_residual(self, k: int) -> float:
        """sup_s |phi(s + k) - phi(s)| on the grid, for an integer ``k``."""
        step = k * self.resolution
        return float(np.max(np.linalg.norm(np.roll(self.values, -step, axis=0) - self.values, axis=1)))

    def is_minimal_period(self, tol: float) -> bool:
        """True when no proper divisor of tau closes the curve within ``tol``."""
        return all(self.shift_residual(d) > tol for d in range(1, self.tau) if self.tau % d == 0)


@dataclass(frozen=True)
class ExtractionConfig:
    m_max: int = 60
    cluster_gap_floor: float = 1e-2
    s_resolution: int = 256
    fiber_seed_count: int = 16
    tolerance: float = 1e-3

    def __post_init__(self):
        for name in ("m_max", "cluster_gap_floor", "s_resolution", "fiber_seed_count", "tolerance"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class Extraction:
    curves: list[RandomCurve]
    t1: float
    depth: int
    b_star: float
    lambda_hat: float
    max_cluster_diameter: float
    config: ExtractionConfig

    @property
    def r(self) -> int:
        return len(self.curves)

    @property
    def taus(self) -> list[int]:
        return [c.tau for c in self.curves]


# ------------------------------------------------------------ rotation time


def build_winding_system(system: CocycleSystem, path: WienerPath, probe_states=None, n0: int = 1,
                         max_time: float = 1e3) -> WindingSystem:
    """Measure the time of one full turn and check it is the same for every probe.

    Each probe is flowed forward in chunks until its lifted angle has grown
    by 1; the crossing time is located to within one step and interpolated.
    The result is snapped to the path grid and re-verified exactly.
    """
    if probe_states is None:
        ys = system.seeds(2)
        probe_states = [CylinderPoint(s, y) for s in (0.0, 0.37) for y in ys]
    s0 = np.array([p.s for p in probe_states], dtype=float)
    y0 = np.array([p.y for p in probe_states], dtype=float).reshape(len(s0), system.dim)
    dt = path.dt
    chunk = 64 * dt
    path = system.prepare(path, 0.0, chunk)
    s, y, t = s0.copy(), y0.copy(), 0.0
    crossing = np.full(len(s0), np.nan)
    while np.any(np.isnan(crossing)):
        if t > max_time:
            raise ConditionViolation(f"angle did not complete a turn within t={max_time}")
        path = system.prepare(path, 0.0, t + chunk)
        s_new, y_new = system.flow_batch(path, t, t + chunk, s, y)
        if np.any(s_new < s):
            bad = np.flatnonzero(s_new < s).tolist()
            raise ConditionViolation(f"angle is not monotone for probes {bad}")
        for i in np.flatnonzero(np.isnan(crossing) & (s_new - s0 >= 1.0)):
            crossing[i] = _locate_crossing(system, path, t, s[i], y[i], s0[i] + 1.0)
        s, y, t = s_new, y_new, t + chunk
    spread = float(np.max(crossing) - np.min(crossing))
    if spread > 2 * dt:
        bad = np.flatnonzero(np.abs(crossing - np.median(crossing)) > dt).tolist()
        raise ConditionViolation(
            f"rotation time depends on the start state (spread {spread:.3g}); disagreeing probes: {bad}"
        )
    t1_est = float(np.mean(crossing))
    k = max(1, round(t1_est / dt))
    t1 = k * dt
    path = system.prepare(path, 0.0, t1)
    s1, _ = system.flow_batch(path, 0.0, t1, s0, y0)
    miss = np.abs(s1 - s0 - 1.0)
    if np.any(miss > ANGLE_TOL):
        if spread <= 2 * dt and np.ptp(miss) <= ANGLE_TOL:
            raise GridAlignmentError(
                f"one turn takes t1={t1_est:.12g}, not a multiple of dt={dt!r}; "
                f"use dt={t1_est / k!r} ({k} steps per turn)"
            )
        bad = np.flatnonzero(miss > ANGLE_TOL).tolist()
        raise ConditionViolation(f"angle advance over t1 differs from 1 for probes {bad} (max {miss.max():.3g})")
    return WindingSystem(system, path, t1, n0)


def _locate_crossing(system, path, t, s, y, target) -> float:
    dt = path.dt
    s_prev, y = np.array([s]), y[None, :]
    for k in range(64):
        s_next, y = system.flow_batch(path, t + k * dt, t + (k + 1) * dt, s_prev, y)
        if s_next[0] >= target:
            frac = (target - s_prev[0]) / (s_next[0] - s_prev[0])
            return t + (k + frac) * dt
        s_prev = s_next
    return t + 64 * dt


def apply_H(ws: WindingSystem, k: int, z: LiftedPoint) -> LiftedPoint:
    """k turns of the period map starting at local time 0 of ``ws.path``."""
    if k < 0:
        raise ValueError("k must be >= 0")
    if k == 0:
        return z
    ws = ws.covering(0, k)
    out = flow(ws.base, ws.path, 0.0, k * ws.t1, z)
    if abs(out.s_lift - z.s_lift - k) > ANGLE_TOL * max(1, k):
        raise ConditionViolation(f"angle advanced by {out.s_lift - z.s_lift!r} over {k} turns")
    return out


# ------------------------------------------------------------------- fibers


def cluster_points(points: np.ndarray, cutoff: float) -> tuple[tuple[np.ndarray, ...], float, float]:
    """Single-linkage clusters at ``cutoff``; returns (clusters, gap, max diameter).

    Clusters come back in lexicographic order of their means.
    """
    points = np.asarray(points, dtype=float)
    n = len(points)
    if n == 0:
        raise ValueError("no points to cluster")
    if n == 1:
        return (np.array([0]),), math.inf, 0.0
    labels = fcluster(linkage(points, method="single"), t=cutoff, criterion="distance")
    groups = [np.flatnonzero(labels == lab) for lab in np.unique(labels)]
    groups.sort(key=lambda g: tuple(points[g].mean(axis=0)))
    diam = max((float(pdist(points[g]).max()) if len(g) > 1 else 0.0) for g in groups)
    gap = math.inf
    for i in range(len(groups)):
        for j in range(i + 1, len(groups)):
            gap = min(gap, float(cdist(points[groups[i]], points[groups[j]]).min()))
    return tuple(groups), gap, diam


def clustering_cutoff(m: int, gap_floor: float, contraction: float | None, b_star: float | None) -> float:
    """max(floor, 10 * 2 lambda^m b*), never more than b*/4 so that shallow depths
    do not merge clusters that are a sizable fraction of the fiber apart."""
    if contraction is None or b_star is None:
        return gap_floor
    bound = 2.0 * contraction**m * b_star
    return max(gap_floor, min(10.0 * bound, 0.25 * b_star))


def _pullback_points(ws: WindingSystem, angles, turns: int, seeds: np.ndarray) -> np.ndarray:
    """Fiber points at time 0 over each angle, pulled back ``turns`` turns.

    Returns shape (len(angles), len(seeds), d).
    """
    angles = np.asarray(angles, dtype=float)
    seeds = np.asarray(seeds, dtype=float).reshape(-1, ws.dim)
    ws.base.check_state(seeds)
    na, ns = len(angles), len(seeds)
    if turns == 0:
        return np.broadcast_to(seeds, (na, ns, ws.dim)).copy()
    ws = ws.covering(-turns, 0)
    s0 = np.repeat(angles - turns, ns)
    y0 = np.tile(seeds, (na, 1))
    s1, y1 = ws.base.flow_batch(ws.path, -turns * ws.t1, 0.0, s0, y0)
    if np.any(np.abs(s1 - s0 - turns) > ANGLE_TOL * turns):
        raise ConditionViolation("angle advance over the pullback window is not a whole number of turns")
    return y1.reshape(na, ns, ws.dim)


def sample_fiber(ws: WindingSystem, s_star: float, m: int, seeds, contraction: float | None = None,
                 b_star: float | None = None, gap_floor: float = 1e-2, cutoff: float | None = None) -> FiberSample:
    """Pull ``seeds`` back m*n0 turns onto the fiber over ``s_star`` and cluster them."""
    if m < 0:
        raise ValueError("depth must be >= 0")
    points = _pullback_points(ws, [s_star], m * ws.n0, seeds)[0]
    if cutoff is None:
        cutoff = clustering_cutoff(m, gap_floor, contraction, b_star)
    groups, gap, diam = cluster_points(points, cutoff)
    if len(groups) > 1 and gap < gap_floor:
        raise FiberUnresolved(f"cluster gap {gap:.3g} below floor {gap_floor:.3g} at depth {m}; increase m")
    return FiberSample(float(s_star), points, groups, gap, diam, cutoff, m)


def trace_permutation(ws: WindingSystem, fiber: FiberSample, m: int, seeds=None) -> PermutationTrace:
    """Where the clusters of the fiber m*n0 turns earlier land on ``fiber``.

    The earlier fiber is sampled for the realization shifted back by m*n0
    turns with the same seeds and cutoff, then pushed forward to time 0.
    """
    turns = m * ws.n0
    if turns == 0:
        return PermutationTrace(0, tuple(range(fiber.r)))
    if seeds is None:
        seeds = fiber.points
    early_ws = ws.covering(-2 * turns, 0).shifted(-turns)
    early = sample_fiber(early_ws, fiber.s_star, fiber.m, seeds, cutoff=fiber.cutoff, gap_floor=0.0)
    if early.r != fiber.r:
        raise FiberUnresolved(f"{early.r} clusters {turns} turns earlier but {fiber.r} now; increase depth")
    reps = early.representatives()
    ws = ws.covering(-turns, 0)
    s_land, y_land = ws.base.flow_batch(ws.path, -turns * ws.t1, 0.0, np.full(len(reps), fiber.s_star), reps)
    mapping = []
    for i, y in enumerate(y_land):
        dists = [float(np.min(np.linalg.norm(fiber.points[c] - y, axis=1))) for c in fiber.components]
        near = [j for j, d in enumerate(dists) if d <= fiber.cutoff]
        if len(near) != 1:
            raise AmbiguousMatch(
                f"cluster {i} lands near {len(near)} clusters (distances {np.round(dists, 6).tolist()}); increase depth"
            )
        mapping.append(near[0])
    trace = PermutationTrace(m, tuple(mapping))
    if not trace.is_bijection():
        raise ConditionViolation(f"cluster transport {mapping} is not a permutation")
    return trace


# --------------------------------------------------------------- extraction


def _fibers_on_grid(ws, angles, turns, seeds, cutoff):
    pts = _pullback_points(ws, angles, turns, seeds)
    out = [cluster_points(p, cutoff) for p in pts]
    reps = [np.array([p[g].mean(axis=0) for g in groups]) for p, (groups, _, _) in zip(pts, out)]
    diam = max(d for _, _, d in out)
    return reps, diam


def _continue_along(reps: list[np.ndarray]) -> np.ndarray:
    """Follow every cluster at angle 0 through consecutive grid angles.

    Returns an index table ``idx[j, i]``: the cluster at angle j that the
    cluster i at angle 0 continues to.
    """
    r = len(reps[0])
    idx = np.empty((len(reps), r), dtype=int)
    idx[0] = np.arange(r)
    for j in range(1, len(reps)):
        d = cdist(reps[j - 1], reps[j])
        nxt = np.argmin(d, axis=1)
        if r > 1:
            srt = np.sort(d, axis=1)
            if np.any(srt[:, 0] >= 0.5 * srt[:, 1]) or len(set(nxt.tolist())) != r:
                raise AmbiguousMatch(f"clusters cannot be followed unambiguously near angle step {j}")
        idx[j] = nxt[idx[j - 1]]
    return idx


def _cycles(perm: list[int]) -> list[list[int]]:
    seen, out = set(), []
    for start in range(len(perm)):
        if start in seen:
            continue
        cyc, i = [], start
        while i not in seen:
            seen.add(i)
            cyc.append(i)
            i = perm[i]
        out.append(cyc)
    return out


def extract_curves_report(ws: WindingSystem, config: ExtractionConfig | None = None,
                          lambda_hat: float | None = None) -> Extraction:
    """Find every periodic curve of the realization and its winding number."""
    from .lyapunov import estimate_contraction

    cfg = config or ExtractionConfig()
    seeds = ws.base.seeds(cfg.fiber_seed_count)
    res = cfg.s_resolution

    # probe: rough fibers at a few angles give b* and the local contraction rate
    probe_m = min(2, cfg.m_max)
    probe_angles = np.array([0.0, 0.25, 0.5, 0.75])
    pts = _pullback_points(ws, probe_angles, probe_m * ws.n0, seeds)
    b_star = 1.2 * max(float(pdist(p).max()) for p in pts)
    if lambda_hat is None:
        samples = []
        for a, p in zip(probe_angles, pts):
            groups, _, _ = cluster_points(p, cfg.cluster_gap_floor)
            samples += [CylinderPoint(a, p[g].mean(axis=0)) for g in groups]
        lambda_hat = estimate_contraction(ws, samples, ws.n0, seeds=None).lambda_hat
    if not lambda_hat < 1:
        raise ConditionViolation(f"fiber map does not contract (lambda_hat={lambda_hat:.4g}); try a larger n0")

    target = min(cfg.cluster_gap_floor / 4, cfg.tolerance / 10)
    m = 1
    while m < cfg.m_max and lambda_hat**m * b_star >= target:
        m += 1

    angles = np.arange(res + 1) / res
    while True:
        cutoff = clustering_cutoff(m, cfg.cluster_gap_floor, lambda_hat, b_star)
        reps, diam = _fibers_on_grid(ws, angles, m * ws.n0, seeds, cutoff)
        counts = {len(x) for x in reps}
        if len(counts) == 1 and diam <= cfg.tolerance / 10:
            try:
                curves = _assemble(reps, cfg)
                break
            except AmbiguousMatch:
                if m >= cfg.m_max:
                    raise
        elif m >= cfg.m_max:
            raise FiberUnresolved(
                f"fibers unresolved at the maximum depth {cfg.m_max} "
                f"(cluster counts {sorted(counts)}, max diameter {diam:.3g})"
            )
        m = min(cfg.m_max, m + max(1, m // 2))
    return Extraction(curves, ws.t1, m, b_star, float(lambda_hat), diam, cfg)


def _assemble(reps: list[np.ndarray], cfg: ExtractionConfig) -> list[RandomCurve]:
    res = cfg.s_resolution
    idx = _continue_along(reps)
    start, end = reps[0], reps[res]
    # return map: where each cluster at angle 0 sits after one trip around
    ret = []
    gaps = []
    for i in range(len(start)):
        y = end[idx[res, i]]
        d = np.linalg.norm(start - y, axis=1)
        near = np.flatnonzero(d <= cfg.tolerance)
        if len(near) != 1:
            raise AmbiguousMatch(f"cluster {i} returns within tolerance of {len(near)} clusters")
        ret.append(int(near[0]))
        gaps.append(float(d[near[0]]))
    curves = []
    for cyc in _cycles(ret):
        tau = len(cyc)
        if tau > cfg.m_max:
            raise ConditionViolation(f"winding number {tau} exceeds the budget {cfg.m_max}")
        first = min(cyc, key=lambda i: tuple(start[i]))
        order, i = [], first
        for _ in range(tau):
            order.append(i)
            i = ret[i]
        values = np.concatenate([np.array([reps[j][idx[j, c]] for j in range(res)]) for c in order])
        s_grid = np.arange(tau * res) / res
        curves.append(RandomCurve(tau, s_grid, values, max(gaps[c] for c in order)))
    curves.sort(key=lambda c: tuple(c.values[0]))
    curves = [replace_curve_id(c, k) for k, c in enumerate(curves)]
    for c in curves:
        if not c.is_minimal_period(cfg.tolerance):
            raise ConditionViolation(f"curve {c.curve_id} closes before {c.tau} turns")
    return curves


def replace_curve_id(curve: RandomCurve, k: int) -> RandomCurve:
    return RandomCurve(curve.tau, curve.s_grid, curve.values, curve.closure_gap, k)


def extract_curves(ws: WindingSystem, config: ExtractionConfig | None = None) -> list[RandomCurve]:
    return extract_curves_report(ws, config).curves


# ----------------------------------------------------------------- invariance


@dataclass(frozen=True)
class InvarianceCheck:
    curve_residual: float
    tau_match: bool
    r_match: bool
    period: float
    periods: tuple[float, ...] = ()


def transport_residual(curves_before: list[RandomCurve], curves_after: list[RandomCurve],
                       system: CocycleSystem, path: WienerPath, t: float) -> float:
    """Flow each earlier curve from time -t to 0 and compare with the later curves.

    For every earlier curve the result is the best sup-distance over the
    later curves and over integer relabelings of the starting turn.
    """
    if t == 0:
        t_cells = 0
    else:
        t_cells = to_cells(t, path.dt)
    path = system.prepare(path, -t, 0.0)
    worst = 0.0
    for c in curves_before:
        if t_cells == 0:
            s1, y1 = c.s_grid, c.values
        else:
            s1, y1 = system.flow_batch(path, -t, 0.0, c.s_grid, c.values)
        best = math.inf
        for target in curves_after:
            if target.dim != c.dim:
                continue
            for k in range(target.tau):
                best = min(best, float(np.max(np.linalg.norm(target(s1 + k) - y1, axis=1))))
        worst = max(worst, best)
    return worst


def verify_invariance(curves, system: CocycleSystem, path: WienerPath, t: float,
                      reference: list[RandomCurve] | None = None, config: ExtractionConfig | None = None,
                      t1: float | None = None) -> InvarianceCheck:
    """Check that curves of the realization shifted back by ``t`` flow onto the curves of ``path``.

    ``curves`` were extracted on ``shift(path, -t)``; ``reference`` are the
    curves of ``path`` itself (extracted here when omitted).
    """
    if isinstance(curves, RandomCurve):
        curves = [curves]
    try:
        to_cells(t, path.dt)
    except GridError as e:
        raise GridError(f"shift {t} is not on the path grid") from e
    if reference is None or t1 is None:
        ws = build_winding_system(system, path)
        t1 = ws.t1
        if reference is None:
            reference = extract_curves(ws, config)
    resid = transport_residual(curves, reference, system, path, t)
    taus_a = sorted(c.tau for c in curves)
    taus_b = sorted(c.tau for c in reference)
    periods = tuple(c.tau * t1 for c in reference)
    return InvarianceCheck(resid, taus_a == taus_b, len(curves) == len(reference), max(periods), periods)
