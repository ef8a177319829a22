from __future__ import annotations

import math

import numpy as np
import pytest

from randomperiodic.cocycle import CocycleSystem, ConditionViolation, LiftedPoint, flow
from randomperiodic.example import ExampleSystem, stationary_rho
from randomperiodic.fixtures import (
    LinearForcedFixture,
    single_curve_fixture,
    two_curve_fixture,
    winding_two_fixture,
)
from randomperiodic.lyapunov import estimate_contraction, tube_samples
from randomperiodic.noise import generate_path, shift, zero_path
from randomperiodic.winding import (
    AmbiguousMatch,
    ExtractionConfig,
    FiberUnresolved,
    GridAlignmentError,
    PermutationTrace,
    RandomCurve,
    _continue_along,
    apply_H,
    build_winding_system,
    cluster_points,
    clustering_cutoff,
    extract_curves,
    extract_curves_report,
    sample_fiber,
    trace_permutation,
    transport_residual,
    verify_invariance,
)

TURN_DT = 2 * math.pi / 6000
FIX_DT = 1 / 256


def fixture_ws(system, seed=3, n0=1):
    return build_winding_system(system, generate_path(seed, -4.0, 4.0, FIX_DT), n0=n0)


# ------------------------------------------------------------ rotation time


def test_example_rotation_time_is_two_pi():
    ws = build_winding_system(ExampleSystem(), generate_path(0, -1.0, 7.0, TURN_DT))
    assert abs(ws.t1 - 2 * math.pi) <= 1e-9


def test_fixture_rotation_time_is_one():
    for system in (two_curve_fixture(), winding_two_fixture(), LinearForcedFixture()):
        assert fixture_ws(system).t1 == pytest.approx(1.0, abs=1e-12)


def test_off_grid_rotation_time_suggests_a_step():
    with pytest.raises(GridAlignmentError, match="use dt="):
        build_winding_system(ExampleSystem(), generate_path(0, -1.0, 7.0, 1e-3))


class _StateDependentSpeed(CocycleSystem):
    seed_box = (np.array([0.0]), np.array([1.0]))

    def flow_batch(self, path, t0, t1, s, y):
        s = np.atleast_1d(np.asarray(s, dtype=float))
        y = np.asarray(y, dtype=float).reshape(len(s), 1)
        return s + (t1 - t0) * (1 + y[:, 0] ** 2), y.copy()


class _Backwards(CocycleSystem):
    def flow_batch(self, path, t0, t1, s, y):
        s = np.atleast_1d(np.asarray(s, dtype=float))
        return s - (t1 - t0), np.asarray(y, dtype=float).reshape(len(s), 1).copy()


class _Frozen(CocycleSystem):
    def flow_batch(self, path, t0, t1, s, y):
        s = np.atleast_1d(np.asarray(s, dtype=float))
        return s.copy(), np.asarray(y, dtype=float).reshape(len(s), 1).copy()


@pytest.mark.parametrize("system", [_StateDependentSpeed(), _Backwards(), _Frozen()])
def test_bad_rotation_raises(system):
    with pytest.raises(ConditionViolation):
        build_winding_system(system, zero_path(0.0, 1.0, FIX_DT), max_time=5.0)


def test_invalid_winding_system_parameters():
    ws = fixture_ws(two_curve_fixture())
    from dataclasses import replace

    with pytest.raises(ValueError):
        replace(ws, n0=0)
    with pytest.raises(ValueError):
        replace(ws, t1=0.0)


# ----------------------------------------------------------- period map H


def test_apply_H_identity_and_flow():
    ws = fixture_ws(two_curve_fixture())
    z = LiftedPoint(0.3, [0.4])
    assert apply_H(ws, 0, z) is z
    out = apply_H(ws, 3, z)
    ref = flow(ws.base, ws.path.ensure(-1, 3), 0.0, 3.0, z)
    assert out.s_lift == pytest.approx(3.3) and np.array_equal(out.y, ref.y)
    with pytest.raises(ValueError):
        apply_H(ws, -1, z)


@pytest.mark.parametrize("a,b", [(1, 1), (2, 3), (4, 1)])
def test_apply_H_composes_over_shifts(a, b):
    ws = fixture_ws(winding_two_fixture())
    z = LiftedPoint(0.1, [0.5, -0.2])
    direct = apply_H(ws, a + b, z)
    composed = apply_H(ws.shifted(a), b, apply_H(ws, a, z))
    assert np.max(np.abs(direct.y - composed.y)) <= 1e-12
    assert abs(direct.s_lift - composed.s_lift) <= 1e-12


def test_apply_H_on_example_composes():
    ws = build_winding_system(ExampleSystem(), generate_path(1, -1.0, 7.0, TURN_DT))
    z = LiftedPoint(0.0, [0.7])
    direct = apply_H(ws, 3, z)
    composed = apply_H(ws.shifted(1), 2, apply_H(ws, 1, z))
    assert abs(direct.y[0] - composed.y[0]) <= 1e-3
    assert abs(direct.s_lift - 3.0) <= 1e-9


def test_apply_H_contracts_towards_the_curve():
    # H^k of any seed lands near the periodic point of the shifted realization
    ws = build_winding_system(ExampleSystem(), generate_path(2, -40.0, 7.0, TURN_DT))
    for k in (3, 5):
        out = apply_H(ws.shifted(-k), k, LiftedPoint(0.0, [2.0]))
        assert abs(out.y[0] - stationary_rho(ws.path, 30.0)) <= 1e-2


# ------------------------------------------------------------------ fibers


def test_cluster_points_orders_and_measures():
    pts = np.array([[1.0], [1.01], [-1.0], [-1.02], [5.0]])
    groups, gap, diam = cluster_points(pts, 0.1)
    assert [sorted(g.tolist()) for g in groups] == [[2, 3], [0, 1], [4]]
    assert gap == pytest.approx(2.0)
    assert diam == pytest.approx(0.02)
    one = cluster_points(pts[:1], 0.1)
    assert one[1] == math.inf and one[2] == 0.0


def test_clustering_cutoff():
    assert clustering_cutoff(3, 1e-2, None, None) == 1e-2
    assert clustering_cutoff(1, 1e-2, 0.5, 2.0) == 0.5  # capped at b*/4
    assert clustering_cutoff(30, 1e-2, 0.5, 2.0) == 1e-2
    assert clustering_cutoff(8, 1e-3, 0.5, 2.0) == pytest.approx(10 * 2 * 0.5**8 * 2.0)


@pytest.mark.parametrize("m", [1, 4, 8])
def test_two_curve_fiber_clusters(m):
    system = two_curve_fixture()
    ws = fixture_ws(system)
    fib = sample_fiber(ws, 0.3, m, system.seeds(16), contraction=0.5, b_star=2.4)
    assert fib.r == 2
    assert fib.diameter_bound <= 2 * 0.5**m * 2.4 + 1e-12
    exact = np.array([c(0.3) for c in system.invariant_curves(ws.path)])
    assert np.max(np.abs(fib.representatives() - exact)) <= 2 * 0.5**m * 2.4


def test_fiber_gap_below_floor_is_unresolved():
    system = two_curve_fixture()
    with pytest.raises(FiberUnresolved):
        sample_fiber(fixture_ws(system), 0.0, 3, system.seeds(16), gap_floor=5.0, cutoff=0.1)


def test_permutation_algebra():
    swap = PermutationTrace(1, (1, 0))
    assert swap.compose(swap).mapping == (0, 1)
    assert swap.compose(swap).m == 2
    cyc = PermutationTrace(1, (1, 2, 0))
    assert cyc.compose(cyc).compose(cyc).mapping == (0, 1, 2)
    assert not PermutationTrace(1, (0, 0)).is_bijection()


@pytest.mark.parametrize("m", [1, 2, 3, 6])
def test_two_curve_permutation_is_identity(m):
    system = two_curve_fixture()
    ws = fixture_ws(system).covering(-2 * m, 0)
    fib = sample_fiber(ws, 0.3, 6, system.seeds(16), contraction=0.5, b_star=2.4)
    assert trace_permutation(ws, fib, m).mapping == (0, 1)


@pytest.mark.parametrize("m", [1, 2, 3, 4])
def test_half_twist_permutation_alternates(m):
    system = winding_two_fixture()
    ws = fixture_ws(system)
    fib = sample_fiber(ws, 0.0, 6, system.seeds(16), contraction=0.5, b_star=2.4)
    trace = trace_permutation(ws, fib, m)
    assert trace.mapping == ((1, 0) if m % 2 else (0, 1))
    one = trace_permutation(ws, fib, 1)
    composed = one
    for _ in range(m - 1):
        composed = one.compose(composed)
    assert composed.mapping == trace.mapping


# -------------------------------------------------------------- extraction


@pytest.mark.parametrize(
    "factory,taus",
    [(two_curve_fixture, [1, 1]), (winding_two_fixture, [2]), (single_curve_fixture, [1])],
)
def test_extraction_matches_exact_curves(factory, taus):
    system = factory()
    ws = fixture_ws(system)
    rep = extract_curves_report(ws)
    assert rep.taus == taus
    exact = system.invariant_curves(ws.path, 0.0, 256)
    for got, want in zip(rep.curves, exact):
        assert got.tau == want.tau
        assert np.max(np.abs(got.values - want.values)) <= 1e-5
        assert got.curve_id == rep.curves.index(got)


def test_linear_fixture_extraction():
    system = LinearForcedFixture(0.5)
    curves = extract_curves(fixture_ws(system))
    assert len(curves) == 1 and curves[0].tau == 1
    assert np.max(np.abs(curves[0].values - system.invariant_curve(256).values)) <= 1e-5


def test_extracted_curve_lipschitz_within_derived_bound():
    system = LinearForcedFixture(0.5)
    ws = fixture_ws(system)
    curves = extract_curves(ws)
    rep = estimate_contraction(ws, tube_samples(curves, 0.1))
    assert rep.L_derived == pytest.approx(4 * math.pi, rel=1e-3)
    assert curves[0].lipschitz_estimate <= rep.L_derived * (1 + 1e-3)


def test_fixture_curve_lipschitz_within_derived_bound():
    system = two_curve_fixture()
    ws = fixture_ws(system)
    curves = extract_curves(ws)
    rep = estimate_contraction(ws, tube_samples(curves, 0.1))
    assert max(c.lipschitz_estimate for c in curves) <= rep.L_derived * 1.01


def test_example_extraction_is_one_flat_curve():
    ws = build_winding_system(ExampleSystem(), generate_path(5, -1.0, 7.0, TURN_DT))
    rep = extract_curves_report(ws)
    assert rep.taus == [1]
    c = rep.curves[0]
    assert np.ptp(c.values) <= 1e-3
    # defining property: one turn of H maps the curve of the earlier realization onto it
    before = extract_curves(ws.shifted(-1).covering(-1, 1))
    assert transport_residual(before, rep.curves, ws.base, ws.path, ws.t1) <= 1e-3


def test_example_curve_is_the_stationary_radius():
    # Heun bias is about 0.7 dt relative, so this comparison uses a finer turn grid
    ws = build_winding_system(ExampleSystem(), generate_path(7, -1.0, 7.0, 2 * math.pi / 48000))
    curves = extract_curves(ws)
    assert [c.tau for c in curves] == [1]
    assert np.max(np.abs(curves[0].values - stationary_rho(ws.path, None))) <= 1e-4


def test_extraction_rejects_expanding_maps():
    ws = fixture_ws(two_curve_fixture())
    with pytest.raises(ConditionViolation):
        extract_curves_report(ws, lambda_hat=1.2)


def test_extraction_budget_exhausted():
    ws = fixture_ws(two_curve_fixture(contraction=0.9))
    with pytest.raises(FiberUnresolved):
        extract_curves_report(ws, ExtractionConfig(m_max=2))


def test_continuation_rejects_ambiguous_neighbours():
    reps = [np.array([[0.0], [1.0]]), np.array([[0.5], [0.5001]])]
    with pytest.raises(AmbiguousMatch):
        _continue_along(reps)


# ---------------------------------------------------------------- curves


def test_random_curve_evaluation_is_periodic():
    s = np.arange(8) / 4
    c = RandomCurve(2, s, np.arange(8.0))
    assert c.resolution == 4
    assert c(0.125)[0] == pytest.approx(0.5)
    assert c(2.125)[0] == pytest.approx(0.5)
    assert c(-0.25)[0] == pytest.approx(7.0)
    assert c.lipschitz_estimate == pytest.approx(28.0)  # wrap-around jump 7 over 1/4


def test_random_curve_validation():
    with pytest.raises(ValueError):
        RandomCurve(0, [0.0, 0.5], [1.0, 2.0])
    with pytest.raises(ValueError):
        RandomCurve(1, [0.0, 0.3], [1.0, 2.0])
    with pytest.raises(ValueError):
        RandomCurve(1, [0.0, 0.5], [1.0])


def test_minimal_period_detection():
    s = np.arange(8) / 4
    repeated = RandomCurve(2, s, np.tile([0.0, 1.0, 2.0, 1.0], 2))
    assert repeated.shift_residual(1) == 0.0
    assert not repeated.is_minimal_period(1e-6)
    genuine = RandomCurve(2, s, np.arange(8.0))
    assert genuine.is_minimal_period(1e-6)


def test_invariance_at_zero_shift_is_exact():
    system = winding_two_fixture()
    ws = fixture_ws(system)
    curves = extract_curves(ws)
    chk = verify_invariance(curves, system, ws.path, 0.0, reference=curves, t1=ws.t1)
    assert chk.curve_residual == 0.0
    assert chk.tau_match and chk.r_match
    assert chk.period == pytest.approx(2.0)


def test_invariance_for_fixture_shift():
    system = two_curve_fixture()
    p = generate_path(8, -8.0, 8.0, FIX_DT)
    t = 3.5
    earlier = extract_curves(build_winding_system(system, shift(p, -t)))
    chk = verify_invariance(earlier, system, p, t)
    assert chk.curve_residual <= 1e-3 and chk.tau_match and chk.r_match
