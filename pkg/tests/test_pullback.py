from __future__ import annotations

import json
import math

import numpy as np
import pytest

from randomperiodic.cocycle import CylinderPoint
from randomperiodic.example import ExampleSystem, stationary_rho
from randomperiodic.fixtures import LinearForcedFixture, single_curve_fixture
from randomperiodic.noise import generate_path, zero_path
from randomperiodic.pullback import decay_rate, pullback_curve, pullback_point, write_curve_csv

DT = 1e-3


def test_noise_free_fixed_point_is_exact():
    rep = pullback_point(ExampleSystem(), zero_path(-40.0, 0.0, DT), CylinderPoint(0.0, 1.0))
    assert all(s[0] == 1.0 for s in rep.states)
    assert rep.converged
    assert math.isnan(rep.rate_estimate)


def test_noise_free_rate_is_minus_two():
    rep = pullback_point(ExampleSystem(), zero_path(-20.0, 0.0, DT), CylinderPoint(0.0, 2.0),
                         horizons=[2, 4, 6, 8], stop_early=False)
    assert all(b < a for a, b in zip(rep.errors, rep.errors[1:]))
    assert rep.rate_estimate == pytest.approx(-2.0, abs=0.05)


def test_errors_shrink_on_random_paths():
    for seed in range(10):
        p = generate_path(seed, -20.0, 0.0, DT)
        rep = pullback_point(ExampleSystem(), p, CylinderPoint(0.0, 2.0), horizons=[5, 10, 15, 20],
                             stop_early=False)
        assert rep.errors[-1] < rep.errors[0]
        assert abs(rep.states[-1][0] - stationary_rho(p, 20.0)) < 1e-2


def test_report_shape_and_early_stop():
    p = generate_path(1, -40.0, 0.0, DT)
    rep = pullback_point(ExampleSystem(), p, CylinderPoint(0.0, 0.5), tolerance=1e-3)
    assert len(rep.errors) == len(rep.horizons) - 1 == len(rep.states) - 1
    assert rep.converged and rep.horizons[-1] < 40.0
    json.dumps(rep.as_dict())
    full = pullback_point(ExampleSystem(), p, CylinderPoint(0.0, 0.5), tolerance=1e-3, stop_early=False)
    assert full.horizons[-1] == 40.0


def test_invalid_horizons():
    p = generate_path(1, -10.0, 0.0, DT)
    for bad in ([], [5, 5], [10, 5], [-1, 2]):
        with pytest.raises(ValueError):
            pullback_point(ExampleSystem(), p, CylinderPoint(0.0, 1.0), horizons=bad)
    with pytest.raises(ValueError):
        pullback_point(ExampleSystem(), p, CylinderPoint(0.0, 0.0))


def test_decay_rate_ignores_roundoff():
    assert math.isnan(decay_rate([1, 2], [1e-2, 1e-20]))
    assert decay_rate([1, 2, 3], [math.e**-1, math.e**-2, math.e**-3]) == pytest.approx(-1.0)


def test_zero_horizon_curve_returns_start():
    c = pullback_curve(ExampleSystem(), generate_path(0, -1, 0, DT), np.linspace(0, 1, 5, endpoint=False), 0, [1.5])
    assert np.all(c.values == 1.5)


def test_linear_fixture_curve_recovered_within_contraction_bound():
    system = LinearForcedFixture(0.5)
    dt = 1 / 256
    p = zero_path(-30.0, 0.0, dt)
    s = np.arange(64) / 64
    exact = system.invariant_curve(64).values
    y_init = 2.0
    for T in (5.0, 10.0, 20.0):
        c = pullback_curve(system, p, s, T, [y_init])
        b = np.max(np.abs(y_init - exact))
        assert np.max(np.abs(c.values - exact)) <= 0.5**T * b + 1e-6


def test_pullback_from_curve_does_not_depend_on_horizon():
    system = single_curve_fixture()
    dt = 1 / 256
    p = generate_path(4, -12.0, 0.0, dt)
    exact = system.invariant_curves(p, 0.0, 64)[0]
    values = []
    for T in (3.0, 6.0, 9.0):
        start = system.invariant_curves(p, -T, 64)[0]
        c = pullback_curve(system, p, exact.s_grid, T, start(exact.s_grid[0]))
        values.append(c.values[0])
    assert np.allclose(values, exact.values[0], atol=1e-12)


def test_curve_csv(tmp_path):
    c = pullback_curve(ExampleSystem(), generate_path(0, -5, 0, DT), [0.0, 0.5], 5.0, [1.0])
    write_curve_csv(tmp_path / "c.csv", c)
    assert (tmp_path / "c.csv").read_text().splitlines()[0] == "s,y_1"
