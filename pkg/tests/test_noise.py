from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from randomperiodic.noise import (
    GridError,
    PathDomainError,
    extend_left,
    extend_right,
    generate_path,
    read_csv,
    refine,
    shift,
    write_csv,
    zero_path,
)

DT = 1e-3


def test_value_at_zero_is_zero():
    p = generate_path(3, -2.0, 2.0, DT)
    assert p(0.0) == 0.0
    assert p.W[p.index(0.0)] == 0.0


def test_same_seed_same_path_frozen_values():
    # frozen from the generator; a change here means every stored realization changed
    p = generate_path(0, -1.0, 1.0, DT)
    assert p(1.0) == 0.8469911563963263
    assert p(-1.0) == 0.6079421570494206
    assert p(0.5) == 1.1340868403591007
    q = generate_path(0, -1.0, 1.0, DT)
    assert np.array_equal(p.W, q.W)


def test_different_seeds_differ():
    assert generate_path(1, 0, 1, DT)(1.0) != generate_path(2, 0, 1, DT)(1.0)


def test_variance_of_unit_time_value():
    vals = np.array([generate_path(s, 0.0, 1.0, 1e-2)(1.0) for s in range(2000)])
    # sample variance of 2000 standard normals: sd of the estimate is about 0.032
    assert abs(vals.var() - 1.0) < 0.13
    assert abs(vals.mean()) < 0.1


def test_increments_are_scaled_normals():
    p = generate_path(11, -50.0, 50.0, DT)
    z = p.increments / np.sqrt(DT)
    assert abs(z.mean()) < 0.02
    assert abs(z.std() - 1.0) < 0.01
    # neighbouring cells and neighbouring blocks are uncorrelated
    assert abs(np.corrcoef(z[:-1], z[1:])[0, 1]) < 0.02
    assert abs(np.corrcoef(z[:-1024], z[1024:])[0, 1]) < 0.02


def test_off_grid_times_are_rejected():
    p = generate_path(0, -1.0, 1.0, DT)
    with pytest.raises(GridError):
        p(0.0005)
    with pytest.raises(GridError):
        generate_path(0, 0, 1, -1.0)
    with pytest.raises(PathDomainError):
        p(2.0)


def test_window_is_widened_outward():
    p = generate_path(0, -0.0015, 0.0025, DT)
    assert p.t_min == pytest.approx(-0.002)
    assert p.t_max == pytest.approx(0.003)


@given(st.integers(-3000, 3000), st.integers(-3000, 3000))
def test_shift_composes_exactly(a, b):
    p = generate_path(5, -1.0, 1.0, DT)
    once = shift(p, (a + b) * DT).ensure(-0.5, 0.5)
    twice = shift(shift(p, a * DT), b * DT).ensure(-0.5, 0.5)
    ts = np.arange(-500, 501) * DT
    assert np.array_equal([once(t) for t in ts[::50]], [twice(t) for t in ts[::50]])
    assert once(0.0) == 0.0


def test_shift_is_the_increment_path():
    p = generate_path(4, -2.0, 2.0, DT)
    q = shift(p, 0.7)
    for s in (-1.0, -0.3, 0.0, 0.4, 1.2):
        assert q(s) == pytest.approx(p(0.7 + s) - p(0.7), abs=1e-13)


@given(st.integers(1, 4000), st.integers(1, 4000))
def test_extension_is_bit_exact_and_order_free(left, right):
    p = generate_path(9, -0.5, 0.5, DT)
    a = extend_right(extend_left(p, -0.5 - left * DT), 0.5 + right * DT)
    b = extend_left(extend_right(p, 0.5 + right * DT), -0.5 - left * DT)
    direct = generate_path(9, -0.5 - left * DT, 0.5 + right * DT, DT)
    assert np.array_equal(a.W, b.W)
    assert np.array_equal(a.W, direct.W)
    i0 = a.index(-0.5)
    assert np.array_equal(a.W[i0 : i0 + len(p.W)], p.W)


def test_ensure_extends_both_sides():
    p = generate_path(2, -1.0, 1.0, DT)
    q = p.ensure(-3.0, 4.0)
    assert q.t_min <= -3.0 + 1e-12 and q.t_max >= 4.0 - 1e-12
    assert q(0.9) == p(0.9)
    assert p.ensure(-0.5, 0.5) is p


def test_refine_keeps_coarse_values():
    p = generate_path(1, -1.0, 1.0, DT)
    q = refine(p, 3)
    assert q.dt == pytest.approx(DT / 3)
    coarse = q.W[::3]
    assert np.allclose(coarse, p.W, atol=1e-13, rtol=0)


def test_refine_by_two_twice_equals_refine_by_four():
    p = generate_path(1, -1.0, 1.0, DT)
    assert np.array_equal(refine(refine(p, 2), 2).W, refine(p, 4).W)


def test_refine_then_extend_equals_extend_then_refine():
    p = generate_path(8, -0.5, 0.5, DT)
    a = extend_left(refine(p, 2), -1.5)
    b = refine(extend_left(p, -1.5), 2)
    assert np.array_equal(a.W, b.W)


def test_refined_shift_matches():
    p = generate_path(6, -1.0, 1.0, DT)
    assert np.array_equal(refine(shift(p, 0.25), 2).W[::2][:100], shift(refine(p, 2), 0.25).W[::2][:100])


def test_bridge_midpoint_variance():
    # midpoint given both ends has variance dt/4
    dt = 0.1
    devs = []
    for s in range(400):
        p = generate_path(s, 0.0, 10.0, dt)
        q = refine(p, 2)
        mid = q.W[1::2]
        devs.append(mid - 0.5 * (p.W[:-1] + p.W[1:]))
    devs = np.concatenate(devs)
    assert devs.var() == pytest.approx(dt / 4, rel=0.03)
    assert abs(devs.mean()) < 0.01 * np.sqrt(dt)


def test_refine_rejects_bad_factor():
    p = generate_path(0, 0, 1, DT)
    for f in (1, 0, 2.5):
        with pytest.raises(ValueError):
            refine(p, f)


def test_zero_path():
    z = zero_path(-1.0, 1.0, DT)
    assert not np.any(z.W)
    assert not np.any(refine(z, 2).W)
    assert not np.any(z.ensure(-5, 5).W)


def test_csv_round_trip(tmp_path):
    p = generate_path(3, -0.2, 0.3, DT)
    fname = tmp_path / "w.csv"
    write_csv(p, fname)
    assert fname.read_text().splitlines()[0] == "t,W"
    q = read_csv(fname)
    assert np.array_equal(q.W, p.W)
    assert q(0.1) == p(0.1)
    with pytest.raises(PathDomainError):
        q.ensure(-1.0, 0.0)
    with pytest.raises(PathDomainError):
        refine(q, 2)


def test_shifted_path_csv_keeps_local_times(tmp_path):
    p = shift(generate_path(3, -1.0, 1.0, DT), 0.5)
    write_csv(p, tmp_path / "w.csv")
    q = read_csv(tmp_path / "w.csv")
    assert q(0.0) == 0.0
    assert q(0.25) == pytest.approx(p(0.25), abs=1e-15)


def test_values_are_read_only():
    p = generate_path(0, 0, 1, DT)
    with pytest.raises(ValueError):
        p.values[0] = 1.0
