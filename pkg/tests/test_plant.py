import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from predcacc.core import VehicleState
from predcacc.numerics import expm
from predcacc.plant import (
    DelayBuffer,
    delayed_input,
    make_propagator,
    propagator_from_expm,
    step_vehicle,
)

TAU, TS = 0.067, 0.01


def augmented(tau):
    M = np.zeros((4, 4))
    M[0, 1] = M[1, 2] = 1.0
    M[2, 2] = -1.0 / tau
    M[2, 3] = 1.0 / tau
    return M


@pytest.mark.parametrize("tau", [0.01, 0.067, 0.1, 0.3, 2.0])
@pytest.mark.parametrize("ts", [1e-4, 0.001, 0.01, 0.1])
def test_closed_forms_match_expm(tau, ts):
    p = make_propagator(tau, ts)
    np.testing.assert_allclose(p.as_array(), propagator_from_expm(tau, ts), rtol=0, atol=1e-12)


def test_decay_factor():
    p = make_propagator(TAU, TS)
    assert p.decay == pytest.approx(math.exp(-TS / TAU), rel=1e-15)
    assert p.decay == pytest.approx(0.8614, abs=5e-5)


def test_small_step_limit():
    c = make_propagator(TAU, 1e-8).as_array()
    np.testing.assert_allclose(c[:, :3], np.eye(3), atol=1e-6)
    np.testing.assert_allclose(c[:, 3], 0.0, atol=1e-6)


@pytest.mark.parametrize("tau, ts", [(0.0, TS), (-1.0, TS), (TAU, 0.0), (TAU, -0.01)])
def test_nonpositive_rejected(tau, ts):
    with pytest.raises(ValueError):
        make_propagator(tau, ts)


def test_coasting():
    s = step_vehicle(make_propagator(TAU, TS), VehicleState(3.0, 2.0, 0.0), 0.0)
    assert s.a == 0.0 and s.v == 2.0
    assert s.q == pytest.approx(3.0 + TS * 2.0, abs=1e-15)


def test_lag_fixed_point():
    s = step_vehicle(make_propagator(TAU, TS), VehicleState(0.0, 0.0, 1.5), 1.5)
    assert s.a == pytest.approx(1.5, abs=1e-15)


def test_unit_step_response():
    s = step_vehicle(make_propagator(TAU, TS), VehicleState(), 1.0)
    assert s.a == pytest.approx(1 - math.exp(-TS / TAU), rel=1e-14)
    assert s.a == pytest.approx(0.1386, abs=5e-5)


def test_constant_input_matches_single_exponential():
    p = make_propagator(TAU, TS)
    s0, u, n = VehicleState(1.0, -0.5, 0.3), 0.7, 500
    s = s0
    for _ in range(n):
        s = step_vehicle(p, s, u)
    ref = expm(n * TS * augmented(TAU)) @ np.array([s0.q, s0.v, s0.a, u])
    np.testing.assert_allclose([s.q, s.v, s.a], ref[:3], rtol=0, atol=1e-10)


def test_velocity_is_integral_of_acceleration():
    p = make_propagator(TAU, TS)
    s0, u = VehicleState(0.0, 1.0, -0.4), 0.9
    s1 = step_vehicle(p, s0, u)
    n = 10_000
    t = (np.arange(n) + 0.5) * TS / n
    a_t = u + (s0.a - u) * np.exp(-t / TAU)
    assert s1.v - s0.v == pytest.approx(a_t.sum() * TS / n, abs=1e-8)


def test_delay_passthrough():
    buf = DelayBuffer(0)
    assert [delayed_input(buf, u)[0] for u in (1.0, 2.0)] == [1.0, 2.0]
    assert len(buf) == 0


def test_delay_fifo():
    buf = DelayBuffer(15)
    out = [buf.push(1.0) for _ in range(20)]
    assert out == [0.0] * 15 + [1.0] * 5
    assert len(buf) == 15


def test_delay_three_pushes():
    buf = DelayBuffer(2)
    assert [buf.push(u) for u in (3.0, 5.0, 7.0)] == [0.0, 0.0, 3.0]


def test_delay_fill_and_validation():
    assert DelayBuffer(3, fill=2.5).push(0.0) == 2.5
    with pytest.raises(ValueError):
        DelayBuffer(-1)


@settings(max_examples=50, deadline=None)
@given(
    st.integers(0, 12),
    st.integers(0, 12),
    st.lists(st.floats(-10, 10), min_size=1, max_size=60),
)
def test_delay_composition(d1, d2, seq):
    a, b, c = DelayBuffer(d1), DelayBuffer(d2), DelayBuffer(d1 + d2)
    for u in seq:
        assert b.push(a.push(u)) == c.push(u)
