import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gvfcoord import control, paths
from gvfcoord.control import (
    E,
    ControlOutput,
    dubins_control,
    dubins_derivative,
    feedforward_rate,
    saturate,
    signed_angle,
    wrap_angle,
)
from gvfcoord.errors import PlanarDegeneracyError
from gvfcoord.field import GainSet


def test_saturate_clamps():
    assert saturate(2.0, -1.0, 1.0) == 1.0
    assert saturate(0.5, -1.0, 1.0) == 0.5
    assert saturate(-3.0, -1.0, 1.0) == -1.0


@given(st.floats(-100, 100), st.floats(-100, 100))
def test_saturate_lipschitz(x, y):
    a, b = -2.0, 3.0
    assert abs(saturate(x, a, b) - saturate(y, a, b)) <= abs(x - y) + 1e-12


def test_saturate_bad_bounds():
    with pytest.raises(ValueError):
        saturate(0.0, 1.0, -1.0)


def test_wrap_angle_range_and_boundary():
    assert wrap_angle(math.pi) == pytest.approx(math.pi)
    assert wrap_angle(-math.pi) == pytest.approx(math.pi)
    assert wrap_angle(3 * math.pi) == pytest.approx(math.pi)
    for theta in np.linspace(-20, 20, 401):
        w = wrap_angle(theta)
        assert -math.pi < w <= math.pi
        assert math.cos(w) == pytest.approx(math.cos(theta), abs=1e-12)


def test_signed_angle_aligned():
    assert signed_angle([0.3, 0.4], [0.6, 0.8]) == 0.0


def test_signed_angle_quarter_turn():
    # directed from chi to h; h^T E chi must equal sin(sigma)
    sigma = signed_angle([0.0, 1.0], [1.0, 0.0])
    assert sigma == pytest.approx(math.pi / 2)
    h, chi = np.array([0.0, 1.0]), np.array([1.0, 0.0])
    assert float(h @ (E @ chi)) == pytest.approx(math.sin(sigma))


def test_signed_angle_antiparallel_maps_to_pi():
    assert signed_angle([-1.0, 0.0], [1.0, 0.0]) == pytest.approx(math.pi)
    assert signed_angle([-1.0, -1e-6], [1.0, 0.0]) < 0  # just past pi flips sign


def test_signed_angle_zero_vector():
    with pytest.raises(ValueError):
        signed_angle([0.0, 0.0], [1.0, 0.0])


@given(st.floats(-math.pi + 1e-6, math.pi - 1e-6),
       st.floats(-math.pi, math.pi))
def test_sin_identity(offset, base):
    chi = np.array([math.cos(base), math.sin(base)])
    h = np.array([math.cos(base + offset), math.sin(base + offset)])
    sigma = signed_angle(h, chi)
    assert sigma == pytest.approx(offset, abs=1e-9)
    assert float(h @ (E @ chi)) == pytest.approx(math.sin(sigma), abs=1e-12)


def test_feedforward_zero_rate():
    assert feedforward_rate([3.0, 4.0], [0.0, 0.0]) == 0.0


def test_feedforward_rotating_vector(rng):
    # derived oracle: chi rotating at omega with constant norm
    for _ in range(200):
        rho = float(rng.uniform(0.1, 40))
        omega = float(rng.uniform(-15, 15))
        ang = float(rng.uniform(0, 2 * math.pi))
        chi = rho * np.array([math.cos(ang), math.sin(ang)])
        chi_dot = rho * omega * np.array([-math.sin(ang), math.cos(ang)])
        assert feedforward_rate(chi, chi_dot) == pytest.approx(omega, abs=1e-10)


def test_feedforward_pure_scaling_is_zero(rng):
    for _ in range(50):
        chi = rng.uniform(-5, 5, size=2)
        if chi @ chi < 1e-3:
            continue
        assert feedforward_rate(chi, 3.7 * chi) == pytest.approx(0.0, abs=1e-14)


def test_feedforward_degenerate():
    with pytest.raises(PlanarDegeneracyError):
        feedforward_rate([1e-6, 0.0], [0.0, 0.0])


def _gains(**kw):
    return GainSet(k=np.ones(3), **kw)


def test_dubins_control_aligned_static_field():
    chi = np.array([2.0, 0.0, 0.5, -1.0])
    out = dubins_control(0.0, chi, np.zeros(2), _gains())
    assert out.u_theta == 0.0
    assert out.sigma == 0.0
    assert out.theta_dot_d == 0.0
    assert not out.saturated


def test_dubins_control_small_angle_identity():
    # unsaturated: u_theta = theta_dot_d - k_theta sin(sigma)
    g = _gains(k_theta=1.3)
    chi = np.array([1.0, 0.0, 0.0, 1.0])
    for sigma in (-0.4, 0.05, 0.8):
        theta = sigma  # field points along +x, so heading angle equals sigma
        out = dubins_control(theta, chi, np.zeros(2), g)
        assert out.sigma == pytest.approx(sigma)
        assert out.u_theta == pytest.approx(-1.3 * math.sin(sigma), abs=1e-12)
        assert not out.saturated


def test_dubins_control_saturates():
    g = _gains(sat_lo=-0.3, sat_hi=0.3, k_theta=5.0)
    chi = np.array([1.0, 0.0, 0.0, 1.0])
    out = dubins_control(2.0, chi, np.zeros(2), g)  # sigma = 2 rad
    assert out.u_theta == -0.3
    assert out.saturated


def test_dubins_control_rates_follow_partial_normalization():
    g = _gains(v=7.0)
    chi = np.array([3.0, 4.0, 2.0, -1.5])
    out = dubins_control(0.3, chi, np.zeros(2), g)
    assert out.u_z == pytest.approx(7.0 * 2.0 / 5.0)
    assert out.w_dot == pytest.approx(7.0 * -1.5 / 5.0)


def test_dubins_control_degeneracy_propagates():
    with pytest.raises(PlanarDegeneracyError):
        dubins_control(0.0, np.array([1e-6, 0.0, 1.0, 1.0]), np.zeros(2), _gains())


def test_dubins_derivative_heading():
    out = ControlOutput(u_theta=0.2, u_z=-0.5, w_dot=1.5, sigma=0.0,
                        theta_dot_d=0.0, saturated=False)
    state = np.array([0.0, 0.0, 0.0, 0.0, 0.0])
    deriv = dubins_derivative(state, out, v=3.0)
    assert np.allclose(deriv, [3.0, 0.0, -0.5, 0.2, 1.5])


@given(st.floats(-math.pi, math.pi), st.floats(0.1, 30))
def test_dubins_planar_speed_constant(theta, v):
    out = ControlOutput(u_theta=0.0, u_z=0.0, w_dot=0.0, sigma=0.0,
                        theta_dot_d=0.0, saturated=False)
    deriv = dubins_derivative(np.array([1.0, 2.0, 3.0, theta, 0.0]), out, v=v)
    assert np.hypot(deriv[0], deriv[1]) == pytest.approx(v, rel=1e-12)


def test_sigma_decay_single_robot_circle():
    # aligned-feedforward closed loop at desk scale: saturation never active,
    # |sigma| eventually monotone and below 1e-2 by t = 30 s
    from gvfcoord import graph as gr
    from gvfcoord import sim

    path = paths.circle(20.0, center=(0.0, 0.0, 5.0))
    g = gr.cycle_graph(1)
    off = gr.OffsetSpec.from_reference(g, [0.0])
    gains = [GainSet(k=[0.1, 0.1, 0.1], v=1.0, k_theta=1.0,
                     sat_lo=-10.0, sat_hi=10.0)]
    init = np.array([[25.0, 0.0, 3.0, 2.0, 0.0]])
    sc = sim.Scenario(name="align", mode="dubins", paths=[path], gains=gains,
                      graph=g, offsets=off, dt=5e-3, t_end=30.0,
                      initial_states=init)
    trace = sim.run(sc)
    sigma = np.abs(trace.sigma[:, 0])
    assert not trace.saturated.any()
    assert sigma[-1] < 1e-2
    tail = sigma[trace.t > 5.0]
    assert np.all(np.diff(tail) <= 1e-12)


def test_feedforward_consistency_along_trajectory():
    # finite-difference rotation rate of the planar direction vs telemetry
    from gvfcoord import graph as gr
    from gvfcoord import sim

    path = paths.circle(8.0, center=(0.0, 0.0, 2.0))
    g = gr.cycle_graph(1)
    off = gr.OffsetSpec.from_reference(g, [0.0])
    gains = [GainSet(k=[0.2, 0.2, 0.2], v=1.0, k_theta=1.0,
                     sat_lo=-10.0, sat_hi=10.0)]
    init = np.array([[10.0, 0.0, 1.0, 1.2, 0.0]])
    sc = sim.Scenario(name="ff", mode="dubins", paths=[path], gains=gains,
                      graph=g, offsets=off, dt=1e-3, t_end=8.0,
                      initial_states=init)
    trace = sim.run(sc)
    # recompute the planar field angle at each record
    plan = sim._Plan(sc)
    angles = np.empty(trace.n_records)
    for r in range(trace.n_records):
        S = trace.states[r]
        c = plan.consensus(S[:, 4], S[:, 4])
        from gvfcoord.field import combined_field
        chi = combined_field(path, gains[0], np.array([S[0, 0], S[0, 1], S[0, 2], S[0, 4]]),
                             float(c[0]))
        angles[r] = math.atan2(chi[1], chi[0])
    unwrapped = np.unwrap(angles)
    fd = (unwrapped[2:] - unwrapped[:-2]) / (trace.t[2] - trace.t[0])
    telemetry = trace.theta_dot_d[1:-1, 0]
    mask = np.abs(telemetry) > 1e-4
    assert np.allclose(fd[mask], telemetry[mask], rtol=1e-3, atol=1e-6)
