import itertools
import math

import numpy as np
import pytest

from gvfcoord import graph as gr
from gvfcoord import paths, sim
from gvfcoord.errors import CollisionStateError, InfeasibleCorrectionError
from gvfcoord.field import GainSet
from gvfcoord.safety import (
    barrier,
    constraint_rows,
    kkt_residual,
    safe_correction,
    solve_min_norm,
)


def test_barrier_unit_value():
    # distance^2 = R^2 + 1 puts the barrier exactly at 1
    R = 2.0
    p_j = np.zeros(2)
    p_i = np.array([math.sqrt(R * R + 1.0), 0.0])
    assert barrier(p_i, p_j, R).value == pytest.approx(1.0)


def test_barrier_pole():
    R = 1.0
    d = math.sqrt(R * R + 9e-7)  # just inside distance^2 = R^2 + 1e-6
    pair = barrier(np.array([d, 0.0]), np.zeros(2), R)
    assert pair.value > 1e6


def test_barrier_collision_raises():
    with pytest.raises(CollisionStateError):
        barrier(np.array([0.5, 0.0]), np.zeros(2), R=1.0)
    with pytest.raises(CollisionStateError):
        barrier(np.array([1.0, 0.0]), np.zeros(2), R=1.0)


def test_barrier_gradient_matches_finite_differences(rng):
    for _ in range(100):
        n = int(rng.integers(2, 4))
        p_j = rng.uniform(-5, 5, size=n)
        offset = rng.normal(size=n)
        offset *= (1.2 + rng.uniform(0, 2)) / np.linalg.norm(offset)
        p_i = p_j + offset
        pair = barrier(p_i, p_j, R=1.0)
        h = 1e-7
        for q in range(n):
            dp = np.zeros(n)
            dp[q] = h
            fd = (barrier(p_i + dp, p_j, 1.0).value
                  - barrier(p_i - dp, p_j, 1.0).value) / (2 * h)
            assert fd == pytest.approx(pair.grad[q], rel=1e-6, abs=1e-9)


def test_correction_zero_when_inactive():
    nominal = np.array([0.3, -0.2, 1.0])
    # neighbor far away and receding: constraint inactive, bitwise zero
    out = safe_correction(nominal, np.zeros(2), [(np.array([50.0, 0.0]),
                                                  np.array([1.0, 0.0, 0.0]))], R=1.0)
    assert np.array_equal(out, np.zeros(3))


def test_correction_never_touches_w_entry(rng):
    for _ in range(50):
        nominal = rng.uniform(-1, 1, size=3)
        p_i = np.zeros(2)
        ang = rng.uniform(0, 2 * math.pi)
        p_j = 1.1 * np.array([math.cos(ang), math.sin(ang)])
        out = safe_correction(nominal, p_i, [(p_j, rng.uniform(-1, 1, size=3))], R=1.0)
        assert out[2] == 0.0


def test_single_active_constraint_projection(rng):
    # derived oracle: closed-form half-plane projection
    for _ in range(50):
        p_i = np.zeros(2)
        ang = rng.uniform(0, 2 * math.pi)
        p_j = rng.uniform(1.05, 1.5) * np.array([math.cos(ang), math.sin(ang)])
        neighbors = [(p_j, rng.uniform(-0.5, 0.5, size=2))]
        nominal = rng.uniform(-0.5, 0.5, size=2)
        G, h = constraint_rows(p_i, nominal, neighbors, R=1.0)
        u, mu = solve_min_norm(G, h)
        if h[0] >= 0:
            assert np.array_equal(u, np.zeros(2))
        else:
            u_proj = G[0] * (h[0] / float(G[0] @ G[0]))
            assert np.allclose(u, u_proj, atol=1e-12)
        assert kkt_residual(G, h, u, mu) < 1e-8


def test_qp_matches_grid_search():
    from gvfcoord.oracles import qp_grid

    result = qp_grid()
    assert result["pass"], result


def test_minimality_against_brute_force(rng):
    # removing any active constraint never increases the correction norm
    for _ in range(40):
        m = int(rng.integers(1, 4))
        G = rng.normal(size=(m, 2)) * rng.uniform(1, 50)
        h = rng.normal(size=m)
        try:
            u, mu = solve_min_norm(G, h)
        except InfeasibleCorrectionError:
            continue  # random half-planes may have empty intersection
        assert kkt_residual(G, h, u, mu) < 1e-8
        full = float(u @ u)
        for keep in itertools.combinations(range(m), m - 1):
            if not keep:
                relaxed = 0.0
            else:
                u_r, _ = solve_min_norm(G[list(keep)], h[list(keep)])
                relaxed = float(u_r @ u_r)
            assert relaxed <= full + 1e-9


def _head_on_scenario(enabled, t_end=10.0):
    # two robots on parallel opposed lines 0.3 apart, meeting in the middle
    a = paths.line([0.0, 0.15], [1.0, 0.0], window=(0.0, 10.0))
    b = paths.line([10.0, -0.15], [-1.0, 0.0], window=(0.0, 10.0))
    g = gr.path_graph(2)
    off = gr.OffsetSpec.from_reference(g, [0.0, 0.0])
    gains = [GainSet(k=[1.0, 1.0], k_c=0.05) for _ in range(2)]
    init = np.array([[0.0, 0.15, 0.0], [10.0, -0.15, 0.0]])
    return sim.Scenario(name="head_on", mode="integrator", paths=[a, b],
                        gains=gains, graph=g, offsets=off, dt=1e-3, t_end=t_end,
                        initial_states=init,
                        safety=sim.SafetyConfig(enabled=enabled, R=1.0))


def test_head_on_scenario_safety_layer():
    # derived oracle: end-to-end run; disabled run must dip below R,
    # enabled run must stay at or above R - 1e-3 throughout
    unsafe = sim.run(_head_on_scenario(False))
    assert unsafe.min_dist.min() < 1.0
    safe = sim.run(_head_on_scenario(True))
    assert safe.min_dist.min() >= 1.0 - 1e-3


def test_head_on_robots_make_progress():
    trace = sim.run(_head_on_scenario(True, t_end=25.0))
    # both robots eventually pass each other and carry on along their lines
    assert trace.states[-1, 0, 0] > trace.states[-1, 1, 0]
