"""Independent numerical oracles backing the derived expected values.

Each oracle recomputes a quantity from first principles (finite
differences, cofactor expansion, brute-force search, or the error-dynamics
formulas) and reports its deviation from the library's closed forms.  The
CLI exposes them by name; the test suite asserts on the same numbers.
"""

from __future__ import annotations

import math

import numpy as np

from . import field as fld
from . import graph as gr
from . import paths as pathlib
from . import safety as sfty
from . import sim as simlib
from .control import feedforward_rate
from .field import GainSet


def _random_path(rng, n):
    kind = rng.integers(0, 3)
    if n == 2:
        if kind == 0:
            return pathlib.circle(float(rng.uniform(1.0, 20.0)))
        if kind == 1:
            return pathlib.ellipse(float(rng.uniform(2.0, 15.0)),
                                   float(rng.uniform(1.0, 10.0)))
        return pathlib.lissajous(rng.uniform(1.0, 5.0, size=2),
                                 rng.uniform(0.5, 4.0, size=2),
                                 rng.uniform(-math.pi, math.pi, size=2))
    if kind == 0:
        return pathlib.bent_infinity()
    if kind == 1:
        return pathlib.circle(float(rng.uniform(1.0, 20.0)),
                              center=(0.0, 0.0, float(rng.uniform(-5.0, 5.0))))
    return pathlib.lissajous(rng.uniform(1.0, 5.0, size=3),
                             rng.uniform(0.5, 4.0, size=3),
                             rng.uniform(-math.pi, math.pi, size=3))


def path_derivative_fd(samples: int = 1000, seed: int = 0) -> dict:
    """Central finite differences vs the analytic path derivatives."""
    rng = np.random.default_rng(seed)
    h = 1e-5
    worst1 = worst2 = 0.0
    for _ in range(samples):
        path = _random_path(rng, int(rng.integers(2, 4)))
        w = float(rng.uniform(-10.0, 10.0))
        fd1 = (path.evaluate(w + h) - path.evaluate(w - h)) / (2 * h)
        fd2 = (path.derivative(w + h) - path.derivative(w - h)) / (2 * h)
        scale1 = np.maximum(np.abs(path.derivative(w)), 1.0)
        scale2 = np.maximum(np.abs(path.second_derivative(w)), 1.0)
        worst1 = max(worst1, float(np.max(np.abs(fd1 - path.derivative(w)) / scale1)))
        worst2 = max(worst2, float(np.max(np.abs(fd2 - path.second_derivative(w)) / scale2)))
    return {"pass": worst1 < 1e-6 and worst2 < 1e-5,
            "max_rel_dev_first": worst1, "max_rel_dev_second": worst2,
            "samples": samples}


def wedge_cofactor(samples: int = 1000, seed: int = 0) -> dict:
    """Cofactor-expanded propagation term vs the closed form, n in {2, 3}."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    worst_orth = 0.0
    for _ in range(samples):
        n = int(rng.integers(2, 4))
        path = _random_path(rng, n)
        xi = np.concatenate([rng.uniform(-30.0, 30.0, size=n),
                             rng.uniform(-10.0, 10.0, size=1)])
        oracle = fld.wedge_oracle(path, xi)
        sign = -1.0 if n % 2 else 1.0
        closed = np.append(sign * path.derivative(xi[-1]), sign)
        worst = max(worst, float(np.max(np.abs(oracle - closed))))
        for j in range(n):
            worst_orth = max(worst_orth,
                             abs(float(oracle @ fld.gradient(path, xi, j))))
    return {"pass": worst < 1e-12 and worst_orth < 1e-12,
            "max_abs_dev": worst, "max_orthogonality_dev": worst_orth,
            "samples": samples}


def analytic_error_rates(scenario, states: np.ndarray):
    """Stacked Phi_dot and wtilde_dot from the error-dynamics formulas.

    Phi_dot    = -K Phi - F F^T K Phi - k_c F c(w)
    wtilde_dot = (-1)^n 1 + F^T K Phi - k_c L wtilde
    with F = blockdiag(f'_1, ..., f'_N).
    """
    plan = simlib._Plan(scenario)
    n, N = plan.n, plan.N
    w = states[:, -1]
    f, fp = plan.path_eval(w)
    phi = states[:, :n] - f
    kphi = plan.K * phi
    c = -plan.L @ (w - plan.w_star)
    phi_dot = -kphi - fp * np.sum(fp * kphi, axis=1)[:, None] - plan.kc[:, None] * fp * c[:, None]
    wt_dot = plan.sign + np.sum(fp * kphi, axis=1) - plan.kc * (plan.L @ (w - plan.w_star))
    return phi_dot, wt_dot


def _fd5(series: np.ndarray, dt: float) -> np.ndarray:
    """Fourth-order central differences along axis 0 (valid rows 2..S-3)."""
    return (-series[4:] + 8.0 * series[3:-1] - 8.0 * series[1:-3] + series[:-4]) / (12.0 * dt)


def _error_dynamics_scenario(dt=1e-3, t_end=1.2, seed=5):
    # gentle path: the 5-point FD truncation scales with the 4th power of
    # the closed-loop rates, so keep 1 + ||f'||^2 modest
    N = 3
    path = pathlib.circle(3.0)
    graph = gr.cycle_graph(N)
    offsets = gr.OffsetSpec.from_reference(graph, np.arange(N) * 2.0 * math.pi / N)
    gains = [GainSet(k=[1.0, 1.0], k_c=1.0) for _ in range(N)]
    return simlib.Scenario(
        name="error-dynamics", mode="integrator", paths=[path] * N, gains=gains,
        graph=graph, offsets=offsets, dt=dt, t_end=t_end, seed=seed,
        initial_box=np.array([[-5.0, 5.0], [-5.0, 5.0], [-2.0, 2.0]]))


def error_dynamics(dt: float = 1e-3, t_end: float = 1.2, seed: int = 5) -> dict:
    """FD of Phi and wtilde along a trajectory vs their analytic rates."""
    scenario = _error_dynamics_scenario(dt, t_end, seed)
    trace = simlib.run(scenario)
    S = trace.n_records
    states = trace.states
    plan = simlib._Plan(scenario)
    phi = np.empty((S, plan.N, plan.n))
    for r in range(S):
        f, _ = plan.path_eval(states[r, :, -1])
        phi[r] = states[r, :, :plan.n] - f
    wt = states[:, :, -1] - plan.w_star

    fd_phi = _fd5(phi, dt)
    fd_wt = _fd5(wt, dt)
    worst_phi = worst_wt = 0.0
    checkpoints = range(2, S - 2)
    for idx, r in enumerate(checkpoints):
        an_phi, an_wt = analytic_error_rates(scenario, states[r])
        dev = np.linalg.norm(fd_phi[idx].ravel() - an_phi.ravel())
        ref = np.linalg.norm(an_phi.ravel())
        worst_phi = max(worst_phi, dev / (ref + 1e-12))
        dev = np.linalg.norm(fd_wt[idx] - an_wt)
        ref = np.linalg.norm(an_wt)
        worst_wt = max(worst_wt, dev / (ref + 1e-12))
    return {"pass": worst_phi < 1e-6 and worst_wt < 1e-6,
            "max_rel_dev_phi_dot": worst_phi, "max_rel_dev_w_dot": worst_wt,
            "checkpoints": len(list(checkpoints))}


def lyapunov_identity(samples: int = 200, seed: int = 11) -> dict:
    """Check V_dot assembled by chain rule equals the closed form (K = I).

    V = 0.5 ||Phi||^2 + 0.5 k_c wtilde^T L wtilde; with K = I the chain rule
    through the error dynamics must reduce to
    -||Phi||^2 - ||F^T Phi - k_c L wtilde||^2.
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(samples):
        N = int(rng.integers(2, 6))
        n = int(rng.integers(2, 4))
        path = _random_path(rng, n)
        graph = gr.cycle_graph(N)
        offsets = gr.OffsetSpec.from_reference(graph, rng.uniform(-3, 3, size=N))
        k_c = float(rng.uniform(0.1, 50.0))
        L = graph.laplacian()
        w = rng.uniform(-5.0, 5.0, size=N)
        phi = rng.uniform(-10.0, 10.0, size=(N, n))
        fp = path.derivative(w).T
        wt = w - offsets.w_star
        c = -L @ wt
        # chain rule through the error dynamics with K = I
        phi_dot = -phi - fp * np.sum(fp * phi, axis=1)[:, None] - k_c * fp * c[:, None]
        wt_dot = (-1.0 if n % 2 else 1.0) + np.sum(fp * phi, axis=1) - k_c * L @ wt
        v_dot_chain = float(np.sum(phi * phi_dot) + k_c * wt @ (L @ wt_dot))
        resid = np.sum(fp * phi, axis=1) - k_c * L @ wt
        v_dot_closed = -float(np.sum(phi * phi)) - float(resid @ resid)
        scale = max(abs(v_dot_closed), 1.0)
        worst = max(worst, abs(v_dot_chain - v_dot_closed) / scale)
    return {"pass": worst < 1e-10, "max_rel_dev": worst, "samples": samples}


def grid_min_norm(G: np.ndarray, h: np.ndarray, stages: int = 8) -> np.ndarray:
    """Brute-force min ||u||^2 s.t. G u <= h over refined 2D grids.

    The objective is flat along the constraint boundary near the optimum,
    so position accuracy scales as sqrt(step * ||u||); each refinement
    window is sized from that bound around the previous argmin.
    """
    center = np.zeros(2)
    span, step = 3.0, 0.01
    for _ in range(stages):
        ax = np.arange(center[0] - span, center[0] + span + step / 2, step)
        ay = np.arange(center[1] - span, center[1] + span + step / 2, step)
        UX, UY = np.meshgrid(ax, ay, indexing="ij")
        feas = np.ones(UX.shape, dtype=bool)
        for row in range(G.shape[0]):
            feas &= G[row, 0] * UX + G[row, 1] * UY <= h[row] + 1e-12
        norms = np.where(feas, UX * UX + UY * UY, np.inf)
        best = np.unravel_index(np.argmin(norms), norms.shape)
        center = np.array([UX[best], UY[best]])
        radius = math.sqrt(2.0 * (float(np.linalg.norm(center)) + step) * step) + 2 * step
        span = 1.3 * radius + 2 * step
        step = max(span / 1500.0, 2e-7)
    return center


def qp_grid(seed: int = 3) -> dict:
    """Active-set QP vs brute-force grid search on 2D instances.

    Single-constraint cases (bounded correction magnitude) are compared by
    position to 1e-3 and against the closed-form half-plane projection;
    two-constraint cases by objective value and KKT residual.
    """
    rng = np.random.default_rng(seed)
    worst_pos = worst_obj = worst_kkt = 0.0
    for case in range(10):
        p_i = np.zeros(2)
        single = case < 6
        m = 1 if single else 2
        neighbors = []
        for _ in range(m):
            ang = rng.uniform(0, 2 * math.pi)
            dist = rng.uniform(1.05, 1.5)
            p_j = p_i + dist * np.array([math.cos(ang), math.sin(ang)])
            neighbors.append((p_j, rng.uniform(-0.15, 0.15, size=2)))
        nominal = rng.uniform(-0.15, 0.15, size=2)
        G, h = sfty.constraint_rows(p_i, nominal, neighbors, R=1.0)
        u_qp, mu = sfty.solve_min_norm(G, h)
        worst_kkt = max(worst_kkt, sfty.kkt_residual(G, h, u_qp, mu))
        u_grid = grid_min_norm(G, h)
        if single:
            worst_pos = max(worst_pos, float(np.linalg.norm(u_qp - u_grid)))
            if h[0] < 0:  # active: closed-form projection onto the half-plane
                u_proj = G[0] * (h[0] / float(G[0] @ G[0]))
                worst_pos = max(worst_pos, float(np.linalg.norm(u_qp - u_proj)))
        else:
            worst_obj = max(worst_obj, abs(float(u_qp @ u_qp) - float(u_grid @ u_grid)))
    return {"pass": worst_pos < 1e-3 and worst_obj < 1e-3 and worst_kkt < 1e-8,
            "max_position_dev": worst_pos, "max_objective_dev": worst_obj,
            "max_kkt_residual": worst_kkt}


def feedforward_rotation(samples: int = 500, seed: int = 7) -> dict:
    """Rotating planar vector of constant norm: recovered rate must equal omega."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(samples):
        rho = float(rng.uniform(0.1, 50.0))
        omega = float(rng.uniform(-20.0, 20.0))
        ang = float(rng.uniform(0, 2 * math.pi))
        chi_p = rho * np.array([math.cos(ang), math.sin(ang)])
        chi_p_dot = rho * omega * np.array([-math.sin(ang), math.cos(ang)])
        worst = max(worst, abs(feedforward_rate(chi_p, chi_p_dot) - omega))
    return {"pass": worst < 1e-10, "max_abs_dev": worst, "samples": samples}


def jacobian_fd(samples: int = 50, seed: int = 13) -> dict:
    """Finite-difference check of the analytic field Jacobian."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(samples):
        n = int(rng.integers(2, 4))
        path = _random_path(rng, n)
        gains = GainSet(k=rng.uniform(0.5, 3.0, size=n),
                        k_c=float(rng.uniform(0.1, 10.0)))
        n_nbr = int(rng.integers(0, 3))
        deltas = rng.uniform(-2.0, 2.0, size=n_nbr)
        xi = np.concatenate([rng.uniform(-10.0, 10.0, size=n),
                             rng.uniform(-5.0, 5.0, size=1)])
        w_nbr = rng.uniform(-5.0, 5.0, size=n_nbr)

        def chi_of(z):
            xi_z, w_nbr_z = z[:n + 1], z[n + 1:]
            c = -float(np.sum(xi_z[-1] - w_nbr_z - deltas))
            return fld.combined_field(path, gains, xi_z, c)

        z0 = np.concatenate([xi, w_nbr])
        J = fld.field_jacobian(path, gains, xi, n_neighbors=n_nbr, coordination="live")
        h = 1e-6
        for col in range(z0.size):
            dz = np.zeros_like(z0)
            dz[col] = h
            fd = (chi_of(z0 + dz) - chi_of(z0 - dz)) / (2 * h)
            scale = np.maximum(np.abs(J[:, col]), 1.0)
            worst = max(worst, float(np.max(np.abs(fd - J[:, col]) / scale)))
    return {"pass": worst < 1e-6, "max_rel_dev": worst, "samples": samples}


ORACLES = {
    "path-derivative-fd": (path_derivative_fd,
                           "finite differences vs analytic path derivatives"),
    "wedge-cofactor": (wedge_cofactor,
                       "cofactor-expanded propagation term vs closed form"),
    "error-dynamics": (error_dynamics,
                       "trajectory finite differences vs the error-dynamics formulas"),
    "lyapunov-identity": (lyapunov_identity,
                          "chain-rule V_dot vs its closed form at random states (K = I)"),
    "qp-grid": (qp_grid, "collision QP vs brute-force grid search"),
    "feedforward-rotation": (feedforward_rotation,
                             "feedforward rate on analytically rotating vectors"),
    "jacobian-fd": (jacobian_fd, "finite differences vs the analytic field Jacobian"),
}


def run_oracle(name: str) -> dict:
    try:
        func, _ = ORACLES[name]
    except KeyError:
        raise ValueError(f"unknown oracle {name!r}; have {sorted(ORACLES)}") from None
    return func()
