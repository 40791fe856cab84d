"""JIT-compiled integrator-mode stepping loop.

The coordination gain can put the fastest closed-loop mode three orders of
magnitude above the path-following one, so figure-scale scenarios take
hundreds of thousands of RK4 steps; this kernel keeps them in machine code.
Term tables flatten every robot's coordinate functions into parallel arrays
(one segment per robot-coordinate pair).  Semantics match sim._run_python
for integrator mode without the safety layer.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

from .errors import DivergenceError
from .paths import KIND_CODES


def compile_term_tables(paths, n):
    """Flatten per-robot coordinate functions into parallel term arrays."""
    kind, amp, rate, phase = [], [], [], []
    base = []
    seg_ptr = [0]
    for path in paths:
        for coord in path.coords:
            offset = 0.0
            for term in coord.terms:
                kind.append(KIND_CODES[term.kind])
                amp.append(term.amplitude)
                rate.append(term.rate)
                phase.append(term.phase)
                offset += term.offset
            base.append(offset)
            seg_ptr.append(len(kind))
    return (np.array(kind, dtype=np.int64), np.array(amp), np.array(rate),
            np.array(phase), np.array(base), np.array(seg_ptr, dtype=np.int64))


@njit(cache=True)
def _eval_paths(w, kind, amp, rate, phase, base, seg_ptr, n, f, fp):
    N = w.size
    for r in range(N):
        wr = w[r]
        for j in range(n):
            seg = r * n + j
            acc = base[seg]
            dacc = 0.0
            for tI in range(seg_ptr[seg], seg_ptr[seg + 1]):
                kd = kind[tI]
                a = amp[tI]
                b = rate[tI]
                c = phase[tI]
                if kd == 0:
                    u = b * wr + c
                    acc += a * math.cos(u)
                    dacc += -a * b * math.sin(u)
                elif kd == 1:
                    u = b * wr + c
                    acc += a * math.sin(u)
                    dacc += a * b * math.cos(u)
                elif kd == 2:
                    m = int(b)
                    u = wr + c
                    acc += a * u ** m
                    if m >= 1:
                        dacc += a * m * u ** (m - 1)
                else:
                    u = b * wr + c
                    s = math.sin(u)
                    co = math.cos(u)
                    root = math.sqrt(0.5 - 0.25 * s * s)
                    acc += a * s * root
                    dacc += 0.5 * a * b * co * co * co / root
            f[r, j] = acc
            fp[r, j] = dacc


@njit(cache=True)
def _rate(X, w_view, live, K, kc, sign, adj, deg, sum_delta,
          kind, amp, rate, phase, base, seg_ptr, n, out, f, fp):
    N = X.shape[0]
    _eval_paths(X[:, n], kind, amp, rate, phase, base, seg_ptr, n, f, fp)
    for i in range(N):
        ci = -deg[i] * X[i, n] + sum_delta[i]
        if live:
            for j in range(N):
                ci += adj[i, j] * X[j, n]
        else:
            for j in range(N):
                ci += adj[i, j] * w_view[j]
        acc = 0.0
        for j in range(n):
            kphi = K[i, j] * (X[i, j] - f[i, j])
            out[i, j] = sign * fp[i, j] - kphi
            acc += kphi * fp[i, j]
        out[i, n] = sign + acc + kc[i] * ci


@njit(cache=True)
def _run_kernel(X, dt, n_steps, comm_hz, rec_steps, K, kc, sign, adj, deg,
                sum_delta, kind, amp, rate, phase, base, seg_ptr, n,
                edge_a, edge_b, delta, divergence_limit,
                rec_t, rec_state, rec_phi, rec_coord, rec_mind):
    N = X.shape[0]
    d = n + 1
    w_view = X[:, n].copy()
    live = comm_hz == 0.0
    next_refresh = 0
    rec_next = 0
    f = np.empty((N, n))
    fp = np.empty((N, n))
    k1 = np.empty((N, d))
    k2 = np.empty((N, d))
    k3 = np.empty((N, d))
    k4 = np.empty((N, d))
    stage = np.empty((N, d))

    step = 0
    while True:
        t = step * dt
        if not live and t >= next_refresh / comm_hz - 1e-12:
            for i in range(N):
                w_view[i] = X[i, n]
            next_refresh += 1

        if rec_next < rec_steps.size and step == rec_steps[rec_next]:
            r = rec_next
            rec_t[r] = t
            _eval_paths(X[:, n], kind, amp, rate, phase, base, seg_ptr, n, f, fp)
            for i in range(N):
                acc = 0.0
                for j in range(n):
                    rec_state[r, i, j] = X[i, j]
                    diff = X[i, j] - f[i, j]
                    acc += diff * diff
                rec_state[r, i, n] = X[i, n]
                rec_phi[r, i] = math.sqrt(acc)
            for e in range(edge_a.size):
                rec_coord[r, e] = X[edge_a[e], n] - X[edge_b[e], n] - delta[e]
            mind = np.inf
            for i in range(N):
                for j in range(i + 1, N):
                    acc = 0.0
                    for q in range(n):
                        diff = X[i, q] - X[j, q]
                        acc += diff * diff
                    dist = math.sqrt(acc)
                    if dist < mind:
                        mind = dist
            rec_mind[r] = mind
            rec_next += 1

        if step == n_steps:
            return -1

        _rate(X, w_view, live, K, kc, sign, adj, deg, sum_delta,
              kind, amp, rate, phase, base, seg_ptr, n, k1, f, fp)
        for i in range(N):
            for q in range(d):
                stage[i, q] = X[i, q] + 0.5 * dt * k1[i, q]
        _rate(stage, w_view, live, K, kc, sign, adj, deg, sum_delta,
              kind, amp, rate, phase, base, seg_ptr, n, k2, f, fp)
        for i in range(N):
            for q in range(d):
                stage[i, q] = X[i, q] + 0.5 * dt * k2[i, q]
        _rate(stage, w_view, live, K, kc, sign, adj, deg, sum_delta,
              kind, amp, rate, phase, base, seg_ptr, n, k3, f, fp)
        for i in range(N):
            for q in range(d):
                stage[i, q] = X[i, q] + dt * k3[i, q]
        _rate(stage, w_view, live, K, kc, sign, adj, deg, sum_delta,
              kind, amp, rate, phase, base, seg_ptr, n, k4, f, fp)
        for i in range(N):
            for q in range(d):
                X[i, q] = X[i, q] + (dt / 6.0) * (
                    k1[i, q] + 2.0 * k2[i, q] + 2.0 * k3[i, q] + k4[i, q])
        step += 1

        worst = 0.0
        for i in range(N):
            for q in range(d):
                mag = abs(X[i, q])
                if mag > worst:
                    worst = mag
        if not np.isfinite(worst) or worst > divergence_limit:
            return step


def run_integrator(scenario, plan, X, n_steps, rec_steps):
    """Drive the kernel and assemble a Trace; mirrors sim._run_python."""
    from . import sim as _sim

    kind, amp, rate, phase, base, seg_ptr = compile_term_tables(
        scenario.paths, plan.n)
    S = rec_steps.size
    N, E = plan.N, plan.edge_a.size
    rec_t = np.empty(S)
    rec_state = np.empty((S, N, plan.n + 1))
    rec_phi = np.empty((S, N))
    rec_coord = np.empty((S, E))
    rec_mind = np.empty(S)
    X = X.astype(float).copy()
    failed_step = _run_kernel(
        X, scenario.dt, n_steps, scenario.comm_hz, rec_steps,
        plan.K, plan.kc, plan.sign, plan.adj, plan.deg, plan.sum_delta,
        kind, amp, rate, phase, base, seg_ptr, plan.n,
        plan.edge_a, plan.edge_b, plan.delta, _sim.DIVERGENCE_LIMIT,
        rec_t, rec_state, rec_phi, rec_coord, rec_mind)
    if failed_step >= 0:
        t = failed_step * scenario.dt
        raise DivergenceError(
            f"state magnitude exceeded {_sim.DIVERGENCE_LIMIT:.0e} at t = {t:.6g}",
            state=X, t=t)
    return _sim.Trace(mode="integrator", n=plan.n, edges=scenario.graph.edges,
                      t=rec_t, states=rec_state, phi_norm=rec_phi,
                      coord_err=rec_coord, min_dist=rec_mind)
