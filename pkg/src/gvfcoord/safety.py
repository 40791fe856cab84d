"""Minimally invasive collision avoidance via safety barrier certificates.

Each robot solves a tiny quadratic program for the smallest correction to
its nominal field such that, for every other robot j, the barrier
B_ij = 1 / (||p_i - p_j||^2 - R^2) satisfies B_ij_dot <= 1 / B_ij, treating
the neighbor's motion as its communicated nominal field value.  Only the
physical entries of the field are ever corrected; the virtual coordinate
belongs to the coordination layer.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from typing import Sequence

import numpy as np

from .errors import CollisionStateError, InfeasibleCorrectionError


@dataclass(frozen=True)
class BarrierPair:
    """Barrier value and its gradient w.r.t. the first robot's position."""

    i: int
    j: int
    value: float
    grad: np.ndarray


def barrier(p_i, p_j, R: float, i: int = 0, j: int = 1) -> BarrierPair:
    """B = 1/(||p_i - p_j||^2 - R^2) with grad_{p_i} B = -2 B^2 (p_i - p_j)."""
    p_i = np.asarray(p_i, dtype=float)
    p_j = np.asarray(p_j, dtype=float)
    diff = p_i - p_j
    slack = float(diff @ diff) - R * R
    if slack <= 0.0:
        raise CollisionStateError(
            f"robots {i} and {j} at distance^2 {float(diff @ diff):.6g} "
            f"<= R^2 = {R * R:.6g}")
    value = 1.0 / slack
    return BarrierPair(i=i, j=j, value=value, grad=-2.0 * value * value * diff)


def constraint_rows(p_i, nominal_i, neighbors: Sequence[tuple], R: float):
    """Linear constraints G u <= h on the physical correction u of robot i.

    ``neighbors`` is a sequence of (p_j, nominal_j) with nominal fields given
    as full (n+1)-vectors or bare n-vectors; only physical entries are used.
    Row j encodes B_ij_dot <= 1/B_ij with p_i_dot = nominal_i + u and
    p_j_dot = nominal_j.
    """
    p_i = np.asarray(p_i, dtype=float)
    n = p_i.size
    nom_i = np.asarray(nominal_i, dtype=float)[:n]
    G = np.zeros((len(neighbors), n))
    h = np.zeros(len(neighbors))
    for row, (p_j, nominal_j) in enumerate(neighbors):
        p_j = np.asarray(p_j, dtype=float)
        nom_j = np.asarray(nominal_j, dtype=float)[:n]
        pair = barrier(p_i, p_j, R)
        # B_dot = grad . (p_i_dot - p_j_dot); the neighbor's gradient is -grad
        G[row] = pair.grad
        h[row] = 1.0 / pair.value - float(pair.grad @ (nom_i - nom_j))
    return G, h


def solve_min_norm(G: np.ndarray, h: np.ndarray):
    """min ||u||^2 s.t. G u <= h by active-set enumeration.

    Returns (u, multipliers) with multipliers aligned to the rows of G
    (zero on inactive constraints).  The problem is strictly convex, so the
    first subset whose equality solution satisfies both primal feasibility
    and nonnegative multipliers is the optimum.  Sized for a handful of
    constraints; exactness over generality.
    """
    m, n = G.shape
    mu = np.zeros(m)
    if np.all(h >= 0.0):
        return np.zeros(n), mu
    for size in range(1, m + 1):
        for subset in combinations(range(m), size):
            Gs = G[list(subset)]
            gram = Gs @ Gs.T
            try:
                lam = np.linalg.solve(gram, h[list(subset)])
            except np.linalg.LinAlgError:
                continue
            mus = -2.0 * lam
            if np.any(mus < -1e-12):
                continue
            u = Gs.T @ lam
            if np.all(G @ u <= h + 1e-10):
                mu[:] = 0.0
                mu[list(subset)] = np.maximum(mus, 0.0)
                return u, mu
    raise InfeasibleCorrectionError("no feasible minimum-norm correction found")


def safe_correction(nominal_i, p_i, neighbors: Sequence[tuple], R: float) -> np.ndarray:
    """Minimum-norm correction to robot i's nominal field.

    Returns a vector shaped like ``nominal_i`` whose first n entries carry
    the correction and whose trailing entries (the virtual coordinate) are
    zero.  When no constraint is active the result is exactly zero.
    """
    nominal_i = np.asarray(nominal_i, dtype=float)
    p_i = np.asarray(p_i, dtype=float)
    out = np.zeros_like(nominal_i)
    if not neighbors:
        return out
    G, h = constraint_rows(p_i, nominal_i, neighbors, R)
    u, _ = solve_min_norm(G, h)
    out[:p_i.size] = u
    return out


def kkt_residual(G: np.ndarray, h: np.ndarray, u: np.ndarray, mu: np.ndarray) -> float:
    """Max violation of stationarity, feasibility, and complementary slackness."""
    stationarity = np.abs(2.0 * u + G.T @ mu).max() if u.size else 0.0
    slack = G @ u - h
    feasibility = max(0.0, slack.max()) if slack.size else 0.0
    dual = max(0.0, (-mu).max()) if mu.size else 0.0
    comp = np.abs(mu * slack).max() if mu.size else 0.0
    return float(max(stationarity, feasibility, dual, comp))
