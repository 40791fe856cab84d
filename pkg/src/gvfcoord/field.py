"""Guiding vector fields over the lifted state (x_1..x_n, w).

The path-following field drives the surface errors phi_j = x_j - f_j(w) to
zero while propagating along the path through the virtual coordinate; the
coordination term injects consensus feedback into the w-component only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import PlanarDegeneracyError
from .paths import ParametricPath


@dataclass(frozen=True)
class GainSet:
    """Per-robot gains and controller constants.

    k           per-coordinate convergence gains (all > 0)
    k_c         coordination weight (> 0)
    v           constant airspeed for the Dubins controller (> 0)
    k_theta     yaw alignment gain (> 0)
    sat_lo/hi   yaw-rate saturation bounds, sat_lo < 0 < sat_hi
    gamma       planar degeneracy threshold (> 0)
    R           safety radius for the collision layer (> 0)
    """

    k: np.ndarray
    k_c: float = 1.0
    v: float = 1.0
    k_theta: float = 1.0
    sat_lo: float = -10.0
    sat_hi: float = 10.0
    gamma: float = 1e-6
    R: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "k", np.asarray(self.k, dtype=float))
        if self.k.ndim != 1 or self.k.size < 2:
            raise ValueError("k must be a vector of length n >= 2")
        if not np.all(self.k > 0):
            raise ValueError("all entries of k must be positive")
        for name in ("k_c", "v", "k_theta", "gamma", "R"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not (self.sat_lo < 0 < self.sat_hi):
            raise ValueError("saturation bounds must satisfy sat_lo < 0 < sat_hi")


def pf_field(path: ParametricPath, gains: GainSet, xi: np.ndarray) -> np.ndarray:
    """Path-following guiding vector field at xi = (x_1..x_n, w).

    Entry j in 1..n:  (-1)^n f'_j(w) - k_j phi_j
    Entry n+1:        (-1)^n + sum_l k_l phi_l f'_l(w)
    """
    xi = np.asarray(xi, dtype=float)
    n = path.dim
    if xi.shape != (n + 1,):
        raise ValueError(f"state must have {n + 1} entries")
    w = xi[-1]
    fp = path.derivative(w)
    phi = xi[:-1] - path.evaluate(w)
    sign = -1.0 if n % 2 else 1.0
    kphi = gains.k * phi
    out = np.empty(n + 1)
    out[:n] = sign * fp - kphi
    out[n] = sign + float(kphi @ fp)
    return out


def pf_field_batch(path: ParametricPath, k: np.ndarray, states: np.ndarray) -> np.ndarray:
    """Vectorized pf_field over M states, shape (M, n+1) -> (M, n+1)."""
    states = np.asarray(states, dtype=float)
    n = path.dim
    w = states[:, -1]
    f = path.evaluate(w).T          # (M, n)
    fp = path.derivative(w).T       # (M, n)
    sign = -1.0 if n % 2 else 1.0
    kphi = k * (states[:, :n] - f)
    out = np.empty_like(states)
    out[:, :n] = sign * fp - kphi
    out[:, n] = sign + np.sum(kphi * fp, axis=1)
    return out


def _det(m) -> float:
    # recursive Laplace expansion; kept independent of any closed-form shortcut
    size = len(m)
    if size == 1:
        return m[0][0]
    total = 0.0
    for col in range(size):
        minor = [row[:col] + row[col + 1:] for row in m[1:]]
        total += (-1.0) ** col * m[0][col] * _det(minor)
    return total


def wedge_oracle(path: ParametricPath, xi: np.ndarray) -> np.ndarray:
    """Propagation term computed from first principles, for cross-checking.

    Expands the formal (n+1)x(n+1) determinant whose first row holds the
    unit vectors and whose remaining rows are the error gradients
    grad phi_j = e_j - f'_j(w) e_{n+1}; component k is the signed cofactor
    of the k-th unit vector.  Restricted to n in {2, 3}.
    """
    xi = np.asarray(xi, dtype=float)
    n = path.dim
    if n not in (2, 3):
        raise ValueError("wedge oracle is implemented for n in {2, 3}")
    fp = path.derivative(xi[-1])
    grads = []
    for j in range(n):
        g = [0.0] * (n + 1)
        g[j] = 1.0
        g[n] = -float(fp[j])
        grads.append(g)
    out = np.empty(n + 1)
    for comp in range(n + 1):
        minor = [g[:comp] + g[comp + 1:] for g in grads]
        out[comp] = (-1.0) ** comp * _det(minor)
    return out


def gradient(path: ParametricPath, xi: np.ndarray, j: int) -> np.ndarray:
    """grad phi_j with respect to the generalized coordinate."""
    n = path.dim
    g = np.zeros(n + 1)
    g[j] = 1.0
    g[n] = -float(path.derivative(np.asarray(xi, dtype=float)[-1])[j])
    return g


def combined_field(path: ParametricPath, gains: GainSet, xi: np.ndarray,
                   c_i: float) -> np.ndarray:
    """Coordinating field: pf_field plus k_c * c_i on the w-entry only."""
    chi = pf_field(path, gains, xi)
    chi[-1] += gains.k_c * c_i
    return chi


def partial_normalize(chi: np.ndarray, v: float, gamma: float) -> np.ndarray:
    """Scale chi so its first two entries have norm exactly v.

    Raises PlanarDegeneracyError when chi_1^2 + chi_2^2 <= gamma; the
    controller's standing assumption is violated there and the simulator
    aborts the run with the offending state.
    """
    chi = np.asarray(chi, dtype=float)
    planar_sq = float(chi[0] * chi[0] + chi[1] * chi[1])
    if planar_sq <= gamma:
        raise PlanarDegeneracyError(
            f"planar field norm^2 = {planar_sq:.3e} <= gamma = {gamma:.3e}",
            state=chi.copy())
    return (v / np.sqrt(planar_sq)) * chi


def field_jacobian(path: ParametricPath, gains: GainSet, xi: np.ndarray,
                   n_neighbors: int = 0, coordination: str = "live") -> np.ndarray:
    """Jacobian of the combined field w.r.t. (x_1..x_n, w_i, w_neighbors).

    Shape (n+1, n+1+n_neighbors).  The coordination term enters the last
    field row only, so all neighbor columns of the first n rows are exact
    zeros.  ``coordination`` selects how the consensus feedback varies:

    "live"    c_i recomputed from instantaneous values: own-w column picks
              up -k_c * deg and each neighbor column +k_c
    "held"    neighbors are zero-order-held between refreshes, but c_i still
              tracks the robot's own w: neighbor columns vanish
    "frozen"  c_i treated as an external constant: no coordination entries
    """
    if coordination not in ("live", "held", "frozen"):
        raise ValueError(f"unknown coordination mode {coordination!r}")
    xi = np.asarray(xi, dtype=float)
    n = path.dim
    w = xi[-1]
    fp = path.derivative(w)
    fpp = path.second_derivative(w)
    phi = xi[:-1] - path.evaluate(w)
    sign = -1.0 if n % 2 else 1.0
    J = np.zeros((n + 1, n + 1 + n_neighbors))
    for j in range(n):
        J[j, j] = -gains.k[j]
        J[j, n] = sign * fpp[j] + gains.k[j] * fp[j]
    J[n, :n] = gains.k * fp
    J[n, n] = float(np.sum(gains.k * (phi * fpp - fp * fp)))
    if coordination != "frozen":
        # c_i = -sum_j (w_i - w_j - Delta_ij): own column -deg, +1 per neighbor
        J[n, n] += -gains.k_c * n_neighbors
        if coordination == "live":
            J[n, n + 1:] = gains.k_c
    return J
