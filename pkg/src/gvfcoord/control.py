"""Saturated yaw controller for the Dubins-car-like 3D model.

State layout: (p1, p2, p3, theta, w).  The vehicle flies at constant
airspeed v; the controller aligns the heading with the planar direction of
the guiding field through a feedforward rotation rate plus a saturated
alignment term, and slaves the vertical and virtual-coordinate rates to the
partially normalized field.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import PlanarDegeneracyError
from .field import GainSet, partial_normalize

# 90-degree rotation; h^T E chi realizes the sine of the signed angle
E = np.array([[0.0, -1.0], [1.0, 0.0]])


def saturate(x: float, lo: float, hi: float) -> float:
    """Clamp to [lo, hi] (Lipschitz with constant 1)."""
    if lo >= hi:
        raise ValueError("saturation bounds must satisfy lo < hi")
    return min(max(x, lo), hi)


def wrap_angle(theta: float) -> float:
    """Wrap to (-pi, pi], mapping the boundary deterministically to +pi."""
    wrapped = math.remainder(theta, 2.0 * math.pi)
    if wrapped <= -math.pi:
        wrapped += 2.0 * math.pi
    return wrapped


def signed_angle(h, chi_p) -> float:
    """Signed angle in (-pi, pi] directed from chi_p to h.

    Both inputs are normalized internally; the antiparallel case maps to
    +pi.  Satisfies h^T E chi_p_hat = sin(sigma).
    """
    h = np.asarray(h, dtype=float)
    chi_p = np.asarray(chi_p, dtype=float)
    if np.linalg.norm(h) == 0.0 or np.linalg.norm(chi_p) == 0.0:
        raise ValueError("signed_angle requires nonzero vectors")
    cross = chi_p[0] * h[1] - chi_p[1] * h[0]
    dot = chi_p[0] * h[0] + chi_p[1] * h[1]
    sigma = math.atan2(cross, dot)
    if sigma <= -math.pi:
        sigma = math.pi
    return sigma


def feedforward_rate(chi_p, chi_p_dot, gamma: float = 1e-6) -> float:
    """Rotation rate of the field's planar direction along the trajectory.

    theta_dot_d = -chi_p_hat^T E chi_p_dot / ||chi_p||, so that
    d/dt chi_p_hat = theta_dot_d E chi_p_hat.  Scale-invariant: any positive
    rescaling of chi_p (and its derivative) leaves the rate unchanged.
    """
    chi_p = np.asarray(chi_p, dtype=float)
    chi_p_dot = np.asarray(chi_p_dot, dtype=float)
    norm_sq = float(chi_p @ chi_p)
    if norm_sq <= gamma:
        raise PlanarDegeneracyError(
            f"planar field norm^2 = {norm_sq:.3e} <= gamma = {gamma:.3e}")
    return -float(chi_p @ (E @ chi_p_dot)) / norm_sq


@dataclass(frozen=True)
class ControlOutput:
    """Inputs applied to the plant plus telemetry for the trace."""

    u_theta: float        # saturated yaw rate
    u_z: float            # vertical rate
    w_dot: float          # virtual-coordinate rate
    sigma: float          # signed heading-to-field angle
    theta_dot_d: float    # feedforward field rotation rate
    saturated: bool


def dubins_control(theta: float, chi: np.ndarray, chi_p_dot: np.ndarray,
                   gains: GainSet) -> ControlOutput:
    """Yaw/vertical/virtual-rate law for one vehicle.

    u_theta = Sat(theta_dot_d - k_theta h^T E chi_p_hat), with the vertical
    and w rates taken from the partially normalized field.
    """
    chi = np.asarray(chi, dtype=float)
    scaled = partial_normalize(chi, gains.v, gains.gamma)
    chi_p = chi[:2]
    h = np.array([math.cos(theta), math.sin(theta)])
    chi_p_hat = chi_p / np.linalg.norm(chi_p)
    sigma = signed_angle(h, chi_p_hat)
    theta_dot_d = feedforward_rate(chi_p, chi_p_dot, gains.gamma)
    raw = theta_dot_d - gains.k_theta * float(h @ (E @ chi_p_hat))
    u_theta = saturate(raw, gains.sat_lo, gains.sat_hi)
    return ControlOutput(
        u_theta=u_theta,
        u_z=float(scaled[2]),
        w_dot=float(scaled[3]),
        sigma=sigma,
        theta_dot_d=theta_dot_d,
        saturated=u_theta != raw,
    )


def dubins_derivative(state: np.ndarray, out: ControlOutput, v: float) -> np.ndarray:
    """Plant motion (p1., p2., p3., theta., w.) under the control output."""
    theta = float(state[3])
    return np.array([v * math.cos(theta), v * math.sin(theta),
                     out.u_z, out.u_theta, out.w_dot])
