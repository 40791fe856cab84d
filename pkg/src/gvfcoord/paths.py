"""Parametric desired paths with exact analytic first and second derivatives.

A path in R^n is n coordinate functions of a scalar parameter w.  Each
coordinate function is a sum of closed-form terms (sinusoids, powers, and
one special pinched-sine form), so differentiating is a per-term rule and
no numerical differentiation ever enters the main computation path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

COSINE = "cosine"
SINE = "sine"
POLYNOMIAL = "polynomial"
LEMNISCATE = "lemniscate"

KINDS = (COSINE, SINE, POLYNOMIAL, LEMNISCATE)

# numeric codes used by the compiled term tables in engine.py
KIND_CODES = {COSINE: 0, SINE: 1, POLYNOMIAL: 2, LEMNISCATE: 3}

DEFAULT_OPEN_WINDOW = (-2.0 * math.pi, 2.0 * math.pi)


@dataclass(frozen=True)
class Term:
    """One closed-form term of a coordinate function.

    kind "cosine":      a*cos(b*w + c) + d
    kind "sine":        a*sin(b*w + c) + d
    kind "polynomial":  a*(w + c)**m + d, with m = int(rate) >= 0
    kind "lemniscate":  a*sin(u)*sqrt(0.5*(1 - 0.5*sin(u)^2)) + d, u = b*w + c

    The lemniscate kind is the pinched lobe coordinate of the bent-infinity
    curve; its derivatives below are hand-derived closed forms (the radicand
    0.5 - 0.25*sin^2(u) is bounded in [0.25, 0.5], so the term is smooth
    everywhere).
    """

    kind: str
    amplitude: float
    rate: float = 1.0
    phase: float = 0.0
    offset: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown term kind {self.kind!r}")
        if self.kind == POLYNOMIAL:
            m = self.rate
            if m != int(m) or m < 0:
                raise ValueError("polynomial degree must be an integer >= 0")

    def value(self, w):
        a, b, c, d = self.amplitude, self.rate, self.phase, self.offset
        if self.kind == COSINE:
            return a * np.cos(b * w + c) + d
        if self.kind == SINE:
            return a * np.sin(b * w + c) + d
        if self.kind == POLYNOMIAL:
            return a * (np.asarray(w, dtype=float) + c) ** int(b) + d
        u = b * w + c
        s = np.sin(u)
        return a * s * np.sqrt(0.5 * (1.0 - 0.5 * s * s)) + d

    def deriv(self, w):
        a, b, c = self.amplitude, self.rate, self.phase
        if self.kind == COSINE:
            return -a * b * np.sin(b * w + c)
        if self.kind == SINE:
            return a * b * np.cos(b * w + c)
        if self.kind == POLYNOMIAL:
            m = int(b)
            if m == 0:
                return np.zeros_like(np.asarray(w, dtype=float))
            return a * m * (np.asarray(w, dtype=float) + c) ** (m - 1)
        u = b * w + c
        s, co = np.sin(u), np.cos(u)
        root = np.sqrt(0.5 - 0.25 * s * s)
        return 0.5 * a * b * co**3 / root

    def deriv2(self, w):
        a, b, c = self.amplitude, self.rate, self.phase
        if self.kind == COSINE:
            return -a * b * b * np.cos(b * w + c)
        if self.kind == SINE:
            return -a * b * b * np.sin(b * w + c)
        if self.kind == POLYNOMIAL:
            m = int(b)
            if m <= 1:
                return np.zeros_like(np.asarray(w, dtype=float))
            return a * m * (m - 1) * (np.asarray(w, dtype=float) + c) ** (m - 2)
        u = b * w + c
        s, co = np.sin(u), np.cos(u)
        root = np.sqrt(0.5 - 0.25 * s * s)
        return 0.5 * a * b * b * s * co**2 * (0.5 * s * s - 1.25) / root**3


class CoordFunction:
    """A single coordinate as a sum of closed-form terms."""

    def __init__(self, terms: Sequence[Term]):
        if not terms:
            raise ValueError("a coordinate function needs at least one term")
        self.terms = tuple(terms)

    def value(self, w):
        return sum(t.value(w) for t in self.terms)

    def deriv(self, w):
        return sum(t.deriv(w) for t in self.terms)

    def deriv2(self, w):
        return sum(t.deriv2(w) for t in self.terms)


@dataclass(frozen=True)
class PathError:
    """Path-following error: phi[j] = x_j - f_j(w), plus its Euclidean norm."""

    phi: np.ndarray
    norm: float


class ParametricPath:
    """An n-dimensional C^2 path, n >= 2, with optional period.

    ``window`` is the parameter interval used by the derivative-bound audit
    (and for sizing sampling boxes); it defaults to one period for closed
    curves and to a fixed interval for open ones.
    """

    def __init__(self, coords: Sequence[CoordFunction], period: Optional[float] = None,
                 window: Optional[tuple] = None, name: str = "custom"):
        if len(coords) < 2:
            raise ValueError("path dimension must be >= 2")
        if period is not None and period <= 0:
            raise ValueError("period must be positive")
        self.coords = tuple(coords)
        self.dim = len(coords)
        self.period = period
        self.name = name
        if window is not None:
            self.window = (float(window[0]), float(window[1]))
        elif period is not None:
            self.window = (0.0, float(period))
        else:
            self.window = DEFAULT_OPEN_WINDOW
        if self.window[1] <= self.window[0]:
            raise ValueError("window must be a nonempty interval")
        if period is not None:
            self._check_periodicity()

    def _check_periodicity(self, samples: int = 64, tol: float = 1e-9):
        w = np.linspace(self.window[0], self.window[1], samples)
        gap = np.abs(self.evaluate(w) - self.evaluate(w + self.period)).max()
        if gap > tol:
            raise ValueError(f"declared period {self.period} is violated by {gap:.3e}")

    def evaluate(self, w):
        """Point on the path: (n,) for scalar w, (n, M) for an array of M values."""
        return np.stack([c.value(w) for c in self.coords])

    def derivative(self, w):
        """Exact analytic f'(w)."""
        return np.stack([c.deriv(w) for c in self.coords])

    def second_derivative(self, w):
        """Exact analytic f''(w)."""
        return np.stack([c.deriv2(w) for c in self.coords])

    def derivative_bounds(self, samples: int = 10_000, window: Optional[tuple] = None):
        """Sampled-grid audit of sup|f'| and sup|f''| per coordinate.

        A finite result over the audit window is the boundedness check the
        coordination analysis relies on; it is a grid audit, not a proof.
        """
        lo, hi = window if window is not None else self.window
        w = np.linspace(lo, hi, samples)
        sup1 = np.abs(self.derivative(w)).max(axis=1)
        sup2 = np.abs(self.second_derivative(w)).max(axis=1)
        return sup1, sup2

    def extent(self, samples: int = 2_000):
        """Per-coordinate (min, max) of the path over the audit window."""
        w = np.linspace(self.window[0], self.window[1], samples)
        pts = self.evaluate(w)
        return pts.min(axis=1), pts.max(axis=1)


def path_error(path: ParametricPath, xi: np.ndarray) -> PathError:
    """Error of a generalized state xi = (x_1..x_n, w) to the lifted path."""
    xi = np.asarray(xi, dtype=float)
    if xi.shape != (path.dim + 1,):
        raise ValueError(f"state must have {path.dim + 1} entries, got {xi.shape}")
    phi = xi[:-1] - path.evaluate(xi[-1])
    return PathError(phi=phi, norm=float(np.linalg.norm(phi)))


def _const(value: float) -> Term:
    return Term(POLYNOMIAL, amplitude=float(value), rate=0)


def circle(radius: float, center: Sequence[float] = (0.0, 0.0)) -> ParametricPath:
    """Circle of given radius in the x1-x2 plane; extra center entries add
    constant coordinates (a horizontal circle at fixed altitude in 3D)."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    center = [float(c) for c in center]
    if len(center) < 2:
        raise ValueError("center needs at least two entries")
    coords = [
        CoordFunction([Term(COSINE, radius, 1.0, 0.0, center[0])]),
        CoordFunction([Term(SINE, radius, 1.0, 0.0, center[1])]),
    ]
    coords += [CoordFunction([_const(c)]) for c in center[2:]]
    return ParametricPath(coords, period=2.0 * math.pi, name="circle")


def ellipse(semi_x: float, semi_y: float, center: Sequence[float] = (0.0, 0.0)) -> ParametricPath:
    if semi_x <= 0 or semi_y <= 0:
        raise ValueError("semi-axes must be positive")
    center = [float(c) for c in center]
    if len(center) < 2:
        raise ValueError("center needs at least two entries")
    coords = [
        CoordFunction([Term(COSINE, semi_x, 1.0, 0.0, center[0])]),
        CoordFunction([Term(SINE, semi_y, 1.0, 0.0, center[1])]),
    ]
    coords += [CoordFunction([_const(c)]) for c in center[2:]]
    return ParametricPath(coords, period=2.0 * math.pi, name="ellipse")


def lissajous(amplitude: Sequence[float], frequency: Sequence[float],
              phase: Optional[Sequence[float]] = None,
              offset: Optional[Sequence[float]] = None,
              period: Optional[float] = None,
              window: Optional[tuple] = None) -> ParametricPath:
    """Lissajous curve f_j(w) = A_j cos(b_j w + c_j) + d_j in 2D or 3D.

    With irrational frequency ratios the curve never closes; leave ``period``
    unset in that case and it is treated as an open curve.
    """
    n = len(amplitude)
    if n < 2:
        raise ValueError("lissajous needs at least two coordinates")
    frequency = list(frequency)
    phase = list(phase) if phase is not None else [0.0] * n
    offset = list(offset) if offset is not None else [0.0] * n
    if not (len(frequency) == len(phase) == len(offset) == n):
        raise ValueError("amplitude/frequency/phase/offset lengths must match")
    coords = [
        CoordFunction([Term(COSINE, float(a), float(b), float(c), float(d))])
        for a, b, c, d in zip(amplitude, frequency, phase, offset)
    ]
    return ParametricPath(coords, period=period, window=window, name="lissajous")


def bent_infinity() -> ParametricPath:
    """The 3D self-intersecting bent infinity-shaped closed curve.

    x1 = 15 sin(2w), x2 = 30 sin(w) sqrt(0.5 (1 - 0.5 sin^2 w)),
    x3 = 3 + 5 cos(2w); period 2*pi.
    """
    coords = [
        CoordFunction([Term(SINE, 15.0, 2.0)]),
        CoordFunction([Term(LEMNISCATE, 30.0, 1.0)]),
        CoordFunction([Term(COSINE, 5.0, 2.0, 0.0, 3.0)]),
    ]
    return ParametricPath(coords, period=2.0 * math.pi, name="bent_infinity")


def line(start: Sequence[float], direction: Sequence[float],
         window: Optional[tuple] = None) -> ParametricPath:
    """Open straight line f(w) = start + w * direction."""
    start = [float(s) for s in start]
    direction = [float(d) for d in direction]
    if len(start) != len(direction):
        raise ValueError("start and direction lengths must match")
    if not any(direction):
        raise ValueError("direction must be nonzero")
    coords = [
        CoordFunction([Term(POLYNOMIAL, d, 1, 0.0, s)]) if d != 0.0
        else CoordFunction([_const(s)])
        for s, d in zip(start, direction)
    ]
    return ParametricPath(coords, window=window, name="line")


CATALOG = {
    "circle": circle,
    "ellipse": ellipse,
    "lissajous": lissajous,
    "bent_infinity": bent_infinity,
    "line": line,
}


def from_catalog(name: str, **params) -> ParametricPath:
    try:
        builder = CATALOG[name]
    except KeyError:
        raise ValueError(f"unknown catalog path {name!r}; have {sorted(CATALOG)}") from None
    return builder(**params)
