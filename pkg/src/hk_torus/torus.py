"""Arithmetic on the circle of perimeter p, the quotient R/pZ.

Points are stored through their canonical representative in [0, p).
Distance is measured along the shorter arc and the signed displacement
vect(x, y) is the unique representative of y - x in ]-p/2, p/2], with the
antipodal tie resolved to +p/2.  The chart phi maps a point to that same
interval and is what orders agents around the circle.

The displacement is computed by comparing the two forward arc lengths
(x to y and y to x) and keeping the shorter one with the appropriate
sign.  That construction makes |vect(x, y)| bitwise equal to the
distance and makes the distance exactly symmetric, which the rest of
the package relies on when it builds neighbor masks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NonFinite, NonPositivePerimeter, PerimeterMismatch

__all__ = [
    "CircleParams",
    "TorusPoint",
    "canonicalize",
    "canonicalize_array",
    "torus_distance",
    "torus_vect",
    "phi",
    "phi_array",
    "pairwise_vect",
    "pairwise_distance",
    "vect_between",
    "distance_between",
]


def _check_perimeter(p: float) -> None:
    if not isinstance(p, (int, float)) or not math.isfinite(p) or p <= 0:
        raise NonPositivePerimeter(f"perimeter must be a positive finite real, got {p!r}")


@dataclass(frozen=True)
class CircleParams:
    """Perimeter and influence radius of a simulation.

    The admissible range is 0 < r <= p/2.  `strict_sixth` reports whether
    r < p/6; below that threshold signed displacements add up exactly
    along chains of up to three influence arcs, which is what the gap
    matrix and the velocity recursion need.
    """

    p: float
    r: float

    def __post_init__(self) -> None:
        _check_perimeter(self.p)
        if not math.isfinite(self.r) or self.r <= 0 or self.r > self.p / 2:
            raise ValueError(f"radius must satisfy 0 < r <= p/2, got r={self.r!r} with p={self.p!r}")

    @property
    def strict_sixth(self) -> bool:
        return self.r < self.p / 6


@dataclass(frozen=True)
class TorusPoint:
    """A point of the circle, held as its canonical representative.

    Two points are equal exactly when their representatives and
    perimeters are equal.  Use `canonicalize` to build one from an
    arbitrary real coordinate.
    """

    rep: float
    p: float

    def __post_init__(self) -> None:
        _check_perimeter(self.p)
        if not math.isfinite(self.rep):
            raise NonFinite(f"coordinate must be finite, got {self.rep!r}")
        if not 0 <= self.rep < self.p:
            raise ValueError(f"representative {self.rep!r} outside [0, {self.p!r})")


def canonicalize(x: float, p: float) -> TorusPoint:
    """Map a real coordinate to its representative in [0, p)."""
    _check_perimeter(p)
    if not math.isfinite(x):
        raise NonFinite(f"coordinate must be finite, got {x!r}")
    rep = math.fmod(x, p)
    if rep < 0:
        rep += p
    # adding p to a tiny negative remainder can round up to p itself
    if rep >= p:
        rep -= p
    return TorusPoint(rep + 0.0, p)


def _forward_arc(a: float, b: float, p: float) -> float:
    """Length of the arc from a to b walked in the positive direction."""
    d = math.fmod(b - a, p)
    if d < 0:
        d += p
    if d >= p:
        d -= p
    return d + 0.0


def torus_vect(x: TorusPoint, y: TorusPoint) -> float:
    """Signed displacement from x to y in ]-p/2, p/2], antipode to +p/2."""
    if x.p != y.p:
        raise PerimeterMismatch(f"points live on circles of perimeter {x.p!r} and {y.p!r}")
    fwd = _forward_arc(x.rep, y.rep, x.p)
    bwd = _forward_arc(y.rep, x.rep, x.p)
    return fwd if fwd <= bwd else -bwd


def torus_distance(x: TorusPoint, y: TorusPoint) -> float:
    """Shorter-arc distance, in [0, p/2].  Equals |torus_vect(x, y)|."""
    return abs(torus_vect(x, y))


def phi(x: TorusPoint) -> float:
    """Chart sending the circle to ]-p/2, p/2]; orders agents."""
    return x.rep - x.p if x.rep > x.p / 2 else x.rep


# --- array layer -----------------------------------------------------------
#
# These operate on plain float64 arrays of canonical representatives and a
# shared perimeter; the simulation code uses them instead of TorusPoint to
# stay vectorized.


def canonicalize_array(x: np.ndarray, p: float) -> np.ndarray:
    _check_perimeter(p)
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise NonFinite("coordinates must be finite")
    out = np.mod(x, p)
    out[out >= p] -= p
    return out + 0.0


def phi_array(reps: np.ndarray, p: float) -> np.ndarray:
    out = np.array(reps, dtype=float)
    out[out > p / 2] -= p
    return out


def _forward_arc_array(d: np.ndarray, p: float) -> np.ndarray:
    out = np.mod(d, p)
    out[out >= p] -= p
    return out


def pairwise_vect(reps: np.ndarray, p: float) -> np.ndarray:
    """Matrix V with V[i, j] = vect(x_i, x_j)."""
    reps = np.asarray(reps, dtype=float)
    fwd = _forward_arc_array(reps[None, :] - reps[:, None], p)
    bwd = fwd.T
    return np.where(fwd <= bwd, fwd, -bwd)


def pairwise_distance(reps: np.ndarray, p: float) -> np.ndarray:
    return np.abs(pairwise_vect(reps, p))


def vect_between(a: np.ndarray, b: np.ndarray, p: float) -> np.ndarray:
    """Elementwise vect from positions a to positions b."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    fwd = _forward_arc_array(b - a, p)
    bwd = _forward_arc_array(a - b, p)
    return np.where(fwd <= bwd, fwd, -bwd)


def distance_between(a: np.ndarray, b: np.ndarray, p: float) -> np.ndarray:
    return np.abs(vect_between(a, b, p))
