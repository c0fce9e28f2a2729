"""Conic domains in the plane (wedges) and in space (circular caps).

A wedge ``Wedge2D(kappa, alpha)`` is the open sector of opening ``kappa``
centred on the ray at angle ``alpha``::

    {(r cos t, r sin t) : r > 0, alpha - kappa/2 < t < alpha + kappa/2}

Points on the two edges (and the vertex) are outside.
"""
from dataclasses import dataclass
from math import atan2, cos, hypot, isfinite, sin, sqrt, tau as TWO_PI

import numpy as np

__all__ = [
    "Point2",
    "Wedge2D",
    "SphericalCap3D",
    "WeightPair",
    "OutsideDomainError",
    "contains",
    "rho0",
    "rho",
    "weights",
    "signed_angle",
    "contains_many",
    "rho_many",
]


class OutsideDomainError(ValueError):
    """A point was required to lie in the open domain but does not."""


@dataclass(frozen=True)
class Point2:
    x1: float
    x2: float

    def __post_init__(self):
        if not (isfinite(self.x1) and isfinite(self.x2)):
            raise ValueError("Point2 components must be finite")

    @classmethod
    def polar(cls, r, theta):
        return cls(r * cos(theta), r * sin(theta))

    def __iter__(self):
        yield self.x1
        yield self.x2


@dataclass(frozen=True)
class Wedge2D:
    kappa: float
    alpha: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.kappa < TWO_PI:
            raise ValueError(f"wedge opening must lie in (0, 2*pi), got {self.kappa!r}")
        object.__setattr__(self, "alpha", self.alpha % TWO_PI)

    @property
    def edge_angles(self):
        """Angles of the clockwise and counter-clockwise boundary rays."""
        return self.alpha - self.kappa / 2.0, self.alpha + self.kappa / 2.0

    def point(self, r, theta):
        """Point at radius ``r`` and angle ``theta`` measured from the centre ray."""
        return Point2.polar(r, self.alpha + theta)

    def edge_point(self, r, theta):
        """Point at radius ``r`` and angle ``theta`` in ``(0, kappa)`` measured from the clockwise edge."""
        return Point2.polar(r, self.alpha - self.kappa / 2.0 + theta)


@dataclass(frozen=True)
class SphericalCap3D:
    """Circular cone ``{polar angle < kappa/2}`` around the positive x3 axis."""

    kappa: float

    def __post_init__(self):
        if not 0.0 < self.kappa < TWO_PI:
            raise ValueError(f"cap opening must lie in (0, 2*pi), got {self.kappa!r}")

    def contains(self, p):
        x1, x2, x3 = (float(c) for c in p)
        r = sqrt(x1 * x1 + x2 * x2 + x3 * x3)
        if r == 0.0:
            return False
        return atan2(hypot(x1, x2), x3) < self.kappa / 2.0

    @staticmethod
    def rho0(p):
        return float(np.linalg.norm(np.asarray(p, dtype=float)))


@dataclass(frozen=True)
class WeightPair:
    R: float
    J: float


def signed_angle(theta):
    """Reduce an angle (or array of angles) to ``(-pi, pi]``."""
    out = np.pi - np.mod(np.pi - np.asarray(theta, dtype=float), TWO_PI)
    return float(out) if np.ndim(out) == 0 else out


def _relative_angle(domain, x1, x2):
    return signed_angle(np.arctan2(x2, x1) - domain.alpha)


def contains(domain, p):
    """Whether ``p`` lies in the open wedge."""
    x1, x2 = p
    if x1 == 0.0 and x2 == 0.0:
        return False
    return abs(_relative_angle(domain, x1, x2)) < domain.kappa / 2.0


def contains_many(domain, x1, x2):
    """Vectorised membership test for coordinate arrays."""
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    nonzero = (x1 != 0.0) | (x2 != 0.0)
    return nonzero & (np.abs(_relative_angle(domain, x1, x2)) < domain.kappa / 2.0)


def rho0(p):
    """Distance to the vertex."""
    x1, x2 = p
    return hypot(x1, x2)


def _distance_to_ray(x1, x2, angle):
    ux, uy = cos(angle), sin(angle)
    along = x1 * ux + x2 * uy
    if along <= 0.0:
        return hypot(x1, x2)
    return abs(x1 * uy - x2 * ux)


def rho(domain, p):
    """Distance from ``p`` to the boundary of the wedge (union of the two edge rays)."""
    if not contains(domain, p):
        raise OutsideDomainError(f"{p!r} is not inside {domain!r}")
    x1, x2 = p
    lo, hi = domain.edge_angles
    return min(_distance_to_ray(x1, x2, lo), _distance_to_ray(x1, x2, hi))


def rho_many(domain, x1, x2):
    """Vectorised boundary distance; no membership check."""
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    r = np.hypot(x1, x2)
    out = None
    for angle in domain.edge_angles:
        ux, uy = cos(angle), sin(angle)
        along = x1 * ux + x2 * uy
        d = np.where(along > 0.0, np.abs(x1 * uy - x2 * ux), r)
        out = d if out is None else np.minimum(out, d)
    return out


def weights(tau, domain, p):
    """Vertex and boundary weights ``R = min(|p|/sqrt(tau), 1)`` and ``J = min(rho(p)/sqrt(tau), 1)``."""
    if not tau > 0:
        raise ValueError("tau must be positive")
    s = sqrt(tau)
    return WeightPair(R=min(rho0(p) / s, 1.0), J=min(rho(domain, p) / s, 1.0))

