"""Critical vertex-decay exponents of Dirichlet heat kernels on cones.

For ``d = 2`` and constant coefficients the exponent is ``pi / kappa_tilde``,
where ``kappa_tilde`` is the opening of the image wedge under the linear map
that turns the coefficient matrix into the identity. Three routes to
``kappa_tilde`` are kept side by side so they can check each other:

* :func:`kappa_tilde_closed_form` -- arctangent formula in the rotated coefficients;
* :func:`kappa_tilde_quadrature` -- area of the image sector inside the unit disc;
* :func:`kappa_tilde_geometric` -- angles of the mapped edge rays.

The eigenvalue-based formulas cover general dimension, including the
lower bounds available for time-dependent coefficients.
"""
import warnings
from dataclasses import dataclass
from enum import Enum
from math import atan, atan2, cos, log, pi, sin, sqrt, tan, tau as TWO_PI

import numpy as np
from scipy import integrate

from .specfun import bessel_j0_first_zero, legendre_p

__all__ = [
    "SpdMatrix2",
    "RotatedCoefficients",
    "ParabolicityBounds",
    "ExponentKind",
    "ExponentResult",
    "EigenvalueResult",
    "NotSpdError",
    "BracketError",
    "rotate_coefficients",
    "kappa_tilde_closed_form",
    "kappa_tilde_quadrature",
    "kappa_tilde_geometric",
    "kappa_tilde_diagonal",
    "lambda_c_constant",
    "lambda_c_heat_2d",
    "lambda_c_laplacian_general",
    "lambda_lb_improved",
    "lambda_lb_previous",
    "bound_gap",
    "first_dirichlet_eigenvalue_arc",
    "first_dirichlet_eigenvalue_cap",
    "cap_eigenvalue_bounds",
    "random_spd",
]


class NotSpdError(ValueError):
    code = "NOT_SPD"


class BracketError(ArithmeticError):
    """No sign change found while scanning for a root."""


@dataclass(frozen=True)
class SpdMatrix2:
    """Symmetric positive-definite ``[[a, b], [b, c]]``."""

    a: float
    b: float
    c: float

    def __post_init__(self):
        if not (self.a > 0 and self.a * self.c - self.b * self.b > 0):
            raise NotSpdError(f"matrix [[{self.a}, {self.b}], [{self.b}, {self.c}]] is not positive definite")

    @classmethod
    def identity(cls):
        return cls(1.0, 0.0, 1.0)

    @classmethod
    def from_array(cls, m):
        m = np.asarray(m, dtype=float)
        if m.shape != (2, 2) or m[0, 1] != m[1, 0]:
            raise NotSpdError("expected a symmetric 2x2 matrix")
        return cls(float(m[0, 0]), float(m[0, 1]), float(m[1, 1]))

    @property
    def det(self):
        return self.a * self.c - self.b * self.b

    @property
    def trace(self):
        return self.a + self.c

    def as_array(self):
        return np.array([[self.a, self.b], [self.b, self.c]])

    def eigvals(self):
        """Eigenvalues ``(lo, hi)`` from the 2x2 closed form."""
        half_tr = 0.5 * (self.a + self.c)
        disc = sqrt(0.25 * (self.a - self.c) ** 2 + self.b * self.b)
        hi = half_tr + disc
        # det / hi avoids cancellation in half_tr - disc for ill-conditioned matrices
        return self.det / hi, hi

    def sqrt(self):
        """Symmetric square root ``B`` with ``B @ B == A``.

        For 2x2 SPD matrices ``sqrt(A) = (A + sqrt(det A) I) / sqrt(tr A + 2 sqrt(det A))``.
        """
        s = sqrt(self.det)
        t = sqrt(self.a + self.c + 2.0 * s)
        return np.array([[self.a + s, self.b], [self.b, self.c + s]]) / t


@dataclass(frozen=True)
class RotatedCoefficients:
    a_bar: float
    b_bar: float
    c_bar: float

    def as_matrix(self):
        return SpdMatrix2(self.a_bar, self.b_bar, self.c_bar)


@dataclass(frozen=True)
class ParabolicityBounds:
    nu1: float
    nu2: float

    def __post_init__(self):
        if not 0 < self.nu1 <= self.nu2:
            raise ValueError(f"need 0 < nu1 <= nu2, got nu1={self.nu1}, nu2={self.nu2}")

    @property
    def ratio(self):
        return self.nu1 / self.nu2


class ExponentKind(str, Enum):
    EXACT = "exact"
    LOWER_BOUND = "lower_bound"


@dataclass(frozen=True)
class ExponentResult:
    value: float
    kind: ExponentKind
    formula: str


@dataclass(frozen=True)
class EigenvalueResult:
    Lambda: float
    lower: float
    upper: float


def _check_kappa(kappa):
    if not 0.0 < kappa < TWO_PI:
        raise ValueError(f"kappa must lie in (0, 2*pi), got {kappa!r}")


def rotate_coefficients(A, alpha):
    """``R(alpha) A R(alpha)^T`` with ``R(alpha) = [[cos, sin], [-sin, cos]]``."""
    c, s = cos(alpha), sin(alpha)
    a, b, cc = A.a, A.b, A.c
    a_bar = c * c * a + 2 * c * s * b + s * s * cc
    c_bar = s * s * a - 2 * c * s * b + c * c * cc
    b_bar = c * s * (cc - a) + (c * c - s * s) * b
    return RotatedCoefficients(a_bar, b_bar, c_bar)


def kappa_tilde_closed_form(A, kappa, alpha=0.0):
    """Opening of the image wedge from the arctangent formula.

    ``pi - atan((c cot(k/2) + b) / sqrt(det)) - atan((c cot(k/2) - b) / sqrt(det))``
    with ``b, c`` the rotated coefficients. ``cot(kappa/2)`` is finite and
    continuous on ``(0, 2 pi)`` so no branch handling is needed.
    """
    _check_kappa(kappa)
    rot = rotate_coefficients(A, alpha)
    half = kappa / 2.0
    cot = cos(half) / sin(half)
    sd = sqrt(A.det)
    return pi - atan((rot.c_bar * cot + rot.b_bar) / sd) - atan((rot.c_bar * cot - rot.b_bar) / sd)


def kappa_tilde_quadrature(A, kappa, alpha=0.0, epsabs=1e-13):
    """Image-wedge opening as twice the area of the image sector in the unit disc.

    Integrates ``(v_t^T A^{-1} v_t)^{-1} / sqrt(det A)`` over the edge angles.
    """
    _check_kappa(kappa)
    det = A.det
    # A^{-1} = [[c, -b], [-b, a]] / det, so v^T A^{-1} v = (c cos^2 - 2 b cos sin + a sin^2) / det
    a, b, c = A.a, A.b, A.c

    def integrand(t):
        ct, st = cos(t), sin(t)
        return det / (c * ct * ct - 2.0 * b * ct * st + a * st * st)

    # Split at the centre ray and at the directions where the integrand peaks
    # (the major eigenvector of A) so QUADPACK sees the narrow bumps.
    lo, hi = alpha - kappa / 2.0, alpha + kappa / 2.0
    _, vec = np.linalg.eigh(A.as_array())
    major = atan2(vec[1, 1], vec[0, 1])
    points = [alpha]
    for k in range(-3, 4):
        p = major + k * pi
        if lo < p < hi:
            points.append(p)
    points = sorted(set(points))
    edges = [lo] + points + [hi]
    total = 0.0
    for x0, x1 in zip(edges[:-1], edges[1:]):
        if x1 <= x0:
            continue
        # epsrel sits at the round-off floor; QUADPACK then warns about round-off
        # even on converged panels, so rely on the returned error estimate instead
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            val, err = integrate.quad(integrand, x0, x1, epsabs=epsabs, epsrel=1e-14, limit=500)
        if not err < 1e-10:
            raise ArithmeticError(f"quadrature did not converge on [{x0}, {x1}] (error estimate {err})")
        total += val
    return total / sqrt(det)


def kappa_tilde_geometric(A, kappa, alpha=0.0):
    """Image-wedge opening by pushing the edge rays through ``B^{-1}``, ``B = sqrt(A)``."""
    _check_kappa(kappa)
    B = A.sqrt()
    Binv = np.linalg.inv(B)

    def image(theta):
        return Binv @ np.array([cos(theta), sin(theta)])

    lo = image(alpha - kappa / 2.0)
    mid = image(alpha)
    hi = image(alpha + kappa / 2.0)

    def ccw(u, v):
        # counter-clockwise angle from u to v; each half-opening is < pi and
        # det(B^{-1}) > 0 keeps orientation, so the result lies in (0, pi)
        ang = atan2(u[0] * v[1] - u[1] * v[0], u[0] * v[0] + u[1] * v[1])
        return ang if ang > 0 else ang + TWO_PI

    return ccw(lo, mid) + ccw(mid, hi)


def kappa_tilde_diagonal(ratio, kappa):
    """``kappa_tilde`` for ``A = diag(a, c)``, ``alpha = 0`` from ``tan(kt/2) = sqrt(a/c) tan(k/2)``.

    At ``kappa = pi`` the continuous limit ``pi`` is returned.
    """
    _check_kappa(kappa)
    if kappa == pi:
        return pi
    half = atan(sqrt(ratio) * tan(kappa / 2.0))
    # tan(kappa/2) < 0 for kappa > pi; move to the (pi/2, pi) branch
    if half < 0:
        half += pi
    return 2.0 * half


def lambda_c_constant(A, kappa, alpha=0.0):
    return ExponentResult(pi / kappa_tilde_closed_form(A, kappa, alpha), ExponentKind.EXACT, "pi/kappa_tilde")


def lambda_c_heat_2d(kappa):
    _check_kappa(kappa)
    return ExponentResult(pi / kappa, ExponentKind.EXACT, "pi/kappa")


def _shifted_root(Lambda, d):
    return sqrt(Lambda + (d - 2) ** 2 / 4.0)


def lambda_c_laplacian_general(Lambda, d):
    """Exact exponent of the heat operator on a cone with cross-section eigenvalue ``Lambda``."""
    if not (Lambda > 0 and d >= 2):
        raise ValueError("need Lambda > 0 and d >= 2")
    return ExponentResult(-(d - 2) / 2.0 + _shifted_root(Lambda, d), ExponentKind.EXACT, "laplacian-eigenvalue")


def lambda_lb_improved(bounds, Lambda, d):
    """Lower bound ``-(d-2)/2 + sqrt(nu1/nu2) sqrt(Lambda + (d-2)^2/4)``."""
    if not (Lambda > 0 and d >= 2):
        raise ValueError("need Lambda > 0 and d >= 2")
    value = -(d - 2) / 2.0 + sqrt(bounds.ratio) * _shifted_root(Lambda, d)
    return ExponentResult(value, ExponentKind.LOWER_BOUND, "two-sided-parabolicity")


def lambda_lb_previous(nu, Lambda, d):
    """Older lower bound ``-d/2 + nu sqrt(Lambda + (d-2)^2/4)`` with ``nu in (0, 1]``."""
    if not 0 < nu <= 1:
        raise ValueError("nu must lie in (0, 1]")
    if not (Lambda > 0 and d >= 2):
        raise ValueError("need Lambda > 0 and d >= 2")
    value = -d / 2.0 + nu * _shifted_root(Lambda, d)
    return ExponentResult(value, ExponentKind.LOWER_BOUND, "single-parabolicity")


def bound_gap(bounds, nu, Lambda, d):
    """Difference between the improved and the older lower bound (at least 1)."""
    if not (0 < nu <= bounds.nu1 <= bounds.nu2 <= 1.0 / nu):
        raise ValueError("need nu <= nu1 <= nu2 <= 1/nu")
    return lambda_lb_improved(bounds, Lambda, d).value - lambda_lb_previous(nu, Lambda, d).value


def first_dirichlet_eigenvalue_arc(kappa):
    """First Dirichlet eigenvalue of ``-d^2/dtheta^2`` on an arc of length ``kappa``."""
    if not 0.0 < kappa <= TWO_PI:
        raise ValueError("kappa must lie in (0, 2*pi]")
    lam = pi * pi / (kappa * kappa)
    return EigenvalueResult(lam, lam, lam)


def cap_eigenvalue_bounds(kappa):
    """Two-sided bound for the first Dirichlet eigenvalue on the cap ``theta < kappa/2`` of S^2.

    ``1 / (2 |log cos(kappa/4)|) <= Lambda <= 4 j0^2 / kappa^2``.
    """
    _check_kappa(kappa)
    j0 = bessel_j0_first_zero()
    lower = 1.0 / (2.0 * abs(log(cos(kappa / 4.0))))
    upper = 4.0 * j0 * j0 / (kappa * kappa)
    return lower, upper


def first_dirichlet_eigenvalue_cap(kappa, nu_min=0.05, nu_max=200.0, tol=1e-10):
    """First Dirichlet eigenvalue ``nu (nu + 1)`` of the spherical cap ``theta < kappa/2``.

    ``nu`` is the smallest positive root of ``P_nu(cos(kappa/2))``, bracketed on a
    geometric scan of ``[nu_min, nu_max]`` and refined by bisection.
    """
    _check_kappa(kappa)
    x = cos(kappa / 2.0)

    def f(nu):
        return legendre_p(nu, x)

    grid = np.geomspace(nu_min, nu_max, 600)
    prev_nu = float(grid[0])
    if f(prev_nu) <= 0:
        raise BracketError(f"P_nu(cos(kappa/2)) already non-positive at nu={nu_min}; scanned [{nu_min}, {nu_max}]")
    lo = hi = None
    for nu in grid[1:]:
        nu = float(nu)
        if f(nu) <= 0:
            lo, hi = prev_nu, nu
            break
        prev_nu = nu
    if lo is None:
        raise BracketError(f"no sign change of P_nu(cos(kappa/2)) on [{nu_min}, {nu_max}]")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if f(mid) > 0:
            lo = mid
        else:
            hi = mid
    nu = float(0.5 * (lo + hi))
    lower, upper = cap_eigenvalue_bounds(kappa)
    return EigenvalueResult(nu * (nu + 1.0), lower, upper)


def random_spd(rng, max_log_ratio=log(100.0)):
    """Random SPD matrix ``R(phi) diag(e^u, e^-u) R(phi)^T e^v``.

    ``u`` is uniform on ``[0, max_log_ratio]`` so the condition number is at most
    ``exp(2 max_log_ratio)``.
    """
    phi = rng.uniform(0.0, pi)
    u = rng.uniform(0.0, max_log_ratio)
    v = rng.uniform(-1.0, 1.0)
    c, s = cos(phi), sin(phi)
    l1, l2 = np.exp(u + v), np.exp(-u + v)
    a = c * c * l1 + s * s * l2
    cc = s * s * l1 + c * c * l2
    b = c * s * (l1 - l2)
    return SpdMatrix2(a, b, cc)

