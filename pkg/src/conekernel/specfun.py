"""Special functions used by the exponent and kernel modules.

Only what the rest of the package needs is provided:

* ``bessel_i_scaled`` -- ``exp(-z) * I_nu(z)`` for real ``nu >= 0``, ``z >= 0``,
  vectorised over both arguments;
* ``legendre_p`` -- the Legendre function ``P_nu(x)`` of real degree;
* ``bessel_j0`` / ``bessel_j0_first_zero`` -- ``J_0`` and its first positive root.

The scaled Bessel function switches between three evaluation routes:

=====================================  =====================================
region                                 method
=====================================  =====================================
``z <= 20`` or ``z <= 2 nu^2 < 128``   ascending series (all terms positive)
``nu < 8``, larger ``z``               Hankel large-argument expansion
``nu >= 8``, ``z > 20``                Debye uniform expansion in ``nu``
=====================================  =====================================

The boundaries are fixed constants; the recurrence test in the suite is what
validates them.
"""
from fractions import Fraction
from math import lgamma, pi

import numpy as np

__all__ = [
    "bessel_i_scaled",
    "legendre_p",
    "bessel_j0",
    "bessel_j0_first_zero",
    "SpecialFunctionError",
]

DEBYE_MIN_ORDER = 8.0
SERIES_MIN_Z = 20.0
_SERIES_TERMS = 320
_HANKEL_TERMS = 60
_DEBYE_TERMS = 14


class SpecialFunctionError(ArithmeticError):
    """Raised when a series fails to converge inside its supported range."""


def _debye_polynomials(n):
    """Coefficients of the Debye polynomials ``u_0 .. u_{n-1}`` (ascending powers of t).

    Uses the recurrence
    ``u_{k+1}(t) = t^2 (1 - t^2) u_k'(t) / 2 + 1/8 * int_0^t (1 - 5 s^2) u_k(s) ds``
    in exact rational arithmetic.
    """
    polys = [[Fraction(1)]]
    for _ in range(n - 1):
        u = polys[-1]
        deg = len(u) - 1
        out = [Fraction(0)] * (deg + 4)
        # t^2 (1 - t^2) u'(t) / 2
        for j in range(1, deg + 1):
            c = u[j] * j / 2
            out[j + 1] += c
            out[j + 3] -= c
        # 1/8 int_0^t (1 - 5 s^2) u(s) ds
        for j in range(deg + 1):
            out[j + 1] += u[j] / 8 / (j + 1)
            out[j + 3] -= 5 * u[j] / 8 / (j + 3)
        polys.append(out)
    return [np.array([float(c) for c in p]) for p in polys]


_DEBYE_U = _debye_polynomials(_DEBYE_TERMS)


def _series_scaled(nu, z):
    # log of the k = 0 term, then term ratios (z/2)^2 / ((k+1)(k+1+nu)); no cancellation.
    lgam = np.array([lgamma(v + 1.0) for v in nu])
    log_t0 = nu * np.log(z / 2.0) - lgam - z
    q = (z / 2.0) ** 2
    # Sum relative to the first term; the prefactor stays in log form.
    term = np.ones_like(z)
    total = np.ones_like(z)
    for k in range(_SERIES_TERMS):
        term = term * q / ((k + 1.0) * (k + 1.0 + nu))
        total = total + term
        if np.all(term <= 1e-17 * total):
            break
    else:
        raise SpecialFunctionError("ascending series for I_nu did not converge")
    return np.exp(log_t0 + np.log(total))


def _hankel_scaled(nu, z):
    mu = 4.0 * nu * nu
    term = np.ones_like(z)
    total = np.ones_like(z)
    active = np.ones(z.shape, dtype=bool)
    for k in range(1, _HANKEL_TERMS):
        nxt = -term * (mu - (2 * k - 1) ** 2) / (8.0 * k * z)
        # stop each element at its smallest term (asymptotic series)
        grow = np.abs(nxt) > np.abs(term)
        active &= ~grow
        term = np.where(active, nxt, 0.0)
        total = total + term
        if not np.any(active & (np.abs(term) > 1e-17 * np.abs(total))):
            break
    return total / np.sqrt(2.0 * pi * z)


def _debye_scaled(nu, z):
    p = z / nu
    root = np.sqrt(1.0 + p * p)
    t = 1.0 / root
    # nu * eta - z, written to avoid cancellation when z >> nu
    expo = nu * nu / (nu * root + z) + nu * np.log(p / (1.0 + root))
    total = np.zeros_like(z)
    inv = 1.0 / nu
    scale = np.ones_like(z)
    for coeffs in _DEBYE_U:
        total = total + np.polynomial.polynomial.polyval(t, coeffs) * scale
        scale = scale * inv
    return np.exp(expo) / np.sqrt(2.0 * pi * nu * root) * total


def bessel_i_scaled(nu, z):
    """Exponentially scaled modified Bessel function ``exp(-z) * I_nu(z)``.

    Parameters
    ----------
    nu : float or array_like
        Order, ``nu >= 0``.
    z : float or array_like
        Argument, ``z >= 0``.

    Returns
    -------
    float or ndarray
        Broadcast result; a Python float when both inputs are scalars.
    """
    nu_a, z_a = np.broadcast_arrays(np.asarray(nu, dtype=float), np.asarray(z, dtype=float))
    if np.any(nu_a < 0) or np.any(z_a < 0) or not (np.all(np.isfinite(nu_a)) and np.all(np.isfinite(z_a))):
        raise ValueError("bessel_i_scaled requires finite nu >= 0 and z >= 0")
    nu_f = nu_a.ravel()
    z_f = z_a.ravel()
    out = np.empty(z_f.shape)

    zero = z_f == 0.0
    out[zero] = np.where(nu_f[zero] == 0.0, 1.0, 0.0)

    small = ~zero & (z_f <= SERIES_MIN_Z)
    debye = ~zero & ~small & (nu_f >= DEBYE_MIN_ORDER)
    series = small | (~zero & ~debye & (z_f <= 2.0 * nu_f * nu_f))
    hankel = ~zero & ~debye & ~series
    if np.any(series):
        out[series] = _series_scaled(nu_f[series], z_f[series])
    if np.any(hankel):
        out[hankel] = _hankel_scaled(nu_f[hankel], z_f[hankel])
    if np.any(debye):
        out[debye] = _debye_scaled(nu_f[debye], z_f[debye])

    if nu_a.ndim == 0:
        return float(out[0])
    return out.reshape(nu_a.shape)


def legendre_p(nu, x, max_terms=100_000):
    """Legendre function of the first kind ``P_nu(x)`` for real degree ``nu >= 0``.

    Summed from the hypergeometric representation
    ``2F1(-nu, nu + 1; 1; (1 - x) / 2)``. Intermediate terms reach roughly
    ``exp(2 nu sqrt((1 - x) / 2))`` before cancelling, so the relative error is
    about ``1e-16`` times that factor. Near the first zero in the degree (where
    the cap eigenvalue solver works) the factor stays below about 100. Close to
    ``x = -1`` the series converges too slowly and ``SpecialFunctionError`` is
    raised.
    """
    if nu < 0:
        raise ValueError("legendre_p requires nu >= 0")
    if not -1.0 < x <= 1.0:
        raise ValueError("legendre_p requires x in (-1, 1]")
    w = (1.0 - x) / 2.0
    term = 1.0
    total = 1.0
    biggest = 1.0
    for k in range(max_terms):
        term *= (k - nu) * (k + nu + 1.0) / ((k + 1.0) ** 2) * w
        total += term
        biggest = max(biggest, abs(term))
        if abs(term) < 1e-14 * abs(total) or abs(term) < 1e-17 * biggest:
            return total
    raise SpecialFunctionError(f"legendre_p({nu}, {x}) did not converge in {max_terms} terms")


def _j0_j1(x):
    """``J_0(x)`` and ``J_1(x)`` from their power series (fine for moderate x)."""
    q = -(x / 2.0) ** 2
    t0 = 1.0
    t1 = x / 2.0
    j0 = t0
    j1 = t1
    for k in range(1, 200):
        t0 *= q / (k * k)
        t1 *= q / (k * (k + 1))
        j0 += t0
        j1 += t1
        if abs(t0) < 1e-18 and abs(t1) < 1e-18:
            break
    return j0, j1


def bessel_j0(x):
    """Bessel function ``J_0(x)`` by its ascending series; intended for ``|x| < 20``."""
    return _j0_j1(float(x))[0]


def bessel_j0_first_zero(start=2.4048, tol=1e-14):
    """First positive zero of ``J_0``, Newton-refined from ``start``."""
    x = start
    for _ in range(50):
        j0, j1 = _j0_j1(x)
        # d/dx J_0 = -J_1
        step = j0 / j1
        x += step
        if abs(step) < tol:
            return x
    raise SpecialFunctionError("Newton iteration for the J_0 zero did not converge")
