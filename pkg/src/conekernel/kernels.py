"""Exact Dirichlet heat kernels for ``u_t = Laplacian(u)`` on plane wedges.

The wedge kernel is the classical eigenfunction series

    G = exp(-(r - r')^2 / (4 tau)) / (kappa tau)
        * sum_{n >= 1} [exp(-z) I_{n pi/kappa}(z)] sin(n pi th/kappa) sin(n pi th'/kappa)

with ``z = r r' / (2 tau)`` and angles ``th, th'`` measured from the clockwise
edge. The free-space and method-of-images kernels are closed forms used to
check it.
"""
from dataclasses import dataclass
from math import exp, pi, sqrt

import numpy as np

from .geometry import Point2, Wedge2D, contains, contains_many
from .specfun import bessel_i_scaled

__all__ = [
    "SeriesControl",
    "KernelQuery",
    "SeriesTruncationError",
    "heat_kernel_free",
    "heat_kernel_halfplane",
    "heat_kernel_wedge",
    "wedge_kernel_grid",
    "polar_nodes",
    "kernel_mass",
    "chapman_kolmogorov",
]

_BLOCK = 16


class SeriesTruncationError(ArithmeticError):
    """The Bessel series needed more than ``max_terms`` terms."""

    def __init__(self, message, partial_sum, last_term):
        super().__init__(message)
        self.partial_sum = partial_sum
        self.last_term = last_term


@dataclass(frozen=True)
class SeriesControl:
    rel_tol: float = 1e-10
    max_terms: int = 100_000

    def __post_init__(self):
        if not 0 < self.rel_tol < 1:
            raise ValueError("rel_tol must lie in (0, 1)")
        if self.max_terms < 1:
            raise ValueError("max_terms must be >= 1")


@dataclass(frozen=True)
class KernelQuery:
    tau: float
    x: Point2
    y: Point2


def heat_kernel_free(d, tau, x, y):
    """Free-space kernel ``(4 pi tau)^(-d/2) exp(-|x - y|^2 / (4 tau))``."""
    if not tau > 0:
        raise ValueError("tau must be positive")
    xa = np.asarray(tuple(x), dtype=float)
    ya = np.asarray(tuple(y), dtype=float)
    if xa.shape != (d,) or ya.shape != (d,):
        raise ValueError(f"points must have {d} components")
    diff = xa - ya
    return (4.0 * pi * tau) ** (-d / 2.0) * exp(-float(diff @ diff) / (4.0 * tau))


def heat_kernel_halfplane(tau, x, y):
    """Dirichlet kernel on the right half-plane ``x1 > 0`` by the method of images."""
    if not tau > 0:
        raise ValueError("tau must be positive")
    x1, x2 = x
    y1, y2 = y
    d2 = (x1 - y1) ** 2 + (x2 - y2) ** 2
    # image of y across x1 = 0; the difference of exponentials is taken with expm1
    # so boundary-adjacent values keep their relative precision
    d2_img = (x1 + y1) ** 2 + (x2 - y2) ** 2
    return -exp(-d2 / (4.0 * tau)) * np.expm1(-(d2_img - d2) / (4.0 * tau)) / (4.0 * pi * tau)


def _edge_angles(kappa, alpha, x1, x2):
    """Angle from the clockwise edge, in ``(0, kappa)`` for interior points."""
    rel = np.arctan2(x2, x1) - alpha
    rel = np.pi - np.mod(np.pi - rel, 2.0 * np.pi)
    return rel + kappa / 2.0


def _series(kappa, tau, r, th, rp, thp, ctrl):
    """Vectorised series over broadcastable polar coordinates."""
    r, th, rp, thp = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (r, th, rp, thp)))
    shape = r.shape
    r, th, rp, thp = (v.ravel() for v in (r, th, rp, thp))
    z = r * rp / (2.0 * tau)
    k = pi / kappa
    # |sin(n k th)| <= min(1, n k dist-to-nearest-edge), used for the truncation envelope
    e1 = np.minimum(th, kappa - th) * k
    e2 = np.minimum(thp, kappa - thp) * k
    total = np.zeros(r.shape)
    done = np.zeros(r.shape, dtype=bool)
    n0 = 1
    last = np.zeros(r.shape)
    while True:
        idx = np.flatnonzero(~done)
        if idx.size == 0:
            break
        if n0 > ctrl.max_terms:
            raise SeriesTruncationError(
                f"wedge series exceeded max_terms={ctrl.max_terms}",
                partial_sum=total[idx].copy(),
                last_term=last[idx].copy(),
            )
        n = np.arange(n0, min(n0 + _BLOCK, ctrl.max_terms + 1))
        nu = n * k
        iv = bessel_i_scaled(nu[None, :], z[idx, None])
        block = iv * np.sin(np.outer(th[idx], nu)) * np.sin(np.outer(thp[idx], nu))
        total[idx] += block.sum(axis=1)
        env = iv[:, -1] * np.minimum(1.0, n[-1] * e1[idx]) * np.minimum(1.0, n[-1] * e2[idx])
        last[idx] = env
        # iv is decreasing in the order, so once the envelope is negligible and the
        # Bessel factor is past its Gaussian regime (order^2 > 2 z) the tail is too
        finished = (env <= ctrl.rel_tol * np.abs(total[idx])) & (nu[-1] ** 2 > 2.0 * z[idx])
        finished |= iv[:, -1] == 0.0
        done[idx[finished]] = True
        n0 = n[-1] + 1
    g = np.exp(-((r - rp) ** 2) / (4.0 * tau)) / (kappa * tau) * total
    return np.maximum(g, 0.0).reshape(shape)


def heat_kernel_wedge(kappa, tau, x, y, ctrl=None, alpha=0.0):
    """Dirichlet heat kernel of the wedge ``Wedge2D(kappa, alpha)`` at ``(tau, x, y)``."""
    ctrl = ctrl or SeriesControl()
    if not tau > 0:
        raise ValueError("tau must be positive")
    domain = Wedge2D(kappa, alpha)
    for p in (x, y):
        if not contains(domain, p):
            raise ValueError(f"{p!r} is not inside {domain!r}")
    x1, x2 = x
    y1, y2 = y
    th = _edge_angles(kappa, domain.alpha, x1, x2)
    thp = _edge_angles(kappa, domain.alpha, y1, y2)
    return float(_series(kappa, tau, np.hypot(x1, x2), th, np.hypot(y1, y2), thp, ctrl))


def wedge_kernel_grid(kappa, tau, x1, x2, y1, y2, ctrl=None, alpha=0.0):
    """Vectorised wedge kernel over broadcastable coordinate arrays.

    Points outside the open wedge evaluate to 0.
    """
    ctrl = ctrl or SeriesControl()
    domain = Wedge2D(kappa, alpha)
    x1, x2, y1, y2 = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (x1, x2, y1, y2)))
    inside = contains_many(domain, x1, x2) & contains_many(domain, y1, y2)
    out = np.zeros(x1.shape)
    if np.any(inside):
        th = _edge_angles(kappa, domain.alpha, x1[inside], x2[inside])
        thp = _edge_angles(kappa, domain.alpha, y1[inside], y2[inside])
        out[inside] = _series(
            kappa, tau, np.hypot(x1[inside], x2[inside]), th, np.hypot(y1[inside], y2[inside]), thp, ctrl
        )
    return out


def _panels(lo, hi, width):
    n = max(1, int(np.ceil((hi - lo) / width)))
    return np.linspace(lo, hi, n + 1)


def polar_nodes(kappa, tau, centers, alpha=0.0, order=8, grade_levels=16, reach=None):
    """Tensor Gauss--Legendre nodes covering the wedge where kernels centred at ``centers`` live.

    Radial panels have width ``sqrt(tau)`` on ``[0, r_max]`` with
    ``r_max = max |center| + 8 sqrt(tau)`` (``reach`` replaces ``sqrt(tau)`` in
    ``r_max`` when given) and are graded geometrically towards the vertex.
    Angular panels are refined near each centre. Returns
    ``(x1, x2, weight)`` with the polar Jacobian folded into the weights.
    """
    s = sqrt(tau)
    radii = [float(np.hypot(*c)) for c in centers]
    r_max = max(radii) + 8.0 * (s if reach is None else reach)
    edges = _panels(0.0, r_max, s)
    first = edges[1]
    graded = first * 0.5 ** np.arange(grade_levels, 0, -1)
    r_edges = np.concatenate([[0.0], graded, edges[1:]])

    t_edges = set(np.linspace(0.0, kappa, max(2, int(np.ceil(kappa / 0.4))) + 1).tolist())
    for c, rc in zip(centers, radii):
        thc = float(_edge_angles(kappa, alpha, *c))
        half = min(kappa, 8.0 * s / max(rc, 1e-300))
        step = max(min(0.4, s / max(rc, 1e-300)), kappa / 2000.0)
        lo, hi = max(0.0, thc - half), min(kappa, thc + half)
        t_edges.update(_panels(lo, hi, step).tolist())
    t_edges = np.array(sorted(t_edges))

    gx, gw = np.polynomial.legendre.leggauss(order)

    def nodes(edges_):
        a, b = edges_[:-1, None], edges_[1:, None]
        pts = 0.5 * (b - a) * gx[None, :] + 0.5 * (a + b)
        wts = 0.5 * (b - a) * gw[None, :]
        return pts.ravel(), wts.ravel()

    r, wr = nodes(r_edges)
    t, wt = nodes(t_edges)
    R, T = np.meshgrid(r, t, indexing="ij")
    W = np.outer(wr * r, wt)
    ang = T + alpha - kappa / 2.0
    return R * np.cos(ang), R * np.sin(ang), W


def kernel_mass(kappa, tau, y, ctrl=None, alpha=0.0, order=8):
    """Total mass ``int G(tau, x, y) dx`` (survival probability from ``y``)."""
    x1, x2, w = polar_nodes(kappa, tau, [tuple(y)], alpha=alpha, order=order)
    y1, y2 = y
    g = wedge_kernel_grid(kappa, tau, x1, x2, y1, y2, ctrl, alpha=alpha)
    return float(np.sum(g * w))


def chapman_kolmogorov(kappa, tau1, tau2, x, y, ctrl=None, alpha=0.0, order=8):
    """``int G(tau1, x, z) G(tau2, z, y) dz`` together with ``G(tau1 + tau2, x, y)``."""
    z1, z2, w = polar_nodes(
        kappa, min(tau1, tau2), [tuple(x), tuple(y)], alpha=alpha, order=order, reach=sqrt(max(tau1, tau2))
    )
    x1, x2 = x
    y1, y2 = y
    ga = wedge_kernel_grid(kappa, tau1, x1, x2, z1, z2, ctrl, alpha=alpha)
    gb = wedge_kernel_grid(kappa, tau2, z1, z2, y1, y2, ctrl, alpha=alpha)
    composed = float(np.sum(ga * gb * w))
    direct = heat_kernel_wedge(kappa, tau1 + tau2, x, y, ctrl, alpha=alpha)
    return composed, direct
