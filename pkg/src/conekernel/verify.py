"""Checks of two-weight Gaussian upper bounds against kernel data.

The candidate bound for a Green's function on a plane wedge is

    G(tau, x, y) <= N tau^{-1} R_x^{l+ - 1} R_y^{l- - 1} J_x J_y exp(-sigma |x - y|^2 / tau)

with ``R = min(|.|/sqrt(tau), 1)`` and ``J = min(rho(.)/sqrt(tau), 1)``. Given
kernel samples, :func:`check_upper_bound` returns the smallest ``N`` that makes
the bound hold on the sample. Power-law fits near the vertex and near an edge
measure the decay exponents directly.
"""
from dataclasses import dataclass
from math import atan2, cos, sin, sqrt

import numpy as np
from scipy import stats

from .exponents import kappa_tilde_closed_form
from .geometry import contains_many, rho_many
from .kernels import heat_kernel_wedge, wedge_kernel_grid

__all__ = [
    "BoundSpec",
    "FitReport",
    "BoundCheckReport",
    "BoundCheckError",
    "FitError",
    "bound_rhs",
    "bound_rhs_many",
    "check_upper_bound",
    "fit_gaussian_sigma",
    "fit_vertex_exponent",
    "fit_boundary_exponent",
    "transformed_kernel",
    "transformed_kernel_grid",
    "TransformCheck",
    "constant_coeff_transform_check",
    "cell_averages",
    "compare_density",
    "refinement_samples",
    "feasible_n_sequence",
    "EXCLUDE_BELOW",
]

EXCLUDE_BELOW = 1e-14


class BoundCheckError(ValueError):
    pass


class FitError(ValueError):
    pass


@dataclass(frozen=True)
class BoundSpec:
    lambda_plus: float
    lambda_minus: float
    sigma: float
    N: float = 1.0

    def __post_init__(self):
        if not (self.sigma > 0 and self.N > 0):
            raise ValueError("sigma and N must be positive")

    @property
    def beta1(self):
        return self.lambda_plus - 1.0

    @property
    def beta2(self):
        return self.lambda_minus - 1.0


@dataclass(frozen=True)
class FitReport:
    slope: float
    intercept: float
    r_squared: float
    window: tuple
    n_points: int
    slope_stderr: float = 0.0


@dataclass(frozen=True)
class BoundCheckReport:
    max_ratio: float
    argmax: tuple
    n_evaluated: int
    feasible_N: float
    n_excluded: int = 0


def _weights(tau, domain, x1, x2):
    s = np.sqrt(tau)
    R = np.minimum(np.hypot(x1, x2) / s, 1.0)
    # rho <= |x| holds exactly in theory; clip so rounding cannot break it
    J = np.minimum(np.minimum(rho_many(domain, x1, x2) / s, 1.0), R)
    return R, J


def bound_rhs_many(spec, domain, tau, x1, x2, y1, y2, form="key"):
    """Vectorised right-hand side. ``form="less_rough"`` uses ``R^l`` in place of ``R^(l-1) J``."""
    tau = np.asarray(tau, dtype=float)
    Rx, Jx = _weights(tau, domain, np.asarray(x1, float), np.asarray(x2, float))
    Ry, Jy = _weights(tau, domain, np.asarray(y1, float), np.asarray(y2, float))
    d2 = (np.asarray(x1) - y1) ** 2 + (np.asarray(x2) - y2) ** 2
    gauss = spec.N / tau * np.exp(-spec.sigma * d2 / tau)
    # both forms share one evaluation order so that J <= R carries over exactly
    if form == "key":
        return gauss * Rx**spec.beta1 * Ry**spec.beta2 * Jx * Jy
    if form == "less_rough":
        return gauss * Rx**spec.beta1 * Ry**spec.beta2 * Rx * Ry
    raise ValueError(f"unknown bound form {form!r}")


def bound_rhs(spec, domain, tau, x, y, form="key"):
    """Right-hand side of the two-weight bound at a single ``(tau, x, y)``."""
    if not tau > 0:
        raise ValueError("tau must be positive")
    if not (contains_many(domain, *x) and contains_many(domain, *y)):
        raise ValueError("x and y must lie inside the domain")
    return float(bound_rhs_many(spec, domain, tau, x[0], x[1], y[0], y[1], form))


def check_upper_bound(samples, spec, domain, exclude_below=EXCLUDE_BELOW):
    """Smallest ``N`` for which the bound (with ``spec.N`` ignored) covers ``samples``.

    ``samples`` is an iterable of ``(tau, x, y, G)``. Samples with ``G`` below
    ``exclude_below`` times the largest sampled ``G`` are skipped.
    """
    rows = list(samples)
    if not rows:
        raise BoundCheckError("no samples to check")
    tau = np.array([r[0] for r in rows], dtype=float)
    x = np.array([tuple(r[1]) for r in rows], dtype=float)
    y = np.array([tuple(r[2]) for r in rows], dtype=float)
    g = np.array([r[3] for r in rows], dtype=float)
    if np.any(g < 0) or not np.all(np.isfinite(g)):
        raise BoundCheckError("kernel samples must be finite and non-negative")
    unit = BoundSpec(spec.lambda_plus, spec.lambda_minus, spec.sigma, 1.0)
    rhs = bound_rhs_many(unit, domain, tau, x[:, 0], x[:, 1], y[:, 0], y[:, 1])
    keep = g >= exclude_below * g.max()
    bad = keep & (rhs == 0.0) & (g > 0.0)
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        raise BoundCheckError(f"bound vanishes at sample {i} where G = {g[i]:.3e} (boundary cell artifact?)")
    ratio = np.where(keep, g / np.where(rhs > 0, rhs, 1.0), -np.inf)
    i = int(np.argmax(ratio))
    return BoundCheckReport(
        max_ratio=float(ratio[i]),
        argmax=(float(tau[i]), tuple(x[i]), tuple(y[i])),
        n_evaluated=int(keep.sum()),
        feasible_N=float(ratio[i]),
        n_excluded=int((~keep).sum()),
    )


def _linear_fit(u, v, min_points=5):
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    ok = np.isfinite(u) & np.isfinite(v)
    u, v = u[ok], v[ok]
    if u.size < min_points:
        raise FitError(f"need at least {min_points} usable points, got {u.size}")
    if np.ptp(u) == 0:
        raise FitError("abscissa has no spread")
    res = stats.linregress(u, v)
    return FitReport(
        slope=float(res.slope),
        intercept=float(res.intercept),
        r_squared=float(res.rvalue**2),
        window=(float(u.min()), float(u.max())),
        n_points=int(u.size),
        slope_stderr=float(res.stderr),
    )


def fit_gaussian_sigma(tau, x_points, y, values, d=2):
    """Regress ``log G + (d/2) log tau`` on ``|x - y|^2 / tau``; the slope estimates ``-sigma``."""
    x_points = np.asarray(x_points, dtype=float)
    values = np.asarray(values, dtype=float)
    q = ((x_points - np.asarray(y, dtype=float)) ** 2).sum(axis=1) / tau
    with np.errstate(divide="ignore"):
        lg = np.log(values) + 0.5 * d * np.log(tau)
    lg[values <= 0] = np.nan
    return _linear_fit(q, lg)


def fit_vertex_exponent(sampler, domain, tau, y, lo=1e-3, hi=1e-1, n_points=16):
    """Slope of ``log G`` against ``log |x|`` with ``x`` on the centre ray near the vertex.

    ``sampler(tau, x, y)`` returns the kernel; radii run log-uniformly over
    ``[lo, hi] * sqrt(tau)``.
    """
    if n_points < 12 or hi / lo < 10:
        raise FitError("vertex fit needs >= 12 points over at least one decade")
    radii = np.geomspace(lo, hi, n_points) * sqrt(tau)
    vals = np.array([sampler(tau, domain.point(r, 0.0), y) for r in radii])
    with np.errstate(divide="ignore"):
        return _linear_fit(np.log(radii), np.where(vals > 0, np.log(vals), np.nan))


def fit_boundary_exponent(sampler, domain, tau, y, radius=None, lo=1e-3, hi=1e-1, n_points=16, edge="lower"):
    """Slope of ``log G`` against ``log rho(x)`` as ``x`` approaches an edge at fixed ``|x|``."""
    s = sqrt(tau)
    radius = 4.0 * s if radius is None else radius
    if radius < 4.0 * s:
        raise FitError("boundary fit must stay at least 4 sqrt(tau) from the vertex")
    if n_points < 12 or hi / lo < 10:
        raise FitError("boundary fit needs >= 12 points over at least one decade")
    dists = np.geomspace(lo, hi, n_points) * s
    phis = np.arcsin(dists / radius)
    if edge == "lower":
        pts = [domain.edge_point(radius, p) for p in phis]
    else:
        pts = [domain.edge_point(radius, domain.kappa - p) for p in phis]
    rho = rho_many(domain, np.array([p.x1 for p in pts]), np.array([p.x2 for p in pts]))
    vals = np.array([sampler(tau, p, y) for p in pts])
    with np.errstate(divide="ignore"):
        return _linear_fit(np.log(rho), np.where(vals > 0, np.log(vals), np.nan))


def _image_wedge(A, kappa, alpha):
    """Opening, orientation and ``B^{-1}`` of the image of the wedge under ``x -> B^{-1} x``."""
    Binv = np.linalg.inv(A.sqrt())
    lo = alpha - kappa / 2.0
    v = Binv @ np.array([cos(lo), sin(lo)])
    kt = kappa_tilde_closed_form(A, kappa, alpha)
    return kt, atan2(v[1], v[0]) + kt / 2.0, Binv


def transformed_kernel(A, kappa, alpha, tau, x, y, ctrl=None):
    """Exact kernel of ``d/dt - sum a_ij D_ij`` (constant ``A``) on ``Wedge2D(kappa, alpha)``.

    Maps both points through ``B^{-1}`` (``B^2 = A``) onto the image wedge of
    opening ``kappa_tilde`` and divides the heat kernel there by ``det B``.
    """
    kt, at, Binv = _image_wedge(A, kappa, alpha)
    xp = Binv @ np.asarray(tuple(x), dtype=float)
    yp = Binv @ np.asarray(tuple(y), dtype=float)
    return heat_kernel_wedge(kt, tau, tuple(xp), tuple(yp), ctrl, alpha=at) / sqrt(A.det)


def transformed_kernel_grid(A, kappa, alpha, tau, x1, x2, y, ctrl=None):
    kt, at, Binv = _image_wedge(A, kappa, alpha)
    p1 = Binv[0, 0] * np.asarray(x1) + Binv[0, 1] * np.asarray(x2)
    p2 = Binv[1, 0] * np.asarray(x1) + Binv[1, 1] * np.asarray(x2)
    yp = Binv @ np.asarray(tuple(y), dtype=float)
    return wedge_kernel_grid(kt, tau, p1, p2, yp[0], yp[1], ctrl, alpha=at) / sqrt(A.det)


@dataclass(frozen=True)
class TransformCheck:
    relative_deviation: float
    z: float
    exact: float
    estimate: float
    stderr: float


def constant_coeff_transform_check(A, kappa, alpha, tau, x, y, estimate=None, stderr=None, ctrl=None):
    """Compare a Monte Carlo cell estimate at ``x`` with the transformed exact kernel.

    With ``estimate`` omitted only the exact value is returned (as ``exact``).
    """
    exact = transformed_kernel(A, kappa, alpha, tau, x, y, ctrl)
    if estimate is None:
        return TransformCheck(0.0, 0.0, exact, exact, 0.0)
    z = (estimate - exact) / stderr if stderr else float("nan")
    return TransformCheck((estimate - exact) / exact, z, exact, estimate, stderr or 0.0)


def cell_averages(kernel_xy, estimate, order=4):
    """Exact cell averages of ``kernel_xy(x1, x2)`` over the polar cells of ``estimate``."""
    gx, gw = np.polynomial.legendre.leggauss(order)
    re, te = estimate.r_edges, estimate.theta_edges
    out = np.zeros((len(re) - 1, len(te) - 1))
    for i in range(len(re) - 1):
        hr = 0.5 * (re[i + 1] - re[i])
        r = hr * gx + 0.5 * (re[i + 1] + re[i])
        for j in range(len(te) - 1):
            ht = 0.5 * (te[j + 1] - te[j])
            th = ht * gx + 0.5 * (te[j + 1] + te[j]) + estimate.domain.alpha
            R, T = np.meshgrid(r, th, indexing="ij")
            W = np.outer(gw * r * hr, gw * ht)
            out[i, j] = float((kernel_xy(R * np.cos(T), R * np.sin(T)) * W).sum() / W.sum())
    return out


def compare_density(estimate, exact, min_count=50, n_sigma=3.0):
    """Fraction of well-populated cells whose estimate lies within ``n_sigma`` errors of ``exact``."""
    mask = estimate.counts >= min_count
    if not np.any(mask):
        raise ValueError(f"no cell has at least {min_count} counts")
    z = (estimate.values - exact)[mask] / estimate.stderr[mask]
    return float(np.mean(np.abs(z) <= n_sigma)), z


def refinement_samples(domain, tau, y, level, envelope_exponent, kernel, base_decades=3.0, per_decade=4):
    """Kernel samples on a grid refined ``level`` times towards the vertex and an edge.

    Level ``k`` reaches radius ``sqrt(tau) * 10^(-D_k)`` on the centre ray with
    ``D_k = base_decades (k + 1) / envelope_exponent``: each refinement lowers the
    candidate envelope ``|x|^envelope_exponent`` at the innermost point by another
    factor ``10^base_decades``. Towards the lower edge (at ``|x| = 2 sqrt(tau)``) the
    boundary distance reaches ``sqrt(tau) * 10^(-base_decades (k + 1))``. A fixed
    coarse interior grid is always included. ``kernel(tau, x1, x2, y)`` is vectorised.
    """
    s = sqrt(tau)
    depth_v = base_decades * (level + 1) / envelope_exponent
    depth_b = base_decades * (level + 1)
    radii = s * 10.0 ** -np.linspace(0.0, depth_v, int(np.ceil(depth_v * per_decade)) + 1)
    ang0 = domain.alpha
    pts = [np.column_stack([radii * np.cos(ang0), radii * np.sin(ang0)])]
    rb = 2.0 * s
    dists = s * 10.0 ** -np.linspace(0.0, depth_b, int(np.ceil(depth_b * per_decade)) + 1)
    phis = np.arcsin(dists / rb) + domain.alpha - domain.kappa / 2.0
    pts.append(np.column_stack([rb * np.cos(phis), rb * np.sin(phis)]))
    gr = s * np.array([0.25, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0])
    gt = np.linspace(-0.45, 0.45, 7) * domain.kappa + domain.alpha
    R, T = np.meshgrid(gr, gt, indexing="ij")
    pts.append(np.column_stack([(R * np.cos(T)).ravel(), (R * np.sin(T)).ravel()]))
    xs = np.vstack(pts)
    xs = xs[contains_many(domain, xs[:, 0], xs[:, 1])]
    g = kernel(tau, xs[:, 0], xs[:, 1], y)
    return [(tau, (float(a), float(b)), tuple(y), float(v)) for (a, b), v in zip(xs, g)]


def feasible_n_sequence(domain, tau, y, spec, levels, kernel=None, envelope_exponent=None):
    """``feasible_N`` on successive refinement levels of :func:`refinement_samples`."""
    if kernel is None:

        def kernel(tau_, x1, x2, y_):
            return wedge_kernel_grid(domain.kappa, tau_, x1, x2, y_[0], y_[1], alpha=domain.alpha)

    lam = spec.lambda_plus if envelope_exponent is None else envelope_exponent
    return [
        check_upper_bound(refinement_samples(domain, tau, y, k, lam, kernel), spec, domain).feasible_N
        for k in range(levels)
    ]

