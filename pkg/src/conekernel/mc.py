"""Monte Carlo Green's functions for ``d/dt - sum a_ij(t) D_ij`` on a wedge.

Paths of ``dX = sigma(t) dW`` with ``sigma sigma^T = 2 A(t)`` are advanced by
Euler--Maruyama steps and killed on leaving the wedge. Survivors are binned on
a polar grid; the histogram divided by ``n_paths * cell area`` estimates
``G(t, s, x, y)`` at the cells.

Reproducibility: paths are processed in fixed blocks of ``BLOCK_SIZE``; block
``b`` draws from a Philox generator keyed by ``(seed, stream, b)``. Results
therefore do not depend on how blocks are spread across threads, and the
integer histograms merge exactly.
"""
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from math import ceil, cos, sin, sqrt
from typing import Callable, Optional

import numpy as np

from .exponents import SpdMatrix2
from .geometry import Wedge2D, contains, signed_angle

__all__ = [
    "BLOCK_SIZE",
    "TimeCoefficients",
    "PolarBinning",
    "McConfig",
    "DensityEstimate",
    "ParabolicityError",
    "hat_coefficients",
    "simulate_killed_density",
    "duality_residual",
    "duality_estimates",
    "cell_around",
    "thread_count",
]

BLOCK_SIZE = 1 << 15
_EIG_SLACK = 1e-12


class ParabolicityError(ValueError):
    """Coefficient matrix left the declared ``[nu1, nu2]`` eigenvalue band."""


@dataclass(frozen=True)
class TimeCoefficients:
    """Time-dependent diffusion matrix ``A(t)`` with declared parabolicity bounds.

    ``evaluator`` maps a time to an :class:`SpdMatrix2`; it is assumed piecewise
    continuous with finitely many jumps per unit time. The bounds are spot-checked
    on ``check_times`` at construction and again at every simulation step.
    """

    evaluator: Callable[[float], SpdMatrix2]
    nu1: float
    nu2: float
    check_times: tuple = tuple(np.linspace(-10.0, 10.0, 201))
    label: str = ""

    def __post_init__(self):
        if not 0 < self.nu1 <= self.nu2:
            raise ValueError("need 0 < nu1 <= nu2")
        for t in self.check_times:
            self.checked(t)

    def __call__(self, t):
        return self.evaluator(t)

    def checked(self, t):
        A = self.evaluator(t)
        lo, hi = A.eigvals()
        if lo < self.nu1 * (1 - _EIG_SLACK) or hi > self.nu2 * (1 + _EIG_SLACK):
            raise ParabolicityError(
                f"A({t}) has eigenvalues ({lo:.6g}, {hi:.6g}) outside [{self.nu1}, {self.nu2}]"
            )
        return A

    @classmethod
    def constant(cls, A, label="constant"):
        lo, hi = A.eigvals()
        return cls(lambda t: A, lo, hi, check_times=(0.0,), label=label)


def hat_coefficients(coeffs):
    """Coefficients of the time-reversed operator, ``t -> A(-t)``."""
    ev = coeffs.evaluator
    return TimeCoefficients(
        lambda t: ev(-t),
        coeffs.nu1,
        coeffs.nu2,
        check_times=tuple(-t for t in coeffs.check_times),
        label=f"hat({coeffs.label})",
    )


@dataclass(frozen=True)
class PolarBinning:
    """Polar histogram edges; angles are measured from the wedge's centre ray."""

    r_edges: tuple
    theta_edges: tuple

    def __post_init__(self):
        r = np.asarray(self.r_edges, dtype=float)
        t = np.asarray(self.theta_edges, dtype=float)
        if r.ndim != 1 or t.ndim != 1 or r.size < 2 or t.size < 2:
            raise ValueError("binning needs at least two radial and two angular edges")
        if np.any(np.diff(r) <= 0) or np.any(np.diff(t) <= 0):
            raise ValueError("bin edges must be strictly increasing")
        if r[0] < 0:
            raise ValueError("radial edges must be non-negative")
        object.__setattr__(self, "r_edges", tuple(float(v) for v in r))
        object.__setattr__(self, "theta_edges", tuple(float(v) for v in t))

    @classmethod
    def regular(cls, r_max, n_r, theta_lo, theta_hi, n_theta, r_min=0.0):
        return cls(tuple(np.linspace(r_min, r_max, n_r + 1)), tuple(np.linspace(theta_lo, theta_hi, n_theta + 1)))

    def areas(self):
        r = np.asarray(self.r_edges)
        t = np.asarray(self.theta_edges)
        return 0.5 * np.outer(np.diff(r * r), np.diff(t))


@dataclass(frozen=True)
class McConfig:
    n_paths: int
    dt: float
    seed: int
    binning: PolarBinning
    bridge: bool = False
    workers: Optional[int] = None
    stream: int = 0

    def __post_init__(self):
        if self.n_paths < 1:
            raise ValueError("n_paths must be >= 1")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")


@dataclass
class DensityEstimate:
    r_edges: np.ndarray
    theta_edges: np.ndarray
    counts: np.ndarray
    n_paths: int
    domain: Wedge2D
    meta: dict = field(default_factory=dict)

    @property
    def total(self):
        return self.n_paths

    @property
    def survivors(self):
        return int(self.meta["survivors"])

    @property
    def areas(self):
        return 0.5 * np.outer(np.diff(self.r_edges**2), np.diff(self.theta_edges))

    @property
    def values(self):
        return self.counts / (self.n_paths * self.areas)

    @property
    def stderr(self):
        p = self.counts / self.n_paths
        return np.sqrt(p * (1.0 - p) / self.n_paths) / self.areas

    def centroids(self):
        """Area centroids of the polar cells as ``(x1, x2)`` arrays."""
        r0, r1 = self.r_edges[:-1, None], self.r_edges[1:, None]
        t0, t1 = self.theta_edges[None, :-1], self.theta_edges[None, 1:]
        rc = 2.0 / 3.0 * (r1**3 - r0**3) / (r1**2 - r0**2)
        tc = 0.5 * (t0 + t1)
        half = 0.5 * (t1 - t0)
        # centroid of an annular sector lies at rc * sin(half)/half along the bisector
        rad = rc * np.sin(half) / half
        ang = tc + self.domain.alpha
        return rad * np.cos(ang), rad * np.sin(ang)

    def cells(self):
        """Rows ``(r_lo, r_hi, theta_lo, theta_hi, count, value, stderr)``."""
        vals, errs = self.values, self.stderr
        for i in range(len(self.r_edges) - 1):
            for j in range(len(self.theta_edges) - 1):
                yield (
                    float(self.r_edges[i]),
                    float(self.r_edges[i + 1]),
                    float(self.theta_edges[j]),
                    float(self.theta_edges[j + 1]),
                    int(self.counts[i, j]),
                    float(vals[i, j]),
                    float(errs[i, j]),
                )


def thread_count(requested=None):
    """Worker threads: explicit request, else ``CONEKERNEL_THREADS``, else CPU count."""
    if requested:
        return max(1, int(requested))
    env = os.environ.get("CONEKERNEL_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _sqrt_2a(A):
    """Symmetric square root of ``2 A`` in closed form."""
    return SpdMatrix2(2 * A.a, 2 * A.b, 2 * A.c).sqrt()


class _Edges:
    """Unit normals of the two boundary lines, pointing into the wedge side of each ray."""

    def __init__(self, domain):
        self.domain = domain
        lo, hi = domain.edge_angles
        self.dirs = [(cos(lo), sin(lo)), (cos(hi), sin(hi))]
        # inward normal: rotate the lower edge by +90 degrees, the upper by -90
        self.normals = [(-sin(lo), cos(lo)), (sin(hi), -cos(hi))]

    def crossing_survival(self, x0, x1, A, dt, u):
        """Keep-mask from the Brownian-bridge crossing probability of each edge ray."""
        keep = np.ones(x0.shape[0], dtype=bool)
        for i, ((ux, uy), (nx, ny)) in enumerate(zip(self.dirs, self.normals)):
            d0 = x0[:, 0] * nx + x0[:, 1] * ny
            d1 = x1[:, 0] * nx + x1[:, 1] * ny
            a_nn = nx * nx * A.a + 2 * nx * ny * A.b + ny * ny * A.c
            p = np.exp(-np.clip(d0 * d1, 0.0, None) / (a_nn * dt))
            # the edge is a ray, not a line: a step is charged to this ray only when its
            # midpoint lies in front of the vertex, so at kappa = pi the two collinear
            # rays split the line instead of counting every crossing twice
            front = (x0[:, 0] + x1[:, 0]) * ux + (x0[:, 1] + x1[:, 1]) * uy > 0
            p = np.where((d0 > 0) & (d1 > 0) & front, p, 0.0)
            keep &= u[:, i] >= p
        return keep


def _inside(domain, x):
    rel = signed_angle(np.arctan2(x[:, 1], x[:, 0]) - domain.alpha)
    nonzero = (x[:, 0] != 0.0) | (x[:, 1] != 0.0)
    return nonzero & (np.abs(rel) < domain.kappa / 2.0)


def _run_block(args):
    coeffs, domain, s, y, steps, h, cfg, block, n = args
    rng = np.random.Generator(np.random.Philox(key=np.array([cfg.seed, (cfg.stream << 32) | block], dtype=np.uint64)))
    edges = _Edges(domain)
    x = np.tile(np.asarray(y, dtype=float), (n, 1))
    near_radius = 4.0 * sqrt(h)
    for k in range(steps):
        A = coeffs.checked(s + k * h)
        sig = _sqrt_2a(A)
        near = np.hypot(x[:, 0], x[:, 1]) < near_radius
        far_idx = np.flatnonzero(~near)
        near_idx = np.flatnonzero(near)
        survivors = []
        if far_idx.size:
            x0 = x[far_idx]
            x1 = x0 + sqrt(h) * rng.standard_normal((far_idx.size, 2)) @ sig.T
            ok = _inside(domain, x1)
            if cfg.bridge:
                ok &= edges.crossing_survival(x0, x1, A, h, rng.random((far_idx.size, 2)))
            x[far_idx] = x1
            survivors.append(far_idx[ok])
        if near_idx.size:
            # near the vertex both edges matter at once; use 4 sub-steps
            sub = h / 4.0
            xs = x[near_idx]
            alive = np.ones(near_idx.size, dtype=bool)
            for _ in range(4):
                x1 = xs + sqrt(sub) * rng.standard_normal(xs.shape) @ sig.T
                ok = _inside(domain, x1)
                if cfg.bridge:
                    ok &= edges.crossing_survival(xs, x1, A, sub, rng.random((xs.shape[0], 2)))
                alive &= ok
                xs = x1
            x[near_idx] = xs
            survivors.append(near_idx[alive])
        keep = np.sort(np.concatenate(survivors)) if survivors else np.empty(0, dtype=int)
        x = x[keep]
        if x.shape[0] == 0:
            break
    r = np.hypot(x[:, 0], x[:, 1])
    th = signed_angle(np.arctan2(x[:, 1], x[:, 0]) - domain.alpha)
    counts, _, _ = np.histogram2d(r, th, bins=[np.asarray(cfg.binning.r_edges), np.asarray(cfg.binning.theta_edges)])
    return counts.astype(np.int64), x.shape[0]


def simulate_killed_density(coeffs, domain, s, y, t, cfg):
    """Histogram estimate of ``G(t, s, ., y)`` from killed Euler--Maruyama paths."""
    if not t > s:
        raise ValueError("need t > s")
    if not contains(domain, y):
        raise ValueError(f"start point {y!r} is not inside {domain!r}")
    if cfg.dt > (t - s) / 100.0 * (1 + 1e-12):
        raise ValueError("dt must not exceed (t - s) / 100")
    steps = int(ceil((t - s) / cfg.dt - 1e-9))
    h = (t - s) / steps
    n_blocks = -(-cfg.n_paths // BLOCK_SIZE)
    jobs = [
        (coeffs, domain, s, tuple(y), steps, h, cfg, b, min(BLOCK_SIZE, cfg.n_paths - b * BLOCK_SIZE))
        for b in range(n_blocks)
    ]
    workers = min(thread_count(cfg.workers), n_blocks)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_block, jobs))
    else:
        results = [_run_block(j) for j in jobs]
    counts = np.zeros((len(cfg.binning.r_edges) - 1, len(cfg.binning.theta_edges) - 1), dtype=np.int64)
    survivors = 0
    for c, n_alive in results:
        counts += c
        survivors += n_alive
    return DensityEstimate(
        r_edges=np.asarray(cfg.binning.r_edges),
        theta_edges=np.asarray(cfg.binning.theta_edges),
        counts=counts,
        n_paths=cfg.n_paths,
        domain=domain,
        meta={"survivors": survivors, "steps": steps, "dt": h, "s": s, "t": t, "y": tuple(float(v) for v in y)},
    )


def cell_around(domain, p, dr, dtheta):
    """Single-cell binning of radial width ``2 dr`` and angular width ``2 dtheta`` centred on ``p``."""
    r = float(np.hypot(*p))
    th = float(signed_angle(np.arctan2(p[1], p[0]) - domain.alpha))
    if dr >= r:
        raise ValueError("cell would contain the vertex")
    return PolarBinning((r - dr, r + dr), (th - dtheta, th + dtheta))


def duality_estimates(coeffs, domain, s, t, x, y, cfg, dr, dtheta):
    """Cell estimates ``(value, stderr)`` of ``G(t, s, x, y)`` and ``G_hat(-s, -t, y, x)``.

    Both sides are histograms on cells of identical polar size around ``x`` and
    ``y``; the two runs use independent random streams.
    """
    fwd_cfg = McConfig(cfg.n_paths, cfg.dt, cfg.seed, cell_around(domain, x, dr, dtheta), cfg.bridge, cfg.workers, 2 * cfg.stream)
    bwd_cfg = McConfig(cfg.n_paths, cfg.dt, cfg.seed, cell_around(domain, y, dr, dtheta), cfg.bridge, cfg.workers, 2 * cfg.stream + 1)
    fwd = simulate_killed_density(coeffs, domain, s, y, t, fwd_cfg)
    bwd = simulate_killed_density(hat_coefficients(coeffs), domain, -t, x, -s, bwd_cfg)
    return (float(fwd.values[0, 0]), float(fwd.stderr[0, 0])), (float(bwd.values[0, 0]), float(bwd.stderr[0, 0]))


def duality_residual(coeffs, domain, s, t, x, y, cfg, dr, dtheta):
    """Difference of the two sides of the duality identity in pooled standard errors."""
    (v1, e1), (v2, e2) = duality_estimates(coeffs, domain, s, t, x, y, cfg, dr, dtheta)
    return (v1 - v2) / sqrt(e1 * e1 + e2 * e2)
