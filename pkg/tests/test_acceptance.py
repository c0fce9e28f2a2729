"""Acceptance criteria 1-14; each test prints one PASS/FAIL line."""
import json
from math import log, pi, sqrt, tan

import numpy as np
import pytest

from conekernel.cli import RunConfig, run
from conekernel.exponents import (
    ParabolicityBounds,
    SpdMatrix2,
    bound_gap,
    first_dirichlet_eigenvalue_cap,
    kappa_tilde_closed_form,
    kappa_tilde_diagonal,
    kappa_tilde_geometric,
    kappa_tilde_quadrature,
    lambda_c_heat_2d,
    random_spd,
)
from conekernel.geometry import Wedge2D
from conekernel.kernels import chapman_kolmogorov, heat_kernel_halfplane, heat_kernel_wedge
from conekernel.verify import (
    BoundSpec,
    bound_rhs_many,
    feasible_n_sequence,
    fit_boundary_exponent,
    fit_vertex_exponent,
)

from conftest import ACCEPTANCE_LINES

QUARTER = pi / 2
MC_PATHS = 1_000_000


def record(k, ok, detail):
    line = f"ACCEPTANCE {k}: {'PASS' if ok else 'FAIL'} {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert ok, line


def test_1_heat_exponents():
    errs = [abs(lambda_c_heat_2d(k).value - v) for k, v in ((pi / 2, 2.0), (pi, 1.0), (3 * pi / 2, 2 / 3))]
    record(1, max(errs) <= 1e-12, f"max |lambda_c - pi/kappa| = {max(errs):.2e}")


def test_2_kappa_tilde_triple_agreement():
    rng = np.random.default_rng(20240601)
    worst, worst_cond = 0.0, 0.0
    for _ in range(1000):
        A = random_spd(rng, log(100.0))
        lo, hi = A.eigvals()
        worst_cond = max(worst_cond, hi / lo)
        kappa = float(rng.uniform(1e-3, 2 * pi - 1e-3))
        alpha = float(rng.uniform(0.0, 2 * pi))
        c = kappa_tilde_closed_form(A, kappa, alpha)
        worst = max(worst, abs(c - kappa_tilde_quadrature(A, kappa, alpha)), abs(c - kappa_tilde_geometric(A, kappa, alpha)))
    record(2, worst <= 1e-10, f"max disagreement {worst:.2e} over 1000 cases (max condition {worst_cond:.3g})")


def test_3_half_plane_invariance():
    rng = np.random.default_rng(3)
    worst = max(
        abs(kappa_tilde_closed_form(random_spd(rng, log(100.0)), pi, float(rng.uniform(0, 2 * pi))) - pi)
        for _ in range(100)
    )
    record(3, worst <= 1e-12, f"max |kappa_tilde(A, pi, alpha) - pi| = {worst:.2e}")


def test_4_diagonal_tan_relation():
    worst = 0.0
    worst_tan = 0.0
    for ratio in np.geomspace(1e-4, 1e4, 17):
        for kappa in list(np.linspace(0.05, 2 * pi - 0.05, 41)) + [pi]:
            kt = kappa_tilde_closed_form(SpdMatrix2(float(ratio), 0.0, 1.0), float(kappa), 0.0)
            worst = max(worst, abs(kt - kappa_tilde_diagonal(float(ratio), float(kappa))))
            if abs(kappa - pi) > 1e-3:
                # relative check of the relation itself, away from the pole of tan
                t = sqrt(ratio) * tan(kappa / 2)
                worst_tan = max(worst_tan, abs(tan(kt / 2) - t) / (1 + abs(t)) / (1 + t * t))
    record(4, worst <= 1e-12, f"max |closed form - tan relation| = {worst:.2e} (scaled tan residual {worst_tan:.1e})")


def test_5_limits():
    rs = [1e-6, 1e-3, 1.0, 1e3, 1e6]
    ok = True
    details = []
    for kappa in (pi / 2, 3 * pi / 2):
        vals = [kappa_tilde_closed_form(SpdMatrix2(r, 0.0, 1.0), kappa, 0.0) for r in rs]
        diffs = np.diff(vals)
        monotone = bool(np.all(diffs > 0) if kappa < pi else np.all(diffs < 0))
        small_end = vals[0] < 0.01 if kappa < pi else 2 * pi - vals[0] < 0.01
        ok &= monotone and small_end and abs(vals[-1] - pi) < 0.01
        ok &= (vals[-1] < pi) if kappa < pi else (vals[-1] > pi)
        details.append(f"kappa={kappa:.4f}: r=1e-6 -> {vals[0]:.6f}, r=1e6 -> {vals[-1]:.6f}")
    record(5, ok, "; ".join(details))


def test_6_gap_identity():
    rng = np.random.default_rng(6)
    worst = 0.0
    min_gap = np.inf
    for _ in range(2000):
        nu = float(rng.uniform(0.05, 1.0))
        nu1 = float(rng.uniform(nu, 1.0 / nu))
        nu2 = float(rng.uniform(nu1, 1.0 / nu))
        Lam = float(rng.uniform(0.01, 50.0))
        d = int(rng.integers(2, 7))
        g = bound_gap(ParabolicityBounds(nu1, nu2), nu, Lam, d)
        ref = 1 + (sqrt(nu1 / nu2) - nu) * sqrt(Lam + (d - 2) ** 2 / 4)
        worst = max(worst, abs(g - ref))
        min_gap = min(min_gap, g)
    record(6, worst <= 1e-12 and min_gap >= 1 - 1e-12, f"max identity error {worst:.2e}, min gap {min_gap:.6f}")


def test_7_cap_eigenvalue():
    lam_pi = first_dirichlet_eigenvalue_cap(pi)
    ok = abs(lam_pi.Lambda - 2.0) <= 1e-8
    parts = [f"Lambda(pi) - 2 = {lam_pi.Lambda - 2:.1e}"]
    for kappa in (pi / 3, pi / 2, pi, 3 * pi / 2):
        res = first_dirichlet_eigenvalue_cap(kappa)
        ok &= res.lower <= res.Lambda <= res.upper
        parts.append(f"{res.lower:.4f} <= {res.Lambda:.4f} <= {res.upper:.4f}")
    record(7, ok, "; ".join(parts))


def test_8_series_vs_images():
    rng = np.random.default_rng(8)
    worst = 0.0
    for _ in range(100):
        tau = float(10 ** rng.uniform(-2, 1))
        s = sqrt(tau)
        # queries in the bulk of the kernel: |x - y| up to about 6 sqrt(tau)
        x = (float(rng.uniform(0.02, 4.0)) * s, float(rng.uniform(-2.0, 2.0)) * s)
        y = (float(rng.uniform(0.02, 4.0)) * s, float(rng.uniform(-2.0, 2.0)) * s)
        ref = heat_kernel_halfplane(tau, x, y)
        worst = max(worst, abs(heat_kernel_wedge(pi, tau, x, y) / ref - 1))
    record(8, worst <= 1e-8, f"max relative error {worst:.2e} over 100 queries")


def test_9_chapman_kolmogorov():
    worst = 0.0
    for kappa in (pi / 2, 3 * pi / 2):
        w = Wedge2D(kappa)
        pairs = [
            (w.point(0.5, 0.0), w.point(1.0, 0.2 * kappa)),
            (w.point(1.2, -0.3 * kappa), w.point(0.8, 0.3 * kappa)),
            (w.point(0.3, 0.4 * kappa), w.point(1.5, -0.1 * kappa)),
        ]
        for x, y in pairs:
            composed, direct = chapman_kolmogorov(kappa, 0.5, 0.5, tuple(x), tuple(y))
            worst = max(worst, abs(composed / direct - 1))
    record(9, worst <= 1e-4, f"max relative residual {worst:.2e}")


def test_10_exponent_fits():
    ok = True
    parts = []
    for kappa in (pi / 2, pi, 3 * pi / 2):
        w = Wedge2D(kappa)

        def sampler(tau, x, y):
            return heat_kernel_wedge(kappa, tau, tuple(x), tuple(y))

        v = fit_vertex_exponent(sampler, w, 1.0, tuple(w.point(4.0, 0.0)))
        b = fit_boundary_exponent(sampler, w, 1.0, tuple(w.edge_point(4.0, 0.3)))
        ok &= abs(v.slope / (pi / kappa) - 1) <= 0.05 and abs(b.slope - 1) <= 0.05
        ok &= min(v.r_squared, b.r_squared) >= 0.99
        parts.append(f"kappa={kappa:.4f}: vertex {v.slope:.4f} (pi/kappa {pi / kappa:.4f}), boundary {b.slope:.4f}")
    record(10, ok, "; ".join(parts))


def test_11_refined_bound_feasibility():
    ok = True
    parts = []
    for kappa in (pi / 2, 3 * pi / 2):
        w = Wedge2D(kappa)
        lam_c = pi / kappa
        y = tuple(w.point(1.0, 0.0))
        sub = feasible_n_sequence(w, 1.0, y, BoundSpec(0.9 * lam_c, 0.9 * lam_c, 0.125), 2)
        sup = feasible_n_sequence(w, 1.0, y, BoundSpec(1.2 * lam_c, 1.2 * lam_c, 0.125), 4)
        sub_ratio = sub[1] / sub[0]
        sup_ratios = [b / a for a, b in zip(sup, sup[1:])]
        ok &= bool(np.all(np.isfinite(sub))) and 0.5 < sub_ratio < 2.0
        ok &= all(r >= 2.0 for r in sup_ratios)
        parts.append(
            f"kappa={kappa:.4f}: subcritical N {sub[0]:.4g} -> {sub[1]:.4g}, "
            f"supercritical growth {', '.join(f'{r:.2f}' for r in sup_ratios)}"
        )
    record(11, ok, "; ".join(parts))


def test_12_envelope_ordering():
    rng = np.random.default_rng(12)
    n_checked = 0
    ok = True
    for kappa in (pi / 3, pi / 2, pi, 3 * pi / 2, 1.9 * pi):
        w = Wedge2D(kappa, float(rng.uniform(0, 2 * pi)))
        n = 5000
        tau = 10 ** rng.uniform(-2, 1, n)
        r1, r2 = 10 ** rng.uniform(-4, 1, (2, n))
        t1, t2 = rng.uniform(-0.999, 0.999, (2, n)) * kappa / 2 + w.alpha
        for lam in (0.5, 0.9 * pi / kappa, 1.0, 2.5):
            spec = BoundSpec(lam, lam, 0.125, 3.0)
            args = (w, tau, r1 * np.cos(t1), r1 * np.sin(t1), r2 * np.cos(t2), r2 * np.sin(t2))
            key = bound_rhs_many(spec, *args, form="key")
            rough = bound_rhs_many(spec, *args, form="less_rough")
            ok &= bool(np.all(key <= rough))
            n_checked += n
    record(12, ok, f"key <= less-rough at all {n_checked} sampled points")


def _run_cli(command, params, seed, out, threads):
    cfg = RunConfig.build(command, params, seed, str(out))
    status, report = run(cfg, threads=threads)
    assert status == 0, report
    return report


MC_PARAMS = {
    "kappa": QUARTER,
    "y": [1.0, 0.0],
    "paths": MC_PATHS,
    "t": 1.0,
    "r_max": 3.0,
    "n_r": 15,
    "n_theta": 8,
    "bridge": True,
}
DUALITY_PARAMS = {
    "kappa": QUARTER,
    "coeffs": "sin:2,1,1",
    "s": 0.0,
    "t": 1.0,
    "x": [1.0, 0.25],
    "y": [0.7, -0.2],
    "paths": MC_PATHS,
    "dr": 0.15,
    "dtheta": 0.15,
    "bridge": True,
}


@pytest.fixture(scope="module")
def mc_runs(tmp_path_factory):
    """Both Monte Carlo reports, run once single-threaded and once with four threads."""
    out = {}
    for name, command, params in (("density", "kernel-mc", MC_PARAMS), ("duality", "duality", DUALITY_PARAMS)):
        d = tmp_path_factory.mktemp(name)
        files = []
        reports = []
        for threads in (1, 4):
            reports.append(_run_cli(command, params, 2024, d, threads))
            files.append({p.name: p.read_bytes() for p in sorted(d.iterdir())})
        out[name] = (reports, files)
    return out


def test_13_monte_carlo(mc_runs):
    dens = mc_runs["density"][0][0]["results"]
    dual = mc_runs["duality"][0][0]["results"]
    frac = dens["fraction_within_3_stderr"]
    z = dual["residual"]
    ok = frac >= 0.95 and abs(z) <= 3
    record(
        13,
        ok,
        f"{frac:.1%} of {dens['cells_compared']} cells within 3 stderr; "
        f"duality residual z = {z:+.3f} (forward {dual['forward'][0]:.4g}, backward {dual['backward'][0]:.4g})",
    )


def test_14_reproducibility(mc_runs):
    same = []
    for name, (_, files) in mc_runs.items():
        same.append(files[0] == files[1] and len(files[0]) > 0)
    sizes = {k: sum(len(b) for b in v[1][0].values()) for k, v in mc_runs.items()}
    record(14, all(same), f"byte-identical reports with 1 and 4 threads ({json.dumps(sizes)} bytes)")
