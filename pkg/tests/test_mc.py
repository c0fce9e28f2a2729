from math import pi, sin, sqrt

import numpy as np
import pytest

from conekernel.exponents import SpdMatrix2
from conekernel.geometry import Wedge2D
from conekernel.kernels import heat_kernel_halfplane, wedge_kernel_grid
from conekernel.mc import (
    BLOCK_SIZE,
    McConfig,
    ParabolicityError,
    PolarBinning,
    TimeCoefficients,
    cell_around,
    duality_estimates,
    hat_coefficients,
    simulate_killed_density,
    thread_count,
)
from conekernel.verify import cell_averages, compare_density, transformed_kernel_grid

IDENTITY = TimeCoefficients.constant(SpdMatrix2.identity())


def sin_coeffs():
    return TimeCoefficients(lambda t: SpdMatrix2(2.0 + sin(t), 0.0, 1.0), 1.0, 3.0)


def quarter_binning(r_max=3.0, n_r=10, n_theta=6):
    return PolarBinning.regular(r_max, n_r, -pi / 4, pi / 4, n_theta)


def test_hat_constant_and_sin():
    A = SpdMatrix2(2.0, 0.3, 1.0)
    c = TimeCoefficients.constant(A)
    assert hat_coefficients(c)(1.7) == A
    h = hat_coefficients(sin_coeffs())
    for t in np.linspace(-3, 3, 13):
        assert h(t) == SpdMatrix2(2.0 - sin(t), 0.0, 1.0)
    hh = hat_coefficients(h)
    for t in np.linspace(-3, 3, 13):
        assert hh(t) == sin_coeffs()(t)
    assert (h.nu1, h.nu2) == (1.0, 3.0)


def test_parabolicity_checked_at_construction():
    with pytest.raises(ParabolicityError):
        TimeCoefficients(lambda t: SpdMatrix2(2.0 + sin(t), 0.0, 1.0), 1.0, 2.5)


def test_parabolicity_checked_during_simulation():
    # a spike outside the construction grid is caught when a step samples it
    def ev(t):
        return SpdMatrix2(5.0 if t > 50.2 else 1.0, 0.0, 1.0)

    coeffs = TimeCoefficients(ev, 1.0, 1.0)
    cfg = McConfig(100, 0.01, 1, quarter_binning())
    with pytest.raises(ParabolicityError):
        simulate_killed_density(coeffs, Wedge2D(pi / 2), 50.0, (1.0, 0.0), 51.0, cfg)


def test_config_validation():
    with pytest.raises(ValueError):
        McConfig(0, 0.01, 1, quarter_binning())
    with pytest.raises(ValueError):
        McConfig(10, 0.0, 1, quarter_binning())
    with pytest.raises(ValueError):
        McConfig(10, 0.01, -1, quarter_binning())
    with pytest.raises(ValueError):
        PolarBinning((0.0, 1.0, 1.0), (0.0, 1.0))
    with pytest.raises(ValueError):
        PolarBinning((0.0,), (0.0, 1.0))
    cfg = McConfig(10, 0.02, 1, quarter_binning())
    with pytest.raises(ValueError):
        simulate_killed_density(IDENTITY, Wedge2D(pi / 2), 0.0, (1.0, 0.0), 1.0, cfg)
    cfg = McConfig(10, 0.01, 1, quarter_binning())
    with pytest.raises(ValueError):
        simulate_killed_density(IDENTITY, Wedge2D(pi / 2), 0.0, (-1.0, 0.0), 1.0, cfg)
    with pytest.raises(ValueError):
        simulate_killed_density(IDENTITY, Wedge2D(pi / 2), 1.0, (1.0, 0.0), 1.0, cfg)


def test_thread_count_env(monkeypatch):
    monkeypatch.setenv("CONEKERNEL_THREADS", "3")
    assert thread_count() == 3
    assert thread_count(2) == 2
    monkeypatch.delenv("CONEKERNEL_THREADS")
    assert thread_count() >= 1


@pytest.mark.parametrize("bridge", [False, True])
def test_reproducible_across_workers(bridge):
    n = 3 * BLOCK_SIZE + 17
    runs = [
        simulate_killed_density(
            IDENTITY, Wedge2D(pi / 2), 0.0, (1.0, 0.0), 0.5, McConfig(n, 0.005, 42, quarter_binning(), bridge, workers=w)
        )
        for w in (1, 2, 4)
    ]
    for r in runs[1:]:
        assert np.array_equal(r.counts, runs[0].counts)
        assert r.survivors == runs[0].survivors
    other = simulate_killed_density(IDENTITY, Wedge2D(pi / 2), 0.0, (1.0, 0.0), 0.5, McConfig(n, 0.005, 43, quarter_binning()))
    assert not np.array_equal(other.counts, runs[0].counts)


def test_estimate_bookkeeping():
    est = simulate_killed_density(IDENTITY, Wedge2D(pi / 2), 0.0, (1.0, 0.0), 0.5, McConfig(5000, 0.005, 7, quarter_binning()))
    assert est.counts.sum() <= est.survivors <= est.total == 5000
    assert np.allclose(est.values, est.counts / (5000 * est.areas))
    rows = list(est.cells())
    assert len(rows) == est.counts.size
    assert rows[0][0] == 0.0 and rows[0][4] == est.counts[0, 0]
    x1, x2 = est.centroids()
    assert x1.shape == est.counts.shape


def test_survival_decreases_in_time():
    w = Wedge2D(pi / 2)
    fracs = []
    for t in (0.25, 0.5, 1.0, 2.0):
        est = simulate_killed_density(IDENTITY, w, 0.0, (1.0, 0.0), t, McConfig(20000, t / 100, 5, quarter_binning()))
        fracs.append(est.survivors / est.total)
    assert all(0 <= b < a <= 1 for a, b in zip(fracs, fracs[1:]))


def test_stderr_halves_with_four_times_paths():
    w = Wedge2D(pi / 2)
    binning = PolarBinning((0.8, 1.2), (-0.2, 0.2))
    e1 = simulate_killed_density(IDENTITY, w, 0.0, (1.0, 0.0), 0.5, McConfig(20000, 0.005, 3, binning))
    e4 = simulate_killed_density(IDENTITY, w, 0.0, (1.0, 0.0), 0.5, McConfig(80000, 0.005, 3, binning))
    assert e1.stderr[0, 0] / e4.stderr[0, 0] == pytest.approx(2.0, rel=0.2)


def test_halfplane_against_images():
    w = Wedge2D(pi)
    y = (0.5, 0.0)
    binning = PolarBinning.regular(2.5, 8, -pi / 2, pi / 2, 6)
    est = simulate_killed_density(IDENTITY, w, 0.0, y, 0.5, McConfig(200_000, 0.005, 11, binning, bridge=True))

    def exact(x1, x2):
        return np.vectorize(lambda a, b: heat_kernel_halfplane(0.5, (a, b), y) if a > 0 else 0.0)(x1, x2)

    frac, z = compare_density(est, cell_averages(exact, est))
    assert frac >= 0.95
    assert abs(np.mean(z)) < 3 / sqrt(z.size) + 0.5


def test_constant_anisotropic_against_transform():
    A = SpdMatrix2(4.0, 0.0, 1.0)
    w = Wedge2D(pi / 2)
    y = (1.0, 0.0)
    coeffs = TimeCoefficients.constant(A)
    est = simulate_killed_density(coeffs, w, 0.0, y, 0.5, McConfig(200_000, 0.005, 12, quarter_binning(3.5, 10, 6), bridge=True))
    avg = cell_averages(lambda x1, x2: transformed_kernel_grid(A, pi / 2, 0.0, 0.5, x1, x2, y), est)
    frac, _ = compare_density(est, avg)
    assert frac >= 0.95


def test_dt_refinement_consistent():
    w = Wedge2D(pi / 2)
    binning = quarter_binning(3.0, 6, 4)
    a = simulate_killed_density(IDENTITY, w, 0.0, (1.0, 0.0), 1.0, McConfig(100_000, 0.01, 21, binning, bridge=True))
    b = simulate_killed_density(IDENTITY, w, 0.0, (1.0, 0.0), 1.0, McConfig(100_000, 0.005, 22, binning, bridge=True))
    mask = (a.counts >= 50) & (b.counts >= 50)
    z = (a.values - b.values)[mask] / np.hypot(a.stderr, b.stderr)[mask]
    assert np.mean(np.abs(z) < 3) >= 0.95


def test_discrete_killing_is_default():
    assert McConfig(10, 0.01, 1, quarter_binning()).bridge is False


def test_bridge_reduces_survival_bias():
    # discrete killing misses excursions; the crossing correction removes most of the excess
    w = Wedge2D(pi)
    binning = PolarBinning((0.0, 10.0), (-pi / 2, pi / 2))
    y = (0.3, 0.0)
    plain = simulate_killed_density(IDENTITY, w, 0.0, y, 1.0, McConfig(50_000, 0.01, 8, binning, bridge=False))
    fixed = simulate_killed_density(IDENTITY, w, 0.0, y, 1.0, McConfig(50_000, 0.01, 8, binning, bridge=True))
    from math import erf

    exact = erf(0.3 / 2)
    err_plain = plain.survivors / 50_000 - exact
    err_fixed = fixed.survivors / 50_000 - exact
    assert err_plain > 0.02
    assert abs(err_fixed) < 4 * sqrt(exact * (1 - exact) / 50_000)


def test_cell_around():
    w = Wedge2D(pi / 2)
    b = cell_around(w, (1.0, 0.0), 0.1, 0.05)
    assert b.r_edges == (0.9, 1.1) and b.theta_edges == (-0.05, 0.05)
    with pytest.raises(ValueError):
        cell_around(w, (0.05, 0.0), 0.1, 0.05)


def test_duality_constant_is_symmetry():
    w = Wedge2D(pi / 2)
    x, y = (1.0, 0.2), (1.0, -0.2)
    cfg = McConfig(100_000, 0.005, 9, quarter_binning(), bridge=True)
    (v1, e1), (v2, e2) = duality_estimates(IDENTITY, w, 0.0, 0.5, x, y, cfg, 0.1, 0.1)
    assert abs(v1 - v2) <= 3 * sqrt(e1 * e1 + e2 * e2)
    exact = float(wedge_kernel_grid(pi / 2, 0.5, x[0], x[1], y[0], y[1]))
    assert abs(v1 - exact) <= 4 * e1 + 0.05 * exact
