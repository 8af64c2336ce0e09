import numpy as np
import pytest

from inhomk.geometry import Window
from inhomk.intensity import CovariateField, LogLinearIntensity
from inhomk.seeds import stream
from inhomk.simulate import (
    MaternParams,
    simulate_matern,
    simulate_poisson,
    simulate_poisson_inhom,
)

W1 = Window(2, 1.0)


def test_determinism_byte_identical():
    a = simulate_poisson(200.0, W1, seed=42)
    b = simulate_poisson(200.0, W1, seed=42)
    assert np.array_equal(a.points, b.points)
    m = MaternParams(25.0, 8.0, 0.2)
    assert np.array_equal(
        simulate_matern(m, W1, seed=9).points, simulate_matern(m, W1, seed=9).points
    )


def test_points_inside_window():
    for seed in range(5):
        pat = simulate_matern(MaternParams(25.0, 8.0, 0.2), W1, seed=seed)
        assert np.abs(pat.points).max() <= 0.5
        pat = simulate_poisson(100.0, Window(3, 2.0), seed=seed)
        assert np.abs(pat.points).max() <= 1.0


def test_poisson_count_mean():
    # 1e4 replicates: sample mean within 3 sqrt(200/1e4) of 200
    counts = [len(simulate_poisson(200.0, W1, stream(77, r))) for r in range(10_000)]
    assert abs(np.mean(counts) - 200.0) < 3 * np.sqrt(200.0 / 10_000)


def test_matern_count_mean():
    m = MaternParams(25.0, 8.0, 0.2)
    counts = np.array(
        [len(simulate_matern(m, W1, stream(78, r))) for r in range(10_000)]
    )
    se = counts.std(ddof=1) / 100.0
    assert abs(counts.mean() - 200.0) < 3 * se


def test_matern_tiny_mu_empty():
    pat = simulate_matern(MaternParams(25.0, 1e-9, 0.2), W1, seed=1)
    assert len(pat) == 0


def test_matern_quadrant_stationarity():
    # parent dilation removes edge bias: per-quadrant means agree within MC error
    m = MaternParams(25.0, 8.0, 0.2)
    quad_counts = np.zeros(4)
    reps = 4000
    for r in range(reps):
        pts = simulate_matern(m, W1, stream(79, r)).points
        if len(pts) == 0:
            continue
        qx = (pts[:, 0] > 0).astype(int)
        qy = (pts[:, 1] > 0).astype(int)
        for q in range(4):
            quad_counts[q] += np.sum((qx + 2 * qy) == q)
    means = quad_counts / reps
    # each quadrant expects 50 points; cluster counts have sd ~ sqrt(50*9)
    se = np.sqrt(50 * 9 / reps)
    assert np.all(np.abs(means - 50.0) < 5 * se)


def test_inhom_constant_reduces_to_poisson_rate():
    field = CovariateField.constant(W1, [1.0])
    model = LogLinearIntensity([np.log(200.0)], field)
    counts = [
        len(simulate_poisson_inhom(model, 200.0, W1, stream(80, r)))
        for r in range(10_000)
    ]
    assert abs(np.mean(counts) - 200.0) < 3 * np.sqrt(200.0 / 10_000)


def test_inhom_zero_slope_is_constant():
    field = CovariateField.from_function(
        W1, lambda pts: np.stack([np.ones(len(pts)), pts[:, 0]], axis=1), 32
    )
    model = LogLinearIntensity([np.log(200.0), 0.0], field)
    counts = [
        len(simulate_poisson_inhom(model, 200.0, W1, stream(81, r)))
        for r in range(4000)
    ]
    assert abs(np.mean(counts) - 200.0) < 3 * np.sqrt(200.0 / 4000)


def test_inhom_expected_count_matches_analytic_integral():
    # z(u) = u1, beta = (5, 1): E N = int_W exp(5 + u1) du = e^5 (e^1/2 - e^-1/2)
    field = CovariateField.from_function(
        W1, lambda pts: np.stack([np.ones(len(pts)), pts[:, 0]], axis=1), 256
    )
    model = LogLinearIntensity([5.0, 1.0], field)
    rho_max = float(model.cell_values().max())
    counts = np.array(
        [
            len(simulate_poisson_inhom(model, rho_max, W1, stream(82, r)))
            for r in range(10_000)
        ]
    )
    # the raster integral is the exact mean of the rasterized model; it approaches
    # the analytic value as the raster refines
    target = np.exp(5.0) * (np.exp(0.5) - np.exp(-0.5))
    se = counts.std(ddof=1) / 100.0
    assert abs(counts.mean() - target) < 3 * se + abs(
        float((model.cell_values() * field.cell_volume).sum()) - target
    )


def test_inhom_dominating_bound_violated():
    field = CovariateField.constant(W1, [1.0])
    model = LogLinearIntensity([np.log(200.0)], field)
    with pytest.raises(ValueError, match="dominating bound"):
        simulate_poisson_inhom(model, 100.0, W1, seed=3)


def test_matern_params_validation():
    with pytest.raises(ValueError):
        MaternParams(0.0, 8.0, 0.2)
    with pytest.raises(ValueError):
        MaternParams(25.0, -1.0, 0.2)
