import numpy as np
import pytest

from inhomk.geometry import PointPattern, Window, close_pairs
from inhomk.intensity import ConstantIntensity, CovariateField, LogLinearIntensity
from inhomk.kstat import RadiusGrid, h_matrix, k_hat, k_poisson, taylor_residual
from inhomk.seeds import stream
from inhomk.simulate import simulate_poisson

W1 = Window(2, 1.0)
TWO_POINTS = PointPattern(W1, [[0.0, 0.0], [0.03, 0.0]])


def test_grid_validation():
    g = RadiusGrid.uniform(0.05, 50)
    assert g.m == 50 and g.rmax == 0.05 and g.values[0] > 0
    with pytest.raises(ValueError):
        RadiusGrid(np.array([0.0, 0.1]))
    with pytest.raises(ValueError):
        RadiusGrid(np.array([0.1, 0.05]))
    with pytest.raises(ValueError):
        RadiusGrid(np.array([0.01, 0.02, 0.05]))


def test_k_poisson_values():
    assert k_poisson(0.05, 2) == pytest.approx(np.pi * 0.0025)
    assert k_poisson(0.0, 3) == 0.0
    assert k_poisson(1.0, 3) == pytest.approx(4 * np.pi / 3)
    assert k_poisson(1.0, 1) == pytest.approx(2.0)


def test_k_hat_two_point_example():
    grid = RadiusGrid.uniform(0.05, 5)
    curve = k_hat(TWO_POINTS, ConstantIntensity(200.0), grid)
    expected = 2 * (1 / 0.97) / 200.0**2
    # zero below the pair distance, the hand value at and above it
    np.testing.assert_allclose(curve.values[:2], 0.0)
    np.testing.assert_allclose(curve.values[2:], expected, rtol=1e-12)
    assert curve.values[-1] == pytest.approx(5.15464e-5, rel=1e-5)


def test_k_hat_zero_for_small_radius():
    grid = RadiusGrid.uniform(0.02, 4)
    curve = k_hat(TWO_POINTS, ConstantIntensity(200.0), grid)
    np.testing.assert_allclose(curve.values, 0.0)


def test_k_hat_empty_and_singleton():
    grid = RadiusGrid.uniform(0.05, 5)
    empty = PointPattern(W1, np.empty((0, 2)))
    np.testing.assert_allclose(
        k_hat(empty, ConstantIntensity(1.0), grid).values, 0.0
    )
    single = PointPattern(W1, [[0.2, -0.1]])
    np.testing.assert_allclose(
        k_hat(single, ConstantIntensity(1.0), grid).values, 0.0
    )


def test_k_hat_monotone_nonnegative():
    pat = simulate_poisson(300.0, W1, seed=31)
    curve = k_hat(pat, ConstantIntensity(300.0), RadiusGrid.uniform(0.08, 40))
    assert np.all(curve.values >= 0)
    assert np.all(np.diff(curve.values) >= 0)


def test_k_hat_rejects_bad_intensity():
    class Broken:
        def value(self, points):
            return np.zeros(len(points))

    with pytest.raises(ValueError, match="invalid intensity"):
        k_hat(TWO_POINTS, Broken(), RadiusGrid.uniform(0.05, 5))


def test_k_hat_shared_pairs():
    pat = simulate_poisson(200.0, W1, seed=32)
    grid = RadiusGrid.uniform(0.05, 10)
    pairs = close_pairs(pat, 0.05)
    a = k_hat(pat, ConstantIntensity(200.0), grid)
    b = k_hat(pat, ConstantIntensity(200.0), grid, pairs)
    np.testing.assert_array_equal(a.values, b.values)
    with pytest.raises(ValueError, match="smaller rmax"):
        k_hat(pat, ConstantIntensity(200.0), RadiusGrid.uniform(0.1, 4), pairs)


def test_h_matrix_constant_identity_exact():
    # h = -(2/beta) k at every grid point, to near machine precision
    grid = RadiusGrid.uniform(0.05, 25)
    for seed in range(5):
        pat = simulate_poisson(200.0, W1, stream(33, seed))
        k = k_hat(pat, ConstantIntensity(200.0), grid)
        h = h_matrix(pat, ConstantIntensity(200.0), grid)
        np.testing.assert_allclose(
            h.values[:, 0], -(2.0 / 200.0) * k.values, rtol=1e-14, atol=1e-300
        )


def test_h_matrix_two_point_value():
    grid = RadiusGrid.uniform(0.05, 5)
    h = h_matrix(TWO_POINTS, ConstantIntensity(200.0), grid)
    assert h.values[-1, 0] == pytest.approx(-5.15464e-7, rel=1e-5)


def test_h_matrix_unit_covariate_matches_constant():
    # log-linear with z == 1: gradient is 1 per point, so h = -2 k
    field = CovariateField.constant(W1, [1.0])
    model = LogLinearIntensity([np.log(200.0)], field)
    grid = RadiusGrid.uniform(0.05, 10)
    pat = simulate_poisson(200.0, W1, seed=34)
    k = k_hat(pat, model, grid)
    h = h_matrix(pat, model, grid)
    np.testing.assert_allclose(h.values[:, 0], -2.0 * k.values, rtol=1e-13)


def test_scale_consistency():
    # scaling a constant intensity by c scales k by c^-2 and h by c^-3
    grid = RadiusGrid.uniform(0.05, 10)
    pat = simulate_poisson(200.0, W1, seed=35)
    k1 = k_hat(pat, ConstantIntensity(100.0), grid).values
    k3 = k_hat(pat, ConstantIntensity(300.0), grid).values
    np.testing.assert_allclose(k3, k1 / 9.0, rtol=1e-12)
    h1 = h_matrix(pat, ConstantIntensity(100.0), grid).values
    h3 = h_matrix(pat, ConstantIntensity(300.0), grid).values
    np.testing.assert_allclose(h3, h1 / 27.0, rtol=1e-12)


def test_k_hat_unbiased_in_three_dimensions():
    # the estimator and edge correction are dimension-generic
    w = Window(3, 1.0)
    grid = RadiusGrid.uniform(0.1, 2)
    vals = np.empty(400)
    for rep in range(400):
        pat = simulate_poisson(300.0, w, stream(39, rep))
        vals[rep] = k_hat(pat, ConstantIntensity(300.0), grid).values[-1]
    target = k_poisson(0.1, 3)
    se = vals.std(ddof=1) / np.sqrt(len(vals))
    assert abs(vals.mean() - target) < 3 * se


def test_taylor_residual_zero_at_equal_parameters():
    grid = RadiusGrid.uniform(0.05, 10)
    pat = simulate_poisson(200.0, W1, seed=36)
    res = taylor_residual(pat, ConstantIntensity, 200.0, 200.0, grid)
    np.testing.assert_allclose(res.values, 0.0)


def test_taylor_residual_second_order():
    # halving epsilon quarters the max residual
    grid = RadiusGrid.uniform(0.05, 10)
    pat = simulate_poisson(300.0, W1, seed=37)
    beta = 300.0

    def max_residual(eps):
        res = taylor_residual(pat, ConstantIntensity, beta, beta * (1 + eps), grid)
        return np.abs(res.values).max()

    r1 = max_residual(1e-3)
    r2 = max_residual(5e-4)
    assert r1 / r2 == pytest.approx(4.0, rel=0.05)


def test_taylor_residual_shrinks_with_window():
    # consistency: sup residual with the estimated intensity shrinks as L grows
    grid = RadiusGrid.uniform(0.05, 10)
    sups = []
    for L in (1.0, 2.0, 4.0):
        w = Window(2, L)
        vals = []
        for rep in range(60):
            pat = simulate_poisson(200.0, w, stream(38, int(L * 100) + rep))
            beta_hat = len(pat) / w.volume
            res = taylor_residual(pat, ConstantIntensity, 200.0, beta_hat, grid)
            vals.append(np.abs(res.values).max())
        sups.append(np.mean(vals))
    assert sups[0] > sups[1] > sups[2]
