import math

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy import integrate

from coulombgas.core import UsageError, coulomb_kernel, log_kernel, riesz_kernel
from coulombgas.grids import (COULOMB3_CELL_MEAN, LOG2_CELL_MEAN, Grid,
                              GriddedDensity, GriddedField, kernel_cell_mean,
                              kernel_convolve, kernel_tableau)


def test_grid_basics():
    g = Grid((-1.0, 0.0), (1.0, 4.0), (4, 8))
    assert g.d == 2
    assert_allclose(g.spacing, (0.5, 0.5))
    assert_allclose(g.cell_volume, 0.25)
    ax = g.axes()
    assert_allclose(ax[0], [-0.75, -0.25, 0.25, 0.75])
    assert g.centers().shape == (4, 8, 2)
    assert np.all(g.contains([[0.0, 1.0]]))
    assert not np.all(g.contains([[2.0, 1.0]]))
    assert tuple(g.index_of([[-0.9, 0.1]])[0]) == (0, 0)


def test_grid_validation():
    with pytest.raises(UsageError):
        Grid((0.0,), (1.0,), (1,))
    with pytest.raises(UsageError):
        Grid((0.0,), (-1.0,), (4,))


def test_density_normalization_enforced():
    g = Grid((0.0,), (1.0,), (4,))
    GriddedDensity(g, np.full(4, 1.0))
    with pytest.raises(UsageError):
        GriddedDensity(g, np.full(4, 2.0))
    d = GriddedDensity(g, np.full(4, 2.0), normalized=False)
    assert_allclose(d.mass(), 2.0)
    with pytest.raises(UsageError):
        GriddedDensity(g, np.array([1.0, -0.1, 2.0, 1.1]))
    n = GriddedDensity.normalize(g, np.array([1.0, 2.0, 3.0, 4.0]))
    assert abs(n.mass() - 1.0) < 1e-14


def test_density_csv_round_trip(tmp_path):
    g = Grid((-1.0, -2.0), (1.0, 2.0), (8, 16))
    vals = np.random.default_rng(0).uniform(0.1, 1.0, size=(8, 16))
    d = GriddedDensity.normalize(g, vals)
    p = tmp_path / "dens.csv"
    d.to_csv(p)
    d2 = GriddedDensity.from_csv(p)
    assert d2.grid == g
    assert np.array_equal(d2.values, d.values)


def test_field_csv_round_trip(tmp_path):
    g = Grid((0.0,), (1.0,), (16,))
    rng = np.random.default_rng(1)
    f = GriddedField(g, rng.normal(size=16), rng.normal(size=(16, 1)))
    p = tmp_path / "field.csv"
    f.to_csv(p)
    f2 = GriddedField.from_csv(p)
    assert np.array_equal(f2.values, f.values)
    assert np.array_equal(f2.gradient, f.gradient)


def test_log_cell_means_match_quadrature():
    val, err = integrate.quad(lambda t: -math.log(abs(t)), -0.5, 0.5, points=[0.0])
    h = 0.125
    assert abs(kernel_cell_mean(log_kernel(1), (h,)) - (val - math.log(h))) < 1e-10

    val2, err2 = integrate.dblquad(lambda y, x: -0.5 * math.log(x * x + y * y),
                                   0, 0.5, 0, 0.5)
    assert abs(LOG2_CELL_MEAN - 4 * val2) < 1e-9
    assert abs(kernel_cell_mean(log_kernel(2), (h, h)) - (4 * val2 - math.log(h))) < 1e-8


def test_coulomb3_cell_mean_matches_quadrature():
    val, err = integrate.tplquad(lambda z, y, x: (x * x + y * y + z * z) ** -0.5,
                                 0, 0.5, 0, 0.5, 0, 0.5)
    assert abs(COULOMB3_CELL_MEAN - 8 * val) < 1e-5
    h = 0.25
    assert_allclose(kernel_cell_mean(coulomb_kernel(3), (h, h, h)),
                    COULOMB3_CELL_MEAN / h, rtol=1e-14)


def test_riesz_cell_mean_scaling():
    k = riesz_kernel(1.0, 2)
    m1 = kernel_cell_mean(k, (0.1, 0.1))
    m2 = kernel_cell_mean(k, (0.05, 0.05))
    assert_allclose(m2 / m1, 2.0, rtol=1e-12)  # r^-1 scales like 1/h


def test_tableau_symmetry():
    g = Grid((-1.0, -1.0), (1.0, 1.0), (8, 8))
    tab = kernel_tableau(g, log_kernel(2))
    assert tab.shape == (15, 15)
    assert_allclose(tab, tab[::-1, ::-1], rtol=1e-14)


@pytest.mark.parametrize("case", ["d1", "d2"])
def test_convolution_matches_direct_sum(case):
    rng = np.random.default_rng(5)
    if case == "d1":
        g = Grid((-1.5,), (1.5,), (64,))
        kernel = log_kernel(1)
        vals = rng.uniform(0.0, 1.0, size=g.shape)
        tab = kernel_tableau(g, kernel)
        n = g.shape[0]
        direct = np.zeros(n)
        for i in range(n):
            direct[i] = np.dot(tab[i - np.arange(n) + n - 1], vals) * g.cell_volume
    else:
        g = Grid((-1.0, -1.0), (1.0, 1.0), (12, 12))
        kernel = log_kernel(2)
        vals = rng.uniform(0.0, 1.0, size=g.shape)
        tab = kernel_tableau(g, kernel)
        n0, n1 = g.shape
        direct = np.zeros(g.shape)
        for i0 in range(n0):
            for i1 in range(n1):
                block = tab[i0 - np.arange(n0) + n0 - 1][:, i1 - np.arange(n1) + n1 - 1]
                direct[i0, i1] = np.sum(block * vals) * g.cell_volume
    fast = kernel_convolve(g, vals, kernel)
    assert_allclose(fast, direct, atol=1e-12 * np.max(np.abs(direct)))
