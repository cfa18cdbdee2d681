import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose

from coulombgas.core import (CoincidentPointsError, Configuration,
                             GridMismatchError, QuadraticPotential,
                             UsageError, coulomb_kernel, log_kernel,
                             riesz_kernel)
from coulombgas.energy import (background_potential, coulomb_metric,
                               delta_energy, double_kernel_integral,
                               hamiltonian, interaction_energy,
                               mean_field_forces, min_pair_distance,
                               split_energy)
from coulombgas.equilibrium import DiskEquilibrium, SemicircleEquilibrium
from coulombgas.grids import Grid, GriddedDensity

KERNELS = [log_kernel(1), log_kernel(2), coulomb_kernel(3), riesz_kernel(1.5, 2)]


def brute_hamiltonian(pos, kernel, pot):
    n = len(pos)
    tot = 0.0
    for i in range(n):
        for j in range(i + 1, n):
            tot += float(kernel.value(pos[i] - pos[j]))
    return tot + n * float(np.sum(pot.value(pos)))


def spread_positions(rng, n, d):
    """Random points with pairwise separation bounded away from zero."""
    while True:
        pos = rng.normal(size=(n, d))
        dmin = min(np.linalg.norm(pos[i] - pos[j])
                   for i in range(n) for j in range(i + 1, n))
        if dmin > 1e-3:
            return pos


@pytest.mark.parametrize("kernel", KERNELS)
def test_hamiltonian_matches_brute_force(kernel, rng):
    pot = QuadraticPotential(0.8)
    pos = spread_positions(rng, 7, kernel.d)
    assert_allclose(hamiltonian(pos, kernel, pot),
                    brute_hamiltonian(pos, kernel, pot), rtol=1e-12)


def test_hamiltonian_permutation_invariant(rng):
    kernel = log_kernel(2)
    pot = QuadraticPotential()
    pos = spread_positions(rng, 9, 2)
    perm = rng.permutation(9)
    assert_allclose(hamiltonian(pos, kernel, pot),
                    hamiltonian(pos[perm], kernel, pot), rtol=1e-13)


def test_interaction_energy_translation_invariant(rng):
    kernel = log_kernel(2)
    pos = spread_positions(rng, 6, 2)
    shift = rng.normal(size=2)
    assert_allclose(interaction_energy(pos, kernel),
                    interaction_energy(pos + shift, kernel), rtol=1e-11)


@pytest.mark.parametrize("kernel", KERNELS)
def test_forces_match_finite_differences(kernel, rng):
    pot = QuadraticPotential(0.6)
    n = 5
    pos = spread_positions(rng, n, kernel.d)
    F = mean_field_forces(pos, kernel, pot)
    eps = 1e-6
    for i in (0, n - 1):
        for k in range(kernel.d):
            pp = pos.copy()
            pp[i, k] += eps
            pm = pos.copy()
            pm[i, k] -= eps
            fd = -(hamiltonian(pp, kernel, pot) - hamiltonian(pm, kernel, pot)) / (2 * eps * n)
            assert abs(F[i, k] - fd) < 1e-6 * max(1.0, abs(fd))


@given(st.integers(0, 5), st.floats(-0.4, 0.4), st.floats(-0.4, 0.4))
@settings(max_examples=25)
def test_delta_energy_matches_recomputation(i, dx, dy):
    rng = np.random.default_rng(42)
    pos = spread_positions(rng, 6, 2)
    kernel = log_kernel(2)
    pot = QuadraticPotential()
    new = pos[i] + np.array([dx, dy])
    if min(np.linalg.norm(new - pos[j]) for j in range(6) if j != i) < 1e-6:
        return
    d1 = delta_energy(pos, kernel, pot, i, new)
    pp = pos.copy()
    pp[i] = new
    d2 = hamiltonian(pp, kernel, pot) - hamiltonian(pos, kernel, pot)
    assert abs(d1 - d2) < 1e-9 * max(1.0, abs(d2))


def test_coincident_points_raise():
    pos = np.array([[0.0, 0.0], [0.0, 0.0], [1.0, 0.0]])
    with pytest.raises(CoincidentPointsError):
        hamiltonian(pos, log_kernel(2), QuadraticPotential())
    with pytest.raises(CoincidentPointsError):
        mean_field_forces(pos, log_kernel(2), QuadraticPotential())


def test_min_pair_distance():
    pos = np.array([[0.0, 0.0], [3.0, 4.0], [0.5, 0.0]])
    assert_allclose(min_pair_distance(pos), 0.5)
    assert min_pair_distance(np.zeros((1, 2))) == math.inf


def test_background_potential_disk_refines_at_second_order():
    """Grid quadrature of the disk potential converges like h^2 to the
    closed form away from the support boundary."""
    disk = DiskEquilibrium(1.0)
    kernel = log_kernel(2)
    pts = np.array([[0.1, 0.05], [0.3, -0.2], [1.1, 0.4]])
    exact = disk.potential_at(pts)
    errs = []
    for n in (64, 128, 256):
        grid = Grid.cube(0.7071067811865476, n, 2)
        mu = disk.on_grid(grid)
        approx = background_potential(mu, pts, kernel)
        errs.append(np.max(np.abs(approx - exact)))
    assert errs[2] < errs[1] < errs[0]
    assert errs[0] / errs[2] > 6.0  # two halvings of h, roughly x16 for h^2


def test_background_potential_semicircle():
    sc = SemicircleEquilibrium(1.0)
    kernel = log_kernel(1)
    grid = Grid((-1.0,), (1.0,), (2048,))
    mu = sc.on_grid(grid)
    pts = np.array([[0.0], [0.4], [1.5], [-2.5]])
    approx = background_potential(mu, pts, kernel)
    exact = sc.potential_at(pts)
    assert np.max(np.abs(approx - exact)) < 2e-4


def test_background_potential_generic_dimension(rng):
    kernel = coulomb_kernel(3)
    grid = Grid.cube(1.0, 8, 3)
    vals = rng.uniform(0.2, 1.0, size=grid.shape)
    mu = GriddedDensity.normalize(grid, vals)
    pts = np.array([[0.05, 0.1, -0.2], [2.0, 0.0, 0.0]])
    out = background_potential(mu, pts, kernel)
    # direct reference sum
    centers = grid.flat_centers()
    masses = mu.values.reshape(-1) * grid.cell_volume
    for q, pt in enumerate(pts):
        r = np.linalg.norm(centers - pt, axis=1)
        vals_k = 1.0 / r
        if grid.contains([pt])[0]:
            idx = np.ravel_multi_index(tuple(grid.index_of([pt])[0]), grid.shape)
            from coulombgas.grids import kernel_cell_mean
            vals_k[idx] = kernel_cell_mean(kernel, grid.spacing)
        assert_allclose(out[q], np.dot(vals_k, masses), rtol=1e-12)


def test_split_energy_reconstructs_exactly(rng):
    kernel = log_kernel(2)
    pot = QuadraticPotential(1.0)
    disk = DiskEquilibrium(1.0)
    for n in (1, 2, 17):
        pos = spread_positions(rng, n, 2) if n > 1 else rng.normal(size=(1, 2))
        parts = split_energy(pos, kernel, pot, disk)
        assert parts.relative_error < 1e-12
        assert_allclose(parts.hamiltonian, hamiltonian(pos, kernel, pot), rtol=1e-12)


def test_split_energy_single_point_closed_form():
    kernel = log_kernel(2)
    pot = QuadraticPotential(1.0)
    disk = DiskEquilibrium(1.0)
    x = np.array([[0.2, 0.1]])
    parts = split_energy(x, kernel, pot, disk)
    h = float(disk.potential_at(x)[0])
    assert_allclose(parts.next_order, -h + 0.5 * disk.gg, rtol=1e-12)


def test_split_energy_accepts_gridded_reference(rng):
    kernel = log_kernel(2)
    pot = QuadraticPotential(1.0)
    grid = Grid.cube(0.75, 48, 2)
    mu = DiskEquilibrium(1.0).on_grid(grid)
    pos = spread_positions(rng, 5, 2)
    parts = split_energy(pos, kernel, pot, mu)
    assert parts.relative_error < 1e-12


def test_double_kernel_integral_disk():
    disk = DiskEquilibrium(1.0)
    grid = Grid.cube(0.75, 128, 2)
    mu = disk.on_grid(grid)
    gg = double_kernel_integral(mu, log_kernel(2))
    assert abs(gg - disk.gg) < 5e-3


def test_metric_basic_properties():
    grid = Grid((-1.5,), (1.5,), (64,))
    x = grid.axes()[0]
    k = log_kernel(1)
    mu = GriddedDensity.normalize(grid, np.exp(-4 * x ** 2))
    nu = GriddedDensity.normalize(grid, np.exp(-4 * (x - 0.2) ** 2))
    assert coulomb_metric(mu, mu, k) == 0.0
    d1 = coulomb_metric(mu, nu, k)
    d2 = coulomb_metric(nu, mu, k)
    assert d1 == d2 > 0.0
    other = Grid((-1.5,), (1.5,), (32,))
    with pytest.raises(GridMismatchError):
        coulomb_metric(mu, GriddedDensity.normalize(other, np.ones(32)), k)


def test_metric_fourier_matches_direct_quadrature():
    """The FFT evaluation agrees with the O(M^2) double sum of the same
    discretized double integral on a 64^2 grid."""
    grid = Grid.cube(1.0, 64, 2)
    c = grid.centers()
    k = log_kernel(2)
    mu = GriddedDensity.normalize(grid, np.exp(-40 * np.sum((c - np.array([0.25, 0.0])) ** 2, axis=-1)))
    nu = GriddedDensity.normalize(grid, np.exp(-40 * np.sum((c + np.array([0.25, 0.0])) ** 2, axis=-1)))
    fast = coulomb_metric(mu, nu, k)
    from coulombgas.grids import kernel_tableau
    tab = kernel_tableau(grid, k)
    delta = (mu.values - nu.values).reshape(-1)
    n0, n1 = grid.shape
    ii = np.arange(n0)
    direct = 0.0
    dm = delta.reshape(n0, n1)
    for i0 in range(n0):
        for i1 in range(n1):
            if dm[i0, i1] == 0.0:
                continue
            block = tab[i0 - ii + n0 - 1][:, i1 - ii + n1 - 1]
            direct += dm[i0, i1] * np.sum(block * dm)
    direct *= grid.cell_volume ** 2
    assert abs(fast - math.sqrt(max(direct, 0.0))) < 1e-6


def test_metric_triangle_inequality(rng):
    grid = Grid((-1.0,), (1.0,), (48,))
    x = grid.axes()[0]
    k = log_kernel(1)
    for _ in range(10):
        a, b, c3 = (GriddedDensity.normalize(
            grid, np.exp(-rng.uniform(2, 8) * (x - rng.uniform(-0.4, 0.4)) ** 2) + 0.05)
            for _ in range(3))
        dab = coulomb_metric(a, b, k)
        dbc = coulomb_metric(b, c3, k)
        dac = coulomb_metric(a, c3, k)
        assert dac <= dab + dbc + 1e-10
