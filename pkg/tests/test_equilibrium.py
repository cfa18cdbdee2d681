import numpy as np
import pytest
from numpy.testing import assert_allclose

from coulombgas.core import (QuadraticPotential, RadialPolynomialPotential,
                             UsageError, log_kernel)
from coulombgas.energy import coulomb_metric
from coulombgas.equilibrium import (ConvergenceError, DiskEquilibrium,
                                    SemicircleEquilibrium,
                                    coulomb_density_formula, solve_equilibrium,
                                    thermal_equilibrium,
                                    verify_euler_lagrange)
from coulombgas.grids import Grid


def test_semicircle_density_and_constant(semicircle_solution):
    res = semicircle_solution
    sc = SemicircleEquilibrium(1.0)
    grid = res.density.grid
    x = grid.axes()[0]
    exact = sc.density_at(x[:, None])
    # sup error of the density away from the support edge
    interior = np.abs(x) < 0.9
    err = np.max(np.abs(res.density.values[interior] - exact[interior]))
    assert err < 1e-2
    assert abs(res.robin_constant - sc.robin_constant) < 5e-3
    assert abs(res.energy - sc.energy) < 5e-3
    # support is close to [-1, 1]
    sup = x[res.support_mask]
    assert abs(sup.min() + 1.0) < 2 * grid.spacing[0] + 1e-12
    assert abs(sup.max() - 1.0) < 2 * grid.spacing[0] + 1e-12


def test_semicircle_alternate_scaling_doubles_support():
    """V = x^2/4 pushes the support out to [-2, 2]."""
    grid = Grid((-3.0,), (3.0,), (1536,))
    res = solve_equilibrium(log_kernel(1), QuadraticPotential(0.25), grid)
    x = grid.axes()[0][res.support_mask]
    assert abs(x.min() + 2.0) < 0.02
    assert abs(x.max() - 2.0) < 0.02
    sc = SemicircleEquilibrium(0.25)
    assert_allclose(sc.half_width, 2.0)


def test_disk_density_and_constant(disk_solution):
    res = disk_solution
    disk = DiskEquilibrium(1.0)
    grid = res.density.grid
    c = grid.centers()
    r = np.sqrt(np.sum(c ** 2, axis=-1))
    interior = r < 0.85 * disk.radius
    err = np.max(np.abs(res.density.values[interior] - 2.0 / np.pi))
    assert err < 1e-2
    assert abs(res.robin_constant - disk.robin_constant) < 5e-3
    assert abs(res.gg - disk.gg) < 5e-3
    assert abs(res.v_int - disk.v_int) < 5e-3


def test_objective_series_monotone(semicircle_solution):
    obj = semicircle_solution.objective_series
    assert len(obj) >= 2
    assert np.all(np.diff(obj) <= 1e-13)


def test_el_report(semicircle_solution):
    rep = verify_euler_lagrange(semicircle_solution, QuadraticPotential(1.0))
    assert rep.passed
    assert rep.residual_on <= 5e-3
    assert rep.residual_off <= 5e-3


def test_convergence_error_carries_result():
    grid = Grid((-2.0,), (2.0,), (256,))
    with pytest.raises(ConvergenceError) as ei:
        solve_equilibrium(log_kernel(1), QuadraticPotential(1.0), grid,
                          tol=1e-15, max_iter=5, fista_iters=5)
    assert ei.value.result is not None
    assert ei.value.result.density.mass() == pytest.approx(1.0)


def test_confinement_guard():
    # potential too weak to confine against -log on this window
    grid = Grid((-1.0,), (1.0,), (128,))
    with pytest.raises(UsageError):
        solve_equilibrium(log_kernel(1), QuadraticPotential(1e-4), grid)


def test_two_resolution_consistency():
    kernel = log_kernel(1)
    pot = QuadraticPotential(1.0)
    coarse = solve_equilibrium(kernel, pot, Grid((-2.0,), (2.0,), (256,)))
    fine = solve_equilibrium(kernel, pot, Grid((-2.0,), (2.0,), (512,)))
    assert abs(coarse.robin_constant - fine.robin_constant) < 2e-3
    assert abs(coarse.energy - fine.energy) < 2e-3


def test_density_formula_on_disk(disk_solution):
    grid = disk_solution.density.grid
    c = grid.centers()
    r = np.sqrt(np.sum(c ** 2, axis=-1))
    mask = r < 0.6
    dens = coulomb_density_formula(log_kernel(2), QuadraticPotential(1.0),
                                   grid, mask=mask)
    assert_allclose(dens.values[mask], 2.0 / np.pi, rtol=1e-12)
    # unmasked variant integrates the Laplacian over the box; just check
    # it reproduces the same interior values
    dens_full = coulomb_density_formula(log_kernel(2), QuadraticPotential(1.0), grid)
    assert_allclose(dens_full.values[mask], 2.0 / np.pi, rtol=1e-12)


def test_disk_field_laplacian(disk_solution):
    """el_field is phi = h + V, so -Laplacian(phi - V) = c_2 * mu: the FD
    Laplacian of phi equals Lap V - 2 pi mu, i.e. zero on the support and
    Lap V = 4 outside it."""
    res = disk_solution
    grid = res.density.grid
    phi = res.el_field
    dx = grid.spacing[0]
    lap = np.zeros_like(phi)
    lap[1:-1, 1:-1] = ((phi[2:, 1:-1] + phi[:-2, 1:-1] + phi[1:-1, 2:]
                        + phi[1:-1, :-2] - 4 * phi[1:-1, 1:-1]) / dx ** 2)
    c = grid.centers()
    r = np.sqrt(np.sum(c ** 2, axis=-1))
    inside = r < 0.6
    outside = r > 0.85
    outside[0, :] = outside[-1, :] = False
    outside[:, 0] = outside[:, -1] = False
    target = 4.0 - 2 * np.pi * res.density.values
    assert np.max(np.abs(lap[inside] - target[inside])) < 0.05
    assert np.max(np.abs(lap[outside] - 4.0)) < 0.05


def test_thermal_equilibrium_limits():
    kernel = log_kernel(1)
    pot = QuadraticPotential(1.0)
    grid = Grid((-2.0,), (2.0,), (512,))
    disk = SemicircleEquilibrium(1.0)
    exact = disk.on_grid(grid)
    dists = []
    for beta in (8.0, 32.0):
        th = thermal_equilibrium(kernel, pot, beta, grid)
        assert th.converged
        assert np.all(th.density.values > 0.0)
        assert th.density.mass() == pytest.approx(1.0, abs=1e-10)
        dists.append(coulomb_metric(th.density, exact, kernel))
    # crossover to the zero-temperature profile as beta grows
    assert dists[1] < dists[0]


def test_quartic_potential_support_shrinks():
    """Stronger confinement gives a smaller support."""
    kernel = log_kernel(1)
    grid = Grid((-2.0,), (2.0,), (512,))
    quad = solve_equilibrium(kernel, QuadraticPotential(1.0), grid)
    quart = solve_equilibrium(
        kernel, RadialPolynomialPotential((0.0, 1.0, 1.0)), grid)
    x = grid.axes()[0]
    assert x[quart.support_mask].max() < x[quad.support_mask].max()
    rep = verify_euler_lagrange(quart, RadialPolynomialPotential((0.0, 1.0, 1.0)))
    assert rep.passed
