import numpy as np
import pytest

from coulombgas.core import (QuadraticPotential, UsageError, log_kernel,
                             potential_numba_args, kernel_numba_args,
                             riesz_kernel)
from coulombgas import _kernels
from coulombgas.energy import min_pair_distance, split_energy
from coulombgas.equilibrium import DiskEquilibrium, SemicircleEquilibrium
from coulombgas.electric import (default_smearing_radius, electric_field,
                                 shell_charge, truncated_electric_energy)
from coulombgas.grids import Grid, GriddedDensity


@pytest.fixture(scope="module")
def polished_points():
    """Near-minimizer of the N=12 energy in the unit-strength disk."""
    rng = np.random.default_rng(11)
    n = 12
    disk = DiskEquilibrium(1.0)
    r = disk.radius * np.sqrt(rng.uniform(0, 1, n))
    th = rng.uniform(0, 2 * np.pi, n)
    pos = np.stack([r * np.cos(th), r * np.sin(th)], axis=1)
    code, p = kernel_numba_args(log_kernel(2))
    _, coeffs = potential_numba_args(QuadraticPotential(1.0))
    _kernels.gd_polish(pos, code, p, coeffs, 1e-9, 100000)
    return pos


def test_shell_charge_geometry():
    grid = Grid.cube(1.0, 128, 2)
    idx, masses = shell_charge(np.array([0.1, -0.2]), 0.08, grid)
    assert masses.sum() == pytest.approx(1.0)
    centers = np.array(grid.lo) + (idx + 0.5) * grid.spacing[0]
    dist = np.linalg.norm(centers - np.array([0.1, -0.2]), axis=1)
    h = grid.spacing[0]
    assert np.all(np.abs(dist - 0.08) <= 0.5 * h + 1e-15)


def test_converges_to_next_order_as_eta_halves(polished_points):
    """The renormalized field energy approaches the pairwise next-order
    term, losing at least half the discrepancy per eta-halving."""
    pos = polished_points
    disk = DiskEquilibrium(1.0)
    fn = split_energy(pos, log_kernel(2), QuadraticPotential(1.0), disk).next_order
    eta0 = default_smearing_radius(len(pos), 2)
    discrepancies = []
    for k in range(3):
        eta = eta0 / 2 ** k
        n = int(round(1.6 / (eta / 4)))
        res = truncated_electric_energy(pos, disk, eta, Grid.cube(0.8, n, 2))
        assert not res.eta_warning
        discrepancies.append(abs(res.value - fn))
    assert discrepancies[1] < 0.6 * discrepancies[0]
    assert discrepancies[2] < 0.6 * discrepancies[1]


def test_single_point_padding_independence():
    disk = DiskEquilibrium(1.0)
    x = np.zeros((1, 2))
    grid = Grid.cube(0.8, 256, 2)
    vals = [truncated_electric_energy(x, disk, 0.05, grid, pad=pad).value
            for pad in (2, 3, 4)]
    assert max(vals) - min(vals) < 1e-3
    f1 = split_energy(x, log_kernel(2), QuadraticPotential(1.0), disk).next_order
    assert abs(vals[0] - f1) < 1e-2


def test_translation_of_everything_is_exact():
    """Shifting points, background, and grid window together (by dyadic
    amounts, so the cell geometry is bitwise identical) leaves the value
    unchanged."""
    disk = DiskEquilibrium(1.0)
    g1 = Grid.cube(1.0, 128, 2)
    mu1 = disk.on_grid(g1)
    pos = np.array([[0.125, 0.25], [-0.375, 0.0625], [0.25, -0.3125]])
    v1 = truncated_electric_energy(pos, mu1, 0.0625, g1).value
    t = np.array([0.25, -0.5])
    g2 = Grid((-1.0 + t[0], -1.0 + t[1]), (1.0 + t[0], 1.0 + t[1]),
              (128, 128))
    mu2 = GriddedDensity(g2, mu1.values)
    v2 = truncated_electric_energy(pos + t, mu2, 0.0625, g2).value
    assert abs(v2 - v1) < 1e-8


def test_permutation_invariance_is_exact(polished_points):
    disk = DiskEquilibrium(1.0)
    grid = Grid.cube(0.8, 160, 2)
    v1 = truncated_electric_energy(polished_points, disk, 0.05, grid).value
    perm = np.random.default_rng(5).permutation(len(polished_points))
    v2 = truncated_electric_energy(polished_points[perm], disk, 0.05, grid).value
    assert v1 == v2


def test_usage_errors():
    disk = DiskEquilibrium(1.0)
    grid = Grid.cube(0.8, 100, 2)
    pos = np.array([[0.1, 0.2], [-0.2, 0.1]])
    with pytest.raises(UsageError):
        truncated_electric_energy(pos, disk, 0.02, grid)  # eta < 2h
    with pytest.raises(UsageError):
        truncated_electric_energy(pos, disk, -0.1, grid)
    with pytest.raises(UsageError):
        truncated_electric_energy(pos, disk, 0.05, None)
    bad = GriddedDensity(grid, disk.on_grid(grid).values * 0.9,
                         normalized=False)
    with pytest.raises(UsageError):
        truncated_electric_energy(pos, bad, 0.05, grid)
    other = Grid.cube(0.9, 100, 2)
    with pytest.raises(UsageError):
        truncated_electric_energy(pos, disk.on_grid(other), 0.05, grid)
    sc = SemicircleEquilibrium(1.0)
    with pytest.raises(UsageError):
        truncated_electric_energy(np.array([[0.1], [0.3]]), sc, 0.05,
                                  Grid((-2.0,), (2.0,), (512,)))
    with pytest.raises(UsageError):
        truncated_electric_energy(pos, disk, 0.05, grid,
                                  kernel=riesz_kernel(1.0, 2))


def test_eta_warning_flags_overlapping_shells():
    disk = DiskEquilibrium(1.0)
    grid = Grid.cube(0.8, 128, 2)
    pos = np.array([[0.1, 0.0], [-0.1, 0.0]])
    mp = min_pair_distance(pos)
    assert truncated_electric_energy(pos, disk, 0.45 * mp, grid).eta_warning \
        is False
    assert truncated_electric_energy(pos, disk, 0.55 * mp, grid).eta_warning \
        is True


def test_field_satisfies_poisson_identity():
    """Away from the shells, the finite-difference Laplacian of the solved
    potential matches -c_2 times the charge (pure background there)."""
    disk = DiskEquilibrium(1.0)
    grid = Grid.cube(1.0, 256, 2)
    mu = disk.on_grid(grid)
    pos = np.array([[0.125, 0.25], [-0.375, 0.0625], [0.25, -0.3125]])
    eta = 0.0625
    field = electric_field(pos, mu, eta, grid)
    hh = grid.spacing[0]
    H = field.values
    lap = np.zeros_like(H)
    lap[1:-1, 1:-1] = (H[2:, 1:-1] + H[:-2, 1:-1] + H[1:-1, 2:]
                       + H[1:-1, :-2] - 4 * H[1:-1, 1:-1]) / hh ** 2
    c = grid.centers()
    r = np.sqrt(np.sum(c ** 2, axis=-1))
    far = np.min(np.linalg.norm(c[..., None, :] - pos[None, None, :, :],
                                axis=-1), axis=-1) > 3 * eta
    inside = (r < 0.55) & far
    target = -2 * np.pi * len(pos) * (2 / np.pi)
    assert np.max(np.abs(-lap[inside] - target)) < 0.02 * abs(target)
    outside = (r > 0.95) & (r < 0.98)
    assert np.max(np.abs(lap[outside])) < 0.01
    assert field.gradient.shape == grid.shape + (2,)
