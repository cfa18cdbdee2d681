"""Total energy, forces, energy splitting around an equilibrium measure, and
the kernel-weighted distance between densities.

Splitting convention: for a reference probability density mu with potential
h = g * mu, double integral gg = int g d(mu x mu) and v_int = int V dmu,

    H(x) = N^2 I[mu] + cross(x) + next_order(x)

with I[mu] = gg/2 + v_int,
    cross      = N sum_i (h + V)(x_i) - 2 N^2 I[mu] + N^2 v_int,
    next_order = sum_{i<j} g(x_i - x_j) - N sum_i h(x_i) + (N^2/2) gg.

The identity is algebraic, so the reconstruction matches the direct energy
to rounding error for any configuration; when mu is the minimizer of I the
cross term is O(N) small (zero where the Euler-Lagrange field is flat).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .core import (CoincidentPointsError, Configuration, GridMismatchError,
                   Kernel, UsageError, kernel_numba_args, potential_numba_args)
from .grids import GriddedDensity, get_convolver, kernel_cell_mean


def _positions(config):
    if isinstance(config, Configuration):
        return config.positions
    pos = np.asarray(config, dtype=float)
    if pos.ndim != 2:
        raise UsageError("expected a Configuration or an (N, d) array")
    return pos


def _check_dims(pos, kernel):
    if pos.shape[1] != kernel.d:
        raise UsageError(
            f"configuration dimension {pos.shape[1]} != kernel dimension {kernel.d}")


def _canonical_order(pos):
    """Lexicographic point order, so relabeling cannot change rounding."""
    return pos[np.lexsort(pos.T[::-1])]


def interaction_energy(config, kernel):
    """sum_{i<j} g(x_i - x_j)."""
    pos = _positions(config)
    _check_dims(pos, kernel)
    if pos.shape[0] < 2:
        return 0.0
    pos = _canonical_order(pos)
    code, p = kernel_numba_args(kernel)
    pair, min_r2 = _kernels.pair_energy_min(pos, code, p)
    if min_r2 <= 0.0:
        raise CoincidentPointsError("two points coincide")
    return float(pair)


def hamiltonian(config, kernel, potential):
    """H = sum_{i<j} g(x_i - x_j) + N sum_i V(x_i)."""
    pos = _canonical_order(_positions(config))
    n = pos.shape[0]
    pair = interaction_energy(pos, kernel) if n > 1 else 0.0
    v = float(np.sum(potential.value(pos)))
    return pair + n * v


def mean_field_forces(config, kernel, potential):
    """F_i = -(1/N) grad_i H, shape (N, d)."""
    pos = _positions(config)
    _check_dims(pos, kernel)
    n = pos.shape[0]
    code, p = kernel_numba_args(kernel)
    out = np.zeros_like(pos)
    if n > 1:
        min_r2 = _kernels.interaction_gradients(pos, code, p, out)
        if min_r2 <= 0.0:
            raise CoincidentPointsError("two points coincide")
    return -out / n - potential.gradient(pos)


def min_pair_distance(config):
    pos = _positions(config)
    if pos.shape[0] < 2:
        return math.inf
    _, min_r2 = _kernels.pair_energy_min(pos, 1, 0.0)
    return math.sqrt(min_r2)


def delta_energy(config, kernel, potential, index, new_position):
    """H(x with x_index -> new_position) - H(x), computed in O(N)."""
    pos = _positions(config)
    _check_dims(pos, kernel)
    n = pos.shape[0]
    if not 0 <= index < n:
        raise UsageError(f"index {index} out of range for N={n}")
    new = np.asarray(new_position, dtype=float).reshape(-1)
    if new.shape != (pos.shape[1],):
        raise UsageError("new_position must be a single point of matching dimension")
    old = pos[index]
    others = np.delete(pos, index, axis=0)
    if n > 1:
        r2_new = np.sum((others - new) ** 2, axis=1)
        r2_old = np.sum((others - old) ** 2, axis=1)
        if np.any(r2_new == 0.0) or np.any(r2_old == 0.0):
            raise CoincidentPointsError("coincident pair in delta_energy")
        if kernel.is_log:
            dpair = -0.5 * float(np.sum(np.log(r2_new)) - np.sum(np.log(r2_old)))
        else:
            hp = 0.5 * kernel.power
            dpair = float(np.sum(r2_new ** hp) - np.sum(r2_old ** hp))
    else:
        dpair = 0.0
    dv = float(potential.value(new) - potential.value(old))
    return dpair + n * dv


def background_potential(source, points, kernel):
    """h(x) = int g(x - y) dmu(y) at the given points.

    ``source`` is either a GriddedDensity (midpoint quadrature with the
    analytic self-cell average for the cell containing each point) or any
    object exposing ``potential_at(points)`` (closed-form equilibria).
    """
    points = np.asarray(points, dtype=float)
    single = points.ndim == 1
    pts = np.atleast_2d(points)
    if pts.shape[1] != kernel.d:
        raise UsageError("point dimension does not match the kernel")
    if hasattr(source, "potential_at"):
        out = np.asarray(source.potential_at(pts), dtype=float)
        return float(out[0]) if single else out
    if not isinstance(source, GriddedDensity):
        raise UsageError("source must be a GriddedDensity or expose potential_at")
    grid = source.grid
    if grid.d != kernel.d:
        raise UsageError("grid dimension does not match the kernel")
    code, p = kernel_numba_args(kernel)
    mean = kernel_cell_mean(kernel, grid.spacing)
    if grid.d == 1:
        out = _kernels.grid_potential_d1(pts, grid.lo[0], grid.spacing[0],
                                         source.values, code, p, mean)
    elif grid.d == 2:
        out = _kernels.grid_potential_d2(pts, grid.lo[0], grid.lo[1],
                                         grid.spacing[0], grid.spacing[1],
                                         source.values, code, p, mean)
    else:
        out = _grid_potential_generic(source, pts, kernel, mean)
    return float(out[0]) if single else out


def _grid_potential_generic(source, pts, kernel, mean):
    grid = source.grid
    centers = grid.flat_centers()
    masses = source.values.reshape(-1) * grid.cell_volume
    out = np.empty(len(pts))
    inside = grid.contains(pts)
    idx = grid.index_of(pts)
    flat_idx = np.ravel_multi_index(tuple(idx.T), grid.shape)
    for q in range(len(pts)):
        r = np.sqrt(np.sum((centers - pts[q]) ** 2, axis=1))
        if inside[q]:
            r[flat_idx[q]] = 1.0
        vals = kernel.value_of_norm(np.where(r > 0, r, 1.0))
        if inside[q]:
            vals[flat_idx[q]] = mean
        out[q] = np.dot(vals, masses)
    return out


def double_kernel_integral(density, kernel):
    """int int g(x - y) dmu(x) dmu(y) by grid quadrature."""
    conv = get_convolver(density.grid, kernel)
    h = conv.apply(density.values)
    return float(np.sum(h * density.values) * density.grid.cell_volume)


@dataclass(frozen=True)
class SplitEnergy:
    """Decomposition H = leading + cross + next_order around a reference density."""

    leading: float
    cross: float
    next_order: float
    hamiltonian: float

    @property
    def reconstruction(self):
        return self.leading + self.cross + self.next_order

    @property
    def relative_error(self):
        scale = max(abs(self.hamiltonian), 1.0)
        return abs(self.hamiltonian - self.reconstruction) / scale


class _DensityReference:
    """Adapter giving a bare GriddedDensity the equilibrium-result interface."""

    def __init__(self, density, kernel, potential):
        self.density = density
        self.kernel = kernel
        self.gg = double_kernel_integral(density, kernel)
        vvals = potential.value(density.grid.centers())
        self.v_int = density.quadrature(vvals)

    def potential_at(self, points):
        return background_potential(self.density, points, self.kernel)


def split_energy(config, kernel, potential, reference):
    """Split H into leading, cross, and next-order parts around ``reference``.

    ``reference`` is an equilibrium result (anything with potential_at, gg,
    v_int) or a GriddedDensity, in which case gg and v_int are computed by
    grid quadrature.
    """
    pos = _canonical_order(_positions(config))
    _check_dims(pos, kernel)
    n = pos.shape[0]
    if isinstance(reference, GriddedDensity):
        reference = _DensityReference(reference, kernel, potential)
    h_vals = np.asarray(reference.potential_at(pos), dtype=float)
    gg = float(reference.gg)
    v_int = float(reference.v_int)
    i_mu = 0.5 * gg + v_int
    sum_h = float(np.sum(h_vals))
    sum_v = float(np.sum(potential.value(pos)))
    pair = interaction_energy(pos, kernel) if n > 1 else 0.0
    leading = n * n * i_mu
    cross = n * sum_h + n * sum_v - 2.0 * n * n * i_mu + n * n * v_int
    next_order = pair - n * sum_h + 0.5 * n * n * gg
    total = pair + n * sum_v
    return SplitEnergy(leading, cross, next_order, total)


def coulomb_metric(mu, nu, kernel):
    """Kernel-weighted L2 distance d(mu, nu) = (int int g d(mu-nu) d(mu-nu))^(1/2).

    Evaluated through the Fourier factorization of the convolution; the
    kernel has nonnegative Fourier transform on mean-zero differences, so the
    quadratic form is nonnegative up to rounding, and tiny negative round-off
    is clamped to zero.
    """
    if not isinstance(mu, GriddedDensity) or not isinstance(nu, GriddedDensity):
        raise UsageError("coulomb_metric expects two GriddedDensity operands")
    if mu.grid != nu.grid:
        raise GridMismatchError("densities live on different grids")
    delta = mu.values - nu.values
    conv = get_convolver(mu.grid, kernel)
    q = conv.apply(delta)
    d2 = float(np.sum(delta * q) * mu.grid.cell_volume)
    if d2 < 0.0:
        d2 = 0.0
    return math.sqrt(d2)
