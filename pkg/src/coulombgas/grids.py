"""Uniform tensor-product grids, gridded densities and fields, and fast
convolution against the pair kernel.

Quadrature convention: integrals are cell-midpoint sums. Convolutions
against the singular kernel replace the diagonal (self-cell) entry by the
analytic average of g over one cell, which keeps the quadrature second
order despite the singularity.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import fft as sfft

from .core import (COULOMB, LOG, RIESZ, GridMismatchError, Kernel, UsageError)

FLOAT_FMT = "%.17g"

# average of -log|z| over the unit square, i.e. 3/2 + (log 2)/2 - pi/4
LOG2_CELL_MEAN = 1.5 + 0.5 * math.log(2.0) - math.pi / 4.0
# average of 1/|z| over the unit cube (quadrature-verified constant)
COULOMB3_CELL_MEAN = 2.3800773639795075


@dataclass(frozen=True)
class Grid:
    """Axis-aligned box [lo, hi] split into shape[i] equal cells per axis."""

    lo: tuple
    hi: tuple
    shape: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lo))
        hi = tuple(float(v) for v in np.atleast_1d(self.hi))
        shape = tuple(int(v) for v in np.atleast_1d(self.shape))
        if not (len(lo) == len(hi) == len(shape)):
            raise UsageError("lo, hi, shape must have equal length")
        if any(n < 2 for n in shape):
            raise UsageError("need at least 2 cells per axis")
        if any(b <= a for a, b in zip(lo, hi)):
            raise UsageError("hi must exceed lo on every axis")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "shape", shape)

    @classmethod
    def cube(cls, half_width, n, d):
        """Centered cube [-half_width, half_width]^d with n cells per axis."""
        return cls((-half_width,) * d, (half_width,) * d, (n,) * d)

    @property
    def d(self):
        return len(self.shape)

    @property
    def spacing(self):
        return tuple((b - a) / n for a, b, n in zip(self.lo, self.hi, self.shape))

    @property
    def cell_volume(self):
        return float(np.prod(self.spacing))

    def axes(self):
        """Cell-center coordinates along each axis."""
        return tuple(a + (np.arange(n) + 0.5) * h
                     for a, n, h in zip(self.lo, self.shape, self.spacing))

    def centers(self):
        """Cell centers, shape self.shape + (d,)."""
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack(mesh, axis=-1)

    def flat_centers(self):
        return self.centers().reshape(-1, self.d)

    def contains(self, points):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        lo = np.array(self.lo)
        hi = np.array(self.hi)
        return np.all((points >= lo) & (points <= hi), axis=-1)

    def index_of(self, points):
        """Cell indices containing each point, clipped to the grid."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        lo = np.array(self.lo)
        h = np.array(self.spacing)
        idx = np.floor((points - lo) / h).astype(int)
        return np.clip(idx, 0, np.array(self.shape) - 1)


class GriddedDensity:
    """Nonnegative cell-center density values on a grid.

    A probability density has (sum of values) * cell_volume == 1; the
    constructor enforces this unless ``normalized=False`` (used for raw
    candidate densities whose mass the caller wants to inspect).
    """

    def __init__(self, grid, values, normalized=True):
        if not isinstance(grid, Grid):
            raise UsageError("expected a Grid")
        values = np.asarray(values, dtype=float)
        if values.shape != grid.shape:
            raise UsageError(
                f"values shape {values.shape} does not match grid {grid.shape}")
        if not np.all(np.isfinite(values)):
            raise UsageError("density values must be finite")
        if np.any(values < 0.0):
            raise UsageError("density values must be nonnegative")
        self.grid = grid
        self.values = values.copy()
        self.values.setflags(write=False)
        self.normalized = bool(normalized)
        if self.normalized and abs(self.mass() - 1.0) > 1e-12:
            raise UsageError(
                f"density mass {self.mass():.17g} != 1; pass normalized=False "
                "or renormalize first")

    @classmethod
    def normalize(cls, grid, values):
        """Rescale nonnegative values to unit mass and wrap them."""
        values = np.asarray(values, dtype=float)
        total = np.sum(values) * grid.cell_volume
        if not total > 0.0:
            raise UsageError("cannot normalize a density with zero mass")
        return cls(grid, values / total)

    def mass(self):
        return float(np.sum(self.values) * self.grid.cell_volume)

    def quadrature(self, integrand_values):
        """Midpoint quadrature of integrand * density over the box."""
        integrand_values = np.asarray(integrand_values, dtype=float)
        if integrand_values.shape != self.grid.shape:
            raise GridMismatchError("integrand is not on the density grid")
        return float(np.sum(integrand_values * self.values) * self.grid.cell_volume)

    def to_csv(self, path):
        save_gridded_csv(path, self.grid, {"density": self.values})

    @classmethod
    def from_csv(cls, path, normalized=True):
        grid, cols = load_gridded_csv(path)
        return cls(grid, cols["density"], normalized=normalized)


class GriddedField:
    """Scalar potential values plus gradient components on a grid."""

    def __init__(self, grid, values, gradient):
        if not isinstance(grid, Grid):
            raise UsageError("expected a Grid")
        values = np.asarray(values, dtype=float)
        gradient = np.asarray(gradient, dtype=float)
        if values.shape != grid.shape:
            raise UsageError("field values do not match the grid")
        if gradient.shape != grid.shape + (grid.d,):
            raise UsageError("gradient must have shape grid.shape + (d,)")
        self.grid = grid
        self.values = values.copy()
        self.gradient = gradient.copy()
        self.values.setflags(write=False)
        self.gradient.setflags(write=False)

    def to_csv(self, path):
        cols = {"value": self.values}
        for k in range(self.grid.d):
            cols[f"grad{k}"] = self.gradient[..., k]
        save_gridded_csv(path, self.grid, cols)

    @classmethod
    def from_csv(cls, path):
        grid, cols = load_gridded_csv(path)
        grad = np.stack([cols[f"grad{k}"] for k in range(grid.d)], axis=-1)
        return cls(grid, cols["value"], grad)


def save_gridded_csv(path, grid, columns):
    """Write named cell arrays in row-major order under a grid header."""
    names = list(columns)
    arrays = [np.asarray(columns[n], dtype=float).reshape(-1) for n in names]
    with open(path, "w") as fh:
        fh.write(f"# grid d={grid.d}\n")
        fh.write("# lo = " + " ".join(FLOAT_FMT % v for v in grid.lo) + "\n")
        fh.write("# hi = " + " ".join(FLOAT_FMT % v for v in grid.hi) + "\n")
        fh.write("# shape = " + " ".join(str(n) for n in grid.shape) + "\n")
        fh.write(",".join(names) + "\n")
        for row in zip(*arrays):
            fh.write(",".join(FLOAT_FMT % v for v in row) + "\n")


def load_gridded_csv(path):
    header = {}
    with open(path) as fh:
        lines = fh.read().splitlines()
    body_start = 0
    for i, line in enumerate(lines):
        if line.startswith("#"):
            text = line[1:].strip()
            if "=" in text:
                key, _, val = text.partition("=")
                header[key.strip()] = val.strip()
        else:
            body_start = i
            break
    lo = tuple(float(v) for v in header["lo"].split())
    hi = tuple(float(v) for v in header["hi"].split())
    shape = tuple(int(v) for v in header["shape"].split())
    grid = Grid(lo, hi, shape)
    names = lines[body_start].split(",")
    data = np.array([[float(v) for v in line.split(",")]
                     for line in lines[body_start + 1:] if line], dtype=float)
    cols = {n: data[:, j].reshape(shape) for j, n in enumerate(names)}
    return grid, cols


def kernel_cell_mean(kernel, spacing):
    """Average of g over a single grid cell centered at the origin.

    Exact for log kernels (d = 1, 2, square cells) and Coulomb d = 3 (cubic
    cells); Riesz and d >= 4 use the equal-volume ball average, which keeps
    the correct scaling in the spacing.
    """
    spacing = tuple(spacing)
    h = spacing[0]
    if max(spacing) - min(spacing) > 1e-12 * h:
        raise UsageError("kernel quadrature requires square cells")
    d = len(spacing)
    if kernel.family == LOG:
        if d == 1:
            return 1.0 + math.log(2.0) - math.log(h)
        return LOG2_CELL_MEAN - math.log(h)
    if kernel.family == COULOMB and d == 3:
        return COULOMB3_CELL_MEAN / h
    # equal-volume ball: mean of r^p over the ball of radius r_eq
    p = kernel.power
    ball_vol = math.pi ** (d / 2.0) / math.gamma(d / 2.0 + 1.0)
    r_eq = h / ball_vol ** (1.0 / d)
    return d / (d + p) * r_eq ** p


def kernel_tableau(grid, kernel):
    """g evaluated at all cell-center offsets, with the analytic self-cell mean
    at zero offset. Shape (2 n_0 - 1, ..., 2 n_{d-1} - 1)."""
    if kernel.d != grid.d:
        raise UsageError(f"kernel dimension {kernel.d} != grid dimension {grid.d}")
    offs = [h * np.arange(-(n - 1), n) for n, h in zip(grid.shape, grid.spacing)]
    mesh = np.meshgrid(*offs, indexing="ij")
    r2 = np.zeros_like(mesh[0])
    for m in mesh:
        r2 += m * m
    center = tuple(n - 1 for n in grid.shape)
    r2[center] = 1.0  # placeholder, overwritten below
    r = np.sqrt(r2)
    if kernel.family == LOG:
        tab = -np.log(r)
    else:
        tab = r ** kernel.power
    tab[center] = kernel_cell_mean(kernel, grid.spacing)
    return tab


class KernelConvolver:
    """Fast evaluation of h = g * mu on a grid via circulant embedding.

    apply(values) returns cell_volume * sum_j tab[i - j] values[j], i.e. the
    midpoint quadrature of the convolution with the self-cell correction.
    """

    def __init__(self, grid, kernel):
        self.grid = grid
        self.kernel = kernel
        tab = kernel_tableau(grid, kernel)
        shape = grid.shape
        emb_shape = tuple(2 * n for n in shape)
        emb = np.zeros(emb_shape)
        # signed offset o lands at index o mod 2n; index n stays zero and is
        # never hit by a difference of in-range cell indices
        slicer = tuple(np.arange(-(n - 1), n) % (2 * n) for n in shape)
        idx = np.ix_(*slicer)
        emb[idx] = tab
        self._emb_shape = emb_shape
        self._what = sfft.rfftn(emb)

    def apply(self, values):
        values = np.asarray(values, dtype=float)
        if values.shape != self.grid.shape:
            raise GridMismatchError("values are not on the convolver grid")
        vhat = sfft.rfftn(values, s=self._emb_shape)
        out = sfft.irfftn(vhat * self._what, s=self._emb_shape)
        sl = tuple(slice(0, n) for n in self.grid.shape)
        return out[sl] * self.grid.cell_volume

    def operator_norm_bound(self):
        """Upper bound on the spectral norm of the dense kernel matrix
        (eigenvalue bound of the circulant embedding)."""
        return float(np.max(np.abs(self._what)))


_convolver_cache = {}


def get_convolver(grid, kernel):
    key = (grid, kernel)
    if key not in _convolver_cache:
        if len(_convolver_cache) > 32:
            _convolver_cache.clear()
        _convolver_cache[key] = KernelConvolver(grid, kernel)
    return _convolver_cache[key]


def kernel_convolve(grid, values, kernel):
    """One-off h = g * (values) on the grid (cached convolver underneath)."""
    return get_convolver(grid, kernel).apply(values)
