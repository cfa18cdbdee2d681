"""Kernels, confining potentials, and point configurations.

Energy convention used throughout the package:

    H(x_1, ..., x_N) = (1/2) sum_{i != j} g(x_i - x_j) + N sum_i V(x_i)

with the pair kernel g one of

    -log|x|      d = 1 or 2
    |x|^(2-d)    d >= 3
    |x|^(-s)     Riesz, max(0, d-2) <= s < d

The distributional identity -Delta g = c_d delta_0 holds for -log|x| in
d = 2 (c_2 = 2 pi) and for |x|^(2-d) in d >= 3 (c_d = (d-2) |S^{d-1}|).
It has no analog for -log|x| in d = 1 or for Riesz exponents s != d - 2.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

LOG = "log"
COULOMB = "coulomb"
RIESZ = "riesz"


class UsageError(ValueError):
    """Invalid arguments or inconsistent objects passed by the caller."""


class CoincidentPointsError(UsageError):
    """Kernel or gradient evaluated at zero separation."""


class GridMismatchError(UsageError):
    """Operands live on different grids."""


class ConvergenceError(RuntimeError):
    """Iteration stopped before reaching tolerance.

    The best iterate reached is attached as ``.result``.
    """

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class CollisionError(RuntimeError):
    """Two points collided during time integration; ``.time`` is the failure time."""

    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time


def sphere_area(d):
    """Surface area of the unit sphere S^{d-1} in R^d."""
    return 2.0 * math.pi ** (d / 2.0) / math.gamma(d / 2.0)


@dataclass(frozen=True)
class Kernel:
    """Repulsive pair kernel together with its ambient dimension.

    ``s`` is only meaningful for the Riesz family; log and Coulomb kernels
    keep it at 0. Use the module-level constructors instead of instantiating
    directly.
    """

    family: str
    d: int
    s: float = 0.0

    def __post_init__(self):
        if self.d < 1:
            raise UsageError(f"dimension must be >= 1, got d={self.d}")
        if self.family == LOG:
            if self.d not in (1, 2):
                raise UsageError("-log|x| kernel is restricted to d = 1 or 2")
        elif self.family == COULOMB:
            if self.d < 3:
                raise UsageError("|x|^(2-d) kernel requires d >= 3")
        elif self.family == RIESZ:
            lo = max(0.0, self.d - 2.0)
            if not lo <= self.s < self.d:
                raise UsageError(
                    "Riesz exponent must satisfy max(0, d-2) <= s < d, "
                    f"got s={self.s} in d={self.d}")
        else:
            raise UsageError(f"unknown kernel family {self.family!r}")

    @property
    def is_log(self):
        return self.family == LOG

    @property
    def power(self):
        """Exponent p with g = |x|^p, or None for the log family."""
        if self.family == LOG:
            return None
        if self.family == COULOMB:
            return 2.0 - self.d
        return -self.s

    @property
    def laplace_constant(self):
        """c_d in -Delta g = c_d delta_0.

        Defined for -log|x| in d = 2 and for |x|^(2-d) in d >= 3.
        """
        if self.family == LOG and self.d == 2:
            return 2.0 * math.pi
        if self.family == COULOMB:
            return (self.d - 2.0) * sphere_area(self.d)
        raise UsageError(
            f"no Laplacian identity for family={self.family!r} in d={self.d}")

    def value_of_norm(self, r):
        """g as a function of separation |x|; vectorized over arrays."""
        r = np.asarray(r, dtype=float)
        if np.any(r <= 0.0):
            raise CoincidentPointsError("kernel evaluated at zero separation")
        if self.family == LOG:
            return -np.log(r)
        return r ** self.power

    def value(self, dx):
        """g(dx) for displacement vectors dx of shape (..., d)."""
        dx = _check_displacement(self, dx)
        return self.value_of_norm(np.sqrt(np.sum(dx * dx, axis=-1)))

    def gradient(self, dx):
        """grad g(dx), shape (..., d)."""
        dx = _check_displacement(self, dx)
        r2 = np.sum(dx * dx, axis=-1)
        if np.any(r2 == 0.0):
            raise CoincidentPointsError("kernel gradient at zero separation")
        if self.family == LOG:
            return -dx / r2[..., None]
        p = self.power
        return p * r2[..., None] ** (p / 2.0 - 1.0) * dx


def _check_displacement(kernel, dx):
    dx = np.asarray(dx, dtype=float)
    if dx.shape[-1] != kernel.d:
        raise UsageError(
            f"displacement has dimension {dx.shape[-1]}, kernel expects {kernel.d}")
    return dx


def log_kernel(d=2):
    return Kernel(LOG, d)


def coulomb_kernel(d=3):
    return Kernel(COULOMB, d)


def riesz_kernel(s, d):
    return Kernel(RIESZ, d, float(s))


@dataclass(frozen=True)
class QuadraticPotential:
    """V(x) = alpha |x|^2."""

    alpha: float = 1.0

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return self.alpha * np.sum(x * x, axis=-1)

    def gradient(self, x):
        x = np.asarray(x, dtype=float)
        return 2.0 * self.alpha * x

    def laplacian(self, x):
        x = np.asarray(x, dtype=float)
        d = x.shape[-1]
        return np.full(x.shape[:-1], 2.0 * self.alpha * d)


@dataclass(frozen=True)
class RadialPolynomialPotential:
    """V(x) = sum_k coeffs[k] |x|^(2k), an even polynomial in |x|.

    Even powers keep V smooth at the origin; coeffs[0] is a constant shift.
    """

    coeffs: tuple

    def __post_init__(self):
        object.__setattr__(self, "coeffs", tuple(float(c) for c in self.coeffs))
        if len(self.coeffs) == 0:
            raise UsageError("need at least one coefficient")

    def value(self, x):
        x = np.asarray(x, dtype=float)
        r2 = np.sum(x * x, axis=-1)
        out = np.zeros_like(r2)
        for k in range(len(self.coeffs) - 1, -1, -1):
            out = out * r2 + self.coeffs[k]
        return out

    def gradient(self, x):
        x = np.asarray(x, dtype=float)
        r2 = np.sum(x * x, axis=-1)
        # dV/d(r^2) evaluated by Horner, then grad = 2 x dV/d(r^2)
        dv = np.zeros_like(r2)
        for k in range(len(self.coeffs) - 1, 0, -1):
            dv = dv * r2 + k * self.coeffs[k]
        return 2.0 * dv[..., None] * x

    def laplacian(self, x):
        x = np.asarray(x, dtype=float)
        d = x.shape[-1]
        r2 = np.sum(x * x, axis=-1)
        out = np.zeros_like(r2)
        for k in range(len(self.coeffs) - 1, 0, -1):
            out = out * r2 + 2.0 * k * (2.0 * k + d - 2.0) * self.coeffs[k]
        return out


class TabulatedPotential:
    """Confinement given by values on a grid, evaluated by multilinear interpolation.

    The gradient is the exact gradient of the interpolant. No Laplacian is
    provided since the interpolant is not twice differentiable.
    """

    def __init__(self, grid, values):
        from .grids import Grid  # deferred to avoid an import cycle

        if not isinstance(grid, Grid):
            raise UsageError("TabulatedPotential needs a Grid")
        values = np.asarray(values, dtype=float)
        if values.shape != grid.shape:
            raise UsageError(
                f"value array shape {values.shape} does not match grid {grid.shape}")
        if not np.all(np.isfinite(values)):
            raise UsageError("tabulated values must be finite")
        if grid.d > 2:
            raise UsageError("tabulated potentials support d <= 2")
        self.grid = grid
        self.values = values.copy()
        self.values.setflags(write=False)

    def _locate(self, x):
        g = self.grid
        x = np.atleast_2d(np.asarray(x, dtype=float))
        lo = np.array([ax[0] for ax in g.axes()])
        hi = np.array([ax[-1] for ax in g.axes()])
        if np.any(x < lo - 1e-12) or np.any(x > hi + 1e-12):
            raise UsageError("point outside the tabulated region")
        h = np.array(g.spacing)
        t = (x - lo) / h
        i = np.clip(np.floor(t).astype(int), 0, np.array(g.shape) - 2)
        frac = t - i
        return i, frac

    def value(self, x):
        x = np.asarray(x, dtype=float)
        scalar = x.ndim == 1
        i, f = self._locate(x)
        v = self.values
        if self.grid.d == 1:
            i0 = i[:, 0]
            out = v[i0] * (1 - f[:, 0]) + v[i0 + 1] * f[:, 0]
        else:
            i0, i1 = i[:, 0], i[:, 1]
            fx, fy = f[:, 0], f[:, 1]
            out = (v[i0, i1] * (1 - fx) * (1 - fy)
                   + v[i0 + 1, i1] * fx * (1 - fy)
                   + v[i0, i1 + 1] * (1 - fx) * fy
                   + v[i0 + 1, i1 + 1] * fx * fy)
        return out[0] if scalar else out.reshape(x.shape[:-1])

    def gradient(self, x):
        x = np.asarray(x, dtype=float)
        scalar = x.ndim == 1
        i, f = self._locate(x)
        v = self.values
        h = self.grid.spacing
        if self.grid.d == 1:
            i0 = i[:, 0]
            out = ((v[i0 + 1] - v[i0]) / h[0])[:, None]
        else:
            i0, i1 = i[:, 0], i[:, 1]
            fx, fy = f[:, 0], f[:, 1]
            gx = ((v[i0 + 1, i1] - v[i0, i1]) * (1 - fy)
                  + (v[i0 + 1, i1 + 1] - v[i0, i1 + 1]) * fy) / h[0]
            gy = ((v[i0, i1 + 1] - v[i0, i1]) * (1 - fx)
                  + (v[i0 + 1, i1 + 1] - v[i0 + 1, i1]) * fx) / h[1]
            out = np.stack([gx, gy], axis=-1)
        return out[0] if scalar else out.reshape(x.shape)

    def laplacian(self, x):
        raise UsageError("tabulated potentials are not twice differentiable")


@dataclass(frozen=True)
class Configuration:
    """N points in R^d, optionally with velocities. Arrays are read-only."""

    positions: np.ndarray
    velocities: np.ndarray | None = None

    def __post_init__(self):
        pos = np.array(self.positions, dtype=float)
        if pos.ndim != 2 or pos.shape[0] < 1 or pos.shape[1] < 1:
            raise UsageError(f"positions must have shape (N, d), got {pos.shape}")
        if not np.all(np.isfinite(pos)):
            raise UsageError("positions must be finite")
        pos.setflags(write=False)
        object.__setattr__(self, "positions", pos)
        if self.velocities is not None:
            vel = np.array(self.velocities, dtype=float)
            if vel.shape != pos.shape:
                raise UsageError("velocities must match positions in shape")
            if not np.all(np.isfinite(vel)):
                raise UsageError("velocities must be finite")
            vel.setflags(write=False)
            object.__setattr__(self, "velocities", vel)

    @property
    def n(self):
        return self.positions.shape[0]

    @property
    def d(self):
        return self.positions.shape[1]

    def with_positions(self, positions, velocities=None):
        return Configuration(positions, velocities)


def uniform_ball_configuration(n, d, radius=1.0, seed=0):
    """n points drawn uniformly from the ball of given radius (helper for tests
    and experiment scripts)."""
    rng = np.random.default_rng(seed)
    pts = np.empty((n, d))
    k = 0
    while k < n:
        cand = rng.uniform(-radius, radius, size=(2 * (n - k) + 8, d))
        good = cand[np.sum(cand * cand, axis=1) <= radius * radius]
        take = min(len(good), n - k)
        pts[k:k + take] = good[:take]
        k += take
    return Configuration(pts)


# numba-facing encodings: hot loops receive plain scalars/arrays, not objects.

KERNEL_CODE = {LOG: 0, COULOMB: 1, RIESZ: 1}


def kernel_numba_args(kernel):
    """(code, power) pair consumed by the jitted pair loops; power unused for log."""
    if kernel.family == LOG:
        return 0, 0.0
    return 1, float(kernel.power)


V_QUADRATIC = 0
V_RADIAL_POLY = 1


def potential_numba_args(potential):
    """Encode a potential for the jitted loops.

    Returns (vkind, coeffs) where coeffs lists even-polynomial coefficients
    over |x|^(2k). Tabulated potentials are not representable; callers that
    need jitted stepping reject them.
    """
    if isinstance(potential, QuadraticPotential):
        return V_QUADRATIC, np.array([0.0, potential.alpha])
    if isinstance(potential, RadialPolynomialPotential):
        return V_RADIAL_POLY, np.array(potential.coeffs, dtype=float)
    raise UsageError(
        f"{type(potential).__name__} is not supported in jitted loops; "
        "use a quadratic or radial polynomial confinement")
