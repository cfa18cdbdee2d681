"""Particle flows: gradient descent, point-vortex rotation, Newtonian motion,
and their noisy versions.

All laws use the mean-field force -(1/N) grad_i H, so a single particle in
V = |x|^2 relaxes like exp(-2t) under the gradient flow and the conserved
quantity of the second-order law is (1/2) sum |v_i|^2 + H/N.  The
conservative law rotates the force by pi/2 (d = 2 only); two log-interacting
points then revolve rigidly with period 2 pi r^2.

Stochastic laws integrate the equations exactly as written, with noise
coefficient sqrt(1/beta) per coordinate; the first-order invariant density
is therefore proportional to exp(-2 beta H/N), not exp(-beta H).
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .core import (CoincidentPointsError, Configuration, UsageError,
                   kernel_numba_args, potential_numba_args)

_LAWS_DET = {"gradient_flow": 0, "conservative": 1, "newton": 2}
_SCHEMES = {"euler": 0, "rk4": 1, "verlet": 2}
_LAWS_SDE = {"overdamped": 0, "conservative_noise": 1, "kinetic": 2}


class CollisionError(RuntimeError):
    """Two points fell inside the collision guard; carries .time."""

    def __init__(self, message, time):
        super().__init__(message)
        self.time = time


@dataclass(frozen=True)
class Trajectory:
    """Snapshots of an integrated flow.

    energy[k] is recorded after k steps: H for the first-order laws,
    (1/2) sum |v|^2 + H/N for newton/kinetic; empty for the stochastic
    first-order laws (tracked separately by samplers when needed).
    """

    times: np.ndarray
    positions: np.ndarray
    velocities: np.ndarray | None
    energy: np.ndarray
    law: str
    scheme: str
    dt: float
    seed: int | None = None

    @property
    def final(self):
        return self.positions[-1]

    @property
    def energy_drift(self):
        e = self.energy
        if len(e) < 2:
            return 0.0
        return float(np.max(np.abs(e - e[0])))


def _positions(config):
    if isinstance(config, Configuration):
        return config.positions.copy()
    pos = np.array(config, dtype=float)
    if pos.ndim != 2:
        raise UsageError("configuration must be an (N, d) array")
    return pos


def _collision_guard(pos, factor):
    # guard radius scales with the spatial extent of the configuration
    size = max(1.0, float(np.max(np.abs(pos))))
    g = factor * np.finfo(float).eps * size
    return g * g


def _steps(dt, total_time):
    if dt <= 0:
        raise UsageError("dt must be positive")
    if total_time < dt:
        raise UsageError("total time shorter than one step")
    return int(round(total_time / dt))


def evolve_deterministic(config, kernel, potential, law, dt, total_time,
                         scheme="rk4", velocities=None, snap_stride=None,
                         collision_factor=10.0):
    """Integrate the chosen deterministic law.

    law: gradient_flow (dx/dt = -(1/N) grad H), conservative (force rotated
    by pi/2, d = 2 only), newton (d^2x/dt^2 = -(1/N) grad H).  scheme:
    euler, rk4, or verlet (newton only).  Snapshots are stored every
    snap_stride steps (default: ~200 snapshots) and the energy series at
    every step.  Raises CollisionError (with .time) if a pair falls within
    collision_factor machine epsilons of coincidence.
    """
    if law not in _LAWS_DET:
        raise UsageError(f"unknown law {law!r}")
    if scheme not in _SCHEMES:
        raise UsageError(f"unknown scheme {scheme!r}")
    if scheme == "verlet" and law != "newton":
        raise UsageError("verlet integrates only the newton law")
    pos = _positions(config)
    n, d = pos.shape
    if law == "conservative" and d != 2:
        raise UsageError("the conservative law rotates forces in d = 2")
    if pos.shape[1] != kernel.d:
        raise UsageError("configuration dimension does not match the kernel")
    n_steps = _steps(dt, total_time)
    if snap_stride is None:
        snap_stride = max(1, n_steps // 200)
    if velocities is None:
        vel = np.zeros_like(pos)
    else:
        vel = np.array(velocities, dtype=float)
        if vel.shape != pos.shape:
            raise UsageError("velocities must match the configuration shape")
    code, p = kernel_numba_args(kernel)
    _, coeffs = potential_numba_args(potential)
    guard2 = _collision_guard(pos, collision_factor)
    snaps, vsnaps, times, energy, status, tfail = _kernels.ode_run(
        pos, vel, dt, n_steps, snap_stride, _LAWS_DET[law], _SCHEMES[scheme],
        code, p, coeffs, guard2)
    if status == 1:
        raise CollisionError(f"pair collision at t={tfail:g}", tfail)
    return Trajectory(times=times, positions=snaps,
                      velocities=vsnaps if law == "newton" else None,
                      energy=energy, law=law, scheme=scheme, dt=dt)


def evolve_stochastic(config, kernel, potential, law, beta, dt, total_time,
                      seed, velocities=None, snap_stride=None,
                      collision_factor=10.0):
    """Integrate the noisy laws with noise coefficient sqrt(1/beta).

    law: overdamped / conservative_noise (Euler-Maruyama) or kinetic
    (Strang splitting around the Brownian velocity kick).  beta = inf
    degenerates to the corresponding deterministic law under the euler
    scheme.  Proposals that would collide retry with halved substeps and
    fresh noise before giving up with CollisionError.
    """
    if law not in _LAWS_SDE:
        raise UsageError(f"unknown law {law!r}")
    if not beta > 0:
        raise UsageError("beta must be positive")
    pos = _positions(config)
    n, d = pos.shape
    if law == "conservative_noise" and d != 2:
        raise UsageError("the conservative law rotates forces in d = 2")
    if pos.shape[1] != kernel.d:
        raise UsageError("configuration dimension does not match the kernel")
    n_steps = _steps(dt, total_time)
    if snap_stride is None:
        snap_stride = max(1, n_steps // 200)
    noise_coef = 0.0 if math.isinf(beta) else math.sqrt(1.0 / beta)
    code, p = kernel_numba_args(kernel)
    _, coeffs = potential_numba_args(potential)
    guard2 = _collision_guard(pos, collision_factor)
    if law == "kinetic":
        if velocities is None:
            vel = np.zeros_like(pos)
        else:
            vel = np.array(velocities, dtype=float)
            if vel.shape != pos.shape:
                raise UsageError("velocities must match the configuration")
        snaps, vsnaps, times, status, tfail = _kernels.sde_kinetic(
            pos, vel, dt, n_steps, snap_stride, noise_coef,
            code, p, coeffs, seed, guard2)
        if status == 1:
            raise CollisionError(f"pair collision at t={tfail:g}", tfail)
        return Trajectory(times=times, positions=snaps, velocities=vsnaps,
                          energy=np.empty(0), law=law, scheme="strang",
                          dt=dt, seed=seed)
    rotate = 1 if law == "conservative_noise" else 0
    snaps, times, status, tfail = _kernels.sde_first_order(
        pos, dt, n_steps, snap_stride, noise_coef, rotate,
        code, p, coeffs, seed, guard2)
    if status == 1:
        raise CollisionError(f"pair collision at t={tfail:g}", tfail)
    return Trajectory(times=times, positions=snaps, velocities=None,
                      energy=np.empty(0), law=law, scheme="euler_maruyama",
                      dt=dt, seed=seed)


def patch_reference(radius0, t):
    """Radius of the uniformly expanding unit-mass round patch, d = 2.

    The interior velocity of a uniform unit-mass disk of radius R is
    x/R^2, so R dR/dt = 1/R * R ... reduces to d(R^2)/dt = 2, giving
    R(t) = sqrt(R0^2 + 2 t).
    """
    if radius0 <= 0:
        raise UsageError("radius0 must be positive")
    if np.any(np.asarray(t) < 0):
        raise UsageError("t must be nonnegative")
    return np.sqrt(radius0 ** 2 + 2.0 * np.asarray(t, dtype=float))


def empirical_distance(config, density, eta):
    """Kernel metric between the eta-smeared empirical measure and a density.

    The configuration is smeared with the same one-cell shells used by the
    electric module on the density's grid, normalized to total mass 1, and
    compared through coulomb_metric with the kernel inferred from the grid
    dimension (log kernels in d <= 2, Coulomb above).
    """
    from .electric import shell_charge, _infer_kernel
    from .energy import coulomb_metric
    from .grids import GriddedDensity
    pos = _positions(config)
    grid = density.grid
    if eta <= 0:
        raise UsageError("eta must be positive")
    if eta < 2.0 * grid.spacing[0]:
        raise UsageError("eta below two grid cells; refine the grid")
    n = pos.shape[0]
    vals = np.zeros(grid.shape)
    for i in range(n):
        idx, masses = shell_charge(pos[i], eta, grid)
        np.add.at(vals, tuple(idx.T), masses / (n * grid.cell_volume))
    smeared = GriddedDensity(grid, vals)
    kernel = _infer_kernel(density, grid.d)
    return coulomb_metric(smeared, density, kernel)
