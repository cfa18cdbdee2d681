"""Macroscopic transport-diffusion solvers used as references for the
particle flows.

Radial d = 2: dmu/dt = (1/beta) lap mu - div(u mu) with the radial velocity
u(r) = M(r)/r - V'(r), where M(r) is the mass inside radius r (Gauss's law
for -lap h = 2 pi mu).  Line d = 1: u(x) = p.v. int mu(y)/(x - y) dy - V'(x),
the principal value taken as a symmetric midpoint sum over cell nodes,
evaluated at the cell faces where no node is singular (evaluating at the
nodes themselves and skipping the singular cell drops that cell's p.v.
contribution, an O(h) drift bias; the face form is O(h^2)).  Both solvers
are finite-volume with zero-flux walls, so total mass is conserved to
rounding per step.  Transport-only runs use upwind fluxes; the radial
solver keeps upwind transport plus centered diffusion, while the 1-D
solver with diffusion uses the exponential-fitting flux (same limits,
positivity-preserving, and free of the O(h u beta) upwind bias in the
steady state).  A step size above the stability limit is split into
substeps automatically and counted in ``cfl_events``.

Pure transport (beta=None) relaxes to the equilibrium measure; with
diffusion the steady state is the thermal equilibrium fixed point
mu ~ exp(-beta (h^mu + V)), matching the equilibrium module's convention.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .core import UsageError
from .grids import Grid, GriddedDensity


@dataclass(frozen=True)
class RadialDensity:
    """Cell-averaged radial density on uniform annular cells from r = 0."""

    edges: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        if self.edges[0] != 0.0:
            raise UsageError("radial cells must start at r = 0")
        if len(self.edges) != len(self.values) + 1:
            raise UsageError("need one more edge than cell values")

    @property
    def centers(self):
        return 0.5 * (self.edges[:-1] + self.edges[1:])

    @property
    def cell_volumes(self):
        return math.pi * (self.edges[1:] ** 2 - self.edges[:-1] ** 2)

    @property
    def masses(self):
        return self.values * self.cell_volumes

    def mass(self):
        return float(np.sum(self.masses))

    def second_moment_radius(self):
        """sqrt(2 int |x|^2 mu): equals R for the uniform disk of radius R."""
        m2 = float(np.sum(self.centers ** 2 * self.masses))
        return math.sqrt(2.0 * m2)

    def value_at(self, r):
        return np.interp(np.asarray(r, dtype=float), self.centers,
                         self.values, left=self.values[0], right=0.0)

    def on_grid(self, grid):
        """Interpolate onto a 2-D cartesian grid (not renormalized)."""
        if grid.d != 2:
            raise UsageError("radial densities map onto 2-D grids")
        r = np.sqrt(np.sum(grid.centers() ** 2, axis=-1))
        return GriddedDensity(grid, self.value_at(r), normalized=False)


def uniform_patch(radius, rmax, cells):
    """Unit-mass uniform disk sampled exactly onto annular cells."""
    if not 0.0 < radius < rmax:
        raise UsageError("need 0 < radius < rmax")
    edges = np.linspace(0.0, rmax, cells + 1)
    clipped = np.minimum(edges, radius)
    masses = (clipped[1:] ** 2 - clipped[:-1] ** 2) / radius ** 2
    vol = math.pi * (edges[1:] ** 2 - edges[:-1] ** 2)
    return RadialDensity(edges, masses / vol)


@dataclass(frozen=True)
class RadialTrajectory:
    edges: np.ndarray
    times: np.ndarray
    densities: np.ndarray
    beta: float | None
    dt: float
    cfl_events: int

    def density(self, k):
        return RadialDensity(self.edges, self.densities[k])

    @property
    def final(self):
        return self.density(len(self.times) - 1)

    def radius_series(self):
        return np.array([self.density(k).second_moment_radius()
                         for k in range(len(self.times))])


@dataclass(frozen=True)
class LineTrajectory:
    grid: Grid
    times: np.ndarray
    densities: np.ndarray
    beta: float | None
    dt: float
    cfl_events: int

    def density(self, k):
        return GriddedDensity(self.grid, self.densities[k],
                              normalized=False)

    @property
    def final(self):
        return self.density(len(self.times) - 1)


def _check_beta(beta):
    if beta is not None and not beta > 0.0:
        raise UsageError("beta must be positive (or None for no diffusion)")


def _bernoulli(x):
    """x / (e^x - 1), the exponential-fitting flux weight."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 1e-12
    safe = np.where(small, 1.0, x)
    return np.where(small, 1.0 - 0.5 * x, safe / np.expm1(safe))


def _radial_vprime(potential, radii):
    pts = np.column_stack([radii, np.zeros_like(radii)])
    return potential.gradient(pts)[:, 0]


def meanfield_radial_solve(initial, potential, beta, dt, total_time,
                           snap_stride=None):
    """March the radial law forward; returns a RadialTrajectory.

    initial: RadialDensity on uniform cells.  beta=None drops the diffusion
    term.  Steps exceeding the advective/diffusive stability limits are
    subdivided automatically (counted in cfl_events).
    """
    _check_beta(beta)
    if dt <= 0:
        raise UsageError("dt must be positive")
    edges = np.asarray(initial.edges, dtype=float)
    m = len(edges) - 1
    dr = edges[1] - edges[0]
    if np.max(np.abs(np.diff(edges) - dr)) > 1e-12 * dr:
        raise UsageError("radial cells must be uniform")
    n_steps = int(round(total_time / dt))
    if n_steps < 1:
        raise UsageError("total time shorter than one step")
    if snap_stride is None:
        snap_stride = max(1, n_steps // 100)
    vol = math.pi * (edges[1:] ** 2 - edges[:-1] ** 2)
    r_in = edges[1:-1]                      # interior faces
    circ_in = 2.0 * math.pi * r_in
    vp_in = _radial_vprime(potential, r_in)
    masses = initial.values * vol
    inv_beta = 0.0 if beta is None else 1.0 / beta

    snaps = [masses / vol]
    times = [0.0]
    cfl_events = 0
    flux = np.zeros(m + 1)
    t = 0.0
    for step in range(n_steps):
        remaining = dt
        first = True
        while remaining > 1e-15 * dt:
            mu = masses / vol
            # mass inside each interior face, then the radial velocity there
            inside = np.cumsum(masses)[:-1]
            u = inside / r_in - vp_in
            limit = 0.45 * dr / max(np.max(np.abs(u)), 1e-30)
            if beta is not None:
                limit = min(limit, 0.2 * dr * dr * beta)
            h = min(remaining, limit)
            if first and h < remaining:
                cfl_events += 1
            first = False
            up = np.where(u > 0.0, mu[:-1], mu[1:])
            flux[1:-1] = circ_in * u * up
            if beta is not None:
                flux[1:-1] -= inv_beta * circ_in * (mu[1:] - mu[:-1]) / dr
            masses -= h * (flux[1:] - flux[:-1])
            remaining -= h
        t += dt
        if (step + 1) % snap_stride == 0 or step == n_steps - 1:
            snaps.append(masses / vol)
            times.append(t)
    return RadialTrajectory(edges=edges, times=np.array(times),
                            densities=np.array(snaps), beta=beta, dt=dt,
                            cfl_events=cfl_events)


def meanfield_1d_solve(initial, potential, beta, dt, total_time,
                       snap_stride=None):
    """March the 1-D law forward; returns a LineTrajectory.

    initial: GriddedDensity on a 1-D grid.  The drift convolution is the
    symmetric midpoint p.v. sum evaluated at cell faces, accumulated in a
    mirror-invariant order, so mirror-symmetric data evolves exactly
    symmetrically.
    """
    _check_beta(beta)
    if dt <= 0:
        raise UsageError("dt must be positive")
    grid = initial.grid
    if grid.d != 1:
        raise UsageError("expected a 1-D grid")
    m = grid.shape[0]
    h = grid.spacing[0]
    n_steps = int(round(total_time / dt))
    if n_steps < 1:
        raise UsageError("total time shorter than one step")
    if snap_stride is None:
        snap_stride = max(1, n_steps // 100)
    # face offsets from the box midpoint: exactly antisymmetric coordinates
    mid = 0.5 * (grid.lo[0] + grid.hi[0])
    face_offsets = 0.5 * h * (2.0 * np.arange(1, m) - m)
    vp = potential.gradient((mid + face_offsets)[:, None])[:, 0]
    masses = initial.values * h
    inv_beta = 0.0 if beta is None else 1.0 / beta

    snaps = [masses / h]
    times = [0.0]
    cfl_events = 0
    flux = np.zeros(m + 1)
    face_u = np.empty(m + 1)
    t = 0.0
    for step in range(n_steps):
        remaining = dt
        first = True
        while remaining > 1e-15 * dt:
            mu = masses / h
            _kernels.line_pv_face_velocity(masses, h, face_u)
            uf = face_u[1:-1] - vp
            limit = 0.45 * h / max(np.max(np.abs(uf)), 1e-30)
            if beta is not None:
                limit = min(limit, 0.2 * h * h * beta)
            hq = min(remaining, limit)
            if first and hq < remaining:
                cfl_events += 1
            first = False
            if beta is None:
                up = np.where(uf > 0.0, mu[:-1], mu[1:])
                flux[1:-1] = uf * up
            else:
                # exponential-fitting flux: reduces to centered diffusion at
                # u = 0 and to upwind as beta grows, and its fixed point is
                # the discrete Boltzmann profile (plain upwind biases the
                # steady state by O(h u beta))
                pe = beta * uf * h
                flux[1:-1] = (inv_beta / h) * (_bernoulli(-pe) * mu[:-1]
                                               - _bernoulli(pe) * mu[1:])
            masses -= hq * (flux[1:] - flux[:-1])
            remaining -= hq
        t += dt
        if (step + 1) % snap_stride == 0 or step == n_steps - 1:
            snaps.append(masses / h)
            times.append(t)
    return LineTrajectory(grid=grid, times=np.array(times),
                          densities=np.array(snaps), beta=beta, dt=dt,
                          cfl_events=cfl_events)
