"""Equilibrium measures: the minimizer of

    I[mu] = (1/2) int int g(x - y) dmu(x) dmu(y) + int V dmu

over probability measures, solved on a grid by monotone accelerated
projected gradient descent, plus closed forms for quadratic confinement and
the thermal (finite-temperature) fixed point.

Optimality conditions: with h = g * mu and phi = h + V there is a constant c
(the Robin constant) with phi = c on the support of mu and phi >= c outside.
On the interior of the support, applying -Delta to phi = c gives the density
formula c_d mu = Delta V.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import ConvergenceError, Kernel, UsageError
from .energy import background_potential, double_kernel_integral
from .grids import Grid, GriddedDensity, get_convolver


def project_simplex(v):
    """Euclidean projection of a vector onto {w >= 0, sum w = 1}."""
    v = np.asarray(v, dtype=float).reshape(-1)
    u = np.sort(v)[::-1]
    css = np.cumsum(u)
    k = np.arange(1, len(v) + 1)
    cond = u + (1.0 - css) / k > 0
    rho = np.nonzero(cond)[0][-1]
    theta = (css[rho] - 1.0) / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


@dataclass
class EquilibriumResult:
    """Solved equilibrium measure with its optimality diagnostics.

    gg is the double kernel integral, v_int the confinement integral, and
    energy = gg/2 + v_int exactly (same floats), so energy-splitting
    reconstructions around this measure are algebraically tight.
    """

    density: GriddedDensity
    kernel: Kernel
    support_mask: np.ndarray
    robin_constant: float
    gg: float
    v_int: float
    residual_on: float
    residual_off: float
    iterations: int
    converged: bool
    objective_series: np.ndarray
    el_field: np.ndarray

    @property
    def energy(self):
        return 0.5 * self.gg + self.v_int

    def potential_at(self, points):
        return background_potential(self.density, points, self.kernel)

    def support_radius(self):
        centers = self.density.grid.centers()
        r = np.sqrt(np.sum(centers * centers, axis=-1))
        return float(np.max(r[self.support_mask]))


def _confinement_check(kernel, potential, grid):
    centers = grid.centers()
    v = potential.value(centers)
    vmin = float(np.min(v))
    # boundary cells: any index at the edge of the grid
    mask = np.zeros(grid.shape, dtype=bool)
    for ax in range(grid.d):
        sl = [slice(None)] * grid.d
        sl[ax] = 0
        mask[tuple(sl)] = True
        sl[ax] = -1
        mask[tuple(sl)] = True
    v_edge = float(np.min(v[mask]))
    diag = math.sqrt(sum((b - a) ** 2 for a, b in zip(grid.lo, grid.hi)))
    gvar = abs(kernel.value_of_norm(diag) - kernel.value_of_norm(diag / 2.0))
    if v_edge - vmin < 2.0 * gvar:
        raise UsageError(
            "grid box looks too small to confine the equilibrium measure: "
            f"V rises by {v_edge - vmin:.3g} at the boundary, need >= {2 * gvar:.3g}")


def solve_equilibrium(kernel, potential, grid, tol=5e-3, max_iter=40000,
                      support_threshold=1e-3, fista_iters=300):
    """Minimize I[mu] over probability densities on the grid.

    Two monotone phases sharing one FFT kernel operator. A short accelerated
    projected-gradient phase on the simplex finds the global shape; an
    active-set phase then solves the first-order system exactly on the
    current support with projected conjugate gradients, clipping cells driven
    negative and activating exterior cells where h + V dips below the
    multiplier. Plain projected gradient alone stalls in sup norm here (the
    discrete kernel is badly conditioned), which is why the active-set
    refinement exists. Stops when the Euler-Lagrange residuals (flatness of
    h + V on the detected support, one-sided positivity off it) fall below
    tol; raises ConvergenceError with the best iterate attached otherwise.
    """
    if kernel.d != grid.d:
        raise UsageError("kernel and grid dimensions differ")
    _confinement_check(kernel, potential, grid)
    conv = get_convolver(grid, kernel)
    vol = grid.cell_volume
    vc = potential.value(grid.centers())

    def apply_m(m):
        # h_i = sum_j tab(i-j) m_j, i.e. the potential of the mass vector
        return conv.apply(m.reshape(grid.shape) / vol).reshape(-1)

    lip = conv.operator_norm_bound()
    step = 1.0 / lip
    vflat = vc.reshape(-1)

    m = np.exp(-(vflat - vflat.min()))
    m /= m.sum()
    x_prev = m.copy()
    x = m.copy()
    y = m.copy()
    t_acc = 1.0

    def objective(mm, h=None):
        if h is None:
            h = apply_m(mm)
        return 0.5 * float(np.dot(h, mm)) + float(np.dot(vflat, mm)), h

    def residuals(mm, phi):
        mask = mm > support_threshold * mm.max()
        cc = float(np.median(phi[mask]))
        on = float(np.max(np.abs(phi[mask] - cc)))
        offsel = ~mask
        offv = float(max(0.0, np.max(cc - phi[offsel]))) if offsel.any() else 0.0
        return mask, cc, on, offv

    obj_x, _ = objective(x)
    objective_series = [obj_x]
    res_on = res_off = math.inf
    converged = False
    it = 0
    # phase 1: monotone accelerated projected gradient
    while it < min(fista_iters, max_iter):
        it += 1
        grad_y = apply_m(y) + vflat
        z = project_simplex(y - step * grad_y)
        obj_z, _ = objective(z)
        if obj_z <= obj_x:
            x_new = z
            obj_new = obj_z
        else:
            x_new = x
            obj_new = obj_x
        t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t_acc * t_acc))
        y = x_new + (t_acc / t_new) * (z - x_new) + ((t_acc - 1.0) / t_new) * (x_new - x_prev)
        x_prev = x
        x = x_new
        obj_x = obj_new
        t_acc = t_new
        objective_series.append(obj_x)

    # phase 2: active-set refinement. On a candidate support solve
    # (G m + v) restricted = const, sum m = 1 by conjugate gradients in the
    # zero-sum subspace, then update the set.
    active = x > 0.0
    inner_cap = max(200, 4 * int(math.sqrt(x.size)))
    outer = 0
    while outer < 80 and it < max_iter:
        outer += 1

        def proj(w):
            w = np.where(active, w, 0.0)
            w[active] -= w[active].mean()
            return w

        grad = apply_m(x) + vflat
        r = proj(grad)
        p = -r
        rs = float(np.dot(r, r))
        cg_it = 0
        while cg_it < inner_cap and it < max_iter and math.sqrt(rs) > 1e-12:
            cg_it += 1
            it += 1
            gp = proj(apply_m(p))
            pgp = float(np.dot(p, gp))
            if pgp <= 0.0:
                break
            alpha = rs / pgp
            x = x + alpha * p
            r = r + alpha * gp
            rs_new = float(np.dot(r, r))
            p = -r + (rs_new / rs) * p
            rs = rs_new
        clipped = active & (x < 0.0)
        x = np.maximum(x, 0.0)
        x /= x.sum()
        phi = apply_m(x) + vflat
        obj_now = 0.5 * float(np.dot(phi + vflat, x))
        objective_series.append(obj_now)
        mask, c_now, res_on, res_off = residuals(x, phi)
        mult = float(np.mean(phi[active])) if active.any() else c_now
        vtol = max(1e-12, 1e-10 * abs(mult))
        violators = (~active) & (phi < mult - vtol)
        if not clipped.any() and not violators.any():
            converged = max(res_on, res_off) <= tol
            break
        active = (active & (x > 0.0)) | violators

    phi = apply_m(x) + vflat
    mask = x > support_threshold * x.max()
    c = float(np.median(phi[mask]))
    res_on = float(np.max(np.abs(phi[mask] - c)))
    off = ~mask
    res_off = float(max(0.0, np.max(c - phi[off]))) if off.any() else 0.0
    density = GriddedDensity.normalize(grid, x.reshape(grid.shape) / vol)
    gg = double_kernel_integral(density, kernel)
    v_int = density.quadrature(vc)
    result = EquilibriumResult(
        density=density, kernel=kernel, support_mask=mask.reshape(grid.shape),
        robin_constant=c, gg=gg, v_int=v_int, residual_on=res_on,
        residual_off=res_off, iterations=it, converged=converged,
        objective_series=np.array(objective_series), el_field=phi.reshape(grid.shape))
    if not converged:
        raise ConvergenceError(
            f"equilibrium solve stalled at residuals on={res_on:.3g} off={res_off:.3g} "
            f"after {it} iterations (tol {tol:.3g})", result)
    return result


@dataclass(frozen=True)
class ELReport:
    residual_on: float
    residual_off: float
    robin_constant: float
    tol: float

    @property
    def passed(self):
        return max(self.residual_on, self.residual_off) <= self.tol


def verify_euler_lagrange(result, potential, tol=5e-3):
    """Recompute h + V for a solved measure and check flat-on / above-off."""
    density = result.density
    grid = density.grid
    conv = get_convolver(grid, result.kernel)
    phi = conv.apply(density.values) + potential.value(grid.centers())
    mask = result.support_mask
    c = float(np.median(phi[mask]))
    res_on = float(np.max(np.abs(phi[mask] - c)))
    off = ~mask
    res_off = float(max(0.0, np.max(c - phi[off]))) if off.any() else 0.0
    return ELReport(res_on, res_off, c, tol)


def coulomb_density_formula(kernel, potential, grid, mask=None):
    """Interior density candidate Delta V / c_d on the grid, unnormalized.

    Valid on the interior of the support, where h + V = c gives
    c_d mu = Delta V. The caller restricts with ``mask`` and checks mass.
    """
    c_d = kernel.laplace_constant
    vals = potential.laplacian(grid.centers()) / c_d
    if mask is not None:
        vals = np.where(mask, vals, 0.0)
    if np.any(vals < 0.0):
        raise UsageError("Delta V < 0 in the region; not a density there")
    return GriddedDensity(grid, vals, normalized=False)


@dataclass
class ThermalEquilibriumResult:
    density: GriddedDensity
    beta: float
    residual: float
    iterations: int
    converged: bool


def thermal_equilibrium(kernel, potential, beta, grid, tol=1e-10,
                        max_iter=20000, damping=0.5):
    """Fixed point mu proportional to exp(-beta (g * mu + V)).

    This is the first-order condition of beta I[mu] + int mu log mu. Damped
    iteration; the damping shrinks automatically when the update residual
    stops decreasing. Residual is the sup-norm density change of the
    undamped update.
    """
    if beta <= 0.0:
        raise UsageError("beta must be positive")
    if kernel.d != grid.d:
        raise UsageError("kernel and grid dimensions differ")
    _confinement_check(kernel, potential, grid)
    conv = get_convolver(grid, kernel)
    vol = grid.cell_volume
    vc = potential.value(grid.centers())
    w = np.exp(-beta * (vc - vc.min()))
    mu = w / (np.sum(w) * vol)
    tau = float(damping)
    prev_res = math.inf
    res = math.inf
    it = 0
    converged = False
    while it < max_iter:
        it += 1
        h = conv.apply(mu)
        expo = -beta * (h + vc)
        expo -= expo.max()
        cand = np.exp(expo)
        cand /= np.sum(cand) * vol
        res = float(np.max(np.abs(cand - mu)))
        if res <= tol:
            mu = cand
            converged = True
            break
        if res > prev_res:
            tau = max(0.05, 0.7 * tau)
        prev_res = res
        mu = (1.0 - tau) * mu + tau * cand
    density = GriddedDensity.normalize(grid, mu)
    result = ThermalEquilibriumResult(density, float(beta), res, it, converged)
    if not converged:
        raise ConvergenceError(
            f"thermal fixed point stalled at residual {res:.3g} after {it} iterations",
            result)
    return result


class DiskEquilibrium:
    """Closed-form equilibrium for -log|x| in d = 2 with V = alpha |x|^2.

    Uniform density 2 alpha / pi on the disk of radius R = 1/sqrt(2 alpha).
    """

    def __init__(self, alpha=1.0):
        if alpha <= 0:
            raise UsageError("alpha must be positive")
        self.alpha = float(alpha)
        self.radius = 1.0 / math.sqrt(2.0 * alpha)
        self.robin_constant = 0.5 - math.log(self.radius)
        self.gg = 0.25 - math.log(self.radius)
        self.v_int = 0.25
        self.energy = 0.5 * self.gg + self.v_int

    @property
    def interior_density(self):
        return 2.0 * self.alpha / math.pi

    def density_at(self, points):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        r2 = np.sum(points * points, axis=-1)
        return np.where(r2 <= self.radius ** 2, self.interior_density, 0.0)

    def potential_at(self, points):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        r = np.sqrt(np.sum(points * points, axis=-1))
        inside = 0.5 - math.log(self.radius) - self.alpha * r * r
        with np.errstate(divide="ignore"):
            outside = -np.log(np.where(r > 0, r, 1.0))
        return np.where(r <= self.radius, inside, outside)

    def on_grid(self, grid):
        """Cell-center sampling of the density, renormalized to unit mass.

        Boundary cells are quantized by their center, so the raw sampled mass
        is off by O(h); renormalization keeps downstream neutrality exact.
        """
        vals = self.density_at(grid.flat_centers()).reshape(grid.shape)
        return GriddedDensity.normalize(grid, vals)


class SemicircleEquilibrium:
    """Closed-form equilibrium for -log|x| in d = 1 with V = alpha x^2.

    Density (2/(pi a^2)) sqrt(a^2 - x^2) on [-a, a] with a = alpha^(-1/2).
    With this energy convention V = x^2 gives support [-1, 1]; the familiar
    [-2, 2] semicircle corresponds to the weaker confinement V = x^2 / 4
    (alpha = 1/4), i.e. conventions that put a 1/(2N) or beta/2 weight on V.
    """

    def __init__(self, alpha=1.0):
        if alpha <= 0:
            raise UsageError("alpha must be positive")
        self.alpha = float(alpha)
        self.half_width = 1.0 / math.sqrt(alpha)
        a = self.half_width
        self.robin_constant = 0.5 + math.log(2.0 / a)
        self.gg = 0.25 + math.log(2.0 / a)
        self.v_int = 0.25
        self.energy = 0.5 * self.gg + self.v_int

    def density_at(self, points):
        x = np.asarray(points, dtype=float).reshape(-1)
        a = self.half_width
        inside = np.abs(x) <= a
        out = np.zeros_like(x)
        out[inside] = 2.0 / (math.pi * a * a) * np.sqrt(a * a - x[inside] ** 2)
        return out

    def potential_at(self, points):
        x = np.asarray(points, dtype=float).reshape(-1)
        a = self.half_width
        u = np.abs(x) / a
        out = np.empty_like(u)
        inside = u <= 1.0
        out[inside] = -u[inside] ** 2 + 0.5 + math.log(2.0) - math.log(a)
        uo = u[~inside]
        s = np.sqrt(uo * uo - 1.0)
        out[~inside] = (-uo * uo + uo * s - np.log(uo + s)
                        + 0.5 + math.log(2.0) - math.log(a))
        return out

    def on_grid(self, grid):
        vals = self.density_at(grid.flat_centers()).reshape(grid.shape)
        return GriddedDensity.normalize(grid, vals)
