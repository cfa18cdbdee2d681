"""Metropolis sampling of the Gibbs measure, low-N quadrature oracles,
annealed energy minimization, and free energies by thermodynamic integration.

The target density is proportional to exp(-beta_eff H) with H the package
Hamiltonian and beta_eff resolved from the scaling convention:

    fixed             beta_eff = beta
    high_temperature  beta_eff = beta / N
    next_order        beta_eff = beta N^(2/d - 1)

beta always multiplies the full H, so the N factor in front of the
confinement term is part of the energy, not of the temperature. Comparisons
against other conventions go through the quadrature oracle rather than a
hard-coded dictionary.
"""
from __future__ import annotations

import json
import math
import os
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from . import _kernels
from .core import (Configuration, Kernel, QuadraticPotential,
                   RadialPolynomialPotential, UsageError, kernel_numba_args,
                   potential_numba_args)
from .energy import delta_energy, hamiltonian, min_pair_distance

__all__ = [
    "BETA_FIXED", "BETA_HIGH_TEMPERATURE", "BETA_NEXT_ORDER",
    "RunParameters", "SampleSet", "AnnealSchedule", "MinimizeResult",
    "FreeEnergyResult", "effective_beta", "metropolis_chain", "delta_energy",
    "quadrature_gibbs_oracle", "anneal_minimize",
    "free_energy_thermo_integration", "save_sample_set", "load_sample_set",
]

BETA_FIXED = "fixed"
BETA_HIGH_TEMPERATURE = "high_temperature"
BETA_NEXT_ORDER = "next_order"
_SCALINGS = (BETA_FIXED, BETA_HIGH_TEMPERATURE, BETA_NEXT_ORDER)

TARGET_ACCEPTANCE = 0.35
_ADAPT_INTERVAL = 50
_ADAPT_RATE = 0.6


@dataclass(frozen=True)
class RunParameters:
    """Chain specification; scalars only so runs serialize verbatim."""

    kernel: Kernel
    potential: object
    n: int
    beta: float
    n_sweeps: int
    burn_sweeps: int
    stride: int = 1
    beta_scaling: str = BETA_FIXED
    seed: int = 0
    box_half: float = 0.0

    def __post_init__(self):
        if not (self.beta > 0.0 and math.isfinite(self.beta)):
            raise UsageError(f"beta must be positive and finite, got {self.beta}")
        if self.beta_scaling not in _SCALINGS:
            raise UsageError(f"unknown beta_scaling {self.beta_scaling!r}; "
                             f"expected one of {_SCALINGS}")
        if self.n < 1:
            raise UsageError("need at least one point")
        if self.n_sweeps < 1:
            raise UsageError("chain length must be at least one sweep")
        if not 0 <= self.burn_sweeps < self.n_sweeps:
            raise UsageError(
                f"burn-in {self.burn_sweeps} must be shorter than the chain "
                f"{self.n_sweeps}")
        if self.stride < 1:
            raise UsageError("thinning stride must be >= 1")
        if self.box_half < 0.0:
            raise UsageError("box_half must be >= 0 (0 disables the box)")
        if not isinstance(self.kernel, Kernel):
            raise UsageError("kernel must be a Kernel")


def effective_beta(params):
    """Inverse temperature multiplying H after resolving beta_scaling."""
    if params.beta_scaling == BETA_FIXED:
        return params.beta
    if params.beta_scaling == BETA_HIGH_TEMPERATURE:
        return params.beta / params.n
    return params.beta * params.n ** (2.0 / params.kernel.d - 1.0)


@dataclass(frozen=True)
class SampleSet:
    """Thinned chain output plus the per-sweep diagnostics.

    ``snapshots`` has shape (S, N, d) with S = (n_sweeps - burn_sweeps) //
    stride; ``acceptance`` and ``proposal_scale`` run over every sweep, so
    the adaptation history stays inspectable after the run.
    """

    params: RunParameters
    snapshots: np.ndarray
    energies: np.ndarray
    sweeps: np.ndarray
    acceptance: np.ndarray
    proposal_scale: np.ndarray
    energy_series: np.ndarray
    init_kind: str
    init_scale: float

    @property
    def n_snapshots(self):
        return self.snapshots.shape[0]

    def scale_change_points(self):
        """(sweep, scale) rows where the proposal scale changed (burn-in only)."""
        s = self.proposal_scale
        idx = np.flatnonzero(np.diff(s) != 0.0) + 1
        rows = [(0, float(s[0]))] + [(int(i), float(s[i])) for i in idx]
        return rows


def _support_radius(kernel, potential):
    """Radius of the known equilibrium supports for quadratic confinement,
    else the radius where V has grown by one from its center value."""
    alpha = None
    if isinstance(potential, QuadraticPotential):
        alpha = potential.alpha
    elif isinstance(potential, RadialPolynomialPotential):
        c = potential.coeffs
        if len(c) >= 2 and c[1] > 0 and all(x == 0.0 for x in c[2:]):
            alpha = c[1]
    if alpha is not None and alpha > 0:
        # closed-form support radii of the quadratic-confinement equilibria
        if kernel.is_log and kernel.d == 1:
            return 1.0 / math.sqrt(alpha)
        if kernel.is_log or kernel.family == "coulomb":
            return (2.0 * alpha) ** (-1.0 / kernel.d)
    v0 = float(potential.value(np.zeros(kernel.d)))
    r = 1.0
    for _ in range(60):
        if float(potential.value(np.full(kernel.d, r / math.sqrt(kernel.d)))) - v0 >= 1.0:
            break
        r *= 2.0
    else:
        return 1.0
    lo, hi = 0.0, r
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if float(potential.value(np.full(kernel.d, mid / math.sqrt(kernel.d)))) - v0 >= 1.0:
            hi = mid
        else:
            lo = mid
    return max(hi, 1e-6)


def _initial_positions(params, initial):
    n, d = params.n, params.kernel.d
    if initial is not None:
        pos = initial.positions if isinstance(initial, Configuration) else \
            np.array(initial, dtype=float)
        if pos.shape != (n, d):
            raise UsageError(f"initial configuration must have shape ({n}, {d})")
        if params.box_half > 0.0 and np.any(np.abs(pos) > params.box_half):
            raise UsageError("initial configuration must lie inside the box")
        if n > 1 and min_pair_distance(pos) == 0.0:
            raise UsageError("initial configuration has coincident points")
        return pos.copy(), "user", float("nan")
    rng = np.random.default_rng(params.seed)
    if params.box_half > 0.0:
        pos = rng.uniform(-params.box_half, params.box_half, size=(n, d))
        return pos, "uniform_box", params.box_half
    scale = _support_radius(params.kernel, params.potential)
    sigma = scale / math.sqrt(d)
    pos = rng.normal(0.0, sigma, size=(n, d))
    return pos, "gaussian", sigma


def metropolis_chain(params, initial=None):
    """Single-site Gaussian random-walk Metropolis targeting exp(-beta_eff H).

    Each proposal costs O(N) through the incremental energy; proposals that
    leave the box or collapse two points are rejected and still counted in
    the acceptance statistics. The proposal scale adapts toward acceptance
    0.35 during burn-in and is frozen afterwards, so the post-burn-in chain
    satisfies detailed balance exactly. The initial configuration is drawn
    i.i.d. Gaussian with standard deviation matched to the equilibrium
    support radius (uniform in the box when one is set), unless supplied.
    """
    if not isinstance(params, RunParameters):
        raise UsageError("params must be a RunParameters")
    code, p = kernel_numba_args(params.kernel)
    _, coeffs = potential_numba_args(params.potential)
    pos, init_kind, init_scale = _initial_positions(params, initial)
    beta_eff = effective_beta(params)
    step0 = 0.25 * max(_support_radius(params.kernel, params.potential),
                       params.box_half)
    out = _kernels.mh_run(pos, beta_eff, params.n_sweeps, params.burn_sweeps,
                          params.stride, step0, TARGET_ACCEPTANCE,
                          _ADAPT_INTERVAL, _ADAPT_RATE, code, p, coeffs,
                          params.box_half, params.seed)
    snaps, snap_energy, snap_sweep, acc, step_series, energy_series, _ = out
    return SampleSet(params, snaps, snap_energy, snap_sweep, acc,
                     step_series, energy_series, init_kind, init_scale)


# ---------------------------------------------------------------------------
# low-N quadrature oracle

def quadrature_gibbs_oracle(kernel, potential, beta, n, box_half, cells=401):
    """Tensor-grid quadrature of the Gibbs measure on the box [-L, L]^(n d).

    Returns a dict with the partition function (z, log_z), the mean energy,
    and the single-coordinate marginal density on the quadrature axis; for
    n = 2 in d = 1 also the pair-separation law on its exact value set.
    Coincident-point nodes carry zero weight (the integrand's limit for any
    beta > 0); at beta = 0 the integrand is 1 and Z = (2L)^(n d) exactly.
    The tensor dimension n*d is capped at 4 to keep the grid in memory.
    """
    if n < 1 or n > 3:
        raise UsageError("oracle supports 1 <= n <= 3")
    if n * kernel.d > 4:
        raise UsageError("tensor quadrature is limited to n*d <= 4")
    if beta < 0.0:
        raise UsageError("beta must be >= 0")
    if box_half <= 0.0:
        raise UsageError("box_half must be positive")
    if cells < 8:
        raise UsageError("need at least 8 cells per axis")
    if kernel.family == "riesz" and beta * kernel.s >= kernel.d:
        raise UsageError(
            "non-integrable combination: Riesz quadrature requires "
            f"beta*s < d, got beta*s = {beta * kernel.s} >= d = {kernel.d}")
    d = kernel.d
    m = int(cells)
    # memory caps: the weight array has m^(n d) entries
    limits = {(1, 1): 200001, (1, 2): 1024, (2, 1): 2001, (2, 2): 48,
              (3, 1): 201}
    if m > limits[(n, d)]:
        raise UsageError(f"n={n}, d={d} quadrature is capped at "
                         f"{limits[(n, d)]} cells per axis")
    h = 2.0 * box_half / m
    axis = -box_half + h * (np.arange(m) + 0.5)
    if d == 1:
        pts = axis[:, None]
    else:
        xx, yy = np.meshgrid(axis, axis, indexing="ij")
        pts = np.column_stack([xx.ravel(), yy.ravel()])
    v = potential.value(pts)
    npts = len(pts)
    if n == 1:
        hvals = n * v
    else:
        if d == 1:
            r = np.abs(pts[:, 0][:, None] - pts[:, 0][None, :])
        else:
            s2 = np.sum(pts * pts, axis=1)
            r2 = s2[:, None] + s2[None, :] - 2.0 * (pts @ pts.T)
            r = np.sqrt(np.maximum(r2, 0.0))
        np.fill_diagonal(r, 1.0)
        g = kernel.value_of_norm(r)
        np.fill_diagonal(g, np.inf)
        if n == 2:
            hvals = g + n * (v[:, None] + v[None, :])
        else:
            hvals = (g[:, :, None] + g[:, None, :] + g[None, :, :]
                     + n * (v[:, None, None] + v[None, :, None]
                            + v[None, None, :]))
    if beta == 0.0:
        # the integrand is identically 1; coincidences are measure zero
        neg_bh = np.zeros_like(hvals)
    else:
        neg_bh = -beta * hvals
    log_z = float(logsumexp(neg_bh) + n * d * math.log(h))
    w = np.exp(neg_bh - np.max(neg_bh[np.isfinite(neg_bh)]))
    w_sum = float(np.sum(w))
    finite = np.isfinite(hvals)
    mean_h = float(np.sum(np.where(finite, hvals, 0.0) * w) / w_sum)
    # marginal of the first coordinate of the first point
    flat = w.reshape(npts, -1).sum(axis=1)
    if d == 2:
        flat = flat.reshape(m, m).sum(axis=1)
    marginal = flat / (np.sum(flat) * h)
    out = {
        "z": math.exp(log_z),
        "log_z": log_z,
        "mean_energy": mean_h,
        "axis": axis,
        "spacing": h,
        "marginal": marginal,
    }
    if n == 2 and d == 1:
        # |x1 - x2| takes the exact values k h on the grid; bin by k
        k = np.abs(np.arange(m)[:, None] - np.arange(m)[None, :]).ravel()
        pmf = np.bincount(k, weights=w.ravel(), minlength=m)
        out["separation_axis"] = h * np.arange(m)
        out["separation_pmf"] = pmf / np.sum(pmf)
    return out


# ---------------------------------------------------------------------------
# annealed minimization

@dataclass(frozen=True)
class AnnealSchedule:
    """Geometric cooling: stage k runs sweeps_per_stage sweeps at
    beta0 * factor^k, k = 0 .. stages-1."""

    beta0: float = 2.0
    factor: float = 1.7
    stages: int = 20
    sweeps_per_stage: int = 80

    def __post_init__(self):
        if self.beta0 <= 0.0:
            raise UsageError("beta0 must be positive")
        if self.factor <= 1.0:
            raise UsageError("cooling factor must exceed 1")
        if self.stages < 1 or self.sweeps_per_stage < 1:
            raise UsageError("stages and sweeps_per_stage must be >= 1")

    def betas(self):
        return self.beta0 * self.factor ** np.arange(self.stages)


@dataclass(frozen=True)
class MinimizeResult:
    configuration: Configuration
    energy: float
    grad_max: float
    gd_iterations: int
    converged: bool
    line_search_ok: bool
    stage_energies: np.ndarray


def anneal_minimize(kernel, potential, n, schedule=None, seed=0,
                    grad_tol=1e-8, max_gd_iter=200000, initial=None):
    """Simulated annealing followed by gradient descent on H.

    The annealing stages reuse the Metropolis kernel at geometrically
    increasing beta (scale re-adapted each stage); the best stage-end
    configuration seeds an Armijo-backtracking descent run until the
    sup-norm of grad H drops below grad_tol. A line-search failure returns
    the best configuration reached with line_search_ok = False instead of
    raising, since near-degenerate minima can exhaust double precision
    before meeting the tolerance.
    """
    if schedule is None:
        schedule = AnnealSchedule()
    if not isinstance(schedule, AnnealSchedule):
        raise UsageError("schedule must be an AnnealSchedule")
    code, p = kernel_numba_args(kernel)
    _, coeffs = potential_numba_args(potential)
    params0 = RunParameters(kernel, potential, n, beta=1.0, n_sweeps=2,
                            burn_sweeps=0, seed=seed)
    pos, _, _ = _initial_positions(params0, initial)
    sweeps = schedule.sweeps_per_stage
    best = pos.copy()
    best_h = hamiltonian(pos, kernel, potential)
    stage_h = np.empty(schedule.stages)
    step0 = 0.25 * _support_radius(kernel, potential)
    for k, beta in enumerate(schedule.betas()):
        out = _kernels.mh_run(pos, float(beta), sweeps, sweeps - 1, 0, step0,
                              TARGET_ACCEPTANCE, _ADAPT_INTERVAL, _ADAPT_RATE,
                              code, p, coeffs, 0.0, seed + 7919 * k)
        stage_h[k] = out[6]
        step0 = out[4][-1]
        if stage_h[k] < best_h:
            best_h = stage_h[k]
            best = pos.copy()
    h_final, gmax, iters, status = _kernels.gd_polish(best, code, p, coeffs,
                                                      grad_tol, max_gd_iter)
    return MinimizeResult(Configuration(best), float(h_final), float(gmax),
                          int(iters), status == 1, status != -1, stage_h)


# ---------------------------------------------------------------------------
# free energy by thermodynamic integration

@dataclass(frozen=True)
class FreeEnergyResult:
    betas: np.ndarray
    log_z: np.ndarray
    log_z_err: np.ndarray
    mean_energy: np.ndarray
    mean_energy_err: np.ndarray
    anchor_kind: str
    warnings: tuple


def batch_mean_error(series, batches=32):
    """Standard error of the mean from non-overlapping batch means."""
    series = np.asarray(series, dtype=float)
    if batches < 2 or len(series) < 2 * batches:
        raise UsageError("need at least two points per batch")
    m = len(series) // batches
    means = series[:m * batches].reshape(batches, m).mean(axis=1)
    return float(means.mean()), float(means.std(ddof=1) / math.sqrt(batches))


def _box_gas_energy(kernel, potential, n, box_half, samples, seed):
    """Mean H under the uniform box law (the beta -> 0 chain limit)."""
    rng = np.random.default_rng(seed)
    vals = np.empty(samples)
    for k in range(samples):
        pos = rng.uniform(-box_half, box_half, size=(n, kernel.d))
        vals[k] = hamiltonian(pos, kernel, potential)
    return batch_mean_error(vals)


def free_energy_thermo_integration(kernel, potential, n, betas, box_half,
                                   n_sweeps=40000, burn_sweeps=4000,
                                   stride=10, seed=0, oracle_cells=401,
                                   batches=32):
    """log Z(beta) on the grid from d(log Z)/dbeta = -<H> by trapezoid.

    The anchor is exact: at beta = 0 the box-gas value n d log(2 L), else
    the quadrature oracle at betas[0] (n <= 3 only). Mean energies come from
    independent chains per grid point; their batch-mean errors propagate
    through the trapezoid weights. A warning is recorded when <H> increases
    between neighboring grid points by more than the combined error bars,
    since <H> must be non-increasing in beta.
    """
    betas = np.asarray(betas, dtype=float)
    if betas.ndim != 1 or len(betas) < 2:
        raise UsageError("need a 1-D grid of at least two betas")
    if np.any(np.diff(betas) <= 0.0):
        raise UsageError("betas must be strictly increasing")
    if betas[0] < 0.0:
        raise UsageError("betas must be nonnegative")
    if box_half <= 0.0:
        raise UsageError("thermodynamic integration needs a finite box")
    if betas[0] == 0.0:
        anchor = n * kernel.d * math.log(2.0 * box_half)
        anchor_kind = "box_gas"
    elif n <= 3 and n * kernel.d <= 4:
        anchor = quadrature_gibbs_oracle(kernel, potential, betas[0], n,
                                         box_half, oracle_cells)["log_z"]
        anchor_kind = "quadrature"
    else:
        raise UsageError("for n > 3 the beta grid must start at 0 so the "
                         "box-gas value can anchor log Z")
    mean_h = np.empty(len(betas))
    err_h = np.empty(len(betas))
    for k, beta in enumerate(betas):
        if beta == 0.0:
            samples = max((n_sweeps - burn_sweeps) // stride, 2 * batches)
            mean_h[k], err_h[k] = _box_gas_energy(kernel, potential, n,
                                                  box_half, samples, seed + k)
            continue
        params = RunParameters(kernel, potential, n, beta=float(beta),
                               n_sweeps=n_sweeps, burn_sweeps=burn_sweeps,
                               stride=stride, seed=seed + k,
                               box_half=box_half)
        ss = metropolis_chain(params)
        mean_h[k], err_h[k] = batch_mean_error(ss.energies, batches)
    notes = []
    for k in range(len(betas) - 1):
        if mean_h[k + 1] - mean_h[k] > err_h[k] + err_h[k + 1]:
            msg = (f"<H> increased from beta={betas[k]:g} to "
                   f"beta={betas[k + 1]:g} beyond the error bars")
            notes.append(msg)
            warnings.warn(msg)
    db = np.diff(betas)
    increments = -0.5 * (mean_h[1:] + mean_h[:-1]) * db
    log_z = anchor + np.concatenate([[0.0], np.cumsum(increments)])
    var = np.concatenate([[0.0], np.cumsum((0.5 * db * err_h[:-1]) ** 2
                                           + (0.5 * db * err_h[1:]) ** 2)])
    return FreeEnergyResult(betas, log_z, np.sqrt(var), mean_h, err_h,
                            anchor_kind, tuple(notes))


# ---------------------------------------------------------------------------
# serialization

_POTENTIAL_KINDS = {
    QuadraticPotential: "quadratic",
    RadialPolynomialPotential: "radial_polynomial",
}


def _potential_meta(potential):
    kind = _POTENTIAL_KINDS.get(type(potential))
    if kind is None:
        raise UsageError(f"{type(potential).__name__} does not serialize")
    if kind == "quadratic":
        return {"kind": kind, "alpha": potential.alpha}
    return {"kind": kind, "coeffs": list(potential.coeffs)}


def _potential_from_meta(meta):
    if meta["kind"] == "quadratic":
        return QuadraticPotential(meta["alpha"])
    return RadialPolynomialPotential(tuple(meta["coeffs"]))


def save_sample_set(sample_set, path):
    """Write a SampleSet to a directory.

    configurations.csv: one snapshot per row (sweep, energy, coordinates);
    energy.csv: the per-sweep energy / acceptance / proposal-scale series;
    meta.json: run parameters, initialization record, and the adaptation
    trace as (sweep, scale) change points.
    """
    ss = sample_set
    os.makedirs(path, exist_ok=True)
    n, d = ss.params.n, ss.params.kernel.d
    coord_names = [f"x{i}_{k}" for i in range(n) for k in range(d)]
    header = ",".join(["sweep", "energy"] + coord_names)
    flat = ss.snapshots.reshape(ss.n_snapshots, n * d)
    body = np.column_stack([ss.sweeps, ss.energies, flat])
    np.savetxt(os.path.join(path, "configurations.csv"), body,
               fmt="%.17g", delimiter=",", header=header, comments="",
               newline="\n")
    series = np.column_stack([np.arange(len(ss.energy_series)),
                              ss.energy_series, ss.acceptance,
                              ss.proposal_scale])
    np.savetxt(os.path.join(path, "energy.csv"), series, fmt="%.17g",
               delimiter=",", header="sweep,energy,acceptance,proposal_scale",
               comments="", newline="\n")
    k = ss.params.kernel
    meta = {
        "kernel": {"family": k.family, "d": k.d, "s": k.s},
        "potential": _potential_meta(ss.params.potential),
        "n": ss.params.n,
        "beta": ss.params.beta,
        "beta_scaling": ss.params.beta_scaling,
        "n_sweeps": ss.params.n_sweeps,
        "burn_sweeps": ss.params.burn_sweeps,
        "stride": ss.params.stride,
        "seed": ss.params.seed,
        "box_half": ss.params.box_half,
        "init_kind": ss.init_kind,
        "init_scale": None if math.isnan(ss.init_scale) else ss.init_scale,
        "adaptation_trace": ss.scale_change_points(),
    }
    with open(os.path.join(path, "meta.json"), "w", newline="\n") as fh:
        json.dump(meta, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_sample_set(path):
    with open(os.path.join(path, "meta.json")) as fh:
        meta = json.load(fh)
    kernel = Kernel(meta["kernel"]["family"], meta["kernel"]["d"],
                    meta["kernel"]["s"])
    params = RunParameters(kernel, _potential_from_meta(meta["potential"]),
                           meta["n"], meta["beta"], meta["n_sweeps"],
                           meta["burn_sweeps"], meta["stride"],
                           meta["beta_scaling"], meta["seed"],
                           meta["box_half"])
    body = np.loadtxt(os.path.join(path, "configurations.csv"),
                      delimiter=",", skiprows=1, ndmin=2)
    series = np.loadtxt(os.path.join(path, "energy.csv"), delimiter=",",
                        skiprows=1, ndmin=2)
    n, d = params.n, kernel.d
    snaps = body[:, 2:].reshape(-1, n, d)
    scale = meta["init_scale"]
    return SampleSet(params, snaps, body[:, 1], body[:, 0].astype(np.int64),
                     series[:, 2], series[:, 3], series[:, 1],
                     meta["init_kind"], float("nan") if scale is None else scale)
