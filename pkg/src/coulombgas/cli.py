"""Spec-file experiment runner.

An experiment is a plain-text file of ``key = value`` lines (``#`` starts a
comment).  Top-level keys select the command, output directory, seed,
reproducible mode, and thread cap; everything else is a section-qualified
module parameter like ``chain.beta = 2``.  Parsing is strict: unknown or
duplicated keys, missing required keys, and malformed values fail fast with
the offending key and line number (exit code 2).

Every dispatched run writes into the output directory

* the result files of the command (CSV with a header row, key = value
  reports; floats at 17 significant digits, LF line endings),
* ``spec.txt``, the resolved spec with all defaults materialized (it parses
  back to the same experiment), and
* ``manifest.txt`` with versions, seed, and wall time -- written even when
  the command fails, holding the error instead.  In reproducible mode the
  volatile fields (wall time) are omitted so reruns of the same spec and
  seed are byte-identical.

Exit codes: 0 success, 1 runtime error inside a command, 2 usage error
(bad invocation, parse error, or a module rejecting its parameters).  The
thread override (or the COULOMBGAS_THREADS environment variable) caps the
compiled-kernel thread pool; the numerical kernels are serial, so results
never depend on it.
"""

import math
import os
import sys
import time
from dataclasses import dataclass

import numpy as np

from .core import QuadraticPotential, UsageError, log_kernel
from .grids import Grid

_REQUIRED = object()

_VERSION = "0.1.0"


class SpecError(UsageError):
    """Spec file rejected; the message names the key and line."""


@dataclass(frozen=True)
class Param:
    kind: str          # int | float | bool | str | choice
    default: object    # _REQUIRED or the default value
    help: str
    choices: tuple = ()


@dataclass(frozen=True)
class ExperimentSpec:
    """A fully resolved experiment: command, plumbing, and parameters."""

    command: str
    output: str
    seed: int
    reproducible: bool
    threads: object    # int or None
    params: dict

    def resolved_text(self):
        lines = ["command = %s" % self.command,
                 "output = %s" % self.output,
                 "seed = %d" % self.seed,
                 "reproducible = %s" % _fmt(self.reproducible)]
        if self.threads is not None:
            lines.append("threads = %d" % self.threads)
        for key in sorted(self.params):
            lines.append("%s = %s" % (key, _fmt(self.params[key])))
        return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# formatting helpers (17 significant digits, LF endings)


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return "%d" % v
    if isinstance(v, (float, np.floating)):
        return "%.17g" % v
    return str(v)


def _write_text(path, text):
    with open(path, "w", newline="\n") as fh:
        fh.write(text)


def _write_kv(path, pairs):
    _write_text(path, "".join("%s = %s\n" % (k, _fmt(v)) for k, v in pairs))


def _write_csv(path, header, rows):
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    _write_text(path, "\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# command schemas


_KERNELS = {"log1": 1, "log2": 2}


def _kernel(name):
    return log_kernel(_KERNELS[name])


COMMANDS = {
    "equilibrium": {
        "equilibrium.kernel": Param("choice", "log2",
                                    "interaction kernel",
                                    ("log1", "log2")),
        "equilibrium.alpha": Param("float", 1.0,
                                   "confinement strength, V = alpha |x|^2"),
        "equilibrium.cells": Param("int", 256, "grid cells per axis"),
        "equilibrium.half_width": Param("float", 2.0, "grid half width"),
        "equilibrium.tol": Param("float", 5e-3,
                                 "optimality residual tolerance"),
        "equilibrium.max_iter": Param("int", 40000,
                                      "iteration cap for the solver"),
    },
    "flow": {
        "flow.n": Param("int", 200, "number of points"),
        "flow.kernel": Param("choice", "log2", "interaction kernel",
                             ("log1", "log2")),
        "flow.alpha": Param("float", 0.0,
                            "confinement strength (0 disables V)"),
        "flow.law": Param("choice", "gradient_flow", "evolution law",
                          ("gradient_flow", "conservative", "newton")),
        "flow.scheme": Param("choice", "rk4", "time integrator",
                             ("euler", "rk4", "verlet")),
        "flow.dt": Param("float", 1e-3, "time step"),
        "flow.time": Param("float", 1.0, "total integration time"),
        "flow.init_radius": Param("float", 1.0,
                                  "radius of the uniform initial disk"),
    },
    "sample": {
        "chain.n": Param("int", 64, "number of points"),
        "chain.kernel": Param("choice", "log2", "interaction kernel",
                              ("log1", "log2")),
        "chain.alpha": Param("float", 1.0,
                             "confinement strength, V = alpha |x|^2"),
        "chain.beta": Param("float", 2.0, "inverse temperature"),
        "chain.scaling": Param("choice", "fixed",
                               "temperature scaling with N",
                               ("fixed", "high_temperature", "next_order")),
        "chain.sweeps": Param("int", 20000, "total Metropolis sweeps"),
        "chain.burn": Param("int", 5000, "burn-in sweeps discarded"),
        "chain.stride": Param("int", 10, "thinning stride for snapshots"),
        "chain.box_half": Param("float", 0.0,
                                "confining box half width (0 disables)"),
    },
    "minimize": {
        "minimize.n": Param("int", 40, "number of points"),
        "minimize.kernel": Param("choice", "log2", "interaction kernel",
                                 ("log1", "log2")),
        "minimize.alpha": Param("float", 1.0,
                                "confinement strength, V = alpha |x|^2"),
        "minimize.beta0": Param("float", 2.0,
                                "initial annealing inverse temperature"),
        "minimize.factor": Param("float", 1.7, "geometric cooling factor"),
        "minimize.stages": Param("int", 20, "annealing stages"),
        "minimize.sweeps_per_stage": Param("int", 80,
                                           "sweeps at each stage"),
        "minimize.grad_tol": Param("float", 1e-8,
                                   "gradient norm target of the descent"),
    },
    "lattice": {
        "lattice.s": Param("float", 3.0, "zeta exponent"),
        "lattice.grid_nx": Param("int", 41,
                                 "tau_x samples across [-1/2, 1/2]"),
        "lattice.grid_ny": Param("int", 41, "tau_y samples"),
        "lattice.ymin": Param("float", 0.8, "smallest tau_y sampled"),
        "lattice.ymax": Param("float", 2.0, "largest tau_y sampled"),
        "lattice.starts": Param("int", 20, "multistart count for the "
                                           "zeta minimization"),
        "lattice.eta": Param("float", 0.2,
                             "smearing radius of the torus energies"),
    },
    "fluct": {
        "fluct.n": Param("int", 64, "number of points"),
        "fluct.alpha": Param("float", 1.0,
                             "confinement strength, V = alpha |x|^2"),
        "fluct.beta": Param("float", 2.0, "inverse temperature (fixed "
                                          "scaling)"),
        "fluct.sweeps": Param("int", 20000, "total Metropolis sweeps"),
        "fluct.burn": Param("int", 5000, "burn-in sweeps discarded"),
        "fluct.stride": Param("int", 10, "thinning stride for snapshots"),
        "fluct.f_radius": Param("float", 0.5, "test-function radius"),
        "fluct.f_exponent": Param("int", 4, "test-function exponent"),
        "fluct.f_center_x": Param("float", 0.0, "test-function center x"),
        "fluct.f_center_y": Param("float", 0.0, "test-function center y"),
        "fluct.window": Param("float", 2.0,
                              "microscopic window radius for the pair "
                              "correlation"),
        "fluct.bins": Param("int", 12, "pair-correlation bins"),
        "fluct.nv_rmin": Param("float", 0.08,
                               "smallest number-variance ball radius"),
        "fluct.nv_rmax": Param("float", 0.3,
                               "largest number-variance ball radius"),
        "fluct.nv_count": Param("int", 5, "number-variance radii"),
    },
    "splitdiag": {
        "split.n": Param("int", 30, "points per configuration"),
        "split.draws": Param("int", 200, "configurations tested"),
        "split.kernel": Param("choice", "log2", "interaction kernel",
                              ("log1", "log2")),
        "split.alpha": Param("float", 1.0,
                             "confinement strength, V = alpha |x|^2"),
        "split.scatter": Param("float", 1.5,
                               "box half width of the scattered draws, in "
                               "units of the support radius"),
    },
}

_TOP_HELP = [
    ("command", "one of: " + ", ".join(sorted(COMMANDS)) + "  (required)"),
    ("output", "output directory  (required)"),
    ("seed", "RNG seed  (default 0)"),
    ("reproducible", "omit volatile manifest fields so reruns are "
                     "byte-identical  (default false)"),
    ("threads", "cap on compiled-kernel threads  (default: "
                "COULOMBGAS_THREADS if set)"),
]


# ---------------------------------------------------------------------------
# parsing


def _convert(key, raw, param, line):
    where = "line %d: key '%s'" % (line, key)
    if param.kind == "int":
        try:
            return int(raw)
        except ValueError:
            raise SpecError("%s expects an integer, got %r" % (where, raw))
    if param.kind == "float":
        try:
            return float(raw)
        except ValueError:
            raise SpecError("%s expects a number, got %r" % (where, raw))
    if param.kind == "bool":
        low = raw.lower()
        if low in ("true", "yes", "1"):
            return True
        if low in ("false", "no", "0"):
            return False
        raise SpecError("%s expects true/false, got %r" % (where, raw))
    if param.kind == "choice":
        if raw not in param.choices:
            raise SpecError("%s expects one of %s, got %r"
                            % (where, "/".join(param.choices), raw))
        return raw
    return raw


def parse_spec_text(text):
    entries = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise SpecError("line %d: expected 'key = value', got %r"
                            % (lineno, line))
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if not key:
            raise SpecError("line %d: empty key" % lineno)
        if key in entries:
            raise SpecError("line %d: duplicate key '%s'" % (lineno, key))
        entries[key] = (value, lineno)

    def top(key, param):
        if key not in entries:
            if param.default is _REQUIRED:
                raise SpecError("missing required key '%s'" % key)
            return param.default
        value, lineno = entries.pop(key)
        return _convert(key, value, param, lineno)

    if "command" not in entries:
        raise SpecError("missing required key 'command'")
    command, cmd_line = entries.pop("command")
    if command not in COMMANDS:
        raise SpecError("line %d: unknown command '%s' (expected one of "
                        "%s)" % (cmd_line, command, ", ".join(sorted(
                            COMMANDS))))
    output = top("output", Param("str", _REQUIRED, ""))
    seed = top("seed", Param("int", 0, ""))
    reproducible = top("reproducible", Param("bool", False, ""))
    threads = top("threads", Param("int", None, ""))

    schema = COMMANDS[command]
    params = {}
    for key, (value, lineno) in entries.items():
        if key not in schema:
            raise SpecError("line %d: unknown key '%s' for command '%s'"
                            % (lineno, key, command))
        params[key] = _convert(key, value, schema[key], lineno)
    for key, param in schema.items():
        if key not in params:
            if param.default is _REQUIRED:
                raise SpecError("missing required key '%s' for command "
                                "'%s'" % (key, command))
            params[key] = param.default
    return ExperimentSpec(command=command, output=output, seed=seed,
                          reproducible=reproducible, threads=threads,
                          params=params)


def parse_spec_file(path):
    with open(path) as fh:
        return parse_spec_text(fh.read())


# ---------------------------------------------------------------------------
# command runners


def _run_equilibrium(spec, out):
    from .equilibrium import solve_equilibrium, verify_euler_lagrange
    p = spec.params
    kernel = _kernel(p["equilibrium.kernel"])
    potential = QuadraticPotential(p["equilibrium.alpha"])
    hw = p["equilibrium.half_width"]
    cells = p["equilibrium.cells"]
    if kernel.d == 1:
        grid = Grid((-hw,), (hw,), (cells,))
    else:
        grid = Grid.cube(hw, cells, 2)
    result = solve_equilibrium(kernel, potential, grid,
                               tol=p["equilibrium.tol"],
                               max_iter=p["equilibrium.max_iter"])
    report = verify_euler_lagrange(result, potential,
                                   tol=p["equilibrium.tol"])
    result.density.to_csv(os.path.join(out, "density.csv"))
    _write_kv(os.path.join(out, "report.txt"), [
        ("converged", result.converged),
        ("iterations", result.iterations),
        ("residual_on_support", result.residual_on),
        ("residual_off_support", result.residual_off),
        ("robin_constant", result.robin_constant),
        ("double_kernel_integral", result.gg),
        ("confinement_integral", result.v_int),
        ("energy", result.energy),
        ("euler_lagrange_passed", report.passed),
    ])


def _run_flow(spec, out):
    from .dynamics import evolve_deterministic
    p = spec.params
    kernel = _kernel(p["flow.kernel"])
    potential = QuadraticPotential(p["flow.alpha"])
    rng = np.random.default_rng(spec.seed)
    n = p["flow.n"]
    r0 = p["flow.init_radius"]
    if kernel.d == 2:
        radii = r0 * np.sqrt(rng.uniform(0.0, 1.0, n))
        theta = rng.uniform(0.0, 2.0 * math.pi, n)
        pos = np.stack([radii * np.cos(theta), radii * np.sin(theta)],
                       axis=1)
    else:
        pos = rng.uniform(-r0, r0, (n, 1))
    velocities = np.zeros_like(pos) if p["flow.law"] == "newton" else None
    traj = evolve_deterministic(pos, kernel, potential, p["flow.law"],
                                p["flow.dt"], p["flow.time"],
                                scheme=p["flow.scheme"],
                                velocities=velocities)
    rows = []
    for k, t in enumerate(traj.times):
        snap = traj.positions[k]
        r2 = np.sum(snap * snap, axis=1)
        step = min(int(round(t / traj.dt)), len(traj.energy) - 1)
        # 2 * mean |x|^2 estimates the squared radius of a uniform patch
        rows.append((t, float(np.max(r2)), 2.0 * float(np.mean(r2)),
                     float(traj.energy[step])))
    _write_csv(os.path.join(out, "flow.csv"),
               ("time", "max_radius_sq", "patch_radius_sq", "energy"), rows)
    _write_kv(os.path.join(out, "report.txt"), [
        ("n", n),
        ("law", traj.law),
        ("scheme", traj.scheme),
        ("dt", traj.dt),
        ("energy_drift", traj.energy_drift),
        ("final_patch_radius_sq", rows[-1][2]),
    ])


def _run_sample(spec, out):
    from .gibbs import (RunParameters, batch_mean_error, effective_beta,
                        metropolis_chain)
    p = spec.params
    params = RunParameters(kernel=_kernel(p["chain.kernel"]),
                           potential=QuadraticPotential(p["chain.alpha"]),
                           n=p["chain.n"], beta=p["chain.beta"],
                           n_sweeps=p["chain.sweeps"],
                           burn_sweeps=p["chain.burn"],
                           stride=p["chain.stride"],
                           beta_scaling=p["chain.scaling"],
                           seed=spec.seed, box_half=p["chain.box_half"])
    ss = metropolis_chain(params)
    sweeps = np.arange(params.n_sweeps)
    _write_csv(os.path.join(out, "series.csv"),
               ("sweep", "energy", "acceptance", "proposal_scale"),
               zip(sweeps, ss.energy_series, ss.acceptance,
                   ss.proposal_scale))
    d = ss.snapshots.shape[2]
    _write_csv(os.path.join(out, "final_positions.csv"),
               tuple("x%d" % i for i in range(d)), ss.snapshots[-1])
    post_burn = ss.acceptance[params.burn_sweeps:]
    _write_kv(os.path.join(out, "summary.txt"), [
        ("n_snapshots", ss.n_snapshots),
        ("effective_beta", effective_beta(params)),
        ("acceptance_mean", float(np.mean(post_burn))),
        ("proposal_scale_final", float(ss.proposal_scale[-1])),
        ("energy_mean", float(np.mean(ss.energies))),
        ("energy_error", batch_mean_error(ss.energies)),
    ])


def _run_minimize(spec, out):
    from .gibbs import AnnealSchedule, anneal_minimize
    p = spec.params
    schedule = AnnealSchedule(beta0=p["minimize.beta0"],
                              factor=p["minimize.factor"],
                              stages=p["minimize.stages"],
                              sweeps_per_stage=p["minimize.sweeps_per_stage"])
    res = anneal_minimize(_kernel(p["minimize.kernel"]),
                          QuadraticPotential(p["minimize.alpha"]),
                          p["minimize.n"], schedule=schedule,
                          seed=spec.seed, grad_tol=p["minimize.grad_tol"])
    pos = res.configuration.positions
    _write_csv(os.path.join(out, "positions.csv"),
               tuple("x%d" % i for i in range(pos.shape[1])), pos)
    _write_csv(os.path.join(out, "stages.csv"), ("stage", "energy"),
               list(enumerate(res.stage_energies)))
    _write_kv(os.path.join(out, "report.txt"), [
        ("energy", res.energy),
        ("grad_max", res.grad_max),
        ("gd_iterations", res.gd_iterations),
        ("converged", res.converged),
        ("line_search_ok", res.line_search_ok),
    ])


def _run_lattice(spec, out):
    from .lattice import (Lattice2D, epstein_zeta, lattice_configuration,
                          minimize_zeta, square_lattice,
                          torus_renormalized_energy, triangular_lattice)
    p = spec.params
    s = p["lattice.s"]
    xs = np.linspace(-0.5, 0.5, p["lattice.grid_nx"])
    ys = np.linspace(p["lattice.ymin"], p["lattice.ymax"],
                     p["lattice.grid_ny"])
    rows = [(x, y, epstein_zeta(Lattice2D(x, y), s))
            for x in xs for y in ys]
    _write_csv(os.path.join(out, "zeta_grid.csv"),
               ("tau_x", "tau_y", "zeta"), rows)
    res = minimize_zeta(s, n_starts=p["lattice.starts"], seed=spec.seed)
    eta = p["lattice.eta"]
    sq = lattice_configuration(square_lattice())
    tri = lattice_configuration(triangular_lattice())
    w_sq = torus_renormalized_energy(sq, eta=eta)
    w_tri = torus_renormalized_energy(tri, eta=eta)
    _write_kv(os.path.join(out, "report.txt"), [
        ("s", s),
        ("tau_star_x", res.tau.tau_x),
        ("tau_star_y", res.tau.tau_y),
        ("zeta_min", res.value),
        ("zeta_square", epstein_zeta(square_lattice(), s)),
        ("zeta_triangular", epstein_zeta(triangular_lattice(), s)),
        ("eta", eta),
        ("torus_energy_square", w_sq),
        ("torus_energy_triangular", w_tri),
        ("torus_energy_gap", w_tri - w_sq),
        ("torus_energy_square_exact", torus_renormalized_energy(sq)),
        ("torus_energy_triangular_exact", torus_renormalized_energy(tri)),
    ])


def _run_fluct(spec, out):
    from .equilibrium import DiskEquilibrium
    from .fluctuations import (TestFunction, clt_harness,
                               number_variance_curve, pair_correlation)
    from .gibbs import RunParameters, metropolis_chain
    p = spec.params
    params = RunParameters(kernel=log_kernel(2),
                           potential=QuadraticPotential(p["fluct.alpha"]),
                           n=p["fluct.n"], beta=p["fluct.beta"],
                           n_sweeps=p["fluct.sweeps"],
                           burn_sweeps=p["fluct.burn"],
                           stride=p["fluct.stride"], seed=spec.seed)
    ss = metropolis_chain(params)
    eq = DiskEquilibrium(p["fluct.alpha"])
    f = TestFunction(center=(p["fluct.f_center_x"], p["fluct.f_center_y"]),
                     radius=p["fluct.f_radius"],
                     exponent=p["fluct.f_exponent"])
    report = clt_harness(ss, f, eq)
    _write_text(os.path.join(out, "clt.txt"), report.as_text())
    pc = pair_correlation(ss, eq, p["fluct.bins"],
                          center=np.zeros(2), window=p["fluct.window"])
    header, rows = pc.csv_rows()
    _write_csv(os.path.join(out, "pair_correlation.csv"), header, rows)
    radii = np.geomspace(p["fluct.nv_rmin"], p["fluct.nv_rmax"],
                         p["fluct.nv_count"])
    curve = number_variance_curve(ss.snapshots, eq, np.zeros(2), radii)
    header, rows = curve.csv_rows()
    _write_csv(os.path.join(out, "number_variance.csv"), header, rows)
    _write_kv(os.path.join(out, "report.txt"), [
        ("number_variance_slope", curve.loglog_slope()),
        ("poisson_reference_slope", 2.0),
    ])


def _run_splitdiag(spec, out):
    from .energy import split_energy
    from .equilibrium import DiskEquilibrium, SemicircleEquilibrium
    p = spec.params
    kernel = _kernel(p["split.kernel"])
    alpha = p["split.alpha"]
    potential = QuadraticPotential(alpha)
    if kernel.d == 2:
        reference = DiskEquilibrium(alpha)
        support = reference.radius
    else:
        reference = SemicircleEquilibrium(alpha)
        support = reference.half_width
    rng = np.random.default_rng(spec.seed)
    n = p["split.n"]
    draws = p["split.draws"]
    rows = []
    max_rel = 0.0
    max_cross_inside = 0.0
    for k in range(draws):
        # odd draws stay inside the support ball, even draws scatter wider
        if k % 2:
            u = rng.uniform(0.0, 1.0, n) ** (1.0 / kernel.d)
            if kernel.d == 2:
                theta = rng.uniform(0.0, 2.0 * math.pi, n)
                pos = 0.9 * support * np.stack(
                    [u * np.cos(theta), u * np.sin(theta)], axis=1)
            else:
                pos = 0.9 * support * (2.0 * rng.uniform(0.0, 1.0,
                                                         (n, 1)) - 1.0)
        else:
            half = p["split.scatter"] * support
            pos = rng.uniform(-half, half, (n, kernel.d))
        inside = bool(np.all(np.linalg.norm(pos, axis=1) <= support))
        sp = split_energy(pos, kernel, potential, reference)
        rows.append((k, int(inside), sp.hamiltonian, sp.leading, sp.cross,
                     sp.next_order, sp.relative_error))
        max_rel = max(max_rel, sp.relative_error)
        if inside:
            max_cross_inside = max(max_cross_inside, abs(sp.cross) / n)
    _write_csv(os.path.join(out, "split.csv"),
               ("draw", "inside_support", "hamiltonian", "leading", "cross",
                "next_order", "relative_error"), rows)
    _write_kv(os.path.join(out, "report.txt"), [
        ("draws", draws),
        ("max_relative_error", max_rel),
        ("max_cross_per_point_inside", max_cross_inside),
    ])


_RUNNERS = {
    "equilibrium": _run_equilibrium,
    "flow": _run_flow,
    "sample": _run_sample,
    "minimize": _run_minimize,
    "lattice": _run_lattice,
    "fluct": _run_fluct,
    "splitdiag": _run_splitdiag,
}


# ---------------------------------------------------------------------------
# dispatch


def _apply_threads(threads):
    if threads is None:
        env = os.environ.get("COULOMBGAS_THREADS")
        if env:
            try:
                threads = int(env)
            except ValueError:
                raise UsageError("COULOMBGAS_THREADS must be an integer, "
                                 "got %r" % env)
    if threads is None:
        return None
    if threads < 1:
        raise UsageError("threads must be >= 1")
    try:
        import numba
        numba.set_num_threads(min(threads, numba.config.NUMBA_NUM_THREADS))
    except ImportError:
        pass
    return threads


def _versions():
    import scipy
    pairs = [("coulombgas", _VERSION),
             ("python", "%d.%d.%d" % sys.version_info[:3]),
             ("numpy", np.__version__),
             ("scipy", scipy.__version__)]
    try:
        import numba
        pairs.append(("numba", numba.__version__))
    except ImportError:
        pass
    return pairs


def run(spec_path):
    """Execute the experiment in ``spec_path``; returns the exit code.

    The resolved spec and the manifest are written even when the command
    fails, so every started run can be audited afterwards.
    """
    try:
        spec = parse_spec_file(spec_path)
        threads = _apply_threads(spec.threads)
        os.makedirs(spec.output, exist_ok=True)
        _write_text(os.path.join(spec.output, "spec.txt"),
                    spec.resolved_text())
    except (SpecError, UsageError, OSError) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 2
    status, message, code = "ok", None, 0
    start = time.perf_counter()
    try:
        _RUNNERS[spec.command](spec, spec.output)
    except UsageError as exc:
        status, message, code = "usage-error", str(exc), 2
    except Exception as exc:
        status, message, code = "runtime-error", "%s: %s" % (
            type(exc).__name__, exc), 1
    wall = time.perf_counter() - start
    manifest = [("command", spec.command), ("status", status)]
    if message is not None:
        manifest.append(("error", " ".join(message.split())))
        print("error: %s" % message, file=sys.stderr)
    manifest += [("seed", spec.seed),
                 ("reproducible", spec.reproducible)]
    if threads is not None:
        manifest.append(("threads", threads))
    manifest += _versions()
    if not spec.reproducible:
        manifest.append(("wall_time_seconds", wall))
    _write_kv(os.path.join(spec.output, "manifest.txt"), manifest)
    return code


def list_commands(command=None):
    """Help text: the spec format and every parameter with its default."""
    lines = ["usage: coulombgas SPECFILE",
             "       coulombgas help [COMMAND]",
             "",
             "The spec file holds one 'key = value' per line ('#' comments).",
             "Top-level keys:"]
    for key, text in _TOP_HELP:
        lines.append("  %-14s %s" % (key, text))
    names = [command] if command else sorted(COMMANDS)
    for name in names:
        lines.append("")
        lines.append("%s parameters:" % name)
        for key, param in COMMANDS[name].items():
            if param.default is _REQUIRED:
                default = "required"
            else:
                # shortest round-trip form; result files stay at %.17g
                shown = repr(param.default) if isinstance(
                    param.default, float) else _fmt(param.default)
                default = "default %s" % shown
            extra = " {%s}" % "/".join(param.choices) if param.choices \
                else ""
            lines.append("  %-26s %s%s  (%s)"
                         % (key, param.help, extra, default))
    return "\n".join(lines) + "\n"


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    if not argv or argv[0] == "help" and len(argv) == 1:
        print(list_commands(), end="")
        return 0
    if argv[0] == "help":
        if argv[1] in COMMANDS:
            print(list_commands(argv[1]), end="")
            return 0
        print(list_commands(), end="")
        print("error: unknown command '%s'" % argv[1], file=sys.stderr)
        return 2
    if len(argv) != 1:
        print(list_commands(), end="")
        print("error: expected a single spec file", file=sys.stderr)
        return 2
    if not os.path.isfile(argv[0]):
        print("error: no such spec file: %s" % argv[0], file=sys.stderr)
        return 2
    return run(argv[0])


if __name__ == "__main__":
    sys.exit(main())
