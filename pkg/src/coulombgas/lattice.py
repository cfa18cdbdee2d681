"""Unimodular lattices, Epstein zeta functions, and periodic jellium energies.

Three groups of tools live here.

* ``Lattice2D`` / ``reduce_to_fundamental_domain`` parameterize covolume-1
  planar lattices by the modular parameter tau = (x, y) and reduce tau to
  the standard fundamental domain |x| <= 1/2, x^2 + y^2 >= 1.
* ``epstein_zeta`` evaluates zeta(s) = sum' |p|^{-s} over a lattice by Ewald
  splitting between the lattice and its dual.  The representation converges
  for every s > 0 and analytically continues the region s <= 2 where the
  direct sum diverges (the zero-mode-subtracted convention: the background
  and dual-zero-mode terms appear as the two explicit splitting-parameter
  monomials below).  At s = 2 the representation has a simple pole whose
  residue 2*pi is the same for every covolume-1 lattice; the pole is deleted
  and the finite part returned, so rankings at s = 2 stay meaningful.
  ``minimize_zeta`` minimizes tau -> zeta(s) over the fundamental domain
  with finite-difference gradients, projecting back after every step.
* ``torus_renormalized_energy`` evaluates the renormalized Coulomb energy per
  unit volume of a neutral torus configuration (n unit charges on a constant
  background of density 1, cell volume equal to n).  With a smearing radius
  eta each charge is replaced by the uniform shell of radius eta (the same
  smearing measure the electric-field module realizes on its grid), the
  periodic Poisson equation -Delta H = c_d (rho_eta - 1) is solved by
  Fourier series (the zero mode vanishes by neutrality), and the value is

      (1/c_d) ( int_cell |grad H_eta|^2  -  n c_d g(eta) ) / volume.

  The shell's Fourier coefficients are J_0(|q| eta), so the series is summed
  in closed form over the dual-lattice modes with |q| <= pi * modes /
  sqrt(volume) and the slowly decaying above-cutoff self-field of each shell
  is added back analytically (radial integral of the large-argument law of
  J_0^2); the neglected remainder is O((eta Q)^{-2}) relative to the tail.
  At finite eta the value exceeds the eta -> 0 limit by exactly
  c_2 eta^2 / 2 = pi eta^2 at unit density, with no higher-order terms
  while the shells stay disjoint (the smeared-kernel mean-value property).
  With ``eta=None`` the exact eta -> 0 limit is evaluated in closed form:
  in d = 2 through the first Jacobi theta function, whose torus Green
  function G solves -Delta G = c_2 (delta - 1/volume) with Robin constant
  R = lim_{z->0} (G(z) + log|z|), giving
  (sum_{i != j} G(x_i - x_j) + n R) / volume; in d = 1 through
  -log|2 sin(pi x / L)| pair sums with the renormalized self-interaction
  -log(2 pi / L) per point.

Convention: the reported energy carries the single 1/c_d prefactor (no
extra 1/2) and is per unit volume, matching the closed forms above.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .core import (UsageError, CoincidentPointsError, ConvergenceError)

C2 = 2.0 * math.pi

# exp(-_TAIL_EXPONENT) sets the Ewald truncation; 46 leaves the tails
# below 1e-15 even after summing the boundary terms
_TAIL_EXPONENT = 46.0


# ---------------------------------------------------------------------------
# modular parameterization


@dataclass(frozen=True)
class Lattice2D:
    """Covolume-1 planar lattice spanned by (1/sqrt(y))(1,0), (1/sqrt(y))(x,y)."""

    tau_x: float
    tau_y: float

    def __post_init__(self):
        x = float(self.tau_x)
        y = float(self.tau_y)
        if not (math.isfinite(x) and math.isfinite(y)):
            raise UsageError("tau must be finite")
        if y <= 0.0:
            raise UsageError("tau must lie in the upper half plane (y > 0)")
        object.__setattr__(self, "tau_x", x)
        object.__setattr__(self, "tau_y", y)

    @property
    def tau(self):
        return complex(self.tau_x, self.tau_y)

    @property
    def basis(self):
        """2x2 matrix with the two lattice vectors as columns (det = 1)."""
        r = 1.0 / math.sqrt(self.tau_y)
        return np.array([[r, r * self.tau_x],
                         [0.0, r * self.tau_y]])

    @property
    def dual_basis(self):
        """Columns span the dual lattice: dual^T basis = identity."""
        return np.linalg.inv(self.basis).T

    @property
    def is_reduced(self):
        x, y = self.tau_x, self.tau_y
        return abs(x) <= 0.5 + 1e-12 and x * x + y * y >= 1.0 - 1e-12


def square_lattice():
    return Lattice2D(0.0, 1.0)


def triangular_lattice():
    return Lattice2D(0.5, 0.5 * math.sqrt(3.0))


def _reduce_xy(x, y):
    if y <= 0.0:
        raise UsageError("tau must lie in the upper half plane (y > 0)")
    for _ in range(500):
        x = x - np.rint(x)
        n2 = x * x + y * y
        if n2 < 1.0 - 1e-15:
            x, y = -x / n2, y / n2
        else:
            break
    # canonical representative on the two identified boundary pieces
    if abs(x + 0.5) <= 1e-13:
        x = 0.5
    if abs(x * x + y * y - 1.0) <= 1e-13 and x < 0.0:
        x = -x
    return float(x), float(y)


def reduce_to_fundamental_domain(tau):
    """Reduce tau by tau -> tau+1 / tau -> -1/tau moves; same lattice.

    Accepts a ``Lattice2D`` or an (x, y) pair and returns the same kind.
    """
    if isinstance(tau, Lattice2D):
        x, y = _reduce_xy(tau.tau_x, tau.tau_y)
        return Lattice2D(x, y)
    x, y = _reduce_xy(float(tau[0]), float(tau[1]))
    return (x, y)


# ---------------------------------------------------------------------------
# Epstein zeta by Ewald splitting


def _ball_norms2(basis, radius):
    """Squared norms of the nonzero lattice points inside |p| <= radius."""
    u = basis[:, 0]
    v = basis[:, 1]
    det = abs(u[0] * v[1] - u[1] * v[0])
    mmax = int(radius * math.hypot(v[0], v[1]) / det) + 2
    nmax = int(radius * math.hypot(u[0], u[1]) / det) + 2
    ms = np.arange(-mmax, mmax + 1.0)
    ns = np.arange(-nmax, nmax + 1.0)
    px = ms[:, None] * u[0] + ns[None, :] * v[0]
    py = ms[:, None] * u[1] + ns[None, :] * v[1]
    r2 = px * px + py * py
    r2 = r2[(r2 <= radius * radius) & (r2 > 1e-18)]
    return r2


def _upper_gamma(a, x):
    """Upper incomplete gamma for real order a (negative orders by recurrence)."""
    if a > 1e-12:
        return special.gamma(a) * special.gammaincc(a, x)
    if abs(a) <= 1e-12:
        return special.exp1(x)
    return (_upper_gamma(a + 1.0, x) - x ** a * np.exp(-x)) / a


def epstein_zeta(lattice, s, splitting=1.0):
    """zeta(s) = sum over nonzero lattice points of |p|^{-s}, Ewald form.

    ``splitting`` is the Ewald parameter t0; the value is independent of it.
    For s < 2 the formula returns the analytic continuation; at s = 2 the
    (lattice-independent) pole is deleted and the finite part returned.
    """
    s = float(s)
    if not math.isfinite(s) or s <= 0.0:
        raise UsageError("epstein_zeta requires s > 0")
    t0 = float(splitting)
    if not math.isfinite(t0) or t0 <= 0.0:
        raise UsageError("splitting parameter must be positive")
    basis = lattice.basis
    p2 = _ball_norms2(basis, math.sqrt(_TAIL_EXPONENT / (math.pi * t0)))
    q2 = _ball_norms2(np.linalg.inv(basis).T,
                      math.sqrt(_TAIL_EXPONENT * t0 / math.pi))
    if abs(s - 2.0) <= 1e-12:
        # deleted-pole finite part: lim (zeta(s) - 2 pi / (s - 2))
        direct = float(np.sum(np.exp(-math.pi * t0 * p2) / (math.pi * p2)))
        dual = float(np.sum(special.exp1(math.pi * q2 / t0)))
        return math.pi * (direct + dual - t0 + math.log(t0)
                          + math.log(math.pi) + np.euler_gamma)
    a = 0.5 * s
    direct = float(np.sum(_upper_gamma(a, math.pi * t0 * p2)
                          * (math.pi * p2) ** (-a)))
    dual = float(np.sum(_upper_gamma(1.0 - a, math.pi * q2 / t0)
                        * (math.pi * q2) ** (a - 1.0)))
    poles = t0 ** (a - 1.0) / (a - 1.0) - t0 ** a / a
    return math.pi ** a / special.gamma(a) * (direct + dual + poles)


@dataclass(frozen=True)
class MinimizeZetaResult:
    """Best minimizer over all starts plus the per-start endpoints."""

    tau: Lattice2D
    value: float
    final_taus: np.ndarray
    values: np.ndarray
    iterations: np.ndarray

    def __post_init__(self):
        for name in ("final_taus", "values", "iterations"):
            arr = np.asarray(getattr(self, name))
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)


def _fd_gradient(fun, x, y, h=1e-6):
    gx = (fun(x + h, y) - fun(x - h, y)) / (2.0 * h)
    gy = (fun(x, y + h) - fun(x, y - h)) / (2.0 * h)
    return np.array([gx, gy])


def minimize_zeta(s, n_starts=20, seed=0, max_iter=400,
                  grad_tol=1e-8, step_tol=1e-10):
    """Minimize tau -> epstein_zeta(tau, s) over the fundamental domain.

    zeta is modular invariant and smooth on the whole upper half plane, so
    the descent (finite-difference gradients, quotient-of-increments step
    lengths, Armijo backtracking) runs unconstrained there and only the
    final iterate is reduced to the fundamental domain.  Starts from
    ``n_starts`` random reduced points; a start that fails to converge
    raises ConvergenceError with the objective trace attached.  tau and its
    mirror image (-x, y) give the same zeta value, so results are
    canonicalized to x >= 0.
    """
    s = float(s)
    if not math.isfinite(s) or s <= 0.0:
        raise UsageError("minimize_zeta requires s > 0")

    def fun(x, y):
        return epstein_zeta(Lattice2D(x, y), s)

    rng = np.random.default_rng(seed)
    finals = np.empty((n_starts, 2))
    values = np.empty(n_starts)
    iters = np.empty(n_starts, dtype=np.int64)
    for k in range(n_starts):
        x = rng.uniform(-0.5, 0.5)
        ylo = math.sqrt(max(1.0 - x * x, 0.0)) + 1e-3
        y = rng.uniform(ylo, 2.2)
        x, y = _reduce_xy(x, y)
        f = fun(x, y)
        trace = [f]
        grad = _fd_gradient(fun, x, y)
        prev = None
        t = 0.05 / (np.linalg.norm(grad) + 1.0)
        done = False
        for it in range(max_iter):
            gnorm = np.linalg.norm(grad)
            if gnorm <= grad_tol:
                done = True
                break
            if prev is not None:
                svec = np.array([x, y]) - prev[0]
                yvec = grad - prev[1]
                sy = float(svec @ yvec)
                if sy > 1e-18:
                    t = min(max(float(svec @ svec) / sy, 1e-10), 5.0)
            accepted = False
            tt = t
            for _ in range(60):
                xt = x - tt * grad[0]
                yt = y - tt * grad[1]
                if yt <= 1e-9:
                    # infeasible trial (left the upper half plane)
                    tt *= 0.5
                    continue
                ft = fun(xt, yt)
                if ft <= f - 1e-4 * tt * gnorm * gnorm:
                    accepted = True
                    break
                tt *= 0.5
            if not accepted:
                done = gnorm <= 1e3 * grad_tol
                break
            prev = (np.array([x, y]), grad)
            step = math.hypot(x - xt, y - yt)
            x, y, f = xt, yt, ft
            trace.append(f)
            grad = _fd_gradient(fun, x, y)
            if step <= step_tol:
                done = True
                break
        if not done:
            raise ConvergenceError(
                "zeta minimization did not converge from start %d" % k,
                result=np.asarray(trace))
        x, y = _reduce_xy(x, y)
        finals[k] = (abs(x), y)
        values[k] = f
        iters[k] = len(trace) - 1
    best = int(np.argmin(values))
    tau = Lattice2D(finals[best, 0], finals[best, 1])
    return MinimizeZetaResult(tau=tau, value=float(values[best]),
                              final_taus=finals, values=values,
                              iterations=iters)


# ---------------------------------------------------------------------------
# torus configurations


def _gauss_reduce(basis):
    """Lagrange-reduced basis of the same lattice (shortest vectors, det > 0)."""
    u = basis[:, 0].astype(float).copy()
    v = basis[:, 1].astype(float).copy()
    for _ in range(200):
        if u @ u > v @ v:
            u, v = v, u.copy()
        r = round(float((u @ v) / (u @ u)))
        if r == 0:
            break
        v = v - r * u
    out = np.column_stack([u, v])
    if np.linalg.det(out) < 0.0:
        out[:, 1] = -out[:, 1]
    return out


@dataclass(frozen=True)
class TorusConfiguration:
    """n distinct points in a d-torus cell of volume n (unit density)."""

    positions: np.ndarray
    basis: np.ndarray

    def __post_init__(self):
        pos = np.array(self.positions, dtype=float)
        if pos.ndim != 2:
            raise UsageError("positions must be an (n, d) array")
        bas = np.array(self.basis, dtype=float)
        n, d = pos.shape
        if d not in (1, 2):
            raise UsageError("torus configurations support d in {1, 2}")
        if bas.shape != (d, d):
            raise UsageError("cell basis must be a (d, d) matrix")
        vol = abs(float(np.linalg.det(bas)))
        if not math.isfinite(vol) or abs(vol - n) > 1e-8 * max(1.0, n):
            raise UsageError(
                "neutrality requires cell volume equal to the point count")
        pos.setflags(write=False)
        bas.setflags(write=False)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "basis", bas)
        if self.min_image_distance() <= 1e-9 * vol ** (1.0 / d):
            raise CoincidentPointsError(
                "torus points must be pairwise distinct modulo the lattice")

    @property
    def n(self):
        return self.positions.shape[0]

    @property
    def d(self):
        return self.positions.shape[1]

    @property
    def cell_volume(self):
        return abs(float(np.linalg.det(self.basis)))

    def min_image_distance(self):
        """Smallest pairwise distance on the torus (minimum image)."""
        if self.n == 1:
            bas = (self.basis if self.d == 1
                   else _gauss_reduce(self.basis))
            return float(np.linalg.norm(bas[:, 0]))
        if self.d == 1:
            length = abs(float(self.basis[0, 0]))
            s = np.sort(np.mod(self.positions[:, 0] / length, 1.0))
            gaps = np.diff(np.concatenate([s, s[:1] + 1.0]))
            return float(np.min(gaps) * length)
        bas = _gauss_reduce(self.basis)
        frac = np.linalg.solve(bas, self.positions.T).T
        ds = frac[:, None, :] - frac[None, :, :]
        ds -= np.rint(ds)
        iu = np.triu_indices(self.n, 1)
        ds = ds[iu]
        best = np.full(ds.shape[0], np.inf)
        for ka in (-1.0, 0.0, 1.0):
            for kb in (-1.0, 0.0, 1.0):
                w = (ds + np.array([ka, kb])) @ bas.T
                best = np.minimum(best, np.einsum("ij,ij->i", w, w))
        return float(math.sqrt(np.min(best)))


def lattice_configuration(lattice, copies=1):
    """copies x copies points of the unimodular lattice, one per unit cell."""
    if copies < 1:
        raise UsageError("copies must be a positive integer")
    bas = lattice.basis
    idx = np.arange(copies, dtype=float)
    ii, jj = np.meshgrid(idx, idx, indexing="ij")
    pts = np.stack([ii.ravel() * bas[0, 0] + jj.ravel() * bas[0, 1],
                    ii.ravel() * bas[1, 0] + jj.ravel() * bas[1, 1]], axis=1)
    return TorusConfiguration(pts, copies * bas)


def circle_configuration(n):
    """n equally spaced points on the circle of circumference n."""
    if n < 1:
        raise UsageError("n must be a positive integer")
    return TorusConfiguration(np.arange(n, dtype=float)[:, None],
                              np.array([[float(n)]]))


# ---------------------------------------------------------------------------
# exact (eta -> 0) evaluator: theta functions in d = 2, 2 sin in d = 1


def _dedekind_eta(tau):
    q24 = np.exp(2j * math.pi * tau / 24.0)
    q = q24 ** 24
    prod = 1.0 + 0.0j
    qk = 1.0 + 0.0j
    for _ in range(200):
        qk *= q
        prod *= 1.0 - qk
        if abs(qk) < 1e-19:
            break
    return q24 * prod


def _theta1(v, tau):
    """First Jacobi theta function, series in the nome exp(i pi tau)."""
    v = np.asarray(v, dtype=complex)
    q = np.exp(1j * math.pi * tau)
    total = np.zeros_like(v)
    for k in range(12):
        total += ((-1) ** k * q ** ((k + 0.5) ** 2)
                  * np.sin((2 * k + 1) * math.pi * v))
    return 2.0 * total


def _complex_periods(basis):
    """Reduced periods (omega1, tau) of the cell lattice, Im tau > 0."""
    bas = _gauss_reduce(basis)
    w1 = complex(bas[0, 0], bas[1, 0])
    w2 = complex(bas[0, 1], bas[1, 1])
    tau = w2 / w1
    if tau.imag < 0.0:
        tau = -tau
        w2 = -w2
    return w1, tau


def torus_green_function(dx, basis):
    """Green function of -Delta G = c_2 (delta - 1/volume) on the torus.

    ``dx`` holds displacement vectors, shape (..., 2).  Normalized to zero
    cell average (the cell mean of -log|theta_1| + pi Im(v)^2 / Im tau is
    -log|eta(tau)|), so quadratic forms of neutral charge distributions
    decompose into pair sums without background cross terms.  Near zero,
    G(z) = -log|z| + R + O(|z|^2) with R the Robin constant.
    """
    dx = np.asarray(dx, dtype=float)
    w1, tau = _complex_periods(basis)
    z = (dx[..., 0] + 1j * dx[..., 1]) / w1
    # fractional coordinates in the (1, tau) cell, wrapped to [-1/2, 1/2)
    s2 = z.imag / tau.imag
    s1 = z.real - s2 * tau.real
    s1 -= np.rint(s1)
    s2 -= np.rint(s2)
    v = s1 + tau * s2
    return (-np.log(np.abs(_theta1(v, tau)))
            + math.pi * v.imag ** 2 / tau.imag
            + np.log(np.abs(_dedekind_eta(tau))))


def torus_robin_constant(basis):
    """R = lim_{z->0} (G(z) + log|z|) for the zero-mean torus Green function.

    Equals log|omega_1| - log(2 pi |eta(tau)|^2) through the first theta
    function's derivative theta_1'(0|tau) = 2 pi eta(tau)^3.
    """
    w1, tau = _complex_periods(basis)
    eta_abs = np.abs(_dedekind_eta(tau))
    return float(math.log(abs(w1)) - np.log(2.0 * math.pi * eta_abs ** 2))


def _torus_energy_exact(config):
    n = config.n
    vol = config.cell_volume
    if config.d == 1:
        length = abs(float(config.basis[0, 0]))
        x = config.positions[:, 0]
        iu = np.triu_indices(n, 1)
        dx = (x[:, None] - x[None, :])[iu]
        pair = -np.log(np.abs(2.0 * np.sin(math.pi * dx / length)))
        self_term = -math.log(2.0 * math.pi / length)
        return float((2.0 * np.sum(pair) + n * self_term) / length)
    robin = torus_robin_constant(config.basis)
    if n == 1:
        return float(robin / vol)
    iu = np.triu_indices(n, 1)
    dx = (config.positions[:, None, :] - config.positions[None, :, :])[iu]
    green = torus_green_function(dx, config.basis)
    return float((2.0 * np.sum(green) + n * robin) / vol)


# ---------------------------------------------------------------------------
# spectral (finite eta) evaluator


def _dual_mode_vectors(basis, qmax):
    """Nonzero dual-lattice wave vectors with |q| <= qmax, shape (k, 2)."""
    dual = 2.0 * math.pi * np.linalg.inv(basis).T
    u = dual[:, 0]
    v = dual[:, 1]
    det = abs(u[0] * v[1] - u[1] * v[0])
    mmax = int(qmax * math.hypot(v[0], v[1]) / det) + 2
    nmax = int(qmax * math.hypot(u[0], u[1]) / det) + 2
    ms = np.arange(-mmax, mmax + 1.0)
    ns = np.arange(-nmax, nmax + 1.0)
    qx = (ms[:, None] * u[0] + ns[None, :] * v[0]).ravel()
    qy = (ms[:, None] * u[1] + ns[None, :] * v[1]).ravel()
    q2 = qx * qx + qy * qy
    keep = (q2 <= qmax * qmax) & (q2 > 1e-18)
    return qx[keep], qy[keep]


def _torus_energy_spectral(config, eta, modes):
    bas = _gauss_reduce(config.basis)
    n = config.n
    vol = config.cell_volume
    half_min = 0.5 * config.min_image_distance()
    if not (0.0 < eta < half_min):
        raise UsageError(
            "eta must be below half the minimal torus pair distance")
    if modes is None:
        # resolve the shell spectrum out to q eta ~ 256 by default
        modes = int(min(8192, 2 * math.ceil(128.0 * math.sqrt(vol)
                                            / (math.pi * eta))))
    modes = int(modes)
    qmax = math.pi * modes / math.sqrt(vol)
    if qmax * eta < 40.0:
        raise UsageError(
            "mode cutoff too small to resolve the smearing shell; "
            "increase modes or eta")

    qx, qy = _dual_mode_vectors(bas, qmax)
    qn = np.hypot(qx, qy)
    phases = np.zeros(qn.shape, dtype=complex)
    for i in range(n):
        phases += np.exp(-1j * (qx * config.positions[i, 0]
                                + qy * config.positions[i, 1]))
    shell = special.j0(qn * eta)
    field = C2 ** 2 / vol * float(
        np.sum(shell * shell * np.abs(phases) ** 2 / (qn * qn)))
    # above-cutoff self-field of each shell: radial integral of the
    # large-argument law J_0(x)^2 ~ (1 + sin 2x) / (pi x); the remainder
    # and the neglected cross-shell tails are O((q eta)^{-2}) relative
    tail = (C2 ** 2 / (2.0 * math.pi ** 2 * eta)
            * (1.0 / qmax
               + math.cos(2.0 * qmax * eta) / (2.0 * eta * qmax ** 2)))
    field += n * tail
    return (field - n * C2 * (-math.log(eta))) / (C2 * vol)


def torus_renormalized_energy(config, eta=None, modes=None):
    """Renormalized Coulomb energy per unit volume of a neutral torus gas.

    ``eta`` is the shell-smearing radius; ``modes`` the Fourier modes per
    axis of the spectral Poisson solve.  ``eta=None`` returns the exact
    eta -> 0 limit in closed form (the only supported path in d = 1, where
    the circle value is evaluated analytically).
    """
    if not isinstance(config, TorusConfiguration):
        raise UsageError("expected a TorusConfiguration")
    if config.d == 1:
        if eta is not None:
            raise UsageError(
                "the circle evaluator is exact in the eta -> 0 limit; "
                "pass eta=None")
        return _torus_energy_exact(config)
    if eta is None:
        return _torus_energy_exact(config)
    return _torus_energy_spectral(config, float(eta), modes)


@dataclass(frozen=True)
class EtaStudy:
    """Smearing-radius halving study with Richardson extrapolation."""

    etas: np.ndarray
    values: np.ndarray
    differences: np.ndarray
    observed_order: float
    richardson: float

    def __post_init__(self):
        for name in ("etas", "values", "differences"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)


def torus_energy_eta_study(config, eta_max=None, levels=3, modes=None):
    """Evaluate the smeared energy at eta_max / 2^k, k < levels.

    All levels share one mode cutoff (sized for the smallest eta) so the
    differences isolate the eta dependence.  The observed order is fitted
    from the last two differences when three or more levels are available;
    the reported Richardson value extrapolates the final pair with it.
    """
    if config.d != 2:
        raise UsageError("the eta study applies to d = 2 tori")
    if levels < 2:
        raise UsageError("need at least two eta levels")
    if eta_max is None:
        eta_max = 0.25 * config.min_image_distance()
    eta_max = float(eta_max)
    etas = eta_max * 0.5 ** np.arange(levels)
    if modes is None:
        modes = int(min(8192,
                        2 * math.ceil(128.0 * math.sqrt(config.cell_volume)
                                      / (math.pi * etas[-1]))))
    values = np.array([_torus_energy_spectral(config, e, modes)
                       for e in etas])
    diffs = np.diff(values)
    if levels >= 3 and abs(diffs[-1]) > 0.0:
        order = math.log2(abs(diffs[-2]) / abs(diffs[-1]))
    else:
        order = float("nan")
    if math.isfinite(order) and order > 0.1:
        rich = values[-1] + diffs[-1] / (2.0 ** order - 1.0)
    else:
        rich = values[-1]
    return EtaStudy(etas=etas, values=values, differences=diffs,
                    observed_order=float(order), richardson=float(rich))
