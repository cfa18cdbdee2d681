"""Microscopic statistics of point configurations against an equilibrium.

The tools here compare sampled or minimized configurations with their
macroscopic equilibrium measure at the microscopic scale: blow-up around an
interior point to unit density, ball-count discrepancies and their variance
growth, pair correlations of the blown-up process, and a harness testing the
Gaussian limit of linear statistics sum_i f(x_i) - N int f dmu.

Measure integrals (ball masses, int f dmu) use cell-center grid quadrature
of the equilibrium density, so a constant integrand integrates to exactly
the total mass and discrepancies over complementary regions cancel exactly.

The fluctuation prediction implemented by ``clt_harness`` is the planar one:
mean 0 and variance (1/(2 pi beta)) int |grad f|^2 for test functions
supported inside the support of the equilibrium measure with quadratic
confinement (the regime where no exterior harmonic extension of f is
needed; the mean term vanishes there because the correction weight is
constant on the support and int lap f = 0).
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, stats
from scipy.spatial.distance import pdist

from .core import UsageError
from .grids import Grid, GriddedDensity


# ---------------------------------------------------------------------------
# test functions


@dataclass(frozen=True)
class TestFunction:
    """Polynomial bump amplitude * (1 - |(x - center)/radius|^2)^exponent.

    Compactly supported in the ball of the given radius; C^2 requires
    exponent >= 3 (each derivative loses one power at the edge).
    """

    __test__ = False  # not a test case despite the name

    center: tuple = (0.0, 0.0)
    radius: float = 0.5
    exponent: int = 4
    amplitude: float = 1.0

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.center, dtype=float))
        object.__setattr__(self, "center", tuple(float(v) for v in c))
        if not self.radius > 0.0:
            raise UsageError("support radius must be positive")
        if int(self.exponent) != self.exponent or self.exponent < 3:
            raise UsageError("exponent must be an integer >= 3 for C^2")

    @property
    def d(self):
        return len(self.center)

    @property
    def support_radius(self):
        return float(self.radius)

    def _s(self, points):
        x = np.atleast_2d(np.asarray(points, dtype=float))
        dx = x - np.asarray(self.center)
        return np.sum(dx * dx, axis=-1) / self.radius ** 2, dx

    def value(self, points):
        s, _ = self._s(points)
        inside = s < 1.0
        out = np.zeros_like(s)
        out[inside] = self.amplitude * (1.0 - s[inside]) ** self.exponent
        return out

    def gradient(self, points):
        s, dx = self._s(points)
        k = self.exponent
        w = np.where(s < 1.0, (1.0 - np.minimum(s, 1.0)) ** (k - 1), 0.0)
        return (-2.0 * k * self.amplitude / self.radius ** 2) * dx \
            * w[..., None]

    def laplacian(self, points):
        s, _ = self._s(points)
        k = self.exponent
        d = self.d
        t = 1.0 - np.minimum(s, 1.0)
        w = np.where(s < 1.0, t ** (k - 2), 0.0)
        return (-2.0 * k * self.amplitude / self.radius ** 2) \
            * w * (d * t - 2.0 * (k - 1) * s)

    def gradient_sq_integral(self):
        """int |grad f|^2 dx over the support, by quadrature."""
        k = self.exponent
        a = 2.0 * k * self.amplitude / self.radius ** 2

        def radial(rho):
            return (a * rho) ** 2 * (1.0 - (rho / self.radius) ** 2) \
                ** (2 * k - 2)

        if self.d == 2:
            val, _ = integrate.quad(
                lambda rho: 2.0 * math.pi * rho * radial(rho),
                0.0, self.radius)
        else:
            val, _ = integrate.quad(radial, -self.radius, self.radius)
        return float(val)


# ---------------------------------------------------------------------------
# equilibrium plumbing


def _gridded(equilibrium, cells=None):
    """Cell-center gridded density for any accepted equilibrium input."""
    if isinstance(equilibrium, GriddedDensity):
        return equilibrium
    dens = getattr(equilibrium, "density", None)
    if isinstance(dens, GriddedDensity):
        return dens
    support = getattr(equilibrium, "radius",
                      getattr(equilibrium, "half_width", None))
    if support is None or not hasattr(equilibrium, "on_grid"):
        raise UsageError(
            "equilibrium must be a gridded density, a solved equilibrium, "
            "or a closed form with a known support radius")
    d = 2 if hasattr(equilibrium, "radius") else 1
    n = cells if cells is not None else (512 if d == 2 else 4096)
    return equilibrium.on_grid(Grid.cube(1.05 * support, n, d))


def _density_at(equilibrium, points):
    if hasattr(equilibrium, "density_at"):
        return np.asarray(equilibrium.density_at(points), dtype=float)
    mu = _gridded(equilibrium)
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    vals = np.zeros(len(pts))
    ok = mu.grid.contains(pts)
    if np.any(ok):
        idx = mu.grid.index_of(pts[ok])
        vals[ok] = mu.values[tuple(idx.T)]
    return vals


def _ball_mass(mu, center, radius):
    """Equilibrium mass of the ball by cell-center quadrature."""
    centers = mu.grid.flat_centers()
    dist = np.linalg.norm(centers - np.asarray(center, dtype=float), axis=1)
    inside = (dist <= radius).reshape(mu.grid.shape)
    return float(np.sum(mu.values[inside]) * mu.grid.cell_volume)


def _as_config(config):
    x = np.asarray(config, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2:
        raise UsageError("configuration must be an (N, d) array")
    return x


# ---------------------------------------------------------------------------
# blow-up


@dataclass(frozen=True)
class PointProcessSample:
    """Configuration rescaled to unit density around a blow-up center.

    ``points`` are x' = (N rho)^{1/d} (x - center) for the local equilibrium
    density rho, keeping |x'| <= window.  ``retained_index`` maps each row
    back to the original configuration.
    """

    points: np.ndarray
    window: float
    center: np.ndarray
    local_density: float
    scale: float
    retained_index: np.ndarray

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        c = np.atleast_1d(np.asarray(self.center, dtype=float))
        c.setflags(write=False)
        object.__setattr__(self, "center", c)
        idx = np.asarray(self.retained_index, dtype=np.int64)
        idx.setflags(write=False)
        object.__setattr__(self, "retained_index", idx)
        if pts.size and np.max(np.linalg.norm(pts, axis=1)) \
                > self.window * (1.0 + 1e-12):
            raise UsageError("retained points must lie within the window")

    @property
    def n(self):
        return self.points.shape[0]

    def original_positions(self):
        """Undo the rescaling (exact up to one rounding per coordinate)."""
        return self.points / self.scale + self.center


def blow_up(config, center, equilibrium, window):
    """Rescale around an interior point to unit expected density.

    Keeps the points with |x'| <= window after x' = (N rho(center))^{1/d}
    (x - center); the retained count is ~ the window volume, independent
    of N.
    """
    x = _as_config(config)
    n, d = x.shape
    center = np.atleast_1d(np.asarray(center, dtype=float))
    if center.shape != (d,):
        raise UsageError("blow-up center must have the configuration's d")
    if not window > 0.0:
        raise UsageError("window radius must be positive")
    rho = float(_density_at(equilibrium, center[None, :])[0])
    if rho <= 0.0:
        raise UsageError(
            "blow-up center must lie inside the equilibrium support")
    scale = (n * rho) ** (1.0 / d)
    prime = scale * (x - center)
    keep = np.flatnonzero(np.linalg.norm(prime, axis=1) <= window)
    return PointProcessSample(points=prime[keep], window=float(window),
                              center=center, local_density=rho, scale=scale,
                              retained_index=keep)


# ---------------------------------------------------------------------------
# discrepancy and number variance


def discrepancy(config, equilibrium, center, radius):
    """Ball count minus expected count, #{x_i in B_r} - N mu(B_r)."""
    if not radius > 0.0:
        raise UsageError("ball radius must be positive")
    x = _as_config(config)
    center = np.atleast_1d(np.asarray(center, dtype=float))
    mu = _gridded(equilibrium)
    count = int(np.sum(np.linalg.norm(x - center, axis=1) <= radius))
    return count - x.shape[0] * _ball_mass(mu, center, radius)


@dataclass(frozen=True)
class NumberVarianceCurve:
    """Variance of the ball-count discrepancy versus ball radius.

    ``poisson`` is the area-law reference N mu(B_r) (the variance of an
    ideal Poisson sample of the same intensity).
    """

    radii: np.ndarray
    variances: np.ndarray
    poisson: np.ndarray
    mean_counts: np.ndarray

    def __post_init__(self):
        for name in ("radii", "variances", "poisson", "mean_counts"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def loglog_slope(self):
        """Least-squares slope of log Var against log r."""
        ok = self.variances > 0
        if np.count_nonzero(ok) < 2:
            return float("nan")
        return float(np.polyfit(np.log(self.radii[ok]),
                                np.log(self.variances[ok]), 1)[0])

    def csv_rows(self):
        header = ("radius", "variance", "poisson_reference", "mean_count")
        rows = np.stack([self.radii, self.variances, self.poisson,
                         self.mean_counts], axis=1)
        return header, rows


def number_variance_curve(configs, equilibrium, center, radii):
    """Across-sample variance of ball counts at each radius."""
    snaps = getattr(configs, "snapshots", configs)
    snaps = np.asarray(snaps, dtype=float)
    if snaps.ndim == 2:
        snaps = snaps[None]
    if snaps.shape[0] < 2:
        raise UsageError("need at least two configurations for a variance")
    center = np.atleast_1d(np.asarray(center, dtype=float))
    radii = np.asarray(radii, dtype=float)
    if not np.all(radii > 0):
        raise UsageError("radii must be positive")
    mu = _gridded(equilibrium)
    n = snaps.shape[1]
    dist = np.linalg.norm(snaps - center, axis=2)
    variances = np.empty(radii.shape)
    poisson = np.empty(radii.shape)
    means = np.empty(radii.shape)
    for i, r in enumerate(radii):
        counts = np.sum(dist <= r, axis=1)
        variances[i] = float(np.var(counts, ddof=1))
        means[i] = float(np.mean(counts))
        poisson[i] = n * _ball_mass(mu, center, r)
    return NumberVarianceCurve(radii=radii, variances=variances,
                               poisson=poisson, mean_counts=means)


# ---------------------------------------------------------------------------
# linear statistics


def linear_statistic_fluctuation(config, f, equilibrium):
    """sum_i f(x_i) - N int f dmu, the integral by grid quadrature."""
    x = _as_config(config)
    mu = _gridded(equilibrium)
    fx = float(np.sum(f.value(x)))
    integral = mu.quadrature(f.value(mu.grid.flat_centers())
                             .reshape(mu.grid.shape))
    return fx - x.shape[0] * integral


def _batch_stats(series, min_batches=30):
    """Batch means and per-batch variances over non-overlapping batches."""
    s = np.asarray(series, dtype=float)
    if s.size < 2 * min_batches:
        raise UsageError(
            "need at least %d samples for batch-means error bars"
            % (2 * min_batches))
    batches = max(min_batches, int(math.sqrt(s.size)))
    width = s.size // batches
    trimmed = s[:batches * width].reshape(batches, width)
    return trimmed.mean(axis=1), trimmed.var(axis=1, ddof=1)


@dataclass(frozen=True)
class CLTReport:
    """Measured against predicted law of a linear-statistic fluctuation."""

    n: int
    beta: float
    n_snapshots: int
    n_batches: int
    mean: float
    mean_error: float
    variance: float
    variance_error: float
    predicted_mean: float
    predicted_variance: float
    skewness: float
    excess_kurtosis: float
    ks_distance: float
    f_integral: float
    gradient_sq_integral: float

    def key_values(self):
        return [(name, getattr(self, name)) for name in (
            "n", "beta", "n_snapshots", "n_batches", "mean", "mean_error",
            "variance", "variance_error", "predicted_mean",
            "predicted_variance", "skewness", "excess_kurtosis",
            "ks_distance", "f_integral", "gradient_sq_integral")]

    def as_text(self):
        return "".join("%s = %.17g\n" % kv for kv in self.key_values())


def clt_harness(samples, f, equilibrium, beta=None):
    """Estimate the law of sum f(x_i) - N int f dmu across samples.

    Batch-means error bars (>= 30 batches); the predicted Gaussian has
    mean 0 and variance (1/(2 pi beta)) int |grad f|^2, valid for f
    supported inside the support of the equilibrium measure (checked) with
    quadratic confinement.
    """
    snaps = getattr(samples, "snapshots", None)
    if snaps is None:
        snaps = np.asarray(samples, dtype=float)
    if snaps.ndim != 3:
        raise UsageError("samples must provide an (S, N, d) snapshot stack")
    s_count, n, d = snaps.shape
    if d != 2 or f.d != 2:
        raise UsageError("the fluctuation prediction is planar (d = 2)")
    if beta is None:
        params = getattr(samples, "params", None)
        if params is None or params.beta_scaling != "fixed":
            raise UsageError("pass beta explicitly for scaled-temperature "
                             "or raw-array input")
        beta = params.beta
    beta = float(beta)
    if not beta > 0.0:
        raise UsageError("beta must be positive")

    # the prediction needs f supported strictly inside the support
    c = np.asarray(f.center)
    angles = np.linspace(0.0, 2.0 * math.pi, 64, endpoint=False)
    ring = c + f.support_radius * np.stack([np.cos(angles), np.sin(angles)],
                                           axis=1)
    probes = np.vstack([c[None, :], ring])
    if np.min(_density_at(equilibrium, probes)) <= 0.0:
        raise UsageError("test function must be supported inside the "
                         "equilibrium support")

    mu = _gridded(equilibrium)
    integral = mu.quadrature(f.value(mu.grid.flat_centers())
                             .reshape(mu.grid.shape))
    fluct = np.array([float(np.sum(f.value(snap))) for snap in snaps]) \
        - n * integral

    bmeans, bvars = _batch_stats(fluct)
    nb = bmeans.size
    mean = float(np.mean(fluct))
    mean_err = float(np.std(bmeans, ddof=1) / math.sqrt(nb))
    variance = float(np.var(fluct, ddof=1))
    var_err = float(np.std(bvars, ddof=1) / math.sqrt(nb))
    grad_sq = f.gradient_sq_integral()
    sd = math.sqrt(variance)
    ks = float(stats.kstest(fluct, "norm", args=(mean, sd)).statistic)
    return CLTReport(
        n=int(n), beta=beta, n_snapshots=int(s_count), n_batches=int(nb),
        mean=mean, mean_error=mean_err, variance=variance,
        variance_error=var_err, predicted_mean=0.0,
        predicted_variance=grad_sq / (2.0 * math.pi * beta),
        skewness=float(stats.skew(fluct)),
        excess_kurtosis=float(stats.kurtosis(fluct)),
        ks_distance=ks, f_integral=float(integral),
        gradient_sq_integral=float(grad_sq))


# ---------------------------------------------------------------------------
# pair correlation


def _window_covariance(r, window, d):
    """Volume of the intersection of the window ball with itself shifted
    by r (the set covariance), for the uncorrelated pair-count baseline."""
    r = np.asarray(r, dtype=float)
    if d == 1:
        return np.maximum(2.0 * window - r, 0.0)
    out = np.zeros_like(r)
    ok = r < 2.0 * window
    rr = r[ok]
    out[ok] = (2.0 * window ** 2 * np.arccos(rr / (2.0 * window))
               - 0.5 * rr * np.sqrt(4.0 * window ** 2 - rr ** 2))
    return out


@dataclass(frozen=True)
class PairCorrelation:
    """Radial pair-correlation estimate, normalized to 1 when uncorrelated.

    ``errors`` are empirical across samples (std of the per-sample estimate
    over sqrt(samples)); with a single sample they are NaN.  Bins whose
    uncorrelated baseline expects pairs but that received none are flagged
    in ``empty_bins`` (their variance estimate is unusable).
    """

    bin_edges: np.ndarray
    values: np.ndarray
    errors: np.ndarray
    counts: np.ndarray
    expected: np.ndarray
    empty_bins: np.ndarray

    def __post_init__(self):
        for name in ("bin_edges", "values", "errors", "counts", "expected"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        flags = np.asarray(self.empty_bins, dtype=bool)
        flags.setflags(write=False)
        object.__setattr__(self, "empty_bins", flags)

    @property
    def bin_centers(self):
        return 0.5 * (self.bin_edges[:-1] + self.bin_edges[1:])

    def csv_rows(self):
        header = ("r", "g", "sigma", "pairs", "expected_pairs", "empty")
        rows = np.stack([self.bin_centers, self.values, self.errors,
                         self.counts, self.expected,
                         self.empty_bins.astype(float)], axis=1)
        return header, rows


def pair_correlation(samples, equilibrium, bins, center=None, window=None):
    """Histogram estimate of the blown-up two-point function.

    ``samples`` is either a snapshot stack (macroscopic; each snapshot is
    blown up around ``center``) or a sequence of already-microscopic
    unit-density point sets within the window.  The uncorrelated baseline
    uses the exact set covariance of the window ball, so no edge correction
    is needed and a Poisson input gives a flat profile at 1.
    """
    snaps = getattr(samples, "snapshots", samples)
    micro = []
    if isinstance(snaps, np.ndarray) and snaps.ndim == 3:
        d = snaps.shape[2]
        if center is None:
            center = np.zeros(d)
        if window is None:
            rho = float(_density_at(equilibrium, np.atleast_2d(center))[0])
            scale = (snaps.shape[1] * rho) ** (1.0 / d)
            support = getattr(equilibrium, "radius",
                              getattr(equilibrium, "half_width", 1.0))
            window = 0.4 * scale * (support
                                    - np.linalg.norm(np.atleast_1d(center)))
        for snap in snaps:
            micro.append(blow_up(snap, center, equilibrium, window).points)
    else:
        if window is None:
            raise UsageError(
                "pass the window radius along with microscopic samples")
        for snap in snaps:
            micro.append(np.atleast_2d(np.asarray(snap, dtype=float)))
        if len(micro) == 0:
            raise UsageError("need at least one sample")
        d = micro[0].shape[1]
    window = float(window)

    if np.isscalar(bins):
        edges = np.linspace(0.0, window, int(bins) + 1)
    else:
        edges = np.asarray(bins, dtype=float)
    if edges.ndim != 1 or edges.size < 2 or np.any(np.diff(edges) <= 0):
        raise UsageError("bins must be a count or increasing edges")

    per_sample = np.zeros((len(micro), edges.size - 1))
    for j, pts in enumerate(micro):
        if pts.shape[0] >= 2:
            per_sample[j] = np.histogram(pdist(pts), bins=edges)[0]
    counts = per_sample.sum(axis=0)

    # unordered pair count of a unit-intensity uncorrelated process:
    # (1/2) int_bin surface(r) * covariance(r) dr per sample
    baseline = np.empty(edges.size - 1)
    for i in range(edges.size - 1):
        rs = np.linspace(edges[i], edges[i + 1], 65)
        surf = 2.0 * math.pi * rs if d == 2 else 2.0 * np.ones_like(rs)
        baseline[i] = 0.5 * np.trapezoid(
            surf * _window_covariance(rs, window, d), rs)
    expected = baseline * len(micro)

    with np.errstate(divide="ignore", invalid="ignore"):
        values = np.where(expected > 0, counts / expected, np.nan)
        g_per_sample = np.where(baseline > 0, per_sample / baseline, np.nan)
        if len(micro) >= 2:
            errors = (np.std(g_per_sample, axis=0, ddof=1)
                      / math.sqrt(len(micro)))
        else:
            errors = np.full(edges.size - 1, np.nan)
    empty = (expected <= 0) | ((expected > 0) & (counts == 0))
    return PairCorrelation(bin_edges=edges, values=values, errors=errors,
                           counts=counts, expected=expected,
                           empty_bins=empty)
