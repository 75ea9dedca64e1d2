"""One-dimensional histogram geometry in the 2-Wasserstein sense.

Measures are densities sampled on a grid inside a fixed interval [a, b].
Distances, barycenters and the tangent-space maps at a barycenter all go
through quantile functions: the distance is the L2 distance between quantiles,
the barycenter averages quantiles, and the log map composes a quantile with
the barycenter cdf. The exp map is a pushforward of the barycenter density.

The inner product on tangent vectors weights each grid node by its trapezoidal
probability mass under the reference density, so squared tangent norms
approximate integrals against the reference measure and the log map is an
isometry up to discretization error.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateMapError, ParameterError, ValidationError

DEFAULT_QUAD = 10_000

_MASS_TOL = 1e-9


def _readonly(a):
    a = np.ascontiguousarray(np.asarray(a, dtype=np.float64))
    a.flags.writeable = False
    return a


@dataclass
class Grid1D:
    """Strictly increasing sample points inside the working interval [lo, hi]."""

    points: np.ndarray
    lo: float = None
    hi: float = None

    def __post_init__(self):
        self.points = _readonly(self.points)
        if self.points.ndim != 1 or self.points.size < 2:
            raise ValidationError("grid needs at least 2 points in one axis")
        if not np.all(np.isfinite(self.points)):
            raise ValidationError("grid points must be finite")
        if np.any(np.diff(self.points) <= 0):
            raise ValidationError("grid points must be strictly increasing")
        self.lo = float(self.points[0] if self.lo is None else self.lo)
        self.hi = float(self.points[-1] if self.hi is None else self.hi)
        if self.lo > self.points[0] or self.hi < self.points[-1]:
            raise ValidationError("grid points must lie inside [lo, hi]")

    @classmethod
    def uniform(cls, lo, hi, n):
        if n < 2:
            raise ValidationError("grid needs at least 2 points")
        if not hi > lo:
            raise ValidationError("need hi > lo")
        return cls(np.linspace(lo, hi, n), lo, hi)

    @property
    def n(self):
        return self.points.size

    @property
    def spacings(self):
        return np.diff(self.points)

    @property
    def node_weights(self):
        """Trapezoidal quadrature weight of each node."""
        dx = self.spacings
        w = np.zeros(self.n)
        w[:-1] += 0.5 * dx
        w[1:] += 0.5 * dx
        return w

    def same_points(self, other):
        return self.n == other.n and np.array_equal(self.points, other.points)


@dataclass
class Measure1D:
    """Probability density sampled on a grid; trapezoidal integral is 1."""

    grid: Grid1D
    density: np.ndarray

    def __post_init__(self):
        self.density = _readonly(self.density)
        if self.density.shape != (self.grid.n,):
            raise ValidationError("density must have one value per grid point")
        if not np.all(np.isfinite(self.density)):
            raise ValidationError("density values must be finite")
        if np.any(self.density < 0):
            raise ValidationError("density values must be nonnegative")
        total = float(self.density @ self.grid.node_weights)
        if abs(total - 1.0) > _MASS_TOL:
            raise ValidationError(
                "density must integrate to 1 (trapezoid), got %.12g" % total)

    @classmethod
    def from_values(cls, grid, values):
        """Normalize nonnegative values into a probability density."""
        values = np.asarray(values, dtype=np.float64)
        total = float(values @ grid.node_weights)
        if not total > 0:
            raise ValidationError("cannot normalize: total mass is not positive")
        return cls(grid, values / total)

    @property
    def node_masses(self):
        """Per-node trapezoidal probability masses; they sum to 1."""
        return self.density * self.grid.node_weights

    def same_reference(self, other):
        return self.grid.same_points(other.grid) and np.array_equal(
            self.density, other.density)


@dataclass
class CdfQuantilePair:
    """Cdf sampled on the measure's grid, quantile on a uniform alpha grid."""

    grid: Grid1D
    cdf: np.ndarray
    quantile: np.ndarray

    @property
    def alphas(self):
        return np.linspace(0.0, 1.0, self.quantile.size)


@dataclass
class TangentVector:
    """Grid function attached to a reference measure (a tangent direction)."""

    reference: Measure1D
    values: np.ndarray

    def __post_init__(self):
        self.values = _readonly(self.values)
        if self.values.shape != (self.reference.grid.n,):
            raise ValidationError("tangent values must match the grid")
        if not np.all(np.isfinite(self.values)):
            raise ValidationError("tangent values must be finite")


def cdf_values(measure):
    """Cdf at the grid nodes: cumulative trapezoid, normalized to end at 1."""
    dx = measure.grid.spacings
    f = measure.density
    cells = 0.5 * (f[:-1] + f[1:]) * dx
    c = np.concatenate(([0.0], np.cumsum(cells)))
    return c / c[-1]


def quantile_values(measure, alphas):
    """Generalized inverse of the cdf at the given probability levels.

    Flat cdf stretches resolve to their left endpoint, so the result is the
    smallest grid location where the cdf reaches each level.
    """
    alphas = np.clip(np.asarray(alphas, dtype=np.float64), 0.0, 1.0)
    c = cdf_values(measure)
    x = measure.grid.points
    idx = np.searchsorted(c, alphas, side="left")
    idx = np.clip(idx, 0, x.size - 1)
    lo = np.maximum(idx - 1, 0)
    denom = c[idx] - c[lo]
    safe = denom > 0
    frac = np.where(safe, (alphas - c[lo]) / np.where(safe, denom, 1.0), 0.0)
    q = x[lo] + frac * (x[idx] - x[lo])
    return np.where(idx == 0, x[0], q)


def quantile(measure, quad=DEFAULT_QUAD):
    """Cdf/quantile pair of a measure, quantile on ``quad`` uniform levels."""
    if quad < 2:
        raise ParameterError("quantile needs at least 2 levels")
    alphas = np.linspace(0.0, 1.0, quad)
    return CdfQuantilePair(measure.grid, cdf_values(measure),
                           quantile_values(measure, alphas))


def wasserstein_distance(mu, nu, quad=DEFAULT_QUAD):
    """2-Wasserstein distance between two measures on the real line.

    Computed as the L2 distance between quantile functions on a uniform
    probability grid of size ``quad`` (trapezoidal quadrature). The two
    measures may live on different grids.
    """
    if quad < 2:
        raise ParameterError("distance quadrature needs at least 2 levels")
    alphas = np.linspace(0.0, 1.0, quad)
    dq = quantile_values(mu, alphas) - quantile_values(nu, alphas)
    d2 = np.trapezoid(dq * dq, alphas)
    return float(np.sqrt(max(d2, 0.0)))


def barycenter(dataset, output_grid, quad=DEFAULT_QUAD):
    """Wasserstein barycenter of equally weighted measures.

    Averages the quantile functions on a uniform probability grid, inverts
    the average back to a cdf on ``output_grid``, differentiates by central
    differences and renormalizes.
    """
    if len(dataset) == 0:
        raise ValidationError("barycenter of an empty dataset")
    alphas = np.linspace(0.0, 1.0, quad)
    qbar = np.zeros(quad)
    for nu in dataset:
        qbar += quantile_values(nu, alphas)
    qbar /= len(dataset)

    x = output_grid.points
    idx = np.searchsorted(qbar, x, side="right")
    c = np.empty(x.size)
    inner = (idx > 0) & (idx < quad)
    c[idx == 0] = 0.0
    c[idx == quad] = 1.0
    ii = idx[inner]
    denom = qbar[ii] - qbar[ii - 1]
    frac = np.where(denom > 0, (x[inner] - qbar[ii - 1]) / np.where(
        denom > 0, denom, 1.0), 0.0)
    c[inner] = alphas[ii - 1] + frac * (alphas[ii] - alphas[ii - 1])

    f = np.empty(x.size)
    f[1:-1] = (c[2:] - c[:-2]) / (x[2:] - x[:-2])
    f[0] = (c[1] - c[0]) / (x[1] - x[0])
    f[-1] = (c[-1] - c[-2]) / (x[-1] - x[-2])
    f = np.maximum(f, 0.0)
    return Measure1D.from_values(output_grid, f)


def log_map(reference, nu):
    """Tangent lift of ``nu`` at the reference measure.

    Values are the quantile of ``nu`` composed with the reference cdf minus
    the identity. Where the reference cdf is flat the composition is constant,
    so the lifted map stays nondecreasing.
    """
    levels = cdf_values(reference)
    omega = quantile_values(nu, levels) - reference.grid.points
    return TangentVector(reference, omega)


def inner(u, v):
    """Reference-weighted inner product of two tangent vectors."""
    if u.reference is not v.reference and not u.reference.same_reference(
            v.reference):
        raise ValidationError("tangent vectors have different references")
    return float(np.sum(u.reference.node_masses * u.values * v.values))


def norm(u):
    """Reference-weighted norm of a tangent vector."""
    return float(np.sqrt(max(inner(u, u), 0.0)))


def weighted_inner(weights, a, b):
    """Inner product of raw grid functions under fixed node masses."""
    return float(np.sum(weights * a * b))


def map_is_feasible(grid, values, tol=1e-9):
    """Whether id + values is nondecreasing and maps the grid into [lo, hi]."""
    t = grid.points + values
    return (np.all(np.diff(t) >= -tol)
            and t.min() >= grid.lo - tol and t.max() <= grid.hi + tol)


def pushforward_density(rho, transport, grid_size=None):
    """Density of the image of ``rho`` under the map ``transport``.

    ``transport`` holds the map's values on the grid of ``rho``; the map is
    interpolated linearly between nodes. On every cell where the map is
    monotone the image density is density/|slope| summed over preimage
    branches; cells whose slope is below 1e-8 of the grid spacing are treated
    as flat and deposit their whole mass at their image point, which keeps
    peaks finite and the total mass exact. The output grid spans the image of
    the map and is extended beyond [lo, hi] whenever the image leaves it.
    """
    t = np.asarray(transport, dtype=np.float64)
    x = rho.grid.points
    if t.shape != x.shape:
        raise ValidationError("transport map must have one value per grid point")
    if not np.all(np.isfinite(t)):
        raise ValidationError("transport map values must be finite")
    dx = rho.grid.spacings
    span_x = x[-1] - x[0]
    y_min = float(t.min())
    y_max = float(t.max())
    if y_max - y_min <= 1e-12 * span_x:
        raise DegenerateMapError("transport map is constant on the grid")

    slope_scale = max(1.0, (y_max - y_min) / span_x)
    flat = np.abs(np.diff(t)) <= 1e-8 * dx * slope_scale

    size = max(int(grid_size) if grid_size else x.size, 2)
    base = np.linspace(y_min, y_max, size)
    nodes = np.sort(np.concatenate([base, t]))
    merge_tol = 1e-12 * (y_max - y_min)
    keep = np.concatenate(([True], np.diff(nodes) > merge_tol))
    nodes = nodes[keep]
    if nodes.size < 2:
        raise DegenerateMapError("transport map image collapses to a point")
    out_grid = Grid1D(nodes, min(rho.grid.lo, nodes[0]),
                      max(rho.grid.hi, nodes[-1]))

    f = rho.density
    cell_mass = 0.5 * (f[:-1] + f[1:]) * dx
    node_mass = np.zeros(nodes.size)
    for j in range(x.size - 1):
        if flat[j]:
            k = int(np.searchsorted(nodes, 0.5 * (t[j] + t[j + 1])))
            k = min(max(k, 0), nodes.size - 1)
            node_mass[k] += cell_mass[j]
            continue
        slope = (t[j + 1] - t[j]) / dx[j]
        y0 = min(t[j], t[j + 1])
        y1 = max(t[j], t[j + 1])
        klo = np.searchsorted(nodes, y0 - merge_tol, side="left")
        khi = np.searchsorted(nodes, y1 + merge_tol, side="right")
        sub = np.clip(nodes[klo:khi], y0, y1)
        if sub.size < 2:
            node_mass[min(klo, nodes.size - 1)] += cell_mass[j]
            continue
        xs = x[j] + (sub - t[j]) / slope
        xs = np.clip(xs, x[j], x[j + 1])
        dens = (f[j] + (xs - x[j]) * (f[j + 1] - f[j]) / dx[j]) / abs(slope)
        seg = np.diff(sub)
        # exact hat-basis split of each linear piece's mass
        node_mass[klo:khi - 1] += seg * (2.0 * dens[:-1] + dens[1:]) / 6.0
        node_mass[klo + 1:khi] += seg * (dens[:-1] + 2.0 * dens[1:]) / 6.0

    out_density = node_mass / out_grid.node_weights
    return Measure1D(out_grid, out_density)


def exp_map(reference, tangent, grid_size=None):
    """Pushforward of the reference measure by id + tangent.

    Accepts a TangentVector at the reference or a plain value array. When the
    tangent leaves the feasible cone the image may be non-monotone or exit
    [lo, hi]; the pushforward handles both (branch summation, grid extension).
    """
    if isinstance(tangent, TangentVector):
        if tangent.reference is not reference and not tangent.reference.same_reference(reference):
            raise ValidationError("tangent is attached to a different reference")
        values = tangent.values
    else:
        values = np.asarray(tangent, dtype=np.float64)
        if values.shape != (reference.grid.n,):
            raise ValidationError("tangent values must match the grid")
    return pushforward_density(reference, reference.grid.points + values,
                               grid_size=grid_size)


def log_maps_matrix(reference, dataset):
    """Stack the log maps of a dataset into an (n, grid) matrix."""
    return np.stack([log_map(reference, nu).values for nu in dataset])
