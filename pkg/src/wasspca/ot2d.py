"""Geodesic analysis of measures on planar grids.

Measures live on regular rectangular lattices and distances are exact
squared-Euclidean optimal transport, solved at desk scale by a
transportation simplex. The module provides entropic barycenters through
iterative Bregman projections, a Forward-Backward fitter for one principal
geodesic driven by plan-based gradients, a barycentric-projection PCA
baseline, and curve reconstruction errors for comparing the two.

The feasible cone for a direction field relaxes the monotone-map condition
of dimension one to a divergence band: a field v is admissible when the
discrete divergence of v stays within [-1/(1+t0), 1/(1-t0)] and both
endpoint displacements id + (t0 +- 1) v remain inside the rectangle
coordinate by coordinate. The divergence operator pairs backward
differences with a forward-difference adjoint and zero boundary ghosts.
"""

from dataclasses import dataclass, field

import numpy as np

from ._kernels import pd_prox_2d, solve_transport
from .errors import (ConvergenceError, ParameterError, ProxConvergenceError,
                     SizeCapError, UnderflowError, ValidationError)

_MASS_TOL = 1e-9
_MARGINAL_TOL = 1e-9
_SUPPORT_CAP = 400
_DESCENT_SLACK = 1e-9
_MIN_OUTER = 10
_MAX_BACKTRACKS = 12
_PLATEAU_TOL = 1e-7
_PLATEAU_WINDOW = 5
_POLISH_CYCLES = 3
_PROJECTION_TAU = 1e9
_EIG_FLOOR = 1e-12


def _readonly(a):
    out = np.ascontiguousarray(np.asarray(a, dtype=np.float64))
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class Grid2D:
    """Regular lattice on a rectangle, uniform spacing along each axis."""

    xs: np.ndarray
    ys: np.ndarray

    def __post_init__(self):
        xs = _readonly(self.xs)
        ys = _readonly(self.ys)
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "ys", ys)
        for name, axis in (("xs", xs), ("ys", ys)):
            if axis.ndim != 1 or axis.size < 2:
                raise ValidationError(f"{name} must hold at least 2 points")
            steps = np.diff(axis)
            if not np.all(steps > 0):
                raise ValidationError(f"{name} must increase strictly")
            if not np.allclose(steps, steps[0], rtol=1e-9, atol=0):
                raise ValidationError(f"{name} must be uniformly spaced")

    @classmethod
    def uniform(cls, x_bounds, y_bounds, shape):
        m, n = shape
        return cls(np.linspace(x_bounds[0], x_bounds[1], m),
                   np.linspace(y_bounds[0], y_bounds[1], n))

    @property
    def shape(self):
        return self.xs.size, self.ys.size

    @property
    def n_points(self):
        return self.xs.size * self.ys.size

    @property
    def hx(self):
        return float(self.xs[1] - self.xs[0])

    @property
    def hy(self):
        return float(self.ys[1] - self.ys[0])

    @property
    def points(self):
        """Support locations, row-major: point i * len(ys) + j is (xs[i], ys[j])."""
        gx, gy = np.meshgrid(self.xs, self.ys, indexing="ij")
        return np.stack([gx.ravel(), gy.ravel()], axis=1)

    def same_points(self, other):
        return (self.shape == other.shape
                and np.array_equal(self.xs, other.xs)
                and np.array_equal(self.ys, other.ys))


@dataclass(frozen=True)
class Measure2D:
    """Probability weights on a lattice; total mass 1, nothing negative."""

    grid: Grid2D
    weights: np.ndarray

    def __post_init__(self):
        w = _readonly(self.weights)
        object.__setattr__(self, "weights", w)
        if w.shape != self.grid.shape:
            raise ValidationError("weights do not match the grid shape")
        if np.any(w < 0):
            raise ValidationError("weights must be nonnegative")
        if abs(float(w.sum()) - 1.0) > _MASS_TOL:
            raise ValidationError("weights must sum to 1")

    @classmethod
    def normalized(cls, grid, values):
        values = np.asarray(values, dtype=np.float64)
        total = float(values.sum())
        if total <= 0:
            raise ValidationError("cannot normalize nonpositive total mass")
        return cls(grid, values / total)

    @property
    def flat_weights(self):
        return self.weights.ravel()


@dataclass(frozen=True)
class VelocityField2D:
    """Displacement vectors on a lattice, one (vx, vy) pair per node."""

    grid: Grid2D
    vx: np.ndarray
    vy: np.ndarray

    def __post_init__(self):
        vx = _readonly(self.vx)
        vy = _readonly(self.vy)
        object.__setattr__(self, "vx", vx)
        object.__setattr__(self, "vy", vy)
        if vx.shape != self.grid.shape or vy.shape != self.grid.shape:
            raise ValidationError("field components do not match the grid")
        if not (np.all(np.isfinite(vx)) and np.all(np.isfinite(vy))):
            raise ValidationError("field components must be finite")

    @classmethod
    def from_points(cls, grid, vectors):
        vectors = np.asarray(vectors, dtype=np.float64)
        m, n = grid.shape
        return cls(grid, vectors[:, 0].reshape(m, n),
                   vectors[:, 1].reshape(m, n))

    @classmethod
    def zero(cls, grid):
        m, n = grid.shape
        return cls(grid, np.zeros((m, n)), np.zeros((m, n)))

    def as_points(self):
        return np.stack([self.vx.ravel(), self.vy.ravel()], axis=1)

    def scaled(self, factor):
        return VelocityField2D(self.grid, self.vx * factor, self.vy * factor)


@dataclass(frozen=True)
class TransportPlan:
    """Coupling matrix whose marginals reproduce the endpoint weights."""

    matrix: np.ndarray
    source_weights: np.ndarray
    target_weights: np.ndarray

    def __post_init__(self):
        mat = _readonly(self.matrix)
        src = _readonly(self.source_weights)
        tgt = _readonly(self.target_weights)
        object.__setattr__(self, "matrix", mat)
        object.__setattr__(self, "source_weights", src)
        object.__setattr__(self, "target_weights", tgt)
        if mat.shape != (src.size, tgt.size):
            raise ValidationError("plan shape does not match the marginals")
        if np.any(mat < 0):
            raise ValidationError("plan entries must be nonnegative")
        if (np.max(np.abs(mat.sum(axis=1) - src)) > _MARGINAL_TOL
                or np.max(np.abs(mat.sum(axis=0) - tgt)) > _MARGINAL_TOL):
            raise ValidationError("plan marginals do not match the weights")


def divergence2d(vfield):
    """Discrete divergence: backward differences, zero ghosts outside."""
    vx, vy = vfield.vx, vfield.vy
    inv_hx = 1.0 / vfield.grid.hx
    inv_hy = 1.0 / vfield.grid.hy
    div = np.zeros(vfield.grid.shape)
    div[0, :] += vx[0, :] * inv_hx
    div[1:-1, :] += (vx[1:-1, :] - vx[:-2, :]) * inv_hx
    div[-1, :] += -vx[-2, :] * inv_hx
    div[:, 0] += vy[:, 0] * inv_hy
    div[:, 1:-1] += (vy[:, 1:-1] - vy[:, :-2]) * inv_hy
    div[:, -1] += -vy[:, -2] * inv_hy
    return div


def feasible_boxes_2d(grid, t0):
    """Per-node bounds keeping both endpoint displacements in the rectangle.

    Returns (blox, bhix, bloy, bhiy), each of the grid shape. Along each
    coordinate the bound is the one-dimensional rule max((a-x)/(t0+1),
    (b-x)/(t0-1)) <= v <= min((a-x)/(t0-1), (b-x)/(t0+1)).
    """
    if not -1 < t0 < 1:
        raise ParameterError("t0 must lie strictly inside (-1, 1)")
    m, n = grid.shape

    def bounds(axis):
        a, b = float(axis[0]), float(axis[-1])
        lo = np.maximum((a - axis) / (t0 + 1), (b - axis) / (t0 - 1))
        hi = np.minimum((a - axis) / (t0 - 1), (b - axis) / (t0 + 1))
        return lo, hi

    xlo, xhi = bounds(grid.xs)
    ylo, yhi = bounds(grid.ys)
    blox = np.ascontiguousarray(np.broadcast_to(xlo[:, None], (m, n)))
    bhix = np.ascontiguousarray(np.broadcast_to(xhi[:, None], (m, n)))
    bloy = np.ascontiguousarray(np.broadcast_to(ylo[None, :], (m, n)))
    bhiy = np.ascontiguousarray(np.broadcast_to(yhi[None, :], (m, n)))
    return blox, bhix, bloy, bhiy


def div_bounds(t0):
    return -1.0 / (1.0 + t0), 1.0 / (1.0 - t0)


def _pairwise_sq_dists(pa, pb):
    diff = pa[:, None, :] - pb[None, :, :]
    return np.sum(diff * diff, axis=2)


def _atomic_plan(points_a, wa, points_b, wb, max_pivots=None):
    """Exact plan between weighted atom lists; zero atoms carry zero rows."""
    wa = np.asarray(wa, dtype=np.float64)
    wb = np.asarray(wb, dtype=np.float64)
    ia = np.flatnonzero(wa > 0)
    ib = np.flatnonzero(wb > 0)
    sa = wa[ia].copy()
    sb = wb[ib].copy()
    sb *= sa.sum() / sb.sum()
    cost = _pairwise_sq_dists(points_a[ia], points_b[ib])
    if max_pivots is None:
        max_pivots = max(4000, 60 * (ia.size + ib.size))
    plan_act, status, pivots = solve_transport(cost, sa, sb, max_pivots)
    if status != 0:
        raise ConvergenceError(
            f"transport simplex hit the pivot cap ({pivots} pivots)")
    full = np.zeros((wa.size, wb.size))
    full[np.ix_(ia, ib)] = plan_act
    return full, float(np.sum(plan_act * cost))


def ot_plan_exact(mu, nu, max_points=_SUPPORT_CAP):
    """Optimal coupling and squared distance between two lattice measures.

    Exact transportation-simplex solve; intended for supports up to a few
    hundred atoms. Larger inputs are refused so callers fall back to the
    entropic path (barycenter2d_entropic for means, or coarser grids).
    """
    wa = mu.flat_weights
    wb = nu.flat_weights
    na = int(np.count_nonzero(wa))
    nb = int(np.count_nonzero(wb))
    if na > max_points or nb > max_points:
        raise SizeCapError(
            f"support sizes {na} and {nb} exceed the exact-solver cap "
            f"{max_points}; use the entropic path for grids this large")
    matrix, cost = _atomic_plan(mu.grid.points, wa, nu.grid.points, wb)
    return TransportPlan(matrix, wa, wb), cost


def wasserstein_distance_2d(mu, nu, max_points=_SUPPORT_CAP):
    _, cost = ot_plan_exact(mu, nu, max_points)
    return float(np.sqrt(max(cost, 0.0)))


def _lse_dot(lkern, a):
    # out[i, j] = log sum_k exp(lkern[i, k] + a[k, j]); columns of a that are
    # all -inf stay -inf
    amax = np.max(a, axis=0)
    safe = np.where(np.isfinite(amax), amax, 0.0)
    kmax = np.max(lkern, axis=1)
    s = np.exp(lkern - kmax[:, None]) @ np.exp(a - safe[None, :])
    with np.errstate(divide="ignore"):
        return np.log(s) + kmax[:, None] + safe[None, :]


def _kernel_apply(lx, ly, a):
    # separable Gibbs kernel, applied along x then y in log space
    return _lse_dot(lx, _lse_dot(ly, a.T).T)


def barycenter2d_entropic(dataset, grid, epsilon, max_iter=500, tol=1e-6):
    """Entropy-regularized barycenter by iterative Bregman projections.

    All measures must share ``grid``. Scalings run in the log domain, so
    small epsilon values stay finite far longer than direct scaling would;
    if the kernel still degenerates the error asks for a larger epsilon.
    Stops once every data-side marginal matches within ``tol`` in total
    variation, or after ``max_iter`` sweeps.
    """
    if epsilon <= 0:
        raise ParameterError("epsilon must be positive")
    if not dataset:
        raise ParameterError("dataset must be nonempty")
    for nu in dataset:
        if not nu.grid.same_points(grid):
            raise ValidationError("all measures must live on the target grid")

    lx = -((grid.xs[:, None] - grid.xs[None, :]) ** 2) / epsilon
    ly = -((grid.ys[:, None] - grid.ys[None, :]) ** 2) / epsilon
    n = len(dataset)
    with np.errstate(divide="ignore"):
        logb = [np.log(nu.weights) for nu in dataset]
    lu = [np.zeros(grid.shape) for _ in range(n)]
    logp = np.full(grid.shape, -np.log(grid.n_points))

    for _ in range(max_iter):
        lkv = []
        for i in range(n):
            lv = logb[i] - _kernel_apply(lx, ly, lu[i])
            lkv.append(_kernel_apply(lx, ly, lv))
        stack = np.stack([lu[i] + lkv[i] for i in range(n)])
        logp = np.mean(stack, axis=0)
        if np.any(np.isnan(logp)) or not np.any(np.isfinite(logp)):
            raise UnderflowError(
                "entropic kernel degenerated in the log domain; "
                "increase epsilon")
        residual = 0.0
        for i in range(n):
            lu[i] = logp - lkv[i]
            lv = logb[i] - _kernel_apply(lx, ly, lu[i])
            marg = np.exp(lv + _kernel_apply(lx, ly, lu[i]))
            residual = max(residual,
                           float(np.sum(np.abs(marg - dataset[i].weights))))
        if residual <= tol:
            break

    p = np.exp(logp - np.max(logp))
    return Measure2D(grid, p / p.sum())


def _plan_matrix(plan):
    return plan.matrix if isinstance(plan, TransportPlan) else np.asarray(plan)


def grad_F_2d(vfield, times, t0, reference, dataset, plans):
    """Plan-based gradients of the summed squared distances to a geodesic.

    ``plans[i]`` must couple the geodesic sample at times[i] (source, the
    reference weights moved by (t0 + times[i]) v) with dataset[i]. Plans are
    held fixed, so the result is the envelope gradient: valid at the iterate
    the plans were computed for. Nodes with zero reference weight carry zero
    plan rows and contribute nothing.

    Returns (gvx, gvy, gt): field-shaped arrays and one value per datum.
    """
    grid = vfield.grid
    X = grid.points
    V = vfield.as_points()
    f = reference.flat_weights
    gv = np.zeros_like(V)
    gt = np.zeros(len(dataset))
    for i, nu in enumerate(dataset):
        s = t0 + float(times[i])
        Z = X + s * V
        PY = _plan_matrix(plans[i]) @ nu.grid.points
        resid = f[:, None] * Z - PY
        gv += 2.0 * s * resid
        gt[i] = 2.0 * float(np.sum(V * resid))
    m, n = grid.shape
    return gv[:, 0].reshape(m, n), gv[:, 1].reshape(m, n), gt


def _run_prox_2d(vtx, vty, grid, t0, tau, eta, max_inner, z0):
    blox, bhix, bloy, bhiy = feasible_boxes_2d(grid, t0)
    slo, shi = div_bounds(t0)
    norm_sq = 4.0 / grid.hx ** 2 + 4.0 / grid.hy ** 2
    sigma = 2.0 / norm_sq
    theta = tau / (1.0 + 2.0 * tau)
    if z0 is None:
        z0 = np.zeros(grid.shape)
    return pd_prox_2d(np.ascontiguousarray(vtx), np.ascontiguousarray(vty),
                      blox, bhix, bloy, bhiy, 1.0 / grid.hx, 1.0 / grid.hy,
                      slo, shi, tau, sigma, theta, eta, max_inner, z0)


def prox_v_2d(vfield, t0, tau, eta=1e-10, max_inner=20000):
    """Proximal point of the feasibility constraints at a field.

    Solves min 1/(2 tau) |v - vfield|^2 over the divergence band and the
    per-coordinate boxes by a primal-dual loop with a dual variable on the
    divergence. Raises ProxConvergenceError carrying the last iterate when
    the cap is hit before the tolerance.
    """
    vx, vy, _, _, rel = _run_prox_2d(vfield.vx, vfield.vy, vfield.grid,
                                     t0, tau, eta, max_inner, None)
    out = VelocityField2D(vfield.grid, vx, vy)
    if rel > eta:
        raise ProxConvergenceError(
            f"field prox did not reach tolerance ({rel:.2e} > {eta:.2e} "
            f"after {max_inner} iterations)",
            last_iterate=out, residual=rel)
    return out


@dataclass
class Fb2dConfig:
    """Forward-Backward settings for the planar fitter."""

    eta: float = 1e-5
    max_outer: int = 200
    max_inner: int = 20000
    step_factor: float = 0.9

    def __post_init__(self):
        if not self.eta > 0:
            raise ParameterError("eta must be positive")
        if not 0 < self.step_factor < 1:
            raise ParameterError("step_factor must lie in (0, 1)")
        if self.max_outer < 1 or self.max_inner < 1:
            raise ParameterError("iteration caps must be at least 1")


@dataclass
class GeodesicComponent2D:
    """Fitted planar geodesic and its diagnostics.

    objective is the mean squared distance from the data to the geodesic at
    the final positions; trace records it after every outer iteration with
    plans recomputed exactly, so it is nonincreasing up to solver slack.
    """

    vfield: VelocityField2D
    t0: float
    times: np.ndarray
    objective: float
    trace: np.ndarray = field(default=None, repr=False)
    converged: bool = True
    stop_reason: str = "tolerance"
    feasibility: dict = field(default=None, repr=False)


@dataclass
class LogPca2dModel:
    """First principal direction of barycentric-projection lifted maps."""

    reference: Measure2D
    direction: VelocityField2D
    eigenvalue: float
    scores: np.ndarray

    def curve_field(self, factor=1.25):
        """Direction scaled to sweep the dataset range, for curve sampling."""
        return self.direction.scaled(factor * np.sqrt(max(self.eigenvalue,
                                                          0.0)))


def _barycentric_logs(reference, dataset):
    """Lifted maps via barycentric projection of exact plans, (n, P, 2)."""
    X = reference.grid.points
    f = reference.flat_weights
    omegas = np.zeros((len(dataset), X.shape[0], 2))
    pos = f > 0
    for i, nu in enumerate(dataset):
        plan, _ = ot_plan_exact(reference, nu)
        PY = plan.matrix @ nu.grid.points
        omegas[i][pos] = PY[pos] / f[pos, None] - X[pos]
    return omegas


def _field_inner(f, a, b):
    return float(np.sum(f[:, None] * a * b))


def _principal_direction(omegas, f, priors):
    """Top eigenpair of the lifted maps after removing the prior span.

    priors holds unit fields as (k, P, 2) rows, orthonormal in the weighted
    inner product. Returns (direction (P, 2) unit or zero, eigenvalue
    normalized by the number of maps, scores).
    """
    work = omegas.copy()
    for q in priors:
        coef = np.einsum("p,npc,pc->n", f, work, q)
        work -= coef[:, None, None] * q[None, :, :]
    gram = np.einsum("npc,p,mpc->nm", work, f, work)
    evals, evecs = np.linalg.eigh(gram)
    top = int(np.argmax(evals))
    gamma = float(max(evals[top], 0.0))
    n = omegas.shape[0]
    if gamma <= _EIG_FLOOR * max(float(np.max(np.abs(gram))), 1.0):
        return np.zeros(omegas.shape[1:]), 0.0, np.zeros(n)
    u = np.einsum("n,npc->pc", evecs[:, top], work) / np.sqrt(gamma)
    scores = np.einsum("p,npc,pc->n", f, omegas, u)
    i_star = int(np.argmax(np.abs(scores)))
    if scores[i_star] < 0:
        u = -u
        scores = -scores
    return u, gamma / n, scores


def fit_log_pca_2d(dataset, reference):
    """Barycentric-projection PCA baseline, first component only."""
    if len(dataset) < 2:
        raise ParameterError("need at least 2 measures for PCA")
    omegas = _barycentric_logs(reference, dataset)
    f = reference.flat_weights
    u, eigenvalue, scores = _principal_direction(omegas, f, ())
    return LogPca2dModel(reference,
                         VelocityField2D.from_points(reference.grid, u),
                         eigenvalue, scores)


def _evaluate_plans(X, f, V, times, t0, dataset):
    """Fresh exact plans and total squared distance at one iterate."""
    plans = []
    total = 0.0
    for i, nu in enumerate(dataset):
        Z = X + (t0 + float(times[i])) * V
        matrix, cost = _atomic_plan(Z, f, nu.grid.points, nu.flat_weights)
        plans.append(matrix)
        total += cost
    return plans, total


def _exact_times(plans, targets, X, f, V, t0):
    """Per-datum position minimizing the fixed-plan quadratic, clamped."""
    vnorm = float(np.sum(f[:, None] * V * V))
    n = len(plans)
    if vnorm <= 0:
        return np.zeros(n)
    base = float(np.sum(f[:, None] * X * V))
    times = np.empty(n)
    for i in range(n):
        py = plans[i] @ targets[i]
        times[i] = (float(np.sum(py * V)) - base) / vnorm - t0
    return np.clip(times, -1.0, 1.0)


def _orthonormal_priors(priors, f):
    """Rows (k, P, 2), orthonormalized in the weighted inner product."""
    rows = []
    for prior in priors:
        q = prior.as_points().copy()
        for r in rows:
            q -= _field_inner(f, q, r) * r
        norm = np.sqrt(_field_inner(f, q, q))
        if norm > 0:
            rows.append(q / norm)
    return rows


def _apply_orth(V, prior_rows, f):
    out = V.copy()
    for q in prior_rows:
        out -= _field_inner(f, out, q) * q
    return out


def _feasibility_report(vfield, t0, prior_rows, f):
    div = divergence2d(vfield)
    slo, shi = div_bounds(t0)
    blox, bhix, bloy, bhiy = feasible_boxes_2d(vfield.grid, t0)
    box = max(float(np.max(np.maximum(blox - vfield.vx, vfield.vx - bhix))),
              float(np.max(np.maximum(bloy - vfield.vy, vfield.vy - bhiy))))
    V = vfield.as_points()
    vnorm = np.sqrt(_field_inner(f, V, V))
    orth = 0.0
    for q in prior_rows:
        orth = max(orth, abs(_field_inner(f, V, q)) / max(vnorm, 1e-30))
    return {"div_low": float(np.max(slo - div)),
            "div_high": float(np.max(div - shi)),
            "box": max(box, 0.0),
            "orthogonality": orth}


def _initial_field(omegas, f, prior_rows, grid, t0):
    """Principal lifted direction, scaled to cover the scores, made feasible."""
    u, eigenvalue, scores = _principal_direction(omegas, f,
                                                 np.asarray(prior_rows))
    if eigenvalue <= 0:
        return VelocityField2D.zero(grid), np.zeros(omegas.shape[0])
    target = float(np.max(np.abs(scores)))
    # scale never exceeds half the rectangle, otherwise the boxes saturate
    peak = max(float(np.max(np.abs(u[:, 0]))), 1e-30)
    cap_x = 0.5 * float(grid.xs[-1] - grid.xs[0]) / peak
    peak = max(float(np.max(np.abs(u[:, 1]))), 1e-30)
    cap_y = 0.5 * float(grid.ys[-1] - grid.ys[0]) / peak
    scale = max(min(target, cap_x, cap_y), 1e-30)
    v0 = VelocityField2D.from_points(grid, u * scale)
    vx, vy, _, _, _ = _run_prox_2d(v0.vx, v0.vy, grid, t0,
                                   _PROJECTION_TAU, 1e-10, 20000, None)
    times = np.clip(scores / scale, -1.0, 1.0)
    return VelocityField2D(grid, vx, vy), times


def fit_component_2d(dataset, reference, t0=0.0, config=None, priors=(),
                     init_field=None):
    """One principal geodesic on the plane by proximal Forward-Backward.

    Each outer iteration recomputes exact transport plans, minimizes the
    fixed-plan quadratic over the positions, then takes one guarded
    prox-gradient step on the field. Fixed plans majorize the true
    objective, so the recorded trace is nonincreasing; a backtracking guard
    covers prox inexactness. Because plans are supported on a lattice the
    objective bottoms out at a quantization floor; once the per-iteration
    decrease stays below that floor for a few iterations in a row the fit
    stops with reason "objective". ``priors`` holds previously fitted
    fields the new one is kept orthogonal to (enforced by alternating
    projection, so the returned residuals in ``feasibility`` report what
    remains).
    """
    if config is None:
        config = Fb2dConfig()
    if not -1 < t0 < 1:
        raise ParameterError("t0 must lie strictly inside (-1, 1)")
    grid = reference.grid
    for nu in dataset:
        if nu.grid.n_points > _SUPPORT_CAP or grid.n_points > _SUPPORT_CAP:
            raise SizeCapError(
                "grids beyond the exact-solver cap are not supported")
    X = grid.points
    f = reference.flat_weights
    targets = [nu.grid.points for nu in dataset]
    n = len(dataset)
    prior_rows = _orthonormal_priors(priors, f)

    if init_field is None:
        omegas = _barycentric_logs(reference, dataset)
        vfield, times = _initial_field(omegas, f, prior_rows, grid, t0)
    else:
        vfield, times = init_field, np.zeros(n)
    V = vfield.as_points()
    if prior_rows:
        V = _apply_orth(V, prior_rows, f)

    plans, total = _evaluate_plans(X, f, V, times, t0, dataset)
    trace = [total / n]
    converged = False
    reason = "max_outer"
    mult = 1.0
    z_warm = None
    rel = np.inf
    plateau = 0
    vf = VelocityField2D.from_points(grid, V)

    for outer in range(1, config.max_outer + 1):
        times_new = _exact_times(plans, targets, X, f, V, t0)
        gvx, gvy, _ = grad_F_2d(vf, times_new, t0, reference, dataset, plans)
        curvature = 2.0 * float(np.max(f)) * float(
            np.sum((t0 + times_new) ** 2))
        tau = config.step_factor * mult / max(curvature, 1e-30)

        accepted = False
        for _ in range(_MAX_BACKTRACKS):
            vx, vy, z_new, _, _ = _run_prox_2d(
                vf.vx - tau * gvx, vf.vy - tau * gvy, grid, t0,
                tau, 1e-10, config.max_inner, z_warm)
            V_new = np.stack([vx.ravel(), vy.ravel()], axis=1)
            if prior_rows:
                V_new = _apply_orth(V_new, prior_rows, f)
            plans_new, total_new = _evaluate_plans(X, f, V_new, times_new,
                                                   t0, dataset)
            if total_new <= total + _DESCENT_SLACK * max(1.0, abs(total)):
                accepted = True
                break
            tau *= 0.5
            mult *= 0.5
        if not accepted:
            converged = False
            reason = "stalled"
            break

        diff = V_new - V
        rel = np.sqrt(float(np.sum(f[:, None] * diff * diff)))
        rel /= max(np.sqrt(float(np.sum(f[:, None] * V * V))), 1e-30)
        drop = total - total_new
        V, times, plans, total = V_new, times_new, plans_new, total_new
        vf = VelocityField2D.from_points(grid, V_new)
        z_warm = z_new
        trace.append(total / n)
        mult = min(mult * 1.1, 1.0)
        if outer >= _MIN_OUTER:
            if rel <= config.eta:
                converged = True
                reason = "tolerance"
                break
            plateau = plateau + 1 if drop <= _PLATEAU_TOL * max(
                1.0, abs(total)) else 0
            if plateau >= _PLATEAU_WINDOW:
                converged = True
                reason = "objective"
                break

    if prior_rows:
        # alternating projection: constraint prox and prior removal do not
        # commute, the report carries whatever residual survives
        for _ in range(_POLISH_CYCLES):
            V = _apply_orth(V, prior_rows, f)
            vf0 = VelocityField2D.from_points(grid, V)
            vx, vy, _, _, _ = _run_prox_2d(vf0.vx, vf0.vy, grid, t0,
                                           _PROJECTION_TAU, 1e-10,
                                           config.max_inner, None)
            V = np.stack([vx.ravel(), vy.ravel()], axis=1)
        vf = VelocityField2D(grid, vx, vy)
        plans, total = _evaluate_plans(X, f, V, times, t0, dataset)
    times = _exact_times(plans, targets, X, f, V, t0)
    plans, total = _evaluate_plans(X, f, V, times, t0, dataset)
    trace.append(total / n)

    return GeodesicComponent2D(
        vf, float(t0), times, total / n, trace=np.asarray(trace),
        converged=converged, stop_reason=reason,
        feasibility=_feasibility_report(vf, t0, prior_rows, f))


def reconstruction_error_2d(component, reference, dataset, samples=11):
    """Mean over data of the smallest sampled squared distance to a curve.

    ``component`` is a fitted GeodesicComponent2D or a bare field (then the
    midpoint is 0, as for baseline curves prepared by curve_field). The
    curve pushes the reference weights along (t0 + t) v for ``samples``
    evenly spaced t in [-1, 1]; use an odd count so t = 0 is included.
    """
    if samples < 3:
        raise ParameterError("need at least 3 sample positions")
    if isinstance(component, GeodesicComponent2D):
        vfield, t0 = component.vfield, component.t0
    else:
        vfield, t0 = component, 0.0
    X = reference.grid.points
    f = reference.flat_weights
    V = vfield.as_points()
    targets = [nu.grid.points for nu in dataset]
    weights = [nu.flat_weights for nu in dataset]
    best = np.full(len(dataset), np.inf)
    for t in np.linspace(-1.0, 1.0, samples):
        Z = X + (t0 + t) * V
        for i in range(len(dataset)):
            _, cost = _atomic_plan(Z, f, targets[i], weights[i])
            best[i] = min(best[i], cost)
    return float(np.mean(best))
