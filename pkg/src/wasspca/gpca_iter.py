"""Iterative geodesic PCA of histograms by proximal Forward-Backward descent.

Each component is a geodesic through the barycenter: a direction v with a
midpoint offset t0 such that both endpoint maps id + (t0 - 1)v and
id + (t0 + 1)v are nondecreasing with range inside the working interval.
The component minimizes the mean squared tangent distance from the lifted
data to the geodesic segment, with per-datum positions t_i in [-1, 1].

The smooth part (the fit term) takes a gradient step in (v, t) jointly; the
nonsmooth part (feasibility of both endpoints, orthogonality to previously
found directions, the position box) is handled by a proximal step. The
direction prox has no closed form and is evaluated by an inner primal-dual
loop on the slope operator, warm-started across outer iterations.

Midpoint selection is a grid search: the component is fitted per candidate
t0 and the best objective wins.
"""

from dataclasses import dataclass, field

import numpy as np

from . import core1d, logpca
from ._kernels import pd_prox_1d
from .core1d import DEFAULT_QUAD, Grid1D, Measure1D
from .errors import ConvergenceError, ParameterError, ProxConvergenceError

DEFAULT_T0_GRID = tuple(np.linspace(-0.95, 0.95, 21))

# inner tolerance starts at eta * _INNER_ETA_FACTOR and tightens by
# _TIGHTEN_FACTOR whenever a prox too loose to preserve descent is detected
_INNER_ETA_FACTOR = 1e-2
_TIGHTEN_FACTOR = 1e-3
_MAX_TIGHTENINGS = 3
_MAX_BACKTRACKS = 24
_DESCENT_SLACK = 1e-12
# the step regrows across accepted iterations, so the change-based stopping
# rule is only trusted once regrowth has had a chance to act
_MIN_OUTER = 10
_ORTH_TOL = 1e-6


@dataclass
class FbConfig:
    """Forward-Backward solver settings.

    eta is the relative-change stopping tolerance of the outer loop and, scaled
    down, of the inner primal-dual loop. step_factor is the fraction of the
    inverse gradient-smoothness bound used as the step. t0_grid holds the
    midpoint candidates, all strictly inside (-1, 1).
    """

    eta: float = 1e-6
    max_outer: int = 4000
    max_inner: int = 2000
    step_factor: float = 0.9
    t0_grid: tuple = DEFAULT_T0_GRID

    def __post_init__(self):
        if not self.eta > 0:
            raise ParameterError("eta must be positive")
        if not 0 < self.step_factor < 1:
            raise ParameterError("step_factor must lie in (0, 1)")
        if self.max_outer < 1 or self.max_inner < 1:
            raise ParameterError("iteration caps must be at least 1")
        self.t0_grid = tuple(float(t) for t in self.t0_grid)
        if not self.t0_grid:
            raise ParameterError("t0_grid must be nonempty")
        if any(not -1 < t < 1 for t in self.t0_grid):
            raise ParameterError("every t0 must lie strictly inside (-1, 1)")


@dataclass
class FeasibleSets:
    """Constraint data for one midpoint: box, slope interval, priors.

    box_lo/box_hi bound each node value so that both endpoint maps stay in
    the working interval; slope_lo/slope_hi bound the difference quotients so
    that both endpoint maps are nondecreasing. priors holds the directions the
    new one must be orthogonal to (rows, may be empty).
    """

    t0: float
    box_lo: np.ndarray
    box_hi: np.ndarray
    slope_lo: float
    slope_hi: float
    priors: np.ndarray


def feasible_sets(grid, t0, priors=None):
    """Box and slope constraints making both geodesic endpoints feasible.

    Node bounds: max((a-x)/(t0+1), (b-x)/(t0-1)) <= v <= min((a-x)/(t0-1),
    (b-x)/(t0+1)) with [a, b] the working interval. Slope bounds on forward
    difference quotients: -1/(1+t0) <= q <= 1/(1-t0).
    """
    if not -1 < t0 < 1:
        raise ParameterError("t0 must lie strictly inside (-1, 1)")
    x = grid.points
    a, b = grid.lo, grid.hi
    lo = np.maximum((a - x) / (t0 + 1), (b - x) / (t0 - 1))
    hi = np.minimum((a - x) / (t0 - 1), (b - x) / (t0 + 1))
    if priors is None:
        priors = np.zeros((0, grid.n))
    else:
        priors = np.atleast_2d(np.asarray(priors, dtype=np.float64))
        if priors.shape[1] != grid.n:
            raise ParameterError("prior directions do not match the grid")
    return FeasibleSets(float(t0), lo, hi,
                        -1.0 / (1.0 + t0), 1.0 / (1.0 - t0), priors)


@dataclass
class GeodesicComponent:
    """Fitted geodesic: direction, midpoint, per-datum positions, objective.

    trace records the full objective after every outer iteration (position 0
    is the initial point). objective is the mean squared residual H(t0, v)
    with positions re-projected exactly after the final polish.
    """

    direction: np.ndarray
    t0: float
    times: np.ndarray
    objective: float
    trace: np.ndarray = field(default=None, repr=False)
    converged: bool = True
    stop_reason: str = "tolerance"
    feasibility: dict = field(default=None, repr=False)


@dataclass
class MidpointSearch:
    """All components fitted along the midpoint grid, best one first.

    feasible marks candidates whose polished output satisfies every
    constraint; only those compete for best.
    """

    best: GeodesicComponent
    t0_values: np.ndarray
    objectives: np.ndarray
    components: list
    feasible: np.ndarray = field(default=None, repr=False)


@dataclass
class GpcaModel:
    """Nested geodesic components at a common barycenter."""

    reference: Measure1D
    components: list
    searches: list = field(default=None, repr=False)

    @property
    def n_components(self):
        return len(self.components)

    @property
    def directions(self):
        return np.array([c.direction for c in self.components])

    @property
    def midpoints(self):
        return np.array([c.t0 for c in self.components])


def objective_value(v, times, t0, logs, masses):
    """Sum over data of the weighted squared residual to (t0 + t_i) v."""
    coef = t0 + np.asarray(times, dtype=np.float64)
    res = coef[:, None] * v[None, :] - logs
    return float(np.sum(res * res * masses[None, :]))


def gradients(v, times, t0, logs, masses):
    """Joint gradient of the fit term in (v, t)."""
    coef = t0 + np.asarray(times, dtype=np.float64)
    res = coef[:, None] * v[None, :] - logs
    grad_v = 2.0 * masses * (coef @ res)
    grad_t = 2.0 * ((res * masses[None, :]) @ v)
    return grad_v, grad_t


def lipschitz_from_quantities(n_data, n_nodes, t0, f_inf, w_inf, alpha):
    """Gradient smoothness bound from scalar summaries.

    gamma = 2 (1+|t0|) alpha + w_inf;
    M = 2 f_inf max(n alpha^2 + N gamma, n gamma + N (1+|t0|)^2).
    """
    gamma = 2.0 * (1.0 + abs(t0)) * alpha + w_inf
    return 2.0 * f_inf * max(n_data * alpha ** 2 + n_nodes * gamma,
                             n_data * gamma + n_nodes * (1.0 + abs(t0)) ** 2)


def lipschitz_bound(reference, logs, t0):
    """Smoothness bound with f_inf, w_inf and the interval width from data."""
    logs = np.asarray(logs, dtype=np.float64)
    f_inf = float(np.max(reference.density))
    w_inf = float(np.max(np.abs(logs))) if logs.size else 0.0
    alpha = reference.grid.hi - reference.grid.lo
    return lipschitz_from_quantities(logs.shape[0], reference.grid.n,
                                     t0, f_inf, w_inf, alpha)


def lipschitz_bound_masses(masses, logs, t0, alpha, v_inf=None):
    """Row-sum bound on the joint Hessian under mass weights.

    Node values on the feasible box never exceed alpha/2 in magnitude, which
    is the default v_inf; a smaller v_inf gives the bound on a smaller box.
    Masses sum to one, which collapses the position rows.
    """
    logs = np.asarray(logs, dtype=np.float64)
    n = logs.shape[0]
    w_inf = float(np.max(np.abs(logs))) if logs.size else 0.0
    if v_inf is None:
        v_inf = 0.5 * alpha
    gamma = 2.0 * (1.0 + abs(t0)) * v_inf + w_inf
    m_inf = float(np.max(masses))
    row_v = m_inf * n * ((1.0 + abs(t0)) ** 2 + gamma)
    row_t = v_inf ** 2 + gamma
    return 2.0 * max(row_v, row_t)


def slope_operator_norm_bound(grid):
    """Squared norm bound for the difference-quotient operator.

    2 max_j (1/D_j^2 + 1/D_{j+1}^2) over interior nodes; 4/h^2 on a uniform
    grid, 2/h^2 with a single spacing.
    """
    s = 1.0 / grid.spacings ** 2
    if s.size >= 2:
        return 2.0 * float(np.max(s[:-1] + s[1:]))
    return 2.0 * float(s[0])


def prox_t(t):
    """Position prox: clamp each coordinate into [-1, 1]."""
    return np.clip(t, -1.0, 1.0)


def prox_conj_slope(z, sigma, t0):
    """Pointwise prox of the conjugate slope penalty: shrink a dead zone.

    Entries above sigma/(1-t0) are shifted down by that amount, entries below
    -sigma/(1+t0) are shifted up, the rest vanish.
    """
    z = np.asarray(z, dtype=np.float64)
    lo = -sigma / (1.0 + t0)
    hi = sigma / (1.0 - t0)
    return z - np.clip(z, lo, hi)


def _pd_parameters(sets, masses, tau, grid):
    cons = sets.priors * masses[None, :]
    delta_sq = slope_operator_norm_bound(grid)
    if cons.size:
        delta_sq = delta_sq + float(np.sum(cons * cons))
    delta = np.sqrt(delta_sq)
    sigma = 1.0 / delta
    theta = tau / (1.0 + delta * tau)
    return cons, sigma, theta


def _run_prox(v_tilde, sets, masses, grid, tau, eta, max_inner, z0, y0):
    cons, sigma, theta = _pd_parameters(sets, masses, tau, grid)
    inv_dx = 1.0 / grid.spacings
    return pd_prox_1d(v_tilde, sets.box_lo, sets.box_hi, inv_dx,
                      sets.slope_lo, sets.slope_hi, cons, tau, sigma,
                      theta, eta, max_inner, z0, y0)


def prox_v(v_tilde, sets, masses, grid, tau, eta=1e-10, max_inner=20000):
    """Proximal point of the direction constraints at v_tilde.

    Solves min 1/(2 tau) |v - v_tilde|^2 over the box, the slope interval on
    difference quotients and orthogonality to the priors, by a primal-dual
    loop with dual steps on slopes and priors. Raises ProxConvergenceError
    carrying the last iterate when the cap is hit before the tolerance.
    """
    v_tilde = np.asarray(v_tilde, dtype=np.float64)
    z0 = np.zeros(grid.n)
    y0 = np.zeros(sets.priors.shape[0])
    v, _, _, _, rel = _run_prox(v_tilde, sets, masses, grid, tau,
                                eta, max_inner, z0, y0)
    if rel > eta:
        raise ProxConvergenceError(
            "direction prox did not reach tolerance "
            f"({rel:.2e} > {eta:.2e} after {max_inner} iterations)",
            last_iterate=v, residual=rel)
    return v


def project_time(log_map, v, t0, masses):
    """Best geodesic position of one lifted datum, clamped into [-1, 1]."""
    denom = float(np.sum(masses * v * v))
    if denom <= 0.0:
        raise ParameterError("direction has zero norm")
    raw = float(np.sum(masses * log_map * v)) / denom - t0
    return float(np.clip(raw, -1.0, 1.0))


def project_times(logs, v, t0, masses):
    """Vectorized best positions; zeros when the direction vanishes."""
    denom = float(np.sum(masses * v * v))
    if denom <= 0.0:
        return np.zeros(logs.shape[0])
    raw = (logs * masses[None, :]) @ v / denom - t0
    return np.clip(raw, -1.0, 1.0)


def _orthogonalize(v, sets, masses):
    if sets.priors.size:
        coef = (sets.priors * masses[None, :]) @ v
        v = v - coef @ sets.priors
    return v


def slope_sweep(v, sets, grid):
    """Forward sweep clipping each node between its slope-feasible range.

    Keeps the box: the box envelopes themselves have difference quotients
    inside the slope interval, so the clipped value never leaves them.
    """
    v = v.copy()
    dx = grid.spacings
    for j in range(v.size - 1):
        lo = v[j] + sets.slope_lo * dx[j]
        hi = v[j] + sets.slope_hi * dx[j]
        if v[j + 1] < lo:
            v[j + 1] = lo
        elif v[j + 1] > hi:
            v[j + 1] = hi
    return v


def polish_direction(v, sets, masses, grid):
    """Restore exact feasibility after the iterative loop.

    Rounds of orthogonalize, box clamp and slope sweep; the final round ends
    with the clamp and sweep so box and slope constraints hold exactly, while
    the orthogonality perturbation of the last sweep is second order.
    """
    for _ in range(2):
        v = _orthogonalize(v, sets, masses)
        v = np.clip(v, sets.box_lo, sets.box_hi)
        v = slope_sweep(v, sets, grid)
    return v


def feasibility_report(v, sets, masses, grid):
    """Worst-case violations of box, slope and orthogonality constraints."""
    box = float(np.max(np.maximum(sets.box_lo - v, v - sets.box_hi)))
    q = np.diff(v) / grid.spacings
    slope = float(np.max(np.maximum(sets.slope_lo - q, q - sets.slope_hi)))
    orth = 0.0
    if sets.priors.size:
        orth = float(np.max(np.abs((sets.priors * masses[None, :]) @ v)))
    return {"box": max(box, 0.0), "slope": max(slope, 0.0),
            "orthogonality": orth}


def _initial_direction(reference, logs, sets, grid, masses):
    """Deflated top principal direction of the logs, scaled into the sets.

    The scale is chosen so every projection coefficient is reachable with a
    position inside [-1, 1]; feasibility is then restored by clamping and the
    slope sweep, which flattens the profile only where the constraints bind.
    """
    if sets.priors.size:
        coefs = (logs * masses[None, :]) @ sets.priors.T
        resid = logs - coefs @ sets.priors
    else:
        resid = logs
    sq = float(np.sum(resid * resid * masses[None, :]))
    if sq <= 1e-28 or resid.shape[0] < 2:
        return np.zeros(grid.n)
    model = logpca.pca_of_logs(reference, resid, 1)
    u = model.directions[0]
    if not np.any(u):
        return np.zeros(grid.n)
    p = model.scores[:, 0]
    t0 = sets.t0
    target = 0.0
    if np.any(p > 0):
        target = float(np.max(p[p > 0])) / (1.0 + t0)
    if np.any(p < 0):
        target = max(target, float(np.max(-p[p < 0])) / (1.0 - t0))
    # no feasible direction exceeds half the interval anywhere, so a larger
    # scale only saturates the box and degrades the polish
    cap = 0.5 * (grid.hi - grid.lo) / float(np.max(np.abs(u)))
    return polish_direction(u * min(target, cap), sets, masses, grid)


def fit_component(reference, logs, t0, config=None, priors=None, v_init=None):
    """Fit one geodesic component at a fixed midpoint by Forward-Backward.

    Starts from the deflated principal direction of the logs (or v_init),
    alternates a joint gradient step with the proximal step, and polishes the
    final direction to exact feasibility. The recorded objective trace is
    nonincreasing: a step that fails to decrease it triggers inner-tolerance
    tightening, and the iterate is kept only if descent is restored.
    """
    if config is None:
        config = FbConfig()
    logs = np.asarray(logs, dtype=np.float64)
    grid = reference.grid
    masses = reference.node_masses
    sets = feasible_sets(grid, t0, priors)
    n = logs.shape[0]

    if v_init is None:
        v = _initial_direction(reference, logs, sets, grid, masses)
    else:
        v = polish_direction(np.asarray(v_init, dtype=np.float64),
                             sets, masses, grid)
    t = project_times(logs, v, t0, masses)

    # step from a smoothness bound on the ball the iterates actually live in,
    # backtracked toward the worst-case feasible-box bound when descent fails
    # and regrown while steps keep descending
    alpha = grid.hi - grid.lo
    n_nodes = grid.n
    w_inf = float(np.max(np.abs(logs))) if logs.size else 0.0
    m_inf = float(np.max(masses))
    abs_t0 = abs(t0)
    f_inf = float(np.max(reference.density))
    gamma_spec = 2.0 * (1.0 + abs_t0) * alpha + w_inf
    m_spec = 2.0 * f_inf * max(n * alpha ** 2 + n_nodes * gamma_spec,
                               n * gamma_spec + n_nodes * (1.0 + abs_t0) ** 2)

    def _step_bound(v_scale):
        v_eff = min(max(v_scale, 0.02 * alpha), 0.5 * alpha)
        gamma = 2.0 * (1.0 + abs_t0) * v_eff + w_inf
        row_v = m_inf * n * ((1.0 + abs_t0) ** 2 + gamma)
        row_t = v_eff ** 2 + gamma
        return min(m_spec, 2.0 * max(row_v, row_t))

    tau_floor = config.step_factor / _step_bound(0.5 * alpha)
    tau = config.step_factor / _step_bound(2.0 * float(np.max(np.abs(v))))
    cons, sigma, _ = _pd_parameters(sets, masses, tau, grid)
    delta_b = 1.0 / sigma
    inv_dx = 1.0 / grid.spacings

    z = np.zeros(grid.n)
    y = np.zeros(sets.priors.shape[0])
    inner_eta = config.eta * _INNER_ETA_FACTOR
    current = objective_value(v, t, t0, logs, masses)
    trace = [current]
    converged = False
    reason = "max_outer"

    for outer in range(config.max_outer):
        grad_v, grad_t = gradients(v, t, t0, logs, masses)

        accepted = False
        backtracked = False
        tightenings = 0
        for _attempt in range(_MAX_BACKTRACKS):
            v_tilde = v - tau * grad_v
            t_new = prox_t(t - tau * grad_t)
            theta = tau / (1.0 + delta_b * tau)
            v_new, z_new, y_new, _, _ = pd_prox_1d(
                v_tilde, sets.box_lo, sets.box_hi, inv_dx,
                sets.slope_lo, sets.slope_hi, cons, tau, sigma, theta,
                inner_eta, config.max_inner, z, y)
            candidate = objective_value(v_new, t_new, t0, logs, masses)
            if candidate <= current + _DESCENT_SLACK * max(1.0, abs(current)):
                accepted = True
                break
            # ascent: blame an inexact prox once, then a too-long step, then
            # keep tightening at the floor step
            if tightenings == 0 or tau <= tau_floor * (1.0 + 1e-12):
                if tightenings >= _MAX_TIGHTENINGS:
                    break
                inner_eta = max(inner_eta * _TIGHTEN_FACTOR, 1e-15)
                tightenings += 1
            else:
                tau = max(0.5 * tau, tau_floor)
                backtracked = True
        if not accepted:
            converged = True
            reason = "stalled"
            break

        z, y = z_new, y_new
        # movement in the tangent geometry: mass-weighted, so node changes in
        # negligible-mass regions cannot hold up termination
        rel = np.sqrt(float(np.sum((v_new - v) ** 2 * masses))) / max(
            np.sqrt(float(np.sum(v * v * masses))), 1e-30)
        v, t, current = v_new, t_new, candidate
        trace.append(current)
        if rel <= config.eta and outer >= _MIN_OUTER:
            converged = True
            reason = "tolerance"
            break
        if not backtracked:
            cap = config.step_factor / _step_bound(
                2.0 * float(np.max(np.abs(v))))
            tau = min(tau * 1.1, cap)

    v = polish_direction(v, sets, masses, grid)
    t = project_times(logs, v, t0, masses)
    h_value = objective_value(v, t, t0, logs, masses) / n
    report = feasibility_report(v, sets, masses, grid)
    if report["orthogonality"] > _ORTH_TOL:
        converged = False
        reason = "infeasible"
    return GeodesicComponent(v, float(t0), t, h_value,
                             trace=np.asarray(trace), converged=converged,
                             stop_reason=reason, feasibility=report)


def search_midpoint(reference, logs, config=None, priors=None):
    """Fit a component per midpoint candidate and keep the best objective.

    The principal-direction initializer is shared across candidates. Raises
    ConvergenceError when no candidate converges.
    """
    if config is None:
        config = FbConfig()
    logs = np.asarray(logs, dtype=np.float64)
    grid = reference.grid
    masses = reference.node_masses
    components = []
    for t0 in config.t0_grid:
        sets = feasible_sets(grid, t0, priors)
        v0 = _initial_direction(reference, logs, sets, grid, masses)
        components.append(fit_component(reference, logs, t0, config,
                                        priors=priors, v_init=v0))
    feasible = np.array([c.stop_reason != "infeasible" for c in components])
    if not any(c.converged for c in components):
        raise ConvergenceError("no midpoint candidate converged")
    objectives = np.array([c.objective for c in components])
    ranked = np.where(feasible, objectives, np.inf)
    best = components[int(np.argmin(ranked))]
    return MidpointSearch(best, np.asarray(config.t0_grid), objectives,
                          components, feasible=feasible)


def fit_gpca(dataset, n_components, config=None, quad=DEFAULT_QUAD,
             grid=None, keep_searches=False):
    """Barycenter plus nested geodesic components of a histogram dataset."""
    if n_components < 1:
        raise ParameterError("need at least one component")
    if config is None:
        config = FbConfig()
    if grid is None:
        first = dataset[0].grid
        if all(nu.grid.same_points(first) for nu in dataset):
            grid = first
        else:
            lo = min(nu.grid.lo for nu in dataset)
            hi = max(nu.grid.hi for nu in dataset)
            grid = Grid1D.uniform(lo, hi, max(nu.grid.n for nu in dataset))
    reference = core1d.barycenter(dataset, grid, quad)
    logs = core1d.log_maps_matrix(reference, dataset)
    components = []
    searches = []
    priors = None
    for _ in range(n_components):
        search = search_midpoint(reference, logs, config, priors)
        components.append(search.best)
        searches.append(search)
        rows = [c.direction for c in components
                if float(np.sum(reference.node_masses * c.direction ** 2)) > 0]
        if rows:
            gram_sqrt = [r / np.sqrt(np.sum(reference.node_masses * r * r))
                         for r in rows]
            priors = np.array(gram_sqrt)
    return GpcaModel(reference, components,
                     searches=searches if keep_searches else None)


def geodesic_coefficients(directions, bounds_lo, bounds_hi, log_maps, masses,
                          max_iter=2000, tol=1e-13, coef0=None):
    """Box-constrained multipliers of the directions best matching lifted data.

    Each multiplier stays in the range its own geodesic covers, so every
    single-direction term is itself a feasible map. Solved by projected
    gradient with a step from the Gram spectrum, vectorized over data rows;
    accepts one log map or a stacked matrix of them.
    """
    dirs = np.atleast_2d(np.asarray(directions, dtype=np.float64))
    lo = np.asarray(bounds_lo, dtype=np.float64)
    hi = np.asarray(bounds_hi, dtype=np.float64)
    logs = np.asarray(log_maps, dtype=np.float64)
    single = logs.ndim == 1
    logs = np.atleast_2d(logs)
    k = dirs.shape[0]
    gram = (dirs * masses[None, :]) @ dirs.T
    lin = (logs * masses[None, :]) @ dirs.T
    lam = float(np.max(np.linalg.eigvalsh(gram))) if k else 0.0
    if lam <= 0.0:
        out = np.zeros((logs.shape[0], k))
        return out[0] if single else out
    step = 1.0 / (2.0 * lam)
    if coef0 is None:
        coef = np.zeros((logs.shape[0], k))
    else:
        coef = np.clip(np.atleast_2d(np.asarray(coef0, dtype=np.float64)),
                       lo[None, :], hi[None, :])
    for _ in range(max_iter):
        grad = 2.0 * (coef @ gram - lin)
        coef_new = np.clip(coef - step * grad, lo[None, :], hi[None, :])
        move = float(np.max(np.abs(coef_new - coef)))
        coef = coef_new
        if move <= tol:
            break
    return coef[0] if single else coef


def _component_span(components, n_components):
    dirs = np.array([comp.direction for comp in components[:n_components]])
    t0s = np.array([comp.t0 for comp in components[:n_components]])
    return dirs, t0s - 1.0, t0s + 1.0


def gpca_project(model, log_map, n_components=None):
    """Projected tangent vector of one lifted datum onto the geodesic span."""
    k = model.n_components if n_components is None else n_components
    if not 1 <= k <= model.n_components:
        raise ParameterError("component count out of range")
    dirs, lo, hi = _component_span(model.components, k)
    masses = model.reference.node_masses
    coef = geodesic_coefficients(dirs, lo, hi, log_map, masses)
    return coef @ dirs


def gpca_reconstruction_error(model, dataset, n_components=None,
                              quad=DEFAULT_QUAD):
    """Mean squared Wasserstein distance to the geodesic reconstructions."""
    k = model.n_components if n_components is None else n_components
    if not 1 <= k <= model.n_components:
        raise ParameterError("component count out of range")
    dirs, lo, hi = _component_span(model.components, k)
    masses = model.reference.node_masses
    logs = np.stack([core1d.log_map(model.reference, nu).values
                     for nu in dataset])
    coefs = geodesic_coefficients(dirs, lo, hi, logs, masses)
    total = 0.0
    for nu, coef in zip(dataset, coefs):
        rec = core1d.exp_map(model.reference, coef @ dirs)
        total += core1d.wasserstein_distance(nu, rec, quad) ** 2
    return total / len(dataset)
