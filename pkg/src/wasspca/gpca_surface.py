"""Geodesic-surface PCA: all directions fitted jointly, no orthogonality.

Instead of nesting one geodesic at a time, the surface variant spans a region
of measures by convex combinations of the 2K endpoint maps of K directions.
Each datum carries a nonnegative coefficient pair per direction whose total
sum is at most one, so every represented point is itself a feasible map and
the fitted set is geodesically convex.

The solver is the same guarded Forward-Backward scheme as the iterative
variant: joint gradient step on directions and coefficients, per-direction
primal-dual prox for box and slope constraints (orthogonality dropped), and
an exact per-datum simplex projection for the coefficients.
"""

from dataclasses import dataclass, field

import numpy as np

from ._kernels import pd_prox_1d
from .core1d import Measure1D
from .errors import ParameterError
from .gpca_iter import (FbConfig, feasible_sets, fit_component,
                        slope_operator_norm_bound, slope_sweep)

_DESCENT_SLACK = 1e-12
_INNER_ETA_FACTOR = 1e-2
_TIGHTEN_FACTOR = 1e-3
_MAX_TIGHTENINGS = 3
_MAX_BACKTRACKS = 24
_MIN_OUTER = 10
_REFIT_EVERY = 50


def project_simplex(alpha, radius=1.0):
    """Euclidean projection onto the scaled simplex with slack.

    Returns the closest point with nonnegative entries summing to at most
    radius. When clamping negatives already lands inside, that is the
    answer; otherwise the sum-equality face is hit by the sorting rule.
    """
    alpha = np.asarray(alpha, dtype=np.float64)
    clipped = np.maximum(alpha, 0.0)
    if float(np.sum(clipped)) <= radius:
        return clipped
    u = np.sort(alpha)[::-1]
    css = np.cumsum(u) - radius
    j = np.arange(1, alpha.size + 1)
    rho = int(np.max(np.nonzero(u * j > css)[0]))
    lam = css[rho] / (rho + 1.0)
    return np.maximum(alpha - lam, 0.0)


def _project_simplex_rows(mat, radius=1.0):
    """Row-wise simplex-with-slack projection for a 2-D array."""
    out = np.maximum(mat, 0.0)
    over = np.sum(out, axis=1) > radius
    if not np.any(over):
        return out
    sub = mat[over]
    u = np.sort(sub, axis=1)[:, ::-1]
    css = np.cumsum(u, axis=1) - radius
    j = np.arange(1, sub.shape[1] + 1)
    hit = u * j[None, :] > css
    rho = sub.shape[1] - 1 - np.argmax(hit[:, ::-1], axis=1)
    lam = np.take_along_axis(css, rho[:, None], axis=1)[:, 0] / (rho + 1.0)
    out[over] = np.maximum(sub - lam[:, None], 0.0)
    return out


def _alpha_block(rows, logs, masses, alpha0, max_iter=200, tol=1e-12):
    """Exact-block coefficient update, vectorized over the dataset.

    One shared Gram matrix serves every datum, so each sweep is a single
    matrix product plus a row-wise simplex projection. The step keeps the
    fit term nonincreasing, which the outer loop's monotone trace relies on.
    """
    gram = (rows * masses[None, :]) @ rows.T
    lin = (logs * masses[None, :]) @ rows.T
    lam = float(np.max(np.linalg.eigvalsh(gram))) if rows.size else 0.0
    if lam <= 0.0:
        return np.zeros_like(alpha0)
    step = 1.0 / (2.0 * lam)
    alpha = _project_simplex_rows(np.asarray(alpha0, dtype=np.float64))
    for _ in range(max_iter):
        grad = 2.0 * (alpha @ gram - lin)
        alpha_new = _project_simplex_rows(alpha - step * grad)
        move = float(np.max(np.abs(alpha_new - alpha)))
        alpha = alpha_new
        if move <= tol:
            break
    return alpha


@dataclass
class SurfaceModel:
    """Directions (rows), their midpoints, per-datum coefficient pairs.

    alphas[i] = (a1+, a1-, ..., aK+, aK-) weights the endpoint maps
    (t0_k + 1) v_k and (t0_k - 1) v_k. gram_min_singular is the smallest
    singular value of the direction Gram matrix, recorded for the
    linear-independence check.
    """

    reference: Measure1D
    directions: np.ndarray
    midpoints: np.ndarray
    alphas: np.ndarray
    objective: float
    gram_min_singular: float = 0.0
    trace: np.ndarray = field(default=None, repr=False)
    rel_trace: np.ndarray = field(default=None, repr=False)
    converged: bool = True
    stop_reason: str = "tolerance"

    @property
    def n_components(self):
        return self.directions.shape[0]

    def combination_coefficients(self):
        """Per-datum multipliers of each direction: a+ (t0+1) + a- (t0-1)."""
        plus = self.alphas[:, 0::2]
        minus = self.alphas[:, 1::2]
        return plus * (self.midpoints + 1.0) + minus * (self.midpoints - 1.0)


def _betas(alphas, midpoints):
    plus = alphas[:, 0::2]
    minus = alphas[:, 1::2]
    return plus * (midpoints[None, :] + 1.0) + minus * (midpoints[None, :] - 1.0)


def surface_objective(directions, midpoints, alphas, logs, masses):
    """Total weighted squared residual of the coefficient combinations."""
    betas = _betas(alphas, np.asarray(midpoints, dtype=np.float64))
    res = betas @ directions - logs
    return float(np.sum(res * res * masses[None, :]))


def surface_gradients(directions, midpoints, alphas, logs, masses):
    """Exact gradients of the fit term in every direction and coefficient."""
    midpoints = np.asarray(midpoints, dtype=np.float64)
    betas = _betas(alphas, midpoints)
    res = betas @ directions - logs
    grad_dirs = 2.0 * masses[None, :] * (betas.T @ res)
    inner = (res * masses[None, :]) @ directions.T
    grad_alphas = np.empty_like(alphas)
    grad_alphas[:, 0::2] = 2.0 * (midpoints[None, :] + 1.0) * inner
    grad_alphas[:, 1::2] = 2.0 * (midpoints[None, :] - 1.0) * inner
    return grad_dirs, grad_alphas


def endpoint_rows(directions, midpoints):
    """Stacked endpoint maps (t0_k + 1) v_k, (t0_k - 1) v_k as rows."""
    directions = np.asarray(directions, dtype=np.float64)
    rows = np.empty((2 * directions.shape[0], directions.shape[1]))
    for k, t0 in enumerate(midpoints):
        rows[2 * k] = (t0 + 1.0) * directions[k]
        rows[2 * k + 1] = (t0 - 1.0) * directions[k]
    return rows


def _exact_alphas(directions, midpoints, logs, masses):
    rows = endpoint_rows(directions, midpoints)
    zeros = np.zeros((logs.shape[0], rows.shape[0]))
    return _alpha_block(rows, logs, masses, zeros, max_iter=5000, tol=1e-13)


def _initial_surface(reference, logs, midpoints, config):
    """Sequential nested fits at the given midpoints, as a warm start.

    The fitted shapes are rescaled jointly so that the coefficient simplex
    covers every datum's multipliers: a datum spending weight |p|/(1+t0) or
    |p|/(1-t0) per direction must fit within total weight one. Feasibility
    then clips the scaled directions where the sets bind.
    """
    grid = reference.grid
    masses = reference.node_masses
    directions = []
    priors = None
    for t0 in midpoints:
        comp = fit_component(reference, logs, t0, config, priors=priors)
        directions.append(comp.direction)
        rows = [d for d in directions
                if float(np.sum(masses * d * d)) > 0]
        if rows:
            priors = np.array([r / np.sqrt(np.sum(masses * r * r))
                               for r in rows])
    directions = np.array(directions)

    norms = np.sqrt(np.sum(directions ** 2 * masses[None, :], axis=1))
    live = norms > 0
    if np.any(live):
        units = directions[live] / norms[live][:, None]
        scores = (logs * masses[None, :]) @ units.T
        t0s = np.asarray(midpoints, dtype=np.float64)[live]
        cost = np.where(scores > 0, scores / (1.0 + t0s[None, :]),
                        -scores / (1.0 - t0s[None, :]))
        scale = float(np.max(np.sum(cost, axis=1)))
        if scale > 0:
            directions[live] = units * scale
    for k, t0 in enumerate(midpoints):
        sets = feasible_sets(grid, t0)
        clipped = np.clip(directions[k], sets.box_lo, sets.box_hi)
        directions[k] = slope_sweep(clipped, sets, grid)
    return directions


def _refit_directions(directions, midpoints, alphas, logs, masses,
                      all_sets, grid):
    """One least-squares refit of the directions at fixed multipliers.

    Per grid node the mass factors out, so the unconstrained optimum has the
    right profile even where mass is tiny and gradient steps would crawl.
    The refit is kept only when, after the feasibility polish and a fresh
    coefficient solve, it actually lowers the objective.
    """
    betas = _betas(alphas, midpoints)
    if np.linalg.matrix_rank(betas) < betas.shape[1]:
        return directions, alphas
    sol, _, _, _ = np.linalg.lstsq(betas, logs, rcond=None)
    cand = np.empty_like(directions)
    for k, sets in enumerate(all_sets):
        clipped = np.clip(sol[k], sets.box_lo, sets.box_hi)
        cand[k] = slope_sweep(clipped, sets, grid)
    cand_alphas = _alpha_block(endpoint_rows(cand, midpoints), logs, masses,
                               alphas, max_iter=5000, tol=1e-13)
    before = surface_objective(directions, midpoints, alphas, logs, masses)
    after = surface_objective(cand, midpoints, cand_alphas, logs, masses)
    if after < before:
        return cand, cand_alphas
    return directions, alphas


def fit_surface(reference, logs, midpoints, config=None,
                init_directions=None, init_alphas=None):
    """Fit all directions and coefficients by block Forward-Backward.

    midpoints fixes one t0 per direction for the whole run. The default
    initialization runs the nested per-direction fits at those midpoints.
    Each sweep re-solves every datum's coefficient problem exactly, then
    takes one guarded prox step on the directions, so the recorded trace is
    nonincreasing: the coefficient block cannot raise the objective and the
    direction step is accepted only when it does not either.
    """
    if config is None:
        config = FbConfig()
    logs = np.asarray(logs, dtype=np.float64)
    midpoints = np.asarray(midpoints, dtype=np.float64)
    if midpoints.ndim != 1 or midpoints.size < 1:
        raise ParameterError("need at least one midpoint")
    if np.any(np.abs(midpoints) >= 1):
        raise ParameterError("every midpoint must lie strictly inside (-1, 1)")
    n = logs.shape[0]
    n_dirs = midpoints.size
    grid = reference.grid
    masses = reference.node_masses

    all_sets = [feasible_sets(grid, t0) for t0 in midpoints]
    if init_directions is None:
        directions = _initial_surface(reference, logs, midpoints, config)
    else:
        directions = np.asarray(init_directions, dtype=np.float64).copy()
    if init_alphas is None:
        alphas = _exact_alphas(directions, midpoints, logs, masses)
    else:
        alphas = np.asarray(init_alphas, dtype=np.float64).copy()
    alphas = _project_simplex_rows(alphas)
    if init_directions is None:
        directions, alphas = _refit_directions(directions, midpoints, alphas,
                                               logs, masses, all_sets, grid)

    # with coefficients re-solved exactly each sweep, the direction block's
    # Hessian is block diagonal with blocks 2 m_j B^T B over the multiplier
    # matrix B, so 2 m_inf lambda_max(B^T B) is its exact smoothness constant;
    # the simplex caps it at 2 m_inf n b_max^2 in the worst case
    m_inf = float(np.max(masses))
    b_max = float(np.max(1.0 + np.abs(midpoints)))
    worst = 2.0 * m_inf * n * b_max ** 2
    tau_floor = config.step_factor / worst / 1024.0
    tau = config.step_factor / worst

    def _tau_cap(betas):
        lam = float(np.max(np.linalg.eigvalsh(betas.T @ betas)))
        return config.step_factor / max(2.0 * m_inf * lam, 1e-30)

    delta = np.sqrt(slope_operator_norm_bound(grid))
    sigma = 1.0 / delta
    inv_dx = 1.0 / grid.spacings
    cons = np.zeros((0, grid.n))
    duals = np.zeros((n_dirs, grid.n))
    y0 = np.zeros(0)

    inner_eta = config.eta * _INNER_ETA_FACTOR
    current = surface_objective(directions, midpoints, alphas, logs, masses)
    trace = [current]
    rels = []
    converged = False
    reason = "max_outer"

    for outer in range(config.max_outer):
        rows = endpoint_rows(directions, midpoints)
        new_alphas = _alpha_block(rows, logs, masses, alphas)
        if outer and outer % _REFIT_EVERY == 0:
            directions, new_alphas = _refit_directions(
                directions, midpoints, new_alphas, logs, masses,
                all_sets, grid)
        current = surface_objective(directions, midpoints, new_alphas,
                                    logs, masses)
        grad_dirs, _ = surface_gradients(directions, midpoints, new_alphas,
                                         logs, masses)
        cap = _tau_cap(_betas(new_alphas, midpoints))
        tau = min(tau, cap)
        accepted = False
        backtracked = False
        tightenings = 0
        for _attempt in range(_MAX_BACKTRACKS):
            theta = tau / (1.0 + delta * tau)
            new_dirs = np.empty_like(directions)
            new_duals = np.empty_like(duals)
            for k in range(n_dirs):
                sets = all_sets[k]
                vk, zk, _, _, _ = pd_prox_1d(
                    directions[k] - tau * grad_dirs[k],
                    sets.box_lo, sets.box_hi, inv_dx,
                    sets.slope_lo, sets.slope_hi, cons, tau, sigma, theta,
                    inner_eta, config.max_inner, duals[k], y0)
                new_dirs[k] = vk
                new_duals[k] = zk
            candidate = surface_objective(new_dirs, midpoints, new_alphas,
                                          logs, masses)
            if candidate <= current + _DESCENT_SLACK * max(1.0, abs(current)):
                accepted = True
                break
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

        # movement in the tangent geometry: direction changes weighted by
        # node mass, so negligible-mass nodes cannot hold up termination
        dmove = float(np.sum((new_dirs - directions) ** 2 * masses[None, :]))
        dsize = float(np.sum(directions ** 2 * masses[None, :]))
        move = np.sqrt(dmove + float(np.sum((new_alphas - alphas) ** 2)))
        size = np.sqrt(dsize + float(np.sum(alphas ** 2)))
        rel = move / max(size, 1e-30)
        rels.append(rel)
        directions, alphas, duals, current = (new_dirs, new_alphas,
                                              new_duals, candidate)
        trace.append(current)
        if rel <= config.eta and outer >= _MIN_OUTER:
            converged = True
            reason = "tolerance"
            break
        if not backtracked:
            tau = min(tau * 1.1, cap)

    for k in range(n_dirs):
        sets = all_sets[k]
        clipped = np.clip(directions[k], sets.box_lo, sets.box_hi)
        directions[k] = slope_sweep(clipped, sets, grid)
    alphas = _project_simplex_rows(alphas)
    final = surface_objective(directions, midpoints, alphas, logs, masses)

    gram = (directions * masses[None, :]) @ directions.T
    sing = np.linalg.svd(gram, compute_uv=False)
    return SurfaceModel(reference, directions, midpoints, alphas, final,
                        gram_min_singular=float(sing[-1]) if sing.size else 0.0,
                        trace=np.asarray(trace), rel_trace=np.asarray(rels),
                        converged=converged, stop_reason=reason)


def surface_reconstruction_error(model, dataset, quad=None):
    """Mean squared Wasserstein distance to the surface reconstructions.

    Coefficients are re-solved exactly per datum before pushing forward, so
    the reported error reflects the surface, not the iterate's alphas.
    """
    from . import core1d

    if quad is None:
        quad = core1d.DEFAULT_QUAD
    masses = model.reference.node_masses
    rows = endpoint_rows(model.directions, model.midpoints)
    logs = np.stack([core1d.log_map(model.reference, nu).values
                     for nu in dataset])
    zeros = np.zeros((logs.shape[0], rows.shape[0]))
    alphas = _alpha_block(rows, logs, masses, zeros, max_iter=5000, tol=1e-13)
    total = 0.0
    for nu, alpha in zip(dataset, alphas):
        rec = core1d.exp_map(model.reference, alpha @ rows)
        total += core1d.wasserstein_distance(nu, rec, quad) ** 2
    return total / len(dataset)
