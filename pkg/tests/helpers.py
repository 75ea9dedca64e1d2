"""Shared builders and independent oracles for the test suite.

Oracles here avoid the library's own code paths: simplex projection by
active-set enumeration, constrained proximal points through cvxpy, exact
transport through scipy's LP solver, pushforwards through Monte Carlo.
"""

import itertools

import numpy as np
from scipy.optimize import linprog

from wasspca.core1d import Grid1D, Measure1D

OMEGA = (-3.0, 3.0)


def default_grid(n=256, omega=OMEGA):
    return Grid1D.uniform(omega[0], omega[1], n)


def truncated_gaussian(grid, mean, sd, floor=0.0):
    x = grid.points
    values = np.exp(-0.5 * ((x - mean) / sd) ** 2) + floor
    return Measure1D.from_values(grid, values)


def random_histogram(rng, grid, floor=1e-4):
    """Two-bump mixture, generic enough to probe quantile code paths."""
    lo, hi = grid.lo, grid.hi
    width = hi - lo
    values = np.zeros(grid.n)
    x = grid.points
    for _ in range(2):
        m = rng.uniform(lo + 0.2 * width, hi - 0.2 * width)
        s = rng.uniform(0.03 * width, 0.10 * width)
        values += rng.uniform(0.3, 1.0) * np.exp(-0.5 * ((x - m) / s) ** 2)
    return Measure1D.from_values(grid, values + floor)


def location_family(grid, means, sd, floor=0.0):
    return [truncated_gaussian(grid, m, sd, floor) for m in means]


def weighted_cosine(masses, a, b):
    num = float(np.sum(masses * a * b))
    den = float(np.sqrt(np.sum(masses * a * a) * np.sum(masses * b * b)))
    return num / max(den, 1e-300)


# ---------------------------------------------------------------------------
# independent oracles

def simplex_projection_oracle(y, radius=1.0):
    """Exact Euclidean projection onto {x >= 0, sum x <= radius}.

    Enumerates active sets: each subset of zeroed coordinates, with and
    without the sum constraint tight, gives a candidate closed form; the
    feasible candidate closest to y wins. Exponential in dimension, exact
    to rounding; intended for small test instances only.
    """
    y = np.asarray(y, dtype=np.float64)
    d = y.size
    best = None
    best_val = np.inf
    for zeros in itertools.chain.from_iterable(
            itertools.combinations(range(d), r) for r in range(d + 1)):
        free = [i for i in range(d) if i not in zeros]
        for tight in (False, True):
            x = np.zeros(d)
            if free:
                if tight:
                    shift = (y[free].sum() - radius) / len(free)
                    x[free] = y[free] - shift
                else:
                    x[free] = y[free]
            elif tight and radius != 0.0:
                continue
            if x.min() < -1e-12 or x.sum() > radius + 1e-12:
                continue
            val = float(np.sum((x - y) ** 2))
            if val < best_val - 1e-15:
                best_val = val
                best = x
    return best


def cvxpy_box_slope_projection(target, box_lo, box_hi, dx, slope_lo,
                               slope_hi, equalities=None):
    """High-accuracy QP oracle for the 1-d direction prox.

    Projects target onto the box, the difference-quotient band and optional
    homogeneous equality rows.
    """
    import cvxpy as cp

    n = target.size
    u = cp.Variable(n)
    cons = [u >= box_lo, u <= box_hi]
    quot = cp.multiply(u[1:] - u[:-1], 1.0 / dx)
    cons += [quot >= slope_lo, quot <= slope_hi]
    if equalities is not None and len(equalities):
        cons.append(np.asarray(equalities) @ u == 0)
    prob = cp.Problem(cp.Minimize(cp.sum_squares(u - target)), cons)
    prob.solve(solver=cp.CLARABEL, tol_gap_abs=1e-12, tol_gap_rel=1e-12,
               tol_feas=1e-12)
    if u.value is None:
        raise RuntimeError("oracle QP failed")
    return np.asarray(u.value)


def divergence_matrix(shape, hx, hy):
    """Dense matrix of the grid divergence acting on stacked (vx, vy).

    Mirrors the solver's convention directly: backward differences inside,
    single-sided terms on the boundary rows, last row/column of each
    component unused.
    """
    m, n = shape
    size = m * n
    mat = np.zeros((size, 2 * size))

    def vx_col(i, j):
        return i * n + j

    def vy_col(i, j):
        return size + i * n + j

    for i in range(m):
        for j in range(n):
            row = i * n + j
            if i == 0:
                mat[row, vx_col(0, j)] += 1.0 / hx
            elif i < m - 1:
                mat[row, vx_col(i, j)] += 1.0 / hx
                mat[row, vx_col(i - 1, j)] -= 1.0 / hx
            else:
                mat[row, vx_col(m - 2, j)] -= 1.0 / hx
            if j == 0:
                mat[row, vy_col(i, 0)] += 1.0 / hy
            elif j < n - 1:
                mat[row, vy_col(i, j)] += 1.0 / hy
                mat[row, vy_col(i, j - 1)] -= 1.0 / hy
            else:
                mat[row, vy_col(i, n - 2)] -= 1.0 / hy
    return mat


def cvxpy_field_projection(tx, ty, blox, bhix, bloy, bhiy, div_mat,
                           div_lo, div_hi):
    """QP oracle for the planar field prox: boxes plus a divergence band."""
    import cvxpy as cp

    m, n = tx.shape
    size = m * n
    u = cp.Variable(2 * size)
    target = np.concatenate([tx.ravel(), ty.ravel()])
    cons = [u[:size] >= blox.ravel(), u[:size] <= bhix.ravel(),
            u[size:] >= bloy.ravel(), u[size:] <= bhiy.ravel(),
            div_mat @ u >= div_lo, div_mat @ u <= div_hi]
    prob = cp.Problem(cp.Minimize(cp.sum_squares(u - target)), cons)
    prob.solve(solver=cp.CLARABEL, tol_gap_abs=1e-12, tol_gap_rel=1e-12,
               tol_feas=1e-12)
    if u.value is None:
        raise RuntimeError("oracle QP failed")
    val = np.asarray(u.value)
    return val[:size].reshape(m, n), val[size:].reshape(m, n)


def lp_transport_oracle(cost, a, b):
    """Exact transport cost and plan through scipy's HiGHS solver."""
    m, n = cost.shape
    a_eq = np.zeros((m + n, m * n))
    for i in range(m):
        a_eq[i, i * n:(i + 1) * n] = 1.0
    for j in range(n):
        a_eq[m + j, j::n] = 1.0
    rhs = np.concatenate([a, b])
    res = linprog(cost.ravel(), A_eq=a_eq, b_eq=rhs,
                  bounds=(0, None), method="highs")
    if not res.success:
        raise RuntimeError(f"LP oracle failed: {res.message}")
    return res.x.reshape(m, n), float(res.fun)


def mc_pushforward_cells(rng, measure, transport_values, edges, samples):
    """Monte Carlo cell masses of the image measure.

    Draws from the source by inverse-cdf sampling, maps the draws through
    the piecewise-linear interpolant of the transport values and bins them.
    """
    from wasspca.core1d import quantile_values

    u = rng.uniform(0.0, 1.0, samples)
    x = quantile_values(measure, u)
    y = np.interp(x, measure.grid.points, transport_values)
    counts, _ = np.histogram(y, bins=edges)
    return counts / samples


def cell_masses(measure):
    f = measure.density
    return 0.5 * (f[:-1] + f[1:]) * measure.grid.spacings


def total_variation_cells(p, q):
    return 0.5 * float(np.sum(np.abs(p - q)))
