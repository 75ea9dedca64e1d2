"""Iterative geodesic fitting: prox oracle, gradients, descent, search."""

import numpy as np
import pytest

from helpers import (cvxpy_box_slope_projection, default_grid,
                     location_family, random_histogram)
from wasspca import core1d, gpca_iter
from wasspca.core1d import Grid1D
from wasspca.errors import ParameterError
from wasspca.gpca_iter import FbConfig


def random_prox_instance(rng, with_prior=False):
    n = int(rng.integers(3, 9))
    lo = float(rng.uniform(-3.0, -0.5))
    hi = float(rng.uniform(0.5, 3.0))
    grid = Grid1D.uniform(lo, hi, n)
    nu = random_histogram(rng, grid, floor=0.05)
    t0 = float(rng.uniform(-0.7, 0.7))
    priors = None
    if with_prior:
        priors = rng.normal(size=(1, n))
        priors /= np.sqrt(np.sum(nu.node_masses * priors[0] ** 2))
    sets = gpca_iter.feasible_sets(grid, t0, priors)
    target = rng.normal(scale=0.5 * (hi - lo), size=n)
    tau = float(rng.uniform(0.05, 5.0))
    return grid, nu, sets, target, tau


def test_prox_v_matches_qp_oracle():
    rng = np.random.default_rng(30)
    for trial in range(12):
        grid, nu, sets, target, tau = random_prox_instance(
            rng, with_prior=trial % 3 == 0)
        got = gpca_iter.prox_v(target, sets, nu.node_masses, grid, tau)
        equalities = (sets.priors * nu.node_masses[None, :]
                      if sets.priors.size else None)
        want = cvxpy_box_slope_projection(
            target, sets.box_lo, sets.box_hi, grid.spacings,
            sets.slope_lo, sets.slope_hi, equalities)
        assert np.max(np.abs(got - want)) < 1e-6


def test_prox_v_is_tau_independent_projection():
    rng = np.random.default_rng(31)
    grid, nu, sets, target, _ = random_prox_instance(rng)
    a = gpca_iter.prox_v(target, sets, nu.node_masses, grid, 0.05)
    b = gpca_iter.prox_v(target, sets, nu.node_masses, grid, 20.0)
    assert np.max(np.abs(a - b)) < 1e-7


def test_feasible_sets_contain_zero_and_respect_endpoints():
    rng = np.random.default_rng(32)
    for _ in range(10):
        n = int(rng.integers(4, 40))
        grid = Grid1D.uniform(-2.0, 2.5, n)
        t0 = float(rng.uniform(-0.9, 0.9))
        sets = gpca_iter.feasible_sets(grid, t0)
        assert np.all(sets.box_lo <= 1e-15)
        assert np.all(sets.box_hi >= -1e-15)
        assert sets.slope_lo <= 0.0 <= sets.slope_hi
        # box edges are where one endpoint map hits the boundary exactly
        for v in (sets.box_lo, sets.box_hi):
            for s in (t0 - 1.0, t0 + 1.0):
                pts = grid.points + s * v
                assert pts.min() >= grid.lo - 1e-9
                assert pts.max() <= grid.hi + 1e-9


def test_gradients_match_central_differences():
    rng = np.random.default_rng(33)
    grid = default_grid(16)
    nu = random_histogram(rng, grid)
    masses = nu.node_masses
    logs = rng.normal(scale=0.3, size=(4, grid.n))
    v = rng.normal(scale=0.3, size=grid.n)
    times = rng.uniform(-0.8, 0.8, 4)
    t0 = 0.25
    grad_v, grad_t = gpca_iter.gradients(v, times, t0, logs, masses)
    step = 1e-6
    fd_v = np.empty_like(v)
    for j in range(grid.n):
        up, dn = v.copy(), v.copy()
        up[j] += step
        dn[j] -= step
        fd_v[j] = (gpca_iter.objective_value(up, times, t0, logs, masses)
                   - gpca_iter.objective_value(dn, times, t0, logs,
                                               masses)) / (2 * step)
    fd_t = np.empty_like(times)
    for i in range(4):
        up, dn = times.copy(), times.copy()
        up[i] += step
        dn[i] -= step
        fd_t[i] = (gpca_iter.objective_value(v, up, t0, logs, masses)
                   - gpca_iter.objective_value(v, dn, t0, logs,
                                               masses)) / (2 * step)
    scale = max(np.max(np.abs(grad_v)), np.max(np.abs(grad_t)), 1.0)
    assert np.max(np.abs(grad_v - fd_v)) / scale < 1e-5
    assert np.max(np.abs(grad_t - fd_t)) / scale < 1e-5


def test_lipschitz_bound_dominates_gradient_growth():
    rng = np.random.default_rng(34)
    grid = default_grid(24)
    nu = random_histogram(rng, grid)
    masses = nu.node_masses
    logs = rng.normal(scale=0.2, size=(5, grid.n))
    alpha = grid.hi - grid.lo
    t0 = 0.3
    bound = gpca_iter.lipschitz_bound_masses(masses, logs, t0, alpha)
    for _ in range(20):
        v = rng.uniform(-0.5 * alpha, 0.5 * alpha, grid.n)
        dv = rng.normal(scale=1e-4, size=grid.n)
        t = rng.uniform(-1.0, 1.0, 5)
        dt = rng.normal(scale=1e-4, size=5)
        g1 = np.concatenate(gpca_iter.gradients(v, t, t0, logs, masses))
        g2 = np.concatenate(gpca_iter.gradients(v + dv, t + dt, t0, logs,
                                                masses))
        move = np.sqrt(np.sum(dv ** 2) + np.sum(dt ** 2))
        assert np.linalg.norm(g2 - g1) <= bound * move * (1 + 1e-9)


def test_project_times_minimizes_over_position():
    rng = np.random.default_rng(35)
    grid = default_grid(32)
    nu = random_histogram(rng, grid)
    masses = nu.node_masses
    v = rng.normal(scale=0.2, size=grid.n)
    logs = rng.normal(scale=0.3, size=(6, grid.n))
    t0 = 0.15
    times = gpca_iter.project_times(logs, v, t0, masses)
    sweep = np.linspace(-1.0, 1.0, 4001)
    for i in range(6):
        best = gpca_iter.objective_value(v, [times[i]], t0, logs[i:i + 1],
                                         masses)
        values = [gpca_iter.objective_value(v, [t], t0, logs[i:i + 1],
                                            masses) for t in sweep]
        assert best <= min(values) + 1e-10
    single = gpca_iter.project_time(logs[0], v, t0, masses)
    assert single == pytest.approx(times[0], abs=1e-12)


def small_dataset(seed, n=10, grid_n=64):
    rng = np.random.default_rng(seed)
    grid = default_grid(grid_n)
    data = [random_histogram(rng, grid) for _ in range(n)]
    bary = core1d.barycenter(data, grid)
    logs = core1d.log_maps_matrix(bary, data)
    return grid, data, bary, logs


def test_fit_component_descends_and_stays_feasible():
    grid, data, bary, logs = small_dataset(36)
    comp = gpca_iter.fit_component(bary, logs, t0=0.2)
    trace = np.asarray(comp.trace)
    assert np.all(np.diff(trace) <= 1e-9)
    for endpoint in (comp.t0 - 1.0, comp.t0 + 1.0):
        assert core1d.map_is_feasible(grid, endpoint * comp.direction,
                                      tol=1e-9)
    want = gpca_iter.objective_value(comp.direction, comp.times, comp.t0,
                                     logs, bary.node_masses) / len(data)
    assert comp.objective == pytest.approx(want, rel=1e-12)
    assert np.all(np.abs(comp.times) <= 1.0 + 1e-12)


def test_fit_gpca_nested_components_are_orthogonal():
    grid, data, bary, logs = small_dataset(37)
    config = FbConfig(t0_grid=tuple(np.linspace(-0.6, 0.6, 5)))
    model = gpca_iter.fit_gpca(data, 2, config, grid=grid)
    masses = model.reference.node_masses
    v1, v2 = model.components[0].direction, model.components[1].direction
    assert abs(float(np.sum(masses * v1 * v2))) < 1e-6
    errors = [gpca_iter.gpca_reconstruction_error(model, data, k)
              for k in (1, 2)]
    assert errors[1] <= errors[0] + 1e-10


def test_search_midpoint_prefers_feasible_minimum():
    grid, data, bary, logs = small_dataset(38, n=8)
    config = FbConfig(t0_grid=tuple(np.linspace(-0.5, 0.5, 5)))
    search = gpca_iter.search_midpoint(bary, logs, config)
    assert len(search.components) == 5
    assert search.t0_values.shape == (5,)
    assert search.feasible.dtype == bool
    assert search.feasible.any()
    feasible_objectives = search.objectives[search.feasible]
    assert search.best.objective == pytest.approx(
        float(np.min(feasible_objectives)), rel=1e-12)


def test_geodesic_coefficients_stay_in_boxes_and_beat_grid():
    rng = np.random.default_rng(39)
    grid = default_grid(48)
    nu = random_histogram(rng, grid)
    masses = nu.node_masses
    dirs = rng.normal(scale=0.1, size=(2, grid.n))
    lo = np.array([-1.3, -0.7])
    hi = np.array([0.7, 1.3])
    logs = rng.normal(scale=0.2, size=(5, grid.n))
    coefs = gpca_iter.geodesic_coefficients(dirs, lo, hi, logs, masses)
    assert np.all(coefs >= lo[None, :] - 1e-12)
    assert np.all(coefs <= hi[None, :] + 1e-12)

    def fit_value(row, coef):
        res = coef @ dirs - row
        return float(np.sum(masses * res * res))

    grid_a = np.linspace(lo[0], hi[0], 41)
    grid_b = np.linspace(lo[1], hi[1], 41)
    for i in range(5):
        best = fit_value(logs[i], coefs[i])
        brute = min(fit_value(logs[i], np.array([a, b]))
                    for a in grid_a for b in grid_b)
        assert best <= brute + 1e-10


def test_location_family_recovers_translation_direction():
    grid = default_grid(128)
    means = 0.4 + np.array([-0.08, -0.04, 0.0, 0.04, 0.08])
    data = location_family(grid, means, 0.35)
    bary = core1d.barycenter(data, grid)
    logs = core1d.log_maps_matrix(bary, data)
    comp = gpca_iter.fit_component(bary, logs, t0=0.0)
    masses = bary.node_masses
    # translation family: the direction is constant where mass lives
    heavy = masses > 1e-4
    spread = np.ptp(comp.direction[heavy])
    mean_level = float(np.mean(comp.direction[heavy]))
    assert spread < 0.05 * abs(mean_level)


def test_fit_component_rejects_bad_inputs():
    grid, data, bary, logs = small_dataset(40, n=4)
    with pytest.raises(ParameterError):
        gpca_iter.fit_component(bary, logs, t0=1.5)
    with pytest.raises(ParameterError):
        FbConfig(eta=-1.0)
    with pytest.raises(ParameterError):
        FbConfig(t0_grid=(0.0, 1.0))
    with pytest.raises(ParameterError):
        gpca_iter.fit_gpca(data, 0, grid=grid)
