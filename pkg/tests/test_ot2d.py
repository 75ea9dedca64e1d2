"""Planar transport and geodesic fitting: LP/QP oracles and invariants."""

import numpy as np
import pytest

from helpers import (cvxpy_field_projection, divergence_matrix,
                     lp_transport_oracle, truncated_gaussian,
                     weighted_cosine)
from wasspca import core1d, gpca_iter, ot2d
from wasspca.core1d import Grid1D, Measure1D
from wasspca.errors import ParameterError, SizeCapError, ValidationError
from wasspca.ot2d import (Fb2dConfig, Grid2D, Measure2D, VelocityField2D,
                          divergence2d, div_bounds, feasible_boxes_2d)

UNIT = ((0.0, 1.0), (0.0, 1.0))


def blob(grid, cx, cy, sx, sy, angle=0.0, floor=0.0):
    xx, yy = np.meshgrid(grid.xs, grid.ys, indexing="ij")
    ca, sa = np.cos(angle), np.sin(angle)
    u = (xx - cx) * ca + (yy - cy) * sa
    w = -(xx - cx) * sa + (yy - cy) * ca
    values = np.exp(-u * u / (2 * sx * sx) - w * w / (2 * sy * sy)) + floor
    return Measure2D.normalized(grid, values)


def random_measure(rng, grid, sparsity=0.0):
    values = rng.uniform(0.1, 1.0, size=grid.shape)
    if sparsity > 0:
        values *= rng.uniform(0.0, 1.0, size=grid.shape) > sparsity
        if values.sum() <= 0:
            values[0, 0] = 1.0
    return Measure2D.normalized(grid, values)


# ---------------------------------------------------------------------------
# exact transport

def test_exact_plan_matches_lp_oracle():
    rng = np.random.default_rng(60)
    for shape in [(2, 2), (2, 3), (3, 3), (4, 2), (4, 4)]:
        grid = Grid2D.uniform(*UNIT, shape)
        for sparsity in (0.0, 0.4):
            mu = random_measure(rng, grid, sparsity)
            nu = random_measure(rng, grid, sparsity)
            plan, cost = ot2d.ot_plan_exact(mu, nu)
            pts = grid.points
            costs = ((pts[:, None, :] - pts[None, :, :]) ** 2).sum(-1)
            _, want = lp_transport_oracle(costs, mu.flat_weights,
                                          nu.flat_weights)
            assert abs(cost - want) <= 1e-8
            mat = plan.matrix
            assert np.max(np.abs(mat.sum(axis=1)
                                 - mu.flat_weights)) <= 1e-9
            assert np.max(np.abs(mat.sum(axis=0)
                                 - nu.flat_weights)) <= 1e-9
            assert mat.min() >= -1e-15


def test_exact_plan_identity_and_two_atoms():
    grid = Grid2D.uniform(*UNIT, (3, 3))
    mu = blob(grid, 0.5, 0.5, 0.3, 0.3)
    plan, cost = ot2d.ot_plan_exact(mu, mu)
    assert cost <= 1e-15
    a = np.zeros((3, 3))
    a[0, 0] = 1.0
    b = np.zeros((3, 3))
    b[2, 1] = 1.0
    mu1 = Measure2D.normalized(grid, a)
    nu1 = Measure2D.normalized(grid, b)
    _, cost = ot2d.ot_plan_exact(mu1, nu1)
    r2 = (grid.xs[2] - grid.xs[0]) ** 2 + (grid.ys[1] - grid.ys[0]) ** 2
    assert cost == pytest.approx(r2, abs=1e-12)
    assert ot2d.wasserstein_distance_2d(mu1, nu1) == pytest.approx(
        np.sqrt(r2), abs=1e-9)


def test_exact_plan_size_cap():
    grid = Grid2D.uniform(*UNIT, (25, 25))
    mu = blob(grid, 0.5, 0.5, 0.3, 0.3, floor=1e-6)
    nu = blob(grid, 0.4, 0.5, 0.3, 0.3, floor=1e-6)
    with pytest.raises(SizeCapError):
        ot2d.ot_plan_exact(mu, nu)


# ---------------------------------------------------------------------------
# divergence and feasibility geometry

def test_divergence_matches_dense_operator():
    rng = np.random.default_rng(61)
    grid = Grid2D.uniform((0.0, 1.0), (0.0, 2.0), (5, 4))
    vx = rng.normal(size=(5, 4))
    vy = rng.normal(size=(5, 4))
    field = VelocityField2D(grid, vx, vy)
    mat = divergence_matrix((5, 4), grid.hx, grid.hy)
    want = (mat @ np.concatenate([vx.ravel(), vy.ravel()])).reshape(5, 4)
    assert np.allclose(divergence2d(field), want, atol=1e-13)


def test_feasible_boxes_pin_boundary_and_allow_zero():
    grid = Grid2D.uniform(*UNIT, (6, 5))
    for t0 in (0.0, 0.35, -0.5):
        blox, bhix, bloy, bhiy = feasible_boxes_2d(grid, t0)
        assert np.all(blox <= 1e-15) and np.all(bhix >= -1e-15)
        assert np.all(bloy <= 1e-15) and np.all(bhiy >= -1e-15)
        # endpoint maps from any box-respecting field stay inside the domain
        for vx in (blox, bhix):
            for s in (t0 - 1.0, t0 + 1.0):
                moved = grid.points[:, 0] + s * vx.ravel()
                assert moved.min() >= grid.xs[0] - 1e-9
                assert moved.max() <= grid.xs[-1] + 1e-9
    blox, bhix, bloy, bhiy = feasible_boxes_2d(grid, 0.0)
    assert np.all(np.abs(blox[0, :]) <= 1e-15)
    assert np.all(np.abs(bhix[-1, :]) <= 1e-15)
    assert np.all(np.abs(bloy[:, 0]) <= 1e-15)
    assert np.all(np.abs(bhiy[:, -1]) <= 1e-15)


def test_div_bounds_shapes():
    lo, hi = div_bounds(0.0)
    assert lo == pytest.approx(-1.0)
    assert hi == pytest.approx(1.0)
    lo, hi = div_bounds(0.5)
    assert lo == pytest.approx(-2.0 / 3.0)
    assert hi == pytest.approx(2.0)


# ---------------------------------------------------------------------------
# field prox

def test_prox_v_2d_fixes_feasible_fields():
    grid = Grid2D.uniform(*UNIT, (7, 7))
    vx = np.zeros((7, 7))
    vy = np.zeros((7, 7))
    vx[2:5, 2:5] = 0.02  # interior bump, divergence well inside bounds
    vy[2:5, 2:5] = -0.015
    field = VelocityField2D(grid, vx, vy)
    out = ot2d.prox_v_2d(field, 0.0, tau=1.0)
    assert np.max(np.abs(out.vx - vx)) < 1e-8
    assert np.max(np.abs(out.vy - vy)) < 1e-8


def test_prox_v_2d_matches_qp_oracle():
    rng = np.random.default_rng(62)
    for t0 in (0.0, 0.3):
        grid = Grid2D.uniform(*UNIT, (3, 4))
        tx = rng.normal(scale=0.3, size=(3, 4))
        ty = rng.normal(scale=0.3, size=(3, 4))
        out = ot2d.prox_v_2d(VelocityField2D(grid, tx, ty), t0, tau=0.7)
        blox, bhix, bloy, bhiy = feasible_boxes_2d(grid, t0)
        lo, hi = div_bounds(t0)
        mat = divergence_matrix((3, 4), grid.hx, grid.hy)
        wx, wy = cvxpy_field_projection(tx, ty, blox, bhix, bloy, bhiy,
                                        mat, lo, hi)
        assert np.max(np.abs(out.vx - wx)) < 1e-5
        assert np.max(np.abs(out.vy - wy)) < 1e-5


def test_prox_v_2d_clips_outward_divergence():
    grid = Grid2D.uniform(*UNIT, (9, 9))
    c = 3.0
    xx, yy = np.meshgrid(grid.xs - 0.5, grid.ys - 0.5, indexing="ij")
    field = VelocityField2D(grid, c * xx, c * yy)  # div = 2c, infeasible
    out = ot2d.prox_v_2d(field, 0.0, tau=1.0)
    lo, hi = div_bounds(0.0)
    div = divergence2d(out)
    assert div.max() <= hi + 1e-6
    assert div.min() >= lo - 1e-6
    assert np.max(np.abs(out.vx - field.vx)) > 1e-3  # projection moved it


# ---------------------------------------------------------------------------
# gradients

def compact_blob(grid, margin):
    reference = blob(grid, 0.5, 0.5, 0.12, 0.12)
    w = reference.weights.copy()
    w[:margin, :] = 0.0  # keep integer shifts from wrapping
    w[-margin:, :] = 0.0
    return Measure2D.normalized(grid, w)


def shift_measure(reference, cells):
    rolled = np.roll(reference.weights, cells, axis=0)
    return Measure2D.normalized(reference.grid, rolled)


def shift_plan(reference, cells):
    size = reference.grid.n_points
    n_cols = reference.grid.shape[1]
    plan = np.zeros((size, size))
    f = reference.flat_weights
    for p in range(size):
        if f[p] == 0.0:
            continue
        i, j = divmod(p, n_cols)
        q = (i + cells) * n_cols + j
        plan[p, q] = f[p]
    return plan


def test_grad_f_2d_zero_at_exact_fit():
    grid = Grid2D.uniform(*UNIT, (9, 9))
    reference = compact_blob(grid, 2)
    shifts = [-2, 0, 2]
    dataset = [shift_measure(reference, k) for k in shifts]
    plans = [shift_plan(reference, k) for k in shifts]
    vx = np.full(grid.shape, 2.0 * grid.hx)
    field = VelocityField2D(grid, vx, np.zeros(grid.shape))
    times = np.array([-1.0, 0.0, 1.0])
    gx, gy, gt = ot2d.grad_F_2d(field, times, 0.0, reference, dataset,
                                plans)
    assert np.max(np.abs(gx)) < 1e-12
    assert np.max(np.abs(gy)) < 1e-12
    assert np.max(np.abs(gt)) < 1e-12


def fixed_plan_cost(points, f, vx, vy, times, t0, dataset, plans):
    total = 0.0
    v = np.column_stack([vx.ravel(), vy.ravel()])
    for nu, plan, t in zip(dataset, plans, times):
        z = points + (t0 + t) * v
        d2 = ((z[:, None, :] - nu.grid.points[None, :, :]) ** 2).sum(-1)
        total += float(np.sum(plan * d2))
    return total


def test_grad_f_2d_matches_central_differences():
    rng = np.random.default_rng(63)
    grid = Grid2D.uniform(*UNIT, (3, 3))
    reference = random_measure(rng, grid)
    dataset = [random_measure(rng, grid) for _ in range(3)]
    vx = rng.normal(scale=0.05, size=grid.shape)
    vy = rng.normal(scale=0.05, size=grid.shape)
    field = VelocityField2D(grid, vx, vy)
    times = rng.uniform(-0.8, 0.8, 3)
    t0 = 0.1
    pts = grid.points
    costs = ((pts[:, None, :] - pts[None, :, :]) ** 2).sum(-1)
    plans = []
    for nu, t in zip(dataset, times):
        z = pts + (t0 + t) * np.column_stack([vx.ravel(), vy.ravel()])
        d2 = ((z[:, None, :] - pts[None, :, :]) ** 2).sum(-1)
        plan, _ = lp_transport_oracle(d2, reference.flat_weights,
                                      nu.flat_weights)
        plans.append(plan)
    gx, gy, gt = ot2d.grad_F_2d(field, times, t0, reference, dataset,
                                plans)
    step = 1e-6

    def value(wx, wy, tt):
        return fixed_plan_cost(pts, reference.flat_weights, wx, wy, tt,
                               t0, dataset, plans)

    for idx in [(0, 0), (1, 2), (2, 1)]:
        up, dn = vx.copy(), vx.copy()
        up[idx] += step
        dn[idx] -= step
        fd = (value(up, vy, times) - value(dn, vy, times)) / (2 * step)
        assert abs(fd - gx[idx]) < 1e-4 * max(1.0, abs(gx[idx]))
        up, dn = vy.copy(), vy.copy()
        up[idx] += step
        dn[idx] -= step
        fd = (value(vx, up, times) - value(vx, dn, times)) / (2 * step)
        assert abs(fd - gy[idx]) < 1e-4 * max(1.0, abs(gy[idx]))
    for i in range(3):
        up, dn = times.copy(), times.copy()
        up[i] += step
        dn[i] -= step
        fd = (value(vx, vy, up) - value(vx, vy, dn)) / (2 * step)
        assert abs(fd - gt[i]) < 1e-4 * max(1.0, abs(gt[i]))


# ---------------------------------------------------------------------------
# entropic barycenter

def test_entropic_barycenter_of_duplicates_is_identity():
    grid = Grid2D.uniform(*UNIT, (10, 10))
    mu = blob(grid, 0.45, 0.55, 0.15, 0.2, floor=1e-6)
    last = np.inf
    for eps in (4e-3, 1e-3, 4e-4):
        bary = ot2d.barycenter2d_entropic([mu, mu], grid, eps)
        tv = 0.5 * float(np.abs(bary.weights - mu.weights).sum())
        assert tv < last  # blur shrinks with the regularizer
        last = tv
    assert last < 1e-3


def test_entropic_barycenter_single_measure():
    grid = Grid2D.uniform(*UNIT, (8, 8))
    mu = blob(grid, 0.5, 0.4, 0.18, 0.15, floor=1e-6)
    bary = ot2d.barycenter2d_entropic([mu], grid, 1e-3)
    tv = 0.5 * float(np.abs(bary.weights - mu.weights).sum())
    assert tv < 1e-3


def centroid(measure):
    pts = measure.grid.points
    return (measure.flat_weights[:, None] * pts).sum(axis=0)


def test_entropic_barycenter_translation_midpoint():
    grid = Grid2D.uniform(*UNIT, (12, 12))
    left = blob(grid, 0.38, 0.5, 0.12, 0.12, floor=1e-8)
    right = blob(grid, 0.62, 0.5, 0.12, 0.12, floor=1e-8)
    bary = ot2d.barycenter2d_entropic([left, right], grid, 4e-3)
    mid = 0.5 * (centroid(left) + centroid(right))
    got = centroid(bary)
    cell = max(grid.hx, grid.hy)
    assert np.max(np.abs(got - mid)) < cell


def test_entropic_barycenter_validation():
    grid = Grid2D.uniform(*UNIT, (6, 6))
    mu = blob(grid, 0.5, 0.5, 0.2, 0.2)
    with pytest.raises(ParameterError):
        ot2d.barycenter2d_entropic([mu], grid, 0.0)
    with pytest.raises(ParameterError):
        ot2d.barycenter2d_entropic([], grid, 1e-2)
    other = Grid2D.uniform((0.0, 2.0), (0.0, 1.0), (6, 6))
    nu = blob(other, 1.0, 0.5, 0.3, 0.2)
    with pytest.raises(ValidationError):
        ot2d.barycenter2d_entropic([mu, nu], grid, 1e-2)


# ---------------------------------------------------------------------------
# component fitting

def test_fit_component_translate_family():
    rng = np.random.default_rng(64)
    grid = Grid2D.uniform(*UNIT, (10, 10))
    shifts = rng.uniform(-0.08, 0.08, 6)
    dataset = [blob(grid, 0.5 + s, 0.5, 0.16, 0.10, floor=1e-4)
               for s in shifts]
    # same-shape reference keeps the optimal maps pure x-translations
    reference = blob(grid, 0.5 + shifts.mean(), 0.5, 0.16, 0.10,
                     floor=1e-4)
    config = Fb2dConfig(max_outer=40)
    comp = ot2d.fit_component_2d(dataset, reference, config=config)
    trace = np.asarray(comp.trace)
    assert np.all(np.diff(trace) <= 1e-6)
    assert comp.feasibility["div_low"] <= 1e-6
    assert comp.feasibility["div_high"] <= 1e-6
    assert comp.feasibility["box"] <= 1e-9
    lo, hi = div_bounds(comp.t0)
    div = divergence2d(comp.vfield)
    assert div.max() <= hi + 1e-6 and div.min() >= lo - 1e-6
    heavy = reference.weights > 1e-3
    vx, vy = comp.vfield.vx, comp.vfield.vy
    # translations move along x only
    assert np.median(np.abs(vy[heavy])) < 0.05 * np.max(np.abs(vx[heavy]))
    assert np.all(np.abs(comp.times) <= 1.0 + 1e-12)


def test_fit_component_single_measure_is_zero_field():
    grid = Grid2D.uniform(*UNIT, (8, 8))
    mu = blob(grid, 0.5, 0.5, 0.15, 0.12, floor=1e-5)
    comp = ot2d.fit_component_2d([mu], mu, config=Fb2dConfig(max_outer=10))
    assert np.max(np.abs(comp.vfield.vx)) < 1e-12
    assert np.max(np.abs(comp.vfield.vy)) < 1e-12


def row_supported_pair(n_x=128, n_rows=3, j0=1):
    grid1 = Grid1D.uniform(0.0, 1.0, n_x)
    means = 0.5 + np.array([-0.06, -0.03, 0.0, 0.02, 0.05, 0.07])
    data1 = [truncated_gaussian(grid1, m, 0.07) for m in means]
    bary1 = core1d.barycenter(data1, grid1)
    grid2 = Grid2D.uniform((0.0, 1.0), (0.0, 1.0), (n_x, n_rows))

    def embed(measure):
        w = np.zeros((n_x, n_rows))
        w[:, j0] = measure.node_masses
        return Measure2D.normalized(grid2, w)

    return grid1, data1, bary1, grid2, [embed(nu) for nu in data1], \
        embed(bary1), j0


def test_row_supported_dataset_reproduces_1d_direction():
    grid1, data1, bary1, grid2, data2, ref2, j0 = row_supported_pair()
    logs1 = core1d.log_maps_matrix(bary1, data1)
    comp1 = gpca_iter.fit_component(bary1, logs1, t0=0.0)
    comp2 = ot2d.fit_component_2d(data2, ref2, t0=0.0,
                                  config=Fb2dConfig(max_outer=200))
    masses = bary1.node_masses
    u1 = comp1.direction / np.sqrt(np.sum(masses * comp1.direction ** 2))
    vx = comp2.vfield.vx[:, j0]
    u2 = vx / np.sqrt(np.sum(masses * vx ** 2))
    if weighted_cosine(masses, u1, u2) < 0:
        u2 = -u2
    gap = np.sqrt(np.sum(masses * (u1 - u2) ** 2))
    assert gap <= 1e-3


# ---------------------------------------------------------------------------
# reconstruction error

def test_reconstruction_error_zero_on_exact_geodesic_data():
    grid = Grid2D.uniform(*UNIT, (9, 9))
    reference = compact_blob(grid, 2)
    dataset = [shift_measure(reference, k) for k in (-2, 0, 2)]
    vx = np.full(grid.shape, 2.0 * grid.hx)
    field = VelocityField2D(grid, vx, np.zeros(grid.shape))
    err = ot2d.reconstruction_error_2d(field, reference, dataset,
                                       samples=11)
    assert err < 1e-12


def test_reconstruction_error_single_measure_at_reference():
    grid = Grid2D.uniform(*UNIT, (7, 7))
    mu = blob(grid, 0.5, 0.5, 0.15, 0.15)
    vx = np.full(grid.shape, 0.5 * grid.hx)
    field = VelocityField2D(grid, vx, np.zeros(grid.shape))
    err = ot2d.reconstruction_error_2d(field, mu, [mu], samples=11)
    assert err < 1e-12  # t = 0 is on the sampling grid
    with pytest.raises(ParameterError):
        ot2d.reconstruction_error_2d(field, mu, [mu], samples=2)


def test_log_pca_2d_translate_family():
    rng = np.random.default_rng(66)
    grid = Grid2D.uniform(*UNIT, (10, 10))
    shifts = np.array([-0.08, -0.04, 0.0, 0.04, 0.08])
    dataset = [blob(grid, 0.5 + s, 0.5, 0.16, 0.10, floor=1e-4)
               for s in shifts]
    reference = ot2d.barycenter2d_entropic(dataset, grid, 4e-3)
    model = ot2d.fit_log_pca_2d(dataset, reference)
    heavy = reference.weights > 1e-3
    dx = model.direction.vx[heavy]
    dy = model.direction.vy[heavy]
    assert np.median(np.abs(dy)) < 0.1 * np.max(np.abs(dx))
    assert model.eigenvalue > 0
    assert model.scores.shape == (5,)
    curve = model.curve_field()
    scale = 1.25 * np.sqrt(model.eigenvalue)
    assert np.allclose(curve.vx, scale * model.direction.vx)


# ---------------------------------------------------------------------------
# validation

def test_types_validate_inputs():
    with pytest.raises(ValidationError):
        Grid2D(np.array([0.0, 0.5, 0.7]), np.array([0.0, 1.0]))
    grid = Grid2D.uniform(*UNIT, (4, 4))
    with pytest.raises(ValidationError):
        Measure2D(grid, -np.ones((4, 4)) / 16.0)
    with pytest.raises(ValidationError):
        Measure2D(grid, np.full((4, 4), 1.0))
    with pytest.raises(ValidationError):
        VelocityField2D(grid, np.full((4, 4), np.nan), np.zeros((4, 4)))
    good = np.full((4, 4), 1.0 / 16.0)
    bad_plan = np.zeros((16, 16))
    with pytest.raises(ValidationError):
        ot2d.TransportPlan(bad_plan, good.ravel(), good.ravel())
    with pytest.raises(ParameterError):
        Fb2dConfig(max_outer=0)
