"""Tangent-space PCA against a dense eigensolver oracle."""

import numpy as np
import pytest

from helpers import default_grid, location_family, random_histogram
from wasspca import core1d, logpca
from wasspca.errors import ParameterError


def dense_pca_oracle(logs, masses, k):
    """Top-k spectrum of the uncentered second-moment operator.

    Symmetrizes with sqrt-mass scaling and calls a full eigensolver, so it
    shares no code with the Gram-based implementation under test.
    """
    root = np.sqrt(masses)
    sym = (root[:, None] * (logs.T @ logs) * root[None, :]) / logs.shape[0]
    vals, vecs = np.linalg.eigh(sym)
    order = np.argsort(vals)[::-1][:k]
    vals = vals[order]
    dirs = np.where(root > 0, 1.0 / np.where(root > 0, root, 1.0),
                    0.0)[None, :] * vecs[:, order].T
    return vals, dirs


def make_dataset(seed, n=8, grid_n=128):
    rng = np.random.default_rng(seed)
    grid = default_grid(grid_n)
    data = [random_histogram(rng, grid) for _ in range(n)]
    bary = core1d.barycenter(data, grid)
    return grid, data, bary


def test_spectrum_matches_dense_oracle():
    grid, data, bary = make_dataset(20)
    model = logpca.fit_log_pca(data, 3, grid=grid)
    logs = core1d.log_maps_matrix(model.reference, data)
    masses = model.reference.node_masses
    want_vals, want_dirs = dense_pca_oracle(logs, masses, 3)
    assert np.allclose(model.eigenvalues, want_vals, rtol=1e-8, atol=1e-12)
    for k in range(3):
        align = abs(float(np.sum(masses * model.directions[k]
                                 * want_dirs[k])))
        assert align == pytest.approx(1.0, abs=1e-6)


def test_directions_orthonormal_in_reference_metric():
    grid, data, bary = make_dataset(21)
    model = logpca.fit_log_pca(data, 4, grid=grid)
    masses = model.reference.node_masses
    gram = (model.directions * masses) @ model.directions.T
    assert np.allclose(gram, np.eye(4), atol=1e-8)


def test_scores_are_weighted_projections():
    grid, data, bary = make_dataset(22)
    model = logpca.fit_log_pca(data, 2, grid=grid)
    logs = core1d.log_maps_matrix(model.reference, data)
    masses = model.reference.node_masses
    want = (logs * masses) @ model.directions.T
    assert np.allclose(model.scores, want, atol=1e-10)


def test_eigenvalue_sum_near_mean_squared_norm():
    # k is capped at n-1; the dropped eigenvalue is the residual of the
    # near-zero mean log map, so the trace identity holds up to that term
    grid, data, bary = make_dataset(23, n=5)
    model = logpca.fit_log_pca(data, 4, grid=grid)
    logs = core1d.log_maps_matrix(model.reference, data)
    masses = model.reference.node_masses
    trace = float(np.mean(np.sum(logs * logs * masses, axis=1)))
    total = float(np.sum(model.eigenvalues))
    assert total <= trace + 1e-12
    assert total >= trace * (1.0 - 1e-2)
    want_vals, _ = dense_pca_oracle(logs, masses, 4)
    assert total == pytest.approx(float(np.sum(want_vals)), rel=1e-10)


def test_orientation_largest_score_positive():
    grid, data, bary = make_dataset(24)
    model = logpca.fit_log_pca(data, 3, grid=grid)
    for k in range(3):
        column = model.scores[:, k]
        assert column[np.argmax(np.abs(column))] >= 0


def test_reconstruction_error_nonincreasing_in_k():
    grid, data, bary = make_dataset(25, n=7)
    model = logpca.fit_log_pca(data, 4, grid=grid)
    errors = [logpca.logpca_reconstruction_error(model, data, k)
              for k in range(1, 5)]
    assert all(errors[i + 1] <= errors[i] + 1e-12
               for i in range(len(errors) - 1))


def test_location_family_is_rank_one():
    grid = default_grid(256)
    means = [-0.9, -0.45, 0.0, 0.45, 0.9]
    data = location_family(grid, means, 0.4)
    model = logpca.fit_log_pca(data, 2, grid=grid)
    # one direction explains translations; the rest is discretization noise
    assert model.eigenvalues[0] > 1e-2
    assert model.eigenvalues[1] < 1e-3 * model.eigenvalues[0]
    err = logpca.logpca_reconstruction_error(model, data, 1)
    assert err < 5e-3


def test_component_count_validated():
    grid, data, bary = make_dataset(26, n=4)
    with pytest.raises(ParameterError):
        logpca.fit_log_pca(data, 0, grid=grid)
    with pytest.raises(ParameterError):
        logpca.fit_log_pca(data, 5, grid=grid)
