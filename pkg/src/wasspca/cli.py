"""Command-line front end: ingestion, synthesis, pipelines, artifacts.

Subcommands map to the library's pipelines: ``barycenter``, ``logpca``,
``gpca-iter``, ``gpca-surface``, ``gpca-2d``, ``compare`` and ``synth``.
Every run validates its configuration up front, then writes a ``result.json``
plus CSV mirrors into the output directory. All files embed the schema
version and the full configuration, and identical configurations with
identical seeds produce byte-identical artifacts.

Exit codes: 0 on success, 1 on validation problems (flags, files, shapes),
2 on compute failures. Non-convergence of a fit is not a failure; the flags
land in the artifacts. The default output directory comes from the
``WASSPCA_OUT`` environment variable, falling back to ``./wasspca-out``.
"""

import argparse
import contextlib
import csv
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass, field

import numpy as np

from . import core1d, gpca_iter, gpca_surface, logpca, ot2d
from .core1d import Grid1D, Measure1D
from .errors import ParameterError, ValidationError, WassPcaError
from .gpca_iter import FbConfig
from .ot2d import Fb2dConfig, Grid2D, Measure2D

SCHEMA_VERSION = "1"
_SWEEP_COUNT = 11

log = logging.getLogger("wasspca")


@dataclass
class RunConfig:
    """Validated settings for one run, embedded verbatim in every artifact."""

    command: str
    inputs: list = field(default_factory=list)
    out_dir: str = ""
    omega: list = field(default_factory=lambda: [-3.0, 3.0])
    grid_size: list = field(default_factory=lambda: [256])
    n_components: int = 2
    t0_count: int = 21
    t0_list: list = None
    eta: float = 1e-6
    max_outer: int = 4000
    max_inner: int = 2000
    quad: int = 10000
    epsilon: float = 4e-3
    samples: int = 11
    seed: int = 0
    n_synth: int = 100
    kind: str = "gaussian-location-scale"
    dim: int = 1
    synthetic: bool = False

    def validate(self):
        if self.dim not in (1, 2):
            raise ParameterError("dim must be 1 or 2")
        if self.dim == 1:
            if len(self.omega) != 2 or not self.omega[0] < self.omega[1]:
                raise ParameterError("omega must be two increasing numbers")
            if len(self.grid_size) != 1 or self.grid_size[0] < 2:
                raise ParameterError("grid size must be one integer >= 2")
        else:
            if len(self.omega) not in (2, 4):
                raise ParameterError(
                    "planar omega takes 2 numbers (shared per axis) or 4")
            if len(self.omega) == 2 and not self.omega[0] < self.omega[1]:
                raise ParameterError("omega must increase")
            if len(self.omega) == 4 and not (
                    self.omega[0] < self.omega[1]
                    and self.omega[2] < self.omega[3]):
                raise ParameterError("omega must increase along both axes")
            if len(self.grid_size) != 2 or min(self.grid_size) < 2:
                raise ParameterError("planar grid size must be two "
                                     "integers >= 2")
        if self.n_components < 1:
            raise ParameterError("need at least one component")
        if self.t0_count < 1:
            raise ParameterError("midpoint grid needs at least one point")
        if self.t0_list is not None:
            if any(not -1 < t < 1 for t in self.t0_list):
                raise ParameterError(
                    "every midpoint must lie strictly inside (-1, 1)")
        if self.quad < 100:
            raise ParameterError("quadrature size must be at least 100")
        if self.epsilon <= 0:
            raise ParameterError("epsilon must be positive")
        if self.samples < 3:
            raise ParameterError("need at least 3 curve samples")
        if self.n_synth < 1 and (self.synthetic
                                 or self.command == "synth"):
            raise ParameterError("synthetic datasets need n >= 1")
        if self.command == "synth":
            expected = 2 if self.kind == "blobs-2d" else 1
            if self.dim != expected:
                raise ParameterError(
                    f"kind '{self.kind}' generates {expected}d data")
        if not self.inputs and not self.synthetic \
                and self.command not in ("synth",):
            raise ParameterError(
                "provide --input/--inputs or ask for --synthetic data")
        if self.command not in _PIPELINES:
            raise ParameterError(f"unknown command '{self.command}'")
        return self

    def as_dict(self):
        data = asdict(self)
        del data["out_dir"]  # output location, not part of the computation
        return data


def _fb_config(config):
    return FbConfig(eta=config.eta, max_outer=config.max_outer,
                    max_inner=config.max_inner,
                    t0_grid=tuple(np.linspace(-0.95, 0.95, config.t0_count)))


# ---------------------------------------------------------------------------
# ingestion

def ingest_histograms(path):
    """Read a CSV shaped `x,<name>,...` into measures on a shared grid.

    Columns are normalized to unit integral; a renormalization beyond
    rounding gets logged. Errors carry 1-based row numbers.
    """
    with open(path, newline="") as handle:
        raw = list(csv.reader(handle))
    kept = [(no, row) for no, row in enumerate(raw, start=1)
            if row and any(cell.strip() for cell in row)
            and not row[0].lstrip().startswith("#")]
    if len(kept) < 3:
        raise ValidationError(f"{path}: need a header and at least 2 rows")
    header = [c.strip() for c in kept[0][1]]
    if len(header) < 2:
        raise ValidationError(f"{path}: need a grid column and at least "
                              "one histogram column")
    names = header[1:]
    body = []
    numbers = []
    for no, row in kept[1:]:
        if len(row) != len(header):
            raise ValidationError(
                f"{path}: row {no} has {len(row)} cells, "
                f"expected {len(header)}")
        try:
            body.append([float(c) for c in row])
        except ValueError as err:
            raise ValidationError(
                f"{path}: row {no} is not numeric: {err}") from None
        numbers.append(no)
    table = np.asarray(body)
    xs = table[:, 0]
    bad = np.flatnonzero(np.diff(xs) <= 0)
    if bad.size:
        raise ValidationError(
            f"{path}: grid not strictly increasing at row "
            f"{numbers[int(bad[0]) + 1]}")
    grid = Grid1D(xs)
    dataset = []
    for k, name in enumerate(names):
        col = table[:, k + 1]
        neg = np.flatnonzero(col < 0)
        if neg.size:
            raise ValidationError(
                f"{path}: column '{name}' negative at row "
                f"{numbers[int(neg[0])]}")
        total = float(np.sum(grid.node_weights * col))
        if total <= 0:
            raise ValidationError(f"{path}: column '{name}' is empty")
        if abs(total - 1.0) > 1e-9:
            log.warning("column '%s' renormalized from integral %.6g",
                        name, total)
        dataset.append(Measure1D.from_values(grid, col))
    return grid, dataset, names


def ingest_histograms_2d(paths, omega):
    """Read one `i,j,weight` CSV per measure onto one shared lattice."""
    if not paths:
        raise ValidationError("no planar input files given")
    shapes = []
    coords = []
    for path in paths:
        with open(path, newline="") as handle:
            raw = list(csv.reader(handle))
        kept = [(no, row) for no, row in enumerate(raw, start=1)
                if row and any(cell.strip() for cell in row)
                and not row[0].lstrip().startswith("#")]
        if kept and not kept[0][1][0].strip().lstrip("-").isdigit():
            kept = kept[1:]
        if not kept:
            raise ValidationError(f"{path}: no data rows")
        triples = []
        seen = set()
        for no, row in kept:
            if len(row) != 3:
                raise ValidationError(
                    f"{path}: row {no} needs i,j,weight")
            try:
                i, j, w = int(row[0]), int(row[1]), float(row[2])
            except ValueError as err:
                raise ValidationError(
                    f"{path}: row {no} is not numeric: {err}") from None
            if i < 0 or j < 0:
                raise ValidationError(
                    f"{path}: row {no} has negative indices")
            if w < 0:
                raise ValidationError(
                    f"{path}: row {no} has a negative weight")
            if (i, j) in seen:
                raise ValidationError(
                    f"{path}: row {no} repeats cell ({i}, {j})")
            seen.add((i, j))
            triples.append((i, j, w))
        m = max(t[0] for t in triples) + 1
        n = max(t[1] for t in triples) + 1
        shapes.append((m, n))
        coords.append(triples)
    if len(set(shapes)) > 1:
        raise ValidationError(
            f"input grids disagree: {sorted(set(shapes))}; all measures "
            "must share one lattice")
    m, n = shapes[0]
    if len(omega) == 2:
        omega = [omega[0], omega[1], omega[0], omega[1]]
    grid = Grid2D.uniform((omega[0], omega[1]), (omega[2], omega[3]), (m, n))
    dataset = []
    for path, triples in zip(paths, coords):
        w = np.zeros((m, n))
        for i, j, value in triples:
            w[i, j] = value
        total = float(w.sum())
        if total <= 0:
            raise ValidationError(f"{path}: measure has no mass")
        if abs(total - 1.0) > 1e-9:
            log.warning("%s renormalized from total %.6g", path, total)
        dataset.append(Measure2D.normalized(grid, w))
    return grid, dataset


# ---------------------------------------------------------------------------
# synthesis

def generate_synthetic(n, seed, omega=(-3.0, 3.0), grid_size=256):
    """Seeded truncated-Gaussian location-scale family with a density floor."""
    if n < 1:
        raise ParameterError("synthetic datasets need n >= 1")
    rng = np.random.default_rng(seed)
    lo, hi = float(omega[0]), float(omega[1])
    width = hi - lo
    grid = Grid1D.uniform(lo, hi, grid_size)
    x = grid.points
    means = rng.uniform(lo + 0.30 * width, hi - 0.30 * width, size=n)
    sds = rng.uniform(0.05 * width, 0.12 * width, size=n)
    dataset = []
    for m, s in zip(means, sds):
        values = np.exp(-0.5 * ((x - m) / s) ** 2) + 1e-4
        dataset.append(Measure1D.from_values(grid, values))
    return grid, dataset, means, sds


def generate_synthetic_2d(n, seed, omega=(0.0, 1.0), shape=(12, 12)):
    """Seeded anisotropic blobs, randomly translated and rotated."""
    if n < 1:
        raise ParameterError("synthetic datasets need n >= 1")
    rng = np.random.default_rng(seed)
    if len(omega) == 2:
        omega = [omega[0], omega[1], omega[0], omega[1]]
    grid = Grid2D.uniform((omega[0], omega[1]), (omega[2], omega[3]), shape)
    xx, yy = np.meshgrid(grid.xs, grid.ys, indexing="ij")
    wx = omega[1] - omega[0]
    wy = omega[3] - omega[2]
    cx0, cy0 = omega[0] + 0.5 * wx, omega[2] + 0.5 * wy
    s1, s2 = 0.16 * wx, 0.07 * wy
    dataset = []
    for _ in range(n):
        cx = cx0 + rng.uniform(-0.10, 0.10) * wx
        cy = cy0 + rng.uniform(-0.05, 0.05) * wy
        ang = rng.uniform(-0.5, 0.5)
        ca, sa = np.cos(ang), np.sin(ang)
        u = (xx - cx) * ca + (yy - cy) * sa
        w = -(xx - cx) * sa + (yy - cy) * ca
        values = np.exp(-u * u / (2 * s1 * s1)
                        - w * w / (2 * s2 * s2)) + 1e-4
        dataset.append(Measure2D.normalized(grid, values))
    return grid, dataset


# ---------------------------------------------------------------------------
# artifacts

def _np_default(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def _config_json(config):
    return json.dumps(config.as_dict(), sort_keys=True, default=_np_default)


def _write_json(path, config, results):
    payload = {"schema_version": SCHEMA_VERSION,
               "config": config.as_dict(),
               "results": results}
    with open(path, "w") as handle:
        json.dump(payload, handle, sort_keys=True, indent=1,
                  default=_np_default)
        handle.write("\n")


def _write_csv(path, config, header, rows):
    with open(path, "w", newline="") as handle:
        handle.write(f"# schema_version: {SCHEMA_VERSION}\n")
        handle.write(f"# config: {_config_json(config)}\n")
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            # float() strips numpy scalar reprs before formatting
            writer.writerow([repr(float(c)) if isinstance(c, float) else c
                             for c in row])


@contextlib.contextmanager
def _stage(name):
    # failing stage is named so errors point at the pipeline step
    try:
        yield
    except WassPcaError as err:
        message = err.args[0] if err.args else str(err)
        err.args = (f"stage '{name}': {message}",) + err.args[1:]
        raise


def _sweep_rows(method, index, reference, t0, direction):
    rows = []
    for t in np.linspace(-1.0, 1.0, _SWEEP_COUNT):
        measure = core1d.exp_map(reference, (t0 + t) * direction)
        for x, d in zip(measure.grid.points, measure.density):
            rows.append([method, index, float(t), float(x), float(d)])
    return rows


def _component_payload(comp):
    return {"t0": comp.t0,
            "objective": comp.objective,
            "direction": comp.direction.tolist(),
            "times": comp.times.tolist(),
            "converged": bool(comp.converged),
            "stop_reason": comp.stop_reason,
            "trace": np.asarray(comp.trace).tolist()}


def _logpca_payload(model, dataset, k_max, quad):
    errors = [float(logpca.logpca_reconstruction_error(model, dataset, k,
                                                       quad))
              for k in range(1, k_max + 1)]
    return {"eigenvalues": model.eigenvalues.tolist(),
            "scores": model.scores.tolist(),
            "directions": model.directions.tolist(),
            "reconstruction_errors": errors}


def _logpca_sweeps(model):
    rows = []
    for k in range(model.n_components):
        amp = float(np.sqrt(max(model.eigenvalues[k], 0.0)))
        rows += _sweep_rows("logpca", k + 1, model.reference, 0.0,
                            amp * model.directions[k])
    return rows


# ---------------------------------------------------------------------------
# pipelines

def _load_1d(config):
    if config.synthetic:
        grid, dataset, _, _ = generate_synthetic(
            config.n_synth, config.seed, tuple(config.omega),
            config.grid_size[0])
        names = [f"synthetic_{i:03d}" for i in range(len(dataset))]
        return grid, dataset, names
    grid, dataset, names = ingest_histograms(config.inputs[0])
    return grid, dataset, names


def _load_2d(config):
    if config.synthetic:
        return generate_synthetic_2d(config.n_synth, config.seed,
                                     tuple(config.omega),
                                     tuple(config.grid_size))
    return ingest_histograms_2d(config.inputs, config.omega)


def _run_barycenter(config, out):
    with _stage("ingest"):
        grid, dataset, _ = _load_1d(config)
    with _stage("barycenter"):
        reference = core1d.barycenter(dataset, grid, config.quad)
    _write_json(os.path.join(out, "result.json"), config,
                {"grid": reference.grid.points.tolist(),
                 "density": reference.density.tolist()})
    _write_csv(os.path.join(out, "barycenter.csv"), config, ["x", "density"],
               [[float(x), float(d)] for x, d
                in zip(reference.grid.points, reference.density)])


def _run_logpca(config, out):
    with _stage("ingest"):
        grid, dataset, _ = _load_1d(config)
    with _stage("log-pca"):
        model = logpca.fit_log_pca(dataset, config.n_components,
                                   config.quad, grid)
        payload = _logpca_payload(model, dataset, config.n_components,
                                  config.quad)
    _write_json(os.path.join(out, "result.json"), config,
                {"barycenter": model.reference.density.tolist(),
                 "grid": model.reference.grid.points.tolist(),
                 "logpca": payload})
    _write_csv(os.path.join(out, "barycenter.csv"), config, ["x", "density"],
               [[float(x), float(d)] for x, d
                in zip(model.reference.grid.points,
                       model.reference.density)])
    _write_csv(os.path.join(out, "re_table.csv"), config, ["k", "logpca"],
               [[k + 1, float(payload["reconstruction_errors"][k])]
                for k in range(config.n_components)])
    _write_csv(os.path.join(out, "sweeps.csv"), config, _SWEEP_HEADER,
               _logpca_sweeps(model))


def _iter_artifacts(config, model, dataset, reference):
    """Payload plus trace, sweep and midpoint-curve rows for the CSVs."""
    errors = [gpca_iter.gpca_reconstruction_error(model, dataset, k,
                                                  config.quad)
              for k in range(1, model.n_components + 1)]
    curves = []
    for search in model.searches or []:
        curves.append({"t0_values": search.t0_values.tolist(),
                       "objectives": search.objectives.tolist(),
                       "feasible": search.feasible.astype(bool).tolist()})
    payload = {"components": [_component_payload(c)
                              for c in model.components],
               "reconstruction_errors": errors,
               "midpoint_curves": curves}
    trace_rows = []
    for k, comp in enumerate(model.components, start=1):
        for it, value in enumerate(np.asarray(comp.trace)):
            trace_rows.append(["gpca-iter", k, it, float(value)])
    t0_rows = None
    if model.searches:
        first = model.searches[0]
        re_curve = []
        for comp in first.components:
            single = gpca_iter.GpcaModel(reference, [comp])
            re_curve.append(float(gpca_iter.gpca_reconstruction_error(
                single, dataset, 1, config.quad)))
        payload["midpoint_re_curve"] = re_curve
        t0_rows = [[float(t), float(o), float(r), int(fz)]
                   for t, o, r, fz in zip(first.t0_values, first.objectives,
                                          re_curve, first.feasible)]
    sweep_rows = []
    for k, comp in enumerate(model.components, start=1):
        sweep_rows += _sweep_rows("gpca-iter", k, reference, comp.t0,
                                  comp.direction)
    return payload, trace_rows, sweep_rows, t0_rows


_TRACE_HEADER = ["method", "component", "iteration", "objective"]
_SWEEP_HEADER = ["method", "component", "t", "x", "density"]
_T0_HEADER = ["t0", "objective", "reconstruction_error", "feasible"]


def _run_gpca_iter(config, out):
    with _stage("ingest"):
        grid, dataset, _ = _load_1d(config)
    with _stage("gpca-iter"):
        model = gpca_iter.fit_gpca(dataset, config.n_components,
                                   _fb_config(config), config.quad, grid,
                                   keep_searches=True)
        payload, trace_rows, sweep_rows, t0_rows = _iter_artifacts(
            config, model, dataset, model.reference)
    _write_json(os.path.join(out, "result.json"), config,
                {"barycenter": model.reference.density.tolist(),
                 "grid": model.reference.grid.points.tolist(),
                 "gpca_iter": payload})
    _write_csv(os.path.join(out, "re_table.csv"), config, ["k", "gpca_iter"],
               [[k + 1, float(payload["reconstruction_errors"][k])]
                for k in range(model.n_components)])
    _write_csv(os.path.join(out, "traces.csv"), config, _TRACE_HEADER,
               trace_rows)
    _write_csv(os.path.join(out, "sweeps.csv"), config, _SWEEP_HEADER,
               sweep_rows)
    if t0_rows is not None:
        _write_csv(os.path.join(out, "t0_curve.csv"), config, _T0_HEADER,
                   t0_rows)


def _surface_payload(model, error):
    return {"midpoints": model.midpoints.tolist(),
            "directions": model.directions.tolist(),
            "alphas": model.alphas.tolist(),
            "objective": model.objective,
            "converged": bool(model.converged),
            "stop_reason": model.stop_reason,
            "trace": np.asarray(model.trace).tolist(),
            "reconstruction_error": error}


def _run_gpca_surface(config, out):
    with _stage("ingest"):
        grid, dataset, _ = _load_1d(config)
    with _stage("barycenter"):
        reference = core1d.barycenter(dataset, grid, config.quad)
        logs = core1d.log_maps_matrix(reference, dataset)
    with _stage("gpca-surface"):
        midpoints = (config.t0_list if config.t0_list is not None
                     else [0.0] * config.n_components)
        model = gpca_surface.fit_surface(reference, logs, midpoints,
                                         _fb_config(config))
        error = gpca_surface.surface_reconstruction_error(model, dataset,
                                                          config.quad)
    payload = _surface_payload(model, error)
    _write_json(os.path.join(out, "result.json"), config,
                {"barycenter": reference.density.tolist(),
                 "grid": reference.grid.points.tolist(),
                 "gpca_surface": payload})
    _write_csv(os.path.join(out, "traces.csv"), config, _TRACE_HEADER,
               _surface_trace_rows(model))
    _write_csv(os.path.join(out, "sweeps.csv"), config, _SWEEP_HEADER,
               _surface_sweeps(model, reference))


def _surface_trace_rows(model):
    return [["gpca-surface", 0, it, float(val)]
            for it, val in enumerate(np.asarray(model.trace))]


def _surface_sweeps(model, reference):
    rows = []
    for k in range(model.directions.shape[0]):
        rows += _sweep_rows("gpca-surface", k + 1, reference,
                            float(model.midpoints[k]), model.directions[k])
    return rows


def _run_gpca_2d(config, out):
    with _stage("ingest"):
        grid, dataset = _load_2d(config)
    with _stage("barycenter-2d"):
        reference = ot2d.barycenter2d_entropic(dataset, grid, config.epsilon)
    with _stage("gpca-2d"):
        fb = Fb2dConfig(eta=config.eta, max_outer=config.max_outer,
                        max_inner=config.max_inner)
        component = ot2d.fit_component_2d(dataset, reference, config=fb)
    with _stage("log-pca-analog-2d"):
        analog = ot2d.fit_log_pca_2d(dataset, reference)
    with _stage("reconstruction-2d"):
        re_g = ot2d.reconstruction_error_2d(component, reference, dataset,
                                            config.samples)
        re_l = ot2d.reconstruction_error_2d(analog.curve_field(), reference,
                                            dataset, config.samples)
    _write_json(os.path.join(out, "result.json"), config, {
        "barycenter_weights": reference.weights.tolist(),
        "field": {"vx": component.vfield.vx.tolist(),
                  "vy": component.vfield.vy.tolist()},
        "t0": component.t0,
        "times": component.times.tolist(),
        "objective": component.objective,
        "converged": bool(component.converged),
        "stop_reason": component.stop_reason,
        "trace": np.asarray(component.trace).tolist(),
        "feasibility": component.feasibility,
        "analog_eigenvalue": analog.eigenvalue,
        "reconstruction_errors": {"gpca": re_g, "logpca_analog": re_l}})
    m, n = grid.shape
    _write_csv(os.path.join(out, "barycenter2d.csv"), config,
               ["i", "j", "x", "y", "weight"],
               [[i, j, float(grid.xs[i]), float(grid.ys[j]),
                 float(reference.weights[i, j])]
                for i in range(m) for j in range(n)])
    _write_csv(os.path.join(out, "field2d.csv"), config,
               ["i", "j", "x", "y", "vx", "vy"],
               [[i, j, float(grid.xs[i]), float(grid.ys[j]),
                 float(component.vfield.vx[i, j]),
                 float(component.vfield.vy[i, j])]
                for i in range(m) for j in range(n)])
    _write_csv(os.path.join(out, "re_table.csv"), config,
               ["method", "reconstruction_error"],
               [["gpca", float(re_g)], ["logpca_analog", float(re_l)]])
    _write_csv(os.path.join(out, "traces.csv"), config,
               ["method", "component", "iteration", "objective"],
               [["gpca-2d", 1, it, float(val)]
                for it, val in enumerate(np.asarray(component.trace))])


def _run_compare(config, out):
    with _stage("ingest"):
        grid, dataset, _ = _load_1d(config)
    with _stage("log-pca"):
        lp_model = logpca.fit_log_pca(dataset, config.n_components,
                                      config.quad, grid)
        lp_payload = _logpca_payload(lp_model, dataset, config.n_components,
                                     config.quad)
    with _stage("gpca-iter"):
        it_model = gpca_iter.fit_gpca(dataset, config.n_components,
                                      _fb_config(config), config.quad, grid,
                                      keep_searches=True)
        it_payload, trace_rows, sweep_rows, t0_rows = _iter_artifacts(
            config, it_model, dataset, it_model.reference)
    with _stage("gpca-surface"):
        reference = it_model.reference
        logs = core1d.log_maps_matrix(reference, dataset)
        midpoints = it_model.midpoints
        surf_errors = []
        surf_payload = None
        surf_model = None
        for k in range(1, config.n_components + 1):
            surf_model = gpca_surface.fit_surface(reference, logs,
                                                  midpoints[:k],
                                                  _fb_config(config))
            err = float(gpca_surface.surface_reconstruction_error(
                surf_model, dataset, config.quad))
            surf_errors.append(err)
            surf_payload = _surface_payload(surf_model, err)
    re_table = {"logpca": lp_payload["reconstruction_errors"],
                "gpca_iter": it_payload["reconstruction_errors"],
                "gpca_surface": surf_errors}
    _write_json(os.path.join(out, "result.json"), config,
                {"barycenter": reference.density.tolist(),
                 "grid": reference.grid.points.tolist(),
                 "logpca": lp_payload,
                 "gpca_iter": it_payload,
                 "gpca_surface": surf_payload,
                 "re_table": re_table})
    _write_csv(os.path.join(out, "barycenter.csv"), config, ["x", "density"],
               [[float(x), float(d)] for x, d
                in zip(reference.grid.points, reference.density)])
    _write_csv(os.path.join(out, "re_table.csv"), config,
               ["k", "logpca", "gpca_iter", "gpca_surface"],
               [[k + 1, float(re_table["logpca"][k]),
                 float(re_table["gpca_iter"][k]),
                 float(re_table["gpca_surface"][k])]
                for k in range(config.n_components)])
    _write_csv(os.path.join(out, "traces.csv"), config, _TRACE_HEADER,
               trace_rows + _surface_trace_rows(surf_model))
    _write_csv(os.path.join(out, "sweeps.csv"), config, _SWEEP_HEADER,
               _logpca_sweeps(lp_model) + sweep_rows
               + _surface_sweeps(surf_model, reference))
    if t0_rows is not None:
        _write_csv(os.path.join(out, "t0_curve.csv"), config, _T0_HEADER,
                   t0_rows)


def _run_synth(config, out):
    if config.dim == 1:
        grid, dataset, means, sds = generate_synthetic(
            config.n_synth, config.seed, tuple(config.omega),
            config.grid_size[0])
        names = [f"synthetic_{i:03d}" for i in range(len(dataset))]
        path = os.path.join(out, "dataset.csv")
        rows = []
        for r in range(grid.n):
            rows.append([float(grid.points[r])]
                        + [float(nu.density[r]) for nu in dataset])
        _write_csv(path, config, ["x"] + names, rows)
        _write_json(os.path.join(out, "manifest.json"), config,
                    {"files": ["dataset.csv"],
                     "means": means.tolist(), "sds": sds.tolist()})
    else:
        grid, dataset = generate_synthetic_2d(
            config.n_synth, config.seed, tuple(config.omega),
            tuple(config.grid_size))
        files = []
        m, n = grid.shape
        for index, nu in enumerate(dataset):
            name = f"measure_{index:03d}.csv"
            files.append(name)
            _write_csv(os.path.join(out, name), config, ["i", "j", "weight"],
                       [[i, j, float(nu.weights[i, j])]
                        for i in range(m) for j in range(n)])
        _write_json(os.path.join(out, "manifest.json"), config,
                    {"files": files})


_PIPELINES = {
    "barycenter": _run_barycenter,
    "logpca": _run_logpca,
    "gpca-iter": _run_gpca_iter,
    "gpca-surface": _run_gpca_surface,
    "gpca-2d": _run_gpca_2d,
    "compare": _run_compare,
    "synth": _run_synth,
}


def run_pipeline(config):
    """Validate, run the named pipeline, write artifacts, list the files."""
    config.validate()
    out = config.out_dir or os.environ.get("WASSPCA_OUT", "wasspca-out")
    config.out_dir = out
    os.makedirs(out, exist_ok=True)
    _PIPELINES[config.command](config, out)
    return sorted(f for f in os.listdir(out)
                  if f.endswith((".json", ".csv")))


# ---------------------------------------------------------------------------
# argument handling

class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad flags; bad flags are validation problems
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _add_common(parser, dim):
    # 2d fits stop on the outer cap; keep its defaults at the kernel scale
    parser.add_argument("--out", default="", help="output directory "
                        "(default from WASSPCA_OUT)")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--synthetic", action="store_true",
                        help="generate the input dataset instead of reading")
    parser.add_argument("--n-synth", type=int, default=100,
                        help="synthetic dataset size")
    parser.add_argument("--omega", type=float, nargs="+",
                        default=None, help="working interval bounds")
    parser.add_argument("--grid-size", type=int, nargs="+", default=None)
    parser.add_argument("--n-components", type=int, default=2)
    parser.add_argument("--eta", type=float,
                        default=1e-6 if dim == 1 else 1e-5)
    parser.add_argument("--max-outer", type=int,
                        default=4000 if dim == 1 else 200)
    parser.add_argument("--max-inner", type=int,
                        default=2000 if dim == 1 else 20000)
    parser.add_argument("--quad", type=int, default=10000)
    parser.add_argument("--t0-count", type=int, default=21,
                        help="midpoint candidates for the iterative fit")
    if dim == 2:
        parser.add_argument("--epsilon", type=float, default=4e-3)
        parser.add_argument("--samples", type=int, default=11)


def build_parser():
    parser = _Parser(prog="wasspca",
                     description="Geodesic PCA of histogram datasets "
                                 "in the 2-Wasserstein metric")
    sub = parser.add_subparsers(dest="command", required=True,
                                parser_class=_Parser)

    for name in ("barycenter", "logpca", "gpca-iter", "gpca-surface",
                 "compare"):
        p = sub.add_parser(name)
        p.add_argument("--input", default=None, help="histogram CSV "
                       "(columns x,<name>,...)")
        _add_common(p, dim=1)
        if name == "gpca-surface":
            p.add_argument("--t0-list", type=float, nargs="+", default=None,
                           help="one midpoint per direction")

    p = sub.add_parser("gpca-2d")
    p.add_argument("--inputs", nargs="*", default=[],
                   help="one i,j,weight CSV per measure")
    _add_common(p, dim=2)

    p = sub.add_parser("synth")
    p.add_argument("--dim", type=int, default=1, choices=(1, 2))
    _add_common(p, dim=1)
    p.add_argument("--kind", default="gaussian-location-scale",
                   choices=("gaussian-location-scale", "blobs-2d"))
    return parser


def config_from_args(args):
    dim = 2 if args.command == "gpca-2d" else getattr(args, "dim", 1)
    if getattr(args, "kind", "") == "blobs-2d":
        dim = 2
    omega = args.omega
    if omega is None:
        omega = [-3.0, 3.0] if dim == 1 else [0.0, 1.0]
    grid_size = args.grid_size
    if grid_size is None:
        grid_size = [256] if dim == 1 else [12, 12]
    inputs = []
    if getattr(args, "input", None):
        inputs = [args.input]
    if getattr(args, "inputs", None):
        inputs = list(args.inputs)
    return RunConfig(
        command=args.command,
        inputs=inputs,
        out_dir=args.out,
        omega=[float(v) for v in omega],
        grid_size=[int(v) for v in grid_size],
        n_components=args.n_components,
        t0_count=args.t0_count,
        t0_list=(list(args.t0_list)
                 if getattr(args, "t0_list", None) else None),
        eta=args.eta,
        max_outer=args.max_outer,
        max_inner=args.max_inner,
        quad=args.quad,
        epsilon=getattr(args, "epsilon", 4e-3),
        samples=getattr(args, "samples", 11),
        seed=args.seed,
        n_synth=args.n_synth,
        kind=getattr(args, "kind", "gaussian-location-scale"),
        dim=dim,
        synthetic=getattr(args, "synthetic", False),
    )


def main(argv=None):
    logging.basicConfig(stream=sys.stderr, level=logging.INFO,
                        format="%(levelname)s %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = config_from_args(args)
        files = run_pipeline(config)
    except (ValidationError, ParameterError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except WassPcaError as err:
        print(f"compute error: {err}", file=sys.stderr)
        return 2
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    print(f"wrote {len(files)} artifacts to {config.out_dir}:")
    for name in files:
        print(f"  {name}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
