"""Batch command-line front end.

Every subcommand writes its outputs into ``--out-dir`` together with a
run manifest recording the effective value of every parameter, chosen
or defaulted, plus input digests and timing, so any run can be
reproduced exactly.  A JSON config file can supply defaults; explicit
flags win over the config file, which wins over built-in defaults.
The ``FMCA_SEED`` environment variable seeds commands whose ``--seed``
flag is omitted.
"""

from __future__ import annotations

import functools
import hashlib
import json
import os
import time

import click
import numpy as np
from click.core import ParameterSource

from . import __version__
from .benchmark import (
    DEFAULT_DIMS,
    WIDE_PER_EPSILON_KS,
    aggregate_suite,
    loo_kernel_predictions,
    run_suite,
    standard_specs,
)
from .errors import FmcaError
from .geodesic import build_graph, pairwise_l2_scores
from .io import (
    read_curves,
    write_curves,
    write_cv_report,
    write_embedding,
    write_fde_table,
    write_graph_edges,
    write_grid_curves,
    write_mean,
    write_modes,
    write_params,
    write_predictions,
    write_scores,
    write_table,
)
from .manifold import MAX_WIDENINGS, fmc_scores, inverse_map, manifold_mean, manifold_mode
from .pipeline import fit_pipeline, load_fit, save_fit
from .selection import CvConfig
from .simulate import MANIFOLDS, NOISE_DEFINITION, SimSpec, generate, working_grid
from .smoothing import KERNELS


def _friendly(fn):
    """Convert package errors into clean CLI failures."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except FmcaError as exc:
            raise click.ClickException(str(exc)) from exc

    return wrapper


def _merged(ctx, config_path):
    """Effective parameters: flags beat config-file values beat defaults."""
    values = dict(ctx.params)
    values.pop("config", None)
    if config_path:
        with open(config_path, "r", encoding="utf-8") as handle:
            cfg = json.load(handle)
        unknown = sorted(k for k in cfg if k not in values)
        if unknown:
            raise click.UsageError(f"unknown config keys: {', '.join(unknown)}")
        for key, value in cfg.items():
            if ctx.get_parameter_source(key) == ParameterSource.DEFAULT:
                values[key] = value
    return values


def _ints(value):
    if isinstance(value, str):
        value = value.split(",")
    return tuple(int(v) for v in value)


def _floats(value):
    if isinstance(value, str):
        value = value.split(",")
    return tuple(float(v) for v in value)


def _sha256(path):
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _jsonable(value):
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, (tuple, list)):
        return [_jsonable(v) for v in value]
    return value


def _write_manifest(out_dir, command, params, inputs, outputs, started):
    payload = {
        "command": command,
        "version": __version__,
        "parameters": {k: _jsonable(v) for k, v in sorted(params.items())},
        "inputs": {os.path.basename(p): _sha256(p) for p in inputs},
        "outputs": sorted(os.path.basename(p) for p in outputs),
        "timing_seconds": round(time.perf_counter() - started, 3),
    }
    path = os.path.join(out_dir, f"{command}_manifest.json")
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(payload, handle, indent=2, sort_keys=True)
        handle.write("\n")
    return path


def _ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    return path


_out_dir_option = click.option(
    "--out-dir",
    type=click.Path(file_okay=False),
    default=".",
    show_default=True,
    help="Directory receiving all outputs.",
)
_config_option = click.option(
    "--config",
    type=click.Path(exists=True, dir_okay=False),
    default=None,
    help="JSON file supplying parameter defaults; flags override.",
)
_seed_option = click.option(
    "--seed",
    type=int,
    default=0,
    show_default=True,
    envvar="FMCA_SEED",
    help="Random seed; falls back to FMCA_SEED.",
)


@click.group()
@click.version_option(version=__version__, prog_name="fmca")
def main():
    """Functional manifold component analysis."""


@main.command()
@click.argument("input_csv", type=click.Path(exists=True, dir_okay=False))
@_out_dir_option
@_config_option
@_seed_option
@click.option("--grid-size", type=int, default=101, show_default=True, help="Working grid resolution.")
@click.option("--kernel", type=click.Choice(KERNELS), default="epanechnikov", show_default=True)
@click.option("--dim", type=int, default=None, help="Embedding dimension override; default selects by fraction of distances explained.")
@click.option("--fve-alpha", type=float, default=0.05, show_default=True, help="Component truncation keeps a 1-alpha variance fraction.")
@click.option("--folds", type=int, default=10, show_default=True, help="Cross-validation folds.")
@click.option("--epsilon-ks", default="5,8,12", show_default=True, help="Neighbor ranks defining radius candidates.")
@click.option("--delta-fractions", default="0,0.02,0.05,0.1", show_default=True, help="Penalized-density fractions defining threshold candidates.")
@click.option("--n-h", type=int, default=8, show_default=True, help="Bandwidth candidates per embedding.")
@click.option("--fde-beta", type=float, default=0.05, show_default=True, help="Distances-explained tolerance for dimension selection.")
@click.option("--d-max", type=int, default=10, show_default=True, help="Largest embedding dimension considered.")
@click.option("--graph-csv", is_flag=True, help="Also dump the neighborhood graph edge list.")
@click.option("--no-figures", is_flag=True, help="Skip SVG rendering.")
@click.pass_context
@_friendly
def fit(ctx, input_csv, config, **_):
    """Fit the full model to a curve CSV.

    Writes model.json, embedding.csv, fde.csv, cv_report.csv, an
    embedding scatter SVG, and the run manifest.
    """
    started = time.perf_counter()
    p = _merged(ctx, config)
    out_dir = _ensure_dir(p["out_dir"])
    samples = read_curves(input_csv)
    cv_config = CvConfig(
        epsilon_ks=_ints(p["epsilon_ks"]),
        delta_fractions=_floats(p["delta_fractions"]),
        n_h=int(p["n_h"]),
        folds=int(p["folds"]),
        seed=int(p["seed"]),
        fde_beta=float(p["fde_beta"]),
        d_max=int(p["d_max"]),
        kernel=p["kernel"],
    )
    result = fit_pipeline(
        samples,
        grid_size=int(p["grid_size"]),
        kernel=p["kernel"],
        fve_alpha=float(p["fve_alpha"]),
        cv_config=cv_config,
        dim=p["dim"],
    )
    outputs = []
    model_path = os.path.join(out_dir, "model.json")
    save_fit(result, model_path)
    outputs.append(model_path)
    embedding_path = os.path.join(out_dir, "embedding.csv")
    write_embedding(result, embedding_path)
    outputs.append(embedding_path)
    fde_path = os.path.join(out_dir, "fde.csv")
    write_fde_table(result.fde_values, fde_path)
    outputs.append(fde_path)
    cv_path = os.path.join(out_dir, "cv_report.csv")
    write_cv_report(result.cv, cv_path)
    outputs.append(cv_path)
    if p["graph_csv"]:
        D = pairwise_l2_scores(result.fpca.scores[:, : result.fpca.K])
        graph = build_graph(D, result.epsilon, result.delta)
        graph_path = os.path.join(out_dir, "graph.csv")
        write_graph_edges(graph, graph_path)
        outputs.append(graph_path)
    if not p["no_figures"]:
        from .plots import embedding_figure

        figure_path = os.path.join(out_dir, "embedding.svg")
        embedding_figure(result, figure_path)
        outputs.append(figure_path)
    _write_manifest(out_dir, "fit", p, [input_csv], outputs, started)
    click.echo(
        f"fitted {len(samples)} subjects: d={result.selected_d}, "
        f"epsilon={result.epsilon:.6g}, delta={result.delta:.6g}, h={result.h:.6g}, "
        f"{len(result.retained_indices)} retained"
    )


@main.command()
@click.argument("model_file", type=click.Path(exists=True, dir_okay=False))
@_out_dir_option
@click.option("--loo/--self", "loo", default=True, show_default=True, help="Leave each subject out of its own kernel average.")
@click.option("--truth", type=click.Path(exists=True, dir_okay=False), default=None, help="Truth curve CSV; adds a truth MSPE to the report.")
@click.pass_context
@_friendly
def predict(ctx, model_file, loo, truth, out_dir):
    """Predict curves for every embedded subject in a fitted model.

    Writes predictions.csv in the curve CSV format, aligned to input
    subject order, plus predict_report.json with mean squared errors.
    """
    started = time.perf_counter()
    out_dir = _ensure_dir(out_dir)
    fit_result = load_fit(model_file)
    model = fit_result.manifold
    curve_matrix = np.vstack([f.values for f in model.fitted_curves])
    ids = [fit_result.subject_ids[i] for i in model.embedding.source_indices]
    if loo:
        predictions, predicted = loo_kernel_predictions(
            model.embedding.coordinates, curve_matrix, model.h, model.kernel
        )
    else:
        predictions = np.vstack(
            [
                inverse_map(theta, model, widen=3).values
                for theta in model.embedding.coordinates
            ]
        )
        predicted = np.ones(model.n, dtype=bool)
    grid = fit_result.grid
    kept = np.nonzero(predicted)[0]
    predictions_path = os.path.join(out_dir, "predictions.csv")
    write_predictions([ids[i] for i in kept], grid, predictions[kept], predictions_path)
    weights = grid.weights
    fitted_err = ((predictions[kept] - curve_matrix[kept]) ** 2) @ weights
    report = {
        "loo": bool(loo),
        "n_subjects": len(fit_result.subject_ids),
        "n_embedded": int(model.n),
        "n_predicted": int(kept.size),
        "mspe_fitted": float(np.mean(fitted_err)),
    }
    inputs = [model_file]
    if truth is not None:
        truth_samples = {s.subject_id: s for s in read_curves(truth)}
        missing = [ids[i] for i in kept if ids[i] not in truth_samples]
        if missing:
            raise click.ClickException(
                f"truth CSV lacks subjects: {', '.join(missing[:5])}"
            )
        truth_matrix = np.vstack(
            [
                np.interp(
                    grid.points, truth_samples[ids[i]].times, truth_samples[ids[i]].values
                )
                for i in kept
            ]
        )
        truth_err = ((predictions[kept] - truth_matrix) ** 2) @ weights
        report["mspe_truth"] = float(np.mean(truth_err))
        inputs.append(truth)
    report_path = os.path.join(out_dir, "predict_report.json")
    with open(report_path, "w", encoding="utf-8") as handle:
        json.dump(report, handle, indent=2, sort_keys=True)
        handle.write("\n")
    _write_manifest(
        out_dir, "predict", dict(ctx.params), inputs, [predictions_path, report_path], started
    )
    click.echo(f"predicted {kept.size} subjects; mspe_fitted={report['mspe_fitted']:.6g}")


@main.command()
@click.argument("model_file", type=click.Path(exists=True, dir_okay=False))
@_out_dir_option
@click.option("--axis", type=int, default=1, show_default=True, help="Component axis (1-based).")
@click.option("--alphas", default="-2,-1,0,1,2", show_default=True, help="Multiples of the component standard deviation.")
@click.option("--no-figures", is_flag=True, help="Skip SVG rendering.")
@click.pass_context
@_friendly
def modes(ctx, model_file, axis, alphas, no_figures, out_dir):
    """Render mode-of-variation curves along one component axis."""
    started = time.perf_counter()
    out_dir = _ensure_dir(out_dir)
    fit_result = load_fit(model_file)
    model = fit_result.manifold
    if not 1 <= axis <= model.d:
        raise click.ClickException(
            f"axis {axis} out of range; model has {model.d} component axes"
        )
    alpha_values = _floats(alphas)
    curves = [
        manifold_mode(axis, alpha, model, widen=MAX_WIDENINGS) for alpha in alpha_values
    ]
    csv_path = os.path.join(out_dir, f"modes_axis{axis}.csv")
    write_modes(axis, alpha_values, curves, csv_path)
    outputs = [csv_path]
    if not no_figures:
        from .plots import mode_figure

        svg_path = os.path.join(out_dir, f"modes_axis{axis}.svg")
        mode_figure(axis, alpha_values, curves, svg_path)
        outputs.append(svg_path)
    _write_manifest(out_dir, "modes", dict(ctx.params), [model_file], outputs, started)
    click.echo(f"wrote {len(alpha_values)} mode curves for axis {axis}")


@main.command()
@click.argument("model_file", type=click.Path(exists=True, dir_okay=False))
@_out_dir_option
@click.option("--no-figures", is_flag=True, help="Skip SVG rendering.")
@click.pass_context
@_friendly
def mean(ctx, model_file, no_figures, out_dir):
    """Write the manifold mean next to the cross-sectional smooth."""
    started = time.perf_counter()
    out_dir = _ensure_dir(out_dir)
    fit_result = load_fit(model_file)
    center = manifold_mean(fit_result.manifold, widen=3)
    csv_path = os.path.join(out_dir, "mean.csv")
    write_mean(fit_result.grid, center, fit_result.fpca.mean, csv_path)
    outputs = [csv_path]
    if not no_figures:
        from .plots import mean_figure

        svg_path = os.path.join(out_dir, "mean.svg")
        mean_figure(fit_result.grid, center, fit_result.fpca.mean, svg_path)
        outputs.append(svg_path)
    _write_manifest(out_dir, "mean", dict(ctx.params), [model_file], outputs, started)
    click.echo("wrote mean curves")


@main.command()
@click.argument("model_file", type=click.Path(exists=True, dir_okay=False))
@_out_dir_option
@click.option("--fpca", "use_fpca", is_flag=True, help="Write component scores of the curve expansion instead of manifold component scores.")
@click.pass_context
@_friendly
def scores(ctx, model_file, use_fpca, out_dir):
    """Write per-subject component scores."""
    started = time.perf_counter()
    out_dir = _ensure_dir(out_dir)
    fit_result = load_fit(model_file)
    csv_path = os.path.join(out_dir, "scores.csv")
    if use_fpca:
        matrix = fit_result.fpca.scores[:, : fit_result.fpca.K]
        write_scores(fit_result.subject_ids, matrix, "xi", csv_path)
    else:
        matrix = fmc_scores(fit_result.manifold).scores
        ids = [
            fit_result.subject_ids[i]
            for i in fit_result.manifold.embedding.source_indices
        ]
        write_scores(ids, matrix, "fmc", csv_path)
    _write_manifest(out_dir, "scores", dict(ctx.params), [model_file], [csv_path], started)
    click.echo(f"wrote scores for {matrix.shape[0]} subjects")


@main.command()
@_out_dir_option
@_seed_option
@click.option("--manifold", "manifold_id", type=click.Choice(MANIFOLDS), required=True, help="Generator family.")
@click.option("--n", type=int, default=200, show_default=True, help="Number of subjects.")
@click.option("--points", type=int, default=30, show_default=True, help="Observations per curve.")
@click.option("--noise-ratio", type=float, default=0.1, show_default=True, help="Noise-to-signal variance ratio.")
@click.option("--grid-size", type=int, default=101, show_default=True, help="Truth grid resolution.")
@click.pass_context
@_friendly
def simulate(ctx, manifold_id, n, points, noise_ratio, grid_size, seed, out_dir):
    """Generate a synthetic dataset: curves, truth, and parameters."""
    started = time.perf_counter()
    out_dir = _ensure_dir(out_dir)
    spec = SimSpec(
        manifold_id, n=n, points_per_curve=points, noise_ratio=noise_ratio, seed=seed
    )
    sim = generate(spec, working_grid(grid_size))
    ids = [s.subject_id for s in sim.samples]
    curves_path = os.path.join(out_dir, "curves.csv")
    write_curves(sim.samples, curves_path)
    truth_path = os.path.join(out_dir, "truth.csv")
    write_grid_curves(ids, sim.truth, truth_path)
    params_path = os.path.join(out_dir, "params.csv")
    write_params(ids, sim.params, params_path)
    params = dict(ctx.params)
    params["noise_definition"] = NOISE_DEFINITION
    _write_manifest(
        out_dir,
        "simulate",
        params,
        [],
        [curves_path, truth_path, params_path],
        started,
    )
    click.echo(f"simulated {n} subjects from {manifold_id} (noise sigma2 {sim.noise_sigma2:.6g})")


def _table_header_rows(table, agg, dims, epsilon_ks):
    """Lay out one benchmark table as (header, rows)."""
    keys = sorted(agg)
    if table == 1:
        header = ["manifold", "noise_ratio", *(f"d{d}" for d in dims)]
        rows = [
            [m, r, *(agg[(m, r)]["fde"].get(d) for d in dims)] for m, r in keys
        ]
    elif table == 2:
        header = ["manifold", "noise_ratio", "method", "metric", *(f"d{d}" for d in dims)]
        rows = []
        for m, r in keys:
            entry = agg[(m, r)]
            for method, prefix in (("fpca", "fpca"), ("manifold", "manifold")):
                for metric in ("mspe", "rspe"):
                    values = entry[f"{prefix}_{metric}"]
                    rows.append([m, r, method, metric, *(values.get(d) for d in dims)])
    elif table == 3:
        manifolds = sorted({m for m, _ in keys})
        ratios = sorted({r for _, r in keys})
        header = ["noise_ratio", *manifolds]
        rows = [
            [r, *(agg[(m, r)]["ratio_mean"] if (m, r) in agg else None for m in manifolds)]
            for r in ratios
        ]
    else:
        header = ["manifold", "noise_ratio", *(f"k{k}" for k in epsilon_ks)]
        rows = [
            [m, r, *(agg[(m, r)]["per_epsilon"].get(k) for k in epsilon_ks)]
            for m, r in keys
        ]
    return header, rows


@main.command()
@_out_dir_option
@click.option("--table", type=click.IntRange(1, 4), required=True, help="Which summary table to produce.")
@click.option("--seeds", default="0,1,2,3,4", show_default=True, help="Seeds aggregated into the table.")
@click.option("--n", type=int, default=200, show_default=True, help="Subjects per dataset.")
@click.option("--points", type=int, default=30, show_default=True, help="Observations per curve.")
@click.option("--noise-ratios", default="0.1,0.5", show_default=True, help="Noise-to-signal ratios benchmarked.")
@click.option("--grid-size", type=int, default=101, show_default=True)
@click.option("--threads", type=int, default=None, help="Worker process bound; defaults to the core count.")
@click.pass_context
@_friendly
def benchmark(ctx, table, seeds, n, points, noise_ratios, grid_size, threads, out_dir):
    """Run the simulation benchmark and write one summary table."""
    started = time.perf_counter()
    out_dir = _ensure_dir(out_dir)
    seed_list = _ints(seeds)
    ratio_list = _floats(noise_ratios)
    specs = standard_specs(
        noise_ratios=ratio_list, seeds=seed_list, n=n, points_per_curve=points
    )
    per_epsilon_ks = WIDE_PER_EPSILON_KS if table == 4 else None
    reports = run_suite(
        specs, grid_size=grid_size, per_epsilon_ks=per_epsilon_ks, workers=threads
    )
    agg = aggregate_suite(reports)
    header, rows = _table_header_rows(table, agg, DEFAULT_DIMS, WIDE_PER_EPSILON_KS)
    table_path = os.path.join(out_dir, f"table{table}.csv")
    write_table(header, rows, table_path)
    params = dict(ctx.params)
    params["noise_definition"] = NOISE_DEFINITION
    _write_manifest(out_dir, "benchmark", params, [], [table_path], started)
    click.echo(f"wrote table {table} from {len(specs)} datasets")


if __name__ == "__main__":
    main()
