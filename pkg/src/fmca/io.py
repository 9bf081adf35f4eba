"""Delimited input and output.

Curve data travels as CSV with columns ``subject_id, t, y``, one row
per measurement, header required.  All writers format floats with
their shortest round-trip representation and a fixed line terminator,
so identical inputs produce byte-identical files on every platform.
"""

from __future__ import annotations

import csv

import numpy as np

from .errors import CurveCsvError
from .geodesic import edge_penalties
from .grids import CurveSample

CURVE_HEADER = ("subject_id", "t", "y")


def _fmt(value):
    """CSV cell text: shortest round-trip floats, bare ints, blank None."""
    if value is None:
        return ""
    if isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def _writer(handle):
    return csv.writer(handle, lineterminator="\n")


def _write_rows(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = _writer(handle)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(cell) for cell in row])


def read_curves(path):
    """Parse a curve CSV into per-subject samples.

    Subjects appear in first-occurrence order; measurements are sorted
    by time within each subject.

    Raises
    ------
    CurveCsvError
        On a missing or wrong header, a malformed row, or a subject
        with fewer than two measurements; carries the 1-based line
        number.
    """
    order = []
    times = {}
    values = {}
    first_line = {}
    with open(path, "r", encoding="utf-8-sig", newline="") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise CurveCsvError(1, "empty file; expected header subject_id,t,y") from None
        if tuple(cell.strip() for cell in header) != CURVE_HEADER:
            raise CurveCsvError(1, f"expected header subject_id,t,y, got {','.join(header)!r}")
        for line_number, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 3:
                raise CurveCsvError(line_number, f"expected 3 fields, got {len(row)}")
            subject = row[0].strip()
            if not subject:
                raise CurveCsvError(line_number, "empty subject_id")
            try:
                t = float(row[1])
                y = float(row[2])
            except ValueError:
                raise CurveCsvError(
                    line_number, f"could not parse numeric fields from {row[1]!r},{row[2]!r}"
                ) from None
            if subject not in times:
                order.append(subject)
                times[subject] = []
                values[subject] = []
                first_line[subject] = line_number
            times[subject].append(t)
            values[subject].append(y)
    if not order:
        raise CurveCsvError(1, "no data rows after the header")
    samples = []
    for subject in order:
        if len(times[subject]) < 2:
            raise CurveCsvError(
                first_line[subject], f"subject {subject!r} has fewer than 2 measurements"
            )
        t = np.asarray(times[subject])
        y = np.asarray(values[subject])
        idx = np.argsort(t, kind="stable")
        try:
            samples.append(CurveSample(subject, t[idx], y[idx]))
        except ValueError as exc:
            raise CurveCsvError(first_line[subject], str(exc)) from None
    return samples


def write_curves(samples, path):
    """Write per-subject samples in the curve CSV format."""
    rows = (
        (sample.subject_id, t, y)
        for sample in samples
        for t, y in zip(sample.times, sample.values)
    )
    _write_rows(path, CURVE_HEADER, rows)


def write_grid_curves(subject_ids, functions, path):
    """Write grid-evaluated curves, one row per grid point, in the
    curve CSV format."""
    rows = (
        (subject_id, t, y)
        for subject_id, f in zip(subject_ids, functions)
        for t, y in zip(f.grid.points, f.values)
    )
    _write_rows(path, CURVE_HEADER, rows)


def write_params(subject_ids, params, path):
    """Write per-subject generator parameters, one column per latent."""
    names = list(params)
    header = ["subject_id", *names]
    rows = (
        [subject_id, *(params[name][i] for name in names)]
        for i, subject_id in enumerate(subject_ids)
    )
    _write_rows(path, header, rows)


def write_embedding(fit, path):
    """Write embedded coordinates: subject_id, coord_1..coord_d."""
    emb = fit.manifold.embedding
    header = ["subject_id", *(f"coord_{k}" for k in range(1, emb.d + 1))]
    rows = (
        [fit.subject_ids[src], *coords]
        for src, coords in zip(emb.source_indices, emb.coordinates)
    )
    _write_rows(path, header, rows)


def write_fde_table(fde_values, path):
    """Write the fraction of distances explained per dimension."""
    rows = ((d, value) for d, value in enumerate(fde_values, start=1))
    _write_rows(path, ("d", "fde"), rows)


def write_cv_report(report, path):
    """Write the search table; the selected row is flagged."""
    header = (
        "epsilon",
        "delta_fraction",
        "delta",
        "h",
        "d",
        "mspe",
        "n_excluded",
        "selected",
    )
    rows = (
        (
            row.epsilon,
            None if np.isnan(row.delta_fraction) else row.delta_fraction,
            row.delta,
            row.h,
            row.d,
            row.mspe,
            row.n_excluded,
            int(row is report.best),
        )
        for row in report.rows
    )
    _write_rows(path, header, rows)


def write_graph_edges(graph, path):
    """Write the neighborhood graph as an edge list with weights."""
    penalties = edge_penalties(graph)
    rows = (
        (int(i), int(j), l2, pen, weight)
        for (i, j), l2, pen, weight in zip(
            graph.edge_index, graph.edge_l2, penalties, graph.edge_weight
        )
    )
    _write_rows(path, ("i", "j", "l2_distance", "penalty", "weight"), rows)


def write_modes(axis, alphas, curves, path):
    """Write mode curves: one row per (alpha, grid point)."""
    rows = (
        (int(axis), alpha, t, y)
        for alpha, curve in zip(alphas, curves)
        for t, y in zip(curve.grid.points, curve.values)
    )
    _write_rows(path, ("axis", "alpha", "t", "value"), rows)


def write_mean(grid, manifold_mean, smoothed_mean, path):
    """Write the manifold mean next to the cross-sectional smooth."""
    rows = zip(grid.points, manifold_mean.values, smoothed_mean.values)
    _write_rows(path, ("t", "manifold_mean", "smoothed_mean"), rows)


def write_scores(subject_ids, matrix, prefix, path):
    """Write per-subject score vectors: subject_id, <prefix>_1.."""
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    header = ["subject_id", *(f"{prefix}_{k}" for k in range(1, matrix.shape[1] + 1))]
    rows = ([subject_id, *row] for subject_id, row in zip(subject_ids, matrix))
    _write_rows(path, header, rows)


def write_predictions(subject_ids, grid, matrix, path):
    """Write predicted curves in the curve CSV format."""
    rows = (
        (subject_id, t, y)
        for subject_id, values in zip(subject_ids, matrix)
        for t, y in zip(grid.points, values)
    )
    _write_rows(path, CURVE_HEADER, rows)


def write_table(header, rows, path):
    """Write a generic benchmark table."""
    _write_rows(path, header, rows)
