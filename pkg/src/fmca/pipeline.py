"""End-to-end model fitting and model persistence.

``fit_pipeline`` chains the stages on raw samples: smooth and expand
the curves, form score-space distances, cross-validate the
neighborhood radius, density threshold, and averaging bandwidth,
embed the largest connected component at the selected dimension, and
attach the kernel-averaging predictor.  ``FmcaFit`` bundles the two
fitted models with the selected parameters and serializes to JSON
losslessly, so a reloaded model reproduces predictions bit for bit.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .fpca import FpcaModel, fit_fpca
from .geodesic import pairwise_l2_scores
from .grids import Grid, GridFunction, default_grid
from .manifold import ManifoldModel, fit_manifold
from .mds import Embedding
from .selection import (
    CvConfig,
    CvReport,
    EmbeddingCache,
    cross_validate,
    fde_report_grid,
    fde_table,
)


@dataclass(frozen=True, eq=False)
class FmcaFit:
    """A fitted pipeline: component model, manifold model, selections.

    Attributes
    ----------
    fpca : FpcaModel
    manifold : ManifoldModel
        Predictor over the retained (connected) subjects; its
        embedding's ``source_indices`` point back into the input
        sample order.
    subject_ids : tuple of str
        All input subjects, in input order.
    epsilon, delta, h : float
        Selected neighborhood radius, density threshold, bandwidth.
    selected_d : int
        Embedding dimension in use.
    fde_values : tuple of float
        Stress-refined fraction of distances explained at dimensions
        1 upward, each maximized over the fidelity radius grid;
        covers at least five dimensions when the sample allows.
    cv : CvReport or None
        Search table; not serialized.
    """

    fpca: FpcaModel
    manifold: ManifoldModel
    subject_ids: tuple
    epsilon: float
    delta: float
    h: float
    selected_d: int
    fde_values: tuple
    cv: CvReport = None

    @property
    def grid(self):
        return self.fpca.grid

    @property
    def retained_indices(self):
        """Input positions of the embedded subjects."""
        return tuple(int(i) for i in self.manifold.embedding.source_indices)

    def to_dict(self):
        emb = self.manifold.embedding
        return {
            "fpca": self.fpca.to_dict(),
            "embedding": {
                "coordinates": [[float(v) for v in row] for row in emb.coordinates],
                "eigenvalues": [float(v) for v in emb.eigenvalues],
                "source_indices": [int(i) for i in emb.source_indices],
                "d": int(emb.d),
                "padded": bool(emb.padded),
            },
            "fitted_values": [
                [float(v) for v in f.values] for f in self.manifold.fitted_curves
            ],
            "subject_ids": list(self.subject_ids),
            "epsilon": float(self.epsilon),
            "delta": float(self.delta),
            "h": float(self.h),
            "kernel": self.manifold.kernel,
            "selected_d": int(self.selected_d),
            "fde_values": [float(v) for v in self.fde_values],
        }

    @classmethod
    def from_dict(cls, payload):
        fpca = FpcaModel.from_dict(payload["fpca"])
        emb_payload = payload["embedding"]
        coordinates = np.asarray(emb_payload["coordinates"], dtype=float)
        embedding = Embedding(
            coordinates=coordinates.reshape(coordinates.shape[0], -1),
            d=int(emb_payload["d"]),
            eigenvalues=np.asarray(emb_payload["eigenvalues"], dtype=float),
            source_indices=tuple(int(i) for i in emb_payload["source_indices"]),
            padded=bool(emb_payload["padded"]),
        )
        grid = fpca.grid
        curves = [
            GridFunction(grid, np.asarray(values, dtype=float))
            for values in payload["fitted_values"]
        ]
        manifold = fit_manifold(
            embedding, curves, float(payload["h"]), kernel=payload["kernel"]
        )
        return cls(
            fpca=fpca,
            manifold=manifold,
            subject_ids=tuple(payload["subject_ids"]),
            epsilon=float(payload["epsilon"]),
            delta=float(payload["delta"]),
            h=float(payload["h"]),
            selected_d=int(payload["selected_d"]),
            fde_values=tuple(float(v) for v in payload["fde_values"]),
        )

    def to_json(self):
        """Deterministic JSON; floats use shortest round-trip form."""
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def save_fit(fit, path):
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(fit.to_json())
        handle.write("\n")


def load_fit(path):
    with open(path, "r", encoding="utf-8") as handle:
        return FmcaFit.from_json(handle.read())


def fit_pipeline(
    samples,
    grid=None,
    grid_size=101,
    kernel="epanechnikov",
    h_mu=None,
    h_G=None,
    fve_alpha=0.05,
    score_method=None,
    cv_config=None,
    dim=None,
):
    """Fit the full model to observed curves.

    Parameters
    ----------
    samples : list of CurveSample
    grid : Grid, optional
        Working grid; defaults to ``grid_size`` equi-spaced points
        spanning the pooled observation times.
    grid_size : int
    kernel : str
    h_mu, h_G : float, optional
        Smoothing bandwidths; selected by generalized cross-validation
        when omitted.
    fve_alpha : float
        Component truncation keeps the smallest count explaining a
        1 - fve_alpha variance fraction.
    score_method : str, optional
        "integration" or "conditional"; default decided by design
        sparsity.
    cv_config : CvConfig, optional
        Joint search settings for (epsilon, delta, h).
    dim : int, optional
        Embedding dimension override; default is the
        distances-explained selection over the fidelity radius grid.

    Returns
    -------
    FmcaFit
    """
    if grid is None:
        grid = default_grid(samples, num=grid_size)
    if cv_config is None:
        cv_config = CvConfig(kernel=kernel)
    model = fit_fpca(
        samples,
        grid,
        h_mu=h_mu,
        h_G=h_G,
        kernel=kernel,
        fve_alpha=fve_alpha,
        score_method=score_method,
    )
    curves = model.fitted_curves()
    D = pairwise_l2_scores(model.scores[:, : model.K])
    cache = EmbeddingCache(D, d_max=cv_config.d_max, fde_beta=cv_config.fde_beta)
    report = cross_validate(samples, curves, cv_config, D=D, cache=cache)
    epsilon, delta, h = report.best_triple
    cached = cache.embedding(epsilon, delta)

    # Fidelity report: at least five dimensions for the scree table,
    # continuing past five only until the selection rule fires.
    fde_grid = fde_report_grid(D)
    d_cap = max(1, min(cv_config.d_max, len(samples) - 1))
    fde_values = []
    selected = None
    for p in range(1, d_cap + 1):
        value = fde_table(D, cache, (p,), epsilons=fde_grid)[p]
        fde_values.append(value)
        if selected is None and math.isfinite(value) and 1.0 - value < cv_config.fde_beta:
            selected = p
        if p >= 5 and selected is not None:
            break
    d = dim if dim is not None else (cv_config.dim or selected or d_cap)
    d_eff = min(int(d), cached.embedding.d)
    embedding = cached.embedding.truncated(d_eff)
    manifold = fit_manifold(
        embedding, [curves[i] for i in cached.indices], h, kernel=kernel
    )
    return FmcaFit(
        fpca=model,
        manifold=manifold,
        subject_ids=tuple(s.subject_id for s in samples),
        epsilon=float(epsilon),
        delta=float(delta),
        h=float(h),
        selected_d=int(d_eff),
        fde_values=tuple(float(v) for v in fde_values),
        cv=report,
    )
