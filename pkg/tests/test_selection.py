"""Tests for cross-validated parameter selection and error metrics.

Fold assignment, bandwidth grids and the error metrics are checked
against hand-computable cases; the joint search is exercised on small
synthetic clouds where the feasible and infeasible outcomes are known.
"""

import math

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal
from scipy.spatial.distance import pdist, squareform

from helpers import curve_samples
from fmca.errors import CvInfeasibleError, DegenerateDataError, NoValidEpsilonError
from fmca.grids import Grid, GridFunction, mean_curve
from fmca.selection import (
    CvConfig,
    EmbeddingCache,
    assign_folds,
    cross_validate,
    derive_h_candidates,
    fde_table,
    mspe,
    rspe,
)
from fmca.simulate import SimSpec, curve_m2, generate, sample_times, working_grid


class TestAssignFolds:
    def test_sizes_differ_by_at_most_one(self):
        fold_of = assign_folds(23, 10, seed=0)
        counts = np.bincount(fold_of, minlength=10)
        assert counts.max() - counts.min() <= 1
        assert counts.sum() == 23

    def test_every_subject_assigned(self):
        fold_of = assign_folds(30, 10, seed=1)
        assert fold_of.shape == (30,)
        assert set(np.unique(fold_of)) == set(range(10))

    def test_deterministic_per_seed(self):
        assert_array_equal(assign_folds(40, 10, seed=5), assign_folds(40, 10, seed=5))
        assert not np.array_equal(assign_folds(40, 10, seed=5), assign_folds(40, 10, seed=6))


class TestDeriveHCandidates:
    def test_geometric_grid_between_spacing_and_half_diameter(self):
        rng = np.random.default_rng(0)
        coords = rng.normal(size=(25, 2))
        grid = derive_h_candidates(coords, n_h=8)
        assert len(grid) == 8
        D = squareform(pdist(coords))
        np.fill_diagonal(D, math.inf)
        assert grid[0] == pytest.approx(float(np.median(D.min(axis=1))))
        assert grid[-1] == pytest.approx(float(pdist(coords).max()) / 2.0)
        ratios = np.diff(np.log(grid))
        assert_allclose(ratios, ratios[0], rtol=1e-9)

    def test_degenerate_cloud(self):
        assert derive_h_candidates(np.zeros((5, 2))) == [1.0]
        assert derive_h_candidates(np.zeros((1, 2))) == [1.0]


class TestCvConfig:
    def test_folds_lower_bound(self):
        with pytest.raises(ValueError, match="at least 2 folds"):
            CvConfig(folds=1)

    @pytest.mark.parametrize("fraction", [-0.1, 1.5])
    def test_delta_fraction_range(self, fraction):
        with pytest.raises(ValueError, match="delta fractions"):
            CvConfig(delta_fractions=(0.0, fraction))

    def test_bandwidth_count(self):
        with pytest.raises(ValueError, match="bandwidth candidate"):
            CvConfig(n_h=0)


class TestErrorMetrics:
    def _curves(self, rows):
        grid = Grid.uniform(0.0, 1.0, 41)
        return [GridFunction(grid, np.full(grid.size, v)) for v in rows]

    def test_mspe_constant_offset(self):
        truth = self._curves([0.0, 1.0, 2.0])
        shifted = self._curves([0.5, 1.5, 2.5])
        # Constant offset c integrates to c^2 on a unit-length domain.
        assert mspe(truth, shifted) == pytest.approx(0.25, rel=1e-12)

    def test_mspe_validation(self):
        truth = self._curves([0.0, 1.0])
        with pytest.raises(ValueError, match="equal length"):
            mspe(truth, truth[:1])
        with pytest.raises(ValueError, match="no curves"):
            mspe([], [])

    def test_rspe_mean_predictor_scores_one(self):
        truth = self._curves([0.0, 1.0, 5.0])
        center = mean_curve(truth)
        assert rspe(truth, [center] * 3) == pytest.approx(1.0, rel=1e-12)

    def test_rspe_perfect_predictions_score_zero(self):
        truth = self._curves([0.0, 1.0, 5.0])
        assert rspe(truth, list(truth)) == 0.0

    def test_rspe_identical_truth_rejected(self):
        truth = self._curves([2.0, 2.0, 2.0])
        with pytest.raises(DegenerateDataError, match="identical"):
            rspe(truth, truth)


def gaussian_cloud(seed=0, n=40, d=2):
    rng = np.random.default_rng(seed)
    return rng.normal(size=(n, d))


class TestEmbeddingCache:
    def test_geodesic_cached_by_value_key(self):
        D = squareform(pdist(gaussian_cloud()))
        cache = EmbeddingCache(D)
        first = cache.geodesic(1, 0.0)
        assert cache.geodesic(1.0, 0) is first

    def test_embedding_cached_and_capped(self):
        D = squareform(pdist(gaussian_cloud(n=6)))
        cache = EmbeddingCache(D, d_max=10)
        cached = cache.embedding(10.0, 0.0)
        assert cache.embedding(10.0, 0.0) is cached
        # Component of 6 vertices caps the embedding at 5 dimensions.
        assert cached.embedding.d == 5
        assert cached.indices == list(range(6))

    def test_d_max_respected(self):
        D = squareform(pdist(gaussian_cloud(n=12)))
        cache = EmbeddingCache(D, d_max=2)
        assert cache.embedding(10.0, 0.0).embedding.d == 2


class TestFdeTable:
    def test_planar_cloud_explained_in_two_dims(self):
        D = squareform(pdist(gaussian_cloud(seed=1, n=40, d=2)))
        table = fde_table(D)
        assert table[2] > 0.95
        assert table[1] < table[2]
        assert table[2] <= table[3] + 1e-9

    def test_dims_beyond_component_are_nan(self):
        square = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
        table = fde_table(squareform(pdist(square)), epsilons=(2.0,))
        assert not math.isnan(table[3])
        assert math.isnan(table[4]) and math.isnan(table[5])


def density_family_data(n=40, seed=0):
    """Noiseless density-family data with true curves as the fits."""
    spec = SimSpec("m2", n=n, points_per_curve=15, noise_ratio=0.0, seed=seed)
    sim = generate(spec)
    grid = working_grid(61)
    curves = [
        GridFunction(grid, curve_m2(sim.params["alpha"][i], sim.params["beta"][i], grid.points))
        for i in range(n)
    ]
    return sim.samples, curves


class TestCrossValidate:
    def test_alignment_required(self):
        samples, curves = density_family_data()
        with pytest.raises(ValueError, match="must align"):
            cross_validate(samples, curves[:-1])

    def test_search_finds_low_error_triple(self):
        samples, curves = density_family_data()
        config = CvConfig(folds=5, n_h=4, delta_fractions=(0.0, 0.05), d_max=5)
        report = cross_validate(samples, curves, config=config)
        assert len(report.fold_assignment) == len(samples)
        assert report.best.mspe == min(r.mspe for r in report.rows)
        assert report.best_triple == (report.best.epsilon, report.best.delta, report.best.h)
        # Interpolating the density family from 39 neighbors leaves
        # little error relative to the curve scale (peaks near 0.4).
        assert report.best.mspe < 0.01

    def test_derived_duplicate_deltas_collapse(self):
        samples, curves = density_family_data(n=20)
        # ceil(0.02 * 20) = ceil(0.05 * 20) = 1 share a threshold.
        config = CvConfig(folds=5, n_h=2, delta_fractions=(0.0, 0.02, 0.05))
        report = cross_validate(samples, curves, config=config)
        pairs = {(r.epsilon, r.delta) for r in report.rows}
        epsilons = {r.epsilon for r in report.rows}
        assert len(pairs) == 2 * len(epsilons)

    def test_tie_prefers_first_row(self):
        samples, curves = density_family_data(n=20)
        config = CvConfig(
            epsilon_candidates=(2.0,),
            delta_candidates=(0.0,),
            h_candidates=(0.4, 0.4),
            folds=5,
            dim=1,
        )
        report = cross_validate(samples, curves, config=config)
        assert len(report.rows) == 2
        assert report.rows[0].mspe == report.rows[1].mspe
        assert report.best is report.rows[0]

    def test_explicit_epsilons_filtered_by_connectivity(self):
        rng = np.random.default_rng(3)
        grid = Grid.uniform(0.0, 1.0, 21)
        # Two clusters of constant curves 10 apart in L2.
        levels = np.concatenate([rng.normal(0.0, 0.3, 10), rng.normal(10.0, 0.3, 10)])
        curves = [GridFunction(grid, np.full(grid.size, v)) for v in levels]
        times = np.linspace(0.0, 1.0, 12)
        samples = curve_samples(
            np.vstack([np.full(times.size, v) for v in levels]), times
        )
        config = CvConfig(
            epsilon_candidates=(2.0, 50.0), delta_candidates=(0.0,), h_candidates=(5.0,),
            folds=5, dim=1,
        )
        report = cross_validate(samples, curves, config=config)
        assert {r.epsilon for r in report.rows} == {50.0}

    def test_all_epsilons_infeasible(self):
        samples, curves = density_family_data(n=20)
        config = CvConfig(epsilon_candidates=(1e-9,), folds=5)
        with pytest.raises(NoValidEpsilonError) as info:
            cross_validate(samples, curves, config=config)
        assert info.value.component_sizes

    def test_unreachable_bandwidths_raise_with_diagnostics(self):
        samples, curves = density_family_data(n=20)
        config = CvConfig(
            epsilon_candidates=(2.0,), delta_candidates=(0.0,),
            h_candidates=(1e-13,), folds=5, dim=1,
        )
        with pytest.raises(CvInfeasibleError) as info:
            cross_validate(samples, curves, config=config)
        assert any("empty neighborhood" in d for d in info.value.diagnostics)

    def test_excluded_subjects_counted(self):
        grid = Grid.uniform(0.0, 1.0, 21)
        levels = np.concatenate([np.arange(19) * 0.5, [1000.0]])
        curves = [GridFunction(grid, np.full(grid.size, v)) for v in levels]
        times = np.linspace(0.0, 1.0, 12)
        samples = curve_samples(
            np.vstack([np.full(times.size, v) for v in levels]), times
        )
        config = CvConfig(
            epsilon_candidates=(0.6,), delta_candidates=(0.0,), h_candidates=(1.0,),
            folds=5, dim=1,
        )
        report = cross_validate(samples, curves, config=config)
        assert all(r.n_excluded == 1 for r in report.rows)

    def test_cache_reused_across_searches(self):
        from fmca.geodesic import pairwise_l2

        samples, curves = density_family_data(n=20)
        D = pairwise_l2(curves)
        cache = EmbeddingCache(D, d_max=5)
        config = CvConfig(
            epsilon_candidates=(2.0,), delta_candidates=(0.0,), h_candidates=(0.4,),
            folds=5, dim=1, d_max=5,
        )
        first = cross_validate(samples, curves, config=config, D=D, cache=cache)
        again = cross_validate(samples, curves, config=config, D=D, cache=cache)
        assert first.best.mspe == again.best.mspe
        assert cache.geodesic(2.0, 0.0) is cache.geodesic(2.0, 0.0)
