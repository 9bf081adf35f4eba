"""Tests for functional principal component analysis.

Eigenstructure is checked against a surface assembled from known
orthonormal components, scores against hand-computed quadrature,
leave-one-out fits against direct refits with the subject removed, and
noise-variance recovery against the generating noise level.
"""

import math

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from helpers import check_orthonormal_eigenfunctions, curve_samples, kl_dataset
from fmca.errors import DegenerateSpectrumError, InsufficientDataError
from fmca.fpca import (
    FpcaModel,
    eigendecompose,
    estimate_covariance,
    estimate_mean,
    fit_fpca,
    loo_means,
    loo_reconstructions,
    reconstruct,
    scores_conditional,
    scores_integration,
    select_K_fve,
)
from fmca.geodesic import pairwise_l2, pairwise_l2_scores
from fmca.grids import Grid, GridFunction, l2_distance
from fmca.smoothing import local_linear_smooth_1d


def rank_two_surface(grid):
    """Covariance built from known orthonormal components.

    Components sqrt(2) sin(2 pi t) and sqrt(2) cos(2 pi t) on [0, 1]
    with variances 4 and 1.
    """
    t = grid.points
    phi1 = math.sqrt(2.0) * np.sin(2.0 * np.pi * t)
    phi2 = math.sqrt(2.0) * np.cos(2.0 * np.pi * t)
    surface = 4.0 * np.outer(phi1, phi1) + np.outer(phi2, phi2)
    return surface, phi1, phi2


class TestEigendecompose:
    def test_matches_weighted_symmetric_eigenproblem(self, unit_grid):
        rng = np.random.default_rng(0)
        A = rng.normal(size=(unit_grid.size, unit_grid.size))
        surface = A @ A.T / unit_grid.size
        values, functions = eigendecompose(surface, unit_grid)
        root_w = np.sqrt(unit_grid.weights)
        expected = np.linalg.eigvalsh(root_w[:, None] * surface * root_w[None, :])
        assert_allclose(values, np.clip(expected[::-1], 0.0, None), atol=1e-10)
        assert len(functions) == unit_grid.size

    def test_recovers_known_spectrum(self):
        grid = Grid.uniform(0.0, 1.0, 101)
        surface, phi1, phi2 = rank_two_surface(grid)
        values, functions = eigendecompose(surface, grid)
        assert values[0] == pytest.approx(4.0, abs=2e-3)
        assert values[1] == pytest.approx(1.0, abs=2e-3)
        # The surface has rank two, so the rest of the spectrum is null.
        assert float(values[2:].max()) < 1e-10
        for fn, target in [(functions[0], phi1), (functions[1], phi2)]:
            align = float(np.dot(grid.weights, fn.values * target))
            assert abs(align) == pytest.approx(1.0, abs=2e-3)

    def test_eigenfunctions_orthonormal_in_quadrature(self, unit_grid):
        rng = np.random.default_rng(3)
        A = rng.normal(size=(unit_grid.size, unit_grid.size))
        values, functions = eigendecompose(A @ A.T, unit_grid)
        gram = np.array(
            [
                [float(np.dot(unit_grid.weights, f.values * g.values)) for g in functions[:6]]
                for f in functions[:6]
            ]
        )
        assert_allclose(gram, np.eye(6), atol=1e-10)

    @pytest.mark.parametrize("seed", [0, 1, 2, 3, 4])
    def test_sign_convention_invariant(self, seed, unit_grid):
        # Every eigenfunction integrates to a nonnegative value; exact
        # zeros fall back to a positive leading nonzero value.
        rng = np.random.default_rng(seed)
        A = rng.normal(size=(unit_grid.size, unit_grid.size))
        _, functions = eigendecompose(A @ A.T, unit_grid)
        for fn in functions:
            integral = float(np.dot(unit_grid.weights, fn.values))
            assert integral >= 0.0
            if integral == 0.0:
                nonzero = fn.values[fn.values != 0.0]
                if nonzero.size:
                    assert nonzero[0] > 0.0

    def test_positive_integral_kept(self, unit_grid):
        psi = 1.0 + 0.5 * unit_grid.points
        _, functions = eigendecompose(np.outer(psi, psi), unit_grid)
        assert float(np.dot(unit_grid.weights, functions[0].values)) > 0.0

    def test_shape_mismatch_rejected(self, unit_grid):
        with pytest.raises(ValueError, match="does not match the grid"):
            eigendecompose(np.eye(unit_grid.size + 1), unit_grid)


class TestScores:
    def test_integration_hand_case(self):
        grid = Grid.uniform(0.0, 1.0, 11)
        mean = GridFunction(grid, np.zeros(11))
        phi = GridFunction(grid, np.ones(11))
        times = np.array([0.0, 0.2, 0.5])
        values = np.array([1.0, 3.0, -2.0])
        sample = curve_samples(values[None, :], times)[0]
        # Left-difference spacings are (0, 0.2, 0.3); the first point
        # carries no mass.
        expected = 3.0 * 0.2 + (-2.0) * 0.3
        got = scores_integration(sample, mean, [phi])
        assert got.shape == (1,)
        assert got[0] == pytest.approx(expected, rel=1e-12)

    def test_integration_subtracts_mean(self):
        grid = Grid.uniform(0.0, 1.0, 11)
        mean = GridFunction(grid, 2.0 * np.ones(11))
        phi = GridFunction(grid, grid.points.copy())
        times = np.array([0.0, 0.5, 1.0])
        sample = curve_samples(np.array([[2.0, 2.0, 2.0]]), times)[0]
        assert scores_integration(sample, mean, [phi])[0] == pytest.approx(0.0, abs=1e-15)

    def test_conditional_recovers_exact_expansion(self):
        grid = Grid.uniform(0.0, 1.0, 101)
        t = grid.points
        phi1 = GridFunction(grid, math.sqrt(2.0) * np.sin(2.0 * np.pi * t))
        phi2 = GridFunction(grid, math.sqrt(2.0) * np.cos(2.0 * np.pi * t))
        model = FpcaModel(
            mean=GridFunction(grid, np.zeros(grid.size)),
            eigenvalues=np.array([4.0, 1.0]),
            eigenfunctions=[phi1, phi2],
            sigma2=1e-8,
            scores=np.zeros((0, 2)),
            K=2,
            h_mu=0.1,
            h_G=0.1,
            kernel="epanechnikov",
            score_method="conditional",
        )
        times = np.linspace(0.0, 1.0, 60)
        xi = np.array([1.7, -0.6])
        values = xi[0] * phi1.interp(times) + xi[1] * phi2.interp(times)
        sample = curve_samples(values[None, :], times)[0]
        assert_allclose(scores_conditional(sample, model), xi, atol=1e-4)

    def test_conditional_shrinks_toward_zero_under_noise(self):
        # With a large stated noise variance the conditional scores are
        # shrunk relative to the exact coefficients.
        grid = Grid.uniform(0.0, 1.0, 101)
        phi = GridFunction(grid, math.sqrt(2.0) * np.sin(2.0 * np.pi * grid.points))
        model = FpcaModel(
            mean=GridFunction(grid, np.zeros(grid.size)),
            eigenvalues=np.array([1.0]),
            eigenfunctions=[phi],
            sigma2=50.0,
            scores=np.zeros((0, 1)),
            K=1,
            h_mu=0.1,
            h_G=0.1,
            kernel="epanechnikov",
            score_method="conditional",
        )
        times = np.linspace(0.0, 1.0, 30)
        sample = curve_samples(2.0 * phi.interp(times)[None, :], times)[0]
        got = scores_conditional(sample, model)[0]
        assert 0.0 < got < 2.0


class TestSelectK:
    def test_counts_until_threshold(self):
        assert select_K_fve(np.array([4.0, 1.0]), alpha=0.05) == 2
        assert select_K_fve(np.array([4.0, 1.0]), alpha=0.3) == 1
        assert select_K_fve(np.array([1.0, 0.0, 0.0]), alpha=0.05) == 1

    @pytest.mark.parametrize("alpha", [0.0, 1.0, -0.5])
    def test_alpha_out_of_range(self, alpha):
        with pytest.raises(ValueError, match="alpha"):
            select_K_fve(np.array([1.0]), alpha=alpha)

    def test_zero_spectrum_rejected(self):
        with pytest.raises(DegenerateSpectrumError):
            select_K_fve(np.zeros(4))


class TestReconstruct:
    def test_zero_components_is_mean(self, unit_grid):
        mean = GridFunction(unit_grid, np.sin(unit_grid.points))
        out = reconstruct(mean, [], np.array([]), 0)
        assert_array_equal(out.values, mean.values)
        assert out.values is not mean.values

    def test_sums_scaled_components(self, unit_grid):
        mean = GridFunction(unit_grid, np.zeros(unit_grid.size))
        phi1 = GridFunction(unit_grid, np.ones(unit_grid.size))
        phi2 = GridFunction(unit_grid, unit_grid.points.copy())
        out = reconstruct(mean, [phi1, phi2], np.array([2.0, -1.0]), 2)
        assert_allclose(out.values, 2.0 - unit_grid.points, rtol=1e-15)

    def test_truncation_out_of_range(self, unit_grid):
        mean = GridFunction(unit_grid, np.zeros(unit_grid.size))
        phi = GridFunction(unit_grid, np.ones(unit_grid.size))
        with pytest.raises(ValueError, match="between 0 and"):
            reconstruct(mean, [phi], np.array([1.0]), 2)
        with pytest.raises(ValueError, match="between 0 and"):
            reconstruct(mean, [phi], np.array([1.0]), -1)


class TestModelValidation:
    def _pieces(self, unit_grid):
        mean = GridFunction(unit_grid, np.zeros(unit_grid.size))
        phi = GridFunction(unit_grid, np.ones(unit_grid.size))
        return mean, phi

    def test_K_beyond_components(self, unit_grid):
        mean, phi = self._pieces(unit_grid)
        with pytest.raises(ValueError, match="K must lie"):
            FpcaModel(mean, np.array([1.0]), [phi], 0.0, np.zeros((2, 1)), 2,
                      0.1, 0.1, "epanechnikov", "integration")

    def test_score_columns_must_match(self, unit_grid):
        mean, phi = self._pieces(unit_grid)
        with pytest.raises(ValueError, match="one column per component"):
            FpcaModel(mean, np.array([1.0]), [phi], 0.0, np.zeros((2, 2)), 1,
                      0.1, 0.1, "epanechnikov", "integration")


@pytest.fixture(scope="module")
def fitted():
    samples, info = kl_dataset(n=60, n_obs=40, sigma=0.0, seed=0)
    return fit_fpca(samples, grid=info["grid"]), info


class TestFitFpca:
    def test_needs_two_subjects(self):
        samples, _ = kl_dataset(n=2, n_obs=10)
        with pytest.raises(InsufficientDataError):
            fit_fpca(samples[:1])

    def test_selects_two_components(self, fitted):
        model, _ = fitted
        assert model.K == 2
        assert model.score_method == "integration"

    def test_eigenvalues_near_truth(self, fitted):
        model, info = fitted
        xi = info["xi"]
        # Sample variances of the drawn scores, not the population 4, 1.
        target = np.var(xi, axis=0, ddof=0)
        assert model.eigenvalues[0] == pytest.approx(target[0], rel=0.15)
        assert model.eigenvalues[1] == pytest.approx(target[1], rel=0.15)

    def test_orthonormal_eigenfunctions(self, fitted):
        model, _ = fitted
        check_orthonormal_eigenfunctions(model, atol=1e-6)

    def test_mean_curve_near_truth(self, fitted):
        # Pooled cross-subject spread acts as noise for the GCV
        # bandwidth, so the wavy mean carries visible smoothing bias;
        # a flattened estimate would sit near 0.7 away.
        model, info = fitted
        truth = GridFunction(model.grid, info["mean"](model.grid.points))
        assert l2_distance(model.mean, truth) < 0.25

    def test_scores_near_generating_draws(self, fitted):
        model, info = fitted
        xi = info["xi"]
        for k in range(2):
            err = np.abs(model.scores[:, k] - xi[:, k])
            assert np.median(err) < 0.2

    def test_pairwise_l2_matches_score_distance(self, fitted):
        # Orthonormality makes the truncated fits isometric to their
        # score vectors.
        model, _ = fitted
        from_curves = pairwise_l2(model.fitted_curves())
        from_scores = pairwise_l2_scores(model.scores[:, : model.K])
        assert float(np.max(np.abs(from_curves - from_scores))) < 1e-8

    def test_fitted_curve_expansion(self, fitted):
        model, _ = fitted
        manual = model.mean.values + model.scores[3, 0] * model.eigenfunctions[0].values
        assert_allclose(model.fitted_curve(3, K=1).values, manual, rtol=1e-12)

    def test_min_components_keeps_K(self, fitted):
        model, info = fitted
        samples, _ = kl_dataset(n=60, n_obs=40, sigma=0.0, seed=0)
        wide = fit_fpca(
            samples,
            grid=info["grid"],
            h_mu=model.h_mu,
            h_G=model.h_G,
            min_components=5,
        )
        assert len(wide.eigenvalues) == 5
        assert wide.K == model.K
        assert_allclose(wide.eigenvalues[: model.K], model.eigenvalues[: model.K], rtol=1e-12)

    def test_sigma2_recovers_noise_variance(self):
        # Components 1 and sqrt(3)(2t - 1) keep the covariance surface
        # flat in each coordinate, so the variance-minus-diagonal gap
        # carries only the O(h^2) bias of the 1d variance smooth; a
        # small fixed bandwidth keeps that below the test tolerance.
        rng = np.random.default_rng(1)
        times = np.linspace(0.0, 1.0, 40)
        xi = rng.normal(size=(80, 2)) * np.sqrt([4.0, 1.0])
        phi2 = math.sqrt(3.0) * (2.0 * times - 1.0)
        signal = 0.5 * times[None, :] + xi[:, :1] + xi[:, 1:] * phi2
        noisy = signal + 0.5 * rng.normal(size=signal.shape)
        model = fit_fpca(
            curve_samples(noisy, times), grid=Grid.uniform(0.0, 1.0, 101), h_G=0.08
        )
        assert model.sigma2 == pytest.approx(0.25, rel=0.2)

    def test_noise_only_data_attributed_to_sigma2(self):
        # Excluding same-time pairs keeps white noise out of the
        # covariance surface; it lands in sigma2 instead.
        rng = np.random.default_rng(5)
        times = np.linspace(0.0, 1.0, 25)
        samples = curve_samples(rng.normal(size=(60, 25)), times)
        model = fit_fpca(samples, grid=Grid.uniform(0.0, 1.0, 51))
        assert model.sigma2 == pytest.approx(1.0, rel=0.35)
        assert float(np.sum(model.eigenvalues)) < 0.5

    def test_sparse_design_switches_to_conditional(self):
        samples, info = kl_dataset(n=30, n_obs=10, sigma=0.1, seed=2)
        model = fit_fpca(samples, grid=info["grid"])
        assert model.score_method == "conditional"

    def test_score_method_override(self):
        samples, info = kl_dataset(n=30, n_obs=10, sigma=0.1, seed=2)
        model = fit_fpca(samples, grid=info["grid"], score_method="integration")
        assert model.score_method == "integration"


class TestJsonRoundTrip:
    def test_round_trip_preserves_arrays(self):
        samples, info = kl_dataset(n=12, n_obs=15, sigma=0.2, seed=4, grid_size=31)
        model = fit_fpca(samples, grid=info["grid"])
        clone = FpcaModel.from_json(model.to_json())
        assert_array_equal(clone.mean.values, model.mean.values)
        assert_array_equal(clone.eigenvalues, model.eigenvalues)
        assert_array_equal(clone.scores, model.scores)
        assert clone.K == model.K
        assert clone.kernel == model.kernel

    def test_double_round_trip_is_stable(self):
        samples, info = kl_dataset(n=12, n_obs=15, sigma=0.2, seed=4, grid_size=31)
        model = fit_fpca(samples, grid=info["grid"])
        text = model.to_json()
        assert FpcaModel.from_json(text).to_json() == text


class TestLeaveOneOut:
    def test_loo_means_match_direct_refit(self):
        samples, info = kl_dataset(n=6, n_obs=12, sigma=0.3, seed=7, grid_size=31)
        grid = info["grid"]
        h_mu = 0.25
        means = loo_means(samples, grid, h_mu)
        assert means.shape == (grid.size, 6)
        for i in range(6):
            rest = samples[:i] + samples[i + 1 :]
            direct = estimate_mean(rest, grid, h_mu=h_mu)
            assert_allclose(means[:, i], direct.values, atol=1e-10)

    def test_loo_reconstructions_match_direct_refit(self):
        samples, info = kl_dataset(n=6, n_obs=10, sigma=0.2, seed=8, grid_size=21)
        grid = info["grid"]
        h_mu, h_G = 0.25, 0.35
        results = loo_reconstructions(samples, grid, dims=(1, 2), h_mu=h_mu, h_G=h_G)
        assert len(results) == 6
        for i, sample in enumerate(samples):
            rest = samples[:i] + samples[i + 1 :]
            mean_i = estimate_mean(rest, grid, h_mu=h_mu)
            surface, _ = estimate_covariance(rest, grid, mean_i, h_G=h_G)
            values, functions = eigendecompose(surface, grid)
            keep = int(np.sum(values > 0.0))
            use = min(2, keep)
            xi = scores_integration(sample, mean_i, functions[:use])
            for d in (1, 2):
                direct = reconstruct(mean_i, functions[:use], xi, min(d, use))
                assert_allclose(results[i][d].values, direct.values, atol=1e-8)

    def test_needs_three_subjects(self, unit_grid):
        samples, _ = kl_dataset(n=4, n_obs=8)
        with pytest.raises(InsufficientDataError):
            loo_reconstructions(samples[:2], unit_grid, dims=(1,))
