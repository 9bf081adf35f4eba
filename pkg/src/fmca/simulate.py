"""Synthetic curve families on known low-dimensional manifolds.

Three generators produce samples whose variation is governed by one or
two latent parameters: a random time warp of a fixed two-bump shape, a
family of Gaussian densities with random width and center, and a
two-peak mixture with randomly shifted centers.  Observations are the
true curves at equally spaced times plus Gaussian noise whose variance
is a stated fraction of the signal variance, pooled about the
cross-sectional mean curve.

All randomness flows through a counter-based generator and an inverse
normal CDF transform, so a seed reproduces identical draws across
platforms and numpy versions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import betainc, ndtri

from .grids import CurveSample, Grid, GridFunction

MANIFOLDS = ("m1", "m2", "m3")

# Recorded in run manifests so every artifact states which noise
# convention produced it.
NOISE_DEFINITION = (
    "noise variance = noise_ratio times the pooled variance of the "
    "noiseless signal about its cross-sectional mean"
)

DOMAIN_START = -4.0
DOMAIN_STOP = 4.0
DEFAULT_GRID_SIZE = 101

# The warp family is defined for alpha > -1; draws capped at the
# boundary are nudged inside so the incomplete-beta ratio stays
# defined, which matches the limiting warp continuously.
_WARP_ALPHA_FLOOR = -1.0 + 1e-12

_SQRT_2PI = math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class SimSpec:
    """Settings for one synthetic dataset."""

    manifold_id: str
    n: int = 200
    points_per_curve: int = 30
    noise_ratio: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.manifold_id not in MANIFOLDS:
            raise ValueError(f"unknown manifold id {self.manifold_id!r}; expected one of {MANIFOLDS}")
        if self.n < 2:
            raise ValueError("need at least 2 subjects")
        if self.points_per_curve < 2:
            raise ValueError("need at least 2 points per curve")
        if self.noise_ratio < 0:
            raise ValueError("noise ratio must be nonnegative")


@dataclass(frozen=True, eq=False)
class SimOutput:
    """Generated dataset: noisy samples, aligned truth, and latents."""

    spec: SimSpec
    samples: list
    truth: list
    params: dict
    grid: Grid
    noise_sigma2: float


def sample_times(spec):
    """Observation times, equally spaced over the domain."""
    return np.linspace(DOMAIN_START, DOMAIN_STOP, spec.points_per_curve)


def working_grid(num=DEFAULT_GRID_SIZE):
    """Dense evaluation grid over the domain."""
    return Grid.uniform(DOMAIN_START, DOMAIN_STOP, num)


def _normals(rng, size):
    """Standard normals via inverse CDF of 53-bit uniforms.

    Uses only integer draws from the generator, so results are stable
    wherever the generator's integer stream is.
    """
    u = (rng.integers(0, 1 << 53, size=size) + 0.5) * 2.0**-53
    return ndtri(u)


def shape_m1(t):
    """Common two-bump shape that the warp family deforms."""
    t = np.asarray(t, dtype=float)
    return (2.0 / math.sqrt(math.pi)) * np.exp(-0.5 * (t + 2.0) ** 2) + (
        1.0 / _SQRT_2PI
    ) * np.exp(-2.0 * (t - 2.0) ** 2)


def warp_m1(alpha, t):
    """Monotone time warp of the domain onto itself.

    The normalized cumulative integral of s^alpha (1 - s) maps
    [0, 1] onto [0, 1]; rescaled to the domain it fixes both
    endpoints.  Evaluated through the regularized incomplete beta
    function, which equals that ratio exactly.
    """
    alpha = max(float(alpha), _WARP_ALPHA_FLOOR)
    t = np.asarray(t, dtype=float)
    x = np.clip(t / 8.0 + 0.5, 0.0, 1.0)
    return 8.0 * betainc(alpha + 1.0, 2.0, x) - 4.0


def curve_m1(alpha, t):
    return shape_m1(warp_m1(alpha, t))


def curve_m2(alpha, beta, t):
    """Gaussian density with width alpha and center beta."""
    t = np.asarray(t, dtype=float)
    return np.exp(-((t - beta) ** 2) / (2.0 * alpha**2)) / (alpha * _SQRT_2PI)


def curve_m3(alpha, beta, t):
    """Two-peak mixture with independently shifted centers."""
    t = np.asarray(t, dtype=float)
    return np.exp(-0.5 * (t - 0.8 - alpha) ** 2) / _SQRT_2PI + np.exp(
        -((t + 0.8 - beta) ** 2)
    ) / math.sqrt(math.pi)


def _draw_params(spec, rng):
    """Latent parameter draws for each subject, sequential per subject
    so redraws stay local to the subject that needed them."""
    alphas = np.empty(spec.n)
    betas = np.full(spec.n, np.nan)
    for i in range(spec.n):
        if spec.manifold_id == "m1":
            alphas[i] = max(-1.0, 0.3 * float(_normals(rng, 1)[0]))
        elif spec.manifold_id == "m2":
            alpha = 0.0
            while alpha <= 0.0:
                alpha = max(0.0, 1.0 + 0.2 * float(_normals(rng, 1)[0]))
            alphas[i] = alpha
            betas[i] = float(_normals(rng, 1)[0])
        else:
            alphas[i] = float(_normals(rng, 1)[0])
            betas[i] = float(_normals(rng, 1)[0])
    return alphas, betas


def _evaluate(spec, alphas, betas, t):
    rows = np.empty((spec.n, np.asarray(t).size))
    for i in range(spec.n):
        if spec.manifold_id == "m1":
            rows[i] = curve_m1(alphas[i], t)
        elif spec.manifold_id == "m2":
            rows[i] = curve_m2(alphas[i], betas[i], t)
        else:
            rows[i] = curve_m3(alphas[i], betas[i], t)
    return rows


def signal_variance(noiseless):
    """Pooled variance of the signal about its cross-sectional mean.

    When all subjects share the same observation times the values are
    centered per time point, so the deterministic mean curve does not
    count as signal variance.  Otherwise the values are pooled and
    centered by their grand mean, the closest analog available without
    estimating a mean function.
    """
    times0 = np.asarray(noiseless[0].times)
    common = all(
        np.asarray(s.times).shape == times0.shape
        and np.array_equal(np.asarray(s.times), times0)
        for s in noiseless
    )
    if common:
        values = np.vstack([s.values for s in noiseless])
        return float(np.var(values - values.mean(axis=0)))
    return float(np.var(np.concatenate([s.values for s in noiseless])))


def add_noise(noiseless, noise_ratio, seed):
    """Add white Gaussian noise scaled to the signal variance.

    Parameters
    ----------
    noiseless : list of CurveSample
        True curve values at the observation times.
    noise_ratio : float
        Noise variance as a fraction of the signal variance, the
        pooled variance of the noiseless values about their
        cross-sectional mean (see :func:`signal_variance`).
    seed : int or SeedSequence

    Returns
    -------
    tuple
        ``(samples, sigma2)``: the noisy samples and the noise
        variance actually applied.
    """
    if noise_ratio < 0:
        raise ValueError("noise ratio must be nonnegative")
    sigma2 = float(noise_ratio * signal_variance(noiseless))
    if sigma2 == 0.0:
        return list(noiseless), 0.0
    rng = np.random.default_rng(seed)
    sigma = math.sqrt(sigma2)
    noisy = []
    for sample in noiseless:
        eps = sigma * _normals(rng, sample.n_obs)
        noisy.append(CurveSample(sample.subject_id, sample.times, sample.values + eps))
    return noisy, sigma2


def generate(spec, grid=None):
    """Generate one dataset according to its spec.

    Returns a SimOutput whose samples carry noisy observations at the
    shared observation times and whose truth curves are evaluated on
    the working grid.
    """
    if grid is None:
        grid = working_grid()
    seq = np.random.SeedSequence(spec.seed)
    param_seq, noise_seq = seq.spawn(2)
    rng = np.random.default_rng(param_seq)
    alphas, betas = _draw_params(spec, rng)
    times = sample_times(spec)
    signal = _evaluate(spec, alphas, betas, times)
    noiseless = [
        CurveSample(f"s{i:03d}", times, signal[i]) for i in range(spec.n)
    ]
    samples, sigma2 = add_noise(noiseless, spec.noise_ratio, noise_seq)
    truth_rows = _evaluate(spec, alphas, betas, grid.points)
    truth = [GridFunction(grid, truth_rows[i]) for i in range(spec.n)]
    params = {"alpha": alphas}
    if spec.manifold_id in ("m2", "m3"):
        params["beta"] = betas
    return SimOutput(
        spec=spec,
        samples=samples,
        truth=truth,
        params=params,
        grid=grid,
        noise_sigma2=sigma2,
    )


def gen_m1(spec, grid=None):
    """Warped-shape family; see :func:`generate`."""
    if spec.manifold_id != "m1":
        raise ValueError("spec is not for the warp family")
    return generate(spec, grid)


def gen_m2(spec, grid=None):
    """Gaussian-density family; see :func:`generate`."""
    if spec.manifold_id != "m2":
        raise ValueError("spec is not for the density family")
    return generate(spec, grid)


def gen_m3(spec, grid=None):
    """Two-peak family; see :func:`generate`."""
    if spec.manifold_id != "m3":
        raise ValueError("spec is not for the two-peak family")
    return generate(spec, grid)
