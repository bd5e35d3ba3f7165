"""Wiener (unit-scale) randomization of initial data.

The window is the tensor product psi(xi) = prod_i c(xi_i) with the raised
cosine c(x) = cos^2(pi x / 2) on [-1, 1].  Since c(x) + c(x - 1) = 1 on [0, 1],
the translates psi(xi - n), n in Z^d, sum to one exactly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fitting import FitReport
from .parallel import replica_map, stream_rng
from .propagator import propagator_symbol
from .spectral import FREQUENCY, GridSpec, NormSpec, SpectralField, sobolev_norms, time_integral_norm

DISTRIBUTIONS = ("complex-gaussian", "bernoulli")
WINDOWS = ("raised-cosine", "constant")


def raised_cosine(x):
    x = np.asarray(x, float)
    return np.where(np.abs(x) < 1.0, np.cos(0.5 * np.pi * x) ** 2, 0.0)


@dataclass(frozen=True)
class RandomizationSpec:
    """Window, coefficient law and coefficient variance.

    ``complex-gaussian`` draws independent real and imaginary parts of variance
    sigma2 / 2.  ``bernoulli`` draws sqrt(sigma2) * (+1 or -1) on the real part
    only; both laws satisfy the sub-Gaussian exponential moment bound.  The
    ``constant`` window (psi = 1) is a diagnostic, not a partition of unity.
    """

    distribution: str = "complex-gaussian"
    sigma2: float = 1.0
    window: str = "raised-cosine"

    def __post_init__(self):
        if self.distribution not in DISTRIBUTIONS:
            raise ValueError(f"distribution must be one of {DISTRIBUTIONS}")
        if self.window not in WINDOWS:
            raise ValueError(f"window must be one of {WINDOWS}")
        if not self.sigma2 > 0:
            raise ValueError("sigma2 must be positive")

    def window_1d(self, x):
        if self.window == "constant":
            return np.ones_like(np.asarray(x, float))
        return raised_cosine(x)


def cube_centers(grid: GridSpec) -> np.ndarray:
    """Lattice centres n_i whose windows meet the grid frequency range (one axis)."""
    lo = math.floor(grid.xi_axis.min())
    hi = math.floor(grid.xi_axis.max()) + 1
    return np.arange(lo, hi + 1)


def window_matrix(grid: GridSpec, spec: RandomizationSpec) -> np.ndarray:
    """W[a, k] = c(xi_k - n_a) for the 1D cube centres n_a."""
    centers = cube_centers(grid)
    return spec.window_1d(grid.xi_axis[None, :] - centers[:, None])


def window_symbol(grid: GridSpec, spec: RandomizationSpec, n) -> np.ndarray:
    n = (n,) * grid.d if np.isscalar(n) else tuple(n)
    out = np.ones(grid.shape)
    for axis, ni in enumerate(n):
        w = spec.window_1d(grid.xi_axis - ni)
        out = out * w.reshape((-1,) + (1,) * (grid.d - axis - 1))
    return out


def cube_project(u0: SpectralField, n, spec: RandomizationSpec) -> SpectralField:
    """psi(D - n) u0."""
    return SpectralField(u0.grid, window_symbol(u0.grid, spec, n) * u0.frequency(), FREQUENCY)


def coefficient_symbol(grid: GridSpec, spec: RandomizationSpec, g: np.ndarray) -> np.ndarray:
    """sum_n g_n psi(xi - n) on the lattice, for a coefficient tensor over cube centres."""
    W = window_matrix(grid, spec)
    out = np.asarray(g, complex)
    # contract one cube axis at a time against its window matrix
    for _ in range(grid.d):
        out = np.tensordot(out, W, axes=([0], [0]))
    return out


def draw_coefficients(grid: GridSpec, spec: RandomizationSpec, rng: np.random.Generator) -> np.ndarray:
    shape = (len(cube_centers(grid)),) * grid.d
    if spec.distribution == "bernoulli":
        return math.sqrt(spec.sigma2) * rng.choice([-1.0, 1.0], size=shape).astype(complex)
    z = rng.standard_normal((2,) + shape)
    return math.sqrt(spec.sigma2 / 2.0) * (z[0] + 1j * z[1])


def apply_coefficients(u0: SpectralField, spec: RandomizationSpec, g: np.ndarray) -> SpectralField:
    return SpectralField(u0.grid, coefficient_symbol(u0.grid, spec, g) * u0.frequency(), FREQUENCY)


def wiener_randomize(u0: SpectralField, spec: RandomizationSpec, rng: np.random.Generator | None = None,
                     coefficients: np.ndarray | None = None) -> SpectralField:
    """u0^omega = sum_n g_n psi(D - n) u0 with i.i.d. g_n.

    Passing ``coefficients`` fixes the g_n instead of drawing them; all ones
    reproduces u0.
    """
    if coefficients is None:
        if rng is None:
            raise ValueError("either rng or coefficients is required")
        coefficients = draw_coefficients(u0.grid, spec, rng)
    return apply_coefficients(u0, spec, coefficients)


def cube_sq_norms(u0: SpectralField, spec: RandomizationSpec, s: float = 0.0) -> np.ndarray:
    """||psi(D - n) u0||_{H^s}^2 for every cube centre n."""
    grid = u0.grid
    W2 = window_matrix(grid, spec) ** 2
    dens = grid.bracket(2 * s) * np.abs(u0.frequency()) ** 2
    out = dens
    for _ in range(grid.d):
        out = np.tensordot(out, W2, axes=([0], [1]))
    return out


def expected_sq_norm(u0: SpectralField, spec: RandomizationSpec, s: float = 0.0) -> float:
    """E||u0^omega||_{H^s}^2 = sigma^2 sum_n ||psi(D - n) u0||_{H^s}^2."""
    return float(spec.sigma2 * cube_sq_norms(u0, spec, s).sum())


def linear_spacetime_norm(u0: SpectralField, norm: NormSpec, M: int) -> float:
    """||S(t) u0||_{L^q_T W^{s,r}} on a uniform grid of M steps."""
    grid = u0.grid
    times = np.linspace(0.0, norm.T, M + 1)
    coeffs = propagator_symbol(grid, times) * u0.frequency()
    norms = np.atleast_1d(sobolev_norms(grid, coeffs, norm.s, norm.r))
    return time_integral_norm(times, norms, norm.q)


def randomized_norm_samples(u0: SpectralField, spec: RandomizationSpec, norm: NormSpec,
                            n_samples: int, seed: int, M: int = 32,
                            threads: int | None = None, stream: str = "randomize") -> np.ndarray:
    """i.i.d. samples of ||S(t) u0^omega||_{L^q_T W^{s,r}}, one Philox stream per sample."""

    def one(i: int) -> float:
        rng = stream_rng(seed, stream, i)
        return linear_spacetime_norm(wiener_randomize(u0, spec, rng), norm, M)

    return np.array(replica_map(one, n_samples, threads))


def tail_fit(samples: np.ndarray, top: float = 0.1) -> FitReport:
    """Sub-Gaussian tail fit on the top ``top`` fraction of the samples.

    Fits log P(X > k) = a - c (k - median)^2 by least squares on the empirical
    survival function; ``exponent_hat`` is the rate c.  The metadata also
    lists log P(X > k) / k^2 over the same points.
    """
    x = np.sort(np.asarray(samples, float))
    n = len(x)
    med = float(np.median(x))
    start = int(math.floor((1.0 - top) * n))
    ks = x[start: n - 1]
    surv = 1.0 - (np.arange(start, n - 1) + 1.0) / n
    meta = {"median": med, "q90": float(np.quantile(x, 0.9)), "q99": float(np.quantile(x, 0.99)),
            "max": float(x[-1]), "n_samples": n}
    if len(ks) < 3 or np.ptp(ks) == 0:
        return FitReport(0.0, None, 0.0, 0.0, len(ks), (0.0, 0.0), 0.0, meta)
    u = (ks - med) ** 2
    A = np.vstack([np.ones_like(u), -u]).T
    (a, c), *_ = np.linalg.lstsq(A, np.log(surv), rcond=None)
    resid = np.log(surv) - (a - c * u)
    sst = np.sum((np.log(surv) - np.log(surv).mean()) ** 2)
    r2 = float(np.clip(1.0 - np.sum(resid ** 2) / sst, 0.0, 1.0)) if sst > 0 else 1.0
    dof = max(len(ks) - 2, 1)
    se = math.sqrt(np.sum(resid ** 2) / dof / np.sum((u - u.mean()) ** 2))
    meta["tail_ratio"] = (np.log(surv) / ks ** 2).tolist()
    return FitReport(float(c), None, float(a), r2, len(ks), (float(c - 1.96 * se), float(c + 1.96 * se)),
                     float(np.sqrt(np.mean(resid ** 2))), meta)


def randomized_strichartz_probe(u0: SpectralField, spec: RandomizationSpec, norm: NormSpec,
                                n_samples: int, seed: int, M: int = 32,
                                threads: int | None = None) -> FitReport:
    """Monte Carlo law of ||S(t) u0^omega||_{L^q_T W^{s,r}} with a Gaussian tail fit."""
    if norm.q == math.inf or norm.r == math.inf:
        raise ValueError("the probabilistic Strichartz probe needs finite q and r")
    samples = randomized_norm_samples(u0, spec, norm, n_samples, seed, M, threads)
    if not np.any(samples):
        meta = {"median": 0.0, "q90": 0.0, "q99": 0.0, "max": 0.0, "n_samples": n_samples}
        report = FitReport(0.0, None, 0.0, 0.0, 0, (0.0, 0.0), 0.0, meta)
    else:
        report = tail_fit(samples)
    report.metadata.update({"q": norm.q, "r": norm.r, "s": norm.s, "T": norm.T, "seed": seed,
                            "samples": samples.tolist()})
    return report
