"""Free Schrodinger group and its dispersive properties.

Sign convention (used everywhere in the package): S(t) = exp(-i t Laplacian)
solves i du/dt = Laplacian u, and acts on coefficients as multiplication by
exp(i t |2 pi xi|^2).
"""
from __future__ import annotations

import math
from fractions import Fraction

import numpy as np

from .fitting import FitReport, fit_power_law
from .parallel import replica_map
from .spectral import FREQUENCY, GridSpec, SpectralField, Trajectory, lebesgue_norm

WRAP_BAND_FRACTION = 1.0 / 8.0
WRAP_MASS_TOLERANCE = 1e-6


class WrapAroundError(ValueError):
    """Requested times leave the window where the box mimics R^d."""


def propagator_symbol(grid: GridSpec, t) -> np.ndarray:
    """exp(i t |2 pi xi|^2); ``t`` may be an array, giving leading batch axes."""
    t = np.asarray(t, float)
    return np.exp(1j * t.reshape(t.shape + (1,) * grid.d) * grid.omega)


def evolve(f: SpectralField, t: float) -> SpectralField:
    """S(t) f."""
    if t == 0:
        return f
    return SpectralField(f.grid, propagator_symbol(f.grid, t) * f.frequency(), FREQUENCY)


def group_property_check(f: SpectralField, t1: float, t2: float) -> float:
    """||S(t1 + t2) f - S(t1) S(t2) f||_{L^2}."""
    lhs = evolve(f, t1 + t2).frequency()
    rhs = evolve(evolve(f, t2), t1).frequency()
    return float(np.linalg.norm(lhs - rhs))


def is_admissible(q: float, r: float, d: int) -> bool:
    """Schrodinger admissibility 2/q + d/r = d/2, excluding (2, inf, 2)."""
    if not (2 <= q <= math.inf and 2 <= r <= math.inf):
        return False
    if q == 2 and r == math.inf and d == 2:
        return False
    lhs = (0.0 if q == math.inf else 2.0 / q) + (0.0 if r == math.inf else d / r)
    return abs(lhs - d / 2.0) <= 1e-12


def admissible_exact(q: Fraction | None, r: Fraction | None, d: int) -> bool:
    """Exact rational version of :func:`is_admissible`; ``None`` stands for infinity."""
    inv_q = Fraction(0) if q is None else 1 / Fraction(q)
    inv_r = Fraction(0) if r is None else 1 / Fraction(r)
    if not (inv_q <= Fraction(1, 2) and inv_r <= Fraction(1, 2)):
        return False
    if q == 2 and r is None and d == 2:
        return False
    return 2 * inv_q + d * inv_r == Fraction(d, 2)


def dual_exponent(r: float) -> float:
    if r == math.inf:
        return 1.0
    if r == 1:
        return math.inf
    return r / (r - 1.0)


def edge_mass_fraction(f: SpectralField) -> float:
    """Share of the L^2 mass inside the box-edge band of width L/8."""
    band = f.grid.edge_band(WRAP_BAND_FRACTION * f.grid.L)
    dens = np.abs(f.physical()) ** 2
    total = dens.sum()
    return 0.0 if total == 0 else float(dens[band].sum() / total)


def check_wraparound(f: SpectralField, times) -> list[float]:
    """Edge-mass fractions of S(t) f; raises if any exceeds the tolerance."""
    fractions = [edge_mass_fraction(evolve(f, t)) for t in times]
    bad = [t for t, m in zip(times, fractions) if m > WRAP_MASS_TOLERANCE]
    if bad:
        raise WrapAroundError(
            f"times {bad} leave the wrap-around window: edge-band mass exceeds "
            f"{WRAP_MASS_TOLERANCE:g} of the total"
        )
    return fractions


def time_ladder(t_min: float, t_max: float, per_decade: int = 8) -> np.ndarray:
    """Geometric ladder from t_min to t_max with at least ``per_decade`` points per decade."""
    decades = math.log10(t_max / t_min)
    n = max(2, int(math.ceil(per_decade * decades)) + 1)
    return np.geomspace(t_min, t_max, n)


def dispersive_decay_fit(f: SpectralField, r: float, times, threads: int | None = None) -> FitReport:
    """Fit the decay exponent of ||S(t) f||_{L^r} over ``times``.

    The report carries the predicted exponent -(d/2 - d/r) and, in its
    metadata, the ratios ||S(t) f||_{L^r} t^{d/2 - d/r} / ||f||_{L^{r'}} at every
    time, which should stay bounded.
    """
    times = np.asarray(times, float)
    if np.any(times <= 0):
        raise ValueError("decay times must be positive")
    grid = f.grid
    edge = check_wraparound(f, times)
    d = grid.d
    rate = d / 2.0 - (0.0 if r == math.inf else d / r)
    coeffs = f.frequency()

    def one(j: int) -> float:
        u = np.asarray(evolve(SpectralField(grid, coeffs, FREQUENCY), times[j]).physical())
        return float(lebesgue_norm(grid, u, r))

    norms = np.array(replica_map(one, len(times), threads))
    dual = float(lebesgue_norm(grid, f.physical(), dual_exponent(r)))
    ratios = norms * times ** rate / dual
    report = fit_power_law(times, norms, predicted=-rate)
    report.metadata = {
        "d": d,
        "r": r,
        "L": grid.L,
        "N": grid.N,
        "T_window": [float(times[0]), float(times[-1])],
        "times": times.tolist(),
        "norms": norms.tolist(),
        "ratios": ratios.tolist(),
        "ratio_sup": float(ratios.max()),
        "edge_mass": edge,
    }
    return report


def decay_row(report: FitReport) -> dict:
    """Flat record (d, r, fitted_exponent, predicted_exponent, residual, n_points, T_window)."""
    meta = report.metadata
    return {
        "d": meta["d"],
        "r": meta["r"],
        "fitted_exponent": report.exponent_hat,
        "predicted_exponent": report.exponent_predicted,
        "residual": report.residual,
        "n_points": report.n_points,
        "T_window": f"{meta['T_window'][0]!r}:{meta['T_window'][1]!r}",
    }


def duhamel_trajectory(grid: GridSpec, times: np.ndarray, forcing: np.ndarray) -> np.ndarray:
    """Trapezoidal int_0^{t_m} S(t_m - t') F(t') dt' at every grid time.

    ``forcing`` holds F(t_j) as coefficients, shape (M+1, N, ..., N).  Uses the
    recursion I_m = S(dt) (I_{m-1} + dt/2 F_{m-1}) + dt/2 F_m, which equals the
    composite trapezoid rule with the group applied to each slice.
    """
    dt = float(times[1] - times[0]) if len(times) > 1 else 0.0
    step = propagator_symbol(grid, dt)
    out = np.empty_like(forcing)
    out[0] = 0.0
    half = 0.5 * dt
    for m in range(1, len(times)):
        out[m] = step * (out[m - 1] + half * forcing[m - 1]) + half * forcing[m]
    return out


def duhamel_integral(F: Trajectory, t: float) -> SpectralField:
    """int_0^t S(t - t') F(t') dt' for ``t`` on the stored time grid."""
    if t < 0 or t > F.T * (1 + 1e-12):
        raise ValueError(f"t = {t} is outside the stored horizon [0, {F.T}]")
    m = int(round(t / F.dt)) if len(F) > 1 else 0
    if not math.isclose(F.times[m], t, rel_tol=1e-9, abs_tol=1e-12):
        raise ValueError(f"t = {t} is not a stored grid time")
    vals = duhamel_trajectory(F.grid, F.times[: m + 1], F.values[: m + 1])
    return SpectralField(F.grid, vals[m], FREQUENCY)
