"""Residual equation v = u - Psi: Picard iteration of the Duhamel map.

    Gamma v(t) = S(t) u0 + int_0^t S(t - t') N(v + Psi)(t') dt',   N(u) = i |u|^{p-1} u.

A Strang split-step integrator, driven by the same noise increments, serves
as an independent oracle.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .noise import NoisePath, SmoothingOperator, sample_convolution, zero_path
from .parallel import replica_map, stream_rng
from .propagator import duhamel_trajectory, propagator_symbol
from .spectral import (FREQUENCY, GridSpec, SpectralField, Trajectory, forward, inverse,
                       scaling_critical_regularity, sobolev_norms, time_integral_norm)

BLOWUP_LEVEL = 1e12


class ExistenceHorizonExceeded(RuntimeError):
    """Picard iteration stopped contracting on the requested horizon."""

    def __init__(self, message: str, last_ratio: float | None, ratios: list[float], iterations: int):
        super().__init__(message)
        self.last_ratio = last_ratio
        self.ratios = ratios
        self.iterations = iterations


@dataclass(frozen=True)
class NonlinearitySpec:
    """Defocusing power nonlinearity N(u) = i * strength * |u|^{p-1} u.

    ``strength = 0`` switches the nonlinear term off.
    """

    p: float
    strength: float = 1.0

    def __post_init__(self):
        if not self.p >= 1:
            raise ValueError("p must be at least 1")

    @property
    def odd(self) -> bool:
        return float(self.p).is_integer() and int(self.p) % 2 == 1

    def apply(self, u: np.ndarray) -> np.ndarray:
        """Pointwise N(u) on physical samples."""
        if self.strength == 0:
            return np.zeros_like(u)
        if self.odd:
            mod = (u.real ** 2 + u.imag ** 2) ** ((int(self.p) - 1) // 2)
        else:
            mod = np.abs(u) ** (self.p - 1)
        return (1j * self.strength) * mod * u

    def phase_flow(self, u: np.ndarray, tau: float) -> np.ndarray:
        """Exact flow of du/dt = N(u) over time tau (|u| is conserved)."""
        if self.strength == 0:
            return u
        return u * np.exp((1j * self.strength * tau) * np.abs(u) ** (self.p - 1))


def nonlinearity(u: SpectralField, spec: NonlinearitySpec, dealias: bool = False) -> SpectralField:
    """N(u) evaluated in physical space, returned as coefficients."""
    coeffs = forward(u.grid, spec.apply(np.asarray(u.physical())))
    if dealias:
        coeffs = coeffs * u.grid.dealias_mask()
    return SpectralField(u.grid, coeffs, FREQUENCY)


@dataclass(frozen=True)
class WorkingNorm:
    """C_T W^{s1, r} (``kind='sup'``) or L^q_T W^{s1, r} (``kind='lq'``)."""

    kind: str = "sup"
    s1: float = 0.0
    r: float = 2.0
    q: float = math.inf

    def __call__(self, grid: GridSpec, times: np.ndarray, coeffs: np.ndarray) -> float:
        norms = np.atleast_1d(sobolev_norms(grid, coeffs, self.s1, self.r))
        if self.kind == "sup":
            return float(norms.max())
        return time_integral_norm(times, norms, self.q)

    def pointwise(self, grid: GridSpec, coeffs: np.ndarray) -> np.ndarray:
        return np.atleast_1d(sobolev_norms(grid, coeffs, self.s1, self.r))


def ib_time_exponent(d: int, p: float, eps: float = 0.01) -> float:
    """q solving 1/q + 1 = (d/2 - d/(p+1) + eps) + p/q."""
    denom = 1.0 - (d / 2.0 - d / (p + 1.0) + eps)
    if denom <= 0:
        raise ValueError("no finite q for these (d, p)")
    return (p - 1.0) / denom


def working_norm(case: str, d: int, p: float, s0: float | None = None, s: float | None = None,
                 delta: float = 0.1, q: float | None = None) -> WorkingNorm:
    """Norm in which contraction is measured for the three solution classes."""
    if case == "ia":
        return WorkingNorm("sup", 0.0, p + 1.0)
    if case == "ib":
        return WorkingNorm("lq", 0.0, p + 1.0, ib_time_exponent(d, p) if q is None else q)
    if case == "ii":
        if d < 3:
            raise ValueError("case (ii) needs d >= 3")
        if not (float(p).is_integer() and int(p) % 2 == 1):
            raise ValueError("case (ii) needs an odd integer p")
        if s0 is None or s is None:
            raise ValueError("case (ii) needs s0 and s")
        return WorkingNorm("sup", min(s0 - 1.0, s), 2.0 * d / (d - 2.0) - delta)
    raise ValueError(f"unknown case {case!r}")


def check_case_hypotheses(case: str, d: int, p: float, s0: float, s: float) -> list[str]:
    """Violated hypotheses of the corresponding existence theorem (empty if none)."""
    problems = []
    sc = scaling_critical_regularity(d, p)
    if case in ("ia", "ib"):
        if not p > 1 + 4.0 / d:
            problems.append(f"need mass-supercritical p > {1 + 4.0 / d}")
        if d >= 3 and not p < 1 + 4.0 / (d - 2):
            problems.append(f"need energy-subcritical p < {1 + 4.0 / (d - 2)}")
        if case == "ia" and s0 < d / 2.0 - d / (p + 1.0):
            problems.append(f"need s0 >= {d / 2.0 - d / (p + 1.0)}")
        if case == "ib" and not s0 > sc:
            problems.append(f"need s0 > s_crit = {sc}")
    elif case == "ii":
        if d < 3:
            problems.append("need d >= 3")
        elif p < 1 + 4.0 / (d - 2):
            problems.append(f"need p >= {1 + 4.0 / (d - 2)}")
        if not (float(p).is_integer() and int(p) % 2 == 1):
            problems.append("need odd integer p")
        if not s0 > sc:
            problems.append(f"need s0 > s_crit = {sc}")
        if not s > sc - 1:
            problems.append(f"need s > s_crit - 1 = {sc - 1}")
    else:
        problems.append(f"unknown case {case!r}")
    return problems


@dataclass(frozen=True)
class SolverConfig:
    """Horizon, step count and fixed-point controls.

    ``dealias=None`` means: 2/3 rule on for p <= 5, off otherwise.
    """

    T: float
    M: int
    max_iters: int = 60
    tol: float = 1e-10
    dealias: bool | None = None
    norm: WorkingNorm = field(default_factory=WorkingNorm)

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.M < 2:
            raise ValueError("need at least 2 time steps")
        if not self.T > 0:
            raise ValueError("T must be positive")

    def dealias_for(self, nonlin: NonlinearitySpec) -> bool:
        return nonlin.p <= 5 if self.dealias is None else self.dealias

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.M + 1)


def _check_grid(psi: NoisePath, cfg: SolverConfig) -> None:
    if psi.M != cfg.M or not math.isclose(psi.T, cfg.T, rel_tol=1e-12):
        raise ValueError(f"noise path grid (M={psi.M}, T={psi.T}) does not match config "
                         f"(M={cfg.M}, T={cfg.T})")


def _gamma(v: np.ndarray, psi: NoisePath, u0c: np.ndarray, cfg: SolverConfig,
           nonlin: NonlinearitySpec) -> np.ndarray:
    grid = psi.grid
    times = psi.times
    w = inverse(grid, v + psi.values)
    forcing = forward(grid, nonlin.apply(w))
    if cfg.dealias_for(nonlin):
        forcing *= grid.dealias_mask()
    return propagator_symbol(grid, times) * u0c + duhamel_trajectory(grid, times, forcing)


def gamma_map(v: Trajectory, psi: NoisePath, u0: SpectralField, cfg: SolverConfig,
              nonlin: NonlinearitySpec) -> Trajectory:
    """Gamma v on the shared time grid."""
    _check_grid(psi, cfg)
    if v.grid != psi.grid or len(v) != len(psi) or not np.allclose(v.times, psi.times):
        raise ValueError("v and the noise path do not share a time grid")
    return Trajectory(psi.grid, psi.times, _gamma(v.values, psi, u0.frequency(), cfg, nonlin))


@dataclass
class PicardResult:
    v: Trajectory
    psi: NoisePath
    iterations: int
    ratios: list[float]
    updates: list[float]
    previous: np.ndarray | None = field(default=None, repr=False)

    @property
    def u(self) -> Trajectory:
        return Trajectory(self.v.grid, self.v.times, self.v.values + self.psi.values)


def picard_solve(u0: SpectralField, psi: NoisePath | None, cfg: SolverConfig,
                 nonlin: NonlinearitySpec) -> PicardResult:
    """Iterate v <- Gamma v from v = 0 until the relative update is below ``cfg.tol``.

    Raises :class:`ExistenceHorizonExceeded` if the successive-difference ratio is
    >= 1 three times in a row, if the iterates blow up, or if ``max_iters`` is hit.
    """
    if psi is None:
        psi = zero_path(u0.grid, cfg.M, cfg.T)
    _check_grid(psi, cfg)
    grid, times = psi.grid, psi.times
    norm = cfg.norm
    u0c = u0.frequency()
    v = np.zeros_like(psi.values)
    ratios: list[float] = []
    updates: list[float] = []
    prev_diff = None
    streak = 0
    for it in range(1, cfg.max_iters + 1):
        new = _gamma(v, psi, u0c, cfg, nonlin)
        size = norm(grid, times, new)
        if not np.isfinite(size) or size > BLOWUP_LEVEL:
            raise ExistenceHorizonExceeded(
                f"Picard iterates blew up at iteration {it}",
                ratios[-1] if ratios else None, ratios, it)
        diff = norm(grid, times, new - v)
        updates.append(diff / size if size > 0 else 0.0)
        if prev_diff is not None:
            ratio = diff / prev_diff if prev_diff > 0 else 0.0
            ratios.append(ratio)
            streak = streak + 1 if ratio >= 1.0 else 0
        previous, v = v, new
        if diff <= cfg.tol * size:
            return PicardResult(Trajectory(grid, times, v), psi, it, ratios, updates, previous)
        if streak >= 3:
            raise ExistenceHorizonExceeded(
                f"no contraction on [0, {cfg.T}]: ratio >= 1 for 3 consecutive iterations "
                f"(last ratio {ratios[-1]:.4g})", ratios[-1], ratios, it)
        prev_diff = diff
    raise ExistenceHorizonExceeded(
        f"existence horizon exceeded: no convergence in {cfg.max_iters} iterations",
        ratios[-1] if ratios else None, ratios, cfg.max_iters)


def first_contraction_ratio(u0: SpectralField, psi: NoisePath, cfg: SolverConfig,
                            nonlin: NonlinearitySpec) -> float:
    """||Gamma^2 0 - Gamma 0|| / ||Gamma 0 - 0|| in the working norm."""
    _check_grid(psi, cfg)
    u0c = u0.frequency()
    v1 = _gamma(np.zeros_like(psi.values), psi, u0c, cfg, nonlin)
    v2 = _gamma(v1, psi, u0c, cfg, nonlin)
    first = cfg.norm(psi.grid, psi.times, v1)
    return 0.0 if first == 0 else cfg.norm(psi.grid, psi.times, v2 - v1) / first


def difference_ratio(v1: Trajectory, v2: Trajectory, u0: SpectralField, psi: NoisePath,
                     cfg: SolverConfig, nonlin: NonlinearitySpec) -> float:
    """||Gamma v1 - Gamma v2|| / ||v1 - v2|| in the working norm."""
    g1 = gamma_map(v1, psi, u0, cfg, nonlin).values
    g2 = gamma_map(v2, psi, u0, cfg, nonlin).values
    den = cfg.norm(psi.grid, psi.times, v1.values - v2.values)
    return cfg.norm(psi.grid, psi.times, g1 - g2) / den


def mild_residual(u: Trajectory, u0: SpectralField, psi: NoisePath | None, cfg: SolverConfig,
                  nonlin: NonlinearitySpec) -> np.ndarray:
    """L^2 norm of u(t) - S(t) u0 - int S(t - t') N(u) dt' - Psi(t) at every grid time."""
    grid, times = u.grid, u.times
    forcing = forward(grid, nonlin.apply(u.physical()))
    if cfg.dealias_for(nonlin):
        forcing *= grid.dealias_mask()
    psi_vals = 0.0 if psi is None else psi.values
    res = (u.values - propagator_symbol(grid, times) * u0.frequency()
           - duhamel_trajectory(grid, times, forcing) - psi_vals)
    return np.sqrt(np.sum(np.abs(res) ** 2, axis=grid.axes))


def splitstep_solve(u0: SpectralField, cfg: SolverConfig, nonlin: NonlinearitySpec,
                    psi: NoisePath | None = None) -> Trajectory:
    """Strang splitting: half nonlinear phase, full linear step, half phase, then noise.

    The noise increment of step j is recovered from the path as
    Psi(t_{j+1}) - S(dt) Psi(t_j), i.e. the very increment the sampler drew.
    No dealiasing is applied: both substeps are exact flows.
    """
    grid = u0.grid
    if psi is not None:
        _check_grid(psi, cfg)
    dt = cfg.T / cfg.M
    rot = propagator_symbol(grid, dt)
    out = np.empty((cfg.M + 1,) + grid.shape, complex)
    out[0] = u0.frequency()
    u = np.asarray(u0.physical())
    for j in range(cfg.M):
        u = nonlin.phase_flow(u, 0.5 * dt)
        c = rot * forward(grid, u)
        u = nonlin.phase_flow(inverse(grid, c), 0.5 * dt)
        c = forward(grid, u)
        if psi is not None:
            c = c + (psi.values[j + 1] - rot * psi.values[j])
            u = inverse(grid, c)
        out[j + 1] = c
    return Trajectory(grid, cfg.times, out)


@dataclass
class ExistenceReport:
    ladder: list[float]
    T_est: list[float]
    rung: list[int]

    @property
    def n_paths(self) -> int:
        return len(self.T_est)

    def summary(self) -> dict:
        t = np.array(self.T_est)
        return {
            "n_paths": self.n_paths,
            "ladder_min": self.ladder[0],
            "ladder_max": self.ladder[-1],
            "positive": int(np.sum(t > 0)),
            "above_ladder_min": int(np.sum(t > self.ladder[0])),
            "median_T_est": float(np.median(t)),
            "min_T_est": float(t.min()),
        }


def existence_ladder(T_max: float, n_rungs: int) -> np.ndarray:
    """Geometric ladder T_max 2^{-(n_rungs-1)}, ..., T_max (ascending)."""
    return T_max / 2.0 ** np.arange(n_rungs - 1, -1, -1)


def path_converges(u0: SpectralField, phi: SmoothingOperator, cfg: SolverConfig,
                   nonlin: NonlinearitySpec, seed: int, replica: int, ladder: np.ndarray,
                   rung: int) -> bool:
    """Does Picard converge on rung ``rung`` for the replica's noise path?

    Rung i stores cfg.M steps built from 2^i exact substeps of one fixed fine
    path, so every rung sees a prefix of the same Brownian trajectory.
    """
    T = float(ladder[rung])
    c = replace(cfg, T=T)
    if phi.is_zero:
        psi = zero_path(u0.grid, c.M, T)
    else:
        psi = sample_convolution(phi, c.M, T, stream_rng(seed, "existence", replica), substeps=2 ** rung)
    try:
        picard_solve(u0, psi, c, nonlin)
    except ExistenceHorizonExceeded:
        return False
    return True


def local_existence_probe(u0: SpectralField, phi: SmoothingOperator, cfg: SolverConfig,
                          nonlin: NonlinearitySpec, seed: int, n_paths: int = 1,
                          T_max: float = 1.0, n_rungs: int = 6,
                          threads: int | None = None) -> ExistenceReport:
    """Per-path largest ladder horizon on which Picard converges (0 if none).

    Bisection over the rung index assumes convergence is monotone in T.
    """
    ladder = existence_ladder(T_max, n_rungs)

    def one(i: int) -> tuple[float, int]:
        ok = lambda rung: path_converges(u0, phi, cfg, nonlin, seed, i, ladder, rung)  # noqa: E731
        if not ok(0):
            return 0.0, -1
        lo, hi = 0, n_rungs - 1
        if ok(hi):
            return float(ladder[hi]), hi
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if ok(mid):
                lo = mid
            else:
                hi = mid
        return float(ladder[lo]), lo

    results = replica_map(one, n_paths, threads)
    return ExistenceReport(ladder.tolist(), [r[0] for r in results], [r[1] for r in results])
