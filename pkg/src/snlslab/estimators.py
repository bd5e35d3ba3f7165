"""Monte Carlo moments of space-time norms and the verification reports built on them."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .fitting import FitReport, fit_power_law, jsonable
from .noise import SmoothingOperator, hs_norm, sample_convolution
from .parallel import replica_map, stream_rng
from .randomization import (RandomizationSpec, linear_spacetime_norm, randomized_norm_samples,
                            tail_fit)
from .spectral import GridSpec, NormSpec, SpectralField, Trajectory, spacetime_norm

__all__ = [
    "DegenerateInputError",
    "FitReport",
    "HypothesisViolation",
    "MomentEstimate",
    "fit_power_law",
    "mc_norm_moment",
    "power_mean",
    "verify_lemma21",
    "verify_probabilistic_strichartz",
]

DEFAULT_BOOTSTRAP = 400


class HypothesisViolation(ValueError):
    """Parameters outside the range where the estimate is claimed."""


class DegenerateInputError(HypothesisViolation):
    """Input for which the requested fit is meaningless (e.g. zero noise)."""


def power_mean(samples, rho: float) -> float:
    """(mean X^rho)^{1/rho}, computed with max-scaling."""
    x = np.asarray(samples, float)
    m = x.max() if x.size else 0.0
    if m == 0:
        return 0.0
    return float(m * np.mean((x / m) ** rho) ** (1.0 / rho))


@dataclass
class MomentEstimate:
    estimate: float
    stderr: float
    samples: np.ndarray = field(repr=False)
    rho: float = 2.0

    def __iter__(self):
        return iter((self.estimate, self.stderr))


def bootstrap_stderr(samples: np.ndarray, rho: float, seed: int, n_boot: int = DEFAULT_BOOTSTRAP) -> float:
    """Std of the L^rho(Omega) estimate under resampling; uses its own stream."""
    x = np.asarray(samples, float)
    if not np.any(x):
        return 0.0
    rng = stream_rng(seed, "bootstrap")
    n = len(x)
    boots = [power_mean(x[rng.integers(0, n, n)], rho) for _ in range(n_boot)]
    return float(np.std(boots, ddof=1))


def mc_norm_moment(sampler: Callable[[np.random.Generator], Trajectory | Sequence[SpectralField]],
                   norm: NormSpec, rho: float, n_samples: int, seed: int,
                   threads: int | None = None, stream: str = "mc") -> MomentEstimate:
    """(1/n sum X_i^rho)^{1/rho} for X_i = ||sample_i||_{L^q_T W^{s,r}}, with bootstrap stderr.

    Replica i draws from Philox stream (seed, stream, i); the bootstrap uses a
    separate stream, so point estimates do not depend on it.
    """
    if rho < 1:
        raise ValueError("rho must be at least 1")
    if n_samples < 30:
        raise ValueError("need at least 30 samples")

    def one(i: int) -> float:
        return spacetime_norm(sampler(stream_rng(seed, stream, i)), norm)

    x = np.array(replica_map(one, n_samples, threads))
    return MomentEstimate(power_mean(x, rho), bootstrap_stderr(x, rho, seed), x, rho)


def check_lemma21_hypotheses(d: int, q: float, r: float) -> None:
    if not q < math.inf:
        raise HypothesisViolation("the stochastic-convolution bound needs finite q")
    if not (2 <= r < math.inf):
        raise HypothesisViolation("the stochastic-convolution bound needs finite r >= 2")
    if d >= 3 and r > 2.0 * d / (d - 2.0):
        raise HypothesisViolation(f"for d = {d} the bound needs r <= {2.0 * d / (d - 2.0)}")


@dataclass
class Lemma21Report:
    fit: FitReport
    T_ladder: list[float]
    estimates: list[float]
    stderrs: list[float]
    doubled_ratio: float
    hs_norm: float
    rho: float
    rho_meets_minkowski: bool
    params: dict

    def rows(self) -> list[dict]:
        lo, hi = self.fit.ci_95
        return [
            {**self.params, "T": T, "estimate": e, "stderr": se, "theta_hat": self.fit.exponent_hat,
             "ci_lo": lo, "ci_hi": hi}
            for T, e, se in zip(self.T_ladder, self.estimates, self.stderrs)
        ]

    def as_dict(self) -> dict:
        return {
            "fit": self.fit.as_dict(),
            "T_ladder": self.T_ladder,
            "estimates": self.estimates,
            "stderrs": self.stderrs,
            "doubled_ratio": self.doubled_ratio,
            "hs_norm": self.hs_norm,
            "rho": self.rho,
            "rho_meets_minkowski": self.rho_meets_minkowski,
            "params": self.params,
        }


def default_T_ladder(T_max: float = 1.0, points: int = 8) -> np.ndarray:
    """``points`` geometric horizons over one decade ending at T_max."""
    return np.geomspace(T_max / 10.0, T_max, points)


def verify_lemma21(phi: SmoothingOperator, s: float, q: float, r: float, T_ladder, rho: float,
                   n_samples: int, seed: int, M: int = 16, threads: int | None = None) -> Lemma21Report:
    """Scaling in T of ||  ||Psi||_{L^q_T W^{s,r}}  ||_{L^rho(Omega)}.

    For each T the moment is estimated from ``n_samples`` paths; a power law in
    T gives theta_hat with a parametric-bootstrap 95% interval.  The same
    streams are rerun with 2 phi to check homogeneity (ratio 2).
    """
    grid = phi.grid
    check_lemma21_hypotheses(grid.d, q, r)
    if phi.is_zero:
        raise DegenerateInputError("phi = 0: every estimate vanishes, refusing to fit a power law")
    T_ladder = np.asarray(T_ladder, float)
    doubled = phi.scaled(2.0)
    estimates, stderrs, doubled_est = [], [], []
    for idx, T in enumerate(T_ladder):
        norm = NormSpec(s, r, q, float(T))

        def sampler(rng, op=phi, T=float(T)):
            return sample_convolution(op, M, T, rng).trajectory

        def sampler2(rng, T=float(T)):
            return sample_convolution(doubled, M, T, rng).trajectory

        est = mc_norm_moment(sampler, norm, rho, n_samples, seed, threads, stream=f"lemma21-{idx}")
        est2 = mc_norm_moment(sampler2, norm, rho, n_samples, seed, threads, stream=f"lemma21-{idx}")
        estimates.append(est.estimate)
        stderrs.append(est.stderr)
        doubled_est.append(est2.estimate)
    fit = fit_power_law(T_ladder, estimates, y_err=stderrs, seed=seed)
    params = {"d": grid.d, "L": grid.L, "N": grid.N, "s": s, "q": q, "r": r, "rho": rho,
              "phi": phi.describe(), "n_samples": n_samples, "M": M, "seed": seed}
    fit.metadata = dict(params)
    ratio = float(np.mean(np.array(doubled_est) / np.array(estimates)))
    return Lemma21Report(fit, T_ladder.tolist(), estimates, stderrs, ratio, hs_norm(phi, s), rho,
                         rho >= max(q, r), params)


@dataclass
class StrichartzEntry:
    norm: NormSpec
    coarse: FitReport
    refined: FitReport | None
    deterministic: float
    deterministic_refined: float | None

    @property
    def q90_change(self) -> float | None:
        if self.refined is None or self.coarse.metadata["q90"] == 0:
            return None
        return self.refined.metadata["q90"] / self.coarse.metadata["q90"] - 1.0

    @property
    def grows(self) -> bool:
        change = self.q90_change
        return change is not None and change > 0.1

    def row(self) -> dict:
        c = self.coarse.metadata
        r = self.refined.metadata if self.refined is not None else {}
        return {
            "q": self.norm.q, "r": self.norm.r, "s": self.norm.s, "T": self.norm.T,
            "median": c["median"], "q90": c["q90"], "q99": c["q99"], "tail_rate": self.coarse.exponent_hat,
            "median_refined": r.get("median"), "q90_refined": r.get("q90"),
            "q90_change": self.q90_change, "flag_growth": self.grows,
            "deterministic": self.deterministic, "deterministic_refined": self.deterministic_refined,
        }


def verify_probabilistic_strichartz(u0: SpectralField | Callable[[GridSpec], SpectralField],
                                    spec: RandomizationSpec, norms: Sequence[NormSpec],
                                    n_samples: int, seed: int, M: int = 32, refine: bool = True,
                                    grid: GridSpec | None = None,
                                    threads: int | None = None) -> list[StrichartzEntry]:
    """Randomized space-time norms, their tails, and stability under N -> 2N.

    ``u0`` may be a profile builder ``grid -> field`` so that refinement adds the
    profile's own higher frequencies; a fixed field is refined by spectral
    interpolation (zero padding).  The unrandomized profile is measured on both
    grids for comparison.
    """
    if callable(u0) and not isinstance(u0, SpectralField):
        if grid is None:
            raise ValueError("a profile builder needs a grid")
        build = u0
    else:
        base = u0
        grid = base.grid

        def build(g: GridSpec) -> SpectralField:
            return base if g == base.grid else zero_pad(base, g)
    fine = grid.refined(2) if refine else None
    coarse_u0 = build(grid)
    fine_u0 = build(fine) if fine is not None else None
    out = []
    for k, norm in enumerate(norms):
        if norm.q == math.inf or norm.r == math.inf:
            raise HypothesisViolation("probabilistic Strichartz needs finite q and r")
        entries = []
        for u in (coarse_u0, fine_u0):
            if u is None:
                entries.append(None)
                continue
            x = randomized_norm_samples(u, spec, norm, n_samples, seed, M, threads, stream=f"pstr-{k}")
            rep = tail_fit(x) if np.any(x) else FitReport(0.0, None, 0.0, 0.0, 0, (0.0, 0.0), 0.0,
                                                           {"median": 0.0, "q90": 0.0, "q99": 0.0})
            entries.append(rep)
        det = linear_spacetime_norm(coarse_u0, norm, M)
        det_f = linear_spacetime_norm(fine_u0, norm, M) if fine_u0 is not None else None
        out.append(StrichartzEntry(norm, entries[0], entries[1], det, det_f))
    return out


def zero_pad(f: SpectralField, grid: GridSpec) -> SpectralField:
    """Spectral interpolation of ``f`` onto a finer grid with the same box."""
    if grid.L != f.grid.L or grid.d != f.grid.d or grid.N < f.grid.N:
        raise ValueError("zero padding needs the same box and a finer grid")
    out = np.zeros(grid.shape, complex)
    k_coarse = f.grid.k_axis % grid.N
    out[np.ix_(*([k_coarse] * grid.d))] = f.frequency()
    return SpectralField(grid, out, "frequency")


# ---------------------------------------------------------------- output helpers

def _fmt_cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def rows_to_csv(rows: Sequence[dict]) -> str:
    if not rows:
        return ""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    keys = list(rows[0])
    writer.writerow(keys)
    for row in rows:
        writer.writerow([_fmt_cell(row.get(k)) for k in keys])
    return buf.getvalue()


def write_report(directory: str | Path, stem: str, rows: Sequence[dict], payload: dict) -> list[Path]:
    """CSV plus its JSON twin."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    csv_path = directory / f"{stem}.csv"
    json_path = directory / f"{stem}.json"
    csv_path.write_text(rows_to_csv(rows))
    json_path.write_text(json.dumps(jsonable(payload), sort_keys=True, indent=2) + "\n")
    return [csv_path, json_path]


def loglog_svg(path: str | Path, xs, ys, fit: FitReport | None, xlabel: str, ylabel: str,
               title: str = "") -> Path:
    """Standalone log-log plot of the data and the fitted line."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    with matplotlib.rc_context({"svg.hashsalt": "snlslab", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(5, 4))
        ax.loglog(xs, ys, "o", label="data")
        if fit is not None:
            grid = np.geomspace(min(xs), max(xs), 50)
            ax.loglog(grid, np.exp(fit.intercept) * grid ** fit.exponent_hat, "-",
                      label=f"slope {fit.exponent_hat:.3f}")
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        if title:
            ax.set_title(title)
        ax.legend()
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
        plt.close(fig)
    return Path(path)
