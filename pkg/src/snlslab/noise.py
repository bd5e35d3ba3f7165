"""Hilbert-Schmidt smoothing operators and exact sampling of the stochastic convolution.

The cylindrical Wiener process is expanded in the orthonormal lattice
exponentials, in which every supported smoothing operator is diagonal with
nonnegative multipliers lambda_k.  Complex Brownian motions have independent
real and imaginary parts of variance t/2 each, so E|beta(t)|^2 = t.

The constant -i phase in front of the stochastic convolution is dropped when
sampling: the complex Gaussian law is invariant under rotation.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from math import factorial
from pathlib import Path

import numpy as np

from .parallel import rng_from_state, rng_state
from .propagator import propagator_symbol
from .spectral import GridSpec, SpectralField, Trajectory, read_field, write_field


@dataclass(frozen=True, eq=False)
class SmoothingOperator:
    """Diagonal operator phi e_k = lambda_k e_k on the truncated lattice."""

    grid: GridSpec
    multipliers: np.ndarray = field(repr=False)
    label: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        lam = np.array(self.multipliers, dtype=float)
        if lam.shape != self.grid.shape:
            raise ValueError("multiplier array does not match the grid")
        if np.any(lam < 0) or not np.all(np.isfinite(lam)):
            raise ValueError("multipliers must be finite and nonnegative")
        lam.flags.writeable = False
        object.__setattr__(self, "multipliers", lam)

    @classmethod
    def zero(cls, grid: GridSpec) -> SmoothingOperator:
        return cls(grid, np.zeros(grid.shape), "zero", {})

    @classmethod
    def cutoff(cls, grid: GridSpec, K: float, amplitude: float = 1.0) -> SmoothingOperator:
        """lambda_k = amplitude on |xi_k| <= K, zero elsewhere."""
        lam = amplitude * (grid.xi_abs <= K + 1e-12)
        return cls(grid, lam, "cutoff", {"K": K, "amp": amplitude})

    @classmethod
    def power_law(cls, grid: GridSpec, alpha: float, s: float = 0.0,
                  amplitude: float = 1.0) -> SmoothingOperator:
        """lambda_k = amplitude (1 + |2 pi xi_k|^2)^{-alpha/2}; needs alpha > s + d/2."""
        if not alpha > s + grid.d / 2.0:
            raise ValueError(
                f"power law with alpha={alpha} is not Hilbert-Schmidt into H^{s} in d={grid.d}; "
                f"need alpha > {s + grid.d / 2.0}"
            )
        lam = amplitude * grid.bracket(-alpha)
        return cls(grid, lam, "powerlaw", {"alpha": alpha, "s": s, "amp": amplitude})

    @classmethod
    def single_mode(cls, grid: GridSpec, k, lam: float = 1.0) -> SmoothingOperator:
        k = (k,) * grid.d if np.isscalar(k) else tuple(k)
        arr = np.zeros(grid.shape)
        arr[tuple(int(ki) % grid.N for ki in k)] = lam
        return cls(grid, arr, "mode", {"k": list(k), "lam": lam})

    @classmethod
    def identity(cls, grid: GridSpec) -> SmoothingOperator:
        warnings.warn(
            "identity noise is only Hilbert-Schmidt because of the lattice cutoff "
            f"(|k_i| <= {grid.N // 2}); results depend on the resolution",
            stacklevel=2,
        )
        return cls(grid, np.ones(grid.shape), "identity", {})

    def scaled(self, c: float) -> SmoothingOperator:
        params = dict(self.params)
        params["scale"] = params.get("scale", 1.0) * c
        return SmoothingOperator(self.grid, c * self.multipliers, self.label, params)

    def on_grid(self, grid: GridSpec) -> SmoothingOperator:
        """Rebuild the same family on another grid."""
        return parse_phi(self.describe(), grid)

    def describe(self) -> str:
        if self.label in ("zero", "identity"):
            return self.label
        body = ",".join(f"{k}={_fmt(v)}" for k, v in self.params.items())
        return f"{self.label}:{body}"

    @property
    def is_zero(self) -> bool:
        return not np.any(self.multipliers)


def _fmt(v):
    if isinstance(v, (list, tuple)):
        return "/".join(str(x) for x in v)
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


def parse_phi(text: str, grid: GridSpec) -> SmoothingOperator:
    """Build an operator from ``family:key=value,...``.

    Families: ``zero``, ``identity``, ``cutoff:K=..,amp=..``,
    ``powerlaw:alpha=..,s=..,amp=..``, ``mode:k=a/b/c,lam=..``.  An optional
    ``scale=..`` multiplies the result.
    """
    family, _, rest = text.strip().partition(":")
    params: dict = {}
    for item in filter(None, (p.strip() for p in rest.split(","))):
        key, sep, value = item.partition("=")
        if not sep:
            raise ValueError(f"malformed phi parameter {item!r}")
        params[key.strip()] = value.strip()
    scale = float(params.pop("scale", 1.0))
    try:
        if family == "zero":
            op = SmoothingOperator.zero(grid)
        elif family == "identity":
            op = SmoothingOperator.identity(grid)
        elif family == "cutoff":
            op = SmoothingOperator.cutoff(grid, float(params.pop("K")), float(params.pop("amp", 1.0)))
        elif family == "powerlaw":
            op = SmoothingOperator.power_law(
                grid, float(params.pop("alpha")), float(params.pop("s", 0.0)),
                float(params.pop("amp", 1.0)))
        elif family == "mode":
            k = [int(x) for x in params.pop("k", "0").split("/")]
            op = SmoothingOperator.single_mode(grid, k if len(k) > 1 else k[0],
                                               float(params.pop("lam", 1.0)))
        else:
            raise ValueError(f"unknown phi family {family!r}")
    except KeyError as exc:
        raise ValueError(f"phi family {family!r} is missing parameter {exc.args[0]!r}") from None
    if params:
        raise ValueError(f"unused phi parameters {sorted(params)}")
    return op.scaled(scale) if scale != 1.0 else op


def hs_norm(phi: SmoothingOperator, s: float) -> float:
    """||phi||_{HS(L^2; H^s)} = (sum_k (1 + |2 pi xi_k|^2)^s lambda_k^2)^{1/2}."""
    return float(np.sqrt(np.sum(phi.grid.bracket(2 * s) * phi.multipliers ** 2)))


@dataclass(frozen=True, eq=False)
class NoisePath:
    """Sampled trajectory of a (possibly shifted) stochastic convolution.

    ``seed_record`` holds the generator state before the first draw plus the
    sampling parameters, which is enough to replay the path bit for bit.
    """

    trajectory: Trajectory
    seed_record: dict = field(default_factory=dict)
    phi_label: str = ""

    @property
    def grid(self) -> GridSpec:
        return self.trajectory.grid

    @property
    def times(self) -> np.ndarray:
        return self.trajectory.times

    @property
    def values(self) -> np.ndarray:
        return self.trajectory.values

    @property
    def T(self) -> float:
        return self.trajectory.T

    @property
    def M(self) -> int:
        return len(self.trajectory) - 1

    def __getitem__(self, j: int) -> SpectralField:
        return self.trajectory[j]

    def __len__(self) -> int:
        return len(self.trajectory)

    def restrict(self, n_steps: int) -> NoisePath:
        """Prefix covering the first ``n_steps`` time steps."""
        if not 1 <= n_steps <= self.M:
            raise ValueError(f"cannot keep {n_steps} of {self.M} steps")
        traj = Trajectory(self.grid, self.times[: n_steps + 1], self.values[: n_steps + 1])
        rec = dict(self.seed_record, restricted_steps=n_steps)
        return NoisePath(traj, rec, self.phi_label)

    def subsample(self, stride: int) -> NoisePath:
        """Every ``stride``-th stored time; exact, since the recursion is exact."""
        if self.M % stride:
            raise ValueError("stride must divide the number of steps")
        traj = Trajectory(self.grid, self.times[::stride], self.values[::stride])
        return NoisePath(traj, dict(self.seed_record, stride=stride), self.phi_label)


def _noise_steps(phi: SmoothingOperator, M: int, T: float, rng: np.random.Generator,
                 substeps: int = 1):
    """Yield the stored-step update (rotation, increment) for each of M steps.

    Each stored step is built from ``substeps`` exact sub-increments, so paths
    with the same generator and the same fine step are nested.
    """
    grid = phi.grid
    dt_f = T / (M * substeps)
    rot_f = propagator_symbol(grid, dt_f)
    scale = phi.multipliers * math.sqrt(dt_f / 2.0)
    shape = (2,) + grid.shape
    for _ in range(M):
        inc = np.zeros(grid.shape, complex)
        for _ in range(substeps):
            z = rng.standard_normal(shape)
            inc = rot_f * inc + scale * (z[0] + 1j * z[1])
        yield inc


def noise_increments(phi: SmoothingOperator, M: int, T: float, rng: np.random.Generator,
                     substeps: int = 1) -> np.ndarray:
    """Per-step Gaussian increments lambda_k g_{k,j}, shape (M, N, ..., N)."""
    return np.stack(list(_noise_steps(phi, M, T, rng, substeps)))


def sample_convolution(phi: SmoothingOperator, M: int, T: float, rng: np.random.Generator,
                       substeps: int = 1) -> NoisePath:
    """Sample Psi on t_j = j T / M by the exact per-mode recursion

        Psi_k(t_{j+1}) = exp(i dt |2 pi xi_k|^2) Psi_k(t_j) + lambda_k g_{k,j},

    with g_{k,j} complex Gaussian of variance dt.
    """
    if not T > 0 or M < 1:
        raise ValueError("need T > 0 and M >= 1")
    grid = phi.grid
    state = rng_state(rng)
    rot = propagator_symbol(grid, T / M)
    values = np.zeros((M + 1,) + grid.shape, complex)
    for j, inc in enumerate(_noise_steps(phi, M, T, rng, substeps)):
        values[j + 1] = rot * values[j] + inc
    record = {"rng_state": state, "M": M, "T": T, "substeps": substeps}
    return NoisePath(Trajectory(grid, np.linspace(0.0, T, M + 1), values), record, phi.describe())


def replay(path: NoisePath, phi: SmoothingOperator) -> NoisePath:
    """Regenerate a sampled path from its seed record."""
    rec = path.seed_record
    rng = rng_from_state(rec["rng_state"])
    fresh = sample_convolution(phi, rec["M"], rec["T"], rng, rec.get("substeps", 1))
    if "restricted_steps" in rec:
        fresh = fresh.restrict(rec["restricted_steps"])
    if "stride" in rec:
        fresh = fresh.subsample(rec["stride"])
    return fresh


def shifted_convolution(phi: SmoothingOperator, u0: SpectralField, M: int, T: float,
                        rng: np.random.Generator, substeps: int = 1) -> NoisePath:
    """S(t) u0 + Psi(t) on the same time grid as :func:`sample_convolution`."""
    path = sample_convolution(phi, M, T, rng, substeps)
    linear = propagator_symbol(phi.grid, path.times) * u0.frequency()
    traj = Trajectory(phi.grid, path.times, linear + path.values)
    return NoisePath(traj, dict(path.seed_record, shifted=True), path.phi_label)


@dataclass
class MomentCheck:
    j: int
    moment: float
    variance: float
    predicted: float
    z_score: float
    n: int

    @property
    def ratio(self) -> float:
        """moment / variance^j, which should approach j!."""
        return self.moment / self.variance ** self.j


def gaussian_moment_check(samples, j: int) -> MomentCheck:
    """Compare the empirical E|g|^{2j} with j! (empirical variance)^j.

    The z-score uses the delta-method standard error of the difference, so the
    randomness of the variance estimate is accounted for.
    """
    if j < 1:
        raise ValueError("j must be at least 1")
    a2 = np.abs(np.asarray(samples)) ** 2
    n = a2.size
    var = a2.mean()
    moment = np.mean(a2 ** j)
    predicted = factorial(j) * var ** j
    influence = a2 ** j - factorial(j) * j * var ** (j - 1) * a2
    se = influence.std(ddof=1) / math.sqrt(n)
    diff = moment - predicted
    z = 0.0 if diff == 0 or se == 0 else float(diff / se)
    return MomentCheck(j, float(moment), float(var), float(predicted), z, n)


def save_noise_path(path: NoisePath, directory: str | Path, extra: dict | None = None) -> dict:
    """Write ``manifest.json`` and one binary field record per stored time."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    grid = path.grid
    files = []
    for j in range(len(path)):
        name = f"psi_{j:05d}.bin"
        write_field(directory / name, path[j])
        files.append(name)
    manifest = {
        "grid": {"d": grid.d, "L": grid.L, "N": grid.N},
        "T": path.T,
        "M": path.M,
        "phi": path.phi_label,
        "seed_record": path.seed_record,
        "records": files,
    }
    manifest.update(extra or {})
    (directory / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=2))
    return manifest


def load_noise_path(directory: str | Path) -> NoisePath:
    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text())
    fields = [read_field(directory / name) for name in manifest["records"]]
    traj = Trajectory.from_fields(fields, np.linspace(0.0, manifest["T"], manifest["M"] + 1))
    return NoisePath(traj, manifest["seed_record"], manifest["phi"])


def zero_path(grid: GridSpec, M: int, T: float) -> NoisePath:
    values = np.zeros((M + 1,) + grid.shape, complex)
    return NoisePath(Trajectory(grid, np.linspace(0.0, T, M + 1), values), {"zero": True}, "zero")
