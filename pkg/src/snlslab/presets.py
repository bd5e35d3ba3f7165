"""Named initial data and the three theorem regimes as parameter bundles."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .spectral import FREQUENCY, GridSpec, SpectralField, read_field, scaling_critical_regularity


def gaussian(grid: GridSpec, amplitude: float = 1.0, width: float = 1.0) -> SpectralField:
    """amplitude * exp(-|x|^2 / (2 width^2)) centred in the box."""
    r2 = sum(x ** 2 for x in grid.coords())
    return SpectralField(grid, amplitude * np.exp(-0.5 * r2 / width ** 2))


def rough(grid: GridSpec, beta: float = 1.5, amplitude: float = 1.0) -> SpectralField:
    """Profile with Fourier transform amplitude <2 pi xi>^{-beta} and aligned phases.

    It lies in H^s exactly for s < beta - d/2 and has a |x|^{beta - d}
    singularity at the box centre, so large-r Lebesgue norms of the
    unrandomized profile grow under refinement when r (d - beta) > d.
    Coefficients sample the continuum transform, so refining the grid adds
    the profile's own high frequencies.
    """
    phase = np.ones(grid.shape)
    sign = (-1.0) ** grid.k_axis
    for axis in range(grid.d):
        phase = phase * sign.reshape((-1,) + (1,) * (grid.d - axis - 1))
    coeffs = amplitude * grid.L ** (-grid.d / 2.0) * grid.bracket(-beta) * phase
    return SpectralField(grid, coeffs, FREQUENCY)


def zero(grid: GridSpec) -> SpectralField:
    return SpectralField.zeros(grid)


def build_u0(text: str, grid: GridSpec) -> SpectralField:
    """``gaussian[:amp=..,width=..]``, ``rough[:beta=..,amp=..]``, ``zero`` or a field file."""
    name, _, rest = text.partition(":")
    params = {}
    for item in filter(None, (p.strip() for p in rest.split(","))):
        key, _, value = item.partition("=")
        params[key.strip()] = float(value)
    if name == "gaussian":
        return gaussian(grid, params.pop("amp", 1.0), params.pop("width", 1.0))
    if name == "rough":
        return rough(grid, params.pop("beta", 1.5), params.pop("amp", 1.0))
    if name == "zero":
        return zero(grid)
    f = read_field(text)
    if f.grid != grid:
        raise ValueError(f"field file grid {f.grid} does not match requested grid {grid}")
    return f


@dataclass(frozen=True)
class CasePreset:
    """Parameter bundle for one solution class of the local existence theorem."""

    case: str
    d: int
    p: float
    s0: float
    s: float
    L: float
    N: int
    phi: str
    u0: str
    T: float
    steps: int

    def as_dict(self) -> dict:
        return asdict(self)

    @property
    def s_crit(self) -> float:
        return scaling_critical_regularity(self.d, self.p)


CASES = {
    # energy-subcritical, mass-supercritical: d = 2, p = 4 (s_crit = 1/3),
    # s0 >= d/2 - d/(p+1) = 0.6, noise in HS(L^2; L^2)
    "ia": CasePreset("ia", 2, 4.0, 1.0, 0.0, 16.0, 64, "cutoff:K=1.0,amp=0.3",
                     "gaussian:amp=0.5,width=1.5", 0.1, 32),
    # same equation, s0 > s_crit, contraction measured in L^q_T L^{p+1}
    "ib": CasePreset("ib", 2, 4.0, 0.5, 0.0, 16.0, 64, "cutoff:K=1.0,amp=0.3",
                     "gaussian:amp=0.5,width=1.5", 0.1, 32),
    # energy-critical quintic in d = 3 (s_crit = 1) with noise at s = s_crit - 1 + 0.1
    "ii": CasePreset("ii", 3, 5.0, 1.1, 0.1, 8.0, 32, "powerlaw:alpha=2.0,s=0.1,amp=0.5",
                     "gaussian:amp=2.0,width=1.0", 0.05, 16),
}
