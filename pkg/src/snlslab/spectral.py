"""Periodic-box discretization and fractional Sobolev norms.

A :class:`GridSpec` truncates R^d to the box [-L/2, L/2)^d sampled at N
points per axis.  Fields are stored either as physical samples or as
coefficients in the orthonormal exponential basis

    e_k(x) = L^{-d/2} exp(2 pi i k.x / L),   -N/2 <= k_i < N/2,

so the frequency array is ``(L/N)^{d/2} * fftn(u, norm="ortho")`` in numpy
FFT ordering.  With this normalization the discrete L^2 norm (uniform
quadrature weight (L/N)^d) equals the plain l^2 norm of the coefficients.

All integrals over R^d become lattice sums with weight (L/N)^d.  Grid maxima
(r = inf, q = inf) are lower bounds for the continuum supremum.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np
import scipy.fft as sfft

PHYSICAL = "physical"
FREQUENCY = "frequency"
_REPRESENTATIONS = (PHYSICAL, FREQUENCY)


@dataclass(frozen=True)
class GridSpec:
    """Uniform periodic grid of side ``L`` with ``N`` points in each of ``d`` axes."""

    d: int
    L: float
    N: int

    def __post_init__(self):
        if self.d not in (1, 2, 3):
            raise ValueError(f"dimension must be 1, 2 or 3, got {self.d}")
        if not self.L > 0:
            raise ValueError(f"box length must be positive, got {self.L}")
        if self.N < 4 or self.N & (self.N - 1):
            raise ValueError(f"N must be a power of two >= 4, got {self.N}")

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.N,) * self.d

    @property
    def axes(self) -> tuple[int, ...]:
        """Spatial axes counted from the end, so leading batch axes are allowed."""
        return tuple(range(-self.d, 0))

    @property
    def dx(self) -> float:
        return self.L / self.N

    @property
    def cell_volume(self) -> float:
        return self.dx ** self.d

    @property
    def size(self) -> int:
        return self.N ** self.d

    @cached_property
    def k_axis(self) -> np.ndarray:
        """Integer wavenumbers in FFT order."""
        return np.fft.fftfreq(self.N, d=1.0 / self.N).round().astype(int)

    @cached_property
    def xi_axis(self) -> np.ndarray:
        """Frequencies xi = k / L in FFT order."""
        return self.k_axis / self.L

    @cached_property
    def x_axis(self) -> np.ndarray:
        return -0.5 * self.L + self.dx * np.arange(self.N)

    def coords(self) -> tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*([self.x_axis] * self.d), indexing="ij"))

    def frequencies(self) -> tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*([self.xi_axis] * self.d), indexing="ij"))

    @cached_property
    def xi_abs(self) -> np.ndarray:
        """|xi| on the lattice."""
        return np.sqrt(sum(xi ** 2 for xi in self.frequencies()))

    @cached_property
    def omega(self) -> np.ndarray:
        """Symbol of -Laplacian, |2 pi xi|^2."""
        return (2.0 * np.pi * self.xi_abs) ** 2

    def bracket(self, s: float) -> np.ndarray:
        """Symbol of <nabla>^s, (1 + |2 pi xi|^2)^{s/2}."""
        if s == 0:
            return np.ones(self.shape)
        return (1.0 + self.omega) ** (0.5 * s)

    def dealias_mask(self) -> np.ndarray:
        """2/3-rule mask: keep |k_i| < N/3 on every axis."""
        keep = np.abs(self.k_axis) < self.N / 3.0
        mask = keep
        for _ in range(self.d - 1):
            mask = np.multiply.outer(mask, keep)
        return mask

    def edge_band(self, width: float) -> np.ndarray:
        """Boolean mask of points within ``width`` of the box boundary."""
        near = np.abs(self.x_axis) > 0.5 * self.L - width
        band = near
        for _ in range(self.d - 1):
            band = np.logical_or.outer(band, near)
        return band

    def refined(self, factor: int = 2) -> GridSpec:
        return GridSpec(self.d, self.L, self.N * factor)


def forward(grid: GridSpec, u: np.ndarray) -> np.ndarray:
    """Physical samples -> basis coefficients (acts on the last d axes)."""
    scale = grid.cell_volume ** 0.5
    return scale * sfft.fftn(u, axes=grid.axes, norm="ortho")


def inverse(grid: GridSpec, c: np.ndarray) -> np.ndarray:
    """Basis coefficients -> physical samples (acts on the last d axes)."""
    scale = grid.cell_volume ** -0.5
    return scale * sfft.ifftn(c, axes=grid.axes, norm="ortho")


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Complex field on a grid, held in one of the two representations.

    Instances are immutable; the value array is flagged read-only.
    """

    grid: GridSpec
    values: np.ndarray
    representation: str = PHYSICAL

    def __post_init__(self):
        if self.representation not in _REPRESENTATIONS:
            raise ValueError(f"unknown representation {self.representation!r}")
        values = np.array(self.values, dtype=complex)
        if values.shape != self.grid.shape:
            raise ValueError(f"values shape {values.shape} does not match grid {self.grid.shape}")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @classmethod
    def from_function(cls, grid: GridSpec, func) -> SpectralField:
        return cls(grid, func(*grid.coords()), PHYSICAL)

    @classmethod
    def zeros(cls, grid: GridSpec, representation: str = FREQUENCY) -> SpectralField:
        return cls(grid, np.zeros(grid.shape, complex), representation)

    def physical(self) -> np.ndarray:
        if self.representation == PHYSICAL:
            return self.values
        return inverse(self.grid, self.values)

    def frequency(self) -> np.ndarray:
        if self.representation == FREQUENCY:
            return self.values
        return forward(self.grid, self.values)

    def to_physical(self) -> SpectralField:
        if self.representation == PHYSICAL:
            return self
        return SpectralField(self.grid, self.physical(), PHYSICAL)

    def to_frequency(self) -> SpectralField:
        if self.representation == FREQUENCY:
            return self
        return SpectralField(self.grid, self.frequency(), FREQUENCY)

    def _combine(self, other, op) -> SpectralField:
        if isinstance(other, SpectralField):
            if other.grid != self.grid:
                raise ValueError("fields live on different grids")
            if other.representation == self.representation:
                return SpectralField(self.grid, op(self.values, other.values), self.representation)
            return SpectralField(self.grid, op(self.frequency(), other.frequency()), FREQUENCY)
        return NotImplemented

    def __add__(self, other):
        return self._combine(other, np.add)

    def __sub__(self, other):
        return self._combine(other, np.subtract)

    def __mul__(self, c):
        if isinstance(c, SpectralField):
            return NotImplemented
        return SpectralField(self.grid, self.values * c, self.representation)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1


@dataclass(frozen=True)
class NormSpec:
    """Request for the L^q([0, T]; W^{s, r}) norm.  ``math.inf`` is allowed for q and r."""

    s: float
    r: float
    q: float
    T: float

    def __post_init__(self):
        if not (2 <= self.r <= math.inf):
            raise ValueError(f"spatial exponent r must satisfy 2 <= r <= inf, got {self.r}")
        if not (1 <= self.q <= math.inf):
            raise ValueError(f"temporal exponent q must satisfy 1 <= q <= inf, got {self.q}")
        if not self.T > 0:
            raise ValueError(f"time horizon must be positive, got {self.T}")


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Fields on a uniform time grid, stored as a (M+1, N, ..., N) frequency array."""

    grid: GridSpec
    times: np.ndarray
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        values = np.asarray(self.values, dtype=complex)
        if values.shape != (len(times),) + self.grid.shape:
            raise ValueError("trajectory values do not match times x grid shape")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_fields(cls, fields: Sequence[SpectralField], times) -> Trajectory:
        grid = fields[0].grid
        return cls(grid, np.asarray(times, float), np.stack([f.frequency() for f in fields]))

    def __len__(self) -> int:
        return len(self.times)

    def __getitem__(self, j: int) -> SpectralField:
        return SpectralField(self.grid, self.values[j], FREQUENCY)

    def __iter__(self) -> Iterator[SpectralField]:
        return (self[j] for j in range(len(self)))

    @property
    def T(self) -> float:
        return float(self.times[-1])

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    def physical(self) -> np.ndarray:
        return inverse(self.grid, self.values)


def japanese_bracket_multiplier(f: SpectralField, s: float) -> SpectralField:
    """Apply <nabla>^s = (1 - Laplacian)^{s/2}."""
    if s == 0:
        return f
    return SpectralField(f.grid, f.grid.bracket(s) * f.frequency(), FREQUENCY)


def lebesgue_norm(grid: GridSpec, u: np.ndarray, r: float) -> np.ndarray | float:
    """Discrete L^r norm of physical samples over the last d axes."""
    a = np.abs(u)
    axes = grid.axes
    if r == math.inf:
        return a.max(axis=axes)
    if r == 2:
        return np.sqrt(grid.cell_volume * np.sum(a * a, axis=axes))
    # scale by the max before powering so large r does not overflow
    m = a.max(axis=axes, keepdims=True)
    safe = np.where(m > 0, m, 1.0)
    inner = grid.cell_volume * np.sum((a / safe) ** r, axis=axes)
    return np.squeeze(safe, axis=axes) * inner ** (1.0 / r)


def sobolev_norms(grid: GridSpec, coeffs: np.ndarray, s: float, r: float) -> np.ndarray | float:
    """W^{s, r} norms of coefficient arrays, batched over leading axes."""
    if r == 2:
        weight = grid.bracket(2 * s) if s else 1.0
        return np.sqrt(np.sum(weight * np.abs(coeffs) ** 2, axis=grid.axes))
    shaped = grid.bracket(s) * coeffs if s else coeffs
    return lebesgue_norm(grid, inverse(grid, shaped), r)


def sobolev_norm(f: SpectralField, s: float, r: float) -> float:
    """||<nabla>^s f||_{L^r}; ``r = inf`` gives the grid max of the modulus."""
    if r == 2 or s != 0:
        return float(sobolev_norms(f.grid, f.frequency(), s, r))
    return float(lebesgue_norm(f.grid, f.physical(), r))


def homogeneous_sobolev_norm(f: SpectralField, s: float) -> float:
    """Discrete homogeneous H-dot^s norm with symbol |2 pi xi|^s (zero mode dropped)."""
    omega = f.grid.omega.copy()
    zero = (0,) * f.grid.d
    omega[zero] = 1.0
    weight = omega ** s
    weight[zero] = 0.0
    return float(np.sqrt(np.sum(weight * np.abs(f.frequency()) ** 2)))


def time_integral_norm(times: np.ndarray, values: np.ndarray, q: float) -> float:
    """(trapezoid of values^q)^{1/q}; q = inf gives the max."""
    values = np.asarray(values, float)
    if q == math.inf:
        return float(values.max())
    m = values.max()
    if m == 0:
        return 0.0
    integral = np.trapezoid((values / m) ** q, times)
    return float(m * integral ** (1.0 / q))


def spacetime_norm(traj: Trajectory | Sequence[SpectralField], spec: NormSpec) -> float:
    """L^q_T W^{s, r} norm with composite trapezoidal quadrature in time.

    A plain sequence of fields is taken to sit on a uniform grid over [0, T].
    """
    if not isinstance(traj, Trajectory):
        fields = list(traj)
        if len(fields) < 2:
            raise ValueError("a space-time norm needs at least two time points")
        traj = Trajectory.from_fields(fields, np.linspace(0.0, spec.T, len(fields)))
    if len(traj) < 2:
        raise ValueError("a space-time norm needs at least two time points")
    norms = np.atleast_1d(sobolev_norms(traj.grid, traj.values, spec.s, spec.r))
    return time_integral_norm(traj.times, norms, spec.q)


def scaling_critical_regularity(d: int, p: float, r: float = 2) -> float:
    """d/r - 2/(p-1); r = 2 gives the L^2 scaling-critical exponent."""
    if not p > 1:
        raise ValueError("p must exceed 1")
    if r < 1:
        raise ValueError("r must be at least 1")
    return (0.0 if r == math.inf else d / r) - 2.0 / (p - 1.0)


def dilate(f: SpectralField, lam: float, p: float) -> SpectralField:
    """NLS dilation u -> lam^{-2/(p-1)} u(x / lam), carried to the box of side lam * L."""
    grid = GridSpec(f.grid.d, lam * f.grid.L, f.grid.N)
    return SpectralField(grid, lam ** (-2.0 / (p - 1.0)) * f.physical(), PHYSICAL)


# binary field format: magic, d (u8), L (f64), N (u32), representation (u8),
# then N^d little-endian complex64 values in C order.
_MAGIC = b"SNLF"
_HEADER = struct.Struct("<4sBdIB")


def field_to_bytes(f: SpectralField) -> bytes:
    tag = _REPRESENTATIONS.index(f.representation)
    head = _HEADER.pack(_MAGIC, f.grid.d, float(f.grid.L), f.grid.N, tag)
    return head + np.ascontiguousarray(f.values, dtype="<c8").tobytes()


def field_from_bytes(blob: bytes) -> SpectralField:
    magic, d, L, N, tag = _HEADER.unpack_from(blob)
    if magic != _MAGIC:
        raise ValueError("not a field record")
    grid = GridSpec(d, L, N)
    data = np.frombuffer(blob, dtype="<c8", offset=_HEADER.size, count=grid.size)
    return SpectralField(grid, data.reshape(grid.shape).astype(complex), _REPRESENTATIONS[tag])


def write_field(path: str | Path, f: SpectralField) -> None:
    Path(path).write_bytes(field_to_bytes(f))


def read_field(path: str | Path) -> SpectralField:
    return field_from_bytes(Path(path).read_bytes())


def write_field_csv(path: str | Path, f: SpectralField, max_size: int = 65536) -> None:
    """CSV export (index, re, im) with flat C-order index; small grids only."""
    if f.grid.size > max_size:
        raise ValueError(f"grid too large for CSV export ({f.grid.size} > {max_size} points)")
    flat = f.values.ravel()
    lines = ["index,re,im"]
    lines += [f"{i},{float(z.real)!r},{float(z.imag)!r}" for i, z in enumerate(flat)]
    Path(path).write_text("\n".join(lines) + "\n")
