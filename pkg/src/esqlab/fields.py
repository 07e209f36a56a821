"""Periodic-lattice fields: white noise, spectral (m^2 - Delta)^(-alpha), lattice integrals.

Conventions (the single source of truth for every pairing in the package):

* the torus [-L/2, L/2)^2 is sampled at N x N cells of side a = L/N, with cell
  (0, 0) at x = 0 and FFT index ordering for the coordinates;
* lattice white noise has i.i.d. N(0, 1/a^2) entries, so that the lattice
  pairing <g, h> = a^2 sum_cells g h approximates the L^2 pairing and the
  noise has the standard Gaussian law with respect to it;
* the symbol of (m^2 - Delta) is m^2 + |k|^2 with k = 2 pi j / L for the
  integer FFT frequencies j.
"""

from __future__ import annotations

import csv
import struct
import sys
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from .kernels import CutOff

RNG_SCHEME = "pcg64-seedsequence-v1"


@dataclass(frozen=True)
class GridSpec:
    L: float
    N: int
    n: int = 1
    m2: float = 1.0

    def __post_init__(self):
        if not self.L > 0:
            raise ValueError(f"L must be positive, got {self.L}")
        if self.N < 8 or self.N & (self.N - 1):
            raise ValueError(f"N must be a power of two >= 8, got {self.N}")
        if self.n < 1:
            raise ValueError(f"n must be >= 1, got {self.n}")
        if not self.m2 > 0:
            raise ValueError(f"m2 must be positive, got {self.m2}")

    @property
    def a(self) -> float:
        return self.L / self.N

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.n, self.N, self.N)

    @cached_property
    def coords(self) -> np.ndarray:
        """1D coordinates in FFT order: index 0 is x = 0."""
        return np.fft.fftfreq(self.N, d=1.0 / self.L)

    @cached_property
    def points(self) -> np.ndarray:
        """Cell positions, shape (N, N, 2)."""
        X, Y = np.meshgrid(self.coords, self.coords, indexing="ij")
        return np.stack([X, Y], axis=-1)

    @cached_property
    def radius_sq(self) -> np.ndarray:
        return np.sum(self.points**2, axis=-1)

    @cached_property
    def k2(self) -> np.ndarray:
        """|k|^2 for the real FFT layout, shape (N, N//2 + 1)."""
        kx = 2 * np.pi * np.fft.fftfreq(self.N, d=self.a)
        ky = 2 * np.pi * np.fft.rfftfreq(self.N, d=self.a)
        return kx[:, None] ** 2 + ky[None, :] ** 2

    def symbol(self, alpha: float) -> np.ndarray:
        """(m^2 + |k|^2)^(-alpha) on the real FFT layout."""
        return (self.m2 + self.k2) ** (-alpha)

    def torus_guard(self, cutoff: CutOff, ratio: float = 1e-6) -> bool:
        """True when f(L/2)/f(0) < ratio, i.e. wrap-around is negligible."""
        return bool(cutoff.ftilde(np.array((self.L / 2) ** 2)) < ratio * cutoff.f0)


@dataclass
class Field:
    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim == 2:
            self.values = self.values[None]
        if self.values.shape != self.grid.shape:
            raise ValueError(f"field shape {self.values.shape} != grid shape {self.grid.shape}")

    @classmethod
    def zeros(cls, grid: GridSpec) -> "Field":
        return cls(grid, np.zeros(grid.shape))

    def copy(self) -> "Field":
        return Field(self.grid, self.values.copy())

    def at_origin(self) -> np.ndarray:
        return self.values[:, 0, 0].copy()

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0

    def l2_norm(self) -> float:
        return float(np.sqrt(self.grid.a**2 * np.sum(self.values**2)))

    def __add__(self, other: "Field") -> "Field":
        return Field(self.grid, self.values + other.values)

    def __sub__(self, other: "Field") -> "Field":
        return Field(self.grid, self.values - other.values)

    def __mul__(self, c: float) -> "Field":
        return Field(self.grid, self.values * c)

    __rmul__ = __mul__

    def __neg__(self) -> "Field":
        return Field(self.grid, -self.values)


@dataclass
class NoiseDraw:
    field: Field
    seed: int
    scheme: str = RNG_SCHEME

    @property
    def grid(self) -> GridSpec:
        return self.field.grid


def replica_seed(master_seed: int, replica: int) -> int:
    """64-bit seed of replica ``replica``: SeedSequence(master, spawn_key=(replica,))."""
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=(int(replica),))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def rng_from_seed(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed))))


def sample_white_noise(grid: GridSpec, seed: int) -> NoiseDraw:
    """Lattice white noise with cell variance 1/a^2, deterministic in ``seed``."""
    values = rng_from_seed(seed).standard_normal(grid.shape) / grid.a
    return NoiseDraw(Field(grid, values), seed=int(seed))


def zero_noise(grid: GridSpec) -> NoiseDraw:
    return NoiseDraw(Field.zeros(grid), seed=-1, scheme="zero")


def apply_symbol(values: np.ndarray, grid: GridSpec, symbol: np.ndarray) -> np.ndarray:
    """Multiply each component by ``symbol`` in the (real) Fourier domain."""
    spec = np.fft.rfft2(values, axes=(-2, -1))
    return np.fft.irfft2(spec * symbol, s=(grid.N, grid.N), axes=(-2, -1))


def apply_fractional_inverse(field: Field, alpha: float) -> Field:
    """(m^2 - Delta)^(-alpha) applied componentwise; negative alpha gives the forward power."""
    grid = field.grid
    return Field(grid, apply_symbol(field.values, grid, grid.symbol(alpha)))


def apply_helmholtz(field: Field) -> Field:
    """(m^2 - Delta) with the spectral symbol m^2 + |k|^2."""
    return apply_fractional_inverse(field, -1.0)


def lattice_integral(field: Field, weight: CutOff | None = None, derivative: bool = False):
    """a^2 sum over cells, per component, optionally weighted by f or ftilde'(|x|^2)."""
    grid = field.grid
    vals = field.values
    if weight is not None:
        w = weight.ftilde_prime(grid.radius_sq) if derivative else weight.ftilde(grid.radius_sq)
        vals = vals * w[None]
    return grid.a**2 * np.sum(vals, axis=(-2, -1))


def lattice_covariance(grid: GridSpec, alpha: float = 2.0) -> np.ndarray:
    """Exact covariance E[(I^{alpha/2} xi)(0) (I^{alpha/2} xi)(x)] = (1/L^2) sum_k symbol_alpha e^{ikx}.

    With ``alpha = 2`` this is the covariance of I xi, shape (N, N).
    """
    spec = grid.symbol(alpha)
    return np.fft.irfft2(spec, s=(grid.N, grid.N)) * grid.N**2 / grid.L**2


def lattice_variance(grid: GridSpec) -> float:
    """(1/L^2) sum_k (m^2 + |k|^2)^(-2) over the full N x N frequency set."""
    kx = 2 * np.pi * np.fft.fftfreq(grid.N, d=grid.a)
    k2 = kx[:, None] ** 2 + kx[None, :] ** 2
    return float(np.sum((grid.m2 + k2) ** -2.0) / grid.L**2)


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------

_MAGIC = b"ESQF"
_VERSION = 1


def save_field(field: Field, path: str | Path) -> None:
    """Binary container: magic, version, endianness, n, N, L, m2, then float64 values."""
    g = field.grid
    endian = "<" if sys.byteorder == "little" else ">"
    header = struct.pack(
        endian + "4sHcIIdd", _MAGIC, _VERSION, endian.encode(), g.n, g.N, g.L, g.m2
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(field.values.astype(endian + "f8").tobytes())


def load_field(path: str | Path) -> Field:
    raw = Path(path).read_bytes()
    endian = chr(raw[6])
    if endian not in "<>":
        raise ValueError(f"{path}: bad endianness marker {endian!r}")
    fmt = endian + "4sHcIIdd"
    size = struct.calcsize(fmt)
    magic, version, _, n, N, L, m2 = struct.unpack(fmt, raw[:size])
    if magic != _MAGIC or version != _VERSION:
        raise ValueError(f"{path}: not an esqlab field file (magic={magic!r}, version={version})")
    grid = GridSpec(L=L, N=N, n=n, m2=m2)
    values = np.frombuffer(raw[size:], dtype=endian + "f8").reshape(grid.shape)
    return Field(grid, values.astype(float))


def export_slice_csv(field: Field, path: str | Path, component: int = 0, row: int = 0) -> None:
    """Write one lattice row (fixed first index) as x,value pairs in increasing x."""
    g = field.grid
    order = np.argsort(g.coords)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "value"])
        for j in order:
            w.writerow([repr(float(g.coords[j])), repr(float(field.values[component, row, j]))])
