"""Fredholm determinants of kernels g(x) S(x - x') on a disk.

The operator is discretised on the shared disk quadrature as
A = W^{1/2} K W^{1/2} with K_ij = g(x_i) S(|x_i - x_j|). ``kernel_determinant``
returns det(I + A) directly. ``fredholm_series`` sums the expansion

    det(I + K) = sum_n (1/n!) int det[g(x_i) S(x_i - x_j)]_{i,j<=n} dx_1 ... dx_n

term by term. On the tensor quadrature each n-fold integral equals the
elementary symmetric function e_n of the eigenvalues of A, which Newton's
identities produce from the traces tr(A^k) (the cycle expansion of the n x n
determinant) without enumerating node tuples.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Callable

import numpy as np

from .kernels import CutOff, cached_table, green_at_origin, make_cutoff
from .quadrature import DiskQuadrature

log = logging.getLogger(__name__)

MAX_SERIES_ORDER = 6
MAX_NODES = 10000


class CostGuardError(ValueError):
    pass


def fermion_covariance(chi: float = 0.5, m2: float = 1.0) -> Callable[[np.ndarray], np.ndarray]:
    """S(r) = varpi G_{1+2chi}(r), varpi = 1 / (1 + 2 chi)."""
    alpha = 1.0 + 2.0 * chi
    varpi = 1.0 / (1.0 + 2.0 * chi)
    table = cached_table(alpha, m2, 1e-5, 200.0, 768)
    s0 = green_at_origin(alpha, m2)

    def S(r):
        r = np.asarray(r, dtype=float)
        out = np.full(r.shape, s0)
        pos = r > 1e-5
        out[pos] = table(r[pos])
        return varpi * out

    return S


@dataclass
class FermionKernel:
    """Kernel g(x) S(|x - x'|) together with its disk discretisation.

    ``g`` maps an (m, 2) array of points to (m,) weights and ``S`` maps radii
    to covariance values.
    """

    g: Callable[[np.ndarray], np.ndarray]
    S: Callable[[np.ndarray], np.ndarray]
    quadrature: DiskQuadrature = field(default_factory=lambda: DiskQuadrature(30.0, 6, 8, 32))
    label: str = ""

    def __post_init__(self):
        m = len(self.quadrature.planar[1])
        if m > MAX_NODES:
            raise CostGuardError(f"{m} nodes exceed the dense-matrix guard of {MAX_NODES}")

    @classmethod
    def from_cutoff(
        cls,
        f: CutOff,
        amplitude: float = 1.0,
        chi: float = 0.5,
        quadrature: DiskQuadrature | None = None,
    ) -> "FermionKernel":
        q = quadrature or DiskQuadrature(float(f.decay_radius(1e-14)), 6, 8, 32)
        return cls(
            g=lambda x: amplitude * f.ftilde(np.sum(x * x, axis=-1)),
            S=fermion_covariance(chi, f.m2),
            quadrature=q,
            label=f"{amplitude:g}*{f.kind}(b={f.b:g})",
        )

    @cached_property
    def nodes(self) -> tuple[np.ndarray, np.ndarray]:
        return self.quadrature.planar

    @cached_property
    def g_values(self) -> np.ndarray:
        return np.asarray(self.g(self.nodes[0]), dtype=float)

    @cached_property
    def matrix(self) -> np.ndarray:
        """K_ij = g(x_i) S(|x_i - x_j|) at the nodes."""
        x = self.nodes[0]
        d = np.sqrt(np.sum((x[:, None, :] - x[None, :, :]) ** 2, axis=-1))
        return self.g_values[:, None] * self.S(d)

    @cached_property
    def symmetrised(self) -> np.ndarray:
        sw = np.sqrt(self.nodes[1])
        return sw[:, None] * self.matrix * sw[None, :]

    @property
    def trace_bound(self) -> float:
        """sum |g(x_i)| S(0) w_i, the trace-norm surrogate."""
        return float(np.sum(np.abs(self.g_values) * self.nodes[1]) * float(self.S(np.zeros(1))[0]))

    def refined(self) -> "FermionKernel":
        return FermionKernel(self.g, self.S, self.quadrature.refined(), self.label)


def kernel_determinant(k: FermionKernel) -> float:
    """det(I + W^{1/2} K W^{1/2})."""
    A = k.symmetrised
    sign, logdet = np.linalg.slogdet(np.eye(len(A)) + A)
    return float(sign * math.exp(logdet))


@dataclass(frozen=True)
class SeriesResult:
    value: float
    last_term: float
    terms: tuple[float, ...]


def fredholm_series(k: FermionKernel, order: int) -> SeriesResult:
    """Partial sum of the Fredholm expansion through ``order`` n-fold terms."""
    if order < 0:
        raise ValueError("order must be non-negative")
    if order > MAX_SERIES_ORDER:
        raise CostGuardError(f"order {order} exceeds {MAX_SERIES_ORDER}")
    A = k.symmetrised
    traces = []
    P = np.eye(len(A))
    for _ in range(order):
        P = P @ A
        traces.append(float(np.trace(P)))
    e = [1.0]
    for n in range(1, order + 1):
        e.append(sum((-1) ** (j - 1) * e[n - j] * traces[j - 1] for j in range(1, n + 1)) / n)
    return SeriesResult(float(sum(e)), abs(e[-1]) if order else 1.0, tuple(e))


@dataclass(frozen=True)
class SweepRow:
    amplitude: float
    series: float
    determinant: float
    gap: float
    truncation: float
    trace_bound: float

    @property
    def within(self) -> bool:
        return self.gap <= 2.0 * self.truncation


def amplitude_sweep(
    f: CutOff | None = None,
    amplitudes=np.linspace(0.0, 1.0, 11),
    order: int = 5,
    chi: float = 0.5,
    quadrature: DiskQuadrature | None = None,
) -> list[SweepRow]:
    f = f or make_cutoff("exp-sqrt", 1.0, 1.0)
    rows = []
    for a in amplitudes:
        k = FermionKernel.from_cutoff(f, float(a), chi, quadrature)
        s = fredholm_series(k, order)
        d = kernel_determinant(k)
        rows.append(SweepRow(float(a), s.value, d, abs(s.value - d), s.last_term, k.trace_bound))
    return rows


def export_sweep_csv(rows: list[SweepRow], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["amplitude", "series", "determinant", "gap", "truncation_estimate"])
        for r in rows:
            w.writerow([r.amplitude, repr(r.series), repr(r.determinant), repr(r.gap), repr(r.truncation)])
