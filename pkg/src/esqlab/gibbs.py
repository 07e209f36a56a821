"""The zero-dimensional target measure

    kappa(dy) = Z^{-1} exp(-4 pi (m^2 |y|^2 / 2 + V(y))) dy    on R^n.

Moments use tensor trapezoid quadrature on [-R, R]^n (spectrally accurate for
these smooth, rapidly decaying integrands) with node doubling until two
successive estimates agree. For n > 3 a rejection sampler takes over.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy import stats

from .potentials import Potential

log = logging.getLogger(__name__)

# 4 pi m^2 R^2 / 2 >= 60: exp(-60) is below anything that matters in double precision
EXPONENT_FLOOR = 60.0
MAX_QUADRATURE_DIM = 3


class QuadratureError(RuntimeError):
    def __init__(self, message: str, error_estimate: float):
        super().__init__(message)
        self.error_estimate = error_estimate


@dataclass(frozen=True)
class MomentResult:
    value: float
    error_estimate: float
    nodes: int
    method: str = "trapezoid"


def _exponent(p: Potential, m2: float, y: np.ndarray) -> np.ndarray:
    return -4.0 * np.pi * (0.5 * m2 * np.sum(y * y, axis=0) + p.V(y))


def _tensor_grid(n: int, R: float, nodes: int) -> tuple[np.ndarray, float]:
    x = np.linspace(-R, R, nodes)
    h = x[1] - x[0]
    mesh = np.meshgrid(*([x] * n), indexing="ij")
    # endpoint weights are irrelevant: the integrand is ~exp(-60) there
    return np.stack(mesh), h**n


@dataclass
class GibbsMeasure:
    potential: Potential
    m2: float = 1.0
    R: float = 0.0
    nodes: int = 129
    rtol: float = 1e-8
    max_nodes: int = 4097
    Z_kappa: float = field(init=False, default=float("nan"))
    Z_error: float = field(init=False, default=float("nan"))

    def __post_init__(self):
        if self.m2 <= 0:
            raise ValueError("m2 must be positive")
        if self.R <= 0:
            self.R = float(np.sqrt(2.0 * EXPONENT_FLOOR / (4.0 * np.pi * self.m2)))
        self.n = self.potential.n
        if self.n <= MAX_QUADRATURE_DIM:
            res = self._quadrature(lambda y: np.ones(y.shape[1:]), normalised=False)
            self.Z_kappa, self.Z_error = res.value, res.error_estimate
            self.nodes = res.nodes
        else:
            self.Z_kappa = self._gaussian_norm() * self._acceptance_rate(200_000)
            self.Z_error = float("nan")
        if not self.Z_kappa > 0:
            raise QuadratureError("non-positive normalisation", self.Z_error)

    def _gaussian_norm(self) -> float:
        return (2.0 * self.m2) ** (-self.n / 2.0)

    def _acceptance_rate(self, size: int) -> float:
        rng = np.random.Generator(np.random.PCG64(12345))
        y = rng.standard_normal((self.n, size)) / np.sqrt(4.0 * np.pi * self.m2)
        return float(np.mean(np.exp(-4.0 * np.pi * self.potential.V(y))))

    def _quadrature(self, h: Callable, normalised: bool = True) -> MomentResult:
        nodes = self.nodes
        prev = None
        while True:
            y, dv = _tensor_grid(self.n, self.R, nodes)
            w = np.exp(_exponent(self.potential, self.m2, y))
            val = float(np.sum(np.asarray(h(y)) * w) * dv)
            if normalised:
                val /= self.Z_kappa
            if prev is not None:
                err = abs(val - prev)
                if err <= self.rtol * max(abs(val), 1e-3):
                    return MomentResult(val, err, nodes)
            if 2 * nodes - 1 > self.max_nodes or (nodes - 1) ** self.n > 2e7:
                err = abs(val - prev) if prev is not None else float("inf")
                raise QuadratureError(f"no stabilisation at {nodes} nodes per axis", err)
            prev = val
            nodes = 2 * nodes - 1

    @property
    def tail_mass_bound(self) -> float:
        """Mass beyond |y| = R, bounded with V >= 0 by the Gaussian tail."""
        q = 4.0 * np.pi * self.m2 * self.R**2
        return float(stats.chi2.sf(q, self.n) * self._gaussian_norm() / self.Z_kappa)

    def sample(self, size: int, rng: np.random.Generator) -> np.ndarray:
        """Exact draws by rejection from N(0, 1/(4 pi m^2)); acceptance exp(-4 pi V) <= 1."""
        out = np.empty((self.n, 0))
        sd = 1.0 / np.sqrt(4.0 * np.pi * self.m2)
        while out.shape[1] < size:
            batch = max(1024, 2 * (size - out.shape[1]))
            y = rng.standard_normal((self.n, batch)) * sd
            keep = rng.random(batch) < np.exp(-4.0 * np.pi * self.potential.V(y))
            out = np.concatenate([out, y[:, keep]], axis=1)
        return out[:, :size]


def gibbs_density(g: GibbsMeasure, y) -> np.ndarray:
    """Z^{-1} exp(-4 pi (m^2 |y|^2 / 2 + V(y))); ``y`` has leading axis n."""
    y = np.asarray(y, dtype=float)
    if y.ndim == 0:
        y = y[None]
    return np.exp(_exponent(g.potential, g.m2, y)) / g.Z_kappa


def gibbs_moment(
    g: GibbsMeasure, h: Callable[[np.ndarray], np.ndarray], mc_samples: int = 1_000_000, seed: int = 0
) -> MomentResult:
    """int h dkappa. ``h`` maps an (n, ...) array to an array of shape (...)."""
    if g.n <= MAX_QUADRATURE_DIM:
        return g._quadrature(h)
    y = g.sample(mc_samples, np.random.Generator(np.random.PCG64(seed)))
    vals = np.asarray(h(y), dtype=float)
    return MomentResult(float(vals.mean()), float(vals.std(ddof=1) / np.sqrt(len(vals))), 0, "rejection")


def monomial(power: int, component: int = 0) -> Callable[[np.ndarray], np.ndarray]:
    return lambda y: y[component] ** power


def export_moments_csv(rows: list[tuple[str, MomentResult]], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["h", "value", "error_estimate"])
        for tag, res in rows:
            w.writerow([tag, repr(res.value), repr(res.error_estimate)])
