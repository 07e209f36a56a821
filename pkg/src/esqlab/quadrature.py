"""Disk quadrature shared by the superspace and fermion-determinant checks."""

from __future__ import annotations

from dataclasses import dataclass, replace
from functools import cached_property

import numpy as np

from .kernels import CutOff


@dataclass(frozen=True)
class DiskQuadrature:
    """Composite Gauss-Legendre in r on [0, r_max] times the periodic trapezoid rule in angle."""

    r_max: float = 30.0
    n_panels: int = 48
    order: int = 10
    n_angle: int = 48

    def __post_init__(self):
        if self.r_max <= 0 or self.n_panels < 1 or self.order < 2 or self.n_angle < 4:
            raise ValueError(f"bad quadrature spec {self}")

    @classmethod
    def for_cutoff(cls, f: CutOff, tail: float = 1e-12, **kw) -> "DiskQuadrature":
        """Disk large enough that f (and f') drop below ``tail`` relative to f(0)."""
        return cls(r_max=float(f.decay_radius(tail)), **kw)

    def refined(self) -> "DiskQuadrature":
        return replace(self, n_panels=2 * self.n_panels, n_angle=2 * self.n_angle)

    @cached_property
    def radial(self) -> tuple[np.ndarray, np.ndarray]:
        """Nodes r and weights for int_0^r_max g(r) dr."""
        xg, wg = np.polynomial.legendre.leggauss(self.order)
        edges = np.linspace(0.0, self.r_max, self.n_panels + 1)
        a, b = edges[:-1, None], edges[1:, None]
        r = (0.5 * (a + b) + 0.5 * (b - a) * xg).ravel()
        w = (0.5 * (b - a) * wg).ravel()
        return r, w

    @cached_property
    def angular(self) -> tuple[np.ndarray, np.ndarray]:
        """Nodes and weights for int_0^{2 pi} g(t) dt; spectrally accurate for periodic g."""
        t = 2.0 * np.pi * (np.arange(self.n_angle) + 0.5) / self.n_angle
        return t, np.full(self.n_angle, 2.0 * np.pi / self.n_angle)

    def radial_integral(self, g) -> float:
        """int_{|x| < r_max} g(|x|) dx for a radial integrand."""
        r, w = self.radial
        return float(np.sum(w * 2.0 * np.pi * r * g(r)))

    @cached_property
    def planar(self) -> tuple[np.ndarray, np.ndarray]:
        """Points (m, 2) and weights for int over the disk of a general integrand."""
        r, wr = self.radial
        t, wt = self.angular
        R, T = np.meshgrid(r, t, indexing="ij")
        pts = np.stack([R * np.cos(T), R * np.sin(T)], axis=-1).reshape(-1, 2)
        w = (wr[:, None] * wt[None, :] * R).ravel()
        return pts, w
