"""Superfield two-point function and Wick pairings.

    <Phi(z) Phi(z')> = C(x - x', theta - theta', thetabar - thetabar'),
    C(x, theta, thetabar) = G_{2+2chi}(x) - varpi G_{1+2chi}(x) theta thetabar,

with varpi = 1 / (1 + 2 chi). Every C is even, so pairings carry no signs.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from functools import cached_property
from typing import Iterator, Sequence

import numpy as np

from ..kernels import KernelError, cached_table, green_at_origin, green_kernel
from .grassmann import GrassmannElement
from .superfunction import SuperFunction

MAX_INSERTIONS = 10


class PairingGuardError(ValueError):
    pass


@dataclass(frozen=True)
class SuperCovariance:
    chi: float = 0.5
    m2: float = 1.0
    r_max: float = 120.0

    def __post_init__(self):
        if not self.chi > 0:
            raise KernelError("the superfield covariance needs chi > 0")

    @property
    def varpi(self) -> float:
        return 1.0 / (1.0 + 2.0 * self.chi)

    @property
    def alpha_hi(self) -> float:
        return 2.0 + 2.0 * self.chi

    @property
    def alpha_lo(self) -> float:
        return 1.0 + 2.0 * self.chi

    @cached_property
    def _hi(self):
        return cached_table(self.alpha_hi, self.m2, 1e-5, self.r_max, 768)

    @cached_property
    def _lo(self):
        return cached_table(self.alpha_lo, self.m2, 1e-5, self.r_max, 768)

    def g_hi(self, r) -> np.ndarray:
        return self._hi(np.asarray(r, dtype=float))

    def g_lo(self, r) -> np.ndarray:
        return self._lo(np.asarray(r, dtype=float))

    @property
    def g_hi0(self) -> float:
        return green_at_origin(self.alpha_hi, self.m2)

    @property
    def g_lo0(self) -> float:
        return green_at_origin(self.alpha_lo, self.m2)

    def two_point(self) -> dict[str, float]:
        """Component two-point data at coincident points."""
        return {
            "phi_phi": self.g_hi0,
            "phi_omega": -self.varpi * self.g_lo0,
            "omega_omega": 0.0,
            "psi_psibar": self.varpi * self.g_lo0,
        }

    def element(self, r, dtheta: GrassmannElement, dthetabar: GrassmannElement) -> GrassmannElement:
        """C(r, dtheta, dthetabar) inside a Grassmann algebra."""
        r = np.asarray(r, dtype=float)
        hi = np.where(r == 0, self.g_hi0, self.g_hi(np.where(r == 0, 1.0, r)))
        lo = np.where(r == 0, self.g_lo0, self.g_lo(np.where(r == 0, 1.0, r)))
        return GrassmannElement.scalar(dtheta.k, hi) - (dtheta * dthetabar) * (self.varpi * lo)

    def as_superfunction(self, exact: bool = True) -> SuperFunction:
        """C_Phi as a superfunction of x; ``exact`` evaluates kernels by quadrature
        instead of the interpolation table (needed for finite-difference gradients)."""

        def kern(alpha, table):
            def g(x):
                r = np.linalg.norm(np.asarray(x, dtype=float), axis=-1)
                if not exact:
                    return table(r)
                flat = np.array([green_kernel(alpha, self.m2, float(v)) for v in r.ravel()])
                return flat.reshape(r.shape)

            return g

        hi = kern(self.alpha_hi, self._hi)
        lo = kern(self.alpha_lo, self._lo)
        return SuperFunction(f0=hi, fttb=lambda x: -self.varpi * lo(x), name=f"C_Phi(chi={self.chi})")


def perfect_matchings(items: Sequence[int]) -> Iterator[list[tuple[int, int]]]:
    """All perfect matchings of the positions 0..len(items)-1 (as index pairs)."""
    idx = list(range(len(items)))

    def rec(rest):
        if not rest:
            yield []
            return
        a = rest[0]
        for j in range(1, len(rest)):
            b = rest[j]
            for tail in rec(rest[1:j] + rest[j + 1:]):
                yield [(a, b)] + tail

    yield from rec(idx)


def pairing_patterns(labels: Sequence[int]) -> Counter:
    """Matchings of labelled insertions collapsed to multisets of label pairs."""
    if len(labels) > MAX_INSERTIONS:
        raise PairingGuardError(f"{len(labels)} insertions exceed the guard of {MAX_INSERTIONS}")
    pats: Counter = Counter()
    for m in perfect_matchings(labels):
        key = tuple(sorted(tuple(sorted((labels[i], labels[j]))) for i, j in m))
        pats[key] += 1
    return pats


def wick_superfield_expectation(
    points: Sequence[tuple], cov: SuperCovariance, k: int | None = None
) -> GrassmannElement:
    """<prod_i Phi(x_i, theta_i, thetabar_i)> as a Grassmann element.

    ``points`` holds tuples (x, theta_index, thetabar_index); an index of None
    means that coordinate is 0. ``k`` defaults to one past the largest index.
    """
    if len(points) > MAX_INSERTIONS:
        raise PairingGuardError(f"{len(points)} insertions exceed the guard of {MAX_INSERTIONS}")
    used = [i for _, t, tb in points for i in (t, tb) if i is not None]
    if k is None:
        k = max(used) + 1 if used else 0
    if len(points) % 2:
        return GrassmannElement(k)

    def coord(i):
        return GrassmannElement.generator(k, i) if i is not None else GrassmannElement(k)

    pair_cache: dict[tuple[int, int], GrassmannElement] = {}

    def pair(a, b):
        if (a, b) not in pair_cache:
            (xa, ta, tba), (xb, tb, tbb) = points[a], points[b]
            r = np.linalg.norm(np.asarray(xa, dtype=float) - np.asarray(xb, dtype=float), axis=-1)
            pair_cache[(a, b)] = cov.element(r, coord(ta) - coord(tb), coord(tba) - coord(tbb))
        return pair_cache[(a, b)]

    total = GrassmannElement(k)
    for m in perfect_matchings(list(range(len(points)))):
        term = GrassmannElement.scalar(k, 1.0)
        for a, b in m:
            term = term * pair(a, b)
        total = total + term
    return total


def isserlis_moment(power: int, variance: float) -> float:
    """E[X^power] for X ~ N(0, variance)."""
    if power % 2:
        return 0.0
    out = 1.0
    for j in range(power - 1, 0, -2):
        out *= j
    return out * variance ** (power // 2)


__all__ = [
    "SuperCovariance",
    "perfect_matchings",
    "pairing_patterns",
    "wick_superfield_expectation",
    "isserlis_moment",
    "PairingGuardError",
]
