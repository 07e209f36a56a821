"""Finite Grassmann algebra with real (or array-valued) coefficients.

A basis monomial is a bitmask over generators 0..k-1, read as the ordered
product theta_{i1} theta_{i2} ... with i1 < i2 < .... Coefficients may be
numpy arrays, which lets one element carry a whole quadrature grid.
"""

from __future__ import annotations

from functools import lru_cache
from typing import Union

import numpy as np

Scalar = Union[float, np.ndarray]


@lru_cache(maxsize=None)
def reorder_sign(a: int, b: int) -> int:
    """Sign of theta_A theta_B relative to the sorted monomial A|B (0 if they overlap)."""
    if a & b:
        return 0
    swaps = 0
    j = 0
    bb = b
    while bb:
        if bb & 1:
            swaps += bin(a >> (j + 1)).count("1")
        bb >>= 1
        j += 1
    return -1 if swaps & 1 else 1


def _is_zero(c: Scalar) -> bool:
    return bool(np.all(np.asarray(c) == 0))


class GrassmannElement:
    __slots__ = ("k", "coeffs")

    def __init__(self, k: int, coeffs: dict[int, Scalar] | None = None):
        if k < 0:
            raise ValueError("generator count must be non-negative")
        self.k = k
        self.coeffs: dict[int, Scalar] = {}
        for mask, c in (coeffs or {}).items():
            if mask >> k:
                raise ValueError(f"monomial {mask:b} uses generators beyond k={k}")
            if not _is_zero(c):
                self.coeffs[mask] = c

    # construction -------------------------------------------------------

    @classmethod
    def scalar(cls, k: int, c: Scalar) -> "GrassmannElement":
        return cls(k, {0: c})

    @classmethod
    def generator(cls, k: int, i: int) -> "GrassmannElement":
        if not 0 <= i < k:
            raise ValueError(f"generator {i} out of range for k={k}")
        return cls(k, {1 << i: 1.0})

    @classmethod
    def monomial(cls, k: int, indices, c: Scalar = 1.0) -> "GrassmannElement":
        """c theta_{i1} theta_{i2} ... in the given (not necessarily sorted) order."""
        out = cls.scalar(k, c)
        for i in indices:
            out = out * cls.generator(k, i)
        return out

    # access ---------------------------------------------------------------

    def coefficient(self, mask: int) -> Scalar:
        return self.coeffs.get(mask, 0.0)

    @property
    def body(self) -> Scalar:
        return self.coefficient(0)

    @property
    def top(self) -> Scalar:
        return self.coefficient((1 << self.k) - 1)

    def is_even(self) -> bool:
        return all(bin(m).count("1") % 2 == 0 for m in self.coeffs)

    def grade(self, g: int) -> "GrassmannElement":
        return GrassmannElement(self.k, {m: c for m, c in self.coeffs.items() if bin(m).count("1") == g})

    def soul(self) -> "GrassmannElement":
        return GrassmannElement(self.k, {m: c for m, c in self.coeffs.items() if m})

    # arithmetic -------------------------------------------------------------

    def _coerce(self, other) -> "GrassmannElement":
        if isinstance(other, GrassmannElement):
            if other.k != self.k:
                raise ValueError(f"generator counts differ: {self.k} vs {other.k}")
            return other
        return GrassmannElement.scalar(self.k, other)

    def __add__(self, other) -> "GrassmannElement":
        other = self._coerce(other)
        out = dict(self.coeffs)
        for m, c in other.coeffs.items():
            out[m] = out[m] + c if m in out else c
        return GrassmannElement(self.k, out)

    __radd__ = __add__

    def __neg__(self) -> "GrassmannElement":
        return GrassmannElement(self.k, {m: -c for m, c in self.coeffs.items()})

    def __sub__(self, other) -> "GrassmannElement":
        return self + (-self._coerce(other))

    def __rsub__(self, other) -> "GrassmannElement":
        return self._coerce(other) - self

    def __mul__(self, other) -> "GrassmannElement":
        if not isinstance(other, GrassmannElement):
            return GrassmannElement(self.k, {m: c * other for m, c in self.coeffs.items()})
        other = self._coerce(other)
        out: dict[int, Scalar] = {}
        for a, ca in self.coeffs.items():
            for b, cb in other.coeffs.items():
                s = reorder_sign(a, b)
                if s == 0:
                    continue
                term = ca * cb if s > 0 else -(ca * cb)
                m = a | b
                out[m] = out[m] + term if m in out else term
        return GrassmannElement(self.k, out)

    def __rmul__(self, other) -> "GrassmannElement":
        # scalars commute with everything
        return GrassmannElement(self.k, {m: other * c for m, c in self.coeffs.items()})

    def __pow__(self, e: int) -> "GrassmannElement":
        if e < 0:
            raise ValueError("negative powers are not defined")
        out = GrassmannElement.scalar(self.k, 1.0)
        for _ in range(e):
            out = out * self
        return out

    def allclose(self, other, atol: float = 1e-12) -> bool:
        other = self._coerce(other)
        for m in set(self.coeffs) | set(other.coeffs):
            if not np.allclose(self.coefficient(m), other.coefficient(m), atol=atol, rtol=0):
                return False
        return True

    def __repr__(self) -> str:
        if not self.coeffs:
            return "0"
        parts = []
        for m in sorted(self.coeffs):
            gens = "".join(f"t{i}" for i in range(self.k) if m >> i & 1) or "1"
            parts.append(f"{self.coeffs[m]!r}*{gens}")
        return " + ".join(parts)


def apply_function(derivs: list[Scalar], x: GrassmannElement) -> GrassmannElement:
    """r(x) = sum_j r^(j)(body) soul^j / j! given derivs = [r(body), r'(body), ...].

    The series is exact once j exceeds k/2 for even souls (nilpotency).
    """
    soul = x.soul()
    out = GrassmannElement.scalar(x.k, derivs[0])
    power = GrassmannElement.scalar(x.k, 1.0)
    fact = 1.0
    for j in range(1, len(derivs)):
        power = power * soul
        if not power.coeffs:
            break
        fact *= j
        out = out + power * (derivs[j] / fact)
    return out
