"""Low-order numerical checks of the superspace reduction identities.

``reduction_formula_check`` integrates C_Phi against f(|x|^2 + 4 theta thetabar).
``verify_pol_eq`` compares

    <p(phi(0)) Q(P, f)^n>,   Q(P, f) = -int P(Phi) f(|x|^2 + 4 theta thetabar) dx dtheta dthetabar,

computed by superfield Wick pairings and spatial quadrature, with the
zero-dimensional Gaussian moment <p(phi) (-4 pi f(0) P(phi))^n> at variance
G_{2+2chi}(0).
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from functools import lru_cache
from itertools import product
from typing import Sequence

import numpy as np
from numpy.polynomial import polynomial as npoly

from ..kernels import CutOff, make_cutoff
from ..quadrature import DiskQuadrature
from .grassmann import GrassmannElement
from .superfunction import SuperFunction, berezin_integral
from .wick import MAX_INSERTIONS, PairingGuardError, SuperCovariance, isserlis_moment, pairing_patterns


class QuadratureConvergenceError(RuntimeError):
    def __init__(self, message: str, error_estimate: float):
        super().__init__(message)
        self.error_estimate = error_estimate


def _coeffs(poly) -> np.ndarray:
    if isinstance(poly, np.polynomial.Polynomial):
        return np.asarray(poly.coef, dtype=float)
    return np.atleast_1d(np.asarray(poly, dtype=float))


def poly_label(c: Sequence[float]) -> str:
    terms = [f"{v:g}*y^{j}" if j else f"{v:g}" for j, v in enumerate(c) if v != 0]
    return " + ".join(terms) or "0"


# ---------------------------------------------------------------------------
# reduction formula
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ReductionCheck:
    chi: float
    cutoff: str
    lhs: float
    rhs: float
    rel_gap: float
    quad_error: float


def reduction_formula_check(
    cov: SuperCovariance, f: CutOff, quadrature: DiskQuadrature | None = None
) -> ReductionCheck:
    """int C_Phi F dx dtheta dthetabar versus 4 pi G_{2+2chi}(0) f(0) for F = f(|x|^2 + 4 theta thetabar)."""
    q = quadrature or DiskQuadrature.for_cutoff(f)
    F = SuperFunction.from_radial(f.ftilde, f.ftilde_prime)
    T = cov.as_superfunction(exact=False)
    lhs = berezin_integral(T * F, quadrature=q)
    lhs_fine = berezin_integral(T * F, quadrature=q.refined())
    rhs = 4.0 * math.pi * cov.g_hi0 * f.f0
    return ReductionCheck(
        chi=cov.chi,
        cutoff=f"{f.kind}(b={f.b:g}, r={f.radius:g})",
        lhs=lhs_fine,
        rhs=rhs,
        rel_gap=abs(lhs_fine - rhs) / abs(rhs),
        quad_error=abs(lhs_fine - lhs),
    )


# ---------------------------------------------------------------------------
# Theorem-style polynomial identity
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PolEqReport:
    p: str
    P: str
    n: int
    chi: float
    lhs: float
    rhs: float
    gap: float
    quadrature_error: float

    def to_json(self) -> str:
        return json.dumps(asdict(self))


def gaussian_side(p, P, n: int, variance: float, f0: float) -> float:
    """<p(phi) (-4 pi f0 P(phi))^n> for phi ~ N(0, variance)."""
    c = _coeffs(p)
    base = -4.0 * math.pi * f0 * _coeffs(P)
    for _ in range(n):
        c = npoly.polymul(c, base)
    return float(sum(cj * isserlis_moment(j, variance) for j, cj in enumerate(c)))


@lru_cache(maxsize=256)
def _patterns(exps: tuple[int, ...]):
    labels = [v for v, e in enumerate(exps) for _ in range(e)]
    return tuple(pairing_patterns(labels).items())


class _VertexGeometry:
    """Distances between vertex 0 (the origin) and vertices 1..n on a batch of nodes."""

    def __init__(self, n: int, dist: dict[tuple[int, int], np.ndarray], s: list[np.ndarray]):
        self.n = n
        self.k = 2 * n
        self.dist = dist
        self.s = s  # |x_v|^2 for v = 1..n

    def theta(self, v: int) -> GrassmannElement:
        return GrassmannElement(self.k) if v == 0 else GrassmannElement.generator(self.k, 2 * (v - 1))

    def thetabar(self, v: int) -> GrassmannElement:
        return GrassmannElement(self.k) if v == 0 else GrassmannElement.generator(self.k, 2 * (v - 1) + 1)


def _integrand(p_c, P_c, n: int, geo: _VertexGeometry, cov: SuperCovariance, f: CutOff) -> np.ndarray:
    """(-1)^n top coefficient of <prod insertions> prod_v F_v, summed over monomials."""
    k = geo.k
    pair_cache: dict[tuple[int, int], GrassmannElement] = {}

    def pair(u, v):
        if u == v:
            return GrassmannElement.scalar(k, cov.g_hi0)
        if (u, v) not in pair_cache:
            pair_cache[(u, v)] = cov.element(
                geo.dist[(u, v)], geo.theta(u) - geo.theta(v), geo.thetabar(u) - geo.thetabar(v)
            )
        return pair_cache[(u, v)]

    weight = GrassmannElement.scalar(k, 1.0)
    for v in range(1, n + 1):
        s = geo.s[v - 1]
        Fv = GrassmannElement.scalar(k, -f.ftilde(s)) - geo.theta(v) * geo.thetabar(v) * (4.0 * f.ftilde_prime(s))
        weight = weight * Fv

    total = 0.0
    exps_lists = [[j for j, c in enumerate(p_c) if c != 0]] + [[j for j, c in enumerate(P_c) if c != 0]] * n
    for exps in product(*exps_lists):
        if sum(exps) % 2:
            continue
        if sum(exps) > MAX_INSERTIONS:
            raise PairingGuardError(f"{sum(exps)} insertions exceed the guard of {MAX_INSERTIONS}")
        coef = p_c[exps[0]] * math.prod(P_c[e] for e in exps[1:])
        wick = GrassmannElement(k)
        for pattern, count in _patterns(tuple(exps)):
            term = GrassmannElement.scalar(k, float(count))
            for u, v in pattern:
                term = term * pair(u, v)
            wick = wick + term
        total = total + coef * (wick * weight).top
    return (-1.0) ** n * np.asarray(total)


def _lhs(p_c, P_c, n: int, cov: SuperCovariance, f: CutOff, q: DiskQuadrature) -> float:
    if n == 0:
        geo = _VertexGeometry(0, {}, [])
        return float(_integrand(p_c, P_c, 0, geo, cov, f))
    r, wr = q.radial
    if n == 1:
        geo = _VertexGeometry(1, {(0, 1): r}, [r * r])
        return float(np.sum(wr * 2.0 * np.pi * r * _integrand(p_c, P_c, 1, geo, cov, f)))
    if n == 2:
        t, wt = q.angular
        R2, T = np.meshgrid(r, t, indexing="ij")
        W2 = (wr * r)[:, None] * wt[None, :]
        total = 0.0
        for r1, w1 in zip(r, wr):
            d12 = np.sqrt(np.maximum(r1 * r1 + R2 * R2 - 2.0 * r1 * R2 * np.cos(T), 0.0))
            geo = _VertexGeometry(
                2,
                {(0, 1): np.full_like(R2, r1), (0, 2): R2, (1, 2): d12},
                [np.full_like(R2, r1 * r1), R2 * R2],
            )
            vals = _integrand(p_c, P_c, 2, geo, cov, f)
            # the overall rotation of the pair contributes 2 pi
            total += 2.0 * np.pi * w1 * r1 * float(np.sum(W2 * vals))
        return float(total)
    raise ValueError("orders n > 2 are not supported")


def verify_pol_eq(
    p,
    P,
    n: int,
    chi: float = 0.5,
    f: CutOff | None = None,
    quadrature: DiskQuadrature | None = None,
    m2: float = 1.0,
    tolerance: float | None = None,
) -> PolEqReport:
    """Both sides of the polynomial identity at order n in {0, 1, 2}.

    ``p`` and ``P`` are ascending coefficient sequences. The quadrature is
    repeated once with doubled panels and angles; the difference is the
    reported error estimate, and exceeding ``tolerance`` raises.
    """
    if n < 0 or n > 2:
        raise ValueError("n must be 0, 1 or 2")
    p_c, P_c = _coeffs(p), _coeffs(P)
    if (len(p_c) - 1) + n * (len(P_c) - 1) > MAX_INSERTIONS:
        raise PairingGuardError("deg p + n deg P exceeds the insertion guard")
    f = f or make_cutoff("exp-sqrt", 1.0, m2)
    cov = SuperCovariance(chi=chi, m2=m2)
    q = quadrature or DiskQuadrature.for_cutoff(f, n_panels=32 if n == 2 else 48, n_angle=32)
    lhs = _lhs(p_c, P_c, n, cov, f, q)
    if n == 0:
        err = 0.0
    else:
        lhs_fine = _lhs(p_c, P_c, n, cov, f, q.refined())
        err = abs(lhs_fine - lhs)
        lhs = lhs_fine
    rhs = gaussian_side(p_c, P_c, n, cov.g_hi0, f.f0)
    gap = abs(lhs - rhs) / max(abs(rhs), 1e-300)
    if tolerance is not None and err > tolerance * max(abs(rhs), 1e-300):
        raise QuadratureConvergenceError(f"quadrature error {err:.3g} above tolerance", err)
    return PolEqReport(poly_label(p_c), poly_label(P_c), n, chi, float(lhs), float(rhs), float(gap), float(err))


ACCEPTANCE_MATRIX = (
    ((1.0,), (0.0, 0.0, 1.0), 1),
    ((0.0, 0.0, 1.0), (0.0, 0.0, 1.0), 1),
    ((1.0,), (0.0, 0.0, 0.0, 0.0, 1.0), 1),
    ((1.0,), (0.0, 0.0, 1.0), 2),
)
