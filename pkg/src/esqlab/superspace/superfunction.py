"""Superfunctions F(x, theta, thetabar) = f_0 + f_t theta + f_tb thetabar + f_ttb theta thetabar.

Components are callables on points x of shape (..., 2). The generators Q and
Qbar act componentwise:

    Q    = 2 theta grad + x d/dthetabar,     Qbar = 2 thetabar grad - x d/dtheta,

with left derivatives, so that

    Q F    = 2 theta grad f_0 + x f_tb + 2 grad f_tb theta thetabar - x f_ttb theta
    Qbar F = 2 thetabar grad f_0 - x f_t - 2 grad f_t theta thetabar - x f_ttb thetabar

and the Berezin functional is int F dx dtheta dthetabar = -int f_ttb(x) dx.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..quadrature import DiskQuadrature
from .grassmann import GrassmannElement

Component = Callable[[np.ndarray], np.ndarray]
COMPONENTS = ("f0", "ft", "ftb", "fttb")
THETA, THETABAR = 0, 1
_MASK = {"f0": 0b00, "ft": 0b01, "ftb": 0b10, "fttb": 0b11}


def _zero(x: np.ndarray) -> np.ndarray:
    return np.zeros(np.shape(x)[:-1])


def _fd_gradient(g: Component, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    h = 1e-5 * (1.0 + np.linalg.norm(x, axis=-1, keepdims=True))
    out = []
    for i in range(2):
        e = np.zeros(2)
        e[i] = 1.0
        out.append((g(x + h * e) - g(x - h * e)) / (2.0 * h[..., 0]))
    return np.stack(out, axis=-1)


@dataclass(frozen=True)
class SuperFunction:
    f0: Component = _zero
    ft: Component = _zero
    ftb: Component = _zero
    fttb: Component = _zero
    # optional analytic gradients, keyed by component name
    grads: dict[str, Callable[[np.ndarray], np.ndarray]] = field(default_factory=dict, compare=False)
    name: str = ""

    def component(self, which: str) -> Component:
        return getattr(self, which)

    def gradient(self, which: str, x: np.ndarray) -> np.ndarray:
        if which in self.grads:
            return self.grads[which](np.asarray(x, dtype=float))
        return _fd_gradient(self.component(which), x)

    def at(self, x) -> GrassmannElement:
        """Grassmann element over (theta, thetabar) with coefficient arrays at x."""
        x = np.asarray(x, dtype=float)
        return GrassmannElement(2, {_MASK[c]: np.asarray(self.component(c)(x), dtype=float) for c in COMPONENTS})

    def __mul__(self, other: "SuperFunction") -> "SuperFunction":
        def comp(c):
            return lambda x: (self.at(x) * other.at(x)).coefficient(_MASK[c]) + _zero(x)

        return SuperFunction(*(comp(c) for c in COMPONENTS), name=f"({self.name})*({other.name})")

    # constructors ----------------------------------------------------------

    @classmethod
    def from_radial(
        cls, ft: Callable, ftp: Callable, ftpp: Callable | None = None, name: str = "f(|x|^2+4 theta thetabar)"
    ) -> "SuperFunction":
        """F = ft(|x|^2 + 4 theta thetabar) = ft(|x|^2) + 4 ft'(|x|^2) theta thetabar."""

        def s(x):
            return np.sum(np.asarray(x) ** 2, axis=-1)

        grads = {"f0": lambda x: 2.0 * x * ftp(s(x))[..., None]}
        if ftpp is not None:
            grads["fttb"] = lambda x: 8.0 * x * ftpp(s(x))[..., None]
        return cls(f0=lambda x: ft(s(x)), fttb=lambda x: 4.0 * ftp(s(x)), grads=grads, name=name)

    @classmethod
    def quadratic_form(cls) -> "SuperFunction":
        """|x|^2 + 4 theta thetabar."""
        return cls.from_radial(lambda s: s, lambda s: np.ones_like(s), lambda s: np.zeros_like(s), "|x|^2+4tt")


@dataclass(frozen=True)
class VectorSuperFunction:
    """Superfunction whose components are R^2-valued (shape (..., 2))."""

    f0: Component
    ft: Component
    ftb: Component
    fttb: Component

    def component(self, which: str) -> Component:
        return getattr(self, which)


def apply_Q(F: SuperFunction, conjugated: bool = False) -> VectorSuperFunction:
    """Q F (or Qbar F when ``conjugated``) in component form."""

    def vzero(x):
        return np.zeros(np.shape(x))

    if not conjugated:
        return VectorSuperFunction(
            f0=lambda x: x * F.ftb(x)[..., None],
            ft=lambda x: 2.0 * F.gradient("f0", x) - x * F.fttb(x)[..., None],
            ftb=vzero,
            fttb=lambda x: 2.0 * F.gradient("ftb", x),
        )
    return VectorSuperFunction(
        f0=lambda x: -x * F.ft(x)[..., None],
        ft=vzero,
        ftb=lambda x: 2.0 * F.gradient("f0", x) - x * F.fttb(x)[..., None],
        fttb=lambda x: -2.0 * F.gradient("ft", x),
    )


def berezin_integral(
    F: SuperFunction, weight: Callable | str | None = None, quadrature: DiskQuadrature | None = None
) -> float:
    """-int f_ttb(x) w(x) dx; ``weight="delta"`` gives -f_ttb(0)."""
    if weight == "delta":
        return float(-F.fttb(np.zeros((1, 2)))[0])
    q = quadrature or DiskQuadrature()
    pts, w = q.planar
    vals = F.fttb(pts)
    if weight is not None:
        vals = vals * weight(pts)
    return float(-np.sum(w * vals))


# ---------------------------------------------------------------------------
# supersymmetry probe
# ---------------------------------------------------------------------------


@dataclass
class SusyReport:
    passed: bool
    q_residual: float
    qbar_residual: float
    rotation_residual: float
    scale: float
    tolerance: float
    first_failure: str | None = None


def default_probe(n_radii: int = 12, n_angles: int = 7, r_max: float = 4.0) -> np.ndarray:
    r = np.linspace(r_max / n_radii, r_max, n_radii)
    t = np.linspace(0.1, 2 * np.pi + 0.1, n_angles, endpoint=False)
    R, T = np.meshgrid(r, t, indexing="ij")
    return np.stack([R * np.cos(T), R * np.sin(T)], axis=-1).reshape(-1, 2)


def _rotate(x: np.ndarray, angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return x @ np.array([[c, s], [-s, c]])


def susy_check(F: SuperFunction, tolerance: float = 1e-6, probe: np.ndarray | None = None) -> SusyReport:
    """Relative size of QF, QbarF and of the rotation defect on a probe set.

    Residuals are normalised by the largest term entering the Q, Qbar
    formulas so that the tolerance is relative.
    """
    x = default_probe() if probe is None else np.asarray(probe, dtype=float)
    rn = np.linalg.norm(x, axis=-1)
    scale = max(
        float(np.max(np.abs(2.0 * F.gradient("f0", x)))),
        float(np.max(rn * np.abs(F.fttb(x)))),
        float(np.max(rn * np.abs(F.ft(x)))),
        float(np.max(rn * np.abs(F.ftb(x)))),
        float(np.max(np.abs(F.f0(x)))),
        1e-300,
    )
    first = None
    res = {}
    for label, conj in (("Q", False), ("Qbar", True)):
        G = apply_Q(F, conj)
        worst = 0.0
        for c in COMPONENTS:
            v = float(np.max(np.abs(G.component(c)(x)))) / scale
            if v > tolerance and first is None:
                first = f"{label} {c}"
            worst = max(worst, v)
        res[label] = worst
    rot = 0.0
    for angle in (np.pi / 7, 2 * np.pi / 5, np.pi):
        xr = _rotate(x, angle)
        for c in COMPONENTS:
            comp = F.component(c)
            v = float(np.max(np.abs(comp(xr) - comp(x)))) / scale
            if v > tolerance and first is None:
                first = f"rotation {c}"
            rot = max(rot, v)
    passed = max(res["Q"], res["Qbar"], rot) <= tolerance
    return SusyReport(passed, res["Q"], res["Qbar"], rot, scale, tolerance, first)


# ---------------------------------------------------------------------------
# the flow tau(b, bbar) on G(theta, thetabar, rho)
# ---------------------------------------------------------------------------

RHO = 2


@dataclass
class SuperPoint:
    """(x1, x2, theta, thetabar) as elements of G(theta, thetabar, rho)."""

    x1: GrassmannElement
    x2: GrassmannElement
    theta: GrassmannElement
    thetabar: GrassmannElement

    @classmethod
    def plain(cls, x) -> "SuperPoint":
        x = np.asarray(x, dtype=float)
        k = 3
        return cls(
            GrassmannElement.scalar(k, x[..., 0]),
            GrassmannElement.scalar(k, x[..., 1]),
            GrassmannElement.generator(k, THETA),
            GrassmannElement.generator(k, THETABAR),
        )

    def allclose(self, other: "SuperPoint", atol: float = 1e-12) -> bool:
        return all(
            getattr(self, a).allclose(getattr(other, a), atol) for a in ("x1", "x2", "theta", "thetabar")
        )


def tau(z: SuperPoint, b, bbar) -> SuperPoint:
    """x -> x + 2 rho (bbar theta + b thetabar),
    theta -> theta - (x.b) rho, thetabar -> thetabar + (x.bbar) rho.

    With rho to the left in the x shift the map preserves |x|^2 + 4 theta thetabar.
    """
    k = z.x1.k
    rho = GrassmannElement.generator(k, RHO)
    b = np.asarray(b, dtype=float)
    bbar = np.asarray(bbar, dtype=float)
    shift = rho * z.theta * 2.0
    shiftb = rho * z.thetabar * 2.0
    xb = z.x1 * b[0] + z.x2 * b[1]
    xbb = z.x1 * bbar[0] + z.x2 * bbar[1]
    return SuperPoint(
        z.x1 + shift * bbar[0] + shiftb * b[0],
        z.x2 + shift * bbar[1] + shiftb * b[1],
        z.theta - xb * rho,
        z.thetabar + xbb * rho,
    )


def evaluate_at(F: SuperFunction, z: SuperPoint) -> GrassmannElement:
    """F at a Grassmann-valued point via first-order Taylor expansion of the components.

    Exact whenever the nilpotent parts n of x satisfy n_i n_j = 0, which is
    the case for points produced by ``tau`` (every soul carries rho).
    """
    x0 = np.stack([np.asarray(z.x1.body, dtype=float), np.asarray(z.x2.body, dtype=float)], axis=-1)
    n1, n2 = z.x1.soul(), z.x2.soul()
    for u in (n1, n2):
        for v in (n1, n2):
            if (u * v).coeffs:
                raise NotImplementedError("second-order Taylor terms are not supported")
    out = GrassmannElement(z.x1.k)
    basis = {
        "f0": GrassmannElement.scalar(z.x1.k, 1.0),
        "ft": z.theta,
        "ftb": z.thetabar,
        "fttb": z.theta * z.thetabar,
    }
    for c in COMPONENTS:
        val = F.component(c)(x0)
        g = F.gradient(c, x0)
        coeff = GrassmannElement.scalar(z.x1.k, val) + n1 * g[..., 0] + n2 * g[..., 1]
        out = out + coeff * basis[c]
    return out


def tau_invariance_residual(F: SuperFunction, b, bbar, x) -> float:
    """max |F(tau(b, bbar) z) - F(z)| over Grassmann coefficients at the plain point z = (x, theta, thetabar)."""
    z = SuperPoint.plain(x)
    diff = evaluate_at(F, tau(z, b, bbar)) - evaluate_at(F, z)
    return max((float(np.max(np.abs(c))) for c in diff.coeffs.values()), default=0.0)
