"""Potential families with derivatives and sampled hypothesis probes.

Arrays follow one layout throughout: a point batch ``y`` has shape (n, ...),
``V(y)`` returns shape (...), ``grad(y)`` shape (n, ...), ``hess(y)`` shape
(n, n, ...).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Any, Callable

import numpy as np

log = logging.getLogger(__name__)

Array = np.ndarray
TAGS = ("C", "QC", "V_lambda", "bounded")
FAMILIES = ("zero", "quadratic", "quartic", "quartic_plus_bounded", "trig_polynomial")


@dataclass(frozen=True)
class ProbeSpec:
    """Sample layout for hypothesis probes; recorded verbatim in every report."""

    n_points: int = 1000
    radius: float = 10.0
    n_directions: int = 16
    n_radii: int = 41
    seed: int = 0

    def base_points(self, n: int) -> Array:
        rng = np.random.default_rng(self.seed)
        if n == 1:
            pts = np.linspace(-self.radius, self.radius, self.n_points)[None]
        else:
            pts = rng.uniform(-self.radius, self.radius, size=(n, self.n_points))
        return pts

    def directions(self, n: int) -> Array:
        if n == 1:
            return np.array([[1.0, -1.0]])
        rng = np.random.default_rng(self.seed + 1)
        d = rng.standard_normal((n, self.n_directions))
        return d / np.linalg.norm(d, axis=0, keepdims=True)


@dataclass
class HypothesisReport:
    which: str
    passed: bool
    probe: ProbeSpec
    counterexample: dict | None = None
    fitted_H: tuple[float, float] | None = None
    message: str = ""


@dataclass
class Potential:
    """A smooth potential V: R^n -> R with derivatives and hypothesis tags."""

    n: int
    V: Callable[[Array], Array]
    grad: Callable[[Array], Array]
    hess: Callable[[Array], Array]
    m2: float = 1.0
    name: str = "custom"
    params: dict[str, Any] = field(default_factory=dict)
    class_tags: frozenset = frozenset()
    growth: tuple[float, float] | None = None
    vlambda_parts: tuple[float, Callable[[Array], Array]] | None = None
    qc_bound: Callable[[Array], Array] | None = None
    warnings: list[str] = field(default_factory=list)

    def __call__(self, y) -> Array:
        return self.V(np.asarray(y, dtype=float))

    def is_zero(self) -> bool:
        return self.name == "zero"

    def to_config(self) -> dict:
        return {"family": self.name, "params": dict(self.params)}

    def scaled(self, c: float) -> "Potential":
        """c V with matching derivatives; tags are kept, so c must be positive."""
        if c <= 0:
            raise ValueError("scale must be positive")
        if c == 1.0:
            return self
        V, grad, hess = self.V, self.grad, self.hess
        return replace(
            self,
            V=lambda y: c * V(y),
            grad=lambda y: c * grad(y),
            hess=lambda y: c * hess(y),
            qc_bound=None if self.qc_bound is None else (lambda y, h=self.qc_bound: c * h(y)),
            vlambda_parts=None,
            warnings=list(self.warnings),
        )


# ---------------------------------------------------------------------------
# builtin families
# ---------------------------------------------------------------------------


def _eye_like(n: int, shape) -> Array:
    return np.eye(n).reshape((n, n) + (1,) * len(shape))


def _diag_hess(d2: Array) -> Array:
    n = d2.shape[0]
    out = np.zeros((n, n) + d2.shape[1:])
    idx = np.arange(n)
    out[idx, idx] = d2
    return out


def _separable(v1, d1, d2):
    """Potential sum_i v1(y_i) from a scalar profile and its derivatives."""
    return (
        lambda y: np.sum(v1(y), axis=0),
        lambda y: d1(y),
        lambda y: _diag_hess(d2(y)),
    )


def _family(name: str, n: int, params: dict):
    """(V, grad, hess, intended tags, vlambda parts, H) for a builtin family."""
    p = dict(params)
    if name == "zero":
        V, g, h = _separable(np.zeros_like, np.zeros_like, np.zeros_like)
        return V, g, h, {"C", "QC", "V_lambda", "bounded"}, (0.0, lambda y: np.zeros(y.shape[1:])), None
    if name == "quadratic":
        c = float(p.get("c", 1.0))
        V, g, h = _separable(lambda y: 0.5 * c * y**2, lambda y: c * y, lambda y: c * np.ones_like(y))
        H = lambda y: np.abs(c) * np.sqrt(np.sum(y**2, axis=0)) + 1.0  # noqa: E731
        tags = {"C", "QC"}
        return V, g, h, tags, None, H
    if name == "quartic":
        lam = float(p.get("lam", p.get("lambda", 0.1)))
        V, g, h = _separable(lambda y: lam * y**4, lambda y: 4 * lam * y**3, lambda y: 12 * lam * y**2)
        H = lambda y: np.sqrt(np.sum((4 * lam * y**3) ** 2, axis=0)) + 1.0  # noqa: E731
        return V, g, h, {"C", "QC", "V_lambda"}, (lam, lambda y: np.zeros(y.shape[1:])), H
    if name == "quartic_plus_bounded":
        lam = float(p.get("lam", p.get("lambda", 0.1)))
        amp = float(p.get("amplitude", 0.1))
        V, g, h = _separable(
            lambda y: lam * y**4 + amp * (1 - np.cos(y)),
            lambda y: 4 * lam * y**3 + amp * np.sin(y),
            lambda y: 12 * lam * y**2 + amp * np.cos(y),
        )
        vb = lambda y: np.sum(amp * (1 - np.cos(y)), axis=0)  # noqa: E731
        return V, g, h, {"C", "QC", "V_lambda"}, (lam, vb), None
    if name == "trig_polynomial":
        a = np.atleast_1d(np.asarray(p.get("cos", [1.0]), dtype=float))
        b = np.atleast_1d(np.asarray(p.get("sin", []), dtype=float))
        ka = np.arange(1, len(a) + 1)
        kb = np.arange(1, len(b) + 1)
        offset = float(np.sum(np.abs(a)) + np.sum(np.abs(b)))

        def prof(y, deriv):
            y = np.asarray(y, dtype=float)
            out = np.zeros_like(y) + (offset if deriv == 0 else 0.0)
            for k, c in zip(ka, a):
                out += c * k**deriv * [np.cos, lambda t: -np.sin(t), lambda t: -np.cos(t)][deriv](k * y)
            for k, c in zip(kb, b):
                out += c * k**deriv * [np.sin, np.cos, lambda t: -np.sin(t)][deriv](k * y)
            return out

        V, g, h = _separable(lambda y: prof(y, 0), lambda y: prof(y, 1), lambda y: prof(y, 2))
        bound = float(np.sum(np.abs(a) * ka) + np.sum(np.abs(b) * kb))
        H = lambda y: np.full(np.shape(y)[1:], bound)  # noqa: E731
        return V, g, h, {"C", "QC", "V_lambda", "bounded"}, (0.0, lambda y: V(y)), H
    raise ValueError(f"unknown potential family {name!r}; known: {FAMILIES}")


def builtin_potential(
    name: str,
    params: dict | None = None,
    n: int = 1,
    m2: float = 1.0,
    probe: ProbeSpec | None = None,
) -> Potential:
    """Build a family member and keep only the tags its probes confirm.

    Intended tags that fail their probe are dropped and recorded in
    ``Potential.warnings`` (and logged).
    """
    params = dict(params or {})
    V, g, h, intended, vparts, H = _family(name, n, params)
    pot = Potential(
        n=n, V=V, grad=g, hess=h, m2=m2, name=name, params=params,
        vlambda_parts=vparts, qc_bound=H,
    )
    probe = probe or ProbeSpec(n_points=400 if n == 1 else 300)
    tags = set()
    for tag in TAGS:
        report = check_hypothesis(pot, tag, probe)
        if report.passed:
            if tag in intended or tag in ("C", "QC"):
                tags.add(tag)
        elif tag in intended:
            msg = f"{name}{params}: tag {tag} dropped ({report.message})"
            pot.warnings.append(msg)
            log.warning(msg)
    if "C" in tags:
        tags.add("QC")
    pot.class_tags = frozenset(tags)
    pot.growth = fit_growth(pot, probe)
    return pot


# ---------------------------------------------------------------------------
# probes
# ---------------------------------------------------------------------------


def fit_growth(p: Potential, probe: ProbeSpec) -> tuple[float, float]:
    """Constants (alpha, beta) with max(|V|, |dV|, |d2V|) <= exp(alpha |y| + beta) on the probe."""
    y = probe.base_points(p.n)
    env = np.maximum.reduce(
        [
            np.abs(p.V(y)),
            np.max(np.abs(p.grad(y)), axis=0),
            np.max(np.abs(p.hess(y)).reshape(p.n * p.n, -1), axis=0),
        ]
    )
    r = np.linalg.norm(y, axis=0)
    logs = np.log(env + 1e-300)
    mask = env > 0
    if not np.any(mask):
        return (0.0, 0.0)
    slope = 0.0
    if np.ptp(r[mask]) > 0:
        slope = max(float(np.polyfit(r[mask], logs[mask], 1)[0]), 0.0)
    beta = float(np.max(logs[mask] - slope * r[mask]))
    return (slope, beta)


def _counter(y: Array, idx: int, **extra) -> dict:
    return {"y": y[:, idx].tolist(), **{k: float(v) for k, v in extra.items()}}


def _positivity(p: Potential, y: Array) -> HypothesisReport | None:
    v = p.V(y)
    if np.any(v < -1e-12):
        i = int(np.argmin(v))
        return _counter(y, i, V=v[i])
    return None


def qc_observed(p: Potential, probe: ProbeSpec) -> tuple[Array, Array, Array]:
    """max over directions and radii of -<n, dV(y + r n)> for each base point y."""
    y = probe.base_points(p.n)
    dirs = probe.directions(p.n)
    radii = np.linspace(0.0, probe.radius, probe.n_radii)
    worst = np.full(y.shape[1], -np.inf)
    arg = np.zeros((2, y.shape[1]))
    for j in range(dirs.shape[1]):
        nh = dirs[:, j]
        for r in radii:
            pts = y + r * nh[:, None]
            val = -np.einsum("i,i...->...", nh, p.grad(pts))
            better = val > worst
            worst = np.where(better, val, worst)
            arg[0] = np.where(better, j, arg[0])
            arg[1] = np.where(better, r, arg[1])
    return y, worst, arg


def fit_qc_bound(y: Array, observed: Array) -> tuple[float, float]:
    """Envelope c1 exp(c2 |y|) over the observed values (log least squares, then lifted)."""
    r = np.linalg.norm(y, axis=0)
    target = np.maximum(observed, 0.0) + 1.0
    logs = np.log(target)
    c2 = 0.0
    if np.ptp(r) > 0:
        c2 = max(float(np.polyfit(r, logs, 1)[0]), 0.0)
    c1 = float(np.max(target * np.exp(-c2 * r)))
    return c1, c2


def check_hypothesis(p: Potential, which: str, probe: ProbeSpec | None = None) -> HypothesisReport:
    """Sampled probe of Hypothesis C, QC, V_lambda or boundedness.

    Failures are report content, never exceptions. Every hypothesis also
    requires V >= 0 on the probe set.
    """
    probe = probe or ProbeSpec()
    y = probe.base_points(p.n)
    neg = _positivity(p, y)
    if neg is not None:
        return HypothesisReport(which, False, probe, neg, message="positivity fails")

    if which == "C":
        hess = p.hess(y)  # (n, n, P)
        mats = np.moveaxis(hess, -1, 0) + 2.0 * p.m2 * np.eye(p.n)
        eig = np.linalg.eigvalsh(mats)[:, 0]
        if np.any(eig <= 0):
            i = int(np.argmin(eig))
            return HypothesisReport(
                which, False, probe, _counter(y, i, min_eig=eig[i]),
                message="V + m^2|y|^2 not strictly convex",
            )
        return HypothesisReport(which, True, probe, message=f"min eigenvalue {eig.min():.4g}")

    if which == "QC":
        ys, observed, arg = qc_observed(p, probe)
        if p.qc_bound is not None:
            H = p.qc_bound(ys)
            bad = observed > H * (1 + 1e-9) + 1e-12
            if np.any(bad):
                i = int(np.argmax(observed - H))
                return HypothesisReport(
                    which, False, probe,
                    _counter(ys, i, observed=observed[i], H=H[i], direction=arg[0, i], r=arg[1, i]),
                    message="supplied H exceeded",
                )
            return HypothesisReport(which, True, probe, message="supplied H holds")
        c1, c2 = fit_qc_bound(ys, observed)
        ok = math.isfinite(c1) and math.isfinite(c2)
        return HypothesisReport(which, ok, probe, fitted_H=(c1, c2), message="fitted exponential H")

    if which in ("V_lambda", "bounded"):
        if which == "V_lambda":
            if p.vlambda_parts is None:
                return HypothesisReport(which, False, probe, message="no (lambda, V_B) split")
            lam = p.vlambda_parts[0]
            if lam < 0:
                return HypothesisReport(which, False, probe, message="lambda < 0")
        else:
            lam = 0.0

        def remainder_sup(radius):
            pr = ProbeSpec(probe.n_points, radius, probe.n_directions, probe.n_radii, probe.seed)
            yy = pr.base_points(p.n)
            vb = p.V(yy) - lam * np.sum(yy**4, axis=0)
            gb = p.grad(yy) - 4 * lam * yy**3
            hb = p.hess(yy) - _diag_hess(12 * lam * yy**2)
            return np.array([np.max(np.abs(vb)), np.max(np.abs(gb)), np.max(np.abs(hb))]), yy, vb

        s1, _, _ = remainder_sup(probe.radius)
        s2, yy, vb = remainder_sup(2 * probe.radius)
        grows = s2 > 1.5 * s1 + 1e-9
        if np.any(grows):
            i = int(np.argmax(np.abs(vb)))
            return HypothesisReport(
                which, False, probe, _counter(yy, i, remainder=vb[i]),
                message="remainder grows with the probe radius",
            )
        return HypothesisReport(which, True, probe, message=f"sup remainder {s2.tolist()}")

    raise ValueError(f"unknown hypothesis {which!r}")
