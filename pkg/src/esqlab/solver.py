"""Strong solutions of (m^2 - Delta) phibar + f dV(phibar + I xi) = 0 on the lattice.

phibar = phi - I xi is found either by the damped fixed-point iteration of

    K(phibar) = -I(f dV(phibar + I xi)),

or by Newton steps whose linear systems (m^2 - Delta + f d2V(phi)) delta = -R
are solved by conjugate gradients preconditioned with the spectral inverse
(m^2 - Delta)^(-1).
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from scipy.sparse.linalg import LinearOperator, cg, gmres

from .fields import Field, GridSpec, NoiseDraw, apply_symbol, rng_from_seed
from .kernels import CutOff
from .potentials import Potential

log = logging.getLogger(__name__)


class SolverError(RuntimeError):
    pass


class NonConvergenceError(SolverError):
    def __init__(self, message: str, report: "SolveReport"):
        super().__init__(message)
        self.report = report


class SolverOverflowError(SolverError):
    pass


@dataclass(frozen=True)
class SolveConfig:
    method: Literal["fixed_point", "newton"] = "newton"
    damping: float = 0.5
    max_iterations: int = 500
    residual_tolerance: float = 1e-9
    multistart_count: int = 1
    initial_scale: float = 1.0
    apriori_slack: float = 0.1
    linear_rtol: float = 1e-10
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.damping <= 1:
            raise ValueError("damping must lie in (0, 1]")
        if self.residual_tolerance <= 0:
            raise ValueError("residual_tolerance must be positive")
        if self.multistart_count < 1:
            raise ValueError("multistart_count must be >= 1")
        if self.method not in ("fixed_point", "newton"):
            raise ValueError(f"unknown method {self.method!r}")


@dataclass
class SolveReport:
    solution: Field
    residual_norm: float
    iterations: int
    converged: bool
    apriori_bound: float
    apriori_satisfied: bool
    method: str = "newton"
    distinct_solutions: list[Field] = field(default_factory=list)
    cluster_sizes: list[int] = field(default_factory=list)
    n_failed_starts: int = 0

    def summary(self) -> dict:
        return {
            "residual_norm": self.residual_norm,
            "iterations": self.iterations,
            "converged": self.converged,
            "apriori_bound": self.apriori_bound,
            "apriori_satisfied": self.apriori_satisfied,
            "method": self.method,
            "phibar_sup": self.solution.sup_norm(),
            "n_distinct_solutions": len(self.distinct_solutions),
            "cluster_sizes": list(self.cluster_sizes),
            "n_failed_starts": self.n_failed_starts,
        }

    def to_json(self) -> str:
        return json.dumps(self.summary(), indent=2)


class _Problem:
    """Cached lattice data for one (noise, potential, cut-off) triple."""

    def __init__(self, noise: NoiseDraw, p: Potential, f: CutOff):
        self.grid: GridSpec = noise.grid
        if p.n != self.grid.n:
            raise ValueError(f"potential has n={p.n} but grid has n={self.grid.n}")
        self.p = p
        self.f = f
        self.fw = f.ftilde(self.grid.radius_sq)  # (N, N)
        self.inv = self.grid.symbol(1.0)
        self.fwd = self.grid.symbol(-1.0)
        self.Ixi = apply_symbol(noise.field.values, self.grid, self.inv)

    def force(self, phibar: np.ndarray) -> np.ndarray:
        out = self.fw[None] * self.p.grad(phibar + self.Ixi)
        if not np.all(np.isfinite(out)):
            bad = np.argwhere(~np.isfinite(out))[0]
            raise SolverOverflowError(
                f"non-finite f dV at component {bad[0]}, cell ({bad[1]}, {bad[2]})"
            )
        return out

    def residual(self, phibar: np.ndarray) -> np.ndarray:
        return apply_symbol(phibar, self.grid, self.fwd) + self.force(phibar)

    def norm(self, r: np.ndarray) -> float:
        return float(np.sqrt(self.grid.a**2 * np.sum(r * r)))

    def K(self, phibar: np.ndarray) -> np.ndarray:
        return -apply_symbol(self.force(phibar), self.grid, self.inv)

    def jacobian(self, phibar: np.ndarray) -> LinearOperator:
        shape = self.grid.shape
        size = int(np.prod(shape))
        mult = self.fw[None, None] * self.p.hess(phibar + self.Ixi)  # (n, n, N, N)
        grid, fwd = self.grid, self.fwd

        def mv(v):
            v = v.reshape(shape)
            return (apply_symbol(v, grid, fwd) + np.einsum("ij...,j...->i...", mult, v)).ravel()

        return LinearOperator((size, size), matvec=mv, rmatvec=mv, dtype=float)

    def preconditioner(self) -> LinearOperator:
        shape = self.grid.shape
        size = int(np.prod(shape))
        grid, inv = self.grid, self.inv
        return LinearOperator(
            (size, size), matvec=lambda v: apply_symbol(v.reshape(shape), grid, inv).ravel(), dtype=float
        )

    def apriori_bound(self) -> float:
        if self.p.qc_bound is None:
            return float("inf")
        return float(np.max(self.fw * self.p.qc_bound(self.Ixi)) / self.grid.m2)


def fixed_point_map(phibar: Field, noise: NoiseDraw, p: Potential, f: CutOff) -> Field:
    """K(phibar) = -I(f dV(phibar + I xi))."""
    prob = _Problem(noise, p, f)
    return Field(phibar.grid, prob.K(phibar.values))


def residual_norm(phibar: Field, noise: NoiseDraw, p: Potential, f: CutOff) -> float:
    """Lattice L2 norm of (m^2 - Delta) phibar + f dV(phibar + I xi), evaluated from scratch."""
    prob = _Problem(noise, p, f)
    return prob.norm(prob.residual(phibar.values))


def _iterate_fixed_point(prob: _Problem, x: np.ndarray, cfg: SolveConfig):
    # K(x) - x = -I(residual) is a preconditioned descent direction for the
    # energy, not for the residual, so steps are always taken; rho is halved
    # whenever the residual grows and slowly recovers afterwards. The floor
    # keeps escapes from saddle points (where the residual rises) finite.
    rho = cfg.damping
    rho_min = cfg.damping / 16
    res = prob.norm(prob.residual(x))
    it = 0
    while res > cfg.residual_tolerance and it < cfg.max_iterations:
        it += 1
        x_new = (1.0 - rho) * x + rho * prob.K(x)
        res_new = prob.norm(prob.residual(x_new))
        if res_new > res:
            rho = max(0.5 * rho, rho_min)
        else:
            rho = min(1.25 * rho, cfg.damping)
        x, res = x_new, res_new
    return x, res, it


def _iterate_newton(prob: _Problem, x: np.ndarray, cfg: SolveConfig):
    r = prob.residual(x)
    res = prob.norm(r)
    it = 0
    M = prob.preconditioner()
    while res > cfg.residual_tolerance and it < cfg.max_iterations:
        it += 1
        J = prob.jacobian(x)
        delta, info = cg(J, -r.ravel(), rtol=cfg.linear_rtol, atol=0.0, M=M, maxiter=500)
        if info != 0:
            delta, info = gmres(J, -r.ravel(), rtol=cfg.linear_rtol, atol=0.0, M=M, maxiter=200)
        delta = delta.reshape(x.shape)
        step = 1.0
        while True:
            trial = x + step * delta
            tr = prob.residual(trial)
            tres = prob.norm(tr)
            if tres < res or step < 1e-6:
                break
            step *= 0.5
        if tres >= res and step < 1e-6:
            break
        x, r, res = trial, tr, tres
    return x, res, it


def _solve_from(prob: _Problem, x0: np.ndarray, cfg: SolveConfig) -> SolveReport:
    if cfg.method == "newton":
        x, res, it = _iterate_newton(prob, x0, cfg)
    else:
        x, res, it = _iterate_fixed_point(prob, x0, cfg)
    bound = prob.apriori_bound()
    sol = Field(prob.grid, x)
    return SolveReport(
        solution=sol,
        residual_norm=res,
        iterations=it,
        converged=res <= cfg.residual_tolerance,
        apriori_bound=bound,
        apriori_satisfied=sol.sup_norm() <= bound * (1.0 + cfg.apriori_slack),
        method=cfg.method,
    )


def _check_preconditions(p: Potential, cfg: SolveConfig) -> None:
    if "QC" not in p.class_tags:
        raise SolverError(f"potential {p.name} is not tagged QC; tags={sorted(p.class_tags)}")
    if cfg.method == "newton" and "C" not in p.class_tags:
        raise SolverError("Newton mode requires a potential tagged C")


def solve(
    noise: NoiseDraw,
    p: Potential,
    f: CutOff,
    cfg: SolveConfig = SolveConfig(),
    initial: Field | None = None,
    raise_on_failure: bool = True,
) -> SolveReport:
    """Strong solution phibar for one noise realisation.

    Newton runs are started from a few damped fixed-point steps, which keeps
    the first linearisation close to the solution branch.
    """
    _check_preconditions(p, cfg)
    prob = _Problem(noise, p, f)
    x0 = np.zeros(prob.grid.shape) if initial is None else initial.values.copy()
    report = _solve_from(prob, x0, cfg)
    if not report.converged and raise_on_failure:
        raise NonConvergenceError(
            f"no convergence after {report.iterations} iterations"
            f" (last residual {report.residual_norm:.3e})",
            report,
        )
    return report


def _random_start(grid: GridSpec, rng: np.random.Generator, scale: float) -> np.ndarray:
    raw = rng.standard_normal(grid.shape)
    smooth = apply_symbol(raw, grid, grid.symbol(1.0))
    sd = np.std(smooth)
    return scale * smooth / sd if sd > 0 else smooth


def cluster_solutions(fields: list[Field]) -> tuple[list[Field], list[int]]:
    """Greedy clustering by sup-distance with radius 1e-3 (1 + |phibar|_sup)."""
    reps: list[Field] = []
    sizes: list[int] = []
    for fld in fields:
        for i, rep in enumerate(reps):
            radius = 1e-3 * (1.0 + rep.sup_norm())
            if np.max(np.abs(fld.values - rep.values)) <= radius:
                sizes[i] += 1
                break
        else:
            reps.append(fld)
            sizes.append(1)
    return reps, sizes


def count_solutions(
    noise: NoiseDraw, p: Potential, f: CutOff, cfg: SolveConfig
) -> SolveReport:
    """Solve from the zero field and ``multistart_count`` random smooth starts, then cluster."""
    if cfg.multistart_count < 2:
        raise ValueError("count_solutions needs multistart_count >= 2")
    _check_preconditions(p, cfg)
    prob = _Problem(noise, p, f)
    rng = rng_from_seed((int(noise.seed) & 0xFFFFFFFF) * 1_000_003 + cfg.seed)
    starts = [np.zeros(prob.grid.shape)]
    starts += [_random_start(prob.grid, rng, cfg.initial_scale) for _ in range(cfg.multistart_count)]
    reports = [_solve_from(prob, s, cfg) for s in starts]
    good = [r for r in reports if r.converged]
    if not good:
        raise NonConvergenceError("no start converged", reports[0])
    reps, sizes = cluster_solutions([r.solution for r in good])
    head = reports[0] if reports[0].converged else good[0]
    head.distinct_solutions = reps
    head.cluster_sizes = sizes
    head.n_failed_starts = len(reports) - len(good)
    return head


# ---------------------------------------------------------------------------
# radial shooting oracle (zero noise, n = 1)
# ---------------------------------------------------------------------------


def radial_shooting_count(
    p: Potential,
    f: CutOff,
    m2: float = 1.0,
    s_max: float | None = None,
    n_scan: int = 200,
    r_max: float = 25.0,
) -> tuple[int, np.ndarray]:
    """Count radial solutions of phi'' + phi'/r = m^2 phi + f dV(phi) on the plane.

    Shoots from phi(0) = s, phi'(0) = 0 and matches the decaying Bessel tail
    phi ~ K_0(m r) at ``r_max``. Sign changes of the mismatch over
    s in [-s_max, s_max] are the solutions; returns (count, root brackets).
    """
    from scipy.integrate import solve_ivp
    from scipy.special import k0e, k1e

    if p.n != 1:
        raise ValueError("radial shooting is scalar only")
    m = np.sqrt(m2)
    if s_max is None:
        if p.qc_bound is None:
            raise ValueError("s_max required when the potential carries no H")
        s_max = float(f.f0 * np.max(p.qc_bound(np.zeros((1, 1)))) / m2) * 1.5 + 0.1
    tail = m * k1e(m * r_max) / k0e(m * r_max)
    r0 = 1e-6

    def rhs(r, u):
        phi, dphi = u
        return [dphi, m2 * phi + f.ftilde(r * r) * p.grad(np.array([phi]))[0] - dphi / r]

    # once |phi| leaves the a-priori window the shot is on the growing I_0
    # branch and the sign of the mismatch is already fixed
    def escaped(r, u):
        return abs(u[0]) - 4.0 * s_max

    escaped.terminal = True

    def mismatch(s):
        c = m2 * s + f.f0 * p.grad(np.array([s]))[0]
        u0 = [s + c * r0 * r0 / 4, c * r0 / 2]
        sol = solve_ivp(rhs, (r0, r_max), u0, method="DOP853", rtol=1e-10, atol=1e-12, events=escaped)
        phi, dphi = sol.y[:, -1]
        if sol.status == 1:
            return float(np.sign(phi))
        return dphi + tail * phi

    # odd grid size keeps s = 0 off the scan so a root there shows as a sign change
    grid = np.linspace(-s_max, s_max, 2 * (n_scan // 2))
    vals = np.array([mismatch(s) for s in grid])
    flips = np.nonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) < 0)[0]
    brackets = np.stack([grid[flips], grid[flips + 1]], axis=1)
    return len(flips), brackets
