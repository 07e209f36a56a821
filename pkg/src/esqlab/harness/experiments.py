"""Monte Carlo experiments over noise draws.

Every replica owns its RNG stream (``replica_seed(master, index)``), so a run
is bitwise reproducible whatever the worker count.
"""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy import integrate

from ..fields import (
    GridSpec,
    apply_fractional_inverse,
    lattice_covariance,
    lattice_variance,
    replica_seed,
    sample_white_noise,
)
from ..gibbs import GibbsMeasure, gibbs_density, gibbs_moment
from ..girsanov import ShiftOperator, lambda_u, log_upsilon
from ..kernels import CutOff, make_cutoff
from ..potentials import Potential
from ..solver import SolverError, count_solutions, solve
from .config import WORKERS_ENV, ConfigError, ExperimentConfig, Observable
from .stats import covariance_se, mean_se, weighted_ratio

log = logging.getLogger(__name__)

Z_THRESHOLD = 4.0
# independent stream for the second arm of two-route comparisons
_STRONG_ROUTE_SALT = 0x5EED


class ExcessiveFailureError(RuntimeError):
    def __init__(self, message: str, failed: int, total: int):
        super().__init__(message)
        self.failed = failed
        self.total = total


# ---------------------------------------------------------------------------
# replicas
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class WeightedSample:
    """phi(0) = (I xi + phibar)(0) and log Upsilon_f for one noise draw."""

    index: int
    seed: int
    phi0: tuple[float, ...]
    log_upsilon: float
    converged: bool
    solution_count: int = 1
    iterations: int = 0


@dataclass
class _Setup:
    grid: GridSpec
    potential: Potential
    cutoff: CutOff

    @classmethod
    def from_config(cls, cfg: ExperimentConfig) -> "_Setup":
        grid = cfg.grid.build()
        cutoff = cfg.build_cutoff()
        potential = cfg.build_potential()
        # with V = 0 the cut-off enters neither the equation nor the weight
        if not potential.is_zero() and not grid.torus_guard(cutoff):
            raise ConfigError(
                f"torus guard: f(L/2)/f(0) >= 1e-6 for L={grid.L}; enlarge grid.L or increase cutoff.b"
            )
        return cls(grid, potential, cutoff)


def solve_replica(cfg: ExperimentConfig, setup: _Setup, index: int, master: int | None = None) -> WeightedSample:
    seed = replica_seed(cfg.seed if master is None else master, index)
    noise = sample_white_noise(setup.grid, seed)
    phi = apply_fractional_inverse(noise.field, 1.0)
    count, iters, ok = 1, 0, True
    if not setup.potential.is_zero():
        scfg = cfg.solver.build(cfg.seed)
        try:
            if cfg.solver.multistart_count >= 2:
                rep = count_solutions(noise, setup.potential, setup.cutoff, scfg)
                count = len(rep.distinct_solutions)
            else:
                rep = solve(noise, setup.potential, setup.cutoff, scfg, raise_on_failure=False)
            ok, iters = rep.converged, rep.iterations
            phi = phi + rep.solution
        except SolverError as exc:
            log.warning("replica %d (seed %d): %s", index, seed, exc)
            ok = False
    lu = log_upsilon(phi, setup.potential, setup.cutoff) if ok else float("nan")
    return WeightedSample(index, seed, tuple(float(v) for v in phi.at_origin()), lu, ok, count, iters)


def _chunk_worker(payload) -> list[WeightedSample]:
    cfg_data, indices, master = payload
    cfg = ExperimentConfig.model_validate(cfg_data)
    setup = _Setup.from_config(cfg)
    return [solve_replica(cfg, setup, i, master) for i in indices]


def resolve_workers(cfg: ExperimentConfig) -> int:
    env = os.environ.get(WORKERS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"{WORKERS_ENV} must be an integer, got {env!r}") from None
    return cfg.workers


def run_replicas(cfg: ExperimentConfig, master: int | None = None) -> list[WeightedSample]:
    """All ``cfg.replicas`` samples, in replica order."""
    setup = _Setup.from_config(cfg)
    workers = resolve_workers(cfg)
    M = cfg.replicas
    if workers == 1 or M < 2 * workers:
        return [solve_replica(cfg, setup, i, master) for i in range(M)]
    chunks = np.array_split(np.arange(M), 4 * workers)
    payloads = [(cfg.model_dump(), [int(i) for i in c], master) for c in chunks if len(c)]
    out: list[WeightedSample] = []
    with ProcessPoolExecutor(max_workers=workers) as pool:
        for part in pool.map(_chunk_worker, payloads):
            out.extend(part)
    return out


def _split_failures(samples: list[WeightedSample], cfg: ExperimentConfig) -> list[WeightedSample]:
    good = [s for s in samples if s.converged]
    failed = len(samples) - len(good)
    if failed > cfg.max_failure_fraction * len(samples):
        bad = [s.seed for s in samples if not s.converged][:10]
        raise ExcessiveFailureError(
            f"{failed}/{len(samples)} replicas failed to converge (first seeds {bad})", failed, len(samples)
        )
    return good


# ---------------------------------------------------------------------------
# reduction experiment
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EstimateRow:
    h: str
    estimate: float
    se: float
    target: float
    target_error: float
    z: float


@dataclass(frozen=True)
class BinRow:
    lo: float
    hi: float
    estimate: float
    se: float
    target: float


@dataclass
class ReductionReport:
    """Weighted estimates of h(phi(0)) against the Gibbs targets."""

    kind: str
    weighted: bool
    replicas: int
    used: int
    failed: int
    Z_f: float
    Z_f_se: float
    rows: list[EstimateRow]
    bins: list[BinRow] = field(default_factory=list)
    total_variation: float = float("nan")
    total_variation_se: float = float("nan")
    lattice_rows: list[EstimateRow] = field(default_factory=list)
    max_solution_count: int = 1
    nonunique: bool = False
    statistical: bool = True
    target_scale: float = 1.0
    notes: list[str] = field(default_factory=list)

    @property
    def max_abs_z(self) -> float:
        return max((abs(r.z) for r in self.rows), default=0.0)

    def passed(self, threshold: float = Z_THRESHOLD) -> bool:
        rows = self.lattice_rows or self.rows
        return all(abs(r.z) <= threshold for r in rows)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["max_abs_z"] = self.max_abs_z
        return d


def _gibbs(p: Potential, m2: float) -> GibbsMeasure:
    return GibbsMeasure(p, m2=m2)


def _histogram(
    y: np.ndarray, w: np.ndarray, g: GibbsMeasure, nbins: int
) -> tuple[list[BinRow], float, float]:
    sd = math.sqrt(gibbs_moment(g, lambda t: t[0] ** 2).value)
    edges = np.linspace(-4.0 * sd, 4.0 * sd, nbins + 1)
    rows = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        ind = ((y >= lo) & (y < hi)).astype(float)
        est = weighted_ratio(ind, w)
        target = integrate.quad(lambda t: float(gibbs_density(g, t)[()]), lo, hi, epsabs=1e-13)[0]
        rows.append(BinRow(float(lo), float(hi), est.value, est.se, target))
    tv = 0.5 * sum(abs(r.estimate - r.target) for r in rows)
    tv_se = 0.5 * math.sqrt(sum(r.se**2 for r in rows))
    return rows, tv, tv_se


def summarise(
    samples: list[WeightedSample],
    cfg: ExperimentConfig,
    potential: Potential,
    weighted: bool = True,
    kind: str = "reduction",
    target_scale: float = 1.0,
) -> ReductionReport:
    """Estimates of each observable against the Gibbs measure of ``target_scale * V``.

    The weighted law at finite cut-off is the Gibbs measure of f(0) V, which
    is V itself only for cut-offs normalised to f(0) = 1.
    """
    good = _split_failures(samples, cfg)
    y = np.array([s.phi0 for s in good]).T
    lu = np.array([s.log_upsilon for s in good])
    if weighted and np.any(lu > 1e-12):
        raise AssertionError("log Upsilon_f must be non-positive")
    w = np.exp(lu) if weighted else np.ones(len(good))
    g = _gibbs(potential.scaled(target_scale), cfg.grid.m2)
    rows = []
    for ob in cfg.observables:
        est = weighted_ratio(ob(y), w)
        tgt = gibbs_moment(g, ob) if ob.kind == "monomial" else None
        target = tgt.value if tgt else _bin_target(g, ob)
        rows.append(EstimateRow(ob.label, est.value, est.se, target, tgt.error_estimate if tgt else 0.0, est.z(target)))
    z_mean, z_se = mean_se(w)
    report = ReductionReport(
        kind=kind,
        weighted=weighted,
        replicas=len(samples),
        used=len(good),
        failed=len(samples) - len(good),
        Z_f=z_mean,
        Z_f_se=z_se,
        rows=rows,
        statistical=cfg.statistical,
        target_scale=target_scale,
    )
    if potential.n == 1:
        report.bins, report.total_variation, report.total_variation_se = _histogram(
            y[0], w, g, cfg.histogram_bins
        )
    if potential.is_zero():
        # the exact lattice law is Gaussian with the lattice-sum variance
        var = lattice_variance(cfg.grid.build())
        for ob in cfg.observables:
            if ob.kind != "monomial":
                continue
            est = weighted_ratio(ob(y), w)
            target = _gaussian_moment(ob.power, var)
            report.lattice_rows.append(EstimateRow(ob.label + " (lattice)", est.value, est.se, target, 0.0, est.z(target)))
    counts = [s.solution_count for s in good]
    report.max_solution_count = max(counts, default=1)
    if report.max_solution_count > 1:
        report.nonunique = True
        report.notes.append(
            "multistart found several solutions on some draws; estimates follow the branch reached from the zero start"
        )
    if not cfg.statistical:
        report.notes.append(f"M={cfg.replicas} < 100: no statistical claim")
    return report


def _gaussian_moment(power: int, var: float) -> float:
    if power % 2:
        return 0.0
    return float(var ** (power // 2) * np.prod(np.arange(power - 1, 0, -2)))


def _bin_target(g: GibbsMeasure, ob: Observable) -> float:
    return gibbs_moment(g, ob).value


def run_reduction_experiment(cfg: ExperimentConfig) -> ReductionReport:
    """Upsilon_f-weighted statistics of phi(0) against the Gibbs measure."""
    setup = _Setup.from_config(cfg)
    if "C" not in setup.potential.class_tags:
        log.warning("potential %s is QC only: solutions may be non-unique", setup.potential.name)
    samples = run_replicas(cfg)
    report = summarise(samples, cfg, setup.potential, weighted=True, target_scale=setup.cutoff.f0)
    if "C" not in setup.potential.class_tags:
        report.notes.append("potential not tagged C: the strong solution selected may not be unique")
    return report


# ---------------------------------------------------------------------------
# cut-off removal
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TrendRow:
    b: float
    L: float
    N: int
    max_abs_z: float
    total_variation: float
    total_variation_se: float
    used: int


@dataclass
class TrendReport:
    rows: list[TrendRow]
    reports: list[ReductionReport]
    slack_z: float = 2.0

    @property
    def monotone(self) -> bool:
        """Distances nonincreasing up to 2 SE (z units for max |z|, TV SE for TV)."""
        for a, b in zip(self.rows, self.rows[1:]):
            if b.max_abs_z > a.max_abs_z + self.slack_z:
                return False
            tol = self.slack_z * math.hypot(a.total_variation_se, b.total_variation_se)
            if not (math.isnan(a.total_variation) or b.total_variation <= a.total_variation + tol):
                return False
        return True

    def to_dict(self) -> dict:
        return {
            "monotone": self.monotone,
            "rows": [asdict(r) for r in self.rows],
            "reports": [r.to_dict() for r in self.reports],
        }


def scaled_grid(cfg: ExperimentConfig, b: float) -> tuple[float, int]:
    """Grid for decay rate b: L grows like 1/b at fixed lattice spacing."""
    factor = cfg.cutoff.b / b
    mult = 2 ** max(0, round(math.log2(factor))) if factor >= 1 else 1
    return cfg.grid.L * mult, cfg.grid.N * mult


def run_cutoff_removal_trend(cfg: ExperimentConfig, b_sequence: Sequence[float] | None = None) -> TrendReport:
    """Unweighted phi(0) statistics against the Gibbs targets along decreasing b."""
    bs = list(b_sequence if b_sequence is not None else cfg.trend_b)
    if any(x <= y for x, y in zip(bs, bs[1:])):
        raise ConfigError("b sequence must be decreasing")
    rows, reports = [], []
    for b in bs:
        L, N = scaled_grid(cfg, b)
        sub = cfg.with_updates(**{"cutoff.b": b, "grid.L": L, "grid.N": N})
        setup = _Setup.from_config(sub)
        if "C" not in setup.potential.class_tags:
            raise ConfigError("the cut-off removal trend needs a potential tagged C")
        rep = summarise(run_replicas(sub), sub, setup.potential, weighted=False, kind="trend")
        rows.append(TrendRow(b, L, N, rep.max_abs_z, rep.total_variation, rep.total_variation_se, rep.used))
        reports.append(rep)
        log.info("trend b=%g L=%g N=%d: max|z|=%.2f TV=%.4f", b, L, N, rep.max_abs_z, rep.total_variation)
    return TrendReport(rows, reports)


# ---------------------------------------------------------------------------
# decorrelation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DecorrelationRow:
    radius: float
    exact: float
    sampled: float
    se: float
    z: float


@dataclass
class DecorrelationReport:
    observable: str
    rows: list[DecorrelationRow]

    def to_dict(self) -> dict:
        return {"observable": self.observable, "rows": [asdict(r) for r in self.rows]}


def boundary_covariance_exact(grid: GridSpec, f: CutOff) -> float:
    """Cov(I xi(0), int ftilde'(|x|^2) I xi(x) dx) = a^2 sum_x ftilde'(|x|^2) C(x) for V = 0."""
    C = lattice_covariance(grid)
    return float(grid.a**2 * np.sum(f.ftilde_prime(grid.radius_sq) * C))


def run_decorrelation_probe(cfg: ExperimentConfig, radii: Sequence[float] | None = None) -> DecorrelationReport:
    """Covariance between the origin and the cut-off boundary for flat-top cut-offs of growing radius."""
    radii = list(radii if radii is not None else cfg.decorrelation_radii)
    grid = cfg.grid.build()
    p = cfg.build_potential()
    rows = []
    if p.is_zero():
        # one set of Gaussian draws serves every radius
        fields = []
        for i in range(cfg.replicas):
            noise = sample_white_noise(grid, replica_seed(cfg.seed, i))
            fields.append(apply_fractional_inverse(noise.field, 1.0).values[0])
        fields = np.array(fields)
        x0 = fields[:, 0, 0]
        for r in radii:
            f = make_cutoff("flat-top", cfg.cutoff.b, cfg.grid.m2, r)
            wp = f.ftilde_prime(grid.radius_sq)
            bnd = grid.a**2 * np.einsum("mij,ij->m", fields, wp)
            cov, se = covariance_se(x0, bnd)
            exact = boundary_covariance_exact(grid, f)
            rows.append(DecorrelationRow(r, exact, cov, se, (cov - exact) / se if se > 0 else 0.0))
        return DecorrelationReport("y", rows)
    ob = next((o for o in cfg.observables if o.kind == "monomial" and o.power == 2), Observable(power=2))
    for r in radii:
        sub = cfg.with_updates(**{"cutoff.kind": "flat-top", "cutoff.radius": r})
        samples = _split_failures(run_replicas(sub), sub)
        hv = ob(np.array([s.phi0 for s in samples]).T)
        lu = np.array([s.log_upsilon for s in samples])
        cov, se = covariance_se(hv, lu)
        rows.append(DecorrelationRow(r, float("nan"), cov, se, float("nan")))
    return DecorrelationReport(ob.label + " vs log Upsilon", rows)


# ---------------------------------------------------------------------------
# density route versus strong-solution route
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RouteRow:
    h: str
    density: float
    density_se: float
    strong: float
    strong_se: float
    z: float


@dataclass
class DensityRouteReport:
    replicas: int
    lambda_mean: float
    lambda_se: float
    lambda_z: float
    singular: int
    rows: list[RouteRow]

    def passed(self, threshold: float = Z_THRESHOLD) -> bool:
        return abs(self.lambda_z) <= threshold and all(abs(r.z) <= threshold for r in self.rows)

    def to_dict(self) -> dict:
        return asdict(self)


def run_density_route_check(cfg: ExperimentConfig) -> DensityRouteReport:
    """E[h(I w(0)) Upsilon Lambda_U] / E[Upsilon Lambda_U] against the strong-solution estimate.

    Both arms use independent noise streams so their errors combine in quadrature.
    """
    setup = _Setup.from_config(cfg)
    if "C" not in setup.potential.class_tags:
        raise ConfigError("the density-route check needs a potential tagged C")
    lam, ups, y = [], [], []
    singular = 0
    for i in range(cfg.replicas):
        noise = sample_white_noise(setup.grid, replica_seed(cfg.seed, i))
        shift = ShiftOperator(noise, setup.potential, setup.cutoff)
        ev = lambda_u(shift)
        singular += ev.singular
        lam.append(ev.lambda_U)
        ups.append(ev.upsilon_f)
        y.append(shift.Iw[:, 0, 0])
    lam, ups, y = np.array(lam), np.array(ups), np.array(y).T
    strong = _split_failures(run_replicas(cfg, master=cfg.seed ^ _STRONG_ROUTE_SALT), cfg)
    ys = np.array([s.phi0 for s in strong]).T
    ws = np.exp([s.log_upsilon for s in strong])
    rows = []
    for ob in cfg.observables:
        d = weighted_ratio(ob(y), ups * lam)
        s = weighted_ratio(ob(ys), ws)
        se = math.hypot(d.se, s.se)
        rows.append(RouteRow(ob.label, d.value, d.se, s.value, s.se, (d.value - s.value) / se if se > 0 else 0.0))
    m, se = mean_se(lam)
    return DensityRouteReport(cfg.replicas, m, se, (m - 1.0) / se if se > 0 else 0.0, singular, rows)
