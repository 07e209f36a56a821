"""Acceptance criteria 1 to 11, each printing one PASS/FAIL line."""

import math

import numpy as np
import pytest

from esqlab.fermion_det import amplitude_sweep
from esqlab.fields import GridSpec, lattice_variance, zero_noise
from esqlab.girsanov import det2, det2_eig, finite_dim_change_of_variables_check, tanh_shift
from esqlab.harness import (
    parse_config,
    run_cutoff_removal_trend,
    run_density_route_check,
    run_reduction_experiment,
)
from esqlab.kernels import green_gradient_identity_residual, make_cutoff
from esqlab.potentials import builtin_potential
from esqlab.solver import SolveConfig, count_solutions, radial_shooting_count
from esqlab.superspace import ACCEPTANCE_MATRIX, SuperCovariance, reduction_formula_check, verify_pol_eq

QUARTIC = {"name": "quartic", "params": {"lam": 0.2}}


def test_criterion_01_linear_exactness(verdict):
    cfg = parse_config(
        {"grid": {"L": 16, "N": 256}, "potential": {"name": "zero", "params": {}}, "replicas": 4000,
         "observables": [{"power": 2}], "seed": 1}
    )
    rep = run_reduction_experiment(cfg)
    row = rep.lattice_rows[0]
    lattice = lattice_variance(cfg.grid.build())
    rel = abs(lattice * 4 * math.pi - 1)
    ok = abs(row.z) <= 4 and rel < 0.01
    assert verdict(1, ok, f"Var={row.estimate:.5f}+-{row.se:.5f} lattice={lattice:.5f} z={row.z:.2f} rel(1/4pi)={rel:.2e}")


@pytest.mark.slow
def test_criterion_02_quartic_reduction(verdict):
    cfg = parse_config(
        {"grid": {"L": 32, "N": 256}, "potential": QUARTIC, "replicas": 4000,
         "observables": [{"power": 2}, {"power": 4}], "seed": 2}
    )
    rep = run_reduction_experiment(cfg)
    detail = " ".join(f"{r.h}: {r.estimate:.5f}+-{r.se:.5f} vs {r.target:.5f} (z={r.z:.2f})" for r in rep.rows)
    ok = rep.failed == 0 and all(abs(r.z) <= 4 for r in rep.rows)
    assert verdict(2, ok, detail)


def test_criterion_03_density_route(verdict):
    cfg = parse_config(
        {"grid": {"L": 32, "N": 16}, "potential": QUARTIC, "replicas": 2000,
         "observables": [{"power": 2}, {"power": 4}], "seed": 3}
    )
    rep = run_density_route_check(cfg)
    zs = " ".join(f"{r.h}: z={r.z:.2f}" for r in rep.rows)
    assert verdict(3, rep.passed(), f"E[Lambda]={rep.lambda_mean:.4f}+-{rep.lambda_se:.4f} (z={rep.lambda_z:.2f}) {zs}")


def test_criterion_04_det2(verdict):
    rng = np.random.Generator(np.random.PCG64(4))
    worst = 0.0
    for _ in range(100):
        A = rng.standard_normal((10, 10))
        K = 0.1 * (A + A.T) / 2.0
        worst = max(worst, abs(det2(K) - det2_eig(K, symmetric=True)) / abs(det2_eig(K, symmetric=True)))
    zero = det2(np.zeros((10, 10)))
    assert verdict(4, worst < 1e-12 and zero == 1.0, f"max rel err={worst:.2e} det2(0)={zero!r}")


def test_criterion_05_change_of_variables(verdict):
    g = lambda y: np.tanh(y[0]) ** 2  # noqa: E731
    parts, ok = [], True
    for c in (1.0, -3.0):
        U, jac = tanh_shift(c)
        r = finite_dim_change_of_variables_check(1, U, jac, g, trials=20000, seed=5)
        z_pre = r.z(r.abs_weighted, r.preimage_weighted)
        z_sign = r.z(r.signed_weighted, r.plain)
        ok &= z_pre <= 4 and z_sign <= 4
        if r.max_preimages == 1:
            z_abs = r.z(r.abs_weighted, r.plain)
            ok &= z_abs <= 4
        else:
            z_abs = float("nan")
        parts.append(f"c={c:g} preimages={r.max_preimages} z(abs,mult)={z_pre:.2f} z(signed,E[g])={z_sign:.2f} z(abs,E[g])={z_abs:.2f}")
    ok &= any("preimages=3" in p for p in parts)
    assert verdict(5, ok, "; ".join(parts))


def test_criterion_06_kernel_identity(verdict):
    radii = np.geomspace(0.05, 8.0, 20)
    worst = max(green_gradient_identity_residual(chi, float(r)) for chi in (0.25, 0.5, 1.0) for r in radii)
    assert verdict(6, worst < 1e-5, f"max residual={worst:.2e}")


def test_criterion_07_reduction_formula(verdict):
    cov = SuperCovariance(0.5)
    cutoffs = [make_cutoff("exp-sqrt", 1.0, 1.0), make_cutoff("flat-top", 1.0, 1.0, radius=2.0)]
    gaps = [reduction_formula_check(cov, f).rel_gap for f in cutoffs]
    assert verdict(7, max(gaps) < 1e-4, "rel gaps=" + ", ".join(f"{g:.2e}" for g in gaps))


def test_criterion_08_pol_eq(verdict):
    rows = [verify_pol_eq(p, P, n, chi=0.5) for p, P, n in ACCEPTANCE_MATRIX]
    ok = all(r.gap < 1e-3 for r in rows)
    assert verdict(8, ok, "gaps=" + ", ".join(f"{r.gap:.1e}" for r in rows))


def test_criterion_09_fermion_determinant(verdict):
    rows = amplitude_sweep(make_cutoff("exp-sqrt", 1.0, 1.0), np.linspace(0.0, 1.0, 11), order=5, chi=0.5)
    worst = max(r.gap / r.truncation if r.truncation > 0 else 0.0 for r in rows)
    ok = all(r.within for r in rows)
    assert verdict(9, ok, f"{len(rows)} amplitudes, max gap/truncation={worst:.3f}")


@pytest.mark.slow
def test_criterion_10_cutoff_removal_trend(verdict):
    cfg = parse_config({"grid": {"L": 32, "N": 128}, "potential": QUARTIC, "replicas": 1000, "seed": 11})
    rep = run_cutoff_removal_trend(cfg, [1.0, 0.5, 0.25])
    detail = " ".join(
        f"b={r.b:g}: max|z|={r.max_abs_z:.2f} TV={r.total_variation:.3f}+-{r.total_variation_se:.3f}" for r in rep.rows
    )
    assert verdict(10, rep.monotone, detail)


@pytest.mark.slow
def test_criterion_11_uniqueness_and_multiplicity(verdict):
    cfg = parse_config(
        {"grid": {"L": 32, "N": 64}, "potential": QUARTIC, "replicas": 50, "seed": 12,
         "solver": {"multistart_count": 4, "initial_scale": 2.0}}
    )
    unique = run_reduction_experiment(cfg)
    dw = builtin_potential("trig_polynomial", {"cos": [0.0, 1.2]})
    f = make_cutoff("exp-sqrt", 0.5, 1.0)
    multi = count_solutions(
        zero_noise(GridSpec(64.0, 128)), dw, f, SolveConfig(method="fixed_point", multistart_count=8, max_iterations=3000)
    )
    shots, _ = radial_shooting_count(dw, f)
    clusters = len(multi.distinct_solutions)
    ok = unique.failed == 0 and unique.max_solution_count == 1 and clusters >= 2 and shots >= 2
    assert verdict(
        11, ok,
        f"quartic: max clusters={unique.max_solution_count} over {unique.used} draws; double well: {clusters} clusters, shooting oracle {shots}",
    )
