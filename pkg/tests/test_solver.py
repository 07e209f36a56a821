import numpy as np
import pytest

from esqlab.fields import GridSpec, apply_fractional_inverse, sample_white_noise, zero_noise
from esqlab.kernels import make_cutoff
from esqlab.potentials import builtin_potential
from esqlab.solver import (
    NonConvergenceError,
    SolveConfig,
    SolverError,
    count_solutions,
    fixed_point_map,
    radial_shooting_count,
    residual_norm,
    solve,
)

GRID = GridSpec(32.0, 64)


@pytest.fixture(scope="module")
def quartic():
    return builtin_potential("quartic", {"lam": 0.2})


@pytest.fixture(scope="module")
def double_well():
    return builtin_potential("trig_polynomial", {"cos": [0.0, 1.2]})


def test_zero_potential_gives_zero(cutoff):
    p = builtin_potential("zero")
    rep = solve(sample_white_noise(GRID, 1), p, cutoff)
    assert rep.converged and rep.solution.sup_norm() == 0.0


@pytest.mark.parametrize("method", ["newton", "fixed_point"])
def test_methods_agree(quartic, cutoff, method):
    noise = sample_white_noise(GRID, 5)
    rep = solve(noise, quartic, cutoff, SolveConfig(method=method))
    ref = solve(noise, quartic, cutoff, SolveConfig(method="newton", residual_tolerance=1e-12))
    assert rep.converged and rep.apriori_satisfied
    assert np.max(np.abs(rep.solution.values - ref.solution.values)) < 1e-7
    # independent re-evaluation of the residual
    assert residual_norm(rep.solution, noise, quartic, cutoff) < 1e-8


def test_solution_is_fixed_point(quartic, cutoff):
    noise = sample_white_noise(GRID, 9)
    sol = solve(noise, quartic, cutoff).solution
    assert np.max(np.abs(fixed_point_map(sol, noise, quartic, cutoff).values - sol.values)) < 1e-9


def test_solution_satisfies_equation(quartic, cutoff):
    # (m^2 - Delta) phibar = -f dV(phibar + I xi), checked spectrally
    noise = sample_white_noise(GRID, 2)
    sol = solve(noise, quartic, cutoff, SolveConfig(residual_tolerance=1e-12)).solution
    ixi = apply_fractional_inverse(noise.field, 1.0)
    rhs = -cutoff.ftilde(GRID.radius_sq) * quartic.grad((sol + ixi).values)
    back = apply_fractional_inverse(type(sol)(GRID, rhs), 1.0)
    assert np.max(np.abs(back.values - sol.values)) < 1e-9


def test_newton_requires_convexity(double_well, cutoff):
    with pytest.raises(SolverError, match="tagged C"):
        solve(zero_noise(GRID), double_well, cutoff, SolveConfig(method="newton"))


def test_nonconvergence_raises(quartic, cutoff):
    with pytest.raises(NonConvergenceError) as info:
        solve(sample_white_noise(GRID, 3), quartic, cutoff, SolveConfig(method="fixed_point", max_iterations=2))
    assert not info.value.report.converged


def test_config_validation():
    with pytest.raises(ValueError):
        SolveConfig(damping=0)
    with pytest.raises(ValueError):
        SolveConfig(method="bisection")


def test_count_solutions_unique_for_convex(quartic, cutoff):
    rep = count_solutions(sample_white_noise(GRID, 4), quartic, cutoff, SolveConfig(multistart_count=4))
    assert len(rep.distinct_solutions) == 1 and sum(rep.cluster_sizes) == 5


@pytest.mark.slow
def test_double_well_multiplicity():
    p = builtin_potential("trig_polynomial", {"cos": [0.0, 1.2]})
    f = make_cutoff("exp-sqrt", 0.5, 1.0)
    grid = GridSpec(64.0, 128)
    cfg = SolveConfig(method="fixed_point", multistart_count=8, max_iterations=3000)
    rep = count_solutions(zero_noise(grid), p, f, cfg)
    assert len(rep.distinct_solutions) >= 2
    count, _ = radial_shooting_count(p, f)
    assert count >= 2


def test_shooting_unique_for_convex(quartic):
    count, brackets = radial_shooting_count(quartic, make_cutoff("exp-sqrt", 1.0, 1.0), n_scan=60)
    assert count == 1 and brackets[0, 0] < 0 < brackets[0, 1]
