import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from esqlab.kernels import green_at_origin, make_cutoff
from esqlab.quadrature import DiskQuadrature
from esqlab.superspace import (
    GrassmannElement,
    PairingGuardError,
    SuperCovariance,
    SuperFunction,
    SuperPoint,
    apply_Q,
    berezin_integral,
    evaluate_at,
    isserlis_moment,
    pairing_patterns,
    perfect_matchings,
    reduction_formula_check,
    susy_check,
    tau,
    tau_invariance_residual,
    wick_superfield_expectation,
)

g = lambda x: np.exp(-np.sum(x * x, axis=-1))  # noqa: E731


@pytest.fixture(scope="module")
def cov():
    return SuperCovariance(0.5)


def test_supersymmetric_functions_pass(cov, cutoff):
    assert susy_check(cov.as_superfunction()).passed
    assert susy_check(SuperFunction.from_radial(cutoff.ftilde, cutoff.ftilde_prime)).passed
    assert susy_check(SuperFunction.quadratic_form()).passed


@pytest.mark.parametrize(
    "F,label",
    [
        (SuperFunction(fttb=lambda x: x[..., 0]), "Q ft"),
        (SuperFunction(ftb=g), "Q f0"),
        (SuperFunction(ft=g), "Qbar f0"),
        (SuperFunction(f0=g), "Q ft"),
    ],
)
def test_non_supersymmetric_fail(F, label):
    rep = susy_check(F)
    assert not rep.passed
    assert rep.first_failure.startswith(label.split()[0])


def test_theta_g_is_q_closed_only():
    rep = susy_check(SuperFunction(ft=g))
    assert rep.q_residual == 0 and rep.qbar_residual > 1


def test_generators_annihilate_quadratic_form():
    x = np.random.default_rng(0).standard_normal((20, 2))
    F = SuperFunction.quadratic_form()
    for conj in (False, True):
        G = apply_Q(F, conj)
        for c in ("f0", "ft", "ftb", "fttb"):
            assert np.allclose(G.component(c)(x), 0.0, atol=1e-8)


def test_tau_group_law():
    z = SuperPoint.plain(np.array([0.4, -1.2]))
    b1, bb1, b2, bb2 = map(np.array, ([1.0, 2.0], [0.5, -1.0], [0.3, 0.1], [2.0, 1.0]))
    assert tau(tau(z, b1, bb1), b2, bb2).allclose(tau(z, b1 + b2, bb1 + bb2))
    assert tau(z, [0, 0], [0, 0]).allclose(z)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-2, 2), min_size=6, max_size=6))
def test_tau_generated_by_q(v):
    b, bb, x = np.array(v[:2]), np.array(v[2:4]), np.array(v[4:])
    F = SuperFunction(
        f0=lambda y: np.sin(y[..., 0]) * y[..., 1],
        ft=lambda y: y[..., 0] ** 2,
        ftb=lambda y: np.cos(y[..., 1]),
        fttb=lambda y: y[..., 0] * y[..., 1],
    )
    z = SuperPoint.plain(x)
    diff = evaluate_at(F, tau(z, b, bb)) - evaluate_at(F, z)
    Qb, Q = apply_Q(F, True), apply_Q(F, False)
    k = 3
    t, tb, rho = (GrassmannElement.generator(k, i) for i in range(3))
    basis = {"f0": GrassmannElement.scalar(k, 1.0), "ft": t, "ftb": tb, "fttb": t * tb}
    gen = GrassmannElement(k)
    for c, e in basis.items():
        gen = gen + e * float(Qb.component(c)(x) @ b + Q.component(c)(x) @ bb)
    # F(tau z) - F(z) = rho (b.Qbar + bbar.Q) F, exactly (rho^2 = 0)
    assert diff.allclose(rho * gen, atol=1e-6)


def test_tau_invariance(cov, cutoff):
    F = SuperFunction.from_radial(cutoff.ftilde, cutoff.ftilde_prime)
    x = np.array([0.7, -0.3])
    assert tau_invariance_residual(F, [1, 2], [0.5, -1], x) < 1e-12
    assert tau_invariance_residual(cov.as_superfunction(), [1, 2], [0.5, -1], x) < 1e-9
    assert tau_invariance_residual(SuperFunction(ftb=g), [1, 2], [0.5, -1], x) > 0.1


def test_berezin_conventions():
    F = SuperFunction(f0=g, fttb=lambda x: 3.0 * g(x))
    q = DiskQuadrature(8.0, 16, 10, 8)
    # int f_ttb theta thetabar dtheta dthetabar = -f_ttb
    assert berezin_integral(F, quadrature=q) == pytest.approx(-3 * math.pi, rel=1e-10)
    # a purely spatial delta keeps the theta thetabar component
    assert berezin_integral(F, "delta") == pytest.approx(-3.0)


def test_covariance_components(cov):
    two = cov.two_point()
    assert two["phi_phi"] == pytest.approx(green_at_origin(3.0, 1.0))
    assert two["phi_omega"] == pytest.approx(-0.5 * green_at_origin(2.0, 1.0))
    e = cov.element(np.array(1.3), GrassmannElement.generator(2, 0), GrassmannElement.generator(2, 1))
    F = cov.as_superfunction()
    assert np.allclose(e.body, F.f0(np.array([1.3, 0.0])), rtol=1e-8)
    assert np.allclose(e.top, F.fttb(np.array([1.3, 0.0])), rtol=1e-8)


def test_perfect_matchings_count():
    for n in range(0, 9, 2):
        assert sum(1 for _ in perfect_matchings(list(range(n)))) == math.prod(range(n - 1, 0, -2))
    assert list(perfect_matchings([0, 1, 2])) == []


def test_pairing_patterns_total():
    pats = pairing_patterns([0, 0, 1, 1, 1, 1])
    assert sum(pats.values()) == 15
    with pytest.raises(PairingGuardError):
        pairing_patterns(list(range(12)))


def test_isserlis():
    assert isserlis_moment(4, 2.0) == 12.0
    assert isserlis_moment(3, 2.0) == 0.0
    assert isserlis_moment(0, 5.0) == 1.0


def test_wick_two_point_equals_covariance(cov):
    x = np.array([1.3, 0.4])
    e = wick_superfield_expectation([(np.zeros(2), 0, 1), (x, None, None)], cov, k=2)
    F = cov.as_superfunction()
    assert np.allclose(e.body, F.f0(x), rtol=1e-8) and np.allclose(e.top, F.fttb(x), rtol=1e-8)
    assert wick_superfield_expectation([(x, None, None)] * 3, cov, k=2).allclose(GrassmannElement(2))


def test_wick_four_point_body(cov):
    # bosonic part: <phi^4(0)> = 3 G(0)^2
    e = wick_superfield_expectation([(np.zeros(2), None, None)] * 4, cov, k=2)
    assert e.body == pytest.approx(3 * cov.g_hi0**2)


@pytest.mark.parametrize("f", [make_cutoff("exp-sqrt", 1.0, 1.0), make_cutoff("flat-top", 1.0, 1.0, radius=2.0)])
def test_reduction_formula(cov, f):
    r = reduction_formula_check(cov, f)
    assert r.rel_gap < 1e-4 and r.quad_error < 1e-5
