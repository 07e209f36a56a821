import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from esqlab.gibbs import GibbsMeasure, export_moments_csv, gibbs_density, gibbs_moment, monomial
from esqlab.potentials import builtin_potential


def test_gaussian_case():
    g = GibbsMeasure(builtin_potential("zero"))
    assert g.Z_kappa == pytest.approx(1 / math.sqrt(2), rel=1e-10)
    assert float(gibbs_density(g, 0.0)[()]) == pytest.approx(math.sqrt(2), rel=1e-10)
    assert gibbs_moment(g, monomial(2)).value == pytest.approx(1 / (4 * math.pi), rel=1e-10)
    assert gibbs_moment(g, monomial(4)).value == pytest.approx(3 / (4 * math.pi) ** 2, rel=1e-10)


def test_quartic_against_scipy_quad():
    p = builtin_potential("quartic", {"lam": 0.2})
    g = GibbsMeasure(p)
    w = lambda y: math.exp(-4 * math.pi * (y * y / 2 + 0.2 * y**4))  # noqa: E731
    Z = integrate.quad(w, -np.inf, np.inf, epsabs=1e-14)[0]
    m2 = integrate.quad(lambda y: y * y * w(y), -np.inf, np.inf, epsabs=1e-14)[0] / Z
    assert g.Z_kappa == pytest.approx(Z, rel=1e-9)
    assert gibbs_moment(g, monomial(2)).value == pytest.approx(m2, rel=1e-8)
    assert abs(gibbs_moment(g, monomial(1)).value) < 1e-12


@settings(max_examples=20, deadline=None)
@given(st.floats(0.01, 3.0))
def test_quartic_shrinks_variance(lam):
    g = GibbsMeasure(builtin_potential("quartic", {"lam": lam}))
    assert 0 < gibbs_moment(g, monomial(2)).value < 1 / (4 * math.pi)


def test_two_components_factorise():
    g1 = GibbsMeasure(builtin_potential("quartic", {"lam": 0.3}))
    g2 = GibbsMeasure(builtin_potential("quartic", {"lam": 0.3}, n=2), nodes=65)
    assert g2.Z_kappa == pytest.approx(g1.Z_kappa**2, rel=1e-7)
    mixed = gibbs_moment(g2, lambda y: y[0] ** 2 * y[1] ** 2).value
    assert mixed == pytest.approx(gibbs_moment(g1, monomial(2)).value ** 2, rel=1e-7)


def test_sampler_matches_quadrature(rng):
    g = GibbsMeasure(builtin_potential("quartic", {"lam": 0.2}))
    y = g.sample(40000, rng)
    target = gibbs_moment(g, monomial(2)).value
    se = np.std(y[0] ** 2) / math.sqrt(y.shape[1])
    assert abs(np.mean(y[0] ** 2) - target) < 4 * se


def test_tail_bound_negligible():
    assert GibbsMeasure(builtin_potential("quartic", {"lam": 0.2})).tail_mass_bound < 1e-20


def test_high_dimension_uses_sampler():
    g = GibbsMeasure(builtin_potential("zero", n=4))
    res = gibbs_moment(g, monomial(2, 3), mc_samples=100_000)
    assert res.method == "rejection"
    assert abs(res.value - 1 / (4 * math.pi)) < 4 * res.error_estimate


def test_csv(tmp_path):
    g = GibbsMeasure(builtin_potential("zero"))
    export_moments_csv([("y^2", gibbs_moment(g, monomial(2)))], tmp_path / "m.csv")
    assert (tmp_path / "m.csv").read_text().startswith("h,value,error_estimate")
