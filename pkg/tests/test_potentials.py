import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from esqlab.potentials import FAMILIES, ProbeSpec, builtin_potential, check_hypothesis, fit_growth


@pytest.mark.parametrize(
    "name,params",
    [("zero", {}), ("quadratic", {"c": 0.7}), ("quartic", {"lam": 0.2}),
     ("quartic_plus_bounded", {"lam": 0.1, "amplitude": 0.2}), ("trig_polynomial", {"cos": [0.5, 0.3]})],
)
def test_derivatives_match_finite_differences(name, params):
    p = builtin_potential(name, params)
    y = np.linspace(-3, 3, 41)[None]
    h = 1e-5
    assert np.allclose((p.V(y + h) - p.V(y - h)) / (2 * h), p.grad(y)[0], atol=1e-6)
    assert np.allclose((p.grad(y + h) - p.grad(y - h))[0] / (2 * h), p.hess(y)[0, 0], atol=1e-5)


def test_tags():
    assert {"C", "QC", "V_lambda"} <= builtin_potential("quartic", {"lam": 0.2}).class_tags
    assert "bounded" in builtin_potential("zero").class_tags
    dw = builtin_potential("trig_polynomial", {"cos": [0.0, 1.2]})
    # 1.2 (1 + cos 2y) is bounded and QC, but V'' = -4.8 cos 2y breaks convexity of V + m^2 y^2
    assert "C" not in dw.class_tags and "QC" in dw.class_tags
    assert any("tag C dropped" in w for w in dw.warnings)


def test_unknown_family():
    with pytest.raises(ValueError, match="unknown potential family"):
        builtin_potential("sextic")
    assert "quartic" in FAMILIES


def test_convexity_counterexample():
    p = builtin_potential("trig_polynomial", {"cos": [0.0, 1.2]})
    rep = check_hypothesis(p, "C", ProbeSpec(n_points=200))
    assert not rep.passed and "min_eig" in rep.counterexample


def test_multicomponent_quartic():
    p = builtin_potential("quartic", {"lam": 0.3}, n=3)
    y = np.random.default_rng(0).standard_normal((3, 50))
    assert p.grad(y).shape == (3, 50)
    assert p.hess(y).shape == (3, 3, 50)
    assert "C" in p.class_tags


@settings(max_examples=40, deadline=None)
@given(st.floats(0.01, 2.0), st.floats(-20, 20))
def test_quartic_nonnegative_and_qc_bound(lam, y):
    p = builtin_potential("quartic", {"lam": lam}, probe=ProbeSpec(n_points=50, n_radii=5))
    pt = np.array([[y]])
    assert p.V(pt)[0] >= 0
    # |dV| <= H is the a-priori bound used by the solver
    assert abs(p.grad(pt)[0, 0]) <= p.qc_bound(pt)[0]


def test_growth_fit_bounds_samples():
    p = builtin_potential("quartic", {"lam": 0.2})
    a, b = fit_growth(p, ProbeSpec(n_points=100))
    y = np.linspace(-10, 10, 101)[None]
    env = np.maximum(np.abs(p.V(y)), np.abs(p.grad(y)[0]))
    assert np.all(env <= np.exp(a * np.abs(y[0]) + b) * (1 + 1e-9))


def test_scaled_potential():
    p = builtin_potential("quartic", {"lam": 0.2})
    q = p.scaled(0.5)
    y = np.linspace(-2, 2, 7)[None]
    assert np.allclose(q.V(y), 0.5 * p.V(y)) and np.allclose(q.grad(y), 0.5 * p.grad(y))
    assert np.allclose(q.hess(y), 0.5 * p.hess(y)) and p.scaled(1.0) is p
    with pytest.raises(ValueError):
        p.scaled(0.0)
