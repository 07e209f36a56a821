import math

import pytest

from esqlab.kernels import make_cutoff
from esqlab.superspace import PairingGuardError, gaussian_side, verify_pol_eq
from esqlab.superspace.poleq import PolEqReport


def test_order_zero_is_gaussian_moment():
    r = verify_pol_eq([0, 0, 0, 0, 1], [1], 0)
    assert r.lhs == pytest.approx(r.rhs) and r.quadrature_error == 0
    assert r.rhs == pytest.approx(3 * (1 / (8 * math.pi)) ** 2)


def test_gaussian_side_closed_form():
    f0 = math.exp(-1)
    # <(-4 pi f0 phi^2)> = -4 pi f0 G
    assert gaussian_side([1], [0, 0, 1], 1, 0.1, f0) == pytest.approx(-4 * math.pi * f0 * 0.1)


@pytest.mark.parametrize("p,P", [([1], [0, 0, 1]), ([0, 0, 1], [0, 0, 1]), ([1], [0, 0, 0, 0, 1]), ([0, 1], [0, 1])])
def test_first_order(p, P):
    r = verify_pol_eq(p, P, 1)
    assert r.gap < 1e-6
    assert isinstance(r, PolEqReport) and r.to_json().startswith("{")


def test_other_chi_and_cutoff():
    r = verify_pol_eq([0, 0, 1], [0, 0, 1], 1, chi=1.0, f=make_cutoff("flat-top", 1.0, 1.0, radius=1.0))
    assert r.gap < 1e-5


def test_guards():
    with pytest.raises(ValueError):
        verify_pol_eq([1], [0, 0, 1], 3)
    with pytest.raises(PairingGuardError):
        verify_pol_eq([1], [0] * 6 + [1], 2)
