import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from esqlab.superspace.grassmann import GrassmannElement, apply_function, reorder_sign


def oracle_sign(a: int, b: int, k: int) -> int:
    """Sign of theta_A theta_B by explicit bubble sort of the index word."""
    A = [i for i in range(k) if a >> i & 1]
    B = [i for i in range(k) if b >> i & 1]
    if set(A) & set(B):
        return 0
    word = A + B
    inv = sum(1 for i, j in itertools.combinations(range(len(word)), 2) if word[i] > word[j])
    return -1 if inv % 2 else 1


@pytest.mark.parametrize("k", range(1, 7))
def test_sign_table_exhaustive(k):
    for a in range(1 << k):
        for b in range(1 << k):
            assert reorder_sign(a, b) == oracle_sign(a, b, k)


def elements(k):
    coeff = st.floats(-3, 3, allow_nan=False, allow_infinity=False)
    return st.dictionaries(st.integers(0, (1 << k) - 1), coeff, max_size=1 << k).map(
        lambda d: GrassmannElement(k, d)
    )


@settings(max_examples=60, deadline=None)
@given(elements(4), elements(4), elements(4))
def test_ring_laws(x, y, z):
    assert ((x * y) * z).allclose(x * (y * z), atol=1e-9)
    assert (x * (y + z)).allclose(x * y + x * z, atol=1e-9)
    assert ((x + y) * z).allclose(x * z + y * z, atol=1e-9)


@pytest.mark.parametrize("k", range(1, 7))
def test_generators_anticommute(k):
    gens = [GrassmannElement.generator(k, i) for i in range(k)]
    for i, j in itertools.product(range(k), repeat=2):
        assert (gens[i] * gens[j] + gens[j] * gens[i]).allclose(GrassmannElement(k))
    top = GrassmannElement.scalar(k, 1.0)
    for g in gens:
        top = top * g
    assert top.top == 1.0
    assert GrassmannElement.monomial(k, list(range(k))[::-1]).top == (-1) ** (k * (k - 1) // 2)


@settings(max_examples=40, deadline=None)
@given(elements(5), elements(5))
def test_even_elements_commute(x, y):
    xe, ye = x.grade(0) + x.grade(2) + x.grade(4), y.grade(0) + y.grade(2) + y.grade(4)
    assert xe.is_even()
    assert (xe * ye).allclose(ye * xe, atol=1e-9)


@settings(max_examples=40, deadline=None)
@given(elements(4))
def test_soul_nilpotent(x):
    assert (x.soul() ** 5).allclose(GrassmannElement(4))


def test_apply_function_exp():
    k = 4
    t = [GrassmannElement.generator(k, i) for i in range(k)]
    x = GrassmannElement.scalar(k, 0.3) + t[0] * t[1] * 2.0 + t[2] * t[3]
    e = apply_function([np.exp(0.3)] * 5, x)
    # exp(a + n) = e^a (1 + n + n^2/2) and n^2 = 4 t0t1t2t3
    expect = (GrassmannElement.scalar(k, 1.0) + x.soul() + x.soul() * x.soul() * 0.5) * np.exp(0.3)
    assert e.allclose(expect)
    assert e.top == pytest.approx(2.0 * np.exp(0.3))


def test_array_coefficients():
    k = 2
    c = np.linspace(0, 1, 5)
    x = GrassmannElement.generator(k, 0) * c
    y = GrassmannElement.generator(k, 1) * (2 * c)
    assert np.allclose((x * y).top, 2 * c * c)
    assert np.allclose((y * x).top, -2 * c * c)
