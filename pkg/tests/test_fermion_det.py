import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from esqlab.fermion_det import (
    CostGuardError,
    FermionKernel,
    amplitude_sweep,
    export_sweep_csv,
    fermion_covariance,
    fredholm_series,
    kernel_determinant,
)
from esqlab.quadrature import DiskQuadrature

Q = DiskQuadrature(7.0, 8, 8, 12)


def gauss(a=1.0):
    return lambda x: a * np.exp(-np.sum(x * x, axis=-1))


def test_zero_kernel():
    k = FermionKernel(gauss(0.0), fermion_covariance(), Q)
    assert kernel_determinant(k) == 1.0
    for n in range(7):
        assert fredholm_series(k, n).value == 1.0


def test_first_order_term():
    S = fermion_covariance()
    k = FermionKernel(gauss(0.5), S, Q)
    # 1 + int g S(0): int exp(-|x|^2) = pi
    assert fredholm_series(k, 1).value == pytest.approx(1 + 0.5 * math.pi * S(np.zeros(1))[0], rel=1e-10)


@settings(max_examples=20, deadline=None)
@given(st.floats(-2.0, 2.0), st.floats(0.1, 3.0))
def test_rank_one_closed_form(a, c):
    k = FermionKernel(gauss(a), lambda r: np.full(np.shape(r), c), Q)
    assert kernel_determinant(k) == pytest.approx(1 + a * c * math.pi, rel=1e-10, abs=1e-12)


def test_series_converges_to_determinant():
    k = FermionKernel(gauss(2.0), fermion_covariance(), Q)
    res = fredholm_series(k, 6)
    assert len(res.terms) == 7
    assert abs(res.value - kernel_determinant(k)) <= 2 * res.last_term


def test_matrix_entries_match_callables():
    S = fermion_covariance()
    k = FermionKernel(gauss(), S, Q)
    x, _ = k.nodes
    i, j = 3, 40
    assert k.matrix[i, j] == pytest.approx(gauss()(x[i]) * S(np.linalg.norm(x[i] - x[j])))


def test_cost_guards():
    with pytest.raises(CostGuardError):
        fredholm_series(FermionKernel(gauss(), fermion_covariance(), Q), 7)
    with pytest.raises(CostGuardError):
        FermionKernel(gauss(), fermion_covariance(), DiskQuadrature(20.0, 64, 10, 64))


def test_sweep_and_hadamard_bound(tmp_path, cutoff):
    rows = amplitude_sweep(cutoff, np.linspace(0, 1, 4))
    for r in rows:
        assert r.within
        assert abs(r.determinant) <= math.exp(r.trace_bound) * (1 + 1e-12)
    export_sweep_csv(rows, tmp_path / "s.csv")
    assert (tmp_path / "s.csv").read_text().startswith("amplitude,series,determinant,gap,truncation_estimate")


@pytest.mark.slow
def test_refinement_stability(cutoff):
    k = FermionKernel.from_cutoff(cutoff, 1.0)
    d1, d2 = kernel_determinant(k), kernel_determinant(k.refined())
    # the C^1 kink of G_2 on the diagonal limits Nystrom convergence to ~1e-5 here
    assert abs(d1 - d2) / abs(d2) < 1e-4
