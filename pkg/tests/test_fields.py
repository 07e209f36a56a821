import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from esqlab.fields import (
    Field,
    GridSpec,
    apply_fractional_inverse,
    apply_helmholtz,
    export_slice_csv,
    lattice_covariance,
    lattice_integral,
    lattice_variance,
    load_field,
    replica_seed,
    sample_white_noise,
    save_field,
    zero_noise,
)


def test_grid_validation():
    for bad in (dict(L=-1, N=16), dict(L=1, N=12), dict(L=1, N=4), dict(L=1, N=16, m2=0)):
        with pytest.raises(ValueError):
            GridSpec(**bad)


def test_coordinates_put_origin_first():
    g = GridSpec(8.0, 16)
    assert g.coords[0] == 0.0
    assert g.radius_sq[0, 0] == 0.0
    assert g.a == 0.5


def test_helmholtz_inverts():
    g = GridSpec(10.0, 32, n=2)
    x = sample_white_noise(g, 3).field
    back = apply_helmholtz(apply_fractional_inverse(x, 1.0))
    assert np.allclose(back.values, x.values, atol=1e-10)


def test_noise_is_deterministic_and_scaled():
    g = GridSpec(16.0, 64)
    a = sample_white_noise(g, 42).field.values
    b = sample_white_noise(g, 42).field.values
    assert np.array_equal(a, b)
    assert np.var(a) * g.a**2 == pytest.approx(1.0, rel=0.05)
    assert not np.array_equal(a, sample_white_noise(g, 43).field.values)
    assert zero_noise(g).field.sup_norm() == 0.0


def test_replica_seeds_distinct():
    seeds = {replica_seed(7, i) for i in range(1000)}
    assert len(seeds) == 1000
    assert replica_seed(7, 3) == replica_seed(7, 3) != replica_seed(8, 3)


def test_lattice_variance_close_to_continuum():
    assert lattice_variance(GridSpec(16.0, 256)) == pytest.approx(1 / (4 * math.pi), rel=0.01)


def test_lattice_covariance_matches_variance():
    g = GridSpec(16.0, 64)
    C = lattice_covariance(g)
    assert C[0, 0] == pytest.approx(lattice_variance(g), rel=1e-12)
    assert np.allclose(C, C.T)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000))
def test_covariance_is_empirical(seed):
    # E[I xi(0) I xi(x)] reproduced by the spectral identity on one draw:
    # the lattice sum of I xi against any field equals the pairing of xi with I of it
    g = GridSpec(8.0, 16)
    xi = sample_white_noise(g, seed).field
    eta = sample_white_noise(g, seed + 1).field
    lhs = np.sum(apply_fractional_inverse(xi, 1.0).values * eta.values)
    rhs = np.sum(xi.values * apply_fractional_inverse(eta, 1.0).values)
    assert lhs == pytest.approx(rhs, rel=1e-9, abs=1e-9)


def test_lattice_integral_of_constant(cutoff):
    g = GridSpec(32.0, 128)
    one = Field(g, np.ones(g.shape))
    assert lattice_integral(one)[0] == pytest.approx(32.0**2)
    # int f dx for exp(-sqrt(1+r^2)) is 4 pi / e
    assert lattice_integral(one, cutoff)[0] == pytest.approx(4 * math.pi / math.e, rel=1e-3)


def test_field_roundtrip(tmp_path):
    g = GridSpec(5.0, 16, n=2, m2=0.7)
    f = sample_white_noise(g, 1).field
    save_field(f, tmp_path / "f.esqf")
    h = load_field(tmp_path / "f.esqf")
    assert h.grid == g and np.array_equal(h.values, f.values)
    (tmp_path / "bad").write_bytes(b"XXXX\x01\x00<" + b"\x00" * 40)
    with pytest.raises(ValueError):
        load_field(tmp_path / "bad")


def test_slice_csv(tmp_path):
    g = GridSpec(4.0, 8)
    f = Field(g, np.arange(64.0).reshape(1, 8, 8))
    export_slice_csv(f, tmp_path / "s.csv")
    rows = (tmp_path / "s.csv").read_text().splitlines()
    xs = [float(r.split(",")[0]) for r in rows[1:]]
    assert xs == sorted(xs) and len(xs) == 8


def test_field_shape_check():
    with pytest.raises(ValueError):
        Field(GridSpec(4.0, 8), np.zeros((2, 8, 8)))
