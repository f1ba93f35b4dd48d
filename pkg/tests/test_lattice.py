import numpy as np
import pytest
from hypothesis import given, strategies as st

from dissfermi.lattice import (
    OPEN,
    PERIODIC,
    GeometryError,
    build_lattice,
    momentum,
    staggered_momentum,
)


def test_chain_bonds_and_signs():
    lat = build_lattice([6])
    assert lat.N == 6 and lat.m == 2 and lat.regular
    assert set(lat.pairs) == {(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 0)}
    assert lat.eta.tolist() == [1, -1, 1, -1, 1, -1]


def test_square_periodic():
    lat = build_lattice([4, 4])
    assert lat.N == 16 and lat.m == 4 and len(lat.pairs) == 32
    assert sorted(lat.neighbors(0)) == [1, 3, 4, 12]
    assert lat.label() == "4x4-periodic"


def test_open_ladder_mean_coordination():
    lat = build_lattice([2, 4], OPEN)
    assert len(lat.pairs) == 10
    assert lat.m == pytest.approx(2.5)
    assert not lat.regular
    assert lat.N * lat.m / 2 == len(lat.pairs)


@pytest.mark.parametrize(
    "dims,boundary", [([6], PERIODIC), ([2, 4], OPEN), ([4, 4], PERIODIC), ([3], OPEN), ([5, 3], OPEN)]
)
def test_every_bond_crosses_sublattices(dims, boundary):
    lat = build_lattice(dims, boundary)
    for x, y in lat.pairs:
        assert lat.eta[x] == -lat.eta[y]
    assert len(set(map(frozenset, lat.pairs))) == len(lat.pairs)


@pytest.mark.parametrize("dims,boundary", [([5], PERIODIC), ([2], PERIODIC), ([1], OPEN), ([2, 2, 2], OPEN),
                                           ([4], "twisted")])
def test_invalid_geometries(dims, boundary):
    with pytest.raises(GeometryError):
        build_lattice(dims, boundary)


def test_momentum_range():
    lat = build_lattice([8])
    assert momentum(lat, 2).p == pytest.approx((np.pi / 2,))
    assert staggered_momentum(lat).p == pytest.approx((np.pi,))
    for bad in (8, -1, (1, 1)):
        with pytest.raises(GeometryError):
            momentum(lat, bad)


@given(st.sampled_from([4, 6, 8]), st.sampled_from([4, 6]))
def test_phases_orthogonal(l1, l2):
    lat = build_lattice([l1, l2])
    ph = np.array([lat.phases(m) for m in lat.momenta()])
    np.testing.assert_allclose(ph.conj() @ ph.T, lat.N * np.eye(lat.N), atol=1e-10)


def test_staggered_phase_is_eta():
    for dims in ([8], [4, 4]):
        lat = build_lattice(dims)
        np.testing.assert_allclose(lat.phases(staggered_momentum(lat)), lat.eta, atol=1e-12)
