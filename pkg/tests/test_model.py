import numpy as np
import pytest
import scipy.linalg as la

from conftest import kron_annihilation
from dissfermi.fock import FockOperator, StateError, expect
from dissfermi.lattice import OPEN, build_lattice
from dissfermi.master import observable_matrix
from dissfermi.model import (
    ModelParams,
    ground_state,
    staggered_mask,
    staggered_state,
    thermal_state,
    thermal_tv_state,
    tv_hamiltonian,
)
from dissfermi.observables import CHI_S, O


def reference_tv(n, pairs, t, V):
    c = [kron_annihilation(n, x) for x in range(n)]
    o = [cx.conj().T @ cx - 0.5 * np.eye(1 << n) for cx in c]
    H = np.zeros((1 << n, 1 << n), dtype=complex)
    for x, y in pairs:
        hop = c[x].conj().T @ c[y]
        H += -t * (hop + hop.conj().T) + V * o[x] @ o[y]
    return H


@pytest.mark.parametrize("dims,boundary", [([4], "periodic"), ([2, 3], OPEN)])
def test_hamiltonian_matches_reference(dims, boundary):
    lat = build_lattice(dims, boundary)
    H = tv_hamiltonian(lat, ModelParams(t=0.7, V=3.0))
    np.testing.assert_allclose(H.toarray(), reference_tv(lat.N, lat.pairs, 0.7, 3.0), atol=1e-14)


def test_thermal_state_matches_matrix_exponential():
    lat = build_lattice([4])
    H = tv_hamiltonian(lat, ModelParams())
    rho = thermal_state(H, 0.8)
    ref = la.expm(-0.8 * H.toarray())
    np.testing.assert_allclose(rho.toarray(), ref / np.trace(ref), atol=1e-12)


def test_zero_beta_is_maximally_mixed():
    lat = build_lattice([4])
    rho = thermal_tv_state(lat, ModelParams(beta=0.0))
    np.testing.assert_allclose(rho.toarray(), np.eye(16) / 16, atol=1e-15)


def test_large_beta_is_stable_and_ordered():
    lat = build_lattice([6])
    rho = thermal_tv_state(lat, ModelParams(beta=200.0))
    gs = ground_state(tv_hamiltonian(lat, ModelParams()))
    np.testing.assert_allclose(rho.toarray(), gs.toarray(), atol=1e-10)
    chi = expect(observable_matrix(lat, CHI_S), rho).real
    assert chi > 0.8 * lat.N**2 / 4


def test_staggered_state():
    lat = build_lattice([2, 4], OPEN)
    mask = staggered_mask(lat)
    assert bin(mask).count("1") == lat.N // 2
    assert expect(observable_matrix(lat, O), staggered_state(lat)).real == pytest.approx(lat.N / 2)


def test_rejects_bad_inputs():
    with pytest.raises(ValueError):
        ModelParams(beta=-1.0)
    with pytest.raises(ValueError):
        ModelParams(V=np.nan)
    with pytest.raises(StateError):
        thermal_state(FockOperator(1, np.array([[0, 1], [0, 0]])), 1.0)
