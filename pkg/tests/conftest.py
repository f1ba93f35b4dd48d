"""Reference constructions that share no code with the package."""

import sys
from functools import reduce

import numpy as np
import pytest
import scipy.linalg as la

_A = np.array([[0, 1], [0, 0]], dtype=complex)  # |1> -> |0>
_Z = np.diag([1.0, -1.0]).astype(complex)
_I = np.eye(2, dtype=complex)


def kron_annihilation(n: int, site: int) -> np.ndarray:
    """Jordan-Wigner ``c_site`` by Kronecker products; site b is bit b of the basis index."""
    factors = []
    for pos in range(n):
        s = n - 1 - pos  # the leftmost factor is the most significant bit
        factors.append(_A if s == site else (_Z if s < site else _I))
    return reduce(np.kron, factors)


def dense_liouvillian(jumps) -> np.ndarray:
    """Column-stacking superoperator of ``sum L rho L^dag - 1/2 {L^dag L, rho}``."""
    d = jumps[0].shape[0]
    eye = np.eye(d)
    S = np.zeros((d * d, d * d), dtype=complex)
    for L in jumps:
        LdL = L.conj().T @ L
        S += np.kron(L.conj(), L) - 0.5 * np.kron(eye, LdL) - 0.5 * np.kron(LdL.T, eye)
    return S


def evolve_exact(jumps, rho0: np.ndarray, tau: float) -> np.ndarray:
    d = rho0.shape[0]
    v = la.expm(dense_liouvillian(jumps) * tau) @ rho0.reshape(-1, order="F")
    return v.reshape(d, d, order="F")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
