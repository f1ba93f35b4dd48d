"""Initial states: t-V thermal density matrices and the staggered product state."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as la

from .fock import DensityMatrix, FockOperator, StateError, basis_state, space_for
from .lattice import BipartiteLattice


@dataclass(frozen=True)
class ModelParams:
    t: float = 1.0
    V: float = 10.0
    beta: float = 1.0

    def __post_init__(self):
        for name in ("t", "V", "beta"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.beta < 0:
            raise ValueError(f"beta must be >= 0, got {self.beta}")


def tv_hamiltonian(lat: BipartiteLattice, params: ModelParams) -> FockOperator:
    fs = space_for(lat)
    H = fs.zero()
    for x, y in lat.pairs:
        hop = fs.cdag(x) @ fs.c(y)
        H = H + (-params.t) * (hop + hop.dag()) + params.V * (fs.o(x) @ fs.o(y))
    return H


def thermal_state(H: FockOperator, beta: float) -> DensityMatrix:
    """``exp(-beta H) / Tr exp(-beta H)`` by dense Hermitian eigendecomposition."""
    if not np.isfinite(beta) or beta < 0:
        raise ValueError(f"beta must be finite and >= 0, got {beta}")
    h = H.toarray()
    if np.abs(h - h.conj().T).max() > 1e-12:
        raise StateError("thermal_state needs a Hermitian Hamiltonian")
    w, v = la.eigh(h)
    # shift by the lowest energy so the largest Boltzmann weight is exactly 1
    weights = np.exp(-beta * (w - w[0]))
    weights /= weights.sum()
    rho = (v * weights) @ v.conj().T
    rho = 0.5 * (rho + rho.conj().T)
    return DensityMatrix(H.n_sites, rho, label=f"thermal(beta={beta:g})")


def ground_state(H: FockOperator, degeneracy_tol: float = 1e-9) -> DensityMatrix:
    """Equal mixture over the lowest (possibly degenerate) eigenspace."""
    w, v = la.eigh(H.toarray())
    low = v[:, w - w[0] <= degeneracy_tol]
    rho = low @ low.conj().T / low.shape[1]
    return DensityMatrix(H.n_sites, 0.5 * (rho + rho.conj().T), label="ground")


def staggered_mask(lat: BipartiteLattice) -> int:
    """Occupation mask filling the eta=+1 sublattice (the one containing site 0)."""
    return int(sum(1 << x for x in range(lat.N) if lat.eta[x] == 1))


def staggered_state(lat: BipartiteLattice) -> DensityMatrix:
    return basis_state(lat.N, staggered_mask(lat), label="staggered")


def thermal_tv_state(lat: BipartiteLattice, params: ModelParams) -> DensityMatrix:
    return thermal_state(tv_hamiltonian(lat, params), params.beta)
