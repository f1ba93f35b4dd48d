"""Fermionic operators on the full 2^N Fock space.

Basis states are occupation bit masks: bit ``b`` of the mask is the occupation of
the ``b``-th mode of the space. The Jordan-Wigner string of ``c_x`` counts the
occupied modes of lower index.

A :class:`FockSpace` may span a subset of lattice sites (ordered by label).
The closure engine uses these small local spaces; the CAR algebra on a subset
of modes is faithfully represented either way.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Union

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla


class DimensionError(ValueError):
    pass


class StateError(ValueError):
    pass


Matrix = Union[sp.spmatrix, np.ndarray]


def _as_matrix(mat):
    if sp.issparse(mat):
        return sp.csr_matrix(mat, dtype=complex)
    # sparse + dense yields np.matrix
    return np.asarray(mat, dtype=complex).view(np.ndarray)


@dataclass(frozen=True, eq=False)
class FockOperator:
    """Linear operator on the Fock space of ``n_sites`` modes.

    ``mat`` is a scipy sparse matrix or a dense ndarray; arithmetic keeps sparse
    operands sparse and densifies as soon as one operand is dense.
    """

    n_sites: int
    mat: Matrix

    def __post_init__(self):
        object.__setattr__(self, "mat", _as_matrix(self.mat))
        if self.mat.shape != (self.dim, self.dim):
            raise DimensionError(f"matrix shape {self.mat.shape} does not fit {self.n_sites} modes")

    @property
    def dim(self) -> int:
        return 1 << self.n_sites

    @property
    def is_sparse(self) -> bool:
        return sp.issparse(self.mat)

    def _check(self, other: "FockOperator"):
        if not isinstance(other, FockOperator):
            raise TypeError(f"expected FockOperator, got {type(other).__name__}")
        if other.n_sites != self.n_sites:
            raise DimensionError(f"operators act on {self.n_sites} and {other.n_sites} modes")

    def __add__(self, other):
        if np.isscalar(other):
            return self + other * identity(self.n_sites)
        self._check(other)
        return FockOperator(self.n_sites, self.mat + other.mat)

    __radd__ = __add__

    def __sub__(self, other):
        return self + (-1) * other

    def __rsub__(self, other):
        return (-1) * self + other

    def __neg__(self):
        return FockOperator(self.n_sites, -self.mat)

    def __mul__(self, z):
        if not np.isscalar(z):
            return NotImplemented
        return FockOperator(self.n_sites, self.mat * z)

    __rmul__ = __mul__

    def __truediv__(self, z):
        return self * (1.0 / z)

    def __matmul__(self, other):
        self._check(other)
        return FockOperator(self.n_sites, self.mat @ other.mat)

    def dag(self) -> "FockOperator":
        return FockOperator(self.n_sites, self.mat.conj().T)

    def toarray(self) -> np.ndarray:
        return self.mat.toarray() if self.is_sparse else np.array(self.mat)

    def dense(self) -> "FockOperator":
        return FockOperator(self.n_sites, self.toarray())

    def diagonal(self) -> np.ndarray:
        return np.asarray(self.mat.diagonal())

    def tr(self) -> complex:
        return complex(self.mat.diagonal().sum())

    def norm(self) -> float:
        """Frobenius norm."""
        if self.is_sparse:
            return float(spla.norm(self.mat))
        return float(np.linalg.norm(self.mat))

    def max_abs(self) -> float:
        if self.is_sparse:
            return float(abs(self.mat).max()) if self.mat.nnz else 0.0
        return float(np.abs(self.mat).max()) if self.mat.size else 0.0


class DensityMatrix(FockOperator):
    """Hermitian, positive semidefinite, unit-trace dense state.

    ``atol`` loosens the invariant checks for states produced by integration.
    """

    def __init__(self, n_sites: int, mat: Matrix, label: str = "", atol: float = 1e-12):
        mat = mat.toarray() if sp.issparse(mat) else np.asarray(mat, dtype=complex)
        super().__init__(n_sites, mat)
        object.__setattr__(self, "label", label)
        herm = np.abs(self.mat - self.mat.conj().T).max()
        if herm > atol:
            raise StateError(f"density matrix not Hermitian (deviation {herm:.3e})")
        trace_err = abs(np.trace(self.mat) - 1.0)
        if trace_err > atol:
            raise StateError(f"density matrix trace deviates from 1 by {trace_err:.3e}")
        w_min = np.linalg.eigvalsh(0.5 * (self.mat + self.mat.conj().T)).min()
        if w_min < -max(1e-10, 100 * atol):
            raise StateError(f"density matrix has negative eigenvalue {w_min:.3e}")

    def populations(self) -> np.ndarray:
        """Diagonal of the state in the occupation basis."""
        return np.real(np.diag(self.mat))


class FockSpace:
    """Creation/annihilation/number operators for an ordered list of site labels."""

    def __init__(self, sites: Iterable[int]):
        self.sites = tuple(int(s) for s in sites)
        if len(set(self.sites)) != len(self.sites):
            raise DimensionError(f"repeated site labels {self.sites}")
        self._mode = {s: k for k, s in enumerate(self.sites)}
        self.n_modes = len(self.sites)
        self.dim = 1 << self.n_modes
        self.masks = np.arange(self.dim, dtype=np.int64)

    def mode(self, x: int) -> int:
        try:
            return self._mode[int(x)]
        except KeyError:
            raise DimensionError(f"site {x} not in Fock space over sites {self.sites}") from None

    def c(self, x: int) -> FockOperator:
        k = self.mode(x)
        occupied = (self.masks >> k) & 1 == 1
        cols = self.masks[occupied]
        rows = cols ^ (1 << k)
        below = np.bitwise_count(cols & ((1 << k) - 1))
        amps = np.where(below % 2 == 0, 1.0, -1.0)
        mat = sp.csr_matrix((amps, (rows, cols)), shape=(self.dim, self.dim), dtype=complex)
        return FockOperator(self.n_modes, mat)

    def cdag(self, x: int) -> FockOperator:
        return self.c(x).dag()

    def n(self, x: int) -> FockOperator:
        k = self.mode(x)
        occ = ((self.masks >> k) & 1).astype(float)
        return FockOperator(self.n_modes, sp.diags(occ, format="csr", dtype=complex))

    def o(self, x: int) -> FockOperator:
        """``n_x - 1/2``."""
        k = self.mode(x)
        occ = ((self.masks >> k) & 1) - 0.5
        return FockOperator(self.n_modes, sp.diags(occ, format="csr", dtype=complex))

    def identity(self) -> FockOperator:
        return identity(self.n_modes)

    def zero(self) -> FockOperator:
        return FockOperator(self.n_modes, sp.csr_matrix((self.dim, self.dim), dtype=complex))

    def diag(self, values: np.ndarray) -> FockOperator:
        return FockOperator(self.n_modes, sp.diags(np.asarray(values), format="csr", dtype=complex))

    def occupations(self) -> np.ndarray:
        """``(dim, n_modes)`` array of occupation numbers per basis mask."""
        k = np.arange(self.n_modes)
        return ((self.masks[:, None] >> k[None, :]) & 1).astype(float)


@lru_cache(maxsize=64)
def fock_space(sites: tuple[int, ...]) -> FockSpace:
    return FockSpace(sites)


def space_for(lat) -> FockSpace:
    return fock_space(tuple(range(lat.N)))


def identity(n_sites: int) -> FockOperator:
    return FockOperator(n_sites, sp.identity(1 << n_sites, dtype=complex, format="csr"))


def _check_site(lat, x):
    if not 0 <= int(x) < lat.N:
        raise DimensionError(f"site {x} outside lattice with {lat.N} sites")


def annihilation(lat, x: int) -> FockOperator:
    _check_site(lat, x)
    return space_for(lat).c(x)


def creation(lat, x: int) -> FockOperator:
    _check_site(lat, x)
    return space_for(lat).cdag(x)


def number(lat, x: int) -> FockOperator:
    _check_site(lat, x)
    return space_for(lat).n(x)


def add(a: FockOperator, b: FockOperator) -> FockOperator:
    return a + b


def scale(z: complex, a: FockOperator) -> FockOperator:
    return z * a


def multiply(a: FockOperator, b: FockOperator) -> FockOperator:
    return a @ b


def adjoint(a: FockOperator) -> FockOperator:
    return a.dag()


def commutator(a: FockOperator, b: FockOperator) -> FockOperator:
    return a @ b - b @ a


def anticommutator(a: FockOperator, b: FockOperator) -> FockOperator:
    return a @ b + b @ a


def trace(a: FockOperator) -> complex:
    return a.tr()


def expect(a: FockOperator, rho: FockOperator) -> complex:
    """``Tr(A rho)`` without forming the product."""
    a._check(rho)
    am = a.mat
    rm = rho.toarray()
    if sp.issparse(am):
        return complex(am.multiply(rm.T).sum())
    return complex(np.einsum("ij,ji->", am, rm))


def basis_state(n_sites: int, mask: int, label: str = "") -> DensityMatrix:
    """Pure projector onto one occupation mask."""
    dim = 1 << n_sites
    if not 0 <= mask < dim:
        raise DimensionError(f"mask {mask} outside Fock space of {n_sites} modes")
    mat = np.zeros((dim, dim), dtype=complex)
    mat[mask, mask] = 1.0
    return DensityMatrix(n_sites, mat, label=label)


def maximally_mixed(n_sites: int) -> DensityMatrix:
    dim = 1 << n_sites
    return DensityMatrix(n_sites, np.eye(dim, dtype=complex) / dim, label="maximally-mixed")


def random_density(n_sites: int, seed: int = 0) -> DensityMatrix:
    """Full-rank state ``W W^dag / Tr`` from a seeded complex Gaussian ``W``."""
    rng = np.random.default_rng(seed)
    dim = 1 << n_sites
    w = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    rho = w @ w.conj().T
    rho /= np.trace(rho).real
    return DensityMatrix(n_sites, 0.5 * (rho + rho.conj().T), label=f"random(seed={seed})")
