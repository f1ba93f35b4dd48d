"""Density observables as Fock matrices and as coefficient vectors.

Every observable here is a polynomial of degree one or two in the shifted
occupations ``O_x = n_x - 1/2``. The one-point sector holds vectors ``v_x``
(coefficient of ``O_x``); the two-point sector holds ``v_xy`` over all ordered
pairs including the diagonal, flattened row-major to length ``N**2``. Since
``O_x**2 = 1/4``, a diagonal entry ``v_xx`` contributes ``v_xx / 4`` to the
identity component.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .fock import DensityMatrix, FockOperator, fock_space, space_for
from .lattice import BipartiteLattice, MomentumVector, momentum

ONE_POINT = "one-point"
TWO_POINT = "two-point"

STAGGERED_MAGNETIZATION = "staggered_magnetization"
UNIFORM_MAGNETIZATION = "uniform_magnetization"
STAGGERED_SUSCEPTIBILITY = "staggered_susceptibility"
UNIFORM_SUSCEPTIBILITY = "uniform_susceptibility"
FOURIER_MODE = "fourier_mode"
STRUCTURE_FACTOR = "structure_factor"

_SECTOR = {
    STAGGERED_MAGNETIZATION: ONE_POINT,
    UNIFORM_MAGNETIZATION: ONE_POINT,
    FOURIER_MODE: ONE_POINT,
    STAGGERED_SUSCEPTIBILITY: TWO_POINT,
    UNIFORM_SUSCEPTIBILITY: TWO_POINT,
    STRUCTURE_FACTOR: TWO_POINT,
}
_SHORT = {
    STAGGERED_MAGNETIZATION: "O",
    UNIFORM_MAGNETIZATION: "O_u",
    STAGGERED_SUSCEPTIBILITY: "chi_s",
    UNIFORM_SUSCEPTIBILITY: "chi_u",
    FOURIER_MODE: "F",
    STRUCTURE_FACTOR: "S",
}


class ObservableError(ValueError):
    pass


@dataclass(frozen=True)
class ObservableKind:
    name: str
    q: Optional[tuple[int, ...]] = None

    def __post_init__(self):
        if self.name not in _SECTOR:
            raise ObservableError(f"unknown observable {self.name!r}")
        needs_q = self.name in (FOURIER_MODE, STRUCTURE_FACTOR)
        if needs_q and self.q is None:
            raise ObservableError(f"{self.name} needs a momentum index")
        if not needs_q and self.q is not None:
            raise ObservableError(f"{self.name} takes no momentum index")
        if self.q is not None:
            object.__setattr__(self, "q", tuple(int(v) for v in self.q))

    @property
    def sector(self) -> str:
        return _SECTOR[self.name]

    @property
    def hermitian(self) -> bool:
        return self.name != FOURIER_MODE

    def momentum(self, lat: BipartiteLattice) -> MomentumVector:
        return momentum(lat, self.q)

    def __str__(self):
        if self.q is None:
            return self.name
        return f"{self.name}({','.join(map(str, self.q))})"

    @property
    def short(self) -> str:
        s = _SHORT[self.name]
        return s if self.q is None else f"{s}({','.join(map(str, self.q))})"


O = ObservableKind(STAGGERED_MAGNETIZATION)
O_U = ObservableKind(UNIFORM_MAGNETIZATION)
CHI_S = ObservableKind(STAGGERED_SUSCEPTIBILITY)
CHI_U = ObservableKind(UNIFORM_SUSCEPTIBILITY)


def fourier_mode(*q: int) -> ObservableKind:
    return ObservableKind(FOURIER_MODE, q)


def structure_factor(*q: int) -> ObservableKind:
    return ObservableKind(STRUCTURE_FACTOR, q)


_KIND_RE = re.compile(r"^\s*([a-z_]+)\s*(?:\(([\d\s,]*)\))?\s*$")


def parse_kind(text: str) -> ObservableKind:
    """Parse config names such as ``structure_factor(2)`` or ``fourier_mode(1,1)``."""
    m = _KIND_RE.match(text)
    if not m:
        raise ObservableError(f"cannot parse observable {text!r}")
    name, args = m.groups()
    q = None
    if args is not None:
        q = tuple(int(a) for a in args.replace(" ", "").split(",") if a)
    return ObservableKind(name, q)


@dataclass(frozen=True, eq=False)
class CoefficientVector:
    """Coefficients of an observable over ``{1, O_x}`` or ``{1, O_x O_y}``."""

    sector: str
    values: np.ndarray
    constant: complex = 0.0

    def __post_init__(self):
        vals = np.asarray(self.values)
        vals = vals.astype(complex) if np.iscomplexobj(vals) else vals.astype(float)
        object.__setattr__(self, "values", vals.ravel())
        if self.sector not in (ONE_POINT, TWO_POINT):
            raise ObservableError(f"unknown sector {self.sector!r}")
        if self.sector == TWO_POINT:
            n = int(round(np.sqrt(vals.size)))
            if n * n != vals.size:
                raise ObservableError("two-point vector length must be a perfect square")
        if not np.all(np.isfinite(self.values)) or not np.isfinite(self.constant):
            raise ObservableError("coefficient vector has non-finite entries")

    @property
    def n_sites(self) -> int:
        if self.sector == ONE_POINT:
            return self.values.size
        return int(round(np.sqrt(self.values.size)))

    @property
    def matrix(self) -> np.ndarray:
        """Two-point coefficients as an ``(N, N)`` array."""
        if self.sector != TWO_POINT:
            raise ObservableError("matrix view only exists for two-point vectors")
        n = self.n_sites
        return self.values.reshape(n, n)

    def identity_weight(self) -> complex:
        """Total coefficient of the identity, diagonal pairs included."""
        if self.sector == TWO_POINT:
            return self.constant + np.trace(self.matrix) / 4
        return self.constant

    def symmetrized(self) -> "CoefficientVector":
        if self.sector == ONE_POINT:
            return self
        m = self.matrix
        return CoefficientVector(TWO_POINT, 0.5 * (m + m.T), self.constant)

    def real(self) -> "CoefficientVector":
        return CoefficientVector(self.sector, self.values.real, complex(self.constant).real)

    def evaluate(self, corr: "SiteCorrelations") -> complex:
        if self.sector == ONE_POINT:
            val = self.values @ corr.one
        else:
            val = self.values @ corr.two.ravel()
        return complex(val + self.constant)


@dataclass(frozen=True, eq=False)
class SiteCorrelations:
    """Expectations ``<O_x>`` and ``<O_x O_y>`` of a state (``two[x, x] = 1/4``)."""

    one: np.ndarray
    two: np.ndarray

    @classmethod
    def from_density(cls, rho: DensityMatrix) -> "SiteCorrelations":
        # O_x are diagonal, so only populations matter
        p = rho.populations()
        occ = fock_space(tuple(range(rho.n_sites))).occupations() - 0.5
        return cls(occ.T @ p, occ.T @ (occ * p[:, None]))

    @classmethod
    def from_mask(cls, n_sites: int, mask: int) -> "SiteCorrelations":
        occ = np.array([((mask >> x) & 1) - 0.5 for x in range(n_sites)])
        return cls(occ, np.outer(occ, occ))


def _site_weights(lat: BipartiteLattice, kind: ObservableKind) -> np.ndarray:
    if kind.name in (STAGGERED_MAGNETIZATION, STAGGERED_SUSCEPTIBILITY):
        return lat.eta.astype(float)
    if kind.name in (UNIFORM_MAGNETIZATION, UNIFORM_SUSCEPTIBILITY):
        return np.ones(lat.N)
    return lat.phases(kind.momentum(lat))


def to_coefficients(lat: BipartiteLattice, kind: ObservableKind) -> CoefficientVector:
    w = _site_weights(lat, kind)
    if kind.sector == ONE_POINT:
        if kind.name != FOURIER_MODE:
            w = w.real
        return CoefficientVector(ONE_POINT, w)
    if kind.name == STRUCTURE_FACTOR:
        # exp(ip(x-y)); the antisymmetric sine part multiplies commuting pairs and cancels
        return CoefficientVector(TWO_POINT, np.outer(w, w.conj()).real)
    return CoefficientVector(TWO_POINT, np.outer(w, w).real)


def reconstruct(lat: BipartiteLattice, vec: CoefficientVector) -> FockOperator:
    """Fock matrix of ``constant + sum v_x O_x`` or ``constant + sum v_xy O_x O_y``."""
    fs = space_for(lat)
    occ = fs.occupations() - 0.5
    if vec.values.size != (lat.N if vec.sector == ONE_POINT else lat.N**2):
        raise ObservableError("coefficient vector does not match lattice size")
    if vec.sector == ONE_POINT:
        diag = occ @ vec.values
    else:
        diag = np.einsum("ax,xy,ay->a", occ, vec.matrix, occ)
    return fs.diag(diag + vec.constant)


def build_observable(lat: BipartiteLattice, kind: ObservableKind) -> FockOperator:
    """Table observable as a Fock matrix, assembled from number operators."""
    fs = space_for(lat)
    w = _site_weights(lat, kind)
    ops = [fs.o(x) for x in range(lat.N)]
    if kind.sector == ONE_POINT:
        out = fs.zero()
        for x in range(lat.N):
            out = out + complex(w[x]) * ops[x]
        return out
    conj = kind.name == STRUCTURE_FACTOR
    out = fs.zero()
    for x in range(lat.N):
        for y in range(lat.N):
            c = w[x] * (np.conj(w[y]) if conj else w[y])
            out = out + complex(c) * (ops[x] @ ops[y])
    return out


def correlations(lat: BipartiteLattice, state) -> SiteCorrelations:
    """Site correlations from a DensityMatrix or an occupation mask."""
    if isinstance(state, (int, np.integer)):
        return SiteCorrelations.from_mask(lat.N, int(state))
    return SiteCorrelations.from_density(state)
