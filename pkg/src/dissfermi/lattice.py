"""Bipartite lattice geometry: site indexing, bonds, sublattice signs, momenta."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


class GeometryError(ValueError):
    """Raised for lattice shapes that are not valid bipartite geometries."""


PERIODIC = "periodic"
OPEN = "open"


@dataclass(frozen=True)
class MomentumVector:
    q: tuple[int, ...]
    p: tuple[float, ...]

    def __post_init__(self):
        if any(not 0.0 <= pi < 2 * np.pi for pi in self.p):
            raise GeometryError(f"momentum components {self.p} outside [0, 2pi)")


@dataclass(frozen=True)
class BipartiteLattice:
    """Hypercubic lattice in one or two dimensions with unit spacing.

    Sites are numbered row-major over coordinates, so for ``dims=(L1, L2)`` the
    site ``(i, j)`` has index ``i * L2 + j``. The sublattice sign of a site is
    ``(-1) ** sum(coords)``; site 0 is on the ``+1`` sublattice.
    """

    dims: tuple[int, ...]
    boundary: str = PERIODIC
    coords: np.ndarray = field(init=False, repr=False, compare=False)
    eta: np.ndarray = field(init=False, repr=False, compare=False)
    pairs: tuple[tuple[int, int], ...] = field(init=False, repr=False, compare=False)
    offsets: tuple[tuple[int, ...], ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        dims = tuple(int(L) for L in self.dims)
        object.__setattr__(self, "dims", dims)
        if not 1 <= len(dims) <= 2:
            raise GeometryError(f"only d=1 or d=2 lattices are supported, got d={len(dims)}")
        if self.boundary not in (PERIODIC, OPEN):
            raise GeometryError(f"unknown boundary {self.boundary!r}")
        if any(L < 2 for L in dims):
            raise GeometryError(f"every extent must be >= 2, got {dims}")
        if self.boundary == PERIODIC:
            if any(L % 2 for L in dims):
                raise GeometryError(f"periodic extents must be even to stay bipartite, got {dims}")
            if any(L < 4 for L in dims):
                raise GeometryError(
                    f"periodic extent 2 would duplicate bonds; use open boundary, got {dims}"
                )

        coords = np.array(list(itertools.product(*(range(L) for L in dims))), dtype=int)
        eta = np.where(coords.sum(axis=1) % 2 == 0, 1, -1)

        pairs = []
        for x, cx in enumerate(coords):
            for axis, L in enumerate(dims):
                cy = cx.copy()
                cy[axis] += 1
                if cy[axis] == L:
                    if self.boundary == OPEN:
                        continue
                    cy[axis] = 0
                pairs.append((x, self.index(cy, dims)))
        offsets = []
        for axis in range(len(dims)):
            for s in (1, -1):
                off = [0] * len(dims)
                off[axis] = s
                offsets.append(tuple(off))

        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "eta", eta)
        object.__setattr__(self, "pairs", tuple(pairs))
        object.__setattr__(self, "offsets", tuple(offsets))

    @staticmethod
    def index(coord: Sequence[int], dims: Sequence[int]) -> int:
        return int(np.ravel_multi_index(tuple(coord), tuple(dims)))

    @property
    def d(self) -> int:
        return len(self.dims)

    @property
    def N(self) -> int:
        return int(np.prod(self.dims))

    @property
    def periodic(self) -> bool:
        return self.boundary == PERIODIC

    @property
    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.N, dtype=int)
        for x, y in self.pairs:
            deg[x] += 1
            deg[y] += 1
        return deg

    @property
    def m(self) -> float:
        """Mean coordination number ``2 |pairs| / N``.

        Integral and equal to every site's degree for periodic lattices.
        """
        m = 2 * len(self.pairs) / self.N
        return int(m) if m == int(m) else m

    @property
    def regular(self) -> bool:
        deg = self.degrees
        return bool(np.all(deg == deg[0]))

    def neighbors(self, x: int) -> list[int]:
        out = []
        for a, b in self.pairs:
            if a == x:
                out.append(b)
            elif b == x:
                out.append(a)
        return out

    def label(self) -> str:
        return "x".join(str(L) for L in self.dims) + f"-{self.boundary}"

    def momenta(self) -> list[MomentumVector]:
        return [momentum(self, q) for q in itertools.product(*(range(L) for L in self.dims))]

    def phases(self, mom: MomentumVector) -> np.ndarray:
        """``exp(i p . x)`` for every site."""
        return np.exp(1j * (self.coords @ np.asarray(mom.p)))


def build_lattice(dims: Sequence[int] | int, boundary: str = PERIODIC) -> BipartiteLattice:
    if isinstance(dims, (int, np.integer)):
        dims = (int(dims),)
    return BipartiteLattice(tuple(dims), boundary)


def momentum(lat: BipartiteLattice, q: Sequence[int] | int) -> MomentumVector:
    if isinstance(q, (int, np.integer)):
        q = (int(q),)
    q = tuple(int(v) for v in q)
    if len(q) != lat.d:
        raise GeometryError(f"momentum index {q} does not match lattice dimension {lat.d}")
    for qi, L in zip(q, lat.dims):
        if not 0 <= qi < L:
            raise GeometryError(f"momentum index {q} out of range for extents {lat.dims}")
    p = tuple(2 * np.pi * qi / L for qi, L in zip(q, lat.dims))
    return MomentumVector(q, p)


def staggered_momentum(lat: BipartiteLattice) -> MomentumVector:
    return momentum(lat, tuple(L // 2 for L in lat.dims))
