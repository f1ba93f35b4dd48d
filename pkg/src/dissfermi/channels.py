"""Quantum-jump operator families for purely dissipative fermion dynamics.

Each jump is stored with its site support and a builder taking a
:class:`~dissfermi.fock.FockSpace`, so the same jump can be realized on the
full lattice Fock space (master-equation oracle) or on a few-site local space
(closure generator).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

from .fock import FockOperator, FockSpace, fock_space, space_for
from .lattice import BipartiteLattice

SINGLE_SITE_LINEAR = "single_site_linear"
NN_LINEAR = "nn_linear"
NN_QUADRATIC = "nn_quadratic"
NN_CUBIC_FROZEN = "nn_cubic_frozen"
NN_CUBIC_HOPPING = "nn_cubic_hopping"

CHANNEL_SETS = (SINGLE_SITE_LINEAR, NN_LINEAR, NN_QUADRATIC, NN_CUBIC_FROZEN, NN_CUBIC_HOPPING)
NORMALIZED_SETS = (SINGLE_SITE_LINEAR, NN_LINEAR, NN_QUADRATIC)

ORDERED = "ordered"
UNORDERED = "unordered"

NORMALIZATION_TOL = 1e-12

# full-space jump matrices are sparse; beyond this the closure engine works locally only
MAX_FULL_SPACE_SITES = 16


class ChannelError(ValueError):
    pass


@dataclass(frozen=True)
class JumpSpec:
    label: tuple[int, ...]
    kind: int | str
    sites: tuple[int, ...]
    build: Callable[[FockSpace], FockOperator] = field(repr=False, compare=False)

    def on(self, fs: FockSpace) -> FockOperator:
        return self.build(fs)

    def local(self) -> FockOperator:
        return self.build(fock_space(tuple(sorted(self.sites))))


@dataclass(frozen=True, eq=False)
class LindbladChannelSet:
    name: str
    lattice: BipartiteLattice
    mu: float
    label_count: int
    specs: tuple[JumpSpec, ...]
    orientation: str = ORDERED

    @cached_property
    def jumps(self) -> list[tuple[tuple[int, ...], int | str, FockOperator]]:
        """``(label, type, L)`` on the full Fock space of the lattice."""
        if self.lattice.N > MAX_FULL_SPACE_SITES:
            raise ChannelError(
                f"full-space jumps are capped at {MAX_FULL_SPACE_SITES} sites, lattice has {self.lattice.N}"
            )
        fs = space_for(self.lattice)
        return [(s.label, s.kind, s.on(fs)) for s in self.specs]

    @property
    def operators(self) -> list[FockOperator]:
        return [L for _, _, L in self.jumps]

    @cached_property
    def decay_operator(self) -> FockOperator:
        """``sum L^dag L``."""
        fs = space_for(self.lattice)
        K = fs.zero()
        for L in self.operators:
            K = K + L.dag() @ L
        return K

    @cached_property
    def normalization_deviation(self) -> float:
        return verify_normalization(self)

    @property
    def normalized(self) -> bool:
        return self.normalization_deviation <= NORMALIZATION_TOL

    def __len__(self):
        return len(self.specs)


def single_site_linear(lat: BipartiteLattice, mu: float) -> LindbladChannelSet:
    specs = []
    for x in range(lat.N):
        specs.append(JumpSpec((x,), "+", (x,), lambda fs, x=x: mu * fs.cdag(x)))
        specs.append(JumpSpec((x,), "-", (x,), lambda fs, x=x: mu * fs.c(x)))
    return LindbladChannelSet(SINGLE_SITE_LINEAR, lat, mu, lat.N, tuple(specs))


def _ordered_pairs(lat: BipartiteLattice):
    for x, y in lat.pairs:
        yield x, y
        yield y, x


def nn_linear(lat: BipartiteLattice, mu: float) -> LindbladChannelSet:
    specs = []
    for x, y in _ordered_pairs(lat):
        specs.append(JumpSpec((x, y), 1, (x, y), lambda fs, x=x, y=y: (mu / 2) * (fs.c(x) + fs.cdag(y))))
        specs.append(JumpSpec((x, y), 2, (x, y), lambda fs, x=x, y=y: (mu / 2) * (fs.c(x) - fs.cdag(y))))
    return LindbladChannelSet(NN_LINEAR, lat, mu, len(lat.pairs), tuple(specs))


def nn_quadratic(lat: BipartiteLattice, mu: float) -> LindbladChannelSet:
    specs = []
    for x, y in lat.pairs:
        specs.append(JumpSpec((x, y), 1, (x, y), lambda fs, x=x, y=y: mu * (fs.cdag(x) @ fs.c(y))))
        specs.append(JumpSpec((x, y), 2, (x, y), lambda fs, x=x, y=y: mu * (fs.cdag(y) @ fs.c(x))))
        specs.append(
            JumpSpec((x, y), 3, (x, y), lambda fs, x=x, y=y: mu * (fs.identity() - fs.n(x) - fs.n(y)))
        )
    return LindbladChannelSet(NN_QUADRATIC, lat, mu, len(lat.pairs), tuple(specs))


def _pairs_for(lat: BipartiteLattice, orientation: str):
    if orientation == ORDERED:
        return list(_ordered_pairs(lat))
    if orientation == UNORDERED:
        return list(lat.pairs)
    raise ChannelError(f"unknown pair orientation {orientation!r}")


def nn_cubic_frozen(lat: BipartiteLattice, mu: float, orientation: str = ORDERED) -> LindbladChannelSet:
    pairs = _pairs_for(lat, orientation)
    specs = []
    for x, y in pairs:
        specs += [
            JumpSpec((x, y), 1, (x, y), lambda fs, x=x, y=y: mu * (fs.c(x) @ fs.n(x) @ fs.n(y))),
            JumpSpec((x, y), 2, (x, y), lambda fs, x=x, y=y: mu * (fs.cdag(x) @ fs.n(x) @ fs.n(y))),
            JumpSpec((x, y), 3, (x, y), lambda fs, x=x, y=y: mu * (fs.n(x) @ (fs.identity() - fs.n(y)))),
            JumpSpec((x, y), 4, (x, y), lambda fs, x=x, y=y: mu * ((fs.identity() - fs.n(x)) @ fs.n(y))),
        ]
    return LindbladChannelSet(NN_CUBIC_FROZEN, lat, mu, len(pairs), tuple(specs), orientation)


def nn_cubic_hopping(lat: BipartiteLattice, mu: float, orientation: str = ORDERED) -> LindbladChannelSet:
    pairs = _pairs_for(lat, orientation)
    specs = []
    for x, y in pairs:
        specs += [
            JumpSpec((x, y), 1, (x, y), lambda fs, x=x, y=y: mu * (fs.c(x) @ fs.n(x) @ fs.n(y))),
            JumpSpec((x, y), 2, (x, y), lambda fs, x=x, y=y: mu * (fs.cdag(x) @ fs.n(x) @ fs.n(y))),
            JumpSpec(
                (x, y), 3, (x, y),
                lambda fs, x=x, y=y: mu * (fs.cdag(y) @ fs.c(x) @ fs.n(x) @ (fs.identity() - fs.n(y))),
            ),
            JumpSpec(
                (x, y), 4, (x, y),
                lambda fs, x=x, y=y: mu * (fs.cdag(x) @ fs.c(y) @ (fs.identity() - fs.n(x)) @ fs.n(y)),
            ),
        ]
    return LindbladChannelSet(NN_CUBIC_HOPPING, lat, mu, len(pairs), tuple(specs), orientation)


_BUILDERS = {
    SINGLE_SITE_LINEAR: single_site_linear,
    NN_LINEAR: nn_linear,
    NN_QUADRATIC: nn_quadratic,
    NN_CUBIC_FROZEN: nn_cubic_frozen,
    NN_CUBIC_HOPPING: nn_cubic_hopping,
}


def build_channel_set(name: str, lat: BipartiteLattice, mu: float, **kw) -> LindbladChannelSet:
    try:
        builder = _BUILDERS[name]
    except KeyError:
        raise ChannelError(f"unknown channel set {name!r}; choose from {', '.join(CHANNEL_SETS)}") from None
    return builder(lat, mu, **kw)


def verify_normalization(cs: LindbladChannelSet) -> float:
    """Max-norm of ``sum L^dag L - mu^2 * label_count * 1``."""
    K = cs.decay_operator
    return (K - cs.mu**2 * cs.label_count).max_abs()
