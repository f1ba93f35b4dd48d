"""Closed evolution of one- and two-point coefficient vectors.

The generator ``G`` is the matrix of the Heisenberg-picture dissipator restricted
to the span of ``{1, O_x}`` (one-point sector) or ``{1, O_x O_y}`` (two-point
sector). Coefficient vectors then obey ``dv/dtau = G v``; the identity component
obeys ``dc/dtau = const_row . v``.

Columns are computed numerically by applying the exact dissipator to each basis
operator and projecting the image back with trace inner products. Whatever
falls outside the span is the closure residual, so a generator is only trusted
when that residual vanishes.

The single-insertion matrix ``M`` (the sum ``L^dag (.) L`` without the
anticommutator term) of a normalized set equals ``G + mu^2 * label_count``, so
an eigenvalue ``g`` of ``G`` corresponds to ``lambda = mu^2 * label_count + g``
and to the decay rate ``-g``.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np
import scipy.linalg as la

from .channels import (
    NN_CUBIC_FROZEN,
    NN_CUBIC_HOPPING,
    NN_LINEAR,
    NN_QUADRATIC,
    SINGLE_SITE_LINEAR,
    LindbladChannelSet,
)
from .fock import fock_space, space_for
from .lattice import BipartiteLattice
from .master import MAX_ORACLE_SITES, adjoint_apply
from .model import staggered_mask
from .observables import (
    CHI_S,
    ONE_POINT,
    STAGGERED_MAGNETIZATION,
    TWO_POINT,
    UNIFORM_MAGNETIZATION,
    CoefficientVector,
    ObservableKind,
    SiteCorrelations,
    to_coefficients,
)

logger = logging.getLogger(__name__)

CLOSURE_TOL = 1e-12
SYMMETRY_TOL = 1e-10
KERNEL_TOL = 1e-10
DEGENERACY_TOL = 1e-9

# full-space column construction is used up to this size under method="auto"
AUTO_FULL_MAX_SITES = 8


class ClosureError(ValueError):
    pass


class NoClosedForm(ClosureError):
    pass


# -- Majorana monomial decomposition of local operators ----------------------------


@lru_cache(maxsize=8)
def _majorana_basis(k: int) -> tuple[np.ndarray, tuple[tuple[int, ...], ...]]:
    """All ``4**k`` ordered Majorana monomials on ``k`` modes, stacked."""
    fs = fock_space(tuple(range(k)))
    gam = []
    for j in range(k):
        c, cd = fs.c(j).toarray(), fs.cdag(j).toarray()
        gam += [c + cd, 1j * (cd - c)]
    dim = fs.dim
    mats, keys = [], []
    for r in range(2 * k + 1):
        for subset in itertools.combinations(range(2 * k), r):
            m = np.eye(dim, dtype=complex)
            for s in subset:
                m = m @ gam[s]
            mats.append(m)
            keys.append(subset)
    return np.array(mats), tuple(keys)


@lru_cache(maxsize=1)
def _o_scale() -> complex:
    """``kappa`` with ``O = kappa * gamma_0 gamma_1`` on one mode."""
    mats, keys = _majorana_basis(1)
    o = fock_space((0,)).o(0).toarray()
    idx = keys.index((0, 1))
    return complex(np.vdot(mats[idx], o) / 2)


def _decompose(X: np.ndarray, sites: Sequence[int]) -> dict[tuple[int, ...], complex]:
    """Majorana coefficients of a local operator, keyed by global Majorana indices."""
    k = len(sites)
    mats, keys = _majorana_basis(k)
    coeffs = np.einsum("kij,ij->k", mats.conj(), X) / X.shape[0]
    out = {}
    for key, a in zip(keys, coeffs):
        if a != 0:
            out[tuple(2 * sites[i // 2] + i % 2 for i in key)] = a
    return out


# -- generator -------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ClosureGenerator:
    sector: str
    G: np.ndarray
    const_row: np.ndarray
    residual: float
    channel: str
    lattice: BipartiteLattice
    mu: float
    label_count: int
    method: str = "local"

    @property
    def closed(self) -> bool:
        return self.residual <= CLOSURE_TOL

    @property
    def dim(self) -> int:
        return self.G.shape[0]

    @property
    def shift(self) -> float:
        """``mu^2 * label_count``, the offset between ``G`` and the insertion matrix."""
        return self.mu**2 * self.label_count

    @property
    def insertion_matrix(self) -> np.ndarray:
        return self.G + self.shift * np.eye(self.dim)

    def asymmetry(self) -> float:
        return float(np.abs(self.G - self.G.T).max()) if self.G.size else 0.0

    @property
    def symmetric(self) -> bool:
        return self.asymmetry() <= SYMMETRY_TOL


def _pair_index(n: int, x: int, y: int) -> int:
    return x * n + y


def _basis_supports(lat: BipartiteLattice, sector: str) -> list[tuple[int, ...]]:
    if sector == ONE_POINT:
        return [(x,) for x in range(lat.N)]
    return list(itertools.combinations(range(lat.N), 2))


def _images_local(cs: LindbladChannelSet, support: tuple[int, ...], by_site: dict,
                  cache: dict) -> dict[tuple[int, ...], complex]:
    """Majorana expansion of the dissipator image of ``prod_{x in support} O_x``."""
    groups: dict[frozenset, list] = {}
    for x in support:
        for i in by_site.get(x, ()):
            members = groups.setdefault(frozenset(cs.specs[i].sites), [])
            if i not in members:
                members.append(i)
    total: dict[tuple[int, ...], complex] = {}
    for sites, idxs in groups.items():
        local = tuple(sorted(set(support) | sites))
        fs = fock_space(local)
        B = np.diag(np.prod(fs.occupations()[:, [fs.mode(x) for x in support]] - 0.5, axis=1)).astype(complex)
        img = np.zeros_like(B)
        for i in idxs:
            key = (i, local)
            if key not in cache:
                L = cs.specs[i].on(fs).toarray()
                Ld = L.conj().T
                cache[key] = (L, Ld, Ld @ L)
            L, Ld, LdL = cache[key]
            img += Ld @ B @ L - 0.5 * (LdL @ B + B @ LdL)
        for key, a in _decompose(img, local).items():
            total[key] = total.get(key, 0.0) + a
    return total


def _project_local(cs, sector):
    lat = cs.lattice
    n = lat.N
    kappa = _o_scale()
    dim = n if sector == ONE_POINT else n * n
    G = np.zeros((dim, dim), dtype=complex)
    const = np.zeros(dim, dtype=complex)
    resid = 0.0
    by_site: dict[int, list[int]] = {}
    for i, spec in enumerate(cs.specs):
        for x in spec.sites:
            by_site.setdefault(x, []).append(i)
    cache: dict = {}
    for support in _basis_supports(lat, sector):
        coeffs = _images_local(cs, support, by_site, cache)
        col = np.zeros(dim, dtype=complex)
        c0 = 0.0
        out2 = 0.0
        for key, a in coeffs.items():
            if key == ():
                c0 += a
            elif sector == ONE_POINT and len(key) == 2 and key[1] == key[0] + 1 and key[0] % 2 == 0:
                col[key[0] // 2] += a / kappa
            elif (
                sector == TWO_POINT
                and len(key) == 4
                and key[0] % 2 == 0
                and key[1] == key[0] + 1
                and key[2] % 2 == 0
                and key[3] == key[2] + 1
            ):
                xa, xb = key[0] // 2, key[2] // 2
                w = a / kappa**2
                col[_pair_index(n, xa, xb)] += w / 2
                col[_pair_index(n, xb, xa)] += w / 2
            else:
                out2 += abs(a) ** 2
        resid = max(resid, np.sqrt(out2 * (1 << n)))
        if sector == ONE_POINT:
            G[:, support[0]] = col
            const[support[0]] = c0
        else:
            x, y = support
            for idx in (_pair_index(n, x, y), _pair_index(n, y, x)):
                G[:, idx] = col
                const[idx] = c0
    return G, const, resid


def _project_full(cs, sector):
    lat = cs.lattice
    n = lat.N
    fs = space_for(lat)
    occ = fs.occupations() - 0.5
    one = occ
    pairs = list(itertools.combinations(range(n), 2))
    two = np.stack([occ[:, a] * occ[:, b] for a, b in pairs], axis=1) if pairs else np.zeros((fs.dim, 0))
    dim = n if sector == ONE_POINT else n * n
    G = np.zeros((dim, dim), dtype=complex)
    const = np.zeros(dim, dtype=complex)
    resid = 0.0
    for support in _basis_supports(lat, sector):
        B = fs.diag(np.prod(occ[:, list(support)], axis=1))
        img = adjoint_apply(cs, B)
        d = img.diagonal()
        c0 = d.mean()
        if sector == ONE_POINT:
            # normalized-trace norms: <O_x O_x> = 1/4
            coef = one.T @ d / fs.dim * 4
            recon = c0 + one @ coef
        else:
            coef = two.T @ d / fs.dim * 16
            recon = c0 + two @ coef
        resid_op = img - fs.diag(recon)
        resid = max(resid, resid_op.norm())
        if sector == ONE_POINT:
            G[:, support[0]] = coef
            const[support[0]] = c0
        else:
            col = np.zeros(dim, dtype=complex)
            for (a, b), w in zip(pairs, coef):
                col[_pair_index(n, a, b)] += w / 2
                col[_pair_index(n, b, a)] += w / 2
            x, y = support
            for idx in (_pair_index(n, x, y), _pair_index(n, y, x)):
                G[:, idx] = col
                const[idx] = c0
    return G, const, resid


def build_generator(cs: LindbladChannelSet, lat: Optional[BipartiteLattice] = None, sector: str = TWO_POINT,
                    method: str = "auto") -> ClosureGenerator:
    """Closure generator of ``cs`` in the given sector.

    ``method`` is ``"full"`` (dissipator applied on the whole Fock space),
    ``"local"`` (few-site patches around each basis operator) or ``"auto"``.
    """
    lat = cs.lattice if lat is None else lat
    if lat != cs.lattice:
        raise ClosureError("channel set was built for a different lattice")
    if sector not in (ONE_POINT, TWO_POINT):
        raise ClosureError(f"unknown sector {sector!r}")
    if method == "auto":
        method = "full" if lat.N <= AUTO_FULL_MAX_SITES else "local"
    if method == "full":
        if lat.N > MAX_ORACLE_SITES:
            raise ClosureError(f"full-space generator construction is capped at {MAX_ORACLE_SITES} sites")
        G, const, resid = _project_full(cs, sector)
    elif method == "local":
        G, const, resid = _project_local(cs, sector)
    else:
        raise ClosureError(f"unknown construction method {method!r}")
    imag = max(np.abs(G.imag).max(initial=0.0), np.abs(const.imag).max(initial=0.0))
    if imag > CLOSURE_TOL:
        logger.warning("generator for %s has imaginary entries up to %.3e", cs.name, imag)
    gen = ClosureGenerator(sector, G.real.copy(), const.real.copy(), float(resid), cs.name, lat, cs.mu,
                           cs.label_count, method)
    if not gen.closed:
        logger.info("%s %s sector does not close: residual %.3e", cs.name, sector, resid)
    return gen


def closure_residual(cs: LindbladChannelSet, lat: Optional[BipartiteLattice] = None, sector: str = TWO_POINT,
                     method: str = "auto") -> float:
    return build_generator(cs, lat, sector, method).residual


# -- eigen-operators -----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class EigenOperatorBasis:
    """Orthonormal eigenvectors of a symmetric generator (columns of ``vectors``)."""

    generator: ClosureGenerator
    g: np.ndarray
    vectors: np.ndarray

    @property
    def rates(self) -> np.ndarray:
        return -self.g

    @property
    def insertion_eigenvalues(self) -> np.ndarray:
        """Eigenvalues of the single-insertion matrix, ``mu^2 * label_count + g``."""
        return self.generator.shift + self.g

    def expand(self, v: CoefficientVector) -> np.ndarray:
        """Expansion coefficients ``psi`` of ``v`` over the eigen-operators."""
        if v.sector != self.generator.sector:
            raise ClosureError(f"{v.sector} vector given to a {self.generator.sector} basis")
        return self.vectors.T @ v.values

    def reconstruct(self, psi: np.ndarray, constant: complex = 0.0) -> CoefficientVector:
        return CoefficientVector(self.generator.sector, self.vectors @ psi, constant)

    def eigen_operator(self, i: int) -> CoefficientVector:
        return CoefficientVector(self.generator.sector, self.vectors[:, i])

    def groups(self, tol: float = DEGENERACY_TOL) -> list[np.ndarray]:
        """Index sets of (numerically) degenerate eigenvalues."""
        out, start = [], 0
        for i in range(1, len(self.g) + 1):
            if i == len(self.g) or self.g[i] - self.g[i - 1] > tol * max(1.0, abs(self.g[i])):
                out.append(np.arange(start, i))
                start = i
        return out


def eigen_basis(gen: ClosureGenerator) -> EigenOperatorBasis:
    asym = gen.asymmetry()
    if asym > SYMMETRY_TOL:
        raise ClosureError(f"generator is not symmetric (max asymmetry {asym:.3e})")
    g, V = la.eigh(0.5 * (gen.G + gen.G.T))
    return EigenOperatorBasis(gen, g, V)


def _phi(g: np.ndarray, tau: float) -> np.ndarray:
    """``(exp(g tau) - 1) / g`` with the ``g -> 0`` limit ``tau``."""
    out = np.full_like(g, tau, dtype=float)
    nz = np.abs(g) > 1e-14
    out[nz] = np.expm1(g[nz] * tau) / g[nz]
    return out


def evolve_coefficients(gen: ClosureGenerator, v0: CoefficientVector, tau_grid: Sequence[float],
                        basis: Optional[EigenOperatorBasis] = None) -> list[CoefficientVector]:
    """``v(tau)`` on the grid; eigen-operator expansion when ``G`` is symmetric."""
    if v0.sector != gen.sector:
        raise ClosureError(f"{v0.sector} vector given to a {gen.sector} generator")
    if v0.values.size != gen.dim:
        raise ClosureError("coefficient vector does not match generator dimension")
    out = []
    if basis is None and gen.symmetric:
        basis = eigen_basis(gen)
    if basis is not None:
        psi = basis.expand(v0)
        hV = gen.const_row @ basis.vectors
        for tau in tau_grid:
            vals = basis.vectors @ (np.exp(basis.g * tau) * psi)
            c = v0.constant + hV @ (_phi(basis.g, tau) * psi)
            out.append(CoefficientVector(gen.sector, vals, c))
        return out
    # non-symmetric generator: exponentiate the generator augmented with the identity row
    d = gen.dim
    A = np.zeros((d + 1, d + 1))
    A[:d, :d] = gen.G
    A[d, :d] = gen.const_row
    y0 = np.concatenate([v0.values, [v0.constant]])
    for tau in tau_grid:
        y = la.expm(A * tau) @ y0
        out.append(CoefficientVector(gen.sector, y[:d], y[d]))
    return out


def coefficient_series(gen: ClosureGenerator, kind: ObservableKind, corr: SiteCorrelations,
                       tau_grid: Sequence[float], basis: Optional[EigenOperatorBasis] = None) -> np.ndarray:
    """Expectation of ``kind`` along the grid, evaluated on fixed initial correlations."""
    v0 = to_coefficients(gen.lattice, kind)
    return np.array([v.evaluate(corr) for v in evolve_coefficients(gen, v0, tau_grid, basis)])


# -- closed-form decay laws ----------------------------------------------------------


@dataclass(frozen=True)
class DecayLaw:
    """``value(tau) = exp(-rate tau) (value(0) - constant) + constant``."""

    rate: float
    constant: float = 0.0
    note: str = ""

    def __call__(self, tau, value0):
        tau = np.asarray(tau, dtype=float)
        return np.exp(-self.rate * tau) * (value0 - self.constant) + self.constant


def _require_regular(lat, name):
    if not lat.regular:
        raise NoClosedForm(f"{name} has a single decay rate only on lattices with uniform coordination")


def quadratic_mode_rate(lat: BipartiteLattice, p: Sequence[float], mu: float = 1.0) -> float:
    """``mu^2 * sum over neighbor offsets of (1 - cos p.alpha)``."""
    return float(mu**2 * sum(1 - np.cos(np.dot(p, a)) for a in lat.offsets))


def analytic_rate(set_name: str, lat: BipartiteLattice, kind: ObservableKind, mu: float = 1.0) -> DecayLaw:
    mu2 = mu**2
    one = kind.sector == ONE_POINT
    quarter = lat.N / 4
    if set_name == SINGLE_SITE_LINEAR:
        return DecayLaw(2 * mu2, 0.0) if one else DecayLaw(4 * mu2, quarter)
    if set_name == NN_LINEAR:
        _require_regular(lat, set_name)
        m = lat.m
        return DecayLaw(m * mu2, 0.0) if one else DecayLaw(2 * m * mu2, quarter)
    if set_name == NN_QUADRATIC:
        if not one:
            raise NoClosedForm(
                "two-point observables under nn_quadratic decay as a sum of exponentials; "
                "use evolve_coefficients"
            )
        _require_regular(lat, set_name)
        if kind.name == STAGGERED_MAGNETIZATION:
            return DecayLaw(2 * lat.m * mu2, 0.0)
        if kind.name == UNIFORM_MAGNETIZATION:
            return DecayLaw(0.0, 0.0)
        if not lat.periodic:
            raise NoClosedForm("Fourier-mode rates need a translation-invariant lattice")
        return DecayLaw(quadratic_mode_rate(lat, kind.momentum(lat).p, mu), 0.0)
    if set_name == NN_CUBIC_FROZEN and kind.name == STAGGERED_MAGNETIZATION:
        return DecayLaw(0.0, 0.0, note="stated law, not derived")
    if set_name == NN_CUBIC_HOPPING and kind.name == STAGGERED_MAGNETIZATION:
        _require_regular(lat, set_name)
        return DecayLaw(2 * lat.m * mu2, 0.0, note="stated law, not derived")
    raise NoClosedForm(f"no closed-form law for {kind} under {set_name}")


# -- dominant mode and steady state --------------------------------------------------


@dataclass(frozen=True, eq=False)
class DominantMode:
    insertion_eigenvalue: float
    rate: float
    vector: CoefficientVector
    overlap: float
    multiplicity: int
    tie: bool


def dominant_mode(gen: ClosureGenerator, lat: Optional[BipartiteLattice] = None,
                  target: Optional[CoefficientVector] = None,
                  basis: Optional[EigenOperatorBasis] = None) -> DominantMode:
    """Non-conserved eigenspace with the largest projection of the staggered pattern.

    Degenerate eigenvalues are treated as one eigenspace; the returned vector is
    the normalized projection of the target onto it.
    """
    if gen.sector != TWO_POINT:
        raise ClosureError("dominant mode is defined on the two-point sector")
    lat = gen.lattice if lat is None else lat
    basis = eigen_basis(gen) if basis is None else basis
    t = (to_coefficients(lat, CHI_S) if target is None else target).values
    best = None
    for idx in basis.groups():
        g = basis.g[idx].mean()
        if abs(g) <= KERNEL_TOL:
            continue
        proj = basis.vectors[:, idx] @ (basis.vectors[:, idx].T @ t)
        ov = float(np.linalg.norm(proj))
        best = best or []
        best.append((ov, -g, idx, proj))
    if not best:
        raise ClosureError("generator has no decaying modes")
    top = max(ov for ov, *_ in best)
    cands = [b for b in best if b[0] >= top * (1 - 1e-9)]
    ov, rate, idx, proj = min(cands, key=lambda b: b[1])
    vec = CoefficientVector(TWO_POINT, proj / ov if ov > 0 else basis.vectors[:, idx[0]])
    return DominantMode(float(gen.shift - rate), float(rate), vec, ov, len(idx), len(cands) > 1)


def staggered_correlations(lat: BipartiteLattice) -> SiteCorrelations:
    return SiteCorrelations.from_mask(lat.N, staggered_mask(lat))


def steady_state_vector(gen: ClosureGenerator, v0: CoefficientVector,
                        basis: Optional[EigenOperatorBasis] = None) -> CoefficientVector:
    """``lim_{tau -> inf} v(tau)``, identity component included."""
    basis = eigen_basis(gen) if basis is None else basis
    psi = basis.expand(v0)
    kern = np.abs(basis.g) <= KERNEL_TOL
    hV = gen.const_row @ basis.vectors
    if np.any(np.abs(hV[kern] * psi[kern]) > KERNEL_TOL):
        raise ClosureError("identity component grows without bound; no steady state")
    decay = ~kern
    const = v0.constant + np.sum(hV[decay] * psi[decay] * (-1.0 / basis.g[decay]))
    return CoefficientVector(gen.sector, basis.vectors[:, kern] @ psi[kern], const)


def steady_state_value(gen: ClosureGenerator, v0: CoefficientVector,
                       lat_or_corr: BipartiteLattice | SiteCorrelations | None = None,
                       basis: Optional[EigenOperatorBasis] = None) -> float:
    """Long-time limit of the observable ``v0``, by default from the staggered state."""
    if lat_or_corr is None or isinstance(lat_or_corr, BipartiteLattice):
        corr = staggered_correlations(gen.lattice if lat_or_corr is None else lat_or_corr)
    else:
        corr = lat_or_corr
    return float(steady_state_vector(gen, v0, basis).evaluate(corr).real)
