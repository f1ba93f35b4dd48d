"""Exact Lindblad master-equation integration (H = 0) on the full Fock space.

This is the brute-force reference against which the closure engine and the
closed-form decay laws are checked. Memory grows as ``4**N``; it is capped at
``MAX_ORACLE_SITES``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
from scipy.integrate import solve_ivp

from .channels import LindbladChannelSet
from .fock import DensityMatrix, DimensionError, FockOperator, expect
from .observables import ObservableKind, build_observable

logger = logging.getLogger(__name__)

MAX_ORACLE_SITES = 10
# dense diagonalization of the 4**N superoperator
MAX_SPECTRUM_SITES = 5

ADAPTIVE = "adaptive"
FIXED = "fixed"


class IntegrationError(RuntimeError):
    def __init__(self, message: str, tau_reached: float):
        super().__init__(f"{message} (reached tau={tau_reached:.6g})")
        self.tau_reached = tau_reached


@dataclass(frozen=True)
class EvolutionConfig:
    tau_grid: tuple[float, ...]
    tolerance: float = 1e-10
    max_step: float = np.inf
    method: str = ADAPTIVE
    # fixed-step RK4 step size
    step: float = 1e-3

    def __post_init__(self):
        grid = tuple(float(t) for t in self.tau_grid)
        object.__setattr__(self, "tau_grid", grid)
        if not grid:
            raise ValueError("tau grid is empty")
        if grid[0] < 0 or any(b <= a for a, b in zip(grid, grid[1:])):
            raise ValueError("tau grid must be strictly increasing and start at or above 0")
        if not 0 < self.tolerance <= 1e-4:
            raise ValueError(f"tolerance must lie in (0, 1e-4], got {self.tolerance}")
        if self.method not in (ADAPTIVE, FIXED):
            raise ValueError(f"unknown integration method {self.method!r}")
        if self.step <= 0:
            raise ValueError("fixed step must be positive")


@dataclass(frozen=True)
class SeriesRow:
    tau: float
    observable: str
    value: complex
    method: str = "oracle"


class _Dissipator:
    """Sparse superoperators acting on row-major ``vec(rho)``.

    ``vec(A X B) = kron(A, B.T) vec(X)``.
    """

    def __init__(self, cs: LindbladChannelSet):
        Ls = [L.mat for L in cs.operators if L.mat.nnz]
        K = cs.decay_operator.mat
        dim = cs.decay_operator.dim
        eye = sp.identity(dim, dtype=complex, format="csr")
        anti = -0.5 * (sp.kron(K, eye) + sp.kron(eye, K.T))
        jump = sp.csr_matrix((dim * dim, dim * dim), dtype=complex)
        jump_adj = sp.csr_matrix((dim * dim, dim * dim), dtype=complex)
        for L in Ls:
            jump = jump + sp.kron(L, L.conj())
            jump_adj = jump_adj + sp.kron(L.conj().T, L.T)
        self.dim = dim
        self.forward_op = (jump + anti).tocsr()
        self.backward_op = (jump_adj + anti).tocsr()

    def forward(self, rho: np.ndarray) -> np.ndarray:
        return (self.forward_op @ rho.ravel()).reshape(rho.shape)

    def backward(self, A: np.ndarray) -> np.ndarray:
        return (self.backward_op @ A.ravel()).reshape(A.shape)


def _check(cs: LindbladChannelSet, op: FockOperator):
    if op.n_sites != cs.lattice.N:
        raise DimensionError(f"operator on {op.n_sites} modes, channel set on {cs.lattice.N} sites")


def lindbladian_apply(cs: LindbladChannelSet, rho: FockOperator) -> FockOperator:
    """``sum L rho L^dag - 1/2 {L^dag L, rho}``."""
    _check(cs, rho)
    return FockOperator(rho.n_sites, _Dissipator(cs).forward(rho.toarray()))


def adjoint_apply(cs: LindbladChannelSet, A: FockOperator) -> FockOperator:
    """Heisenberg-picture generator ``sum L^dag A L - 1/2 {L^dag L, A}``.

    Sparse input stays sparse, so basis operators of large lattices are cheap.
    """
    _check(cs, A)
    K = cs.decay_operator
    out = -0.5 * (K @ A + A @ K)
    for L in cs.operators:
        if L.mat.nnz:
            out = out + L.dag() @ A @ L
    return out


def _rk4(f, y0: np.ndarray, grid: Sequence[float], h: float) -> list[np.ndarray]:
    out = []
    y = y0.copy()
    t = grid[0]
    out.append(y.copy())
    for t_next in grid[1:]:
        n = max(1, int(np.ceil((t_next - t) / h - 1e-12)))
        dt = (t_next - t) / n
        for _ in range(n):
            k1 = f(y)
            k2 = f(y + 0.5 * dt * k1)
            k3 = f(y + 0.5 * dt * k2)
            k4 = f(y + dt * k3)
            y = y + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        t = t_next
        out.append(y.copy())
    return out


def _integrate(f, y0: np.ndarray, cfg: EvolutionConfig) -> list[np.ndarray]:
    """Integrate ``dy/dtau = f(y)`` from tau=0 and sample on ``cfg.tau_grid``."""
    grid = list(cfg.tau_grid)
    if grid[0] > 0:
        grid = [0.0] + grid
        drop_first = True
    else:
        drop_first = False
    if len(grid) == 1:
        return [y0.copy()]
    if cfg.method == FIXED:
        ys = _rk4(f, y0, grid, cfg.step)
    else:
        shape = y0.shape
        sol = solve_ivp(
            lambda t, y: f(y.reshape(shape)).ravel(),
            (grid[0], grid[-1]),
            y0.ravel(),
            method="RK45",
            t_eval=grid,
            rtol=cfg.tolerance,
            atol=cfg.tolerance * 1e-2,
            max_step=cfg.max_step,
        )
        if sol.status != 0:
            reached = float(sol.t[-1]) if sol.t.size else grid[0]
            raise IntegrationError(f"integration failed: {sol.message}", reached)
        ys = [sol.y[:, k].reshape(shape) for k in range(len(grid))]
    return ys[1:] if drop_first else ys


def _check_oracle_size(cs: LindbladChannelSet):
    if cs.lattice.N > MAX_ORACLE_SITES:
        raise DimensionError(f"master-equation oracle is capped at {MAX_ORACLE_SITES} sites")


def evolve_density(cs: LindbladChannelSet, rho0: DensityMatrix, cfg: EvolutionConfig) -> list[DensityMatrix]:
    _check(cs, rho0)
    _check_oracle_size(cs)
    diss = _Dissipator(cs)
    ys = _integrate(diss.forward, rho0.toarray(), cfg)
    out = []
    for tau, y in zip(cfg.tau_grid, ys):
        y = 0.5 * (y + y.conj().T)
        out.append(DensityMatrix(rho0.n_sites, y, label=f"{rho0.label}@{tau:g}", atol=10 * cfg.tolerance))
    return out


def evolve_heisenberg(cs: LindbladChannelSet, A: FockOperator, cfg: EvolutionConfig) -> list[FockOperator]:
    """Observable-side evolution ``dA/dtau = adjoint generator(A)``."""
    _check(cs, A)
    _check_oracle_size(cs)
    diss = _Dissipator(cs)
    ys = _integrate(diss.backward, A.toarray(), cfg)
    return [FockOperator(A.n_sites, y) for y in ys]


@lru_cache(maxsize=128)
def observable_matrix(lat, kind: ObservableKind) -> FockOperator:
    return build_observable(lat, kind)


def observable_series(
    cs: LindbladChannelSet,
    rho0: DensityMatrix,
    kinds: Sequence[ObservableKind],
    cfg: EvolutionConfig,
) -> list[SeriesRow]:
    states = evolve_density(cs, rho0, cfg)
    mats = {kind: observable_matrix(cs.lattice, kind) for kind in kinds}
    rows = []
    for tau, rho in zip(cfg.tau_grid, states):
        for kind in kinds:
            val = expect(mats[kind], rho)
            if kind.hermitian and abs(val.imag) > 1e-10:
                logger.warning("imaginary part %.3e in %s at tau=%g", val.imag, kind, tau)
            rows.append(SeriesRow(tau, str(kind), val))
    return rows


@dataclass(frozen=True)
class ModeContent:
    rate: float
    frequency: float
    weight: float


def adjoint_modes(cs: LindbladChannelSet, A: FockOperator, tol: float = 1e-9) -> list[ModeContent]:
    """Decay rates present in the exact Heisenberg evolution of ``A``.

    ``A`` is expanded over eigenvectors of the full adjoint superoperator;
    degenerate eigenvalues are merged and ``weight`` is the Frobenius norm of
    the component of ``A`` in that eigenspace. Only components above ``tol``
    are returned, slowest first.
    """
    _check(cs, A)
    if cs.lattice.N > MAX_SPECTRUM_SITES:
        raise DimensionError(f"adjoint spectrum is capped at {MAX_SPECTRUM_SITES} sites")
    S = _Dissipator(cs).backward_op.toarray()
    w, V = la.eig(S)
    c = la.solve(V, A.toarray().ravel())
    groups: dict[tuple[float, float], np.ndarray] = {}
    for i in np.argsort(-w.real):
        key = (round(-w[i].real, 7) + 0.0, round(w[i].imag, 7) + 0.0)
        groups[key] = groups.get(key, 0) + c[i] * V[:, i]
    out = [ModeContent(float(r), float(f), float(np.linalg.norm(v))) for (r, f), v in groups.items()]
    return sorted((m for m in out if m.weight > tol), key=lambda m: (m.rate, m.frequency))
