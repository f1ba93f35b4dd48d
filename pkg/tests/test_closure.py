import dataclasses
import itertools

import numpy as np
import pytest

from dissfermi import closure
from dissfermi.channels import (
    CHANNEL_SETS,
    NN_CUBIC_FROZEN,
    NN_CUBIC_HOPPING,
    NN_LINEAR,
    NN_QUADRATIC,
    NORMALIZED_SETS,
    SINGLE_SITE_LINEAR,
    build_channel_set,
)
from dissfermi.closure import (
    ClosureError,
    ClosureGenerator,
    NoClosedForm,
    analytic_rate,
    build_generator,
    coefficient_series,
    dominant_mode,
    eigen_basis,
    evolve_coefficients,
    steady_state_value,
)
from dissfermi.fock import expect, random_density, space_for
from dissfermi.lattice import OPEN, build_lattice
from dissfermi.master import EvolutionConfig, evolve_density, observable_matrix
from dissfermi.observables import (
    CHI_S,
    CHI_U,
    O,
    O_U,
    ONE_POINT,
    TWO_POINT,
    CoefficientVector,
    SiteCorrelations,
    fourier_mode,
    structure_factor,
    to_coefficients,
)


@pytest.mark.parametrize("name", CHANNEL_SETS)
@pytest.mark.parametrize("sector", [ONE_POINT, TWO_POINT])
@pytest.mark.parametrize("dims,boundary", [([4], "periodic"), ([2, 3], OPEN)])
def test_local_and_full_construction_agree(name, sector, dims, boundary):
    cs = build_channel_set(name, build_lattice(dims, boundary), 0.9)
    full = build_generator(cs, sector=sector, method="full")
    local = build_generator(cs, sector=sector, method="local")
    np.testing.assert_allclose(local.G, full.G, atol=1e-12)
    np.testing.assert_allclose(local.const_row, full.const_row, atol=1e-12)
    assert local.residual == pytest.approx(full.residual, abs=1e-12)


@pytest.mark.parametrize("name", NORMALIZED_SETS)
def test_normalized_sets_close_with_symmetric_generator(name):
    for sector in (ONE_POINT, TWO_POINT):
        gen = build_generator(build_channel_set(name, build_lattice([6]), 1.0), sector=sector)
        assert gen.closed and gen.symmetric


@pytest.mark.parametrize("name", [NN_CUBIC_FROZEN, NN_CUBIC_HOPPING])
def test_cubic_sets_leave_the_span(name):
    gen = build_generator(build_channel_set(name, build_lattice([4]), 1.0), sector=TWO_POINT)
    assert not gen.closed


def _insertion_reference(cs, sector):
    """Project sum L^dag B L onto the basis by brute force on the full Fock space."""
    lat = cs.lattice
    fs = space_for(lat)
    o = [fs.o(x) for x in range(lat.N)]
    if sector == ONE_POINT:
        basis = {(x,): o[x] for x in range(lat.N)}
    else:
        basis = {(x, y): o[x] @ o[y] for x, y in itertools.product(range(lat.N), repeat=2) if x != y}
    M = np.zeros((len(o) ** len(next(iter(basis))),) * 2)
    for key, B in basis.items():
        img = fs.zero()
        for L in cs.operators:
            img = img + L.dag() @ B @ L
        col = M[:, 0] * 0
        for k2, B2 in basis.items():
            w = np.trace(B2.toarray() @ img.toarray()).real / fs.dim * 4 ** len(key)
            idx = k2[0] if sector == ONE_POINT else k2[0] * lat.N + k2[1]
            col[idx] += w / (1 if sector == ONE_POINT else 2)
        idx = key[0] if sector == ONE_POINT else key[0] * lat.N + key[1]
        M[:, idx] = col
    return M


@pytest.mark.parametrize("name", NORMALIZED_SETS)
def test_insertion_matrix_is_shifted_generator(name):
    cs = build_channel_set(name, build_lattice([4]), 1.0)
    gen = build_generator(cs, sector=ONE_POINT)
    np.testing.assert_allclose(gen.insertion_matrix, _insertion_reference(cs, ONE_POINT), atol=1e-12)
    gen2 = build_generator(cs, sector=TWO_POINT)
    ref = _insertion_reference(cs, TWO_POINT)
    # ordered pairs duplicate each monomial, so compare the action on symmetric vectors
    swap = np.eye(16)[[(i % 4) * 4 + i // 4 for i in range(16)]]
    sym = 0.5 * (np.eye(16) + swap)
    off = ~np.eye(4, dtype=bool).ravel()
    got = (gen2.insertion_matrix @ sym)[np.ix_(off, off)]
    np.testing.assert_allclose(got, (ref @ sym)[np.ix_(off, off)], atol=1e-12)


@pytest.mark.parametrize("name", NORMALIZED_SETS)
def test_closure_series_matches_oracle_from_random_state(name):
    lat = build_lattice([4])
    cs = build_channel_set(name, lat, 1.0)
    rho0 = random_density(4, seed=21)
    grid = (0.0, 0.3, 0.9)
    states = evolve_density(cs, rho0, EvolutionConfig(grid))
    corr = SiteCorrelations.from_density(rho0)
    for kind in (O, O_U, CHI_S, CHI_U, fourier_mode(1), structure_factor(1)):
        gen = build_generator(cs, sector=kind.sector)
        got = coefficient_series(gen, kind, corr, grid)
        want = [expect(observable_matrix(lat, kind), r) for r in states]
        np.testing.assert_allclose(got, want, atol=1e-8, err_msg=str(kind))


def test_mu_scaling():
    lat = build_lattice([4])
    a = build_generator(build_channel_set(NN_QUADRATIC, lat, 1.0))
    b = build_generator(build_channel_set(NN_QUADRATIC, lat, 0.5))
    np.testing.assert_allclose(b.G, 0.25 * a.G, atol=1e-13)
    assert b.shift == pytest.approx(0.25 * a.shift)


def test_linear_generators_are_multiples_of_identity():
    lat = build_lattice([4, 4])
    g1 = build_generator(build_channel_set(SINGLE_SITE_LINEAR, lat, 1.0), sector=ONE_POINT)
    g2 = build_generator(build_channel_set(NN_LINEAR, lat, 1.0), sector=ONE_POINT)
    np.testing.assert_allclose(g1.G, -2 * np.eye(16), atol=1e-12)
    np.testing.assert_allclose(g2.G, -4 * np.eye(16), atol=1e-12)


def test_quadratic_dispersion_and_dominant_mode():
    lat = build_lattice([8])
    gen = build_generator(build_channel_set(NN_QUADRATIC, lat, 1.0), sector=ONE_POINT)
    want = sorted(-2 * (1 - np.cos(2 * np.pi * q / 8)) for q in range(8))
    np.testing.assert_allclose(sorted(np.linalg.eigvalsh(gen.G)), want, atol=1e-12)
    dm = dominant_mode(build_generator(build_channel_set(NN_QUADRATIC, build_lattice([4]), 1.0)))
    assert dm.rate == pytest.approx(6.0, abs=1e-12)
    assert dm.insertion_eigenvalue == pytest.approx(4 - 6.0)
    assert dm.multiplicity == 1 and not dm.tie


@pytest.mark.parametrize("n", [4, 6, 8])
def test_quadratic_steady_susceptibility(n):
    gen = build_generator(build_channel_set(NN_QUADRATIC, build_lattice([n]), 1.0))
    chi0 = steady_state_value(gen, to_coefficients(gen.lattice, CHI_S))
    # uniform mixture over half-filled masks
    assert chi0 == pytest.approx(n * n / (4 * (n - 1)), abs=1e-10)


@pytest.mark.parametrize("name", [SINGLE_SITE_LINEAR, NN_LINEAR])
def test_linear_steady_susceptibility(name):
    gen = build_generator(build_channel_set(name, build_lattice([6]), 1.0))
    assert steady_state_value(gen, to_coefficients(gen.lattice, CHI_S)) == pytest.approx(1.5, abs=1e-12)


def test_analytic_rates():
    chain, square, ladder = build_lattice([8]), build_lattice([4, 4]), build_lattice([2, 4], OPEN)
    assert analytic_rate(SINGLE_SITE_LINEAR, square, O).rate == 2
    law = analytic_rate(SINGLE_SITE_LINEAR, chain, CHI_S, mu=0.5)
    assert (law.rate, law.constant) == (1.0, 2.0)
    assert analytic_rate(NN_LINEAR, square, O).rate == 4
    assert analytic_rate(NN_LINEAR, square, CHI_S).rate == 8
    assert analytic_rate(NN_QUADRATIC, chain, O).rate == 4
    assert analytic_rate(NN_QUADRATIC, chain, O_U).rate == 0
    assert analytic_rate(NN_QUADRATIC, chain, fourier_mode(2)).rate == pytest.approx(2.0)
    assert law(0.0, 7.0) == pytest.approx(7.0)
    for args in ((NN_QUADRATIC, chain, CHI_S), (NN_LINEAR, ladder, O), (NN_CUBIC_FROZEN, chain, CHI_S)):
        with pytest.raises(NoClosedForm):
            analytic_rate(*args)


def _toy(G, const=None):
    lat = build_lattice([4])
    G = np.asarray(G, dtype=float)
    const = np.zeros(len(G)) if const is None else np.asarray(const, dtype=float)
    return ClosureGenerator(ONE_POINT, G, const, 0.0, "toy", lat, 1.0, 1)


def test_non_symmetric_generator_uses_exponential_path():
    G = np.array([[-1.0, 0.5, 0, 0], [0, -2.0, 0, 0], [0, 0, -1.0, 0], [0, 0, 0, -1.0]])
    gen = _toy(G, [1.0, 0, 0, 0])
    with pytest.raises(ClosureError):
        eigen_basis(gen)
    v0 = CoefficientVector(ONE_POINT, [0.0, 1.0, 0.0, 0.0])
    (v,) = evolve_coefficients(gen, v0, [0.7])
    a = 0.5 * (np.exp(-0.7) - np.exp(-1.4))
    assert v.values[0] == pytest.approx(a)
    assert v.values[1] == pytest.approx(np.exp(-1.4))
    # d c / d tau = v_0(tau)
    assert v.constant == pytest.approx(0.5 * ((1 - np.exp(-0.7)) - (1 - np.exp(-1.4)) / 2))


def test_unbounded_identity_growth_has_no_steady_state():
    gen = _toy(np.diag([0.0, -1.0, -1.0, -1.0]), [1.0, 0, 0, 0])
    with pytest.raises(ClosureError):
        closure.steady_state_vector(gen, CoefficientVector(ONE_POINT, [1.0, 0, 0, 0]))


def test_generator_rejects_foreign_lattice_and_sector():
    cs = build_channel_set(NN_QUADRATIC, build_lattice([4]), 1.0)
    with pytest.raises(ClosureError):
        build_generator(cs, build_lattice([6]))
    with pytest.raises(ClosureError):
        build_generator(cs, sector="three-point")
    with pytest.raises(ClosureError):
        build_generator(cs, method="magic")
    gen = dataclasses.replace(build_generator(cs), G=np.zeros((16, 16)))
    with pytest.raises(ClosureError):
        dominant_mode(gen)
