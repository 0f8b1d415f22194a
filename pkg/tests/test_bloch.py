import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from thermalab.basis import build_sector_basis
from thermalab.bloch import (
    bond_correlations,
    build_bloch_state,
    catalog_entry,
    energy_density,
    load_catalog,
    random_sector_state,
    variance_density,
)
from thermalab.errors import UsageError
from thermalab.model import BENCHMARK_PARAMS, SectorSpec

PARAMS = BENCHMARK_PARAMS

angles = st.floats(min_value=-1.0, max_value=1.0, allow_nan=False)


def test_catalog_has_expected_shape():
    catalog = load_catalog()
    assert len(catalog) >= 60
    entry = catalog["l_4"]
    assert entry.epsilon == pytest.approx(-0.5330)
    assert entry.v == pytest.approx(1.7427)
    assert entry.v_tilde == pytest.approx(1.7427)
    assert entry.beta == pytest.approx(0.2564)
    assert not entry.inferred_epsilon
    assert catalog["z_1"].inferred_epsilon
    assert catalog["z_1"].epsilon == pytest.approx(0.5)
    assert math.isnan(catalog["z_1"].beta)


def test_catalog_matches_closed_forms():
    # every shipped row reproduces its (eps, v) from the closed forms to 1e-4
    for entry in load_catalog().values():
        eps = energy_density(entry.theta, entry.phi, PARAMS)
        v = variance_density(entry.theta, entry.phi, PARAMS)
        assert abs(eps - entry.epsilon) < 1e-4, entry.name
        assert abs(v - entry.v) < 1e-4, entry.name


def test_unknown_state_raises():
    with pytest.raises(UsageError, match="unknown catalog state"):
        catalog_entry("nope_42")


@settings(max_examples=25, deadline=None)
@given(angles, angles)
def test_variance_identity_v_equals_c0_plus_2c1(t, p):
    theta, phi = t * math.pi, p * math.pi
    c0, c1 = bond_correlations(theta, phi, PARAMS)
    assert variance_density(theta, phi, PARAMS) == pytest.approx(c0 + 2 * c1, abs=1e-12)


@settings(max_examples=10, deadline=None)
@given(angles, angles)
def test_y_reflection_degeneracy(t, p):
    theta = t * math.pi
    assert energy_density(theta, p * math.pi, PARAMS) == pytest.approx(
        energy_density(theta, -p * math.pi, PARAMS), abs=1e-12
    )
    assert variance_density(theta, p * math.pi, PARAMS) == pytest.approx(
        variance_density(theta, -p * math.pi, PARAMS), abs=1e-12
    )


@pytest.mark.parametrize("name", ["Y_+", "z_4", "c_4", "E_+", "l_5"])
def test_closed_forms_match_dense_moments(name):
    L = 6
    entry = catalog_entry(name)
    psi = oracles.bloch_product_state(entry.theta, entry.phi, L)
    H = oracles.dense_hamiltonian(L, PARAMS.h_x, PARAMS.h_z)
    eps = (psi.conj() @ H @ psi).real / L
    var = ((psi.conj() @ (H @ (H @ psi))).real - (eps * L) ** 2) / L
    assert eps == pytest.approx(energy_density(entry.theta, entry.phi, PARAMS), abs=1e-12)
    assert var == pytest.approx(variance_density(entry.theta, entry.phi, PARAMS), abs=1e-11)
    # bond correlations: C_r = <avg(H_0 H_r)> - eps^2, zero beyond r = 1
    c0, c1 = bond_correlations(entry.theta, entry.phi, PARAMS)
    for r, expected in [(0, c0), (1, c1), (2, 0.0), (3, 0.0)]:
        prod = oracles.bond_operator(0, L, PARAMS.h_x, PARAMS.h_z) @ oracles.bond_operator(
            r, L, PARAMS.h_x, PARAMS.h_z
        )
        avg = oracles.group_average(prod, L, with_reflection=False)
        val = (psi.conj() @ avg @ psi).real - eps**2
        assert val == pytest.approx(expected, abs=1e-11), (name, r)


@pytest.mark.parametrize("name", ["Y_+", "x_4", "d_9"])
def test_sector_coordinates_reproduce_product_state(name):
    L = 8
    entry = catalog_entry(name)
    basis = build_sector_basis(SectorSpec(L, 0, +1))
    vec = build_bloch_state(basis, entry.theta, entry.phi)
    assert np.allclose(vec.to_full(), oracles.bloch_product_state(entry.theta, entry.phi, L), atol=1e-12)


def test_bloch_state_requires_even_sector():
    basis = build_sector_basis(SectorSpec(6, 1))
    with pytest.raises(UsageError):
        build_bloch_state(basis, 0.3, 0.4)


def test_catalog_extremes_are_extremal():
    # E_+/E_- bracket the product-state energy surface; a_1 is the variance maximum
    grid = np.linspace(-1.0, 1.0, 201) * math.pi
    eps = np.array([[energy_density(t, p, PARAMS) for p in grid] for t in grid])
    v = np.array([[variance_density(t, p, PARAMS) for p in grid] for t in grid])
    assert eps.max() <= catalog_entry("E_+").epsilon + 1e-3
    assert eps.min() >= catalog_entry("E_-").epsilon - 1e-3
    assert v.max() <= catalog_entry("a_1").v + 1e-3


def test_random_sector_state_reproducible_and_normalized():
    basis = build_sector_basis(SectorSpec(10, 0, +1))
    a = random_sector_state(basis, np.random.default_rng(11))
    b = random_sector_state(basis, np.random.default_rng(11))
    c = random_sector_state(basis, np.random.default_rng(12))
    assert np.allclose(a.data, b.data)
    assert not np.allclose(a.data, c.data)
    assert a.norm() == pytest.approx(1.0, abs=1e-12)
