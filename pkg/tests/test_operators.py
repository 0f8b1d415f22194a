import numpy as np
import pytest

import oracles
from thermalab.basis import build_sector_basis
from thermalab.model import BENCHMARK_PARAMS, HamiltonianParams, SectorSpec
from thermalab.operators import (
    csr_matvec,
    dense_hamiltonian,
    expectation,
    sector_block,
    sector_hamiltonian,
)
from thermalab.pauli import (
    PauliString,
    bond_product_strings,
    bond_strings,
    cluster_strings,
    pauli_string,
)

PARAMS = BENCHMARK_PARAMS


def test_pauli_strings_match_kron_oracle():
    L = 3
    cases = [
        ({0: "x"}, 1.0),
        ({1: "y"}, 1.0),
        ({2: "z"}, -0.5),
        ({0: "x", 1: "x"}, 2.0),
        ({0: "z", 2: "y"}, 1.0),
        ({0: "y", 1: "y", 2: "z"}, 1.0),
    ]
    for ops, coeff in cases:
        s = pauli_string(ops, coeff)
        assert np.allclose(s.dense(L), coeff * oracles.string_operator(ops, L), atol=1e-14)


def test_pauli_product_matches_matrix_product():
    L = 2
    rng = np.random.default_rng(3)
    labels = ["x", "y", "z"]
    for _ in range(20):
        ops_a = {int(rng.integers(0, L)): labels[rng.integers(0, 3)]}
        ops_b = {int(rng.integers(0, L)): labels[rng.integers(0, 3)]}
        a = pauli_string(ops_a)
        b = pauli_string(ops_b)
        assert np.allclose((a * b).dense(L), a.dense(L) @ b.dense(L), atol=1e-14)


def test_bond_strings_reproduce_bond_operator():
    L = 4
    for j in range(L):
        dense = sum(s.dense(L) for s in bond_strings(j, L, PARAMS.h_x, PARAMS.h_z))
        assert np.allclose(dense, oracles.bond_operator(j, L, PARAMS.h_x, PARAMS.h_z), atol=1e-14)


def test_bond_product_strings_reproduce_operator_product():
    L = 6
    for r in range(0, 4):
        dense = sum(s.dense(L) for s in bond_product_strings(r, L, PARAMS.h_x, PARAMS.h_z))
        b0 = oracles.bond_operator(0, L, PARAMS.h_x, PARAMS.h_z)
        br = oracles.bond_operator(r, L, PARAMS.h_x, PARAMS.h_z)
        assert np.allclose(dense, b0 @ br, atol=1e-13)
        # products of real-coefficient x/z strings stay real-coefficient
        assert all(complex(s.coeff).imag == 0.0 for s in bond_product_strings(r, L, PARAMS.h_x, PARAMS.h_z))


def test_dense_hamiltonian_matches_oracle():
    for L in (2, 3, 4, 6):
        H = dense_hamiltonian(L, PARAMS)
        assert np.allclose(H, oracles.dense_hamiltonian(L, PARAMS.h_x, PARAMS.h_z), atol=1e-13)


def _sectors(L):
    specs = [SectorSpec(L, k) for k in range(L)]
    specs += [SectorSpec(L, 0, +1), SectorSpec(L, 0, -1)]
    if L % 2 == 0:
        specs += [SectorSpec(L, L // 2, +1), SectorSpec(L, L // 2, -1)]
    return specs


@pytest.mark.parametrize("L", [3, 4, 6])
def test_sector_hamiltonian_matches_dense_blocks(L):
    Hd = oracles.dense_hamiltonian(L, PARAMS.h_x, PARAMS.h_z)
    for spec in _sectors(L):
        basis = build_sector_basis(spec)
        if basis.dim == 0:
            continue
        E = basis.expansion_isometry()
        block = E.conj().T @ Hd @ E
        H = sector_hamiltonian(basis, PARAMS).toarray()
        assert np.allclose(H, block, atol=1e-12), spec


def test_sector_spectra_union_is_full_spectrum():
    L = 6
    Hd = oracles.dense_hamiltonian(L, PARAMS.h_x, PARAMS.h_z)
    full = np.sort(np.linalg.eigvalsh(Hd))
    collected = []
    for k in range(L):
        basis = build_sector_basis(SectorSpec(L, k))
        Hk = sector_hamiltonian(basis, PARAMS).toarray()
        if Hk.dtype == np.float64:
            assert np.allclose(Hk, Hk.T, atol=1e-12)
        collected.append(np.linalg.eigvalsh(Hk))
    merged = np.sort(np.concatenate(collected))
    assert np.allclose(merged, full, atol=1e-10)


@pytest.mark.parametrize("L", [4, 6])
def test_translation_averaged_blocks_match_dense_group_average(L):
    cases = [
        bond_product_strings(2, L, PARAMS.h_x, PARAMS.h_z),
        bond_product_strings(0, L, PARAMS.h_x, PARAMS.h_z),
        [pauli_string({0: "x"})],
        [pauli_string({0: "z", 1: "z"})],
        [pauli_string({0: "y"})],
    ]
    for spec in [SectorSpec(L, 0, +1), SectorSpec(L, 1), SectorSpec(L, L // 2, -1)]:
        basis = build_sector_basis(spec)
        if basis.dim == 0:
            continue
        E = basis.expansion_isometry()
        for strings in cases:
            dense = sum(s.dense(L) for s in strings)
            avg = oracles.group_average(dense, L, with_reflection=spec.reflection is not None)
            target = E.conj().T @ avg @ E
            block = sector_block(basis, strings).toarray()
            assert np.allclose(block, target, atol=1e-12), (spec, strings[0])


def test_block_of_hamiltonian_strings_agrees_with_fast_path():
    # the generic full-space assembly and the representative shortcut must agree on H
    from thermalab.operators import hamiltonian_strings

    for spec in [SectorSpec(6, 0, +1), SectorSpec(6, 2), SectorSpec(5, 1)]:
        basis = build_sector_basis(spec)
        fast = sector_hamiltonian(basis, PARAMS).toarray()
        slow = sector_block(basis, hamiltonian_strings(spec.L, PARAMS)).toarray()
        assert np.allclose(fast, slow, atol=1e-12)


def test_real_sector_matvec_on_complex_vector():
    basis = build_sector_basis(SectorSpec(8, 0, +1))
    H = sector_hamiltonian(basis, PARAMS)
    assert H.dtype == np.float64
    rng = np.random.default_rng(0)
    v = rng.normal(size=basis.dim) + 1j * rng.normal(size=basis.dim)
    direct = H.toarray() @ v
    assert np.allclose(csr_matvec(H, v), direct, atol=1e-12)
    assert np.isclose(expectation(H, v), np.vdot(v, direct).real, atol=1e-12)


def test_cluster_strings_complete():
    strings = cluster_strings(2)
    assert len(strings) == 16
    assert strings["ii"].x_mask == 0 and strings["ii"].z_mask == 0
    # parity: odd-y strings carry imaginary coefficients
    assert complex(strings["yi"].coeff).imag != 0
    assert complex(strings["yy"].coeff).imag == 0


def test_infinite_temperature_variance_closed_form():
    # bond-averaged energy variance density at beta = 0: 1 + h_x^2 + h_z^2
    assert np.isclose(
        HamiltonianParams(-1.05, 0.5).variance_density_infinite_temperature(), 2.3525, atol=1e-12
    )
    # cross-check against an explicit trace at small L
    L = 6
    H = oracles.dense_hamiltonian(L, -1.05, 0.5)
    n = 1 << L
    v = (np.trace(H @ H).real / n) / L
    assert np.isclose(v, 2.3525, atol=1e-12)
