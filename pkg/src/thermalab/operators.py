"""Sector blocks of the Hamiltonian and of translation-averaged observables.

Two assembly routes:

* The Hamiltonian commutes with the sector projector, so its block follows
  from applying the merged strings to representatives only
  (M_{ba} = sum_c h_c conj(Phi(s_c)) / sqrt(n_a), cost O(dim * L)).

* A generic single-position operator O_0 does not commute with P, but for
  basis states of a one-dimensional irrep <b|avg_G(O)|a> = <b|O_0|a>, and the
  latter is assembled over the full space:
  M_{ba} = sum_s h(s) conj(Phi(s ^ flip)) Phi(s).
  The group redundancy merges in the duplicate-summing COO -> CSR conversion,
  leaving nnz of order (#strings) * dim.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .basis import SymmetryBasis
from .errors import ResourceError, UsageError
from .model import HamiltonianParams
from .pauli import PauliString, bond_strings, pauli_string

__all__ = [
    "hamiltonian_strings",
    "sector_hamiltonian",
    "sector_block",
    "apply_hamiltonian",
    "apply_translation_averaged_operator",
    "expectation",
    "csr_matvec",
    "dense_hamiltonian",
]

_CHUNK = 1 << 20


def hamiltonian_strings(L: int, params: HamiltonianParams) -> list[PauliString]:
    """Strings of H = sum_j H_j in merged form: L each of zz, x, z."""
    out = []
    for j in range(L):
        out.append(pauli_string({j: "z", (j + 1) % L: "z"}))
    for j in range(L):
        out.append(pauli_string({j: "x"}, params.h_x))
    for j in range(L):
        out.append(pauli_string({j: "z"}, params.h_z))
    return out


def _strings_real(strings: list[PauliString]) -> bool:
    return all(complex(s.coeff).imag == 0.0 for s in strings)


def sector_hamiltonian(basis: SymmetryBasis, params: HamiltonianParams) -> sp.csr_matrix:
    """CSR block of H in the sector (cached on the basis object)."""
    key = ("H", params)
    cached = basis._ops.get(key)
    if cached is not None:
        return cached
    phi = basis.expansion_amplitudes()
    real = np.isrealobj(phi)
    inv_sqrt_norm = 1.0 / np.sqrt(basis.norms)
    reps = basis.reps
    dim = basis.dim
    cols_all, rows_all, vals_all = [], [], []
    for s in hamiltonian_strings(basis.L, params):
        out_states, coeff = s.apply(reps)
        b = basis.rep_index[out_states]
        ok = b >= 0
        if not ok.any():
            continue
        cols_all.append(np.arange(dim, dtype=np.int32)[ok])
        rows_all.append(b[ok])
        vals_all.append(coeff[ok] * np.conj(phi[out_states[ok]]) * inv_sqrt_norm[ok])
    if rows_all:
        rows = np.concatenate(rows_all)
        cols = np.concatenate(cols_all)
        vals = np.concatenate(vals_all)
    else:
        rows = np.zeros(0, dtype=np.int32)
        cols = np.zeros(0, dtype=np.int32)
        vals = np.zeros(0)
    dtype = np.float64 if real else np.complex128
    mat = sp.coo_matrix((vals.astype(dtype), (rows, cols)), shape=(dim, dim)).tocsr()
    mat.sum_duplicates()
    basis._ops[key] = mat
    return mat


def sector_block(
    basis: SymmetryBasis,
    strings: list[PauliString],
    cache_key: object | None = None,
) -> sp.csr_matrix:
    """Sector block of a (generally non-commuting) operator given as strings.

    Equals the block of the group average of the operator; see module
    docstring.  Cached on the basis when cache_key is given.
    """
    if cache_key is not None:
        cached = basis._ops.get(cache_key)
        if cached is not None:
            return cached
    phi = basis.expansion_amplitudes()
    real = np.isrealobj(phi) and _strings_real(strings)
    dtype = np.float64 if real else np.complex128
    dim = basis.dim
    n = 1 << basis.L
    total = sp.csr_matrix((dim, dim), dtype=dtype)
    rep_index = basis.rep_index
    for s in strings:
        parts = []
        for lo in range(0, n, _CHUNK):
            hi = min(lo + _CHUNK, n)
            states = np.arange(lo, hi, dtype=np.int64)
            a = rep_index[lo:hi]
            out_states, coeff = s.apply(states)
            b = rep_index[out_states]
            ok = (a >= 0) & (b >= 0)
            if not ok.any():
                continue
            vals = coeff[ok] * np.conj(phi[out_states[ok]]) * phi[lo:hi][ok]
            part = sp.coo_matrix(
                (vals.astype(dtype), (b[ok], a[ok])), shape=(dim, dim)
            ).tocsr()
            parts.append(part)
        for part in parts:
            total = total + part
    total.sum_duplicates()
    if cache_key is not None:
        basis._ops[cache_key] = total
    return total


def csr_matvec(mat: sp.csr_matrix, v: np.ndarray) -> np.ndarray:
    """Matrix-vector product avoiding the upcast copy for real CSR x complex v."""
    if mat.dtype == np.float64 and np.iscomplexobj(v):
        return mat @ v.real + 1j * (mat @ v.imag)
    return mat @ v


def apply_hamiltonian(basis: SymmetryBasis, data: np.ndarray, params: HamiltonianParams) -> np.ndarray:
    return csr_matvec(sector_hamiltonian(basis, params), data)


def apply_translation_averaged_operator(
    basis: SymmetryBasis,
    strings: list[PauliString],
    data: np.ndarray,
    cache_key: object | None = None,
) -> np.ndarray:
    """Apply the translation average of the operator given by single-position strings."""
    return csr_matvec(sector_block(basis, strings, cache_key), data)


def expectation(mat: sp.csr_matrix, data: np.ndarray) -> float:
    """<v|M|v> assuming a Hermitian block (returns the real part)."""
    return float(np.vdot(data, csr_matvec(mat, data)).real)


def dense_hamiltonian(L: int, params: HamiltonianParams) -> np.ndarray:
    """Full-space dense H for oracle-scale problems."""
    if L > 12:
        raise ResourceError("dense full-space Hamiltonian limited to L <= 12")
    n = 1 << L
    states = np.arange(n, dtype=np.int64)
    H = np.zeros((n, n))
    for s in hamiltonian_strings(L, params):
        if complex(s.coeff).imag != 0.0:
            raise UsageError("dense_hamiltonian expects a real Hamiltonian")
        out_states, coeff = s.apply(states)
        np.add.at(H, (out_states, states), coeff.real)
    return H
