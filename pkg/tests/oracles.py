"""Independent dense oracles used by the test suite.

Everything here is built from first principles with numpy kron / permutation
matrices, deliberately not reusing the package kernels, so agreement between
the two routes is meaningful.
"""

from __future__ import annotations

import numpy as np

# Single-site operators in the package's state convention:
# component index 0 = spin down, 1 = spin up, sigma^z|up> = +|up>.
SX = np.array([[0.0, 1.0], [1.0, 0.0]])
SY = np.array([[0.0, 1j], [-1j, 0.0]])
SZ = np.array([[-1.0, 0.0], [0.0, 1.0]])
ID2 = np.eye(2)

_PAULI = {"i": ID2, "x": SX, "y": SY, "z": SZ}


def site_operator(op: np.ndarray, j: int, L: int) -> np.ndarray:
    """Embed a single-site operator at site j (bit j of the state index)."""
    left = np.eye(1 << (L - 1 - j))
    right = np.eye(1 << j)
    return np.kron(left, np.kron(op, right))


def string_operator(ops: dict[int, str], L: int) -> np.ndarray:
    out = np.eye(1 << L, dtype=complex)
    for j, name in ops.items():
        out = out @ site_operator(_PAULI[name], j, L)
    return out


def bond_operator(j: int, L: int, h_x: float, h_z: float) -> np.ndarray:
    a, b = j % L, (j + 1) % L
    out = string_operator({a: "z", b: "z"}, L)
    out = out + 0.5 * h_x * (string_operator({a: "x"}, L) + string_operator({b: "x"}, L))
    out = out + 0.5 * h_z * (string_operator({a: "z"}, L) + string_operator({b: "z"}, L))
    return out


def dense_hamiltonian(L: int, h_x: float, h_z: float) -> np.ndarray:
    H = np.zeros((1 << L, 1 << L), dtype=complex)
    for j in range(L):
        H += bond_operator(j, L, h_x, h_z)
    return H


def translation_matrix(L: int) -> np.ndarray:
    """U_T with U_T|s> = |rotl(s)> (site j -> j+1)."""
    n = 1 << L
    U = np.zeros((n, n))
    for s in range(n):
        t = ((s << 1) | (s >> (L - 1))) & (n - 1)
        U[t, s] = 1.0
    return U


def reflection_matrix(L: int) -> np.ndarray:
    n = 1 << L
    U = np.zeros((n, n))
    for s in range(n):
        r = 0
        for j in range(L):
            r |= ((s >> j) & 1) << (L - 1 - j)
        U[r, s] = 1.0
    return U


def sector_projector(L: int, k: int, reflection: int | None) -> np.ndarray:
    """P = (1/|G|) sum_g chi*(g) U_g for the requested sector."""
    T = translation_matrix(L)
    omega = 2.0 * np.pi * k / L
    n = 1 << L
    P = np.zeros((n, n), dtype=complex)
    Tm = np.eye(n)
    for m in range(L):
        P += np.exp(1j * omega * m) * Tm
        Tm = T @ Tm
    if reflection is None:
        return P / L
    R = reflection_matrix(L)
    Tm = np.eye(n)
    PR = np.zeros((n, n), dtype=complex)
    for m in range(L):
        PR += np.exp(1j * omega * m) * Tm
        Tm = T @ Tm
    return (P + reflection * (PR @ R)) / (2 * L)


def group_average(op: np.ndarray, L: int, with_reflection: bool) -> np.ndarray:
    """Average of op over translations (and reflections when requested)."""
    T = translation_matrix(L)
    acc = np.zeros_like(op, dtype=complex)
    cur = op.astype(complex)
    for _ in range(L):
        acc += cur
        cur = T @ cur @ T.T
    acc /= L
    if with_reflection:
        R = reflection_matrix(L)
        acc = 0.5 * (acc + R @ acc @ R)
    return acc


def bloch_product_state(theta: float, phi: float, L: int) -> np.ndarray:
    """Full-space product state with every site in (cos(t/2)|up> + e^{i phi} sin(t/2)|down>)."""
    single = np.zeros(2, dtype=complex)
    single[1] = np.cos(theta / 2.0)
    single[0] = np.exp(1j * phi) * np.sin(theta / 2.0)
    out = np.ones(1, dtype=complex)
    for _ in range(L):
        out = np.kron(single, out)  # new site enters as the next-higher bit
    return out


def reduced_density_matrix(full: np.ndarray, l: int, L: int) -> np.ndarray:
    """RDM of sites 0..l-1 (the low-order bits of the state index)."""
    A = full.reshape(1 << (L - l), 1 << l)
    return A.T @ A.conj()


def entanglement_entropy_bits(rho: np.ndarray) -> float:
    w = np.linalg.eigvalsh(rho)
    w = np.clip(w.real, 1e-300, None)
    w = w[w > 1e-18]
    return float(-(w * np.log2(w)).sum())
