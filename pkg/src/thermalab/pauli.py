"""Pauli strings on bit-encoded spin states, with vectorized application.

A string is stored in symplectic form  coeff * X^{x_mask} Z^{z_mask}
(Z factors act first).  Y_j enters as i * X_j Z_j.  With bit 1 = spin up,

    Z|1> = +|1>,  Z|0> = -|0>,  X flips the bit,  Y|1> = i|0>,  Y|0> = -i|1>.

Application to an integer state array s:

    (coeff * X^x Z^z)|s> = coeff * (-1)^{(#z bits) - popcount(s & z)} |s ^ x>.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import UsageError

__all__ = ["PauliString", "pauli_string", "bond_strings", "bond_product_strings", "cluster_strings"]

_OPS = ("i", "x", "y", "z")


@dataclass(frozen=True)
class PauliString:
    coeff: complex
    x_mask: int
    z_mask: int

    def __mul__(self, other: "PauliString") -> "PauliString":
        if not isinstance(other, PauliString):
            return NotImplemented
        # X^a Z^b X^c Z^d = (-1)^{|b & c|} X^{a^c} Z^{b^d}
        sign = -1.0 if bin(self.z_mask & other.x_mask).count("1") % 2 else 1.0
        return PauliString(
            self.coeff * other.coeff * sign,
            self.x_mask ^ other.x_mask,
            self.z_mask ^ other.z_mask,
        )

    def scaled(self, factor: complex) -> "PauliString":
        return PauliString(self.coeff * factor, self.x_mask, self.z_mask)

    def translated(self, m: int, L: int) -> "PauliString":
        return PauliString(self.coeff, _rotl_mask(self.x_mask, m, L), _rotl_mask(self.z_mask, m, L))

    @property
    def is_diagonal(self) -> bool:
        return self.x_mask == 0

    def apply(self, states: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Return (flipped states, per-state coefficients)."""
        nz = bin(self.z_mask).count("1")
        par = (nz - np.bitwise_count(states & self.z_mask)).astype(np.int64) & 1
        c = complex(self.coeff)
        scalar: complex | float = c.real if c.imag == 0.0 else c
        coeff = np.where(par == 0, scalar, -scalar)
        if self.x_mask == 0:
            return states, coeff
        return states ^ self.x_mask, coeff

    def dense(self, L: int) -> np.ndarray:
        """Dense 2^L x 2^L matrix (oracle/debug sizes only)."""
        n = 1 << L
        states = np.arange(n, dtype=np.int64)
        out_states, coeff = self.apply(states)
        mat = np.zeros((n, n), dtype=complex)
        mat[out_states, states] = coeff
        return mat


def _rotl_mask(mask: int, m: int, L: int) -> int:
    m %= L
    full = (1 << L) - 1
    return ((mask << m) | (mask >> (L - m))) & full if m else mask


def pauli_string(ops: dict[int, str], coeff: complex = 1.0) -> PauliString:
    """Build a string from {site: 'x'|'y'|'z'} (sites must be distinct keys)."""
    x_mask = 0
    z_mask = 0
    phase = complex(coeff)
    for site, op in ops.items():
        if op not in _OPS or op == "i":
            raise UsageError(f"unknown Pauli op {op!r} at site {site}")
        bit = 1 << site
        if op in ("x", "y"):
            x_mask |= bit
        if op in ("z", "y"):
            z_mask |= bit
        if op == "y":
            phase *= 1j
    return PauliString(phase, x_mask, z_mask)


def bond_strings(j: int, L: int, h_x: float, h_z: float) -> list[PauliString]:
    """The five strings of the bond operator H_j (sites j, j+1 mod L)."""
    a, b = j % L, (j + 1) % L
    return [
        pauli_string({a: "z", b: "z"}),
        pauli_string({a: "x"}, h_x / 2.0),
        pauli_string({b: "x"}, h_x / 2.0),
        pauli_string({a: "z"}, h_z / 2.0),
        pauli_string({b: "z"}, h_z / 2.0),
    ]


def bond_product_strings(r: int, L: int, h_x: float, h_z: float) -> list[PauliString]:
    """Strings of the single-position product H_0 H_r (25 terms, merged)."""
    left = bond_strings(0, L, h_x, h_z)
    right = bond_strings(r, L, h_x, h_z)
    acc: dict[tuple[int, int], complex] = {}
    for p in left:
        for q in right:
            s = p * q
            key = (s.x_mask, s.z_mask)
            acc[key] = acc.get(key, 0.0) + s.coeff
    return [PauliString(c, x, z) for (x, z), c in sorted(acc.items()) if c != 0.0]


def cluster_strings(l: int) -> dict[str, PauliString]:
    """All 4^l Pauli strings supported on sites 0..l-1, keyed by labels like 'ixz'.

    Label position j is the operator on site j.
    """
    if l < 1:
        raise UsageError("cluster needs at least one site")
    out: dict[str, PauliString] = {}
    for code in range(4**l):
        label = ""
        ops: dict[int, str] = {}
        c = code
        for site in range(l):
            op = _OPS[c % 4]
            label += op
            if op != "i":
                ops[site] = op
            c //= 4
        out[label] = pauli_string(ops) if ops else PauliString(1.0 + 0.0j, 0, 0)
    return out
