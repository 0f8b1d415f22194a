"""Model definition: ring geometry, Hamiltonian parameters, symmetry sectors.

The chain is a ring of L spin-1/2 sites with

    H = sum_j H_j,
    H_j = sz_j sz_{j+1} + (h_x/2)(sx_j + sx_{j+1}) + (h_z/2)(sz_j + sz_{j+1}),

site indices mod L.  Basis states are integers: bit j is site j, bit value 1
means spin up (sigma^z eigenvalue +1).  Translation T moves site j -> j+1
(integer rotate-left by one); reflection R maps site j -> L-1-j (bit reversal).
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ConfigurationError, UsageError

__all__ = [
    "HamiltonianParams",
    "BENCHMARK_PARAMS",
    "SectorSpec",
    "MAX_EVOLUTION_SITES",
    "MAX_DIAGONALIZATION_SITES",
]

# Default size guards; overridable through the force flags of the heavy entry
# points.  Evolution is matrix-free, full diagonalization is dense per sector.
MAX_EVOLUTION_SITES = 24
MAX_DIAGONALIZATION_SITES = 16


@dataclass(frozen=True)
class HamiltonianParams:
    """Transverse/longitudinal field pair (h_x, h_z) of the Ising ring."""

    h_x: float = -1.05
    h_z: float = 0.5

    def variance_density_infinite_temperature(self) -> float:
        """Energy variance density of the infinite-temperature ensemble.

        Closed form 1 + h_x^2 + h_z^2, valid for any ring with at least
        three sites (bond operators on non-adjacent bonds are uncorrelated
        at beta = 0 and adjacent-bond cross terms are traceless).
        """
        return 1.0 + self.h_x**2 + self.h_z**2

    def key(self) -> str:
        return f"hx{self.h_x!r}_hz{self.h_z!r}"


#: Parameter point used throughout: robustly non-integrable.
BENCHMARK_PARAMS = HamiltonianParams(h_x=-1.05, h_z=0.5)


@dataclass(frozen=True)
class SectorSpec:
    """A translation/reflection symmetry sector of an L-site ring.

    k is the integer momentum index (omega = 2 pi k / L); reflection is
    +1 / -1 for the even/odd sector of the bit-reversal parity and None
    when the basis is resolved by momentum only.  Reflection sectors are
    meaningful only at k = 0 and k = L/2, where reflection commutes with
    the translation character.
    """

    L: int
    k: int = 0
    reflection: int | None = None

    def __post_init__(self) -> None:
        if self.L < 2:
            raise ConfigurationError(f"ring needs at least 2 sites, got L={self.L}")
        if not 0 <= self.k < self.L:
            raise UsageError(f"momentum index k={self.k} outside 0..L-1 for L={self.L}")
        if self.reflection not in (None, 1, -1):
            raise UsageError(f"reflection must be +1, -1 or None, got {self.reflection!r}")
        real_momenta = {0} | ({self.L // 2} if self.L % 2 == 0 else set())
        if self.reflection is not None and self.k not in real_momenta:
            raise UsageError(
                f"reflection sector only defined at k=0 or k=L/2, got k={self.k} for L={self.L}"
            )

    @property
    def omega(self) -> float:
        import math

        return 2.0 * math.pi * self.k / self.L

    def label(self) -> str:
        refl = {None: "n", 1: "p", -1: "m"}[self.reflection]
        return f"L{self.L}_k{self.k}_{refl}"
