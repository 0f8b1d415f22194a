"""Translation-invariant Bloch product states and their closed-form moments.

Every site carries the same spin direction,

    |psi(theta, phi)> = prod_j [ cos(theta/2)|up> + e^{i phi} sin(theta/2)|down> ],

which makes the energy density and the bond-energy correlations of the state
available in closed form:

    eps   = cos^2(theta) + h_z cos(theta) + h_x cos(phi) sin(theta)
    u_xx  = sin^2(theta)
    u_x   = -2 cos(theta) sin(theta) + h_x cos(phi) cos(theta) - h_z sin(theta)
    u_y   = h_x sin(phi)
    C_0   = u_xx^2 + u_x^2/2 + u_y^2/2
    C_1   = u_x^2/4 + u_y^2/4,   C_r = 0 for r > 1
    v     = u_xx^2 + u_x^2 + u_y^2  ( = C_0 + 2 C_1 )

The shipped catalog lists the named benchmark states with their reference
energy density, variance density, and (where available) thermal variance and
matching inverse temperature.  Rows whose energy density was filled in from
the value shared by their series are marked inferred_epsilon.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .basis import SectorVector, SymmetryBasis
from .errors import NumericalError, UsageError
from .model import HamiltonianParams

__all__ = [
    "energy_density",
    "bond_correlations",
    "variance_density",
    "CatalogEntry",
    "load_catalog",
    "catalog_entry",
    "build_bloch_state",
    "random_sector_state",
]


def energy_density(theta: float, phi: float, params: HamiltonianParams) -> float:
    ct, st = math.cos(theta), math.sin(theta)
    return ct * ct + params.h_z * ct + params.h_x * math.cos(phi) * st


def _u_components(theta: float, phi: float, params: HamiltonianParams) -> tuple[float, float, float]:
    ct, st = math.cos(theta), math.sin(theta)
    u_xx = st * st
    u_x = -2.0 * ct * st + params.h_x * math.cos(phi) * ct - params.h_z * st
    u_y = params.h_x * math.sin(phi)
    return u_xx, u_x, u_y


def bond_correlations(theta: float, phi: float, params: HamiltonianParams) -> tuple[float, float]:
    """Connected bond-energy correlations (C_0, C_1) of the product state."""
    u_xx, u_x, u_y = _u_components(theta, phi, params)
    c0 = u_xx**2 + 0.5 * u_x**2 + 0.5 * u_y**2
    c1 = 0.25 * u_x**2 + 0.25 * u_y**2
    return c0, c1


def variance_density(theta: float, phi: float, params: HamiltonianParams) -> float:
    u_xx, u_x, u_y = _u_components(theta, phi, params)
    return u_xx**2 + u_x**2 + u_y**2


@dataclass(frozen=True)
class CatalogEntry:
    name: str
    theta_over_pi: float
    phi_over_pi: float
    epsilon: float
    v: float
    v_tilde: float  # nan when the source row is blank
    beta: float     # nan when the source row is blank
    inferred_epsilon: bool

    @property
    def theta(self) -> float:
        return self.theta_over_pi * math.pi

    @property
    def phi(self) -> float:
        return self.phi_over_pi * math.pi


def load_catalog() -> dict[str, CatalogEntry]:
    """Named benchmark states shipped with the package."""
    text = resources.files("thermalab").joinpath("data/catalog.csv").read_text()
    out: dict[str, CatalogEntry] = {}
    for row in csv.DictReader(text.splitlines()):
        def num(field: str) -> float:
            raw = row[field].strip()
            return float(raw) if raw else math.nan

        entry = CatalogEntry(
            name=row["name"],
            theta_over_pi=num("theta_over_pi"),
            phi_over_pi=num("phi_over_pi"),
            epsilon=num("epsilon"),
            v=num("v"),
            v_tilde=num("v_tilde"),
            beta=num("beta"),
            inferred_epsilon=row["inferred_epsilon"].strip() == "1",
        )
        out[entry.name] = entry
    return out


_CATALOG: dict[str, CatalogEntry] | None = None


def catalog_entry(name: str) -> CatalogEntry:
    global _CATALOG
    if _CATALOG is None:
        _CATALOG = load_catalog()
    try:
        return _CATALOG[name]
    except KeyError:
        known = ", ".join(sorted(_CATALOG))
        raise UsageError(f"unknown catalog state {name!r}; known states: {known}") from None


def build_bloch_state(basis: SymmetryBasis, theta: float, phi: float) -> SectorVector:
    """Sector coordinates of the product state (k=0 reflection-even sector only).

    The state is exactly translation- and reflection-invariant, so its
    amplitude on a basis vector is sqrt(orbit size) times the product-state
    amplitude of any orbit member; per-site amplitudes depend only on the
    population of up bits.
    """
    if not basis.uniform:
        raise UsageError("Bloch product states live in the k=0 reflection-even sector")
    L = basis.L
    c_up = math.cos(theta / 2.0)
    a_down = complex(math.sin(theta / 2.0)) * complex(math.cos(phi), math.sin(phi))
    pop = np.bitwise_count(basis.reps).astype(np.int64)
    amps = np.power(c_up, pop) * np.power(a_down, (L - pop))
    data = np.sqrt(basis.orbit_sizes().astype(np.float64)) * amps
    vec = SectorVector(basis, data)
    n = vec.norm()
    if abs(n - 1.0) > 1e-10:
        raise NumericalError(f"product state norm deviates from 1 by {abs(n - 1.0):.3e}")
    return SectorVector(basis, vec.data / n)


def random_sector_state(basis: SymmetryBasis, rng: np.random.Generator) -> SectorVector:
    """Random sector state with independent amplitudes r e^{i phi},
    r standard-normal and phi uniform — the cheap near-Haar recipe."""
    if basis.dim == 0:
        raise UsageError("cannot sample from an empty sector")
    r = rng.standard_normal(basis.dim)
    ang = rng.uniform(0.0, 2.0 * np.pi, basis.dim)
    data = r * np.exp(1j * ang)
    return SectorVector(basis, data).normalized()
