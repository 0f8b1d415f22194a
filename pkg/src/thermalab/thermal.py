"""Canonical-ensemble references from full symmetry-resolved diagonalization.

A SpectrumTable holds every eigenvalue of the ring (momentum sectors
k = 0..L/2, with conjugate-momentum pairs k and L-k counted through a
multiplicity column) together with per-eigenstate diagonal expectation
tables and cluster reduced density matrices.  All thermal quantities are
Gibbs-weighted reductions of those arrays with max-shifted exponentials.

Correlator tables (ids ``C<r>``) store the raw product expectation
<n|avg(H_0 H_r)|n>; `thermal_expectation` subtracts eps(beta)^2 to return
the connected correlator, while the second-derivative machinery
differentiates the raw product (the quench-side subtraction is a constant).

Per-eigenstate RDMs are stored as their real parts: sectors at k and L-k
carry conjugate eigenvectors, so under the multiplicity weighting the pair
sums to twice the real part and every Gibbs average is exact.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .basis import SymmetryBasis, build_sector_basis, cache_root, content_hash
from .errors import DomainError, ResourceError, UsageError
from .model import (
    MAX_DIAGONALIZATION_SITES,
    BENCHMARK_PARAMS,
    HamiltonianParams,
    SectorSpec,
)
from .observables import parse_observable, partial_trace, entropy_bits
from .operators import sector_hamiltonian
from .pauli import PauliString, bond_strings, pauli_string

__all__ = [
    "SpectrumTable",
    "ThermalCurve",
    "default_observables",
    "full_diagonalize",
    "log_partition",
    "thermal_energy_density",
    "thermal_variance_density",
    "thermal_entropy",
    "thermal_expectation",
    "thermal_curve",
    "solve_beta",
    "thermal_rdm",
    "thermal_cluster_entropy",
    "thermal_mutual_information",
    "thermal_second_derivative",
    "finite_difference_second_derivative",
]

TABLE_VERSION = 1

#: default beta grid of ThermalCurve: [-3, 3] in steps of 1e-3
BETA_GRID = (-3.0, 3.0, 1e-3)


def default_observables(L: int) -> list[str]:
    return ["sx", "sz", "sxsx01", "szsz01"] + [f"C{r}" for r in range(L // 2 + 1)]


@dataclass
class SpectrumTable:
    """Complete spectrum plus per-eigenstate observable tables (see module doc)."""

    L: int
    params: HamiltonianParams
    eigenvalues: np.ndarray       # float64[N], grouped by sector, ascending inside
    multiplicity: np.ndarray      # int8[N], 1 at k=0 / k=L/2, else 2
    sector_of: np.ndarray         # int16[N], momentum index k <= L/2
    diagonals: dict[str, np.ndarray] = field(default_factory=dict)
    rdm_l: int = 0
    rdms: np.ndarray | None = None  # float64[N, 2^rdm_l, 2^rdm_l], real parts

    def __post_init__(self) -> None:
        if int(np.sum(self.multiplicity.astype(np.int64))) != 1 << self.L:
            raise UsageError("eigenvalue multiplicities do not cover the full space")
        for name, values in self.diagonals.items():
            if values.shape != self.eigenvalues.shape:
                raise UsageError(f"diagonal table {name!r} misaligned with spectrum")

    @property
    def n_states(self) -> int:
        return int(self.eigenvalues.size)

    def energy_bounds(self) -> tuple[float, float]:
        return float(self.eigenvalues.min()), float(self.eigenvalues.max())

    def table(self, obs_id: str) -> np.ndarray:
        try:
            return self.diagonals[obs_id]
        except KeyError:
            raise UsageError(
                f"observable {obs_id!r} is not registered in this spectrum table "
                f"(available: {sorted(self.diagonals)})"
            ) from None


@dataclass
class ThermalCurve:
    """Canonical curves on a beta grid (entropy in bits, total not per site)."""

    L: int
    beta: np.ndarray
    epsilon: np.ndarray
    v_tilde: np.ndarray
    entropy_bits: np.ndarray
    log_partition_per_site: np.ndarray

    def __post_init__(self) -> None:
        if not np.all(np.diff(self.epsilon) < 0):
            raise UsageError("epsilon(beta) must be strictly decreasing")


# ---------------------------------------------------------------------------
# construction

def _expand_columns(basis: SymmetryBasis, V: np.ndarray) -> np.ndarray:
    """Full-space expansion of a block of sector coordinate columns."""
    phi = basis.expansion_amplitudes()
    idx = np.where(basis.rep_index >= 0, basis.rep_index, 0)
    F = V[idx, :] * phi[:, None]
    F[basis.rep_index < 0, :] = 0.0
    return F


def _apply_strings(strings: list[PauliString], F: np.ndarray) -> np.ndarray:
    """(sum of strings) @ F for a full-space block F."""
    needs_complex = any(complex(s.coeff).imag != 0.0 for s in strings)
    dtype = np.complex128 if needs_complex or np.iscomplexobj(F) else np.float64
    out = np.zeros(F.shape, dtype=dtype)
    states = np.arange(F.shape[0], dtype=np.int64)
    for s in strings:
        targets, coeff = s.apply(states)
        out[targets] += coeff[:, None] * F
    return out


def _column_dots(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    return np.einsum("sn,sn->n", A.conj(), B).real


def _sector_tables(
    basis: SymmetryBasis,
    V: np.ndarray,
    params: HamiltonianParams,
    obs_ids: list[str],
    l_max: int,
) -> tuple[dict[str, np.ndarray], np.ndarray | None]:
    """Per-eigenstate diagonal expectations and RDM real parts for one sector."""
    L = basis.L
    nb = V.shape[1]
    dim_full = 1 << L
    pauli_specs: dict[str, list[PauliString]] = {}
    corr_rs: dict[str, int] = {}
    for obs_id in obs_ids:
        spec = parse_observable(obs_id, L)
        if spec.kind == "pauli":
            pauli_specs[obs_id] = [pauli_string(dict(spec.payload))]
        elif spec.kind == "correlator":
            corr_rs[obs_id] = spec.payload[0]
        else:
            raise UsageError(
                f"only operator expectations can be tabulated per eigenstate, got {obs_id!r}"
            )
    bond0 = bond_strings(0, L, params.h_x, params.h_z)

    out = {obs_id: np.empty(nb) for obs_id in obs_ids}
    rdms = None
    d = 1 << l_max
    if l_max > 0:
        rdms = np.empty((nb, d, d))

    block = max(16, min(nb, (1 << 22) // dim_full)) if nb else 0
    start = 0
    while start < nb:
        stop = min(nb, start + block)
        F = _expand_columns(basis, V[:, start:stop])
        for obs_id, strings in pauli_specs.items():
            out[obs_id][start:stop] = _column_dots(F, _apply_strings(strings, F))
        if corr_rs:
            w0 = _apply_strings(bond0, F)
            for obs_id, r in corr_rs.items():
                wr = w0 if r == 0 else _apply_strings(bond_strings(r, L, params.h_x, params.h_z), F)
                out[obs_id][start:stop] = _column_dots(w0, wr)
        if rdms is not None:
            A = np.ascontiguousarray(F.reshape(-1, d, stop - start).transpose(2, 1, 0))
            rho = A @ A.conj().transpose(0, 2, 1)
            rdms[start:stop] = rho.real
        start = stop
    return out, rdms


def _cache_path(L: int, params: HamiltonianParams, obs_ids: list[str], l_max: int, cache_dir=None):
    tag = content_hash(("|".join(obs_ids) + f"|l{l_max}").encode())[:12]
    name = f"spectrum_L{L}_{params.key()}_{tag}_v{TABLE_VERSION}.npz"
    return cache_root(cache_dir) / "spectrum" / name


def _save_table(path, table: SpectrumTable, obs_ids: list[str]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    meta = {
        "version": TABLE_VERSION,
        "L": table.L,
        "h_x": table.params.h_x,
        "h_z": table.params.h_z,
        "observables": obs_ids,
        "rdm_l": table.rdm_l,
    }
    payload = {
        "meta": np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8),
        "eigenvalues": table.eigenvalues,
        "multiplicity": table.multiplicity,
        "sector_of": table.sector_of,
    }
    for i, obs_id in enumerate(obs_ids):
        payload[f"diag_{i}"] = table.diagonals[obs_id]
    if table.rdms is not None:
        payload["rdms"] = table.rdms
    tmp = str(path) + ".tmp"
    with open(tmp, "wb") as fh:
        np.savez(fh, **payload)
    os.replace(tmp, path)


def _load_table(path, L: int, params: HamiltonianParams, obs_ids: list[str], l_max: int):
    if not path.exists():
        return None
    with np.load(path) as data:
        meta = json.loads(bytes(data["meta"]).decode())
        if (
            meta.get("version") != TABLE_VERSION
            or meta.get("L") != L
            or meta.get("h_x") != params.h_x
            or meta.get("h_z") != params.h_z
            or meta.get("observables") != obs_ids
            or meta.get("rdm_l") != l_max
        ):
            return None
        diagonals = {obs_id: data[f"diag_{i}"] for i, obs_id in enumerate(obs_ids)}
        return SpectrumTable(
            L=L,
            params=params,
            eigenvalues=data["eigenvalues"],
            multiplicity=data["multiplicity"],
            sector_of=data["sector_of"],
            diagonals=diagonals,
            rdm_l=l_max,
            rdms=data["rdms"] if "rdms" in data else None,
        )


def full_diagonalize(
    L: int,
    params: HamiltonianParams = BENCHMARK_PARAMS,
    observables: list[str] | None = None,
    l_max: int = 3,
    use_cache: bool = True,
    cache_dir=None,
    force: bool = False,
) -> SpectrumTable:
    """Diagonalize every momentum sector k = 0..L/2 and tabulate observables.

    Interior momenta enter with multiplicity 2 (the L-k sector is the complex
    conjugate and shares eigenvalues and diagonal tables).  Results are cached
    on disk keyed by geometry, parameters and the registered observable set.
    """
    if L > MAX_DIAGONALIZATION_SITES and not force:
        raise ResourceError(
            f"full diagonalization of L={L} exceeds the guard "
            f"({MAX_DIAGONALIZATION_SITES}); pass force=True to override"
        )
    if not 0 <= l_max <= 3:
        raise UsageError("per-eigenstate RDMs supported for l_max in 0..3")
    if 2 * l_max > L:
        raise UsageError(f"l_max={l_max} needs L >= {2 * l_max}")
    obs_ids = list(observables) if observables is not None else default_observables(L)
    path = _cache_path(L, params, obs_ids, l_max, cache_dir)
    if use_cache:
        cached = _load_table(path, L, params, obs_ids, l_max)
        if cached is not None:
            return cached

    eigs, mults, sectors = [], [], []
    diag_parts: dict[str, list[np.ndarray]] = {obs_id: [] for obs_id in obs_ids}
    rdm_parts: list[np.ndarray] = []
    for k in range(L // 2 + 1):
        basis = build_sector_basis(SectorSpec(L=L, k=k))
        H = sector_hamiltonian(basis, params).toarray()
        E, V = np.linalg.eigh(H)
        mult = 1 if (k == 0 or 2 * k == L) else 2
        tables, rdms = _sector_tables(basis, V, params, obs_ids, l_max)
        eigs.append(E)
        mults.append(np.full(E.size, mult, dtype=np.int8))
        sectors.append(np.full(E.size, k, dtype=np.int16))
        for obs_id in obs_ids:
            diag_parts[obs_id].append(tables[obs_id])
        if rdms is not None:
            rdm_parts.append(rdms)

    table = SpectrumTable(
        L=L,
        params=params,
        eigenvalues=np.concatenate(eigs),
        multiplicity=np.concatenate(mults),
        sector_of=np.concatenate(sectors),
        diagonals={obs_id: np.concatenate(diag_parts[obs_id]) for obs_id in obs_ids},
        rdm_l=l_max,
        rdms=np.concatenate(rdm_parts) if rdm_parts else None,
    )
    if use_cache:
        _save_table(path, table, obs_ids)
    return table


# ---------------------------------------------------------------------------
# Gibbs reductions

def _weights(table: SpectrumTable, beta: float) -> tuple[np.ndarray, float]:
    """Unnormalized max-shifted Boltzmann weights (with multiplicity) and shift."""
    logw = -beta * table.eigenvalues
    shift = float(logw.max())
    w = table.multiplicity * np.exp(logw - shift)
    return w, shift


def log_partition(table: SpectrumTable, beta: float) -> float:
    w, shift = _weights(table, beta)
    return shift + math.log(float(w.sum()))


def _gibbs_mean(table: SpectrumTable, values: np.ndarray, beta: float) -> float:
    w, _ = _weights(table, beta)
    return float(w @ values) / float(w.sum())


def thermal_energy_density(table: SpectrumTable, beta: float) -> float:
    return _gibbs_mean(table, table.eigenvalues, beta) / table.L


def thermal_variance_density(table: SpectrumTable, beta: float) -> float:
    w, _ = _weights(table, beta)
    z = float(w.sum())
    e1 = float(w @ table.eigenvalues) / z
    e2 = float(w @ (table.eigenvalues * table.eigenvalues)) / z
    return (e2 - e1 * e1) / table.L


def thermal_entropy(table: SpectrumTable, beta: float) -> float:
    """S = (ln Z + beta <H>) / ln 2, in bits."""
    w, shift = _weights(table, beta)
    z = float(w.sum())
    ln_z = shift + math.log(z)
    energy = float(w @ table.eigenvalues) / z
    return (ln_z + beta * energy) / math.log(2.0)


def _is_correlator(obs_id: str) -> bool:
    return obs_id.startswith("C") and obs_id[1:].isdigit()


def _resolve_beta(table: SpectrumTable, beta: float | None, epsilon: float | None) -> float:
    if (beta is None) == (epsilon is None):
        raise UsageError("pass exactly one of beta or epsilon")
    return beta if beta is not None else solve_beta(table, epsilon)


def thermal_expectation(
    table: SpectrumTable,
    obs_id: str,
    beta: float | None = None,
    epsilon: float | None = None,
) -> float:
    """Gibbs average of a registered observable.

    Correlator ids return the connected value, subtracting eps(beta)^2.
    """
    b = _resolve_beta(table, beta, epsilon)
    value = _gibbs_mean(table, table.table(obs_id), b)
    if _is_correlator(obs_id):
        value -= thermal_energy_density(table, b) ** 2
    return value


def thermal_curve(table: SpectrumTable, betas: np.ndarray | None = None) -> ThermalCurve:
    if betas is None:
        lo, hi, step = BETA_GRID
        betas = np.arange(lo, hi + step / 2, step)
    betas = np.asarray(betas, dtype=np.float64)
    E = table.eigenvalues
    mult = table.multiplicity.astype(np.float64)
    eps = np.empty(betas.size)
    var = np.empty(betas.size)
    ent = np.empty(betas.size)
    lnz = np.empty(betas.size)
    chunk = max(1, (1 << 21) // max(E.size, 1))
    for start in range(0, betas.size, chunk):
        b = betas[start : start + chunk]
        logw = -b[:, None] * E[None, :]
        shift = logw.max(axis=1)
        w = mult[None, :] * np.exp(logw - shift[:, None])
        z = w.sum(axis=1)
        e1 = (w @ E) / z
        e2 = (w @ (E * E)) / z
        ln_z = shift + np.log(z)
        sl = slice(start, start + b.size)
        eps[sl] = e1 / table.L
        var[sl] = (e2 - e1 * e1) / table.L
        ent[sl] = (ln_z + b * e1) / math.log(2.0)
        lnz[sl] = ln_z / table.L
    return ThermalCurve(
        L=table.L,
        beta=betas,
        epsilon=eps,
        v_tilde=var,
        entropy_bits=ent,
        log_partition_per_site=lnz,
    )


def solve_beta(
    table: SpectrumTable,
    eps_target: float,
    tol: float = 1e-13,
    max_iter: int = 200,
) -> float:
    """Invert eps(beta) = eps_target by safeguarded Newton (deps/dbeta = -v)."""
    e_lo, e_hi = table.energy_bounds()
    if not e_lo / table.L < eps_target < e_hi / table.L:
        raise DomainError(
            f"energy density {eps_target} outside the attainable open interval "
            f"({e_lo / table.L:.6f}, {e_hi / table.L:.6f})"
        )

    def f(b: float) -> float:
        return thermal_energy_density(table, b) - eps_target

    lo, hi = -3.0, 3.0
    f_lo, f_hi = f(lo), f(hi)
    while f_lo < 0.0:  # target above eps(lo): need more negative beta
        lo *= 2.0
        if lo < -65536.0:
            raise DomainError(f"energy density {eps_target} too close to the spectrum edge")
        f_lo = f(lo)
    while f_hi > 0.0:
        hi *= 2.0
        if hi > 65536.0:
            raise DomainError(f"energy density {eps_target} too close to the spectrum edge")
        f_hi = f(hi)

    beta = 0.0 if lo < 0.0 < hi else 0.5 * (lo + hi)
    for _ in range(max_iter):
        val = f(beta)
        if abs(val) < tol:
            return beta
        if val > 0.0:
            lo = beta
        else:
            hi = beta
        slope = -thermal_variance_density(table, beta)
        step_ok = slope < 0.0
        if step_ok:
            nxt = beta - val / slope
            step_ok = lo < nxt < hi
        beta = nxt if step_ok else 0.5 * (lo + hi)
    raise DomainError(f"beta solve did not converge for energy density {eps_target}")


def thermal_rdm(table: SpectrumTable, beta: float, l: int) -> np.ndarray:
    """Gibbs average of eigenstate RDMs, traced down to an l-site cluster."""
    if table.rdms is None or table.rdm_l == 0:
        raise UsageError("this spectrum table was built without eigenstate RDMs")
    if not 1 <= l <= table.rdm_l:
        raise UsageError(f"cluster size {l} outside the cached range 1..{table.rdm_l}")
    w, _ = _weights(table, beta)
    w = w / float(w.sum())
    d = 1 << table.rdm_l
    rho = (w @ table.rdms.reshape(table.n_states, d * d)).reshape(d, d)
    rho = 0.5 * (rho + rho.T)
    if l < table.rdm_l:
        rho = partial_trace(rho, table.rdm_l, l).real
    return rho


def thermal_cluster_entropy(table: SpectrumTable, beta: float, l: int) -> float:
    return entropy_bits(thermal_rdm(table, beta, l))


def thermal_mutual_information(table: SpectrumTable, beta: float, l: int, r: int) -> float:
    if l + r > table.rdm_l:
        raise UsageError(
            f"mutual information of clusters {l}+{r} needs cached RDMs up to "
            f"l={l + r}, table has {table.rdm_l}"
        )
    return (
        thermal_cluster_entropy(table, beta, l)
        + thermal_cluster_entropy(table, beta, r)
        - thermal_cluster_entropy(table, beta, l + r)
    )


# ---------------------------------------------------------------------------
# ETH second derivative (Gibbs moments of h = H/L against an observable)

def _second_derivative_from_values(
    table: SpectrumTable, values: np.ndarray, beta: float
) -> float:
    L = table.L
    w, _ = _weights(table, beta)
    z = float(w.sum())
    h = table.eigenvalues / L
    eps = float(w @ h) / z
    h2 = float(w @ (h * h)) / z
    h3 = float(w @ (h * h * h)) / z
    o = float(w @ values) / z
    ho = float(w @ (h * values)) / z
    h2o = float(w @ (h * h * values)) / z

    deps_dbeta = -L * (h2 - eps * eps)
    if not deps_dbeta < -1e-12:
        raise DomainError("thermal variance vanishes; too close to the spectrum edge")
    d2eps_dbeta2 = L * L * (h3 - 3.0 * eps * h2 + 2.0 * eps**3)
    do_dbeta = L * (eps * o - ho)
    d2o_dbeta2 = L * L * (h2o - 2.0 * eps * ho + (2.0 * eps * eps - h2) * o)
    do_deps = do_dbeta / deps_dbeta
    return (d2o_dbeta2 - do_deps * d2eps_dbeta2) / (deps_dbeta * deps_dbeta)


def thermal_second_derivative(
    table: SpectrumTable,
    obs_id: str,
    epsilon: float | None = None,
    beta: float | None = None,
) -> float:
    """d^2 O / d eps^2 along the canonical curve, from exact Gibbs moments.

    For correlator ids this differentiates the raw product expectation
    <avg(H_0 H_r)>; the quench-side subtraction eps_0^2 is a constant with
    respect to the ensemble energy density and drops out of the derivative.
    """
    b = _resolve_beta(table, beta, epsilon)
    return _second_derivative_from_values(table, table.table(obs_id), b)


def finite_difference_second_derivative(
    table: SpectrumTable,
    obs_id: str,
    epsilon: float,
    step: float = 0.02,
) -> float:
    """Centered second difference of the raw thermal expectation along eps."""
    values = table.table(obs_id)

    def raw(eps: float) -> float:
        return _gibbs_mean(table, values, solve_beta(table, eps))

    return (raw(epsilon + step) - 2.0 * raw(epsilon) + raw(epsilon - step)) / step**2
