"""Observable measurement on sector states: translation-averaged Pauli
expectations, bond-energy correlators, cluster entropies / mutual information,
fidelity, and the Page random-state baselines.

Observable identifiers
----------------------
``sx`` ``sy`` ``sz``            site-averaged single Pauli expectations
``sxsx01`` ``szsz01`` (etc.)    two-site patterns  s<a>s<b><i><j>
``C0`` .. ``C<L/2>``            connected bond-energy correlators
                                C_r = <avg(H_0 H_{r})> - eps_0^2
``S1`` .. ``S<l>``              entanglement entropy (bits) of sites 0..l-1
``I_<l>_<r>``                   mutual information S_l + S_r - S_{l+r}
``fid``                         overlap-squared with the initial state
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

from .basis import SectorVector, SymmetryBasis
from .errors import ResourceError, UsageError
from .model import HamiltonianParams
from .operators import csr_matvec, expectation, sector_block, sector_hamiltonian
from .pauli import bond_product_strings, cluster_strings, pauli_string

__all__ = [
    "ObservableSpec",
    "parse_observable",
    "MeasurementPlan",
    "reduced_density_matrix",
    "rdm_blocks_from_columns",
    "partial_trace",
    "entropy_bits",
    "fidelity",
    "correlator_weights",
    "page_entropy_exact",
    "page_entropy_asymptotic",
    "page_mutual_information_exact",
]

#: eigenvalues below this are dropped from entropies (fp noise floor)
ENTROPY_CLIP = 1e-15

#: largest cluster handled through Pauli tomography on sector coordinates
TOMOGRAPHY_MAX = 3

_PAULI_SINGLE = re.compile(r"^s([xyz])$")
_PAULI_PAIR = re.compile(r"^s([xyz])s([xyz])(\d)(\d)$")
_CORR = re.compile(r"^C(\d+)$")
_ENT = re.compile(r"^S(\d+)$")
_MI = re.compile(r"^I_(\d+)_(\d+)$")


@dataclass(frozen=True)
class ObservableSpec:
    id: str
    kind: str            # pauli | correlator | entropy | mutual_info | fidelity
    payload: tuple = ()


def parse_observable(obs_id: str, L: int) -> ObservableSpec:
    m = _PAULI_SINGLE.match(obs_id)
    if m:
        return ObservableSpec(obs_id, "pauli", ((0, m.group(1)),))
    m = _PAULI_PAIR.match(obs_id)
    if m:
        a, b = int(m.group(3)), int(m.group(4))
        if a == b or max(a, b) >= L:
            raise UsageError(f"bad site pair in observable {obs_id!r}")
        return ObservableSpec(obs_id, "pauli", ((a, m.group(1)), (b, m.group(2))))
    m = _CORR.match(obs_id)
    if m:
        r = int(m.group(1))
        if r > L // 2:
            raise UsageError(f"correlator distance {r} beyond L/2 = {L // 2}")
        return ObservableSpec(obs_id, "correlator", (r,))
    m = _ENT.match(obs_id)
    if m:
        l = int(m.group(1))
        if not 1 <= l <= L // 2:
            raise UsageError(f"cluster size {l} outside 1..L/2 for L={L}")
        return ObservableSpec(obs_id, "entropy", (l,))
    m = _MI.match(obs_id)
    if m:
        l, r = int(m.group(1)), int(m.group(2))
        if l + r > L // 2:
            raise UsageError(f"mutual information needs l + r <= L/2, got {obs_id!r}")
        return ObservableSpec(obs_id, "mutual_info", (l, r))
    if obs_id == "fid":
        return ObservableSpec(obs_id, "fidelity")
    raise UsageError(f"unknown observable id {obs_id!r}")


def correlator_weights(L: int) -> dict[int, int]:
    """Ring multiplicity of each distance r = 0..L/2 (interior distances twice)."""
    w = {r: 2 for r in range(0, L // 2 + 1)}
    w[0] = 1
    if L % 2 == 0:
        w[L // 2] = 1
    return w


def entropy_bits(rho: np.ndarray, clip: float = ENTROPY_CLIP) -> float:
    w = np.linalg.eigvalsh(rho)
    w = w[w > clip]
    return float(-(w * np.log2(w)).sum())


def partial_trace(rho: np.ndarray, l_from: int, l_to: int) -> np.ndarray:
    """Trace sites l_to..l_from-1 (the high bits of the cluster index) out."""
    if l_to > l_from:
        raise UsageError("partial_trace cannot grow the cluster")
    hi = 1 << (l_from - l_to)
    lo = 1 << l_to
    return np.einsum("iaib->ab", rho.reshape(hi, lo, hi, lo))


def rdm_from_full(full: np.ndarray, l: int, L: int) -> np.ndarray:
    """RDM of sites 0..l-1 from a full-space vector."""
    A = full.reshape(1 << (L - l), 1 << l)
    return A.T @ A.conj()


def rdm_blocks_from_columns(F: np.ndarray, l: int, L: int) -> np.ndarray:
    """Per-column RDMs of a (2^L, n) block of full-space vectors -> (n, 2^l, 2^l)."""
    n = F.shape[1]
    d = 1 << l
    A = F.reshape(1 << (L - l), d, n)
    arr = np.ascontiguousarray(A.transpose(2, 1, 0))  # (n, d, 2^{L-l})
    return arr @ arr.conj().transpose(0, 2, 1)


def fidelity(data: np.ndarray, reference: np.ndarray) -> float:
    return float(abs(np.vdot(reference, data)) ** 2)


def reduced_density_matrix(
    state: SectorVector,
    l: int,
    method: str = "auto",
) -> np.ndarray:
    """RDM of the l-site cluster at sites 0..l-1 of a sector state.

    tomography: reconstruct from 4^l translation-averaged Pauli expectations
    (exact for translation-invariant states; l <= TOMOGRAPHY_MAX).
    expansion: lift to the full space and trace directly.
    """
    basis = state.basis
    if not 1 <= l <= basis.L // 2:
        raise UsageError(f"cluster size {l} outside 1..L/2")
    if method == "auto":
        method = "tomography" if l <= TOMOGRAPHY_MAX else "expansion"
    if method == "tomography":
        if l > TOMOGRAPHY_MAX:
            raise ResourceError(f"tomography limited to l <= {TOMOGRAPHY_MAX}")
        mats = _cluster_blocks(basis, l)
        return _rdm_from_tomography(mats, state.data, l)
    if method == "expansion":
        return rdm_from_full(state.to_full(), l, basis.L)
    raise UsageError(f"unknown RDM method {method!r}")


def _cluster_blocks(basis: SymmetryBasis, l: int) -> dict[str, object]:
    key = ("cluster_blocks", l)
    cached = basis._ops.get(key)
    if cached is not None:
        return cached
    mats = {
        label: sector_block(basis, [s], cache_key=("cluster", l, label))
        for label, s in cluster_strings(l).items()
        if label != "i" * l
    }
    basis._ops[key] = mats
    return mats


def _rdm_from_tomography(mats: dict, data: np.ndarray, l: int) -> np.ndarray:
    d = 1 << l
    nrm2 = float(np.real(np.vdot(data, data)))
    rho = np.eye(d, dtype=complex) * (nrm2 / d)
    strings = cluster_strings(l)
    for label, mat in mats.items():
        val = expectation(mat, data)
        if abs(val) < 1e-15:
            continue
        rho += (val / d) * strings[label].dense(l)
    return rho


class MeasurementPlan:
    """Pre-assembled measurement kernels for one basis + observable schedule.

    The correlator subtraction point eps_0 and the fidelity reference are
    frozen from the initial state at construction.
    """

    def __init__(
        self,
        basis: SymmetryBasis,
        specs: list[ObservableSpec],
        params: HamiltonianParams,
        initial: SectorVector,
    ) -> None:
        ids = [s.id for s in specs]
        if len(set(ids)) != len(ids):
            raise UsageError(f"duplicate observable ids in schedule: {ids}")
        self.basis = basis
        self.specs = list(specs)
        self.params = params
        self._H = sector_hamiltonian(basis, params)
        self._reference = initial.data.copy()
        e0 = expectation(self._H, initial.data)
        self.epsilon0 = e0 / basis.L
        h1 = csr_matvec(self._H, initial.data)
        self.v0 = float(np.real(np.vdot(h1, h1))) / basis.L - basis.L * self.epsilon0**2

        self._pauli_ops = {}
        self._corr_ops = {}
        tomo_sizes: set[int] = set()
        self._expansion_sizes: set[int] = set()
        for spec in self.specs:
            if spec.kind == "pauli":
                ops = {site: op for site, op in spec.payload}
                self._pauli_ops[spec.id] = sector_block(
                    basis, [pauli_string(ops)], cache_key=("pauli", spec.payload)
                )
            elif spec.kind == "correlator":
                (r,) = spec.payload
                strings = bond_product_strings(r, basis.L, params.h_x, params.h_z)
                self._corr_ops[spec.id] = sector_block(
                    basis, strings, cache_key=("HH", r, params)
                )
            elif spec.kind in ("entropy", "mutual_info"):
                sizes = {spec.payload[0]} if spec.kind == "entropy" else {
                    spec.payload[0], spec.payload[1], spec.payload[0] + spec.payload[1]
                }
                for l in sizes:
                    (tomo_sizes if l <= TOMOGRAPHY_MAX else self._expansion_sizes).add(l)
        self._tomo_l = max(tomo_sizes, default=0)
        if self._tomo_l:
            self._tomo_mats = _cluster_blocks(basis, self._tomo_l)

    def measure(self, data: np.ndarray) -> dict[str, float]:
        out: dict[str, float] = {}
        rhos: dict[int, np.ndarray] = {}
        if self._tomo_l:
            rho = _rdm_from_tomography(self._tomo_mats, data, self._tomo_l)
            rhos[self._tomo_l] = rho
            for l in range(self._tomo_l - 1, 0, -1):
                rhos[l] = partial_trace(rhos[l + 1], l + 1, l)
        if self._expansion_sizes:
            full = self.basis.expand(data)
            for l in sorted(self._expansion_sizes):
                rhos[l] = rdm_from_full(full, l, self.basis.L)
        entropies = {l: entropy_bits(r) for l, r in rhos.items()}
        for spec in self.specs:
            if spec.kind == "pauli":
                out[spec.id] = expectation(self._pauli_ops[spec.id], data)
            elif spec.kind == "correlator":
                out[spec.id] = expectation(self._corr_ops[spec.id], data) - self.epsilon0**2
            elif spec.kind == "entropy":
                out[spec.id] = entropies[spec.payload[0]]
            elif spec.kind == "mutual_info":
                l, r = spec.payload
                out[spec.id] = entropies[l] + entropies[r] - entropies[l + r]
            elif spec.kind == "fidelity":
                out[spec.id] = fidelity(data, self._reference)
        return out

    def energy(self, data: np.ndarray) -> float:
        return expectation(self._H, data)


def page_entropy_exact(l: int, L: int) -> float:
    """Haar-average entanglement entropy (bits) of an l : L-l bipartition.

    Finite sum  sum_{k=d_B+1}^{d_A d_B} 1/k - (d_A - 1)/(2 d_B)  in nats,
    for d_A <= d_B.
    """
    if not 0 < l < L:
        raise UsageError("bipartition needs 0 < l < L")
    d_a, d_b = 1 << min(l, L - l), 1 << max(l, L - l)
    total = d_a * d_b
    if total <= 1 << 22:
        harm = math.fsum(1.0 / k for k in range(d_b + 1, total + 1))
    else:
        ks = np.arange(d_b + 1, total + 1, dtype=np.float64)
        harm = float(np.sum(1.0 / ks))
    nats = harm - (d_a - 1) / (2.0 * d_b)
    return nats / math.log(2.0)


def page_entropy_asymptotic(l: int, L: int) -> float:
    """Large-system form  l - 2^{2l-L}/(2 ln 2)  (bits), for l <= L/2."""
    if l > L // 2:
        raise UsageError("asymptotic form holds for l <= L/2")
    return l - 2.0 ** (2 * l - L) / (2.0 * math.log(2.0))


def page_mutual_information_exact(l: int, L: int) -> float:
    """Haar-average mutual information of two l-site clusters: 2 P_l - P_{2l}."""
    return 2.0 * page_entropy_exact(l, L) - page_entropy_exact(2 * l, L)
