"""Symmetry-adapted bases of the ring: momentum sectors and parity-resolved
k = 0 / k = L/2 sectors.

A sector basis vector is |a> = P |r_a> / sqrt(n_a) with P the group projector
(1/|G|) sum_g chi*(g) U_g, r_a the numerically smallest state of its orbit and
n_a = <r_a|P|r_a> > 0.  The full-space amplitude of |a> on state s is

    Phi(s) = <s|a> = amp(s) / sqrt(n_a),   amp(s) = <s|P|r_a>,

so for a pure momentum sector amp(s) = e^{i omega m_s} / p_a (T^{m_s} r_a = s,
p_a = translation period), and for the k=0 reflection-even sector Phi is the
constant 1/sqrt(orbit size) on the orbit.
"""

from __future__ import annotations

import hashlib
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, ResourceError, UsageError
from .model import SectorSpec

__all__ = [
    "SymmetryBasis",
    "SectorVector",
    "build_sector_basis",
    "get_basis",
    "save_basis",
    "load_basis",
    "basis_cache_path",
    "rotate_left",
    "reflect_bits",
    "content_hash",
    "cache_root",
]

_MAGIC = b"THLB"
_VERSION = 1
_HEADER = struct.Struct("<4sIHHb")

# Building a basis walks O(L) full-space arrays; keep a sane ceiling.
MAX_BASIS_SITES = 26


def rotate_left(states: np.ndarray | int, L: int, m: int = 1) -> np.ndarray | int:
    """Translate site j -> j+m on bit-encoded states (integer rotate-left)."""
    m %= L
    if m == 0:
        return states
    mask = (1 << L) - 1
    return ((states << m) | (states >> (L - m))) & mask


def reflect_bits(states: np.ndarray | int, L: int) -> np.ndarray | int:
    """Reflect site j -> L-1-j (reverse the low L bits)."""
    if isinstance(states, np.ndarray):
        rev = np.zeros_like(states)
    else:
        rev = 0
    for j in range(L):
        rev |= ((states >> j) & 1) << (L - 1 - j)
    return rev


def content_hash(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def cache_root(override: str | Path | None = None) -> Path:
    """Cache directory: explicit argument > THERMALAB_CACHE > ~/.cache/thermalab."""
    if override is not None:
        return Path(override)
    env = os.environ.get("THERMALAB_CACHE")
    if env:
        return Path(env)
    return Path.home() / ".cache" / "thermalab"


@dataclass
class SymmetryBasis:
    """One symmetry sector: representatives, norms, and full-space index maps.

    reps/norms are the persisted payload; rep_index (full-space state ->
    representative position, -1 outside the sector) plus the phase data are
    reconstructed deterministically from them.
    """

    spec: SectorSpec
    reps: np.ndarray            # int64[dim], ascending
    norms: np.ndarray           # float64[dim], <r|P|r> > 0
    rep_index: np.ndarray       # int32[2^L]
    shifts: np.ndarray | None   # int8[2^L], momentum sectors only
    amp_table: np.ndarray | None = None   # float64[2^L], generic parity sectors
    _ops: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def dim(self) -> int:
        return int(self.reps.size)

    @property
    def L(self) -> int:
        return self.spec.L

    @property
    def uniform(self) -> bool:
        """True for the k=0 reflection-even sector (real constant amplitudes)."""
        return self.spec.reflection == 1 and self.spec.k == 0

    def orbit_sizes(self) -> np.ndarray:
        return np.round(1.0 / self.norms).astype(np.int64)

    def expansion_amplitudes(self) -> np.ndarray:
        """Phi(s) = <s|a(s)> over the full space; 0 outside the sector.

        Real for the k=0 reflection-even sector and for k=0/L/2 momentum
        sectors; complex otherwise.
        """
        valid = self.rep_index >= 0
        idx = np.where(valid, self.rep_index, 0)
        if self.amp_table is not None:
            phi = self.amp_table / np.sqrt(self.norms)[idx]
        elif self.uniform:
            inv_sqrt = 1.0 / np.sqrt(self.orbit_sizes().astype(np.float64))
            phi = inv_sqrt[idx]
        else:
            periods = np.round(1.0 / self.norms)
            phi = np.exp(1j * self.spec.omega * self.shifts.astype(np.float64))
            phi /= np.sqrt(periods)[idx]
            if (2 * self.spec.k) % self.L == 0:
                phi = phi.real.copy()  # characters are exactly +-1
        phi = np.where(valid, phi, 0.0)
        return phi

    def expand(self, data: np.ndarray) -> np.ndarray:
        """Lift sector coordinates to the full 2^L space."""
        phi = self.expansion_amplitudes()
        idx = np.where(self.rep_index >= 0, self.rep_index, 0)
        full = phi * data[idx]
        return np.where(self.rep_index >= 0, full, 0.0)

    def project(self, full: np.ndarray) -> np.ndarray:
        """Adjoint of expand: sector coordinates of a full-space vector."""
        phi = self.expansion_amplitudes()
        valid = self.rep_index >= 0
        weights = np.conj(phi[valid]) * full[valid]
        idx = self.rep_index[valid]
        re = np.bincount(idx, weights=weights.real, minlength=self.dim)
        im = np.bincount(idx, weights=weights.imag, minlength=self.dim)
        return re + 1j * im

    def expansion_isometry(self) -> np.ndarray:
        """Dense (2^L, dim) isometry E with E[s, a] = Phi_a(s).  Oracle sizes only."""
        if self.L > 14:
            raise ResourceError("dense isometry limited to L <= 14")
        E = np.zeros((1 << self.L, self.dim), dtype=complex)
        phi = self.expansion_amplitudes()
        valid = self.rep_index >= 0
        E[np.nonzero(valid)[0], self.rep_index[valid]] = phi[valid]
        return E

    def payload_bytes(self) -> bytes:
        refl = 0 if self.spec.reflection is None else self.spec.reflection
        head = _HEADER.pack(_MAGIC, _VERSION, self.spec.L, self.spec.k, refl)
        body = struct.pack("<Q", self.dim)
        body += self.reps.astype("<i8").tobytes()
        body += self.norms.astype("<f8").tobytes()
        return head + body

    def content_hash(self) -> str:
        return content_hash(self.payload_bytes())


@dataclass
class SectorVector:
    """State vector expressed in a sector basis."""

    basis: SymmetryBasis
    data: np.ndarray

    def __post_init__(self) -> None:
        if self.data.shape != (self.basis.dim,):
            raise UsageError(
                f"coordinate length {self.data.shape} does not match sector dim {self.basis.dim}"
            )
        self.data = np.ascontiguousarray(self.data, dtype=np.complex128)

    def norm(self) -> float:
        return float(np.linalg.norm(self.data))

    def normalized(self) -> "SectorVector":
        n = self.norm()
        if n == 0.0:
            raise UsageError("cannot normalize the zero vector")
        return SectorVector(self.basis, self.data / n)

    def copy(self) -> "SectorVector":
        return SectorVector(self.basis, self.data.copy())

    def overlap(self, other: "SectorVector") -> complex:
        if other.basis.spec != self.basis.spec:
            raise UsageError("overlap requires vectors from the same sector")
        return complex(np.vdot(self.data, other.data))

    def to_full(self) -> np.ndarray:
        return self.basis.expand(self.data)


def _orbit_scan(L: int) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Full-space translation-orbit scan.

    Returns (repT, argmin_shift, period, states) where repT[s] is the smallest
    translate of s, argmin_shift[s] the m achieving it, period[s] the orbit
    period.
    """
    n = 1 << L
    states = np.arange(n, dtype=np.int64)
    rep = states.copy()
    argm = np.zeros(n, dtype=np.int8)
    period = np.full(n, L, dtype=np.int16)
    cur = states.copy()
    for m in range(1, L):
        cur = rotate_left(cur, L)
        hit = (cur == states) & (period == L)
        if hit.any():
            period[hit] = m
        less = cur < rep
        rep[less] = cur[less]
        argm[less] = m
    return rep, argm, period, states


def build_sector_basis(spec: SectorSpec) -> SymmetryBasis:
    """Construct the basis of one symmetry sector.

    Momentum-only sectors keep an orbit for momentum k iff k * period = 0
    (mod L).  Parity-resolved sectors (k = 0 or L/2) additionally drop orbits
    whose projector norm vanishes.
    """
    L = spec.L
    if L > MAX_BASIS_SITES:
        raise ResourceError(f"basis construction guarded at L <= {MAX_BASIS_SITES}, got {L}")
    repT, argm, period, states = _orbit_scan(L)
    in_sector = (spec.k * period.astype(np.int64)) % L == 0

    if spec.reflection is None:
        keep = (repT == states) & in_sector
        reps = states[keep]
        periods = period[keep].astype(np.float64)
        norms = 1.0 / periods
        rep_index = _match_positions(reps, repT, in_sector)
        shifts = ((L - argm.astype(np.int16)) % L).astype(np.int8)
        return SymmetryBasis(spec, reps, norms, rep_index, shifts)

    # parity-resolved sector at k = 0 or L/2
    sigma = float(spec.reflection)
    reflected = reflect_bits(states, L)
    repT_R = repT[reflected]
    shiftT = ((L - argm.astype(np.int64)) % L).astype(np.int64)
    drep = np.minimum(repT, repT_R)
    if spec.k == 0:
        chi_own = np.ones(states.size)
        chi_ref = np.ones(states.size)
    else:
        chi_own = 1.0 - 2.0 * (shiftT & 1)
        chi_ref = 1.0 - 2.0 * (shiftT[reflected] & 1)
    in_T = repT == drep
    in_RT = repT_R == drep
    denom = 2.0 * period.astype(np.float64)
    amp = (np.where(in_T, chi_own, 0.0) + sigma * np.where(in_RT, chi_ref, 0.0)) / denom
    amp = np.where(in_sector, amp, 0.0)

    # amplitude magnitudes are quantized in units of 1/(2L)
    tol = 0.25 / L
    keep = (drep == states) & in_sector & (amp > tol)
    reps = states[keep]
    norms = amp[keep]
    rep_index = _match_positions(reps, drep, in_sector & (np.abs(amp) > tol))
    basis = SymmetryBasis(spec, reps, norms, rep_index, None)
    if not basis.uniform:
        basis.amp_table = np.where(rep_index >= 0, amp, 0.0)
    return basis


def _match_positions(reps: np.ndarray, rep_of: np.ndarray, candidate: np.ndarray) -> np.ndarray:
    """rep_index array: position of rep_of[s] within reps, -1 where absent."""
    if reps.size == 0:
        return np.full(rep_of.size, -1, dtype=np.int32)
    pos = np.searchsorted(reps, rep_of)
    np.clip(pos, 0, reps.size - 1, out=pos)
    matched = candidate & (reps[pos] == rep_of)
    return np.where(matched, pos, -1).astype(np.int32)


def _rebuild_index(spec: SectorSpec, reps: np.ndarray, norms: np.ndarray) -> SymmetryBasis:
    """Reconstruct the full-space maps from the persisted (reps, norms) payload.

    Walks each representative's orbit (O(2^L) scattered writes on dim-sized
    arrays), which is much cheaper than a fresh full-space scan.
    """
    L = spec.L
    n = 1 << L
    dim = reps.size
    rep_index = np.full(n, -1, dtype=np.int32)
    order = np.arange(dim, dtype=np.int32)
    if spec.reflection is None:
        shifts = np.zeros(n, dtype=np.int8)
        cur = reps.copy()
        for m in range(L):
            rep_index[cur] = order
            shifts[cur] = m
            cur = rotate_left(cur, L)
        return SymmetryBasis(spec, reps, norms, rep_index, shifts)

    sigma = float(spec.reflection)
    amp = np.zeros(n, dtype=np.float64)
    cur = reps.copy()
    cur_r = reflect_bits(reps, L)
    for m in range(L):
        chi = 1.0 if spec.k == 0 else (1.0 if m % 2 == 0 else -1.0)
        rep_index[cur] = order
        rep_index[cur_r] = order
        np.add.at(amp, cur, chi)
        np.add.at(amp, cur_r, sigma * chi)
        cur = rotate_left(cur, L)
        cur_r = rotate_left(cur_r, L)
    amp /= 2.0 * L
    dead = np.abs(amp) < 1e-15
    rep_index[dead] = -1
    basis = SymmetryBasis(spec, reps, norms, rep_index, None)
    if not basis.uniform:
        basis.amp_table = np.where(dead, 0.0, amp)
    return basis


def save_basis(basis: SymmetryBasis, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(basis.payload_bytes())
    tmp.replace(path)
    return path


def load_basis(path: str | Path) -> SymmetryBasis:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size + 8:
        raise ConfigurationError(f"basis cache {path} truncated")
    magic, version, L, k, refl = _HEADER.unpack_from(raw, 0)
    if magic != _MAGIC:
        raise ConfigurationError(f"basis cache {path} has wrong magic {magic!r}")
    if version != _VERSION:
        raise ConfigurationError(f"basis cache {path} has unsupported version {version}")
    (dim,) = struct.unpack_from("<Q", raw, _HEADER.size)
    off = _HEADER.size + 8
    reps = np.frombuffer(raw, dtype="<i8", count=dim, offset=off).astype(np.int64)
    off += 8 * dim
    norms = np.frombuffer(raw, dtype="<f8", count=dim, offset=off).astype(np.float64)
    spec = SectorSpec(L=L, k=k, reflection=None if refl == 0 else int(refl))
    return _rebuild_index(spec, reps, norms)


def basis_cache_path(spec: SectorSpec, root: str | Path | None = None) -> Path:
    return cache_root(root) / "basis" / f"{spec.label()}.thlb"


def get_basis(spec: SectorSpec, cache: str | Path | None = None, use_cache: bool = True) -> SymmetryBasis:
    """Build a sector basis, round-tripping through the on-disk cache."""
    if not use_cache:
        return build_sector_basis(spec)
    path = basis_cache_path(spec, cache)
    if path.exists():
        return load_basis(path)
    basis = build_sector_basis(spec)
    save_basis(basis, path)
    return basis
