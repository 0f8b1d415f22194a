"""Lanczos-subspace action of exp(-iHt) on sector vectors.

Each measurement step of length dt is carried out in a Krylov space built
with full re-orthogonalization; the per-step error is controlled by the
last-subdiagonal residual surrogate and, if the maximum subspace dimension
is insufficient, the step is split in half recursively.  dt therefore only
sets the sampling grid, not the accuracy of the dynamics.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .basis import SectorVector, SymmetryBasis
from .errors import ConfigurationError, NumericalError, UsageError
from .model import HamiltonianParams
from .observables import MeasurementPlan, ObservableSpec, parse_observable
from .operators import csr_matvec, sector_hamiltonian

__all__ = [
    "KrylovConfig",
    "StepReport",
    "TrajectoryRecord",
    "lanczos_exp_step",
    "evolve_and_measure",
    "save_checkpoint",
    "load_checkpoint",
]

#: subdiagonal below this means the Krylov space closed (invariant subspace)
HAPPY_BREAKDOWN = 1e-14

#: recursion limit for splitting a step that cannot meet tolerance
MAX_HALVINGS = 16


@dataclass(frozen=True)
class KrylovConfig:
    m_max: int = 30
    step_tolerance: float = 1e-12
    dt: float = 0.1
    t_final: float = 100.0
    checkpoint_every: float = 10.0

    def __post_init__(self) -> None:
        if self.m_max < 2:
            raise ConfigurationError("m_max must be at least 2")
        if self.step_tolerance <= 0 or self.dt <= 0 or self.t_final <= 0:
            raise ConfigurationError("step_tolerance, dt and t_final must be positive")
        if self.checkpoint_every <= 0:
            raise ConfigurationError("checkpoint_every must be positive")

    def n_steps(self) -> int:
        n = int(round(self.t_final / self.dt))
        if n < 1 or abs(n * self.dt - self.t_final) > 1e-9 * max(1.0, self.t_final):
            raise ConfigurationError(
                f"t_final={self.t_final} is not an integer multiple of dt={self.dt}"
            )
        return n


@dataclass
class StepReport:
    error: float        # accumulated residual surrogate over all substeps
    dimension: int      # largest Krylov dimension used
    substeps: int       # number of leaf steps after recursive halving


def _expi_tridiag(alphas: np.ndarray, betas: np.ndarray, dt: float) -> np.ndarray:
    """exp(-i dt T) e_1 for the real symmetric tridiagonal T=(alphas, betas)."""
    lam, Q = eigh_tridiagonal(alphas, betas)
    return Q @ (np.exp(-1j * dt * lam) * Q[0, :])


def _krylov_apply(matvec, data: np.ndarray, dt: float, m_max: int, tol: float):
    """One Lanczos attempt; returns (w, error surrogate, dimension used)."""
    dim = data.size
    m_cap = min(m_max, dim)
    V = np.empty((dim, m_cap), dtype=np.complex128)
    V[:, 0] = data
    alphas = np.empty(m_cap)
    betas = np.empty(max(m_cap - 1, 1))
    for j in range(m_cap):
        w = matvec(V[:, j])
        alphas[j] = np.real(np.vdot(V[:, j], w))
        w -= alphas[j] * V[:, j]
        if j:
            w -= betas[j - 1] * V[:, j - 1]
        proj = V[:, : j + 1].conj().T @ w
        w -= V[:, : j + 1] @ proj
        beta = float(np.linalg.norm(w))
        u = _expi_tridiag(alphas[: j + 1], betas[:j], dt)
        if beta < HAPPY_BREAKDOWN:
            return V[:, : j + 1] @ u, 0.0, j + 1
        err = beta * abs(u[-1])
        if err <= tol or j + 1 == m_cap:
            return V[:, : j + 1] @ u, err, j + 1
        betas[j] = beta
        V[:, j + 1] = w / beta
    raise AssertionError("unreachable")


def _propagate(matvec, data: np.ndarray, dt: float, cfg: KrylovConfig, depth: int = 0):
    """exp(-i dt H) data with recursive halving; returns (w, err, m, leaves)."""
    w, err, m = _krylov_apply(matvec, data, dt, cfg.m_max, cfg.step_tolerance)
    if err <= cfg.step_tolerance:
        return w, err, m, 1
    if depth >= MAX_HALVINGS:
        raise NumericalError(
            f"Krylov step cannot meet tolerance {cfg.step_tolerance:g} even at "
            f"dt={dt:g} (m_max={cfg.m_max}); residual {err:g}"
        )
    w1, e1, m1, n1 = _propagate(matvec, data, dt / 2.0, cfg, depth + 1)
    w2, e2, m2, n2 = _propagate(matvec, w1, dt / 2.0, cfg, depth + 1)
    return w2, e1 + e2, max(m1, m2), n1 + n2


def lanczos_exp_step(
    applyH,
    v: SectorVector,
    dt: float,
    cfg: KrylovConfig = KrylovConfig(),
) -> tuple[SectorVector, StepReport]:
    """w ~= exp(-i dt H) v through the Krylov subspace of applyH.

    applyH maps a coordinate array to H @ array.  The returned report carries
    the accumulated error surrogate, the largest subspace dimension used, and
    the number of substeps the interval was split into.
    """
    if dt == 0.0:
        return v.copy(), StepReport(0.0, 0, 0)
    data, err, m, leaves = _propagate(applyH, v.data, dt, cfg)
    return SectorVector(v.basis, data), StepReport(err, m, leaves)


# ---------------------------------------------------------------------------
# checkpoints: sector identity header + raw amplitudes

_CK = struct.Struct("<4sBHHbQdQ")  # magic, version, L, k, refl, step, t, dim
_CK_MAGIC = b"THCK"
_CK_VERSION = 1


def _refl_code(basis: SymmetryBasis) -> int:
    r = basis.spec.reflection
    return 0 if r is None else int(r)


def save_checkpoint(path: str, basis: SymmetryBasis, data: np.ndarray, t: float, step: int) -> None:
    header = _CK.pack(
        _CK_MAGIC, _CK_VERSION, basis.L, basis.spec.k, _refl_code(basis), step, t, basis.dim
    )
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(data, dtype=np.complex128).tobytes())
    os.replace(tmp, path)


def load_checkpoint(path: str, basis: SymmetryBasis) -> tuple[np.ndarray, float, int]:
    with open(path, "rb") as fh:
        raw = fh.read(_CK.size)
        if len(raw) != _CK.size:
            raise UsageError(f"truncated checkpoint {path}")
        magic, version, L, k, refl, step, t, dim = _CK.unpack(raw)
        if magic != _CK_MAGIC or version != _CK_VERSION:
            raise UsageError(f"{path} is not a recognized checkpoint file")
        if (L, k, refl, dim) != (basis.L, basis.spec.k, _refl_code(basis), basis.dim):
            raise UsageError(
                f"checkpoint {path} belongs to a different sector "
                f"(L={L}, k={k}, refl={refl}, dim={dim})"
            )
        data = np.frombuffer(fh.read(16 * dim), dtype=np.complex128).copy()
    if data.shape != (dim,):
        raise UsageError(f"truncated checkpoint {path}")
    return data, t, step


@dataclass
class TrajectoryRecord:
    """Sampled observables plus conservation diagnostics for one quench run."""

    state_name: str
    L: int
    sector: str
    params: HamiltonianParams
    observable_ids: list[str]
    times: np.ndarray
    values: dict[str, np.ndarray]
    norm_error: np.ndarray
    energy: np.ndarray
    energy_variance: np.ndarray
    krylov_dimensions: np.ndarray
    epsilon0: float
    v0: float
    max_step_error: float = 0.0
    first_step: int = 0
    completed: bool = True
    failure: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.times.size > 1 and not np.all(np.diff(self.times) > 0):
            raise UsageError("trajectory times must be strictly increasing")

    @property
    def norm_drift(self) -> float:
        return float(self.norm_error.max()) if self.norm_error.size else 0.0

    @property
    def energy_drift(self) -> float:
        if self.energy.size == 0:
            return 0.0
        scale = max(1.0, abs(self.energy[0]))
        return float(np.abs(self.energy - self.energy[0]).max()) / scale

    @property
    def variance_drift(self) -> float:
        if self.energy_variance.size == 0:
            return 0.0
        scale = max(1.0, abs(self.energy_variance[0]))
        return float(np.abs(self.energy_variance - self.energy_variance[0]).max()) / scale


def evolve_and_measure(
    initial: SectorVector,
    schedule: list,
    params: HamiltonianParams,
    cfg: KrylovConfig = KrylovConfig(),
    *,
    state_name: str = "",
    on_row=None,
    checkpoint_path: str | None = None,
) -> TrajectoryRecord:
    """Propagate `initial` to cfg.t_final, measuring the schedule at every dt.

    on_row(step, t, values, diagnostics) is invoked per sample, in order;
    diagnostics holds norm_error / energy / energy_variance.  When
    checkpoint_path exists the run resumes after the stored step and the
    record covers only the remaining samples (first_step marks the offset).
    A propagation failure flags the record instead of raising.
    """
    basis = initial.basis
    specs = [
        parse_observable(s, basis.L) if isinstance(s, str) else s for s in schedule
    ]
    if not specs:
        raise UsageError("measurement schedule is empty")
    if abs(initial.norm() - 1.0) > 1e-9:
        raise UsageError("initial state must be normalized")
    n_steps = cfg.n_steps()

    plan = MeasurementPlan(basis, specs, params, initial)
    H = sector_hamiltonian(basis, params)
    matvec = lambda x: csr_matvec(H, x)  # noqa: E731

    data = initial.data.copy()
    data_step = 0  # the step index the current amplitudes correspond to
    start_step = 0
    if checkpoint_path and os.path.exists(checkpoint_path):
        data, _t_ck, data_step = load_checkpoint(checkpoint_path, basis)
        if data_step > n_steps:
            raise UsageError(
                f"checkpoint {checkpoint_path} is beyond t_final={cfg.t_final}"
            )
        start_step = data_step + 1  # the stored step's row was already emitted

    times: list[float] = []
    series: dict[str, list[float]] = {spec.id: [] for spec in specs}
    norm_err: list[float] = []
    energies: list[float] = []
    variances: list[float] = []
    dims: list[int] = []
    max_err = 0.0
    completed = True
    failure = ""

    next_mark = None
    if checkpoint_path:
        next_mark = cfg.checkpoint_every * (
            np.floor(start_step * cfg.dt / cfg.checkpoint_every) + 1.0
        )

    step = start_step
    while step <= n_steps:
        if data_step < step:
            try:
                data, err, m, _ = _propagate(matvec, data, cfg.dt, cfg)
            except NumericalError as exc:
                completed = False
                failure = str(exc)
                break
            data_step += 1
            max_err = max(max_err, err)
            dims.append(m)
        t = step * cfg.dt
        nrm2 = float(np.real(np.vdot(data, data)))
        hvec = matvec(data)
        e1 = float(np.real(np.vdot(data, hvec)))
        e2 = float(np.real(np.vdot(hvec, hvec)))
        row = plan.measure(data)
        diag = {
            "norm_error": abs(np.sqrt(nrm2) - 1.0),
            "energy": e1,
            "energy_variance": e2 - e1 * e1,
        }
        times.append(t)
        for spec in specs:
            series[spec.id].append(row[spec.id])
        norm_err.append(diag["norm_error"])
        energies.append(e1)
        variances.append(diag["energy_variance"])
        if on_row is not None:
            on_row(step, t, row, diag)
        if checkpoint_path and (t >= next_mark or step == n_steps):
            save_checkpoint(checkpoint_path, basis, data, t, step)
            while t >= next_mark:
                next_mark += cfg.checkpoint_every
        step += 1

    return TrajectoryRecord(
        state_name=state_name,
        L=basis.L,
        sector=basis.spec.label(),
        params=params,
        observable_ids=[spec.id for spec in specs],
        times=np.asarray(times),
        values={k: np.asarray(v) for k, v in series.items()},
        norm_error=np.asarray(norm_err),
        energy=np.asarray(energies),
        energy_variance=np.asarray(variances),
        krylov_dimensions=np.asarray(dims, dtype=np.int64),
        epsilon0=plan.epsilon0,
        v0=plan.v0,
        max_step_error=max_err,
        first_step=start_step,
        completed=completed,
        failure=failure,
    )
