"""Run orchestration: config files, task planning, persistence, CSV reports.

A run is declared by a RunConfig (TOML, or JSON with the same shape),
executed by plan_and_execute into an output directory, and summarized by
manifest.json.  Every task is keyed by a content hash of the inputs that
define it, so re-executing an identical config skips completed work, and a
failure in one task never blocks the others.

Output files (all floats printed with 17 significant digits so identical
inputs give identical bytes):

    traj/<state>_L<L>.csv        t plus one column per observable
    traj/<state>_L<L>.json       conservation diagnostics + basis hash
    equilibrium.csv              state, L, observable, O_bar, delta_O2,
                                 O_tilde, deviation
    eth_fit.csv                  per (L, observable, energy group) slope vs
                                 the thermal second derivative
    tau.csv                      state, L, observable, tau, t_a, t_b,
                                 ci_lo, ci_hi, r2
    arealaw.csv                  state, L, l, S_bar, volume term, excess
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

try:
    import tomllib
except ImportError:  # 3.10
    import tomli as tomllib

from .analysis import (
    equilibrium_stats,
    eth_deviation_fit,
    DeviationPoint,
    fit_relaxation_time,
    EQUILIBRIUM_FRACTION,
    R2_THRESHOLD,
)
from .basis import content_hash, get_basis
from .bloch import build_bloch_state, catalog_entry, energy_density, variance_density
from .errors import ConfigurationError, ThermalabError, UsageError
from .krylov import KrylovConfig, evolve_and_measure, load_checkpoint
from .model import (
    BENCHMARK_PARAMS,
    HamiltonianParams,
    MAX_DIAGONALIZATION_SITES,
    MAX_EVOLUTION_SITES,
    SectorSpec,
)
from .observables import parse_observable
from .thermal import (
    BETA_GRID,
    full_diagonalize,
    solve_beta,
    thermal_cluster_entropy,
    thermal_entropy,
    thermal_expectation,
    thermal_mutual_information,
    thermal_second_derivative,
    thermal_variance_density,
)

#: states in the same eth_fit group must share epsilon to this tolerance
ENERGY_GROUP_TOL = 1e-3

#: bump when the analysis protocol changes so cached analysis CSVs are redone
ANALYSIS_VERSION = 2


def fmt(x) -> str:
    """CSV cell formatting; floats at 17 significant digits (round-trip exact)."""
    if isinstance(x, float) or isinstance(x, np.floating):
        return f"{float(x):.17g}"
    return str(x)


def write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(fmt(x) for x in row) + "\n")
    os.replace(tmp, path)


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class StateSpec:
    """One initial product state: a catalog name or explicit Bloch angles."""

    name: str
    theta: float
    phi: float


@dataclass
class RunConfig:
    params: HamiltonianParams = BENCHMARK_PARAMS
    states: list[StateSpec] = field(default_factory=list)
    sizes: list[int] = field(default_factory=list)
    observables: list[str] = field(default_factory=list)
    krylov: KrylovConfig = KrylovConfig()
    thermal_L: int = 14
    thermal_l_max: int = 3
    beta_grid: tuple[float, float, float] = BETA_GRID
    windows: dict[str, tuple[float, float]] = field(default_factory=dict)
    equilibrium_fraction: float = EQUILIBRIUM_FRACTION
    r2_threshold: float = R2_THRESHOLD
    figures: list[str] = field(default_factory=list)
    outdir: Path = Path("runs/default")
    seed: int = 0
    workers: int = 1
    force_sizes: bool = False

    def __post_init__(self) -> None:
        if len({s.name for s in self.states}) != len(self.states):
            raise ConfigurationError("duplicate state names in config")
        for L in self.sizes:
            if L < 2:
                raise ConfigurationError(f"L={L} is not a valid ring size")
            if L > MAX_EVOLUTION_SITES and not self.force_sizes:
                raise ConfigurationError(
                    f"L={L} exceeds the evolution guard ({MAX_EVOLUTION_SITES}); "
                    "set force_sizes = true to override"
                )
        if self.thermal_L > MAX_DIAGONALIZATION_SITES and not self.force_sizes:
            raise ConfigurationError(
                f"thermal_L={self.thermal_L} exceeds the diagonalization guard "
                f"({MAX_DIAGONALIZATION_SITES})"
            )
        if not 0 <= self.thermal_l_max <= 3:
            raise ConfigurationError("thermal_l_max must be in 0..3")
        for obs in self.observables:
            for L in self.sizes:
                parse_observable(obs, L)  # raises UsageError on a bad id
        for key in self.windows:
            if len(key.split("/")) != 3:
                raise ConfigurationError(
                    f"window key {key!r} must look like 'state/L/observable'"
                )
        if self.workers < 1:
            raise ConfigurationError("workers must be >= 1")

    def window_for(self, state: str, L: int, obs: str):
        for key in (f"{state}/{L}/{obs}", f"{state}/*/{obs}"):
            if key in self.windows:
                lo, hi = self.windows[key]
                return float(lo), float(hi)
        return None

    def payload(self) -> dict:
        """Full config with every default made explicit (echoed to the manifest)."""
        return {
            "params": {"h_x": self.params.h_x, "h_z": self.params.h_z},
            "states": [
                {"name": s.name, "theta": s.theta, "phi": s.phi} for s in self.states
            ],
            "sizes": list(self.sizes),
            "observables": list(self.observables),
            "krylov": dataclasses.asdict(self.krylov),
            "thermal": {
                "L": self.thermal_L,
                "l_max": self.thermal_l_max,
                "beta_grid": list(self.beta_grid),
            },
            "analysis": {
                "windows": {k: list(v) for k, v in sorted(self.windows.items())},
                "equilibrium_fraction": self.equilibrium_fraction,
                "r2_threshold": self.r2_threshold,
            },
            "figures": list(self.figures),
            "output": str(self.outdir),
            "seed": self.seed,
            "workers": self.workers,
            "force_sizes": self.force_sizes,
        }


def resolve_state(item) -> StateSpec:
    """Catalog name, or a mapping with explicit angles (units of pi)."""
    if isinstance(item, str):
        entry = catalog_entry(item)
        return StateSpec(item, entry.theta, entry.phi)
    if isinstance(item, dict):
        try:
            name = str(item["name"])
            theta = float(item["theta_over_pi"]) * np.pi
            phi = float(item["phi_over_pi"]) * np.pi
        except KeyError as exc:
            raise ConfigurationError(
                f"explicit state needs name/theta_over_pi/phi_over_pi, got {item!r}"
            ) from exc
        return StateSpec(name, theta, phi)
    raise ConfigurationError(f"cannot interpret state entry {item!r}")


def load_run_config(path: str | Path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"config file not found: {path}")
    if path.suffix == ".json":
        raw = json.loads(path.read_text())
    else:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    return config_from_dict(raw, default_out=path.stem)


def config_from_dict(raw: dict, default_out: str = "run") -> RunConfig:
    known = {
        "params", "states", "sizes", "observables", "krylov", "thermal",
        "analysis", "figures", "output", "seed", "workers", "force_sizes",
    }
    unknown = set(raw) - known
    if unknown:
        raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
    p = raw.get("params", {})
    params = HamiltonianParams(
        h_x=float(p.get("h_x", BENCHMARK_PARAMS.h_x)),
        h_z=float(p.get("h_z", BENCHMARK_PARAMS.h_z)),
    )
    kr = raw.get("krylov", {})
    krylov = KrylovConfig(
        m_max=int(kr.get("m_max", 30)),
        step_tolerance=float(kr.get("step_tolerance", 1e-12)),
        dt=float(kr.get("dt", 0.1)),
        t_final=float(kr.get("t_final", 100.0)),
        checkpoint_every=float(kr.get("checkpoint_every", 10.0)),
    )
    th = raw.get("thermal", {})
    grid = th.get("beta_grid", list(BETA_GRID))
    an = raw.get("analysis", {})
    windows = {
        str(k): (float(v[0]), float(v[1]))
        for k, v in an.get("windows", {}).items()
    }
    return RunConfig(
        params=params,
        states=[resolve_state(s) for s in raw.get("states", [])],
        sizes=[int(L) for L in raw.get("sizes", [])],
        observables=[str(o) for o in raw.get("observables", [])],
        krylov=krylov,
        thermal_L=int(th.get("L", 14)),
        thermal_l_max=int(th.get("l_max", 3)),
        beta_grid=(float(grid[0]), float(grid[1]), float(grid[2])),
        windows=windows,
        equilibrium_fraction=float(
            an.get("equilibrium_fraction", EQUILIBRIUM_FRACTION)
        ),
        r2_threshold=float(an.get("r2_threshold", R2_THRESHOLD)),
        figures=[str(f) for f in raw.get("figures", [])],
        outdir=Path(raw.get("output", f"runs/{default_out}")),
        seed=int(raw.get("seed", 0)),
        workers=int(raw.get("workers", 1)),
        force_sizes=bool(raw.get("force_sizes", False)),
    )


# ---------------------------------------------------------------------------
# manifest


class RunManifest:
    """Append-only task ledger persisted as manifest.json (atomic rewrite)."""

    def __init__(self, path: Path, config: RunConfig):
        self.path = path
        if path.exists():
            self.data = json.loads(path.read_text())
        else:
            self.data = {
                "created": time.strftime("%Y-%m-%dT%H:%M:%S"),
                "config": config.payload(),
                "tasks": {},
            }

    def save(self) -> None:
        tmp = self.path.with_suffix(".tmp")
        tmp.write_text(json.dumps(self.data, indent=2, sort_keys=True) + "\n")
        os.replace(tmp, self.path)

    def task(self, tid: str) -> dict:
        return self.data["tasks"].get(tid, {})

    def is_done(self, tid: str, task_hash: str, outdir: Path) -> bool:
        entry = self.task(tid)
        if entry.get("status") != "done" or entry.get("hash") != task_hash:
            return False
        return all((outdir / f).exists() for f in entry.get("outputs", []))

    def record(self, tid: str, task_hash: str, status: str, **extra) -> None:
        entry = {
            "hash": task_hash,
            "status": status,
            "finished": time.strftime("%Y-%m-%dT%H:%M:%S"),
        }
        entry.update(extra)
        self.data["tasks"][tid] = entry
        self.save()

    def counts(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for entry in self.data["tasks"].values():
            out[entry["status"]] = out.get(entry["status"], 0) + 1
        return out

    def failures(self) -> dict[str, str]:
        return {
            tid: entry.get("error", "")
            for tid, entry in self.data["tasks"].items()
            if entry["status"] == "failed"
        }


def task_hash(payload: dict) -> str:
    blob = json.dumps(payload, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


# ---------------------------------------------------------------------------
# trajectory task


def traj_paths(outdir: Path, state: str, L: int) -> tuple[Path, Path]:
    stem = f"{state}_L{L}"
    return outdir / "traj" / f"{stem}.csv", outdir / "traj" / f"{stem}.json"


def _basis_fingerprint(basis) -> str:
    return content_hash(
        np.ascontiguousarray(basis.reps).tobytes()
        + np.ascontiguousarray(basis.norms).tobytes()
    )


def run_trajectory(config: RunConfig, state: StateSpec, L: int) -> dict:
    """Evolve one (state, L) pair, streaming samples to a .part CSV.

    The part file is kept in step with the Krylov checkpoint, so an
    interrupted run resumes where it left off; the finished table is moved
    into place atomically.
    """
    csv_path, meta_path = traj_paths(config.outdir, state.name, L)
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    part = csv_path.with_suffix(".csv.part")
    ck = csv_path.with_suffix(".ck")

    basis = get_basis(SectorSpec(L=L, k=0, reflection=+1))
    initial = build_bloch_state(basis, state.theta, state.phi)
    header = ["t"] + list(config.observables)

    kept = 0
    if part.exists() and ck.exists():
        _, _, step = load_checkpoint(str(ck), basis)
        lines = part.read_text().splitlines()
        if lines and lines[0] == ",".join(header):
            kept = min(step + 1, len(lines) - 1)
    if kept == 0:
        part.write_text(",".join(header) + "\n")
        if ck.exists():
            ck.unlink()
    else:
        lines = part.read_text().splitlines()
        part.write_text("\n".join(lines[: kept + 1]) + "\n")

    fh = open(part, "a", encoding="utf-8")

    def on_row(step, t, values, diag):
        row = [fmt(float(t))] + [fmt(values[o]) for o in config.observables]
        fh.write(",".join(row) + "\n")
        fh.flush()

    try:
        record = evolve_and_measure(
            initial,
            list(config.observables),
            config.params,
            config.krylov,
            state_name=state.name,
            on_row=on_row,
            checkpoint_path=str(ck),
        )
    finally:
        fh.close()
    if not record.completed:
        raise ThermalabError(f"propagation failed: {record.failure}")

    os.replace(part, csv_path)
    if ck.exists():
        ck.unlink()
    meta = {
        "state": state.name,
        "theta": state.theta,
        "phi": state.phi,
        "L": L,
        "sector": "k=0,R=+",
        "params": {"h_x": config.params.h_x, "h_z": config.params.h_z},
        "observables": list(config.observables),
        "epsilon0": record.epsilon0,
        "v0": record.v0,
        "norm_drift": record.norm_drift,
        "energy_drift": record.energy_drift,
        "variance_drift": record.variance_drift,
        "max_step_error": record.max_step_error,
        "resumed_from_step": record.first_step,
        "basis_hash": _basis_fingerprint(basis),
    }
    tmp = meta_path.with_suffix(".tmp")
    tmp.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    os.replace(tmp, meta_path)
    return meta


def read_trajectory(csv_path: Path) -> tuple[np.ndarray, dict[str, np.ndarray]]:
    with open(csv_path, encoding="utf-8") as fh:
        names = fh.readline().strip().split(",")
    data = np.loadtxt(csv_path, delimiter=",", skiprows=1, ndmin=2)
    if data.shape[1] != len(names):
        raise UsageError(f"{csv_path} rows do not match its header")
    times = data[:, 0]
    return times, {name: data[:, i] for i, name in enumerate(names) if i > 0}


# ---------------------------------------------------------------------------
# analysis aggregation


def _thermal_value(table, obs: str, beta: float, l_max: int):
    """Canonical counterpart of one trajectory observable, nan if untabulated."""
    try:
        spec = parse_observable(obs, table.L)
    except UsageError:
        return np.nan  # e.g. a correlator reaching beyond the reference ring
    if spec.kind == "entropy":
        (l,) = spec.payload
        return thermal_cluster_entropy(table, beta, l) if l <= l_max else np.nan
    if spec.kind == "mutual_info":
        l, r = spec.payload
        return (
            thermal_mutual_information(table, beta, l, r)
            if l + r <= l_max
            else np.nan
        )
    if spec.kind == "fidelity":
        return np.nan
    try:
        return thermal_expectation(table, obs, beta=beta)
    except (KeyError, UsageError):
        return np.nan


def _cluster_energies(eps_of: dict[str, float], tol: float) -> dict[str, float]:
    """Map each state to its energy-cluster mean.

    States prepared at nominally equal energy density differ by the rounding
    of their catalog angles (~1e-7), so grouping must cluster nearby values
    rather than snap to a grid that could split them.  Clusters are runs of
    sorted energies with consecutive gaps <= tol; distinct preparation
    energies in the catalog are separated by >= 0.1.
    """
    ordered = sorted(eps_of.items(), key=lambda item: item[1])
    groups: list[list[tuple[str, float]]] = []
    for name, eps in ordered:
        if groups and eps - groups[-1][-1][1] <= tol:
            groups[-1].append((name, eps))
        else:
            groups.append([(name, eps)])
    rep: dict[str, float] = {}
    for grp in groups:
        center = float(np.mean([eps for _, eps in grp]))
        for name, _ in grp:
            rep[name] = center
    return rep


def analyze_run(config: RunConfig, table) -> dict[str, int]:
    """Aggregate every finished trajectory into the four report CSVs."""
    eq_rows: list[list] = []
    tau_rows: list[list] = []
    area_rows: list[list] = []
    points: dict[tuple[int, str, float], list[DeviationPoint]] = {}

    s_per_site: dict[str, float] = {}
    beta_of: dict[str, float] = {}
    eps_of: dict[str, float] = {}
    for state in config.states:
        eps = energy_density(state.theta, state.phi, config.params)
        eps_of[state.name] = eps
        beta_of[state.name] = solve_beta(table, eps)
        s_per_site[state.name] = thermal_entropy(table, beta_of[state.name]) / table.L
    eps_group = _cluster_energies(eps_of, ENERGY_GROUP_TOL)

    for state in config.states:
        for L in config.sizes:
            csv_path, _ = traj_paths(config.outdir, state.name, L)
            if not csv_path.exists():
                continue
            times, series = read_trajectory(csv_path)
            beta = beta_of[state.name]
            v = variance_density(state.theta, state.phi, config.params)
            v_t = thermal_variance_density(table, beta)
            for obs in config.observables:
                stats = equilibrium_stats(
                    times, series[obs], config.equilibrium_fraction
                )
                o_t = _thermal_value(table, obs, beta, config.thermal_l_max)
                eq_rows.append(
                    [state.name, L, obs, stats.o_bar, stats.delta_o2, o_t,
                     stats.o_bar - o_t]
                )
                if np.isfinite(o_t):
                    key = (L, obs, eps_group[state.name])
                    points.setdefault(key, []).append(
                        DeviationPoint(
                            x=(v - v_t) / L, y=stats.o_bar - o_t,
                            state=state.name, L=L, observable=obs,
                        )
                    )
                fit = fit_relaxation_time(
                    times, series[obs], stats,
                    window=config.window_for(state.name, L, obs),
                    r2_threshold=config.r2_threshold,
                )
                tau_rows.append(
                    [state.name, L, obs,
                     fit.tau if fit.accepted else np.nan,
                     fit.t_lo, fit.t_hi, fit.tau_ci_lo, fit.tau_ci_hi,
                     fit.r_squared]
                )
                spec = parse_observable(obs, L)
                if spec.kind == "entropy":
                    (l,) = spec.payload
                    volume = l * s_per_site[state.name]
                    area_rows.append(
                        [state.name, L, l, stats.o_bar, volume,
                         stats.o_bar - volume]
                    )

    eth_rows: list[list] = []
    for (L, obs, eps), pts in sorted(points.items()):
        if len(pts) < 3 or len({p.state for p in pts}) < 3:
            continue
        fit = eth_deviation_fit(pts)
        d2 = thermal_second_derivative(table, obs, epsilon=eps)
        eth_rows.append(
            [L, obs, eps, fit.n_points, fit.slope, d2,
             fit.slope / d2 if d2 else np.nan, fit.residual_rms]
        )

    write_csv(
        config.outdir / "equilibrium.csv",
        ["state", "L", "observable", "O_bar", "delta_O2", "O_tilde", "deviation"],
        eq_rows,
    )
    write_csv(
        config.outdir / "tau.csv",
        ["state", "L", "observable", "tau", "t_a", "t_b", "ci_lo", "ci_hi", "r2"],
        tau_rows,
    )
    write_csv(
        config.outdir / "arealaw.csv",
        ["state", "L", "l", "S_bar", "volume", "excess"],
        area_rows,
    )
    write_csv(
        config.outdir / "eth_fit.csv",
        ["L", "observable", "epsilon", "n_states", "slope", "thermal_d2",
         "ratio", "residual_rms"],
        eth_rows,
    )
    return {
        "equilibrium": len(eq_rows),
        "tau": len(tau_rows),
        "arealaw": len(area_rows),
        "eth_fit": len(eth_rows),
    }


# ---------------------------------------------------------------------------
# planner


def plan_and_execute(config: RunConfig) -> RunManifest:
    """Run thermal + trajectory + analysis (+ figure) tasks for one config.

    Completed tasks are skipped on re-execution (input-hash match against the
    manifest); task failures are recorded and isolated.  Trajectories run in
    a thread pool of config.workers.
    """
    outdir = config.outdir
    outdir.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(outdir / "manifest.json", config)

    th_payload = {
        "L": config.thermal_L,
        "l_max": config.thermal_l_max,
        "params": [config.params.h_x, config.params.h_z],
    }
    th_hash = task_hash(th_payload)
    table = None
    try:
        table = full_diagonalize(
            config.thermal_L, config.params, l_max=config.thermal_l_max
        )
        manifest.record("thermal", th_hash, "done", n_states=table.n_states)
    except ThermalabError as exc:
        manifest.record("thermal", th_hash, "failed", error=str(exc))

    kr = dataclasses.asdict(config.krylov)
    jobs: list[tuple[str, str, StateSpec, int]] = []
    for state in config.states:
        for L in config.sizes:
            tid = f"traj/{state.name}/L{L}"
            payload = {
                "state": [state.theta, state.phi],
                "L": L,
                "params": [config.params.h_x, config.params.h_z],
                "observables": list(config.observables),
                "krylov": kr,
            }
            h = task_hash(payload)
            if manifest.is_done(tid, h, outdir):
                continue
            jobs.append((tid, h, state, L))

    def run_one(job):
        tid, h, state, L = job
        try:
            meta = run_trajectory(config, state, L)
            csv_path, meta_path = traj_paths(outdir, state.name, L)
            outputs = [str(p.relative_to(outdir)) for p in (csv_path, meta_path)]
            return tid, h, "done", {"outputs": outputs,
                                    "norm_drift": meta["norm_drift"]}
        except Exception as exc:  # isolate per task, report in the manifest
            return tid, h, "failed", {"error": f"{type(exc).__name__}: {exc}"}

    if jobs:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            for tid, h, status, extra in pool.map(run_one, jobs):
                manifest.record(tid, h, status, **extra)

    an_payload = {
        "version": ANALYSIS_VERSION,
        "config": config.payload(),
        "trajectories": sorted(
            tid for tid, e in manifest.data["tasks"].items()
            if tid.startswith("traj/") and e["status"] == "done"
        ),
    }
    an_hash = task_hash(an_payload)
    if config.states and config.sizes and config.observables:
        if table is None:
            manifest.record("analysis", an_hash, "failed",
                            error="thermal table unavailable")
        elif not manifest.is_done("analysis", an_hash, outdir):
            try:
                counts = analyze_run(config, table)
                manifest.record(
                    "analysis", an_hash, "done",
                    outputs=["equilibrium.csv", "tau.csv", "arealaw.csv",
                             "eth_fit.csv"],
                    rows=counts,
                )
            except ThermalabError as exc:
                manifest.record("analysis", an_hash, "failed", error=str(exc))

    if config.figures:
        from .figures import render_figures

        fig_hash = task_hash({"ids": config.figures, "analysis": an_hash})
        if not manifest.is_done("figures", fig_hash, outdir):
            try:
                written = render_figures(config.figures, config, table)
                manifest.record("figures", fig_hash, "done",
                                outputs=[str(p.relative_to(outdir))
                                         for p in written])
            except ThermalabError as exc:
                manifest.record("figures", fig_hash, "failed", error=str(exc))

    manifest.save()
    return manifest
