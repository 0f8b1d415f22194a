"""Report figures rendered from run output as deterministic SVG.

Each figure id names what the panel shows; the fig1..fig12 aliases give the
same set a stable numbered surface for scripts.  All builders read the CSV
tables written by the runner (plus the thermal table and a few closed-form
curves), so a figure can only be rendered after the backing run completed.
Rendering is deterministic: fixed hash salt, no timestamps in the output.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .bloch import energy_density, load_catalog, variance_density  # noqa: E402
from .errors import UsageError  # noqa: E402
from .model import SectorSpec  # noqa: E402
from .observables import (  # noqa: E402
    page_mutual_information_exact,
    parse_observable,
)
from .thermal import (  # noqa: E402
    solve_beta,
    thermal_curve,
    thermal_entropy,
    thermal_expectation,
    thermal_mutual_information,
    thermal_second_derivative,
    thermal_variance_density,
)

FIGSIZE = (4.8, 3.4)

ALIASES = {
    "fig1": "states",
    "fig2a": "eth-y",
    "fig2b": "eth-z",
    "fig3": "fluct",
    "fig5": "traj",
    "fig6": "entropy-dev",
    "fig7": "arealaw",
    "fig8": "page-mi",
    "fig9": "corr-profile",
    "fig10": "decay",
    "fig11": "tau-l",
    "fig12": "heisenberg",
}


def _read_rows(path: Path) -> list[dict[str, str]]:
    if not path.exists():
        raise UsageError(f"missing input {path}; run `thermalab analyze` first")
    lines = path.read_text().splitlines()
    names = lines[0].split(",")
    return [dict(zip(names, line.split(","))) for line in lines[1:]]


def _new_axes():
    fig, ax = plt.subplots(figsize=FIGSIZE, constrained_layout=True)
    return fig, ax


def _series_states(rows, prefix: str) -> list[str]:
    """Run states belonging to one equal-energy family, e.g. y_1..y_7 + Y_+."""
    names = []
    for row in rows:
        n = row["state"]
        if n not in names and (n.startswith(prefix + "_") or
                               n.lower().startswith(prefix.lower() + "_")):
            names.append(n)
    return names


def _pick_observable(rows, wanted="C2") -> str:
    seen = [r["observable"] for r in rows]
    if wanted in seen:
        return wanted
    for obs in seen:
        if parse_observable(obs, 32).kind == "correlator":
            return obs
    return seen[0]


# ---------------------------------------------------------------------------
# builders (config, table, outdir) -> matplotlib Figure


def fig_states(config, table, outdir):
    curve = thermal_curve(table)
    fig, ax = _new_axes()
    ax.plot(curve.epsilon, curve.v_tilde, "k-", lw=1.2, label=r"$\tilde v(\varepsilon)$")
    cat = load_catalog()
    eps = [energy_density(e.theta, e.phi, config.params) for e in cat.values()]
    var = [variance_density(e.theta, e.phi, config.params) for e in cat.values()]
    axes_states = [n for n in cat if n[0] in "XYZE" or n in ("X_-", "Z_-")]
    other = [n for n in cat if n not in axes_states]
    idx = {n: i for i, n in enumerate(cat)}
    ax.plot([eps[idx[n]] for n in other], [var[idx[n]] for n in other],
            "o", ms=3, color="tab:gray", label="catalog")
    ax.plot([eps[idx[n]] for n in axes_states], [var[idx[n]] for n in axes_states],
            "D", ms=4, color="tab:blue", label="axes states")
    run_names = [s.name for s in config.states]
    ax.plot([eps[idx[n]] for n in run_names if n in idx],
            [var[idx[n]] for n in run_names if n in idx],
            "s", ms=5, mfc="none", color="tab:red", label="this run")
    ax.set_xlabel(r"$\varepsilon$")
    ax.set_ylabel(r"$v$")
    ax.legend(fontsize=7)
    return fig


def _fig_eth(config, table, outdir, prefix: str):
    rows = _read_rows(config.outdir / "equilibrium.csv")
    obs = _pick_observable(rows)
    states = _series_states(rows, prefix)
    caps = {"y": "Y_+", "z": "Z_-"}
    if prefix in caps and any(r["state"] == caps[prefix] for r in rows):
        states.append(caps[prefix])
    if not states:
        raise UsageError(f"no {prefix}-series states in equilibrium.csv")
    cat = load_catalog()
    eps = energy_density(cat[states[0]].theta, cat[states[0]].phi, config.params)
    beta = solve_beta(table, eps)
    v_t = thermal_variance_density(table, beta)
    d2 = thermal_second_derivative(table, obs, beta=beta)

    fig, ax = _new_axes()
    markers = "osv^D<>ph"
    for i, L in enumerate(sorted({int(r["L"]) for r in rows})):
        xs, ys = [], []
        for name in states:
            e = cat[name]
            row = [r for r in rows
                   if r["state"] == name and int(r["L"]) == L
                   and r["observable"] == obs]
            if not row:
                continue
            xs.append((variance_density(e.theta, e.phi, config.params) - v_t) / L)
            ys.append(float(row[0]["deviation"]))
        if xs:
            ax.plot(xs, ys, markers[i % len(markers)], ms=4, label=f"$L={L}$")
    lim = max(abs(x) for x in ax.get_xlim())
    grid = np.linspace(-lim, lim, 9)
    ax.plot(grid, 0.5 * d2 * grid, "k--", lw=1,
            label=rf"slope $\partial^2_\varepsilon\tilde O = {d2:.2f}$")
    ax.axhline(0.0, color="0.8", lw=0.5)
    ax.axvline(0.0, color="0.8", lw=0.5)
    ax.set_xlabel(r"$(v - \tilde v)/L$")
    ax.set_ylabel(rf"$\bar O - \tilde O$  ($O = {obs}$)")
    ax.legend(fontsize=7)
    return fig


def fig_eth_y(config, table, outdir):
    return _fig_eth(config, table, outdir, "y")


def fig_eth_z(config, table, outdir):
    return _fig_eth(config, table, outdir, "z")


def fig_fluct(config, table, outdir):
    rows = _read_rows(config.outdir / "equilibrium.csv")
    obs = _pick_observable(rows)
    cat = load_catalog()
    fig, ax = _new_axes()
    for state in sorted({r["state"] for r in rows}):
        e = cat.get(state)
        if e is None:
            continue
        beta = solve_beta(table, energy_density(e.theta, e.phi, config.params))
        s_site = thermal_entropy(table, beta) / table.L
        pts = sorted(
            (int(r["L"]) * s_site, float(r["delta_O2"]))
            for r in rows if r["state"] == state and r["observable"] == obs
        )
        if len(pts) >= 2:
            ax.semilogy([p[0] for p in pts], [p[1] for p in pts],
                        "o-", ms=4, base=2, label=state)
    lo, hi = ax.get_xlim()
    grid = np.linspace(lo, hi, 5)
    anchor = ax.get_ylim()[1]
    ax.semilogy(grid, anchor * 2.0 ** (-(grid - lo)), "k:", lw=1, base=2,
                label=r"$\propto 2^{-\tilde S}$")
    ax.set_xlabel(r"$\tilde S(\varepsilon)$ (bits)")
    ax.set_ylabel(rf"$\delta O^2$  ($O = {obs}$)")
    ax.legend(fontsize=7)
    return fig


def fig_traj(config, table, outdir):
    from .runner import read_trajectory, traj_paths

    fig, ax = _new_axes()
    drawn = 0
    for state in config.states[:3]:
        for L in config.sizes[-1:]:
            path, _ = traj_paths(config.outdir, state.name, L)
            if not path.exists():
                continue
            times, series = read_trajectory(path)
            obs = _pick_observable(
                [{"observable": k} for k in series], wanted="C2")
            ax.plot(times, series[obs], lw=0.9, label=f"{state.name} {obs} $L={L}$")
            eps = energy_density(state.theta, state.phi, config.params)
            o_t = thermal_expectation(table, obs, epsilon=eps)
            ax.axhline(o_t, color=ax.lines[-1].get_color(), ls="--", lw=0.8)
            drawn += 1
    if not drawn:
        raise UsageError("no trajectory files found; run `thermalab analyze` first")
    ax.set_xlabel(r"$t$")
    ax.set_ylabel(r"$O(t)$ (dashed: thermal)")
    ax.legend(fontsize=7)
    return fig


def fig_entropy_dev(config, table, outdir):
    rows = [r for r in _read_rows(config.outdir / "equilibrium.csv")
            if r["observable"].startswith("S") and r["observable"][1:].isdigit()]
    if not rows:
        raise UsageError("no entropy observables in equilibrium.csv")
    cat = load_catalog()
    fig, ax = _new_axes()
    markers = "osv^D"
    for i, L in enumerate(sorted({int(r["L"]) for r in rows})):
        xs, ys = [], []
        for r in rows:
            if int(r["L"]) != L or r["state"] not in cat:
                continue
            e = cat[r["state"]]
            beta = solve_beta(table, energy_density(e.theta, e.phi, config.params))
            v = variance_density(e.theta, e.phi, config.params)
            xs.append((v - thermal_variance_density(table, beta)) / L)
            ys.append(float(r["deviation"]))
        if xs:
            ax.plot(xs, ys, markers[i % len(markers)], ms=4, label=f"$L={L}$")
    ax.axhline(0.0, color="0.8", lw=0.5)
    ax.set_xlabel(r"$(v - \tilde v)/L$")
    ax.set_ylabel(r"$\bar S_l - \tilde S_l$ (bits)")
    ax.legend(fontsize=7)
    return fig


def fig_arealaw(config, table, outdir):
    rows = _read_rows(config.outdir / "arealaw.csv")
    cat = load_catalog()
    fig, ax = _new_axes()
    markers = {1: "o", 2: "s", 3: "^"}
    for l in sorted({int(r["l"]) for r in rows}):
        pts = []
        for r in rows:
            if int(r["l"]) != l or r["state"] not in cat:
                continue
            e = cat[r["state"]]
            pts.append((energy_density(e.theta, e.phi, config.params),
                        float(r["excess"])))
        pts.sort()
        if pts:
            ax.plot([p[0] for p in pts], [p[1] for p in pts],
                    markers.get(l, "x"), ms=4, label=f"$l={l}$")
    ax.set_xlabel(r"$\varepsilon$")
    ax.set_ylabel(r"$\bar S_l - l\,\tilde S/\tilde L$ (bits)")
    ax.legend(fontsize=7)
    return fig


def fig_page_mi(config, table, outdir):
    L = max(config.sizes) if config.sizes else table.L
    ls = [l for l in (1, 2, 3) if 2 * l <= config.thermal_l_max]
    fig, ax = _new_axes()
    page_ls = [l for l in (1, 2, 3) if 2 * l <= L // 2]
    ax.semilogy(page_ls, [page_mutual_information_exact(l, L) for l in page_ls],
                "k^-", ms=4, lw=0.8, label=f"random state ($L={L}$)")
    for state in config.states:
        eps = energy_density(state.theta, state.phi, config.params)
        beta = solve_beta(table, eps)
        vals = [thermal_mutual_information(table, beta, l, l) for l in ls]
        if vals:
            ax.semilogy(ls, vals, "o--", ms=4, lw=0.8,
                        label=rf"$\tilde I_{{l,l}}$ {state.name}")
    ax.set_xlabel(r"$l$")
    ax.set_ylabel(r"$I_{l,l}$ (bits)")
    ax.set_xticks(page_ls)
    ax.legend(fontsize=7)
    return fig


def fig_corr_profile(config, table, outdir):
    rows = _read_rows(config.outdir / "equilibrium.csv")
    corr = [r for r in rows
            if r["observable"].startswith("C") and r["observable"][1:].isdigit()]
    if not corr:
        raise UsageError("no correlator observables in equilibrium.csv")
    L = max(int(r["L"]) for r in corr)
    fig, ax = _new_axes()
    for state in sorted({r["state"] for r in corr}):
        pts = sorted(
            (int(r["observable"][1:]), float(r["O_bar"]), float(r["O_tilde"]))
            for r in corr if r["state"] == state and int(r["L"]) == L
        )
        if len(pts) < 2:
            continue
        line, = ax.plot([p[0] for p in pts], [p[1] for p in pts],
                        "-", lw=0.9, label=rf"$\bar C_r$ {state}")
        ax.plot([p[0] for p in pts], [p[2] for p in pts], "o", ms=4,
                mfc="none", color=line.get_color())
    ax.set_xlabel(r"$r$")
    ax.set_ylabel(rf"$\bar C_r$ at $L={L}$ (dots: thermal)")
    ax.legend(fontsize=7)
    return fig


def fig_decay(config, table, outdir):
    from .analysis import equilibrium_stats, fit_relaxation_time
    from .runner import read_trajectory, traj_paths

    rows = _read_rows(config.outdir / "tau.csv")
    obs = _pick_observable(rows)
    state = next((r["state"] for r in rows
                  if r["observable"] == obs and r["tau"] != "nan"),
                 rows[0]["state"] if rows else None)
    if state is None:
        raise UsageError("tau.csv is empty")
    fig, ax = _new_axes()
    drawn = 0
    for L in sorted(config.sizes):
        path, _ = traj_paths(config.outdir, state, L)
        if not path.exists():
            continue
        times, series = read_trajectory(path)
        spec = next(s for s in config.states if s.name == state)
        stats = equilibrium_stats(times, series[obs], config.equilibrium_fraction)
        dev = np.abs(series[obs] - stats.o_bar)
        line, = ax.semilogy(times, np.where(dev > 0, dev, np.nan), lw=0.8,
                            label=f"$L={L}$")
        fit = fit_relaxation_time(times, series[obs], stats,
                                  window=config.window_for(state, L, obs),
                                  r2_threshold=config.r2_threshold)
        if fit.accepted:
            tt = np.linspace(fit.t_lo, fit.t_hi, 32)
            ax.semilogy(tt, np.exp(fit.intercept + fit.slope * tt), "--",
                        lw=1.0, color="k")
            ax.semilogy([fit.t_lo, fit.t_hi],
                        np.exp(fit.intercept + fit.slope *
                               np.array([fit.t_lo, fit.t_hi])),
                        "k.", ms=7)
        drawn += 1
    if not drawn:
        raise UsageError(f"no trajectories for state {state}")
    ax.set_xlabel(r"$t$")
    ax.set_ylabel(rf"$|O(t) - \bar O|$  ($O = {obs}$, {state})")
    ax.legend(fontsize=7)
    return fig


def fig_tau_l(config, table, outdir):
    rows = _read_rows(config.outdir / "tau.csv")
    fig, ax = _new_axes()
    drawn = 0
    for state in sorted({r["state"] for r in rows}):
        for obs in sorted({r["observable"] for r in rows}):
            pts = []
            for r in rows:
                if (r["state"], r["observable"]) != (state, obs):
                    continue
                if r["tau"] == "nan":
                    continue
                pts.append((int(r["L"]), float(r["tau"]),
                            float(r["ci_lo"]), float(r["ci_hi"])))
            if len(pts) < 2:
                continue
            pts.sort()
            ax.errorbar([p[0] for p in pts], [p[1] for p in pts],
                        yerr=[[p[1] - p[2] for p in pts],
                              [p[3] - p[1] for p in pts]],
                        fmt="o-", ms=4, lw=0.9, capsize=2,
                        label=f"{state} {obs}")
            drawn += 1
    if not drawn:
        raise UsageError("tau.csv holds no accepted fits at two or more sizes")
    ax.set_xlabel(r"$L$")
    ax.set_ylabel(r"$\tau$")
    ax.legend(fontsize=7)
    return fig


def fig_heisenberg(config, table, outdir):
    from .analysis import HEISENBERG_MAX_L, heisenberg_scan
    from .basis import get_basis
    from .bloch import build_bloch_state

    state = config.states[0] if config.states else None
    if state is None:
        raise UsageError("config lists no states")
    L = min([l for l in config.sizes if l <= HEISENBERG_MAX_L] or [8])
    basis = get_basis(SectorSpec(L=L, k=0, reflection=+1))
    scan = heisenberg_scan(build_bloch_state(basis, state.theta, state.phi),
                           config.params)
    fig, ax = _new_axes()
    for n, (centers, means) in sorted(scan.averaged.items()):
        ax.semilogx(centers, means, lw=0.9, label=f"window {n}")
    ax.axhline(scan.ipr, color="k", ls="--", lw=1.0,
               label=r"$\sum_j |c_j|^4$")
    ax.set_xlabel(r"$t$")
    ax.set_ylabel(rf"$\overline{{F}}(t)$  ({state.name}, $L={L}$)")
    ax.legend(fontsize=7)
    return fig


BUILDERS = {
    "states": fig_states,
    "eth-y": fig_eth_y,
    "eth-z": fig_eth_z,
    "fluct": fig_fluct,
    "traj": fig_traj,
    "entropy-dev": fig_entropy_dev,
    "arealaw": fig_arealaw,
    "page-mi": fig_page_mi,
    "corr-profile": fig_corr_profile,
    "decay": fig_decay,
    "tau-l": fig_tau_l,
    "heisenberg": fig_heisenberg,
}


def available_ids() -> list[str]:
    return sorted(BUILDERS) + sorted(ALIASES)


def reproduce_figures(ids: list[str], config) -> list[Path]:
    """Render figures for a config, loading the thermal table it names."""
    from .thermal import full_diagonalize

    table = full_diagonalize(
        config.thermal_L, config.params, l_max=config.thermal_l_max
    )
    return render_figures(ids, config, table)


def render_figures(ids: list[str], config, table) -> list[Path]:
    """Render the requested figures into <outdir>/fig/<id>.svg.

    Unknown ids and missing run inputs raise UsageError (listing what is
    available or missing); the SVG bytes depend only on the inputs.
    """
    plt.rcParams["svg.hashsalt"] = "thermalab"
    plt.rcParams["svg.fonttype"] = "path"
    outdir = config.outdir / "fig"
    outdir.mkdir(parents=True, exist_ok=True)
    unknown = [i for i in ids if i not in BUILDERS and i not in ALIASES]
    if unknown:
        raise UsageError(
            f"unknown figure ids {unknown}; available: {', '.join(available_ids())}"
        )
    written: list[Path] = []
    for raw_id in ids:
        fid = ALIASES.get(raw_id, raw_id)
        fig = BUILDERS[fid](config, table, outdir)
        path = outdir / f"{fid}.svg"
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
        written.append(path)
    return written
