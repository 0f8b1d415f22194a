"""Command line surface.

Verbs: basis build | state list/show | evolve | thermal build/expect/d2 |
analyze | fig | verify.  Every verb exits 0 only when all the work it ran
succeeded.  THERMALAB_CACHE overrides the basis/spectrum cache directory.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import ThermalabError


def _split_ids(raw: str) -> list[str]:
    return [x.strip() for x in raw.split(",") if x.strip()]


# ---------------------------------------------------------------------------
# verb implementations


def cmd_basis_build(args) -> int:
    from .basis import basis_cache_path, get_basis
    from .model import SectorSpec

    refl = {"+": 1, "-": -1, "none": None}[args.reflection]
    spec = SectorSpec(L=args.L, k=args.k, reflection=refl)
    basis = get_basis(spec, cache=args.cache)
    print(f"L={args.L} k={args.k} reflection={args.reflection}: dim {basis.dim}")
    print(f"cache: {basis_cache_path(spec, args.cache)}")
    return 0


def cmd_state_list(args) -> int:
    from .bloch import load_catalog

    print(f"{'name':>5} {'theta/pi':>10} {'phi/pi':>10} {'eps':>9} {'v':>8}"
          f" {'v_tilde':>8} {'beta':>8}")
    for e in load_catalog().values():
        print(f"{e.name:>5} {e.theta_over_pi:>10.6f} {e.phi_over_pi:>10.6f} "
              f"{e.epsilon:>9.4f} {e.v:>8.4f} {e.v_tilde:>8.4f} {e.beta:>8.4f}")
    return 0


def cmd_state_show(args) -> int:
    from .bloch import bond_correlations, catalog_entry, energy_density, variance_density
    from .model import BENCHMARK_PARAMS

    e = catalog_entry(args.name)
    eps = energy_density(e.theta, e.phi, BENCHMARK_PARAMS)
    v = variance_density(e.theta, e.phi, BENCHMARK_PARAMS)
    c1, c2 = bond_correlations(e.theta, e.phi, BENCHMARK_PARAMS)
    print(f"{e.name}: theta/pi={e.theta_over_pi}, phi/pi={e.phi_over_pi}")
    print(f"  catalog:  eps={e.epsilon:+.4f}  v={e.v:.4f}  "
          f"v_tilde={e.v_tilde:.4f}  beta={e.beta:+.4f}")
    print(f"  computed: eps={eps:+.10f}  v={v:.10f}  C_1={c1:+.6f}  C_r>1={c2:+.6f}")
    if e.inferred_epsilon:
        print("  (catalog energy was rounded; angles are the source of truth)")
    return 0


def cmd_evolve(args) -> int:
    from .krylov import KrylovConfig
    from .runner import RunConfig, StateSpec, plan_and_execute, resolve_state

    if args.theta_over_pi is not None or args.phi_over_pi is not None:
        if args.theta_over_pi is None or args.phi_over_pi is None:
            raise ThermalabError("give both --theta-over-pi and --phi-over-pi")
        state = resolve_state({
            "name": args.state,
            "theta_over_pi": args.theta_over_pi,
            "phi_over_pi": args.phi_over_pi,
        })
    else:
        state = resolve_state(args.state)
    config = RunConfig(
        states=[state],
        sizes=[args.L],
        observables=_split_ids(args.observables),
        krylov=KrylovConfig(dt=args.dt, t_final=args.t_final,
                            m_max=args.m_max,
                            step_tolerance=args.step_tolerance),
        thermal_L=args.thermal_L,
        outdir=Path(args.out),
        workers=1,
    )
    manifest = plan_and_execute(config)
    return _report_manifest(manifest)


def cmd_thermal_build(args) -> int:
    from .thermal import full_diagonalize

    table = full_diagonalize(args.L, l_max=args.l_max, force=args.force)
    lo, hi = table.energy_bounds()
    print(f"L={args.L}: {table.n_states} eigenstates kept "
          f"(energy range [{lo:.4f}, {hi:.4f}], RDMs up to l={table.rdm_l})")
    return 0


def cmd_thermal_expect(args) -> int:
    from .thermal import full_diagonalize, solve_beta, thermal_expectation

    table = full_diagonalize(args.L, l_max=args.l_max)
    if (args.beta is None) == (args.epsilon is None):
        raise ThermalabError("pass exactly one of --beta or --epsilon")
    beta = args.beta if args.beta is not None else solve_beta(table, args.epsilon)
    value = thermal_expectation(table, args.obs, beta=beta)
    print(f"beta={beta:.12g}  <{args.obs}> = {value:.12g}")
    return 0


def cmd_thermal_d2(args) -> int:
    from .thermal import (
        finite_difference_second_derivative,
        full_diagonalize,
        thermal_second_derivative,
    )

    table = full_diagonalize(args.L, l_max=args.l_max)
    moments = thermal_second_derivative(table, args.obs, epsilon=args.epsilon)
    fd = finite_difference_second_derivative(table, args.obs, args.epsilon)
    print(f"d2<{args.obs}>/deps2 at eps={args.epsilon}: "
          f"moment formula {moments:.10g}, finite difference {fd:.10g}")
    return 0


def _report_manifest(manifest) -> int:
    counts = manifest.counts()
    print("tasks:", json.dumps(counts))
    failures = manifest.failures()
    for tid, err in sorted(failures.items()):
        print(f"FAILED {tid}: {err}", file=sys.stderr)
    return 1 if failures else 0


def cmd_analyze(args) -> int:
    from .runner import load_run_config, plan_and_execute

    config = load_run_config(args.config)
    if args.output:
        config.outdir = Path(args.output)
    manifest = plan_and_execute(config)
    print(f"output: {config.outdir}")
    return _report_manifest(manifest)


def cmd_fig(args) -> int:
    from .figures import reproduce_figures
    from .runner import load_run_config

    config = load_run_config(args.config)
    if args.output:
        config.outdir = Path(args.output)
    for path in reproduce_figures(_split_ids(args.ids), config):
        print(path)
    return 0


def cmd_verify(args) -> int:
    from .acceptance import run_all

    results = run_all(workdir=Path(args.workdir) if args.workdir else None)
    failed = 0
    for r in results:
        mark = "PASS" if r.passed else "FAIL"
        print(f"{mark} criterion {r.number:2d} [{r.name}]: {r.detail}")
        failed += 0 if r.passed else 1
    print(f"{len(results) - failed}/{len(results)} criteria passed")
    return 1 if failed else 0


# ---------------------------------------------------------------------------
# parser


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="thermalab",
        description="Quench dynamics and canonical-ensemble thermalization "
                    "checks for the mixed-field Ising ring.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    basis = sub.add_parser("basis", help="symmetry-sector bases").add_subparsers(
        dest="sub", required=True)
    b = basis.add_parser("build", help="build (and cache) one sector basis")
    b.add_argument("--L", type=int, required=True)
    b.add_argument("--k", type=int, default=0)
    b.add_argument("--reflection", choices=["+", "-", "none"], default="+")
    b.add_argument("--cache", default=None, metavar="DIR")
    b.set_defaults(func=cmd_basis_build)

    state = sub.add_parser("state", help="initial-state catalog").add_subparsers(
        dest="sub", required=True)
    state.add_parser("list", help="list catalog states").set_defaults(
        func=cmd_state_list)
    s = state.add_parser("show", help="one state, catalog vs recomputed")
    s.add_argument("name")
    s.set_defaults(func=cmd_state_show)

    ev = sub.add_parser("evolve", help="run one trajectory")
    ev.add_argument("--state", required=True, help="catalog name (or label "
                    "for explicit angles)")
    ev.add_argument("--theta-over-pi", type=float, default=None)
    ev.add_argument("--phi-over-pi", type=float, default=None)
    ev.add_argument("--L", type=int, required=True)
    ev.add_argument("--observables", required=True, metavar="C0,C2,S1,...")
    ev.add_argument("--t-final", type=float, default=100.0)
    ev.add_argument("--dt", type=float, default=0.1)
    ev.add_argument("--m-max", type=int, default=30)
    ev.add_argument("--step-tolerance", type=float, default=1e-12)
    ev.add_argument("--thermal-L", type=int, default=14, dest="thermal_L")
    ev.add_argument("--out", default="runs/evolve")
    ev.set_defaults(func=cmd_evolve)

    thermal = sub.add_parser("thermal", help="canonical-ensemble tables").add_subparsers(
        dest="sub", required=True)
    tb = thermal.add_parser("build", help="diagonalize and cache a table")
    tb.add_argument("--L", type=int, required=True)
    tb.add_argument("--l-max", type=int, default=3)
    tb.add_argument("--force", action="store_true",
                    help="override the size guard")
    tb.set_defaults(func=cmd_thermal_build)
    te = thermal.add_parser("expect", help="Gibbs average of one observable")
    te.add_argument("--L", type=int, required=True)
    te.add_argument("--obs", required=True)
    te.add_argument("--beta", type=float, default=None)
    te.add_argument("--epsilon", type=float, default=None)
    te.add_argument("--l-max", type=int, default=3)
    te.set_defaults(func=cmd_thermal_expect)
    td = thermal.add_parser("d2", help="second energy derivative of an "
                            "observable along the canonical curve")
    td.add_argument("--L", type=int, required=True)
    td.add_argument("--obs", required=True)
    td.add_argument("--epsilon", type=float, required=True)
    td.add_argument("--l-max", type=int, default=3)
    td.set_defaults(func=cmd_thermal_d2)

    an = sub.add_parser("analyze", help="execute a run config end to end")
    an.add_argument("--config", required=True, metavar="TOML_OR_JSON")
    an.add_argument("--output", default=None, help="override config output dir")
    an.set_defaults(func=cmd_analyze)

    fg = sub.add_parser("fig", help="render figures from a completed run")
    fg.add_argument("--config", required=True, metavar="TOML_OR_JSON")
    fg.add_argument("--ids", required=True, metavar="ID[,ID...]")
    fg.add_argument("--output", default=None, help="override config output dir")
    fg.set_defaults(func=cmd_fig)

    vf = sub.add_parser("verify", help="run the acceptance criteria")
    vf.add_argument("--workdir", default=None,
                    help="directory for acceptance runs (default: cache)")
    vf.set_defaults(func=cmd_verify)

    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ThermalabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
