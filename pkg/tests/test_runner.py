import json
from pathlib import Path

import numpy as np
import pytest

from thermalab.errors import ConfigurationError, UsageError
from thermalab.figures import ALIASES, available_ids, render_figures
from thermalab.krylov import KrylovConfig, evolve_and_measure
from thermalab.model import SectorSpec
from thermalab.basis import get_basis
from thermalab.bloch import build_bloch_state
from thermalab.runner import (
    RunConfig,
    StateSpec,
    config_from_dict,
    load_run_config,
    plan_and_execute,
    read_trajectory,
    run_trajectory,
    traj_paths,
)
from thermalab.thermal import full_diagonalize


def tiny_raw(out: Path, **over) -> dict:
    raw = {
        "states": ["Y_+", "z_4"],
        "sizes": [8],
        "observables": ["C0", "C2", "S1"],
        "krylov": {"t_final": 4.0, "dt": 0.1, "checkpoint_every": 1.0},
        "thermal": {"L": 8, "l_max": 3},
        "output": str(out),
    }
    raw.update(over)
    return raw


def test_toml_config_round_trip(tmp_path):
    cfg_file = tmp_path / "run.toml"
    cfg_file.write_text(
        'states = ["Y_+"]\n'
        "sizes = [8]\n"
        'observables = ["C0"]\n'
        f'output = "{tmp_path}/out"\n'
        "[krylov]\nt_final = 2.0\n"
        "[thermal]\nL = 8\n"
        '[analysis.windows]\n"Y_+/8/C0" = [0.5, 1.5]\n'
    )
    cfg = load_run_config(cfg_file)
    assert [s.name for s in cfg.states] == ["Y_+"]
    assert cfg.krylov.t_final == 2.0
    assert cfg.thermal_L == 8
    assert cfg.window_for("Y_+", 8, "C0") == (0.5, 1.5)
    assert cfg.window_for("Y_+", 10, "C0") is None
    # the echoed payload spells out every default
    payload = cfg.payload()
    assert payload["analysis"]["equilibrium_fraction"] == 0.25
    assert payload["krylov"]["m_max"] == 30


def test_config_rejects_unknown_keys_and_bad_windows(tmp_path):
    with pytest.raises(ConfigurationError):
        config_from_dict({"statez": ["Y_+"]})
    with pytest.raises(ConfigurationError):
        config_from_dict(tiny_raw(tmp_path, analysis={"windows": {"Y_+/C0": [0, 1]}}))
    with pytest.raises(ConfigurationError):
        config_from_dict(tiny_raw(tmp_path, sizes=[40]))
    with pytest.raises(UsageError):
        config_from_dict(tiny_raw(tmp_path, observables=["C9"]))  # beyond L/2 at L=8
    with pytest.raises(ConfigurationError):
        config_from_dict(tiny_raw(tmp_path, states=["Y_+", "Y_+"]))


def test_window_exact_beats_wildcard(tmp_path):
    cfg = config_from_dict(tiny_raw(
        tmp_path,
        analysis={"windows": {"Y_+/8/C0": [1.0, 2.0], "Y_+/*/C0": [0.5, 3.0]}},
    ))
    assert cfg.window_for("Y_+", 8, "C0") == (1.0, 2.0)
    assert cfg.window_for("Y_+", 12, "C0") == (0.5, 3.0)


def test_plan_and_execute_idempotent(tmp_path):
    cfg = config_from_dict(tiny_raw(tmp_path / "out"))
    man1 = plan_and_execute(cfg)
    assert man1.counts() == {"done": 4}  # thermal + 2 trajectories + analysis
    stamps = {tid: e["finished"] for tid, e in man1.data["tasks"].items()}
    man2 = plan_and_execute(config_from_dict(tiny_raw(tmp_path / "out")))
    for tid in ("traj/Y_+/L8", "traj/z_4/L8"):
        assert man2.data["tasks"][tid]["finished"] == stamps[tid]
    for name in ("equilibrium.csv", "tau.csv", "arealaw.csv", "eth_fit.csv"):
        assert (tmp_path / "out" / name).exists()


def test_identical_configs_give_identical_bytes(tmp_path):
    files = ["equilibrium.csv", "tau.csv", "arealaw.csv", "eth_fit.csv",
             "traj/Y_+_L8.csv", "traj/z_4_L8.csv"]
    blobs = []
    for sub in ("a", "b"):
        cfg = config_from_dict(tiny_raw(tmp_path / sub))
        plan_and_execute(cfg)
        blobs.append([(tmp_path / sub / f).read_bytes() for f in files])
    assert blobs[0] == blobs[1]


def test_trajectory_resumes_after_interruption(tmp_path):
    cfg = config_from_dict(tiny_raw(tmp_path / "ref"))
    state = cfg.states[0]
    run_trajectory(cfg, state, 8)
    ref_csv, _ = traj_paths(cfg.outdir, state.name, 8)
    reference = ref_csv.read_text()

    # fabricate an interrupted run: checkpoint at t=2 plus the matching rows
    cfg2 = config_from_dict(tiny_raw(tmp_path / "resume"))
    csv_path, _ = traj_paths(cfg2.outdir, state.name, 8)
    csv_path.parent.mkdir(parents=True)
    part = csv_path.with_suffix(".csv.part")
    ck = csv_path.with_suffix(".ck")
    basis = get_basis(SectorSpec(L=8, k=0, reflection=+1))
    half = KrylovConfig(t_final=2.0, dt=0.1, checkpoint_every=1.0)
    evolve_and_measure(
        build_bloch_state(basis, state.theta, state.phi),
        list(cfg2.observables), cfg2.params, half,
        checkpoint_path=str(ck),
    )
    lines = reference.splitlines()
    part.write_text("\n".join(lines[: 1 + 21]) + "\n")  # header + steps 0..20

    meta = run_trajectory(cfg2, state, 8)
    assert meta["resumed_from_step"] == 21
    assert csv_path.read_text() == reference
    assert not part.exists() and not ck.exists()


def test_read_trajectory_round_trip(tmp_path):
    cfg = config_from_dict(tiny_raw(tmp_path / "out"))
    plan_and_execute(cfg)
    csv_path, _ = traj_paths(cfg.outdir, "Y_+", 8)
    times, series = read_trajectory(csv_path)
    assert times.shape == (41,)
    assert set(series) == {"C0", "C2", "S1"}
    assert times[0] == 0.0 and times[-1] == pytest.approx(4.0)
    # C0(0) equals the bond-energy variance identity v + eps^2 sum rule start
    assert np.all(np.isfinite(series["C2"]))


def test_failed_task_is_isolated(tmp_path, monkeypatch):
    import thermalab.runner as runner_mod

    real = runner_mod.run_trajectory

    def flaky(config, state, L):
        if state.name == "z_4":
            raise RuntimeError("synthetic task failure")
        return real(config, state, L)

    monkeypatch.setattr(runner_mod, "run_trajectory", flaky)
    cfg = config_from_dict(tiny_raw(tmp_path / "out"))
    man = plan_and_execute(cfg)
    assert man.data["tasks"]["traj/z_4/L8"]["status"] == "failed"
    assert "synthetic task failure" in man.failures()["traj/z_4/L8"]
    assert man.data["tasks"]["traj/Y_+/L8"]["status"] == "done"
    # analysis still ran over the surviving trajectory
    assert man.data["tasks"]["analysis"]["status"] == "done"
    rows = (tmp_path / "out" / "equilibrium.csv").read_text().splitlines()
    assert all(r.startswith(("state", "Y_+")) for r in rows)


def test_empty_state_list_still_runs_thermal(tmp_path):
    cfg = config_from_dict(tiny_raw(tmp_path / "out", states=[], sizes=[]))
    man = plan_and_execute(cfg)
    assert man.data["tasks"]["thermal"]["status"] == "done"
    assert not any(t.startswith("traj/") for t in man.data["tasks"])
    assert not (tmp_path / "out" / "equilibrium.csv").exists()


def test_explicit_angle_state(tmp_path):
    cfg = config_from_dict(tiny_raw(
        tmp_path / "out",
        states=[{"name": "tilt", "theta_over_pi": 0.25, "phi_over_pi": 0.1}],
    ))
    assert cfg.states[0].theta == pytest.approx(0.25 * np.pi)
    man = plan_and_execute(cfg)
    assert man.data["tasks"]["traj/tilt/L8"]["status"] == "done"


def test_manifest_json_is_valid_and_echoes_config(tmp_path):
    cfg = config_from_dict(tiny_raw(tmp_path / "out"))
    plan_and_execute(cfg)
    data = json.loads((tmp_path / "out" / "manifest.json").read_text())
    assert data["config"]["krylov"]["step_tolerance"] == 1e-12
    assert data["config"]["thermal"]["L"] == 8
    assert all("hash" in e for e in data["tasks"].values())


# ---------------------------------------------------------------------------
# figures


@pytest.fixture(scope="module")
def figure_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("figrun") / "out"
    raw = {
        "states": ["Y_+", "z_4", "y_4"],
        "sizes": [8, 10],
        "observables": ["C0", "C2", "S1"],
        "krylov": {"t_final": 8.0, "dt": 0.1, "checkpoint_every": 4.0},
        "thermal": {"L": 8, "l_max": 3},
        "output": str(out),
    }
    cfg = config_from_dict(raw)
    plan_and_execute(cfg)
    return cfg, full_diagonalize(8, cfg.params, l_max=3)


def test_all_figure_ids_render(figure_run):
    cfg, table = figure_run
    ids = sorted(set(available_ids()) - set(ALIASES))
    rendered, skipped = [], []
    for fid in ids:
        try:
            paths = render_figures([fid], cfg, table)
            rendered.append(fid)
            assert paths[0].exists() and paths[0].stat().st_size > 1000
        except UsageError:
            skipped.append(fid)  # figures whose inputs this tiny run lacks
    assert "corr-profile" in rendered and "states" in rendered
    assert len(rendered) >= 8


def test_figures_are_deterministic(figure_run):
    cfg, table = figure_run
    a = render_figures(["corr-profile", "fluct"], cfg, table)
    first = [p.read_bytes() for p in a]
    b = render_figures(["corr-profile", "fluct"], cfg, table)
    assert [p.read_bytes() for p in b] == first


def test_unknown_figure_id_lists_choices(figure_run):
    cfg, table = figure_run
    with pytest.raises(UsageError, match="corr-profile"):
        render_figures(["bogus"], cfg, table)


def test_alias_renders_same_content(figure_run):
    cfg, table = figure_run
    direct = render_figures(["corr-profile"], cfg, table)[0].read_bytes()
    aliased = render_figures(["fig9"], cfg, table)[0].read_bytes()
    assert aliased == direct
