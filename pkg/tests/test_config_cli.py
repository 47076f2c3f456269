"""Configuration tree, artifacts and the command-line driver."""
import json
import subprocess
import sys
from pathlib import Path

import pytest
import yaml

from multiscale_mdp.artifacts import SchemaError, csv_text, emit_plot_data, manifest_hash, read_artifact
from multiscale_mdp.cli import main, run_subcommand
from multiscale_mdp.config import DEFAULTS, default_config_path, dump_config, load_config
from multiscale_mdp.model import ConfigurationError

# small settings so every subcommand finishes in about a second
FAST = [
    "validate.attach_probes=100",
    "validate.probes=200",
    "integrator.epsilon=0.05",
    "integrator.dt=0.005",
    "averaging.T_run=20",
    "averaging.burn_in=2",
    "averaging.replicas=2",
    "averaging.dt=0.01",
    "averaging.mixing_replicas=20",
    "khasminskii.eps_grid=[0.01]",
    "khasminskii.n_paths=3",
    "sweep.eps_grid=[0.1,0.05]",
    "sweep.n_paths=20",
    "deviations.dt=0.01",
]


def test_default_file_matches_defaults():
    cfg = load_config(default_config_path())
    assert cfg.tree == DEFAULTS


def test_round_trip_is_idempotent(tmp_path):
    once = dump_config(load_config(default_config_path(), ["sweep.delta=0.25"]).tree)
    p = tmp_path / "c.yaml"
    p.write_text(once)
    twice = dump_config(load_config(p).tree)
    assert once == twice


def test_overrides_and_errors(tmp_path):
    cfg = load_config(None, ["integrator.seed=7", "model.params.kappa=0.5", "sweep.eps_grid=[0.2, 0.1]"])
    assert cfg.seed == 7 and cfg["model"]["params"]["kappa"] == 0.5
    assert cfg["sweep"]["eps_grid"] == [0.2, 0.1]
    for bad in (
        ["integrator.nope=1"],
        ["integrator.dt=0.01"],  # violates dt <= eps/10
        ["sweep.eps_grid=[0.01, 0.1]"],
        ["khasminskii.gamma=0.5"],
        ["model.params.f1_base=-1"],
        ["levy.kind=strongly_tempered"],
        ["noequals"],
    ):
        with pytest.raises(ConfigurationError):
            load_config(None, bad)
    p = tmp_path / "bad.yaml"
    p.write_text("integrator:\n  bogus: 1\n")
    with pytest.raises(ConfigurationError):
        load_config(p)


def test_manifest_and_csv_header():
    h = manifest_hash("simulate", DEFAULTS, 0)
    assert h == manifest_hash("simulate", DEFAULTS, 0)
    assert h != manifest_hash("simulate", DEFAULTS, 1)
    text = csv_text(["a", "b"], [[1.0, True]], h)
    assert text.splitlines() == [f"# manifest: {h}", "a,b", "1.0,1"]


@pytest.mark.parametrize(
    "name,primary",
    [
        ("simulate", "trajectory_0.csv"),
        ("invariant", "invariant.csv"),
        ("abar", "abar_probe.csv"),
        ("averaged", "averaged.csv"),
        ("khasminskii", "khasminskii.csv"),
        ("skeleton", "skeleton.csv"),
        ("rate", "rate.csv"),
        ("mdp-sweep", "mdp_sweep.csv"),
    ],
)
def test_subcommands_are_deterministic(tmp_path, name, primary):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run_subcommand(name, None, FAST, 3, a) == 0
    assert run_subcommand(name, None, FAST, 3, b) == 0
    fa, fb = a / name / primary, b / name / primary
    assert fa.read_bytes() == fb.read_bytes()
    assert fa.read_text().startswith("# manifest: ")
    man = json.loads((a / name / "manifest.json").read_text())
    assert man["outputs"] == json.loads((b / name / "manifest.json").read_text())["outputs"]
    assert man["seed"] == 3 and len(man["conditions"]) == 9
    # no staging directories are left behind
    assert sorted(p.name for p in a.iterdir()) == [name]


def test_validate_reports_and_exit_code(tmp_path, capsys):
    code = run_subcommand("validate", None, FAST, 0, tmp_path)
    out = capsys.readouterr().out
    assert len(out.strip().splitlines()) == 9
    # the built-in has two structural reds (see the decisions ledger)
    assert code == 1
    header, rows = read_artifact(tmp_path / "validate" / "conditions.csv")
    assert len(rows) == 9 and header[0] == "condition_id"


def test_invalid_config_writes_nothing(tmp_path):
    assert run_subcommand("simulate", None, ["integrator.dt=0.5"], 0, tmp_path) == 1
    assert not any(tmp_path.iterdir())


def test_blow_up_exit_code(tmp_path):
    code = run_subcommand("simulate", None, FAST + ["model.params.kappa=-5000"], 0, tmp_path)
    assert code == 3
    diag = json.loads((tmp_path / "simulate.diagnostics.json").read_text())
    assert "last_time" in diag
    assert not (tmp_path / "simulate").exists()


def test_usage_errors():
    assert run_subcommand("nope") == 2
    assert main([]) == 2
    with pytest.raises(SystemExit) as info:
        main(["frobnicate"])
    assert info.value.code == 2


def test_plot_data(tmp_path):
    assert run_subcommand("simulate", None, FAST, 0, tmp_path) == 0
    traj = tmp_path / "simulate" / "trajectory_0.csv"
    dat = emit_plot_data(traj, "trajectory", tmp_path / "plots")
    lines = dat.read_text().splitlines()
    assert lines[0] == "# t x"
    assert len(lines) > 10
    assert (tmp_path / "plots" / "trajectory_0.trajectory.gp").exists()
    with pytest.raises(SchemaError, match="epsilon"):
        emit_plot_data(traj, "sweep")
    sweep = tmp_path / "s.csv"
    sweep.write_text(
        "# manifest: x\nepsilon,a_eps,p_hat,ci_lo,ci_hi,eps_theta_log_p,avg_p_hat,censored\n"
        "0.1,0.75,0.5,0.4,0.6,-0.1,0.2,0\n0.01,0.56,0.0,0.0,0.1,nan,0.0,1\n"
    )
    rows = emit_plot_data(sweep, "sweep").read_text().splitlines()
    assert rows[1:] == ["-1.0 -0.1"]
    mix = tmp_path / "m.csv"
    mix.write_text("# manifest: x\nT,alpha_hat,ci_lo,ci_hi\n1.0,0.5,0.4,0.6\n")
    assert emit_plot_data(mix, "mixing").read_text().splitlines()[1].startswith("1.0 -0.693")
    assert main(["plot-data", str(mix), "--kind", "mixing"]) == 0


def test_console_script_runs(tmp_path):
    cmd = [sys.executable, "-m", "multiscale_mdp.cli", "averaged", "--out", str(tmp_path), "--seed", "1"]
    cmd += sum((["--set", s] for s in FAST), [])
    proc = subprocess.run(cmd, capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "averaged" / "averaged.csv").exists()
    cfg = yaml.safe_load((tmp_path / "averaged" / "config.yaml").read_text())
    assert cfg["integrator"]["seed"] == 1
