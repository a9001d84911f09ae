import json
import os
import subprocess
import sys

import pytest

from ferropuf import cli
from ferropuf import config as cf
from ferropuf.crp import CrpSet
from ferropuf.errors import ConfigError

SMALL = """
seed = 5
[experiment]
challenges = 40
registrations = 12
reconfigurations = 4
repeats = 20
instances = 6
flip_challenges = 100
register_runs = 3
[attack]
targets = ["proposed", "arbiter"]
n = 9
ks = [1, 2]
train_sizes = [50, 200]
trials = 2
test_size = 500
max_epochs = 200
patience = 20
restarts = 2
[crps]
count = 300
"""


@pytest.fixture
def small(tmp_path):
    path = tmp_path / "small.toml"
    path.write_text(SMALL)
    return path


@pytest.fixture(autouse=True)
def clean_env(monkeypatch):
    monkeypatch.delenv(cf.ENV_SEED, raising=False)
    monkeypatch.delenv(cf.ENV_OUT, raising=False)


def run(*argv):
    return cli.main([str(a) for a in argv])


def read_all(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir()) if p.name != "manifest.json"}


# ---------------------------------------------------------------------- config


def test_defaults_are_valid():
    cfg = cf.loads("")
    assert cfg.array.n == 27 and cfg.attack.test_size == 10_000 and cfg.sweep.pulses == [2.8, 3.2, 3.6]
    assert cfg.sweep.temperatures == [25.0, 55.0, 85.0] and len(cfg.sweep.sizes) == 3


@pytest.mark.parametrize("text,needle", [
    ("[array]\nnn = 3\n", "array.nn"),
    ("[arrays]\nn = 3\n", "arrays"),
    ("bogus = 1\n", "bogus"),
    ("[array]\nn = 0\n", "array.n"),
    ("[experiment]\nchallenges = 0\n", "experiment.challenges"),
    ("[device]\npulse_amplitude = 5.0\n", "pulse_amplitude"),
    ("[attack]\nks = [0, 1]\n", "attack.ks"),
    ("[attack]\neta_minus = 2.0\n", "attack"),
    ("[array]\nn = \"x\"\n", "array.n"),
    ("seed = -1\n", "seed"),
    ("[array\n", "syntax"),
])
def test_bad_config_rejected(text, needle):
    with pytest.raises(ConfigError, match=needle):
        cf.loads(text)


def test_error_names_line():
    with pytest.raises(ConfigError, match="line 3"):
        cf.loads("seed = 1\n[array]\nnope = 2\n")


def test_seed_precedence(monkeypatch):
    cfg = cf.loads("seed = 11\n")
    assert cf.resolve_seed(cfg, None) == 11
    monkeypatch.setenv(cf.ENV_SEED, "22")
    assert cf.resolve_seed(cfg, None) == 22
    assert cf.resolve_seed(cfg, 33) == 33
    monkeypatch.setenv(cf.ENV_SEED, "x")
    with pytest.raises(ConfigError):
        cf.resolve_seed(cfg, None)


def test_out_precedence(monkeypatch, tmp_path):
    assert str(cf.resolve_out(None)) == "ferropuf-out"
    monkeypatch.setenv(cf.ENV_OUT, str(tmp_path))
    assert cf.resolve_out(None) == tmp_path
    assert str(cf.resolve_out("x")) == "x"


# ------------------------------------------------------------------------- CLI


def test_unknown_key_exit_code_before_any_output(tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text("[array]\nwidth = 3\n")
    out = tmp_path / "out"
    assert run("metrics", "--config", bad, "--out", out) == cli.EXIT_CONFIG
    assert "array.width" in capsys.readouterr().err
    assert not out.exists()


def test_zero_length_config_exit_code(tmp_path):
    bad = tmp_path / "bad.toml"
    bad.write_text("[array]\nn = 0\n")
    assert run("register", "--config", bad, "--out", tmp_path / "o") == cli.EXIT_CONFIG


def test_missing_config_file(tmp_path):
    assert run("register", "--config", tmp_path / "nope.toml", "--out", tmp_path) == cli.EXIT_CONFIG


def test_runtime_error_exit_code(tmp_path, small):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert run("gen-crps", "--config", small, "--out", blocker / "sub") == cli.EXIT_RUNTIME


def test_register_outputs(tmp_path, small):
    out = tmp_path / "reg"
    assert run("register", "--config", small, "--out", out) == 0
    reg = (out / "registration.csv").read_text().splitlines()
    assert reg[0] == "registration,row,cell_index,vx1,vx2,delta_vx,state"
    assert len(reg) == 1 + 3 * 27
    states = (out / "state_map.csv").read_text().splitlines()
    assert len(states) == 1 + 3 and len(states[1].split(",")) == 2 + 27


def test_register_default_layout(tmp_path):
    # 27 cells x 10 registrations
    out = tmp_path / "reg"
    assert run("register", "--out", out, "--seed", 1) == 0
    assert len((out / "state_map.csv").read_text().splitlines()) == 11


def test_metrics_outputs(tmp_path, small):
    out = tmp_path / "m"
    assert run("metrics", "--config", small, "--out", out) == 0
    text = (out / "metrics.txt").read_text()
    for key in ("hw", "entropy_min", "hd_inter_mean", "hd_inter_std", "hd_reconf_mean",
                "corr_max_offdiag", "reliability_bit_error_rate", "flip_chance", "tie_count"):
        assert f"\n{key} = " in "\n" + text
    data = json.loads((out / "metrics.json").read_text())
    assert len(data["entropy_per_bit"]) == 40
    for name in ("hd_inter_hist.csv", "hd_instances_hist.csv", "hd_reconf_hist.csv"):
        lines = (out / name).read_text().splitlines()
        assert lines[0] == "bin_low,bin_high,count" and len(lines) == 1 + 20
    assert len((out / "correlation.csv").read_text().splitlines()) == 1 + 4


def test_manifest_lists_outputs_and_reproduces(tmp_path, small):
    out = tmp_path / "m"
    assert run("metrics", "--config", small, "--out", out) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert sorted(manifest["outputs"]) == sorted(read_all(out))
    for key in ("command", "tool_version", "seed", "config", "wall_clock_s", "kernel_backend"):
        assert key in manifest
    again = tmp_path / "again"
    assert run("metrics", "--config", out / "manifest.json", "--out", again) == 0
    assert read_all(again) == read_all(out)


def test_seed_override_changes_output(tmp_path, small):
    assert run("gen-crps", "--config", small, "--out", tmp_path / "a") == 0
    assert run("gen-crps", "--config", small, "--out", tmp_path / "b", "--seed", 6) == 0
    assert run("gen-crps", "--config", small, "--out", tmp_path / "c", "--seed", 5) == 0
    a, b, c = (read_all(tmp_path / x) for x in "abc")
    assert a != b and a == c


def test_env_seed_and_out(tmp_path, small, monkeypatch):
    monkeypatch.setenv(cf.ENV_SEED, "6")
    monkeypatch.setenv(cf.ENV_OUT, str(tmp_path / "env"))
    assert run("gen-crps", "--config", small) == 0
    assert json.loads((tmp_path / "env" / "manifest.json").read_text())["seed"] == 6
    assert CrpSet.load(tmp_path / "env" / "crps.txt").seed == 6


def test_gen_crps_format(tmp_path, small):
    assert run("gen-crps", "--config", small, "--out", tmp_path) == 0
    text = (tmp_path / "crps.txt").read_text()
    assert text.splitlines()[0] == "# n=27 k=1 kind=proposed seed=5"
    crps = CrpSet.from_text(text)
    assert len(crps) == 300 and crps.to_text() == text


def test_sweep_requires_axis(tmp_path, small):
    with pytest.raises(SystemExit):
        run("sweep", "--config", small, "--out", tmp_path)
    with pytest.raises(SystemExit):
        run("sweep", "--config", small, "--out", tmp_path, "--axis", "voltage")


def test_sweep_csv(tmp_path, small):
    assert run("sweep", "--config", small, "--out", tmp_path, "--axis", "pulse") == 0
    lines = (tmp_path / "sweep_pulse.csv").read_text().splitlines()
    assert lines[0] == "axis,value,statistic,result"
    values = {ln.split(",")[1] for ln in lines[1:]}
    assert values == {"2.8", "3.2", "3.6"}
    assert any(",flip_chance," in ln for ln in lines)


def test_attack_outputs_and_resume(tmp_path, small):
    out = tmp_path / "atk"
    assert run("attack", "--config", small, "--out", out) == 0
    table = (out / "accuracy_map.csv").read_text().splitlines()
    assert table[0] == "kind,n,k,train_size,trial,train_acc,test_acc,epochs"
    assert len(table) == 1 + 2 * 2 * 2 * 2
    progress = (out / "attack_progress.jsonl").read_text()
    first = read_all(out)

    # simulate an interruption after three cells
    lines = progress.splitlines()
    (out / "attack_progress.jsonl").write_text("\n".join(lines[:4]) + "\n")
    (out / "accuracy_map.csv").unlink()
    seen = []
    orig = cli.experiments.attack.run_cell
    cli.experiments.attack.run_cell = lambda job: seen.append(job.key) or orig(job)
    try:
        assert run("attack", "--config", small, "--out", out) == 0
    finally:
        cli.experiments.attack.run_cell = orig
    assert len(seen) == 16 - 3
    resumed = read_all(out)
    assert resumed["accuracy_map.csv"] == first["accuracy_map.csv"]
    assert resumed["attack_thresholds.csv"] == first["attack_thresholds.csv"]


def test_attack_same_bytes_across_worker_counts(tmp_path, small):
    par = tmp_path / "par.toml"
    par.write_text(SMALL.replace("restarts = 2", "restarts = 2\nworkers = 3"))
    assert run("attack", "--config", small, "--out", tmp_path / "w1") == 0
    assert run("attack", "--config", par, "--out", tmp_path / "w3") == 0
    a, b = read_all(tmp_path / "w1"), read_all(tmp_path / "w3")
    assert a["accuracy_map.csv"] == b["accuracy_map.csv"]


def test_console_entry_point(tmp_path, small):
    env = {**os.environ, "PYTHONPATH": os.pathsep.join(sys.path)}
    proc = subprocess.run([sys.executable, "-m", "ferropuf.cli", "gen-crps", "--config", str(small),
                           "--out", str(tmp_path)], capture_output=True, text=True, env=env)
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "crps.txt").exists()
