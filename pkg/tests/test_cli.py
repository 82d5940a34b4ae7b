import json
import subprocess
import sys

import pytest

from xdif.cli import EXIT_ABNORMAL, EXIT_CONDITIONS, EXIT_CONFIG, EXIT_OK, main
from xdif.config import ConfigError, dump_config, load_config, parse_config, parse_length

HOMOGENEOUS = """
[ModelParams]
m1 = 1.0
q1 = 0.5

[RegularizationLevel]
delta = 0.01
epsilon = 0.01
k = 8

[SolverConfig]
t_end = 0.05
snapshot_interval = 0.01
snapshot_stride = 0

[InitialData]
kind = "constant"
u = 1.5
v = 0.5
"""

BUMPS = """
[ModelParams]
q1 = 0.5

[RegularizationLevel]
delta = 0.01
epsilon = 0.01
k = 12

[SolverConfig]
t_end = 0.01
snapshot_stride = 0
snapshot_interval = 0.002

[InitialData]
kind = "gaussian-bump"
bump_u = { center = [1.0], width = 0.5, amplitude = 1.0, floor = 0.5 }
bump_v = { center = [2.2], width = 0.5, amplitude = 0.8, floor = 0.5 }
"""

SWEEP = """
[ModelParams]
q1 = 0.5

[SolverConfig]
t_end = 0.01
snapshot_stride = 0

[SweepPlan]
comparison_times = [0.01]
schedule = [
  { delta = 0.1, epsilon = 0.01, k = 8 },
  { delta = 0.05, epsilon = 0.01, k = 8 },
  { delta = 0.025, epsilon = 0.01, k = 8 },
]
"""


def write(tmp_path, text, name="run.toml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


@pytest.fixture(autouse=True)
def no_env_out(monkeypatch):
    monkeypatch.delenv("XDIF_OUT", raising=False)


def test_check_params_ok(tmp_path, capsys):
    cfg = write(tmp_path, "[ModelParams]\nm1 = 0.0\nm2 = 0.0\nq1 = 0.0\nq2 = 0.0\n")
    assert main(["check-params", "--config", cfg]) == EXIT_OK
    doc = json.loads(capsys.readouterr().out)
    assert doc["failing_conditions"] == [] and doc["p1"] == pytest.approx(5.0)


def test_check_params_failing_conditions(tmp_path, capsys):
    cfg = write(tmp_path, "[ModelParams]\nm1 = 0.0\nm2 = 0.0\nq1 = 0.9\nq2 = 0.9\n")
    assert main(["check-params", "--config", cfg]) == EXIT_CONDITIONS
    doc = json.loads(capsys.readouterr().out)
    assert "cond_main_1" in doc["failing_conditions"]


def test_malformed_config_reports_line(tmp_path, capsys):
    cfg = write(tmp_path, "[ModelParams]\nm1 = = 2\n")
    assert main(["check-params", "--config", cfg]) == EXIT_CONFIG
    assert "line 2" in capsys.readouterr().err


def test_unknown_key_rejected(tmp_path, capsys):
    cfg = write(tmp_path, "[ModelParams]\nmm1 = 2\n")
    assert main(["check-params", "--config", cfg]) == EXIT_CONFIG
    assert "mm1" in capsys.readouterr().err


def test_missing_config_and_bad_arguments(tmp_path):
    assert main(["check-params", "--config", str(tmp_path / "nope.toml")]) == EXIT_CONFIG
    assert main(["frobnicate"]) == EXIT_CONFIG


def test_simulate_homogeneous(tmp_path, capsys):
    cfg = write(tmp_path, HOMOGENEOUS)
    out = tmp_path / "out"
    assert main(["simulate", "--config", cfg, "--out", str(out)]) == EXIT_OK
    assert "termination=reached_t_end" in capsys.readouterr().out
    summary = json.loads((out / "summary.json").read_text())
    assert summary["mass_drift"] < 1e-10
    for name in ("config.toml", "trajectory.xdif", "trajectory.csv", "entropy.csv"):
        assert (out / name).is_file()


def test_simulate_blowup_exit_code(tmp_path):
    text = BUMPS.replace("snapshot_stride = 0", "snapshot_stride = 0\nblowup_threshold = 1e-3")
    assert main(["simulate", "--config", write(tmp_path, text), "--out", str(tmp_path / "o")]) == EXIT_ABNORMAL


def test_simulate_needs_a_level(tmp_path):
    assert main(["simulate", "--config", write(tmp_path, "[ModelParams]\n")]) == EXIT_CONFIG


def test_simulate_rejects_unregularized_level(tmp_path):
    text = HOMOGENEOUS.replace("epsilon = 0.01", "epsilon = 0.0")
    assert main(["simulate", "--config", write(tmp_path, text)]) == EXIT_CONFIG


def test_env_overrides_output_directory(tmp_path, monkeypatch):
    target = tmp_path / "from-env"
    monkeypatch.setenv("XDIF_OUT", str(target))
    assert main(["simulate", "--config", write(tmp_path, HOMOGENEOUS), "--out", str(tmp_path / "flag")]) == EXIT_OK
    assert (target / "summary.json").is_file()
    assert not (tmp_path / "flag").exists()


def test_entropy_report_from_saved_trajectory(tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["simulate", "--config", write(tmp_path, BUMPS), "--out", str(out)]) == EXIT_OK
    first = json.loads((out / "summary.json").read_text())
    capsys.readouterr()
    rep = tmp_path / "rep"
    assert main(["entropy-report", str(out / "trajectory.xdif"), "--out", str(rep)]) == EXIT_OK
    again = json.loads((rep / "summary.json").read_text())
    assert again["max_inequality_residual"] == first["max_inequality_residual"]
    assert main(["entropy-report", str(out / "trajectory.xdif"), "--form", "limit", "--out", str(rep)]) == EXIT_OK
    assert json.loads((rep / "summary.json").read_text())["dissipation_form"] == "limit"
    assert main(["entropy-report", str(tmp_path / "missing.xdif")]) == EXIT_CONFIG


def test_deterministic_runs_are_bit_identical(tmp_path):
    cfg = write(tmp_path, BUMPS)
    for name in ("a", "b"):
        assert main(["simulate", "--config", cfg, "--out", str(tmp_path / name), "--deterministic"]) == EXIT_OK
    for f in ("trajectory.csv", "entropy.csv", "trajectory.xdif"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_sweep_command(tmp_path, capsys):
    out = tmp_path / "sw"
    assert main(["sweep", "--config", write(tmp_path, SWEEP), "--out", str(out), "--jobs", "2"]) == EXIT_OK
    text = capsys.readouterr().out
    assert "axis=delta" in text and "t,axis,slope,residual,status" in text
    assert (out / "summary.json").is_file() and (out / "points").is_dir()


def test_sweep_abnormal_point_exit_code(tmp_path):
    text = SWEEP.replace("snapshot_stride = 0", "snapshot_stride = 0\nblowup_threshold = 1e-3")
    assert main(["sweep", "--config", write(tmp_path, text), "--out", str(tmp_path / "o")]) == EXIT_ABNORMAL


def test_sweep_empty_schedule(tmp_path):
    text = SWEEP[: SWEEP.index("schedule")] + "schedule = []\n"
    assert main(["sweep", "--config", write(tmp_path, text)]) == EXIT_CONFIG


# ---- configuration layer

def test_config_round_trip_toml_and_json(tmp_path):
    cfg = load_config(write(tmp_path, BUMPS))
    for fmt in ("toml", "json"):
        path = write(tmp_path, dump_config(cfg, fmt), f"again.{fmt}")
        assert load_config(path) == cfg


def test_sweep_config_round_trip(tmp_path):
    cfg = load_config(write(tmp_path, SWEEP))
    assert load_config(write(tmp_path, dump_config(cfg), "b.toml")) == cfg


def test_length_expressions():
    assert parse_length("pi") == pytest.approx(3.141592653589793)
    assert parse_length("2*pi") == pytest.approx(6.283185307179586)
    assert parse_length("pi/2") == pytest.approx(1.5707963267948966)
    assert parse_length(2) == 2.0
    for bad in ("tau", True, "2*pi*pi"):
        with pytest.raises(ConfigError):
            parse_length(bad)


def test_rectangle_config_gets_default_bumps():
    cfg = parse_config({"ModelParams": {}, "Domain": {"shape": "rectangle", "lengths": ["pi", 2.0]}})
    assert cfg.domain.lengths[1] == 2.0
    assert len(cfg.initial.bump_u.center) == 2


def test_unknown_table_rejected():
    with pytest.raises(ConfigError):
        parse_config({"ModelParams": {}, "Extras": {}})
    with pytest.raises(ConfigError):
        parse_config({})


def test_module_entry_point(tmp_path):
    cfg = write(tmp_path, "[ModelParams]\n")
    proc = subprocess.run([sys.executable, "-m", "xdif", "check-params", "--config", cfg],
                          capture_output=True, text=True)
    assert proc.returncode == EXIT_OK
    assert json.loads(proc.stdout)["cond_mi_qi"] is True
