import csv
from pathlib import Path

import numpy as np
import pytest

from cqed_pairs import checks, cli, model
from cqed_pairs.config import ConfigError, load_config, parse_config, sweep_points

FAST = """\
kappa: 1.0
gamma: 0.01
n_traj: 60
seed: 7
bootstrap: 20
plots: false
"""


def _run(tmp_path: Path, command: str, text: str, *extra: str, name: str = "out") -> tuple[int, Path]:
    cfg = tmp_path / "run.yaml"
    cfg.write_text(text)
    out = tmp_path / name
    code = cli.main([command, "--config", str(cfg), "--out", str(out), "--threads", "1", *extra])
    return code, out


def _rows(path: Path) -> list[dict[str, str]]:
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_parse_full_config():
    cfg = parse_config(
        "detuning: 5\nfwhm: 27\ndelay: 20\nn_traj: 10\npair_model: branch\n"
        "sweep_x: kappa\nsweep_x_values: [0.5, 1]\nsweep_y: delay\nsweep_y_values: [15, 20, 25]\n"
    )
    assert (cfg.params.delta1, cfg.params.delta2) == (5.0, -5.0)
    assert cfg.params.pulses.delay == 20.0
    assert cfg.pair_model == "branch"
    points = sweep_points(cfg.sweep)
    assert len(points) == 6 and points[1] == {"kappa": 0.5, "delay": 20.0}


@pytest.mark.parametrize(
    "text, line, key",
    [
        ("kappa: 1\nbogus: 2\n", 2, "bogus"),
        ("kappa: 1\ngamma: fast\n", 2, "gamma"),
        ("kappa: 1\nkappa: 2\n", 2, "kappa"),
        ("\n\nkappa: -1\n", 3, "kappa"),
        ("detuning: 3\ndelta1: 1\n", 2, "delta1"),
        ("n_traj: 0\n", 1, "n_traj"),
        ("n_traj: 2.5\n", 1, "n_traj"),
        ("pair_model: magic\n", 1, "pair_model"),
        ("settings: [ZZ, XQ]\n", 1, "settings"),
        ("sweep_x: colour\nsweep_x_values: [1]\n", 1, "sweep_x"),
        ("sweep_x: kappa\nsweep_x_values: []\n", 2, "sweep_x_values"),
        ("sweep_x: kappa\nsweep_x_values: [1, -2]\n", 2, "sweep_x_values"),
        ("sweep_x_values: [1]\n", 1, "sweep_x_values"),
        ("oracle_times: [50, 10]\n", 1, "oracle_times"),
    ],
)
def test_config_errors_carry_line_and_key(text, line, key):
    with pytest.raises(ConfigError) as info:
        parse_config(text, "run.yaml")
    assert (info.value.line, info.value.key) == (line, key)
    assert f"run.yaml:{line} [{key}]" in str(info.value)


def test_invalid_yaml_reports_line():
    with pytest.raises(ConfigError) as info:
        parse_config("kappa: 1\ngamma: [0.1\n", "x.yaml")
    assert info.value.line is not None
    with pytest.raises(ConfigError):
        parse_config("- 1\n- 2\n")
    with pytest.raises(ConfigError):
        load_config("/nonexistent/run.yaml")


def test_validate_command(tmp_path):
    code = cli.main(["validate", "--out", str(tmp_path)])
    assert code == cli.EXIT_OK
    rows = _rows(tmp_path / "validate.csv")
    assert {r["check"] for r in rows} >= {"dark_state", "frame_equivalence", "tomography_round_trip"}
    assert all(r["passed"] == "true" for r in rows)


def test_frame_check_catches_flipped_delta2():
    def corrupted(delta1, delta2):
        return model.level_energies(delta1, -delta2)

    assert checks.check_frame_equivalence().passed
    bad = checks.check_frame_equivalence(corrupted)
    assert not bad.passed and bad.value > 1e-3
    assert not all(r.passed for r in checks.run_checks(corrupted))


def test_events_without_spontaneous_decay(tmp_path):
    code, out = _run(tmp_path, "events", FAST.replace("gamma: 0.01", "gamma: 0.0"))
    assert code == 0
    rows = {r["event_class"]: r for r in _rows(out / "events.csv")}
    assert list(rows) == ["i", "ii", "iii", "iv", "incomplete"]
    assert float(rows["iii"]["probability"]) == 0.0 and float(rows["iv"]["probability"]) == 0.0
    assert sum(float(r["probability"]) for r in rows.values()) == pytest.approx(1.0, abs=1e-12)


def test_events_dump_and_plot(tmp_path):
    text = FAST.replace("plots: false", "plots: true") + "record_jumps: true\n"
    code, out = _run(tmp_path, "events", text)
    assert code == 0
    assert (out / "events.svg").read_text().lstrip().startswith("<?xml")
    assert (out / "jumps.csv").read_text().startswith("trajectory_index,time,channel")


def test_reruns_are_byte_identical(tmp_path):
    for command in ("events", "characterize"):
        _, a = _run(tmp_path, command, FAST, name=f"{command}_a")
        _, b = _run(tmp_path, command, FAST, name=f"{command}_b")
        for f in sorted(a.glob("*.csv")):
            assert f.read_bytes() == (b / f.name).read_bytes()


def test_seed_flag_changes_results(tmp_path):
    _, a = _run(tmp_path, "events", FAST, name="a")
    _, b = _run(tmp_path, "events", FAST, "--seed", "8", name="b")
    assert (a / "events.csv").read_bytes() != (b / "events.csv").read_bytes()


def test_characterize_outputs(tmp_path):
    code, out = _run(tmp_path, "characterize", FAST)
    assert code == 0
    (row,) = _rows(out / "characterize.csv")
    assert list(row) == ["F", "F_err", "S_fixed", "S_err", "S_max", "n_coinc"]
    assert 0.0 <= float(row["F"]) <= 1.0 and float(row["F_err"]) >= 0.0
    rho = _rows(out / "rho.csv")
    assert [int(r["index"]) for r in rho] == list(range(16))
    m = np.array([float(r["re"]) + 1j * float(r["im"]) for r in rho]).reshape(4, 4)
    assert np.trace(m).real == pytest.approx(1.0)


def test_characterize_closed_system(tmp_path):
    code, out = _run(tmp_path, "characterize", "kappa: 0\ngamma: 0\nplots: false\n")
    assert code == 0
    (row,) = _rows(out / "characterize.csv")
    assert float(row["F"]) == pytest.approx(1.0, abs=1e-9)
    assert float(row["S_fixed"]) == pytest.approx(2 * np.sqrt(2), abs=1e-9)


def test_exit_codes(tmp_path, capsys):
    code, _ = _run(tmp_path, "events", "kappa: 1\nunknown_key: 1\n")
    assert code == cli.EXIT_CONFIG
    assert "run.yaml:2 [unknown_key]" in capsys.readouterr().err
    code, _ = _run(tmp_path, "characterize", "kappa: 2\ndetuning: 15\nn_traj: 3\nplots: false\n")
    assert code == cli.EXIT_DATA
    assert "at least 1 per setting" in capsys.readouterr().err
    code, _ = _run(tmp_path, "events", "kappa: 1\ndt: 0.2\nn_traj: 20\n")
    assert code == cli.EXIT_CONFIG
    code, _ = _run(tmp_path, "sweep", FAST)
    assert code == cli.EXIT_CONFIG
    assert cli.main(["events", "--trajectories", "0"]) == cli.EXIT_CONFIG


def test_single_point_sweep_equals_characterize(tmp_path):
    _, single = _run(tmp_path, "characterize", FAST, name="single")
    _, swept = _run(tmp_path, "sweep", FAST + "sweep_x: kappa\nsweep_x_values: [1.0]\n", name="swept")
    (a,) = _rows(single / "characterize.csv")
    (b,) = _rows(swept / "sweep.csv")
    assert all(a[k] == b[k] for k in a)
    assert b["error"] == ""


def test_sweep_rows_are_independent(tmp_path):
    base = FAST + "sweep_x: detuning\n"
    _, fwd = _run(tmp_path, "sweep", base + "sweep_x_values: [0, 2]\n", name="fwd")
    _, rev = _run(tmp_path, "sweep", base + "sweep_x_values: [2, 0]\n", name="rev")
    assert _rows(fwd / "sweep.csv") == _rows(rev / "sweep.csv")[::-1]


def test_sweep_records_failures_per_row(tmp_path):
    text = FAST.replace("plots: false", "plots: true") + "sweep_x: dt\nsweep_x_values: [0.001, 0.3]\n"
    text += "sweep_y: kappa\nsweep_y_values: [1.0]\n"
    code, out = _run(tmp_path, "sweep", text)
    assert code == 0
    ok, bad = _rows(out / "sweep.csv")
    assert ok["error"] == "" and float(ok["F"]) > 0
    assert bad["error"].startswith("StepSizeError") and bad["F"] == "nan"
    assert (out / "sweep.svg").exists()


def test_parallel_sweep_matches_serial(tmp_path):
    text = FAST + "sweep_x: detuning\nsweep_x_values: [0, 1]\n"
    _, serial = _run(tmp_path, "sweep", text, name="serial")
    cfg = tmp_path / "run.yaml"
    out = tmp_path / "parallel"
    assert cli.main(["sweep", "--config", str(cfg), "--out", str(out), "--threads", "2"]) == 0
    assert (serial / "sweep.csv").read_bytes() == (out / "sweep.csv").read_bytes()


def test_oracle_command(tmp_path):
    code, out = _run(tmp_path, "oracle", "kappa: 1\ngamma: 0.01\noracle_times: [0, 50, 100]\nplots: true\n")
    assert code == 0
    rows = _rows(out / "oracle.csv")
    assert [float(r["time"]) for r in rows] == [0.0, 50.0, 100.0]
    assert float(rows[0]["pop_I"]) == 1.0
    assert (out / "oracle.svg").exists()
