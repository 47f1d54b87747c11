import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from unravel.cli import CSV_COLUMNS, EXIT_CONFIG, EXIT_NUMERIC, EXIT_OK, main
from unravel.config import ConfigError, load_config, parse_config
from unravel.stats import boxplot_summary


def _base(out, **kw):
    cfg = {
        "schema": 1,
        "model": {"name": "decay2d"},
        "schemes": ["rqsd", "do_qsd", "qjp", {"name": "do_qjp", "params": {"rate_cap": 10}}],
        "observables": ["sigma_z", "sigma_x"],
        "initial_state": "+",
        "dt": 0.005,
        "t_final": 0.1,
        "n_samples": 40,
        "n_repeats": 3,
        "seed": 11,
        "output_dir": str(out),
    }
    cfg.update(kw)
    return cfg


def _write(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg) if not isinstance(cfg, str) else cfg)
    return str(p)


def _no_output(tmp_path, out):
    assert not out.exists()
    assert not [p for p in tmp_path.iterdir() if p.name.startswith(f".{out.name}.partial")]


@pytest.mark.parametrize(
    "bad",
    [
        "{not json",
        {"schemes": ["nope"]},
        {"schemes": []},
        {"observables": []},
        {"dt": -0.1},
        {"t_final": 0.1025},
        {"seed": -3},
        {"n_samples": 0},
        {"schemes": [{"name": "do_qjp"}]},
        {"schemes": ["rqsd", "rqsd"]},
        {"observables": [{"name": "sigma_x", "site": 3}]},
        {"initial_state": "+x"},
        {"model": {"name": "decay2d", "params": {"lambda0": -1}}},
        {"schema": 2},
    ],
)
def test_config_errors_exit_2(tmp_path, capsys, bad):
    out = tmp_path / "out"
    cfg = bad if isinstance(bad, str) else _base(out, **bad)
    assert main(["run", _write(tmp_path, cfg)]) == EXIT_CONFIG
    assert "config error" in capsys.readouterr().err
    _no_output(tmp_path, out)


def test_json_error_reports_location(tmp_path):
    p = _write(tmp_path, '{\n  "schema": 1,\n  oops\n}')
    with pytest.raises(ConfigError, match="line 3"):
        load_config(p)


def test_run_outputs(tmp_path):
    out = tmp_path / "out"
    assert main(["run", _write(tmp_path, _base(out))]) == EXIT_OK
    files = sorted(p.name for p in out.iterdir())
    assert "summary.json" in files
    assert "do_qjp__sigma_x__r02.csv" in files and "rqsd__sigma_z__r00.csv" in files
    assert len(files) == 4 * 2 * 3 + 1
    with (out / "qjp__sigma_z__r01.csv").open() as fh:
        rows = list(csv.reader(fh))
    assert tuple(rows[0]) == CSV_COLUMNS
    assert len(rows) == 22
    data = np.array(rows[1:], dtype=float)
    assert np.allclose(data[:, 0], np.arange(21) * 0.005)
    assert np.allclose(data[:, 4], np.abs(data[:, 1] - data[:, 3]))
    summary = json.loads((out / "summary.json").read_text())
    r = summary["results"]["qjp"]["sigma_z"]
    errors = []
    for rep in range(3):
        d = np.loadtxt(out / f"qjp__sigma_z__r{rep:02d}.csv", delimiter=",", skiprows=1)
        errors.append(np.mean(d[:, 4]))
        assert r["averaged_vars"][rep] == pytest.approx(np.mean(d[:, 2]), rel=1e-12)
    assert r["trajectory_errors"] == pytest.approx(errors, rel=1e-12)
    assert r["trajectory_error"] == pytest.approx(boxplot_summary(errors).median, rel=1e-12)
    assert r["trajectory_error_quartiles"]["q3"] == pytest.approx(boxplot_summary(errors).q3, rel=1e-12)


def test_run_is_reproducible(tmp_path):
    a, b, c = tmp_path / "a", tmp_path / "b", tmp_path / "c"
    cfg = _base(a)
    assert main(["run", _write(tmp_path, cfg)]) == 0
    assert main(["run", _write(tmp_path, cfg), "--output-dir", str(b)]) == 0
    assert main(["run", _write(tmp_path, cfg), "--output-dir", str(c), "--threads", "3"]) == 0
    for f in a.iterdir():
        assert f.read_bytes() == (b / f.name).read_bytes()
        # chunks are fixed-size and merged in order, so threads do not change the bytes
        assert f.read_bytes() == (c / f.name).read_bytes()


def test_seed_override_changes_output(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    p = _write(tmp_path, _base(a))
    assert main(["run", p]) == 0
    assert main(["run", p, "--seed", "12", "--output-dir", str(b)]) == 0
    assert (a / "rqsd__sigma_z__r00.csv").read_bytes() != (b / "rqsd__sigma_z__r00.csv").read_bytes()


def test_validate(tmp_path, capsys):
    cfg = _base(tmp_path / "o", schemes=["lqsd", "rqsd", "cqsd", "do_qsd", "multi_do_qsd", "qjp",
                                         {"name": "do_qjp", "params": {"rate_cap": 10}},
                                         {"name": "general", "params": {"theta": [0.3, 1.1], "h": 0.2}}])
    assert main(["validate", _write(tmp_path, cfg)]) == EXIT_OK
    assert capsys.readouterr().out.count("PASS") == 10
    bad = _base(tmp_path / "o", schemes=[{"name": "general", "params": {"phase_modulus": 1.05}}])
    assert main(["validate", _write(tmp_path, bad)]) == EXIT_NUMERIC
    assert "FAIL" in capsys.readouterr().out


def test_custom_model_validates(tmp_path):
    zero = [[[0, 0], [0, 0]], [[0, 0], [0, 0]]]
    ops = [[[[0, 0], [1, 0]], [[0, 0], [0, 0]]]]
    for lops in ([zero], ops):
        cfg = _base(tmp_path / "o", model={"name": "custom", "hamiltonian": zero, "lindblad_ops": lops},
                    schemes=["rqsd", "qjp", "do_qsd"])
        assert main(["validate", _write(tmp_path, cfg)]) == EXIT_OK


def test_cavity_config_parses():
    cfg = load_config("configs/cavity_qed.json")
    assert cfg.model.dim == 20 and [o.label for o in cfg.observables][-1].startswith("number")
    assert cfg.grid.n_steps == 2000
    assert load_config("configs/decay2d.json").schemes[-1].label == "do_qjp_L20"


def test_oracle_verb(tmp_path, capsys):
    out = tmp_path / "orc"
    assert main(["oracle", _write(tmp_path, _base(out))]) == 0
    d = np.loadtxt(out / "exact__sigma_x.csv", delimiter=",", skiprows=1)
    assert np.allclose(d[:, 1], np.exp(-5 * d[:, 0]), atol=1e-7)


def test_numeric_failure_leaves_nothing(tmp_path, capsys):
    out = tmp_path / "out"
    cfg = _base(out, schemes=["rqsd", {"name": "do_qjp", "params": {"rate_cap": 1e4}}])
    assert main(["run", _write(tmp_path, cfg)]) == EXIT_NUMERIC
    err = capsys.readouterr().err
    assert "numerical failure" in err and "step" in err
    _no_output(tmp_path, out)


def test_relative_output_dir(tmp_path):
    cfg = parse_config(_base("res"), base_dir=tmp_path)
    assert cfg.output_dir == tmp_path / "res"


def test_console_entry_point(tmp_path):
    p = _write(tmp_path, _base(tmp_path / "o", schemes=["rqsd"]))
    r = subprocess.run([sys.executable, "-m", "unravel.cli", "validate", p], capture_output=True, text=True)
    assert r.returncode == 0 and "PASS" in r.stdout
