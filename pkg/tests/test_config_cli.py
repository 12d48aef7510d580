import csv
import json
import os
from pathlib import Path

import numpy as np
import pytest

from dpcollapse.cli import run
from dpcollapse.config import apply_overrides, config_hash, load_config, parse_config
from dpcollapse.errors import ConfigParse, ReportError, UnknownDensityRef
from dpcollapse.report import file_sha256, write_csv, write_text_report

CONFIGS = Path(__file__).resolve().parents[1] / "demos" / "configs"


def _quiet(*a, **k):
    pass


def _write(tmp_path, data, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(data))
    return str(p)


def _read_csv(path):
    with open(path, newline="") as fh:
        text = fh.read()
    body = [ln for ln in text.split("\r\n") if ln and not ln.startswith("#")]
    footer = dict(ln[2:].split(": ", 1) for ln in text.split("\r\n") if ln.startswith("# "))
    return list(csv.reader(body)), footer, text


def test_rate_on_bundled_config(tmp_path):
    out = tmp_path / "out"
    assert run(["rate", "--config", str(CONFIGS / "uniform_ball_rate.json"),
                "--out", str(out)], log=_quiet) == 0
    rows, _, text = _read_csv(out / "rate.csv")
    header, row = rows
    const = float(row[header.index("const")])
    assert const == pytest.approx(1.0, abs=0.05)
    assert "\r\n" in text
    # full-precision scientific notation
    assert row[header.index("rate")].count("e") == 1
    assert len(row[header.index("rate")].split("e")[0]) == 19


def test_unknown_key_names_offender(tmp_path, capsys):
    cfg = json.loads((CONFIGS / "uniform_ball_rate.json").read_text())
    cfg["rate"]["displacment"] = 1e-5
    code = run(["rate", "--config", _write(tmp_path, cfg), "--out", str(tmp_path / "o")],
               log=_quiet)
    assert code == 2
    assert "displacment" in capsys.readouterr().err
    assert not (tmp_path / "o").exists()


def test_unknown_key_in_density_declaration():
    with pytest.raises(ConfigParse, match="radus"):
        parse_config({"densities": {"b": {"type": "uniform_ball", "radus": 1.0}}})


def test_unknown_density_reference():
    with pytest.raises(UnknownDensityRef, match="ghost"):
        parse_config({"rate": {"density": "ghost", "displacement": 1e-3}})


def test_overrides():
    data = {"rate": {"density": "b", "displacement": 1e-3}}
    new = apply_overrides(data, ["rate.displacement=2e-3", "seed=7", "output_dir=x"])
    assert new["rate"]["displacement"] == 2e-3 and new["seed"] == 7
    assert new["output_dir"] == "x"
    assert data["rate"]["displacement"] == 1e-3
    with pytest.raises(ConfigParse):
        apply_overrides(data, ["novalue"])


def test_set_flag_reaches_config(tmp_path):
    out = tmp_path / "out"
    assert run(["rate", "--config", str(CONFIGS / "uniform_ball_rate.json"), "--out", str(out),
                "--set", "rate.displacement=2e-5"], log=_quiet) == 0
    rows, _, _ = _read_csv(out / "rate.csv")
    assert float(rows[1][0]) == 2e-5


def test_config_hash_ignores_key_order():
    assert config_hash({"a": 1, "b": [1, 2]}) == config_hash({"b": [1, 2], "a": 1})
    assert config_hash({"a": 1}) != config_hash({"a": 2})


def test_load_config_errors(tmp_path):
    with pytest.raises(ConfigParse):
        load_config(str(tmp_path / "missing.json"))
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigParse):
        load_config(str(bad))


def test_command_mismatch(tmp_path):
    code = run(["equilibrium", "--config", str(CONFIGS / "uniform_ball_rate.json"),
                "--out", str(tmp_path)], log=_quiet)
    assert code == 2


def test_numerical_error_exit_code(tmp_path, capsys):
    cfg = {"densities": {"p": {"type": "point_set", "positions": [[0, 0, 0]], "masses": [1]}},
           "rate": {"density": "p", "displacement": 1e-3}}
    code = run(["rate", "--config", _write(tmp_path, cfg), "--out", str(tmp_path / "o")],
               log=_quiet)
    assert code == 3
    assert "SingularSelfEnergy" in capsys.readouterr().err


def test_io_error_exit_code(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    code = run(["rate", "--config", str(CONFIGS / "uniform_ball_rate.json"),
                "--out", str(blocker / "sub")], log=_quiet)
    assert code == 4


def test_manifest_is_reproducible(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    cfg = str(CONFIGS / "equilibrium.json")
    assert run(["equilibrium", "--config", cfg, "--out", str(a)], log=_quiet) == 0
    assert run(["equilibrium", "--config", cfg, "--out", str(b)], log=_quiet) == 0
    ma = json.loads((a / "manifest.json").read_text())
    mb = json.loads((b / "manifest.json").read_text())
    assert ma == mb
    for key in ("config_sha256", "constants", "versions", "seed", "artifacts"):
        assert key in ma
    assert ma["constants"]["G"] == 6.6743e-11
    for name, digest in ma["artifacts"].items():
        assert file_sha256(a / name) == digest
    assert "time" not in json.dumps(ma).lower().replace("equilibrium_time", "")


def test_equilibrium_text_report_tags(tmp_path):
    out = tmp_path / "o"
    run(["equilibrium", "--config", str(CONFIGS / "equilibrium.json"), "--out", str(out)],
        log=_quiet)
    lines = (out / "equilibrium.txt").read_text().splitlines()
    # every derived number names the formula it came from; inputs are echoed bare
    derived = [ln for ln in lines[2:] if ("e+" in ln or "e-" in ln) and not ln.startswith("mass")]
    assert len(derived) == 5 * 6
    assert all(ln.rstrip().endswith("]") for ln in derived)


def test_smearing_curve_command(tmp_path):
    out = tmp_path / "o"
    assert run(["curve", "--config", str(CONFIGS / "smearing_curve.json"), "--out", str(out)],
               log=_quiet) == 0
    rows, footer, _ = _read_csv(out / "smearing_curve.csv")
    rates = np.array([float(r[1]) for r in rows[1:]])
    assert np.all(np.diff(rates) <= 0)
    assert "granular_law" in footer


def test_empty_results_raise_and_write_nothing(tmp_path):
    p = tmp_path / "empty.csv"
    with pytest.raises(ReportError):
        write_csv(str(p), ["a"], [])
    with pytest.raises(ReportError):
        write_text_report(str(tmp_path / "empty.txt"), "t", [])
    assert not os.listdir(tmp_path)


def test_csv_footer_and_rfc4180(tmp_path):
    p = write_csv(str(tmp_path / "x.csv"), ["name", "v"], [["a,b", 0.1], ["c", 2]],
                  {"kappa": 1.5})
    rows, footer, text = _read_csv(p)
    assert rows == [["name", "v"], ["a,b", "1.00000000000000006e-01"], ["c", "2"]]
    assert footer == {"kappa": "1.50000000000000000e+00"}
    assert text.endswith("\r\n")


def test_row_width_mismatch(tmp_path):
    with pytest.raises(ReportError):
        write_csv(str(tmp_path / "x.csv"), ["a", "b"], [[1]])


def test_cavendish_header_and_beta(tmp_path):
    out = tmp_path / "o"
    assert run(["cavendish", "--config", str(CONFIGS / "cavendish_step.json"),
                "--out", str(out)], log=_quiet) == 0
    txt = (out / "cavendish.txt").read_text()
    assert txt.startswith("Delay model")
    assert "beta" in txt
    rows, footer, _ = _read_csv(out / "detectability.csv")
    assert "beta" in footer
