import json
import math

import pytest

from homwell.cli import main
from homwell.experiment import parse_rows

EIGHT_THIRDS = 8.0 / 3.0


def write_cfg(tmp_path, overrides, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(overrides))
    return str(path)


def test_requires_subcommand():
    with pytest.raises(SystemExit):
        main([])


def test_validate_default_config(capsys):
    assert main(["validate"]) == 0
    out = capsys.readouterr().out
    assert ": ok" in out
    assert "FAIL" not in out


def test_validate_json_payload(tmp_path):
    out = tmp_path / "checks.json"
    assert main(["validate", "--out", str(out)]) == 0
    checks = json.loads(out.read_text())
    assert all(entry["passed"] for entry in checks.values())


def test_kh_command_value(tmp_path, capsys):
    out = tmp_path / "kh.json"
    assert main(["kh", "--out", str(out)]) == 0
    payload = json.loads(out.read_text())
    # default config: checkerboard {1, 2}, so the constant picks up sqrt(3/2)
    target = math.sqrt(1.5) * EIGHT_THIRDS
    assert payload["converged"] is True
    assert abs(payload["kh"] - target) < 1e-3 * target
    assert "kh = " in capsys.readouterr().out


def test_minimize_small_grid(tmp_path, capsys):
    cfg = write_cfg(tmp_path, {"minimize": {"eps": 0.3, "delta": 0.25}})
    out = tmp_path / "report.json"
    assert main(["minimize", "--config", cfg, "--out", str(out)]) == 0
    payload = json.loads(out.read_text())
    assert payload["converged"] is True
    assert payload["total"] > 0.0
    assert abs(payload["total"] - payload["homogenized_total"]) <= \
        payload["discrepancy"] + 1e-12
    assert "total = " in capsys.readouterr().out


def test_schedule_writes_rows(tmp_path, capsys):
    cfg = write_cfg(tmp_path, {
        "schedule": {"eps0": 0.3, "delta0": 0.25, "n_max": 1},
        "output": {"path": str(tmp_path / "rows.csv")},
    })
    assert main(["schedule", "--config", cfg]) == 0
    rows = parse_rows(tmp_path / "rows.csv")
    assert [r.status for r in rows] == ["ok", "ok"]
    assert rows[1].eps == pytest.approx(0.15)
    out = capsys.readouterr().out
    assert "wrote 2 rows" in out
    # two points cannot support a power-law fit, the command says so
    assert "fit skipped" in out


def test_schedule_out_flag_wins(tmp_path):
    cfg = write_cfg(tmp_path, {
        "schedule": {"eps0": 0.3, "delta0": 0.25, "n_max": 0},
    })
    target = tmp_path / "elsewhere.json"
    assert main(["schedule", "--config", cfg, "--out", str(target)]) == 0
    rows = parse_rows(target)
    assert len(rows) == 1 and rows[0].status == "ok"


def test_isotropy_fixed_scales(tmp_path):
    cfg = write_cfg(tmp_path, {
        "isotropy": {"angles_deg": [0.0, 45.0], "eps": 0.4, "delta": 0.1},
    })
    out = tmp_path / "iso.json"
    assert main(["isotropy", "--config", cfg, "--out", str(out)]) == 0
    payload = json.loads(out.read_text())
    assert len(payload["rows"]) == 2
    assert payload["rows"][1]["theta"] == pytest.approx(math.pi / 4.0)
    assert payload["spread"] >= 0.0


def test_probe_always_exits_zero(tmp_path, capsys):
    cfg = write_cfg(tmp_path, {
        "probe": {"alphas": [0.5, 0.8], "n_max": 1},
        "schedule": {"eps0": 0.3, "delta0": 0.25},
    })
    out = tmp_path / "probe.json"
    assert main(["probe", "--config", cfg, "--out", str(out)]) == 0
    payload = json.loads(out.read_text())
    assert [p["alpha"] for p in payload] == [0.5, 0.8]
    text = capsys.readouterr().out
    assert "shrinks" in text and "grows" in text


def test_unknown_config_key_exits_two(tmp_path, capsys):
    cfg = write_cfg(tmp_path, {"schedule": {"bogus": 1}})
    assert main(["validate", "--config", cfg]) == 2
    assert "error:" in capsys.readouterr().err


def test_missing_config_file_exits_two(tmp_path, capsys):
    assert main(["validate", "--config", str(tmp_path / "nope.json")]) == 2
    assert "error:" in capsys.readouterr().err


def test_malformed_config_exits_two(tmp_path, capsys):
    path = tmp_path / "broken.json"
    path.write_text("{not json")
    assert main(["validate", "--config", str(path)]) == 2
    assert "error:" in capsys.readouterr().err
