import json
import subprocess
import sys

from fedmade import config as C
from fedmade.cli import main
from conftest import tiny_config


def _write_cfg(tmp_path, name, **kw):
    cfg = tiny_config(name=name, output_dir=str(tmp_path / name), **kw)
    p = tmp_path / f"{name}.yaml"
    p.write_text(C.serialize(cfg))
    return p


def test_validate_ok_and_error(tmp_path, capsys):
    assert main(["validate", str(_write_cfg(tmp_path, "v"))]) == 0
    assert "ok: v" in capsys.readouterr().out
    bad = tmp_path / "bad.yaml"
    bad.write_text("algorithm: fedavg\nsampling_rate: 1.5\n")
    assert main(["validate", str(bad)]) == 2
    assert "gamma" in capsys.readouterr().err


def test_run_then_compare(tmp_path, capsys):
    assert main(["run", str(_write_cfg(tmp_path, "base"))]) == 0
    assert main(["run", str(_write_cfg(tmp_path, "other", algorithm="fedmade"))]) == 0
    assert (tmp_path / "base" / "rounds.csv").exists()
    capsys.readouterr()
    out_csv = tmp_path / "cmp.csv"
    assert main(["compare", str(tmp_path / "base"), str(tmp_path / "other"),
                 "--baseline", "base", "--out", str(out_csv)]) == 0
    text = capsys.readouterr().out
    assert text.splitlines()[1].startswith("base,") and out_csv.read_text() == text
    assert main(["compare", str(tmp_path / "base"), str(tmp_path / "other"), "--baseline", "nope"]) == 5
    assert "base" in capsys.readouterr().err


def test_run_out_and_seed_override(tmp_path):
    out = tmp_path / "elsewhere"
    assert main(["run", str(_write_cfg(tmp_path, "o", rounds=1)), "--out", str(out), "--seed", "4"]) == 0
    assert json.loads((out / "report.json").read_text())["config"]["seed"] == 4


def test_console_entry_point_help():
    r = subprocess.run([sys.executable, "-m", "fedmade.cli", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "compare" in r.stdout
    r = subprocess.run([sys.executable, "-m", "fedmade.cli"], capture_output=True, text=True)
    assert r.returncode != 0
