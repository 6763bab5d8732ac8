import json
import subprocess
import sys
from pathlib import Path

import pytest

from sqfilter.cli import main

CONFIG_DIR = Path(__file__).parent.parent / "configs"

SMALL_ENSEMBLE = """
scenario = "direct_cavity"
dim = 8
seed = 11
backend = "general"

[physics]
gamma = 1.0

[squeezing]
n = 0.5

[grid]
t_end = 0.05
dt = 1e-3

[ensemble]
size = 6
batch_size = 2
record_every = 10
"""


@pytest.fixture
def ensemble_config(tmp_path):
    path = tmp_path / "ens.toml"
    path.write_text(SMALL_ENSEMBLE)
    return path


def test_simulate_is_byte_identical(tmp_path):
    cfg = str(CONFIG_DIR / "mixed_vacuum.toml")
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "a")]) == 0
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "b")]) == 0
    a = (tmp_path / "a" / "traj_00000_gaussian.csv").read_bytes()
    assert a == (tmp_path / "b" / "traj_00000_gaussian.csv").read_bytes()
    assert main(["simulate", "--config", cfg, "--seed", "2", "--out", str(tmp_path / "c")]) == 0
    assert a != (tmp_path / "c" / "traj_00000_gaussian.csv").read_bytes()


def test_ensemble_bytes_do_not_depend_on_workers(tmp_path, ensemble_config):
    for w in ("1", "2"):
        assert main(["simulate", "--config", str(ensemble_config), "--workers", w,
                     "--out", str(tmp_path / w)]) == 0
    one = (tmp_path / "1" / "ensemble_general.csv").read_bytes()
    assert one == (tmp_path / "2" / "ensemble_general.csv").read_bytes()


def test_manifest_reproduces_run(tmp_path, ensemble_config):
    assert main(["simulate", "--config", str(ensemble_config), "--out", str(tmp_path / "a")]) == 0
    manifest = tmp_path / "a" / "manifest.json"
    assert json.loads(manifest.read_text())["seed"] == 11
    assert main(["simulate", "--config", str(manifest), "--out", str(tmp_path / "b")]) == 0
    assert (tmp_path / "a" / "ensemble_general.csv").read_bytes() == \
        (tmp_path / "b" / "ensemble_general.csv").read_bytes()


def test_bad_config_exits_2(tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text(SMALL_ENSEMBLE.replace("gamma = 1.0", "gamma = -1.0"))
    assert main(["simulate", "--config", str(bad), "--out", str(tmp_path)]) == 2
    assert "physics.gamma" in capsys.readouterr().err


def test_sweep_command(tmp_path):
    cfg = str(CONFIG_DIR / "mixed_vacuum.toml")
    assert main(["sweep", "--config", cfg, "--parameter", "physics.omega", "--values", "0", "0.5",
                 "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "sweep.csv").read_text().splitlines()
    assert len(lines) == 3
    assert main(["sweep", "--config", cfg, "--parameter", "physics.omega", "--out", str(tmp_path)]) == 2


def test_verify_command_writes_report(tmp_path, capsys):
    assert main(["verify", "riccati_oracles", "--quick", "--out", str(tmp_path)]) == 0
    report = json.loads((tmp_path / "verify_riccati_oracles.json").read_text())
    assert report["passed"] is True
    assert "PASS riccati_oracles." in capsys.readouterr().out


def test_console_script_entry_point():
    out = subprocess.run([sys.executable, "-m", "sqfilter.cli", "--version"], capture_output=True, text=True)
    assert out.returncode == 0 and "sqfilter" in out.stdout
