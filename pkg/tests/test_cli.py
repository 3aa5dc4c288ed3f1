import sys
from pathlib import Path

import pytest

from qtnspec.cli import main
from qtnspec.config import BUNDLED, load_config, validate_dict

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

TINY = """
seed = 11
[model]
L = 4
[solver]
chi_max = 4
n_states = 4
[oracle]
n_states = 4
[compiler]
left_states = [0, 1]
right_states = [0, 1]
[energy]
states = [0]
n_shots = 300
scaling_shots = [100, 300]
[overlap]
pairs = [[0, 0], [0, 1]]
n_shots = 300
[dipole]
methods = ["fourier", "swap"]
p = 1
n_shots = 300
[spectrum]
enabled = true
source = "both"
states = [1, 2, 3]
n_q = 3
n_omega = 11
swap_shots = 200
[field_scan]
enabled = true
n_B = 3
"""


@pytest.mark.parametrize("name", BUNDLED)
def test_bundled_configs_validate(name, capsys):
    assert main(["validate", "--config", name]) == 0
    assert "ok" in capsys.readouterr().out


def test_bundled_parameters():
    b3 = load_config("spin_half_field_B3")
    assert b3["model"]["g"] == 1.98
    assert b3["model"]["B"] == pytest.approx([1.959, 0.0, 2.274])
    cr8 = load_config("cr8")
    assert (cr8["model"]["J"], cr8["model"]["D"], cr8["solver"]["chi_max"]) == (1.46, -0.038, 32)


def test_missing_seed_reports_one_error():
    _, errors = validate_dict({"model": {"L": 4}})
    assert len(errors) == 1 and errors[0].startswith("seed")


def test_chi_not_power_of_two(tmp_path, capsys):
    p = tmp_path / "bad.toml"
    p.write_text("seed = 1\n[solver]\nchi_max = 6\n[model]\nspin = 2\n")
    assert main(["validate", "--config", str(p)]) == 1
    err = capsys.readouterr().err
    assert "model.spin: unknown key" in err
    p.write_text("seed = 1\n[solver]\nchi_max = 6\n")
    assert main(["validate", "--config", str(p)]) == 1
    assert "log2(chi)" in capsys.readouterr().err


def test_bad_state_reference():
    _, errors = validate_dict({"seed": 1, "solver": {"n_states": 2}, "energy": {"states": [5]}})
    assert any("energy.states" in e for e in errors)


def test_reference_config_is_complete(capsys):
    assert main(["validate", "--reference"]) == 0
    raw = tomllib.loads(capsys.readouterr().out)
    cfg, errors = validate_dict(raw)
    assert errors == [] and cfg.seed == 0


def test_stage_needs_prior_stage(tmp_path, capsys):
    cfg = tmp_path / "tiny.toml"
    cfg.write_text(TINY)
    assert main(["compile", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1


def test_tiny_run_is_byte_identical(tmp_path):
    cfg = tmp_path / "tiny.toml"
    cfg.write_text(TINY)
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert main(["run", "--config", str(cfg), "--out", str(out), "--no-plots"]) == 0
        outs.append(out)
    files = sorted(p.relative_to(outs[0]) for p in outs[0].rglob("*.csv"))
    for f in ("energies.csv", "gate_counts.csv", "dipole_elements.csv", "spectrum.csv", "levels_vs_B.csv"):
        assert Path(f) in files
    for f in files:
        assert (outs[0] / f).read_bytes() == (outs[1] / f).read_bytes(), f
    assert (outs[0] / "overlaps.json").read_bytes() == (outs[1] / "overlaps.json").read_bytes()
    assert (outs[0] / "manifest.json").exists()
